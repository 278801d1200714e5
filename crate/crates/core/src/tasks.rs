//! Downstream evaluations that probe how well per-word statistics capture
//! informativeness: keyword extraction over single documents, binary
//! classification of word classes, and hypernym discrimination in word
//! pairs.

pub mod hypernym;
pub mod keywords;
pub mod metrics;
pub mod porter;

pub use hypernym::{
    evaluate_hypernym, slqs, slqs_row, weeds_prec, weedsprec_baselines, HypernymContext,
    HypernymMethod, HypernymPair, HypernymScore, Prediction,
};
pub use keywords::{
    evaluate_keywords, mrr, p_at_5, preprocess_text, rank_keywords, restrict_vocabulary,
    KeywordDocument, KeywordMeasure, KeywordScore, RankedList,
};
pub use metrics::roc_auc;
pub use porter::porter_stem;
