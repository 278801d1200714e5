//! Corpus statistics and the geometry of skip-gram embeddings.
//!
//! The crate computes per-word information measures (information gain KL(w),
//! entropy, self-information, χ², G², a quantization floor), trains
//! skip-gram-with-negative-sampling embeddings, and connects the two: after
//! whitening, the squared embedding norm of a word approximates twice its
//! information gain. On top of that sit frequency-bias correction and three
//! downstream evaluations (keyword extraction, part-of-speech discrimination,
//! and hypernym direction prediction).

pub mod bias;
pub mod cooc;
pub mod corpus;
pub mod fixtures;
pub mod geometry;
pub mod infostats;
pub mod pipeline;
pub mod sgns;
pub mod tasks;
pub mod util;

mod error;

pub use bias::{BiasMethod, BiasTable};
pub use cooc::CoocMatrix;
pub use corpus::{TokenStream, Vocabulary};
pub use error::{Error, Result};
pub use geometry::{ExpFamilyModel, Moments, RegressionFit, WhiteningTransform};
pub use infostats::WordStats;
pub use pipeline::{PipelineConfig, PipelineReport, U0Mode};
pub use sgns::{EmbeddingSet, NoiseDistribution, TrainConfig};
