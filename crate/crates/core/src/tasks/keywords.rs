//! Keyword extraction: treat each document as its own corpus, rank its
//! words by an informativeness measure, and score the ranking against gold
//! keywords with MRR and P@5.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cooc::count_cooccurrences;
use crate::corpus::{build_vocab, Vocabulary};
use crate::infostats::{chi_square, kl_divergence, shannon_entropy};
use crate::tasks::porter::porter_stem;
use crate::util::{derive_seed, pairwise_sum};
use crate::{Error, Result};

/// One scoring unit: a document and its gold keywords (possibly phrases).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KeywordDocument {
    pub id: String,
    pub text: String,
    pub keywords: Vec<String>,
}

/// Read documents from JSONL: one `{"id", "text", "keywords"}` per line.
pub fn read_keyword_jsonl<R: Read>(r: R, origin: &str) -> Result<Vec<KeywordDocument>> {
    let mut docs = Vec::new();
    for (i, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: KeywordDocument = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: origin.to_string(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        docs.push(doc);
    }
    Ok(docs)
}

pub fn load_keyword_jsonl<P: AsRef<Path>>(path: P) -> Result<Vec<KeywordDocument>> {
    let origin = path.as_ref().display().to_string();
    read_keyword_jsonl(File::open(path)?, &origin)
}

/// Tokenize as maximal alphanumeric runs, lowercase, and stem. Stopwords
/// are deliberately kept: the measures are expected to demote them on
/// their own.
pub fn preprocess_text(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| porter_stem(&t.to_lowercase()))
        .collect()
}

/// The ranking measures. `CountEntropy` ranks ascending; all others rank
/// descending.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeywordMeasure {
    Random,
    Count,
    CountEntropy,
    ChiSquare,
    CountKl,
}

impl KeywordMeasure {
    pub const ALL: [KeywordMeasure; 5] = [
        KeywordMeasure::Random,
        KeywordMeasure::Count,
        KeywordMeasure::CountEntropy,
        KeywordMeasure::ChiSquare,
        KeywordMeasure::CountKl,
    ];
}

impl fmt::Display for KeywordMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KeywordMeasure::Random => "random",
            KeywordMeasure::Count => "count",
            KeywordMeasure::CountEntropy => "count-entropy",
            KeywordMeasure::ChiSquare => "chi2",
            KeywordMeasure::CountKl => "count-kl",
        })
    }
}

impl FromStr for KeywordMeasure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "random" => KeywordMeasure::Random,
            "count" => KeywordMeasure::Count,
            "count-entropy" => KeywordMeasure::CountEntropy,
            "chi2" => KeywordMeasure::ChiSquare,
            "count-kl" => KeywordMeasure::CountKl,
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown keyword measure `{other}` \
                     (expected random|count|count-entropy|chi2|count-kl)"
                )))
            }
        })
    }
}

/// A document's words ordered best-first (1-based ranks).
#[derive(Debug, Clone)]
pub struct RankedList {
    pub measure: KeywordMeasure,
    pub words: Vec<String>,
}

impl RankedList {
    /// Map word → 1-based rank.
    pub fn ranks(&self) -> HashMap<&str, usize> {
        self.words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.as_str(), i + 1))
            .collect()
    }
}

/// Length of the shortest frequency-sorted vocabulary prefix whose
/// cumulative count reaches one third of the corpus.
pub fn restrict_vocabulary(vocab: &Vocabulary) -> usize {
    let total = vocab.total();
    let mut cum = 0u64;
    for (i, &c) in vocab.counts().iter().enumerate() {
        cum += c;
        if 3 * cum >= total {
            return i + 1;
        }
    }
    vocab.len()
}

/// Rank every word of `doc` by `measure`, with document statistics computed
/// at window `h`. Conditional and reference distributions are restricted to
/// the frequent prefix V′ (the third-of-mass rule), keeping the estimates
/// stable; center words still range over the whole document vocabulary.
///
/// Words whose statistic is undefined (no co-occurrence with V′) sort after
/// all defined words. Ties break by descending count, then lexicographically.
pub fn rank_keywords(
    doc: &KeywordDocument,
    measure: KeywordMeasure,
    h: u32,
    seed: u64,
) -> Result<RankedList> {
    let tokens = preprocess_text(&doc.text);
    if tokens.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "document `{}` is empty after preprocessing",
            doc.id
        )));
    }
    let (vocab, stream) = build_vocab(&tokens, 1)?;

    if measure == KeywordMeasure::Random {
        let mut words = vocab.words().to_vec();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        words.shuffle(&mut rng);
        return Ok(RankedList { measure, words });
    }

    let v_prime = restrict_vocabulary(&vocab);
    let restricted_total: u64 = vocab.counts()[..v_prime].iter().sum();
    let reference: Vec<f64> = vocab.counts()[..v_prime]
        .iter()
        .map(|&c| c as f64 / restricted_total as f64)
        .collect();
    let cooc = count_cooccurrences(&stream, &vocab, h)?;

    let mut scores: Vec<Option<f64>> = Vec::with_capacity(vocab.len());
    for w in 0..vocab.len() as u32 {
        let n_w = vocab.count(w) as f64;
        if measure == KeywordMeasure::Count {
            scores.push(Some(n_w));
            continue;
        }
        let row: Vec<(u32, u32)> = cooc
            .row(w)
            .iter()
            .copied()
            .filter(|&(c, _)| (c as usize) < v_prime)
            .collect();
        let row_sum: u64 = row.iter().map(|&(_, n)| n as u64).sum();
        if row_sum == 0 {
            scores.push(None);
            continue;
        }
        let cond: Vec<(u32, f64)> = row
            .iter()
            .map(|&(c, n)| (c, n as f64 / row_sum as f64))
            .collect();
        let score = match measure {
            KeywordMeasure::CountEntropy => n_w * shannon_entropy(&cond),
            KeywordMeasure::ChiSquare => chi_square(&row, &reference)?,
            KeywordMeasure::CountKl => n_w * kl_divergence(&cond, &reference)?,
            KeywordMeasure::Random | KeywordMeasure::Count => unreachable!(),
        };
        scores.push(Some(score));
    }

    let ascending = measure == KeywordMeasure::CountEntropy;
    let mut ids: Vec<u32> = (0..vocab.len() as u32).collect();
    ids.sort_by(|&a, &b| {
        let ord = match (scores[a as usize], scores[b as usize]) {
            (Some(x), Some(y)) => {
                let ord = x.partial_cmp(&y).expect("finite statistic");
                if ascending {
                    ord
                } else {
                    ord.reverse()
                }
            }
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (None, None) => std::cmp::Ordering::Equal,
        };
        ord.then_with(|| vocab.count(b).cmp(&vocab.count(a)))
            .then_with(|| vocab.word(a).cmp(vocab.word(b)))
    });
    Ok(RankedList {
        measure,
        words: ids.into_iter().map(|w| vocab.word(w).to_string()).collect(),
    })
}

/// Preprocess a gold keyword into its word set (a phrase yields several).
fn keyword_words(keyword: &str) -> Vec<String> {
    preprocess_text(keyword)
}

/// The rank of one gold keyword: its worst-ranked word, or `None` if any of
/// its words is absent from the ranking (or it has no words at all).
fn keyword_rank(ranks: &HashMap<&str, usize>, keyword: &[String]) -> Option<usize> {
    if keyword.is_empty() {
        return None;
    }
    keyword
        .iter()
        .map(|w| ranks.get(w.as_str()).copied())
        .collect::<Option<Vec<usize>>>()
        .map(|rs| rs.into_iter().max().expect("nonempty keyword"))
}

/// Document-level mean reciprocal rank × 100: the reciprocal rank of the
/// best-ranked gold keyword, where a phrase is ranked by its worst word.
/// Documents whose keywords never fully appear in the ranking score 0.
pub fn mrr(ranking: &RankedList, gold: &[Vec<String>]) -> Result<f64> {
    if gold.is_empty() {
        return Err(Error::InvalidArgument("no gold keywords".into()));
    }
    let ranks = ranking.ranks();
    let best = gold
        .iter()
        .filter_map(|kw| keyword_rank(&ranks, kw))
        .min();
    Ok(match best {
        Some(rank) => 100.0 / rank as f64,
        None => 0.0,
    })
}

/// Document-level precision at five × 100: the number of gold keywords all
/// of whose words appear among the top five ranked words, divided by five.
/// Exceeds 100 when more than five keywords share those words.
pub fn p_at_5(ranking: &RankedList, gold: &[Vec<String>]) -> Result<f64> {
    if gold.is_empty() {
        return Err(Error::InvalidArgument("no gold keywords".into()));
    }
    let top5: HashSet<&str> = ranking.words.iter().take(5).map(|w| w.as_str()).collect();
    let covered = gold
        .iter()
        .filter(|kw| !kw.is_empty() && kw.iter().all(|w| top5.contains(w.as_str())))
        .count();
    Ok(100.0 * covered as f64 / 5.0)
}

/// Corpus-level scores: per-document values averaged over scorable
/// documents.
#[derive(Debug, Clone, PartialEq)]
pub struct KeywordScore {
    pub measure: KeywordMeasure,
    pub mrr: f64,
    pub p_at_5: f64,
    /// Documents that contributed to the averages.
    pub n_docs: usize,
    /// Documents skipped for having no usable text or no gold keywords.
    pub n_skipped: usize,
}

/// Evaluate a whole dataset with one measure. Documents are processed in
/// parallel; per-document random rankings derive their seeds from the
/// document id so results do not depend on evaluation order.
pub fn evaluate_keywords(
    docs: &[KeywordDocument],
    measure: KeywordMeasure,
    h: u32,
    seed: u64,
) -> Result<KeywordScore> {
    let per_doc: Vec<Option<(f64, f64)>> = docs
        .par_iter()
        .map(|doc| {
            let gold: Vec<Vec<String>> = doc.keywords.iter().map(|k| keyword_words(k)).collect();
            if gold.iter().all(|k| k.is_empty()) {
                return Ok(None);
            }
            let doc_seed = derive_seed(seed, &format!("keyword-random-{}", doc.id));
            let ranking = match rank_keywords(doc, measure, h, doc_seed) {
                Ok(r) => r,
                Err(Error::InvalidArgument(_)) => return Ok(None),
                Err(e) => return Err(e),
            };
            Ok(Some((mrr(&ranking, &gold)?, p_at_5(&ranking, &gold)?)))
        })
        .collect::<Result<_>>()?;

    let scored: Vec<(f64, f64)> = per_doc.iter().flatten().copied().collect();
    if scored.is_empty() {
        return Err(Error::InvalidArgument(
            "no scorable documents in dataset".into(),
        ));
    }
    let n = scored.len() as f64;
    let mrrs: Vec<f64> = scored.iter().map(|&(m, _)| m).collect();
    let p5s: Vec<f64> = scored.iter().map(|&(_, p)| p).collect();
    Ok(KeywordScore {
        measure,
        mrr: pairwise_sum(&mrrs) / n,
        p_at_5: pairwise_sum(&p5s) / n,
        n_docs: scored.len(),
        n_skipped: docs.len() - scored.len(),
    })
}
