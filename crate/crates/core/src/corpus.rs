//! Corpus ingestion: tokenization, vocabulary construction, min-count
//! filtering, and seeded random reordering of the token stream.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// A corpus encoded as vocabulary ids, in reading order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenStream {
    pub tokens: Vec<u32>,
}

impl TokenStream {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Vocabulary with per-word counts over the retained token stream.
///
/// Ids are assigned by descending count, ties broken lexicographically, so
/// id 0 is always the most frequent word.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    words: Vec<String>,
    counts: Vec<u64>,
    total: u64,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    fn from_sorted(words: Vec<String>, counts: Vec<u64>) -> Self {
        let total = counts.iter().sum();
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as u32))
            .collect();
        Vocabulary {
            words,
            counts,
            total,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Total token count N.
    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn word(&self, id: u32) -> &str {
        &self.words[id as usize]
    }

    pub fn count(&self, id: u32) -> u64 {
        self.counts[id as usize]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn id(&self, word: &str) -> Option<u32> {
        self.index.get(word).copied()
    }

    pub fn require_id(&self, word: &str) -> Result<u32> {
        self.id(word)
            .ok_or_else(|| Error::UnknownWord(word.to_string()))
    }

    /// Unigram probability p(w) = n_w / N.
    pub fn prob(&self, id: u32) -> f64 {
        self.counts[id as usize] as f64 / self.total as f64
    }

    /// Dense unigram distribution over ids.
    pub fn unigram(&self) -> Vec<f64> {
        let n = self.total as f64;
        self.counts.iter().map(|&c| c as f64 / n).collect()
    }

    /// Serialize as TSV: a `#N=<total>` header then `word<TAB>count` rows in
    /// id order (descending count).
    pub fn write_tsv<W: Write>(&self, w: W) -> Result<()> {
        let mut w = BufWriter::new(w);
        writeln!(w, "#N={}", self.total)?;
        for (word, count) in self.words.iter().zip(&self.counts) {
            writeln!(w, "{word}\t{count}")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        self.write_tsv(std::fs::File::create(path)?)
    }

    pub fn read_tsv<R: Read>(r: R, origin: &str) -> Result<Self> {
        let parse_err = |line: usize, msg: String| Error::Parse {
            path: origin.to_string(),
            line,
            msg,
        };
        let mut lines = BufReader::new(r).lines();
        let header = lines
            .next()
            .ok_or_else(|| parse_err(1, "missing #N= header".into()))??;
        let total: u64 = header
            .strip_prefix("#N=")
            .ok_or_else(|| parse_err(1, format!("expected #N= header, got {header:?}")))?
            .parse()
            .map_err(|e| parse_err(1, format!("bad total: {e}")))?;
        let mut words = Vec::new();
        let mut counts = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let (word, count) = line
                .split_once('\t')
                .ok_or_else(|| parse_err(i + 2, format!("expected word<TAB>count: {line:?}")))?;
            let count: u64 = count
                .parse()
                .map_err(|e| parse_err(i + 2, format!("bad count: {e}")))?;
            words.push(word.to_string());
            counts.push(count);
        }
        let vocab = Vocabulary::from_sorted(words, counts);
        if vocab.total != total {
            return Err(parse_err(
                1,
                format!("header says N={total} but counts sum to {}", vocab.total),
            ));
        }
        if vocab.is_empty() {
            return Err(Error::EmptyVocabulary);
        }
        Ok(vocab)
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        let path = path.as_ref();
        Self::read_tsv(std::fs::File::open(path)?, &path.display().to_string())
    }
}

/// Split text into maximal runs of non-whitespace characters, optionally
/// lowercased.
pub fn tokenize(text: &str, lowercase: bool) -> Vec<String> {
    text.split_whitespace()
        .map(|t| {
            if lowercase {
                t.to_lowercase()
            } else {
                t.to_string()
            }
        })
        .collect()
}

/// Count tokens, drop words rarer than `min_count`, and re-encode the
/// retained stream as vocabulary ids.
///
/// Dropped tokens are removed from the stream itself (window adjacency skips
/// them), and stored counts refer to the retained stream.
pub fn build_vocab<S: AsRef<str>>(
    tokens: &[S],
    min_count: u64,
) -> Result<(Vocabulary, TokenStream)> {
    if min_count == 0 {
        return Err(Error::InvalidArgument("min_count must be ≥ 1".into()));
    }
    let mut raw: HashMap<&str, u64> = HashMap::new();
    for t in tokens {
        *raw.entry(t.as_ref()).or_insert(0) += 1;
    }
    let mut kept: Vec<(&str, u64)> = raw
        .into_iter()
        .filter(|&(_, c)| c >= min_count)
        .collect();
    if kept.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let words: Vec<String> = kept.iter().map(|&(w, _)| w.to_string()).collect();
    let counts: Vec<u64> = kept.iter().map(|&(_, c)| c).collect();
    let vocab = Vocabulary::from_sorted(words, counts);
    let stream = TokenStream {
        tokens: tokens
            .iter()
            .filter_map(|t| vocab.id(t.as_ref()))
            .collect(),
    };
    Ok((vocab, stream))
}

/// Uniformly random permutation of the stream (Fisher–Yates under a seeded
/// generator). Identical seeds give identical outputs.
pub fn shuffle_corpus(stream: &TokenStream, seed: u64) -> TokenStream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tokens = stream.tokens.clone();
    tokens.shuffle(&mut rng);
    TokenStream { tokens }
}
