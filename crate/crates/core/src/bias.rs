//! Frequency-bias estimation and correction for per-word statistics.
//!
//! A statistic computed from finite co-occurrence counts (information gain,
//! entropy, squared embedding norm, …) carries a systematic component that
//! depends only on how often the word occurs, not on what it means. This
//! module estimates that component per word — either by recomputing the
//! statistic on shuffled corpora, or by taking a low percentile within narrow
//! frequency bins — and subtracts it.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::cooc::{conditional_distribution, count_cooccurrences, CoocMatrix};
use crate::corpus::{shuffle_corpus, TokenStream, Vocabulary};
use crate::infostats::{kl_divergence, shannon_entropy};
use crate::util::{derive_seed, g6, Kahan};
use crate::{Error, Result};

/// How a baseline was estimated.
#[derive(Debug, Clone, PartialEq)]
pub enum BiasMethod {
    /// Mean of the statistic over corpora shuffled with independent seeds.
    Shuffle { n_shuffles: usize },
    /// Low percentile of the statistic within log-spaced frequency bins.
    Percentile {
        n_bins: usize,
        min_bin: usize,
        pct: f64,
    },
}

/// Per-word baseline values (the frequency-induced expectation of a
/// statistic). `None` marks words for which the statistic was unavailable.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasTable {
    pub method: BiasMethod,
    pub baseline: Vec<Option<f64>>,
}

impl BiasTable {
    /// Elementwise `value − baseline`; missing on either side yields missing.
    ///
    /// Note this is plain subtraction: applying it twice with the same table
    /// subtracts the baseline twice.
    pub fn correct(&self, values: &[Option<f64>]) -> Result<Vec<Option<f64>>> {
        if values.len() != self.baseline.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} values vs {} baselines",
                values.len(),
                self.baseline.len()
            )));
        }
        Ok(values
            .iter()
            .zip(&self.baseline)
            .map(|(v, b)| match (v, b) {
                (Some(v), Some(b)) => Some(v - b),
                _ => None,
            })
            .collect())
    }

    /// `correct` for statistics that are defined everywhere.
    pub fn correct_dense(&self, values: &[f64]) -> Result<Vec<Option<f64>>> {
        let opts: Vec<Option<f64>> = values.iter().copied().map(Some).collect();
        self.correct(&opts)
    }

    /// Number of words with no baseline.
    pub fn missing(&self) -> usize {
        self.baseline.iter().filter(|b| b.is_none()).count()
    }
}

/// Elementwise `values − table.baseline` (missing propagates).
pub fn bias_correct(values: &[Option<f64>], table: &BiasTable) -> Result<Vec<Option<f64>>> {
    table.correct(values)
}

/// A per-word statistic evaluated on one co-occurrence matrix. Must return
/// one entry per vocabulary word; `None` marks the statistic undefined for
/// that word (such entries propagate into the baseline as missing).
pub type CoocStat<'a> = &'a (dyn Fn(&CoocMatrix) -> Result<Vec<Option<f64>>> + Sync);

/// Ready-made statistic: information gain KL(p(·|w) ∥ unigram) for every
/// word, `None` for words that never co-occur.
pub fn kl_statistic(vocab: &Vocabulary) -> impl Fn(&CoocMatrix) -> Result<Vec<Option<f64>>> + Sync + '_ {
    move |cooc: &CoocMatrix| {
        if cooc.vocab_size() != vocab.len() {
            return Err(Error::DimensionMismatch(
                "matrix and vocabulary disagree on size".into(),
            ));
        }
        let unigram = vocab.unigram();
        (0..vocab.len() as u32)
            .into_par_iter()
            .map(|w| {
                if cooc.row_sum(w) == 0 {
                    return Ok(None);
                }
                let cond = conditional_distribution(cooc, w)?;
                kl_divergence(&cond, &unigram).map(Some)
            })
            .collect()
    }
}

/// Per-word Shannon entropy of the conditional distributions; `None` for
/// words with empty rows. Matches the `CoocStat` shape so entropy baselines
/// can be estimated the same way as information-gain baselines.
pub fn entropy_statistic() -> impl Fn(&CoocMatrix) -> Result<Vec<Option<f64>>> + Sync {
    |cooc: &CoocMatrix| {
        (0..cooc.vocab_size() as u32)
            .into_par_iter()
            .map(|w| {
                if cooc.row_sum(w) == 0 {
                    return Ok(None);
                }
                let cond = conditional_distribution(cooc, w)?;
                Ok(Some(shannon_entropy(&cond)))
            })
            .collect()
    }
}

/// Estimate baselines by shuffling the corpus `n_shuffles` times (seeds
/// derived from `seed`), recounting co-occurrence at window `h`, evaluating
/// `stat`, and averaging per word.
pub fn shuffle_baseline(
    stream: &TokenStream,
    vocab: &Vocabulary,
    h: u32,
    stat: CoocStat,
    n_shuffles: usize,
    seed: u64,
) -> Result<BiasTable> {
    let seeds: Vec<u64> = (0..n_shuffles)
        .map(|i| derive_seed(seed, &format!("bias-shuffle-{i}")))
        .collect();
    shuffle_baseline_with_seeds(stream, vocab, h, stat, &seeds)
}

/// As [`shuffle_baseline`], but with the replicate seeds given explicitly.
pub fn shuffle_baseline_with_seeds(
    stream: &TokenStream,
    vocab: &Vocabulary,
    h: u32,
    stat: CoocStat,
    seeds: &[u64],
) -> Result<BiasTable> {
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("need at least one shuffle".into()));
    }
    let replicates: Vec<Vec<Option<f64>>> = seeds
        .par_iter()
        .map(|&s| {
            let shuffled = shuffle_corpus(stream, s);
            let cooc = count_cooccurrences(&shuffled, vocab, h)?;
            let vals = stat(&cooc)?;
            if vals.len() != vocab.len() {
                return Err(Error::DimensionMismatch(format!(
                    "statistic returned {} entries for {} words",
                    vals.len(),
                    vocab.len()
                )));
            }
            Ok(vals)
        })
        .collect::<Result<_>>()?;

    let baseline = (0..vocab.len())
        .map(|w| {
            let mut acc = Kahan::default();
            for rep in &replicates {
                match rep[w] {
                    Some(x) => acc.add(x),
                    None => return None,
                }
            }
            Some(acc.value() / seeds.len() as f64)
        })
        .collect();
    Ok(BiasTable {
        method: BiasMethod::Shuffle {
            n_shuffles: seeds.len(),
        },
        baseline,
    })
}

/// Nearest-rank lower percentile of `sorted` (ascending): the
/// ⌈pct/100·m⌉-th order statistic, with a tiny epsilon so exact multiples
/// don't round up through floating-point noise.
fn nearest_rank(sorted: &[f64], pct: f64) -> f64 {
    let m = sorted.len();
    debug_assert!(m > 0);
    let rank = ((pct / 100.0 * m as f64) - 1e-9).ceil().max(1.0) as usize;
    sorted[rank.min(m) - 1]
}

/// Estimate baselines from the statistic itself: bin words by frequency
/// (`n_bins` bins equally spaced in log n_w over [1, max n_w]), traverse the
/// bins in decreasing frequency merging each bin into its lower-frequency
/// neighbor until every retained group holds at least `min_bin` values, and
/// take the nearest-rank `pct`-percentile of each group as the baseline for
/// all of its words. A trailing deficient group at the low-frequency end is
/// folded into the last full group.
pub fn percentile_baseline(
    values: &[Option<f64>],
    counts: &[u64],
    n_bins: usize,
    min_bin: usize,
    pct: f64,
) -> Result<BiasTable> {
    if values.len() != counts.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} values vs {} counts",
            values.len(),
            counts.len()
        )));
    }
    if n_bins == 0 || min_bin == 0 {
        return Err(Error::InvalidArgument(
            "n_bins and min_bin must be ≥ 1".into(),
        ));
    }
    if !(pct > 0.0 && pct <= 100.0) {
        return Err(Error::InvalidArgument("pct must lie in (0, 100]".into()));
    }
    if counts.iter().any(|&c| c == 0) {
        return Err(Error::InvalidArgument(
            "every word needs a positive count".into(),
        ));
    }
    let n_defined = values.iter().filter(|v| v.is_some()).count();
    if n_defined < min_bin {
        return Err(Error::InvalidArgument(format!(
            "need at least {min_bin} defined values, have {n_defined}"
        )));
    }

    let max_n = *counts.iter().max().expect("nonempty by n_defined check");
    let width = (max_n as f64).ln() / n_bins as f64;
    let bin_of = |n: u64| -> usize {
        if width == 0.0 {
            0
        } else {
            (((n as f64).ln() / width) as usize).min(n_bins - 1)
        }
    };

    // Words (with defined values) per bin.
    let mut bin_members: Vec<Vec<usize>> = vec![Vec::new(); n_bins];
    for (w, &c) in counts.iter().enumerate() {
        if values[w].is_some() {
            bin_members[bin_of(c)].push(w);
        }
    }

    // Merge bins downward (from high frequency) into groups of ≥ min_bin.
    let mut bin_group = vec![usize::MAX; n_bins];
    let mut group_values: Vec<Vec<f64>> = Vec::new();
    let mut pending_bins: Vec<usize> = Vec::new();
    let mut pending_values: Vec<f64> = Vec::new();
    for b in (0..n_bins).rev() {
        pending_bins.push(b);
        pending_values.extend(bin_members[b].iter().map(|&w| values[w].unwrap()));
        if pending_values.len() >= min_bin {
            let g = group_values.len();
            for &pb in &pending_bins {
                bin_group[pb] = g;
            }
            group_values.push(std::mem::take(&mut pending_values));
            pending_bins.clear();
        }
    }
    // The lowest-frequency remainder joins the last full group.
    if !pending_bins.is_empty() {
        let g = group_values.len() - 1;
        for &pb in &pending_bins {
            bin_group[pb] = g;
        }
        group_values[g].append(&mut pending_values);
    }

    let group_baseline: Vec<f64> = group_values
        .into_iter()
        .map(|mut vals| {
            vals.sort_by(|a, b| a.partial_cmp(b).expect("finite statistic"));
            nearest_rank(&vals, pct)
        })
        .collect();

    let baseline = counts
        .iter()
        .map(|&c| Some(group_baseline[bin_group[bin_of(c)]]))
        .collect();
    Ok(BiasTable {
        method: BiasMethod::Percentile {
            n_bins,
            min_bin,
            pct,
        },
        baseline,
    })
}

/// Write a bias table as TSV: a header recording the method, then one
/// `word<TAB>baseline` row per vocabulary word (`NA` when missing).
pub fn write_bias_tsv<W: Write>(table: &BiasTable, vocab: &Vocabulary, w: W) -> Result<()> {
    if table.baseline.len() != vocab.len() {
        return Err(Error::DimensionMismatch(
            "table and vocabulary disagree on size".into(),
        ));
    }
    let mut w = BufWriter::new(w);
    match &table.method {
        BiasMethod::Shuffle { n_shuffles } => {
            writeln!(w, "#method=shuffle\tn_shuffles={n_shuffles}")?
        }
        BiasMethod::Percentile {
            n_bins,
            min_bin,
            pct,
        } => writeln!(
            w,
            "#method=percentile\tn_bins={n_bins}\tmin_bin={min_bin}\tpct={pct}"
        )?,
    }
    for (id, b) in table.baseline.iter().enumerate() {
        match b {
            Some(x) => writeln!(w, "{}\t{}", vocab.word(id as u32), g6(*x))?,
            None => writeln!(w, "{}\tNA", vocab.word(id as u32))?,
        }
    }
    w.flush()?;
    Ok(())
}

/// Save [`write_bias_tsv`] output to a file.
pub fn save_bias_tsv<P: AsRef<Path>>(table: &BiasTable, vocab: &Vocabulary, path: P) -> Result<()> {
    write_bias_tsv(table, vocab, File::create(path)?)
}

/// One row of a bias-table file.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasRow {
    pub word: String,
    pub baseline: Option<f64>,
}

fn parse_kv<'a>(tok: &'a str, key: &str, origin: &str, line_no: usize) -> Result<&'a str> {
    tok.strip_prefix(key)
        .and_then(|r| r.strip_prefix('='))
        .ok_or_else(|| Error::Parse {
            path: origin.to_string(),
            line: line_no,
            msg: format!("expected `{key}=...`, found `{tok}`"),
        })
}

/// Read a bias table written by [`write_bias_tsv`]. Rows come back in file
/// order with their word strings; align them against a vocabulary as needed.
pub fn read_bias_tsv<R: Read>(r: R, origin: &str) -> Result<(BiasMethod, Vec<BiasRow>)> {
    let mut lines = BufReader::new(r).lines();
    let header = lines
        .next()
        .transpose()?
        .ok_or_else(|| Error::Parse {
            path: origin.to_string(),
            line: 1,
            msg: "empty bias file".into(),
        })?;
    let toks: Vec<&str> = header.split('\t').collect();
    let method = match toks.first().copied() {
        Some("#method=shuffle") => {
            if toks.len() != 2 {
                return Err(Error::Parse {
                    path: origin.to_string(),
                    line: 1,
                    msg: "shuffle header needs exactly one parameter".into(),
                });
            }
            let n = parse_kv(toks[1], "n_shuffles", origin, 1)?;
            BiasMethod::Shuffle {
                n_shuffles: n.parse().map_err(|_| Error::Parse {
                    path: origin.to_string(),
                    line: 1,
                    msg: format!("bad n_shuffles `{n}`"),
                })?,
            }
        }
        Some("#method=percentile") => {
            if toks.len() != 4 {
                return Err(Error::Parse {
                    path: origin.to_string(),
                    line: 1,
                    msg: "percentile header needs three parameters".into(),
                });
            }
            let bad = |what: &str, raw: &str| Error::Parse {
                path: origin.to_string(),
                line: 1,
                msg: format!("bad {what} `{raw}`"),
            };
            let n_bins = parse_kv(toks[1], "n_bins", origin, 1)?;
            let min_bin = parse_kv(toks[2], "min_bin", origin, 1)?;
            let pct = parse_kv(toks[3], "pct", origin, 1)?;
            BiasMethod::Percentile {
                n_bins: n_bins.parse().map_err(|_| bad("n_bins", n_bins))?,
                min_bin: min_bin.parse().map_err(|_| bad("min_bin", min_bin))?,
                pct: pct.parse().map_err(|_| bad("pct", pct))?,
            }
        }
        _ => {
            return Err(Error::Parse {
                path: origin.to_string(),
                line: 1,
                msg: "expected `#method=shuffle` or `#method=percentile` header".into(),
            })
        }
    };

    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let line_no = i + 2;
        let (word, val) = line.split_once('\t').ok_or_else(|| Error::Parse {
            path: origin.to_string(),
            line: line_no,
            msg: "expected `word<TAB>baseline`".into(),
        })?;
        let baseline = if val == "NA" {
            None
        } else {
            Some(val.parse().map_err(|_| Error::Parse {
                path: origin.to_string(),
                line: line_no,
                msg: format!("bad baseline `{val}`"),
            })?)
        };
        rows.push(BiasRow {
            word: word.to_string(),
            baseline,
        });
    }
    Ok((method, rows))
}

/// Load a bias table file and align it to `vocab` (every vocabulary word
/// must appear exactly once, in any order).
pub fn load_bias_tsv<P: AsRef<Path>>(path: P, vocab: &Vocabulary) -> Result<BiasTable> {
    let origin = path.as_ref().display().to_string();
    let (method, rows) = read_bias_tsv(File::open(&path)?, &origin)?;
    if rows.len() != vocab.len() {
        return Err(Error::Parse {
            path: origin,
            line: 0,
            msg: format!("{} rows for {} vocabulary words", rows.len(), vocab.len()),
        });
    }
    let mut baseline = vec![None; vocab.len()];
    let mut seen = vec![false; vocab.len()];
    for row in rows {
        let id = vocab.id(&row.word).ok_or_else(|| Error::UnknownWord(row.word.clone()))?;
        if seen[id as usize] {
            return Err(Error::Parse {
                path: origin,
                line: 0,
                msg: format!("duplicate word `{}`", row.word),
            });
        }
        seen[id as usize] = true;
        baseline[id as usize] = row.baseline;
    }
    Ok(BiasTable { method, baseline })
}
