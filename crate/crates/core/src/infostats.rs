//! Per-word information measures: information gain KL(w), Shannon entropy,
//! self-information, Pearson χ², the likelihood-ratio statistic G², and the
//! quantization floor KL₀. All logarithms are natural.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::cooc::{conditional_distribution, CoocMatrix};
use crate::corpus::Vocabulary;
use crate::util::{g6, pairwise_sum};
use crate::{Error, Result};

/// The information measures attached to one vocabulary word.
#[derive(Debug, Clone, PartialEq)]
pub struct WordStats {
    pub word_id: u32,
    pub n_w: u64,
    pub kl: f64,
    pub entropy: f64,
    pub self_info: f64,
    pub chi2: f64,
    pub g2: f64,
    pub kl0: f64,
    /// Set when every rounded count in the KL₀ construction was zero.
    pub kl0_degenerate: bool,
}

/// KL(p(·|w) ∥ p(·)) over the sparse support of the conditional, with the
/// 0·log 0 = 0 convention. Errors if the reference assigns zero mass inside
/// the support.
pub fn kl_divergence(cond: &[(u32, f64)], unigram: &[f64]) -> Result<f64> {
    let mut terms = Vec::with_capacity(cond.len());
    for &(c, p) in cond {
        if p == 0.0 {
            continue;
        }
        let q = unigram
            .get(c as usize)
            .copied()
            .filter(|&q| q > 0.0)
            .ok_or(Error::SupportViolation {
                word: format!("context id {c}"),
            })?;
        terms.push(p * (p.ln() - q.ln()));
    }
    Ok(pairwise_sum(&terms))
}

/// KL between two dense distributions over the same index set.
pub fn kl_divergence_dense(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch(format!(
            "kl of lengths {} vs {}",
            p.len(),
            q.len()
        )));
    }
    let sparse: Vec<(u32, f64)> = p
        .iter()
        .enumerate()
        .filter(|&(_, &x)| x != 0.0)
        .map(|(i, &x)| (i as u32, x))
        .collect();
    kl_divergence(&sparse, q)
}

/// Shannon entropy −Σ p log p of a sparse distribution, with 0·log 0 = 0.
pub fn shannon_entropy(cond: &[(u32, f64)]) -> f64 {
    let terms: Vec<f64> = cond
        .iter()
        .filter(|&&(_, p)| p > 0.0)
        .map(|&(_, p)| -p * p.ln())
        .collect();
    pairwise_sum(&terms)
}

/// Self-information I(w) = log N − log n_w.
pub fn self_information(vocab: &Vocabulary, w: u32) -> Result<f64> {
    if w as usize >= vocab.len() {
        return Err(Error::UnknownWord(format!("id {w}")));
    }
    let n_w = vocab.count(w);
    if n_w == 0 {
        return Err(Error::InvalidArgument(format!(
            "word {:?} has zero count",
            vocab.word(w)
        )));
    }
    Ok((vocab.total() as f64).ln() - (n_w as f64).ln())
}

/// Pearson χ² of a count row against unigram expectations, summed over the
/// whole vocabulary (restricted to contexts with positive unigram mass).
///
/// Off-support cells contribute their expectation, so the sum is computed as
/// Σ_support (n−E)²/E + row_sum·(1 − Σ_support p) exactly.
pub fn chi_square(row: &[(u32, u32)], unigram: &[f64]) -> Result<f64> {
    let row_sum: u64 = row.iter().map(|&(_, n)| n as u64).sum();
    if row_sum == 0 {
        return Err(Error::ZeroSupport {
            word: "chi_square row".into(),
        });
    }
    let rs = row_sum as f64;
    let mut support_mass = Vec::with_capacity(row.len());
    let mut terms = Vec::with_capacity(row.len());
    for &(c, n) in row {
        let q = unigram.get(c as usize).copied().unwrap_or(0.0);
        if q <= 0.0 {
            continue;
        }
        let e = rs * q;
        let d = n as f64 - e;
        terms.push(d * d / e);
        support_mass.push(q);
    }
    let rest = rs * (1.0 - pairwise_sum(&support_mass));
    Ok(pairwise_sum(&terms) + rest.max(0.0))
}

/// Quantization floor: the KL that survives when the ideal counts
/// 2h·n_w·p(w') are rounded (half away from zero) and renormalized.
///
/// Returns the KL plus a degeneracy flag set when every rounded count is
/// zero (the value is then defined as 0).
pub fn quantized_kl(n_w: u64, h: u32, unigram: &[f64]) -> Result<(f64, bool)> {
    if n_w == 0 || h == 0 {
        return Err(Error::InvalidArgument(
            "quantized_kl needs n_w ≥ 1 and h ≥ 1".into(),
        ));
    }
    let m = 2.0 * h as f64 * n_w as f64;
    let mut counts: Vec<(u32, f64)> = Vec::new();
    let mut total = 0.0;
    for (c, &q) in unigram.iter().enumerate() {
        let k = (m * q + 0.5).floor();
        if k > 0.0 {
            counts.push((c as u32, k));
            total += k;
        }
    }
    if total == 0.0 {
        return Ok((0.0, true));
    }
    let rounded: Vec<(u32, f64)> = counts.into_iter().map(|(c, k)| (c, k / total)).collect();
    Ok((kl_divergence(&rounded, unigram)?.max(0.0), false))
}

/// Mutual information of the co-occurrence pairing, as the frequency-weighted
/// mean of per-word information gains: Σ_w p(w)·KL(w). Words with empty rows
/// are skipped (they carry no pairs).
pub fn mutual_information(cooc: &CoocMatrix, vocab: &Vocabulary) -> Result<f64> {
    if cooc.vocab_size() != vocab.len() {
        return Err(Error::DimensionMismatch(
            "matrix and vocabulary disagree on size".into(),
        ));
    }
    let unigram = vocab.unigram();
    let mut terms = Vec::with_capacity(vocab.len());
    for w in 0..vocab.len() as u32 {
        if cooc.row_sum(w) == 0 {
            continue;
        }
        let cond = conditional_distribution(cooc, w)?;
        terms.push(vocab.prob(w) * kl_divergence(&cond, &unigram)?);
    }
    Ok(pairwise_sum(&terms))
}

/// Compute the full per-word statistics table. Parallel over words; results
/// are identical to a sequential pass because each row is summed in sorted
/// context order.
pub fn compute_word_stats(cooc: &CoocMatrix, vocab: &Vocabulary) -> Result<Vec<WordStats>> {
    if cooc.vocab_size() != vocab.len() {
        return Err(Error::DimensionMismatch(
            "matrix and vocabulary disagree on size".into(),
        ));
    }
    let unigram = vocab.unigram();
    let h = cooc.window();

    // KL₀ depends only on n_w (given h and the unigram), so compute it once
    // per distinct count.
    let mut distinct: Vec<u64> = vocab.counts().to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let kl0_table: HashMap<u64, (f64, bool)> = distinct
        .par_iter()
        .map(|&n| quantized_kl(n, h, &unigram).map(|v| (n, v)))
        .collect::<Result<_>>()?;

    (0..vocab.len() as u32)
        .into_par_iter()
        .map(|w| {
            let cond = conditional_distribution(cooc, w).map_err(|_| Error::ZeroSupport {
                word: vocab.word(w).to_string(),
            })?;
            let kl = kl_divergence(&cond, &unigram).map_err(|e| match e {
                Error::SupportViolation { word } => Error::SupportViolation {
                    word: format!("{} (row {})", word, vocab.word(w)),
                },
                other => other,
            })?;
            let n_w = vocab.count(w);
            let (kl0, kl0_degenerate) = kl0_table[&n_w];
            Ok(WordStats {
                word_id: w,
                n_w,
                kl,
                entropy: shannon_entropy(&cond),
                self_info: self_information(vocab, w)?,
                chi2: chi_square(cooc.row(w), &unigram)?,
                g2: 2.0 * n_w as f64 * kl,
                kl0,
                kl0_degenerate,
            })
        })
        .collect()
}

/// Write the stats table as TSV: a commented header, then one row per word
/// with floats at six significant digits.
pub fn write_stats_tsv<W: Write>(stats: &[WordStats], vocab: &Vocabulary, w: W) -> Result<()> {
    let mut w = BufWriter::new(w);
    writeln!(w, "#word\tn_w\tkl\tentropy\tself_info\tchi2\tg2\tkl0")?;
    for s in stats {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            vocab.word(s.word_id),
            s.n_w,
            g6(s.kl),
            g6(s.entropy),
            g6(s.self_info),
            g6(s.chi2),
            g6(s.g2),
            g6(s.kl0),
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_stats_tsv<P: AsRef<Path>>(
    stats: &[WordStats],
    vocab: &Vocabulary,
    path: P,
) -> Result<()> {
    write_stats_tsv(stats, vocab, std::fs::File::create(path)?)
}

/// Parsed row of a stats TSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct StatsRow {
    pub word: String,
    pub n_w: u64,
    pub kl: f64,
    pub entropy: f64,
    pub self_info: f64,
    pub chi2: f64,
    pub g2: f64,
    pub kl0: f64,
}

pub fn read_stats_tsv<R: Read>(r: R, origin: &str) -> Result<Vec<StatsRow>> {
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let parse_err = |msg: String| Error::Parse {
            path: origin.to_string(),
            line: i + 1,
            msg,
        };
        if fields.len() != 8 {
            return Err(parse_err(format!("expected 8 fields, got {}", fields.len())));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse().map_err(|e| Error::Parse {
                path: origin.to_string(),
                line: i + 1,
                msg: format!("bad float {s:?}: {e}"),
            })
        };
        rows.push(StatsRow {
            word: fields[0].to_string(),
            n_w: fields[1]
                .parse()
                .map_err(|e| parse_err(format!("bad count: {e}")))?,
            kl: num(fields[2])?,
            entropy: num(fields[3])?,
            self_info: num(fields[4])?,
            chi2: num(fields[5])?,
            g2: num(fields[6])?,
            kl0: num(fields[7])?,
        });
    }
    Ok(rows)
}

pub fn load_stats_tsv<P: AsRef<Path>>(path: P) -> Result<Vec<StatsRow>> {
    let path = path.as_ref();
    read_stats_tsv(std::fs::File::open(path)?, &path.display().to_string())
}
