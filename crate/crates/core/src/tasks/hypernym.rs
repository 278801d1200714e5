//! Hypernym discrimination: given (hyponym, hypernym) pairs, predict which
//! word of each pair is the hypernym using count-based measures (frequency,
//! WeedsPrec, SLQS variants), information measures (KL, squared whitened
//! norm), and their bias-corrected Δ variants.

use std::cmp::Ordering;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::cooc::{count_cooccurrences, CoocMatrix};
use crate::corpus::{shuffle_corpus, TokenStream, Vocabulary};
use crate::util::{derive_seed, Kahan};
use crate::{Error, Result};

/// An evaluation item: `hypo` is the hyponym, `hyper` the gold hypernym.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HypernymPair {
    pub hypo: String,
    pub hyper: String,
}

/// Read pairs from TSV (`hypo<TAB>hyper` per line, `#` comments allowed).
pub fn read_hypernym_tsv<R: Read>(r: R, origin: &str) -> Result<Vec<HypernymPair>> {
    let mut pairs = Vec::new();
    for (i, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split('\t');
        let (hypo, hyper) = match (fields.next(), fields.next(), fields.next()) {
            (Some(a), Some(b), None) if !a.is_empty() && !b.is_empty() => (a, b),
            _ => {
                return Err(Error::Parse {
                    path: origin.to_string(),
                    line: i + 1,
                    msg: "expected exactly two tab-separated words".into(),
                })
            }
        };
        pairs.push(HypernymPair {
            hypo: hypo.to_string(),
            hyper: hyper.to_string(),
        });
    }
    Ok(pairs)
}

pub fn load_hypernym_tsv<P: AsRef<Path>>(path: P) -> Result<Vec<HypernymPair>> {
    let origin = path.as_ref().display().to_string();
    read_hypernym_tsv(File::open(path)?, &origin)
}

pub fn write_hypernym_tsv<W: Write>(pairs: &[HypernymPair], mut w: W) -> Result<()> {
    for p in pairs {
        writeln!(w, "{}\t{}", p.hypo, p.hyper)?;
    }
    Ok(())
}

/// Which word of an ordered pair (w1, w2) a method predicts as hypernym.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Prediction {
    First,
    Second,
    /// The method cannot separate the pair (exact tie or no usable
    /// contexts); scored as half correct.
    Unresolved,
}

/// The prediction rules. The `Delta*` variants apply the same decision
/// rules to bias-corrected statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HypernymMethod {
    Random,
    Frequency,
    WeedsPrec,
    SlqsRow,
    Slqs,
    Kl,
    Norm2,
    DeltaWeedsPrec,
    DeltaSlqsRow,
    DeltaSlqs,
    DeltaKl,
    DeltaNorm2,
}

impl HypernymMethod {
    pub const ALL: [HypernymMethod; 12] = [
        HypernymMethod::Random,
        HypernymMethod::Frequency,
        HypernymMethod::WeedsPrec,
        HypernymMethod::SlqsRow,
        HypernymMethod::Slqs,
        HypernymMethod::Kl,
        HypernymMethod::Norm2,
        HypernymMethod::DeltaWeedsPrec,
        HypernymMethod::DeltaSlqsRow,
        HypernymMethod::DeltaSlqs,
        HypernymMethod::DeltaKl,
        HypernymMethod::DeltaNorm2,
    ];
}

impl fmt::Display for HypernymMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HypernymMethod::Random => "random",
            HypernymMethod::Frequency => "frequency",
            HypernymMethod::WeedsPrec => "weedsprec",
            HypernymMethod::SlqsRow => "slqs-row",
            HypernymMethod::Slqs => "slqs",
            HypernymMethod::Kl => "kl",
            HypernymMethod::Norm2 => "norm2",
            HypernymMethod::DeltaWeedsPrec => "delta-weedsprec",
            HypernymMethod::DeltaSlqsRow => "delta-slqs-row",
            HypernymMethod::DeltaSlqs => "delta-slqs",
            HypernymMethod::DeltaKl => "delta-kl",
            HypernymMethod::DeltaNorm2 => "delta-norm2",
        })
    }
}

impl FromStr for HypernymMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        for m in HypernymMethod::ALL {
            if m.to_string() == s {
                return Ok(m);
            }
        }
        Err(Error::InvalidArgument(format!(
            "unknown hypernym method `{s}`"
        )))
    }
}

/// Everything a prediction may consult. Per-word statistic slices use
/// `None` where a word's statistic is undefined; pairs touching such words
/// are skipped. Optional tables are only required by the methods that read
/// them.
#[derive(Clone, Copy)]
pub struct HypernymContext<'a> {
    pub vocab: &'a Vocabulary,
    pub cooc: &'a CoocMatrix,
    /// Shannon entropy of each conditional row.
    pub entropy: &'a [Option<f64>],
    /// Information gain of each word.
    pub kl: &'a [Option<f64>],
    /// Squared whitened embedding norms.
    pub norm2: Option<&'a [Option<f64>]>,
    /// Bias-corrected entropy, information gain, and squared norms.
    pub delta_entropy: Option<&'a [Option<f64>]>,
    pub delta_kl: Option<&'a [Option<f64>]>,
    pub delta_norm2: Option<&'a [Option<f64>]>,
    /// Number of most-associated contexts kept for the SLQS median.
    pub context_size: usize,
}

impl<'a> HypernymContext<'a> {
    pub fn new(
        vocab: &'a Vocabulary,
        cooc: &'a CoocMatrix,
        entropy: &'a [Option<f64>],
        kl: &'a [Option<f64>],
    ) -> Self {
        HypernymContext {
            vocab,
            cooc,
            entropy,
            kl,
            norm2: None,
            delta_entropy: None,
            delta_kl: None,
            delta_norm2: None,
            context_size: 50,
        }
    }

    fn validate(&self) -> Result<()> {
        let v = self.vocab.len();
        let tables = [
            Some(self.entropy),
            Some(self.kl),
            self.norm2,
            self.delta_entropy,
            self.delta_kl,
            self.delta_norm2,
        ];
        if self.cooc.vocab_size() != v || tables.iter().flatten().any(|t| t.len() != v) {
            return Err(Error::DimensionMismatch(
                "statistic tables and vocabulary disagree on size".into(),
            ));
        }
        if self.context_size == 0 {
            return Err(Error::InvalidArgument("context_size must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// Fraction of w1's co-occurrence mass that falls on contexts shared with
/// w2. Equals 1 when w2 covers w1's contexts (in particular for w1 = w2).
pub fn weeds_prec(cooc: &CoocMatrix, w1: u32, w2: u32) -> Result<f64> {
    let total = cooc.row_sum(w1);
    if total == 0 {
        return Err(Error::ZeroSupport {
            word: format!("id {w1}"),
        });
    }
    let (row1, row2) = (cooc.row(w1), cooc.row(w2));
    let mut shared = 0u64;
    let mut j = 0;
    for &(c, n) in row1 {
        while j < row2.len() && row2[j].0 < c {
            j += 1;
        }
        if j < row2.len() && row2[j].0 == c {
            shared += n as u64;
        }
    }
    Ok(shared as f64 / total as f64)
}

/// Entropy-comparison prediction from two row entropies: w1 is the
/// hypernym when 1 − H1/H2 < 0, i.e. when H1 > H2.
pub fn slqs_row(h1: f64, h2: f64) -> Result<Prediction> {
    if h2 <= 0.0 {
        return Err(Error::InvalidArgument(
            "slqs-row needs H2 > 0 for the ratio statistic".into(),
        ));
    }
    let statistic = 1.0 - h1 / h2;
    Ok(match statistic.partial_cmp(&0.0) {
        Some(Ordering::Less) => Prediction::First,
        Some(Ordering::Greater) => Prediction::Second,
        _ => Prediction::Unresolved,
    })
}

/// Local mutual information of a (word, context) cell:
/// n_{w,c} · ln[ p(w,c) / (p(w) p(c)) ] with all marginals taken from the
/// co-occurrence matrix.
fn local_mi(cooc: &CoocMatrix, row_sum: f64, c: u32, n: u32) -> f64 {
    let t = cooc.total() as f64;
    n as f64 * ((n as f64 * t) / (row_sum * cooc.row_sum(c) as f64)).ln()
}

/// Median of `values` over w's strongest contexts: the up-to-
/// `context_size` contexts with the highest positive local mutual
/// information (ties broken by context id). Median is the lower of the two
/// middle order statistics for even sizes. `None` when no positive-LMI
/// context carries a defined value.
fn median_over_contexts(
    cooc: &CoocMatrix,
    values: &[Option<f64>],
    w: u32,
    context_size: usize,
) -> Option<f64> {
    let row_sum = cooc.row_sum(w) as f64;
    let mut scored: Vec<(f64, u32)> = cooc
        .row(w)
        .iter()
        .map(|&(c, n)| (local_mi(cooc, row_sum, c, n), c))
        .filter(|&(lmi, _)| lmi > 0.0)
        .collect();
    scored.sort_unstable_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    scored.truncate(context_size);
    let mut picked: Vec<f64> = scored
        .into_iter()
        .filter_map(|(_, c)| values[c as usize])
        .collect();
    if picked.is_empty() {
        return None;
    }
    picked.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    Some(picked[(picked.len() - 1) / 2])
}

/// SLQS prediction: E(w) = median row entropy over w's strongest contexts;
/// the word with larger E is the hypernym. A word without positive-LMI
/// contexts leaves the pair unresolved.
pub fn slqs(
    cooc: &CoocMatrix,
    entropy: &[Option<f64>],
    w1: u32,
    w2: u32,
    context_size: usize,
) -> Result<Prediction> {
    if entropy.len() != cooc.vocab_size() {
        return Err(Error::DimensionMismatch(
            "entropy table and matrix disagree on size".into(),
        ));
    }
    if context_size == 0 {
        return Err(Error::InvalidArgument("context_size must be ≥ 1".into()));
    }
    let e1 = median_over_contexts(cooc, entropy, w1, context_size);
    let e2 = median_over_contexts(cooc, entropy, w2, context_size);
    Ok(match (e1, e2) {
        (Some(a), Some(b)) => match a.partial_cmp(&b) {
            Some(Ordering::Greater) => Prediction::First,
            Some(Ordering::Less) => Prediction::Second,
            _ => Prediction::Unresolved,
        },
        _ => Prediction::Unresolved,
    })
}

/// Smaller statistic → hypernym; exact tie → unresolved; missing or
/// non-finite statistic → skip.
fn smaller_wins(v1: Option<f64>, v2: Option<f64>) -> Option<Prediction> {
    let (a, b) = (v1?, v2?);
    if !a.is_finite() || !b.is_finite() {
        return None;
    }
    Some(match a.partial_cmp(&b) {
        Some(Ordering::Less) => Prediction::First,
        Some(Ordering::Greater) => Prediction::Second,
        _ => Prediction::Unresolved,
    })
}

/// Larger statistic → hypernym: swapping the arguments of `smaller_wins`
/// relabels which side wins.
fn larger_wins(v1: Option<f64>, v2: Option<f64>) -> Option<Prediction> {
    smaller_wins(v2, v1)
}

fn require<'a, T>(table: Option<T>, method: HypernymMethod) -> Result<T> {
    table.ok_or_else(|| {
        Error::InvalidArgument(format!("method {method} needs a table that was not provided"))
    })
}

/// Predict which of (w1, w2) is the hypernym. `Ok(None)` means the pair
/// cannot be scored with this method (a statistic is undefined for one of
/// the words) and should be skipped. `seed` drives only the random method;
/// `wp_baseline` carries the pair's shuffled-corpus WeedsPrec averages
/// (w1→w2, w2→w1) and is required only by the ΔWeedsPrec rule.
pub fn predict_hypernym(
    ctx: &HypernymContext,
    w1: u32,
    w2: u32,
    method: HypernymMethod,
    seed: u64,
    wp_baseline: Option<(f64, f64)>,
) -> Result<Option<Prediction>> {
    let weedsprec_pair = |baseline: (f64, f64)| -> Result<Option<Prediction>> {
        if cooc_row_empty(ctx, w1) || cooc_row_empty(ctx, w2) {
            return Ok(None);
        }
        let d12 = weeds_prec(ctx.cooc, w1, w2)? - baseline.0;
        let d21 = weeds_prec(ctx.cooc, w2, w1)? - baseline.1;
        Ok(smaller_wins(Some(d12), Some(d21)))
    };

    match method {
        HypernymMethod::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Ok(Some(if rng.gen::<bool>() {
                Prediction::First
            } else {
                Prediction::Second
            }))
        }
        HypernymMethod::Frequency => {
            Ok(larger_wins(
                Some(ctx.vocab.count(w1) as f64),
                Some(ctx.vocab.count(w2) as f64),
            ))
        }
        HypernymMethod::WeedsPrec => weedsprec_pair((0.0, 0.0)),
        HypernymMethod::DeltaWeedsPrec => {
            let baseline = require(wp_baseline, method)?;
            if !baseline.0.is_finite() || !baseline.1.is_finite() {
                return Ok(None);
            }
            weedsprec_pair(baseline)
        }
        HypernymMethod::SlqsRow => {
            let (h1, h2) = (ctx.entropy[w1 as usize], ctx.entropy[w2 as usize]);
            match (h1, h2) {
                (Some(h1), Some(h2)) if h2 > 0.0 => slqs_row(h1, h2).map(Some),
                _ => Ok(None),
            }
        }
        HypernymMethod::DeltaSlqsRow => {
            let table = require(ctx.delta_entropy, method)?;
            Ok(larger_wins(table[w1 as usize], table[w2 as usize]))
        }
        HypernymMethod::Slqs => {
            slqs(ctx.cooc, ctx.entropy, w1, w2, ctx.context_size).map(Some)
        }
        HypernymMethod::DeltaSlqs => {
            let table = require(ctx.delta_entropy, method)?;
            slqs(ctx.cooc, table, w1, w2, ctx.context_size).map(Some)
        }
        HypernymMethod::Kl => Ok(smaller_wins(ctx.kl[w1 as usize], ctx.kl[w2 as usize])),
        HypernymMethod::DeltaKl => {
            let table = require(ctx.delta_kl, method)?;
            Ok(smaller_wins(table[w1 as usize], table[w2 as usize]))
        }
        HypernymMethod::Norm2 => {
            let table = require(ctx.norm2, method)?;
            Ok(smaller_wins(table[w1 as usize], table[w2 as usize]))
        }
        HypernymMethod::DeltaNorm2 => {
            let table = require(ctx.delta_norm2, method)?;
            Ok(smaller_wins(table[w1 as usize], table[w2 as usize]))
        }
    }
}

fn cooc_row_empty(ctx: &HypernymContext, w: u32) -> bool {
    ctx.cooc.row_sum(w) == 0
}

/// Dataset accuracies, reported separately for the part where the hypernym
/// is the more frequent word and the part where it is the rarer word.
#[derive(Debug, Clone, PartialEq)]
pub struct HypernymScore {
    pub method: HypernymMethod,
    /// Accuracy ×100 on pairs with n_hyper > n_hypo; None if empty.
    pub acc_hyper_frequent: Option<f64>,
    /// Accuracy ×100 on pairs with n_hyper < n_hypo; None if empty.
    pub acc_hypo_frequent: Option<f64>,
    pub n_hyper_frequent: usize,
    pub n_hypo_frequent: usize,
    /// Pairs with equal counts, which belong to neither part.
    pub n_equal: usize,
    /// Pairs with out-of-vocabulary words or undefined statistics.
    pub n_skipped: usize,
    pub n_unresolved: usize,
}

impl HypernymScore {
    /// Unweighted mean of the two part accuracies.
    pub fn average(&self) -> Option<f64> {
        Some((self.acc_hyper_frequent? + self.acc_hypo_frequent?) / 2.0)
    }
}

enum PairOutcome {
    Skipped,
    Equal,
    Scored {
        hyper_is_frequent: bool,
        credit: f64,
        unresolved: bool,
    },
}

/// Score a pair set with one method. Pairs are independent and evaluated in
/// parallel; the random method derives one seed per pair so results do not
/// depend on evaluation order. `wp_baselines[i]` must align with `pairs[i]`
/// when the ΔWeedsPrec method is used.
pub fn evaluate_hypernym(
    ctx: &HypernymContext,
    pairs: &[HypernymPair],
    method: HypernymMethod,
    seed: u64,
    wp_baselines: Option<&[(f64, f64)]>,
) -> Result<HypernymScore> {
    ctx.validate()?;
    if let Some(b) = wp_baselines {
        if b.len() != pairs.len() {
            return Err(Error::DimensionMismatch(
                "baselines and pairs disagree on length".into(),
            ));
        }
    }
    let outcomes: Vec<PairOutcome> = pairs
        .par_iter()
        .enumerate()
        .map(|(i, pair)| {
            let (w1, w2) = match (ctx.vocab.id(&pair.hypo), ctx.vocab.id(&pair.hyper)) {
                (Some(a), Some(b)) => (a, b),
                _ => return Ok(PairOutcome::Skipped),
            };
            let (n_hypo, n_hyper) = (ctx.vocab.count(w1), ctx.vocab.count(w2));
            if n_hypo == n_hyper {
                return Ok(PairOutcome::Equal);
            }
            let pair_seed = derive_seed(seed, &format!("hypernym-random-{i}"));
            let baseline = wp_baselines.map(|b| b[i]);
            Ok(
                match predict_hypernym(ctx, w1, w2, method, pair_seed, baseline)? {
                    None => PairOutcome::Skipped,
                    Some(pred) => PairOutcome::Scored {
                        hyper_is_frequent: n_hyper > n_hypo,
                        credit: match pred {
                            Prediction::Second => 1.0,
                            Prediction::Unresolved => 0.5,
                            Prediction::First => 0.0,
                        },
                        unresolved: pred == Prediction::Unresolved,
                    },
                },
            )
        })
        .collect::<Result<_>>()?;

    let mut score = HypernymScore {
        method,
        acc_hyper_frequent: None,
        acc_hypo_frequent: None,
        n_hyper_frequent: 0,
        n_hypo_frequent: 0,
        n_equal: 0,
        n_skipped: 0,
        n_unresolved: 0,
    };
    let (mut credit_hyper, mut credit_hypo) = (Kahan::default(), Kahan::default());
    for outcome in outcomes {
        match outcome {
            PairOutcome::Skipped => score.n_skipped += 1,
            PairOutcome::Equal => score.n_equal += 1,
            PairOutcome::Scored {
                hyper_is_frequent,
                credit,
                unresolved,
            } => {
                if unresolved {
                    score.n_unresolved += 1;
                }
                if hyper_is_frequent {
                    score.n_hyper_frequent += 1;
                    credit_hyper.add(credit);
                } else {
                    score.n_hypo_frequent += 1;
                    credit_hypo.add(credit);
                }
            }
        }
    }
    if score.n_hyper_frequent > 0 {
        score.acc_hyper_frequent =
            Some(100.0 * credit_hyper.value() / score.n_hyper_frequent as f64);
    }
    if score.n_hypo_frequent > 0 {
        score.acc_hypo_frequent =
            Some(100.0 * credit_hypo.value() / score.n_hypo_frequent as f64);
    }
    Ok(score)
}

/// Per-pair WeedsPrec baselines for the ΔWeedsPrec rule: the i-th entry
/// averages (WeedsPrec(hypo, hyper), WeedsPrec(hyper, hypo)) over
/// `n_shuffles` reshuffled corpora. Pairs that cannot be measured (missing
/// words or an empty row in some shuffle) get NaN entries and are later
/// skipped. Shuffles run one at a time so only a single extra matrix is
/// ever held in memory.
pub fn weedsprec_baselines(
    stream: &TokenStream,
    vocab: &Vocabulary,
    pairs: &[HypernymPair],
    h: u32,
    n_shuffles: usize,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    if n_shuffles == 0 {
        return Err(Error::InvalidArgument("n_shuffles must be ≥ 1".into()));
    }
    let ids: Vec<Option<(u32, u32)>> = pairs
        .iter()
        .map(|p| vocab.id(&p.hypo).zip(vocab.id(&p.hyper)))
        .collect();

    let mut sums: Vec<Option<(Kahan, Kahan)>> =
        ids.iter().map(|r| r.map(|_| Default::default())).collect();
    for i in 0..n_shuffles {
        let shuffle_seed = derive_seed(seed, &format!("weedsprec-shuffle-{i}"));
        let shuffled = shuffle_corpus(stream, shuffle_seed);
        let cooc = count_cooccurrences(&shuffled, vocab, h)?;
        let values: Vec<Option<(f64, f64)>> = ids
            .par_iter()
            .map(|resolved| {
                let (w1, w2) = (*resolved)?;
                if cooc.row_sum(w1) == 0 || cooc.row_sum(w2) == 0 {
                    return None;
                }
                let a = weeds_prec(&cooc, w1, w2).ok()?;
                let b = weeds_prec(&cooc, w2, w1).ok()?;
                Some((a, b))
            })
            .collect();
        for (sum, value) in sums.iter_mut().zip(values) {
            match (sum.as_mut(), value) {
                (Some(acc), Some((a, b))) => {
                    acc.0.add(a);
                    acc.1.add(b);
                }
                (Some(_), None) => *sum = None,
                (None, _) => {}
            }
        }
    }
    let n = n_shuffles as f64;
    Ok(sums
        .into_iter()
        .map(|sum| match sum {
            Some((a, b)) => (a.value() / n, b.value() / n),
            None => (f64::NAN, f64::NAN),
        })
        .collect())
}
