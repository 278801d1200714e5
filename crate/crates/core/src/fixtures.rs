//! Deterministic fixture generators shared by the test suites and the
//! built-in demonstration pipeline: exact exponential-family populations,
//! i.i.d. Zipf corpora, and a topical corpus whose words genuinely differ in
//! how much their contexts deviate from the background distribution.

use std::io::{BufWriter, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::TokenStream;
use crate::geometry::ExpFamilyModel;
use crate::util::AliasTable;
use crate::{Error, Result};

/// Parameters for the synthetic exponential-family population.
#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub vocab_size: usize,
    pub d: usize,
    /// Maximum ‖u_w − u₀‖.
    pub radius: f64,
    pub seed: u64,
    /// Token count for sampled-corpus variants (0 = distributions only).
    pub corpus_len: usize,
}

/// A fully specified synthetic population: the model, the parameter vectors,
/// and the exact conditionals/marginal, all computed by direct summation
/// (independent of the geometry module's log-sum-exp path).
#[derive(Debug, Clone)]
pub struct ExpFamFixture {
    pub model: ExpFamilyModel,
    pub u0: Vec<f64>,
    /// Per-word natural parameters u_w = u₀ + perturbation, ‖·‖ ≤ r.
    pub u: Vec<Vec<f64>>,
    /// Exact p(·|w) rows.
    pub cond: Vec<Vec<f64>>,
    /// Exact p(·|u₀).
    pub marginal: Vec<f64>,
}

impl ExpFamFixture {
    /// KL(p(·|w) ∥ p(·|u₀)) by direct summation over the exact rows.
    pub fn exact_kl(&self, w: usize) -> f64 {
        self.cond[w]
            .iter()
            .zip(&self.marginal)
            .filter(|&(&p, _)| p > 0.0)
            .map(|(&p, &q)| p * (p / q).ln())
            .sum()
    }
}

/// Direct (non-shifted) evaluation of p(·|u) for the fixture: unnormalized
/// masses q_i·e^{⟨u,v_i⟩} divided by their plain sum.
fn direct_probs(q: &[f64], suff: &[f64], d: usize, u: &[f64]) -> Vec<f64> {
    let masses: Vec<f64> = q
        .iter()
        .enumerate()
        .map(|(i, &qi)| {
            let dot: f64 = suff[i * d..(i + 1) * d]
                .iter()
                .zip(u)
                .map(|(&v, &x)| v * x)
                .sum();
            qi * dot.exp()
        })
        .collect();
    let z: f64 = masses.iter().sum();
    masses.iter().map(|&m| m / z).collect()
}

/// Generate the synthetic population of `spec`. Deterministic in the seed.
pub fn gen_expfam(spec: &SyntheticSpec) -> Result<ExpFamFixture> {
    if spec.vocab_size < 2 {
        return Err(Error::InvalidArgument("need |V| ≥ 2".into()));
    }
    if spec.radius <= 0.0 {
        return Err(Error::InvalidArgument("radius must be > 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let v = spec.vocab_size;
    let d = spec.d;
    // Base measure: normalized positive draws.
    let mut q: Vec<f64> = (0..v).map(|_| rng.gen_range(0.05f64..1.0)).collect();
    let z: f64 = q.iter().sum();
    q.iter_mut().for_each(|x| *x /= z);
    // Sufficient statistics with entries O(d^{-1/2}) so inner products stay O(1).
    let scale = 1.0 / (d as f64).sqrt();
    let suff: Vec<f64> = (0..v * d)
        .map(|_| rng.gen_range(-1.5..1.5) * scale)
        .collect();
    let u0: Vec<f64> = (0..d).map(|_| rng.gen_range(-0.5..0.5)).collect();
    let mut u = Vec::with_capacity(v);
    for _ in 0..v {
        // Random direction with radius uniform in (0, r]: keeps max ‖u_w − u₀‖ ≤ r
        // while spreading the perturbation norms, so downstream regressions see
        // KL values spanning several orders of magnitude (as real vocabularies do)
        // rather than a thin shell.
        let raw: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0f64..1.0)).collect();
        let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        let radius = spec.radius * rng.gen::<f64>();
        u.push(
            u0.iter()
                .zip(&raw)
                .map(|(&c, &x)| c + x / norm * radius)
                .collect::<Vec<f64>>(),
        );
    }
    let cond: Vec<Vec<f64>> = u.iter().map(|uw| direct_probs(&q, &suff, d, uw)).collect();
    let marginal = direct_probs(&q, &suff, d, &u0);
    Ok(ExpFamFixture {
        model: ExpFamilyModel::new(d, q, suff)?,
        u0,
        u,
        cond,
        marginal,
    })
}

/// i.i.d. draws from a Zipf law over `v` ranks: P(rank k) ∝ k^{-exponent}.
/// Token id k−1 corresponds to rank k.
pub fn gen_zipf_corpus(v: usize, n: usize, exponent: f64, seed: u64) -> Result<TokenStream> {
    if exponent <= 0.0 {
        return Err(Error::InvalidArgument("exponent must be > 0".into()));
    }
    if v == 0 {
        return Err(Error::InvalidArgument("need at least one rank".into()));
    }
    let weights: Vec<f64> = (1..=v).map(|k| (k as f64).powf(-exponent)).collect();
    let table = AliasTable::new(&weights);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tokens = (0..n).map(|_| table.sample(&mut rng)).collect();
    Ok(TokenStream { tokens })
}

/// Parameters for the topical corpus generator.
#[derive(Debug, Clone)]
pub struct TopicCorpusSpec {
    pub vocab_size: usize,
    pub n_topics: usize,
    pub n_tokens: usize,
    /// Zipf exponent for the base frequency profile.
    pub zipf_exponent: f64,
    /// The most frequent `n_stopwords` ranks are topic-neutral.
    pub n_stopwords: usize,
    /// Tokens per topically coherent segment.
    pub segment_len: usize,
    pub seed: u64,
}

impl Default for TopicCorpusSpec {
    fn default() -> Self {
        TopicCorpusSpec {
            vocab_size: 20_000,
            n_topics: 32,
            n_tokens: 2_000_000,
            zipf_exponent: 1.0,
            n_stopwords: 64,
            segment_len: 200,
            seed: 1,
        }
    }
}

/// A generated topical corpus: surface forms plus the token sequence.
#[derive(Debug, Clone)]
pub struct TopicCorpus {
    pub words: Vec<String>,
    pub tokens: Vec<u32>,
}

impl TopicCorpus {
    /// Stream the corpus as whitespace-separated text, 64 tokens per line.
    pub fn write_text<W: Write>(&self, w: W) -> Result<()> {
        let mut w = BufWriter::new(w);
        for (i, &t) in self.tokens.iter().enumerate() {
            if i > 0 {
                if i % 64 == 0 {
                    writeln!(w)?;
                } else {
                    write!(w, " ")?;
                }
            }
            write!(w, "{}", self.words[t as usize])?;
        }
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }
}

/// Deterministic pronounceable pseudo-word for a vocabulary slot.
pub fn pseudo_word(mut id: u64) -> String {
    const C: [&str; 16] = [
        "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "ch", "st",
    ];
    const V: [&str; 5] = ["a", "e", "i", "o", "u"];
    let mut s = String::new();
    loop {
        s.push_str(C[(id % 16) as usize]);
        id /= 16;
        s.push_str(V[(id % 5) as usize]);
        id /= 5;
        if id == 0 {
            break;
        }
    }
    s
}

/// Generate a corpus with Zipfian frequencies and per-word topical
/// concentration.
///
/// Each rank beyond the stopword band is assigned a home topic and a
/// specificity γ drawn log-uniformly: within its home topic a word is boosted
/// by γ, elsewhere damped to a small floor. Segments pick a topic and draw
/// tokens i.i.d. from that topic's distribution. High-γ words therefore see
/// contexts sharply different from the corpus background (large information
/// gain) while stopwords see the background itself (near-zero gain) — and
/// frequency and gain decouple, since γ is independent of rank.
pub fn gen_topic_corpus(spec: &TopicCorpusSpec) -> Result<TopicCorpus> {
    let v = spec.vocab_size;
    let k = spec.n_topics;
    if v < 2 || k < 2 {
        return Err(Error::InvalidArgument(
            "need at least 2 words and 2 topics".into(),
        ));
    }
    if spec.segment_len < 2 {
        return Err(Error::InvalidArgument("segment_len must be ≥ 2".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let off_topic_floor = 0.05;

    // Per-word home topic and specificity.
    let mut home = vec![0usize; v];
    let mut gamma = vec![1.0f64; v];
    for w in 0..v {
        if w < spec.n_stopwords {
            continue;
        }
        home[w] = rng.gen_range(0..k);
        let ln_g = rng.gen_range(0.5f64.ln()..50.0f64.ln());
        gamma[w] = ln_g.exp();
    }

    // Topic distributions φ_t(w) ∝ zipf(w)·m(w,t).
    let zipf: Vec<f64> = (1..=v)
        .map(|r| (r as f64).powf(-spec.zipf_exponent))
        .collect();
    let mut topic_tables = Vec::with_capacity(k);
    for t in 0..k {
        let weights: Vec<f64> = (0..v)
            .map(|w| {
                let m = if w < spec.n_stopwords {
                    1.0
                } else if home[w] == t {
                    gamma[w]
                } else {
                    off_topic_floor
                };
                zipf[w] * m
            })
            .collect();
        topic_tables.push(AliasTable::new(&weights));
    }

    let mut tokens = Vec::with_capacity(spec.n_tokens);
    while tokens.len() < spec.n_tokens {
        let t = rng.gen_range(0..k);
        let table = &topic_tables[t];
        let remaining = spec.n_tokens - tokens.len();
        for _ in 0..spec.segment_len.min(remaining) {
            tokens.push(table.sample(&mut rng));
        }
    }
    let words = (0..v as u64).map(pseudo_word).collect();
    Ok(TopicCorpus { words, tokens })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{expfam_kl, fit_linear};

    fn quick_spec() -> SyntheticSpec {
        SyntheticSpec {
            vocab_size: 12,
            d: 4,
            radius: 0.3,
            seed: 21,
            corpus_len: 0,
        }
    }

    #[test]
    fn expfam_fixture_is_deterministic_and_consistent() {
        let a = gen_expfam(&quick_spec()).unwrap();
        let b = gen_expfam(&quick_spec()).unwrap();
        assert_eq!(a.u0, b.u0);
        assert_eq!(a.cond, b.cond);

        for row in a.cond.iter().chain(std::iter::once(&a.marginal)) {
            let s: f64 = row.iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        for uw in &a.u {
            let norm: f64 = uw
                .iter()
                .zip(&a.u0)
                .map(|(&x, &c)| (x - c) * (x - c))
                .sum::<f64>()
                .sqrt();
            assert!(norm <= 0.3 + 1e-12);
        }
    }

    #[test]
    fn expfam_exact_kl_matches_closed_form() {
        // The fixture computes distributions by direct division; the geometry
        // module uses log-sum-exp. The two independent codepaths must agree.
        let f = gen_expfam(&quick_spec()).unwrap();
        for w in 0..f.u.len() {
            let direct = f.exact_kl(w);
            let closed = expfam_kl(&f.model, &f.u[w], &f.u0);
            assert!(
                (direct - closed).abs() < 1e-10,
                "word {w}: {direct} vs {closed}"
            );
        }
    }

    #[test]
    fn expfam_small_radius_means_small_kl() {
        let f = gen_expfam(&SyntheticSpec {
            radius: 1e-6,
            ..quick_spec()
        })
        .unwrap();
        for w in 0..f.u.len() {
            assert!(f.exact_kl(w) < 1e-9);
        }
    }

    #[test]
    fn expfam_constructed_mixture_is_consistent() {
        let f = gen_expfam(&quick_spec()).unwrap();
        // Choose arbitrary weights; the mixture of exact conditionals must
        // equal the explicitly accumulated weighted sum.
        let v = f.cond.len();
        let weights: Vec<f64> = (1..=v).map(|i| 2.0 * i as f64 / (v * (v + 1)) as f64).collect();
        assert!((weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let mut mixture = vec![0.0f64; v];
        for (w, row) in f.cond.iter().enumerate() {
            for (m, &p) in mixture.iter_mut().zip(row) {
                *m += weights[w] * p;
            }
        }
        let mut oracle = vec![0.0f64; v];
        for j in 0..v {
            oracle[j] = (0..v).map(|w| weights[w] * f.cond[w][j]).sum();
        }
        for (a, b) in mixture.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zipf_corpus_rank_frequency_slope() {
        let v = 200;
        let n = 400_000;
        let stream = gen_zipf_corpus(v, n, 1.0, 3).unwrap();
        assert_eq!(stream.len(), n);
        let mut counts = vec![0u64; v];
        for &t in &stream.tokens {
            counts[t as usize] += 1;
        }
        // log count vs log rank over the well-sampled head.
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for (i, &c) in counts.iter().enumerate().take(50) {
            assert!(c > 0);
            xs.push(((i + 1) as f64).ln());
            ys.push((c as f64).ln());
        }
        let fit = fit_linear(&xs, &ys, |_| true).unwrap();
        assert!(
            (fit.slope + 1.0).abs() < 0.1,
            "rank-frequency slope {}",
            fit.slope
        );
    }

    #[test]
    fn zipf_corpus_trivial_cases() {
        assert!(gen_zipf_corpus(10, 0, 1.0, 1).unwrap().is_empty());
        let a = gen_zipf_corpus(10, 100, 1.0, 5).unwrap();
        let b = gen_zipf_corpus(10, 100, 1.0, 5).unwrap();
        assert_eq!(a, b);
        assert!(gen_zipf_corpus(10, 10, 0.0, 1).is_err());
    }

    #[test]
    fn pseudo_words_are_unique_and_nonempty() {
        let mut seen = std::collections::HashSet::new();
        for id in 0..30_000u64 {
            let w = pseudo_word(id);
            assert!(!w.is_empty());
            assert!(seen.insert(w), "duplicate pseudo-word for id {id}");
        }
    }

    #[test]
    fn topic_corpus_smoke() {
        let spec = TopicCorpusSpec {
            vocab_size: 500,
            n_topics: 8,
            n_tokens: 30_000,
            n_stopwords: 10,
            segment_len: 50,
            seed: 4,
            ..TopicCorpusSpec::default()
        };
        let c = gen_topic_corpus(&spec).unwrap();
        assert_eq!(c.tokens.len(), 30_000);
        let again = gen_topic_corpus(&spec).unwrap();
        assert_eq!(c.tokens, again.tokens);
        // Stopword ranks dominate the counts.
        let mut counts = vec![0u64; 500];
        for &t in &c.tokens {
            counts[t as usize] += 1;
        }
        let stop_mass: u64 = counts[..10].iter().sum();
        assert!(stop_mass > 30_000 / 5, "stopword mass {stop_mass}");
        // Text writer produces the same number of tokens.
        let mut buf = Vec::new();
        c.write_text(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.split_whitespace().count(), 30_000);
    }
}
