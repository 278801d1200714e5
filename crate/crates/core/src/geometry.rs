//! Embedding geometry: frequency-weighted moments, the whitening transform,
//! base-point estimation, the exponential-family model behind SGNS, and
//! least-squares fitting of the norm–information-gain relationship.

use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::corpus::Vocabulary;
use crate::sgns::EmbeddingSet;
use crate::util::{g6, logsumexp, Kahan};
use crate::{Error, Result};

/// Frequency-weighted first and second moments of an embedding set.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Moments {
    pub d: usize,
    /// ū = Σ_w p(w)·u_w
    pub u_mean: Vec<f64>,
    /// v̄ = Σ_w p(w)·v_w
    pub v_mean: Vec<f64>,
    /// G = Σ_w p(w)·(v_w − v̄)(v_w − v̄)ᵀ, row-major d×d.
    pub g: Vec<f64>,
}

/// Symmetric PSD square root S of G together with the centering vector, so
/// that ũ_w = S·(u_w − center).
#[derive(Debug, Clone)]
pub struct WhiteningTransform {
    pub d: usize,
    pub s: Vec<f64>,
    pub center: Vec<f64>,
}

/// Exponential family over the vocabulary: p(w'|u) ∝ q(w')·e^{⟨u, v_{w'}⟩}.
#[derive(Debug, Clone)]
pub struct ExpFamilyModel {
    pub d: usize,
    /// Base measure, a probability vector over the vocabulary.
    pub q: Vec<f64>,
    /// Sufficient statistics v_{w'}, row-major |V|×d.
    pub suff: Vec<f64>,
}

/// Ordinary least-squares fit summary.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RegressionFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub n_points: usize,
}

/// Moments under explicit weights (must sum to 1 within 1e-9).
pub fn compute_moments_weighted(emb: &EmbeddingSet, weights: &[f64]) -> Result<Moments> {
    let rows = emb.rows();
    let d = emb.dim();
    if weights.len() != rows {
        return Err(Error::DimensionMismatch(format!(
            "{} weights for {rows} embedding rows",
            weights.len()
        )));
    }
    let wsum: f64 = weights.iter().sum();
    if (wsum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "weights sum to {wsum}, expected 1"
        )));
    }
    let mut u_mean = vec![Kahan::default(); d];
    let mut v_mean = vec![Kahan::default(); d];
    for w in 0..rows as u32 {
        let p = weights[w as usize];
        if p == 0.0 {
            continue;
        }
        for (acc, &x) in u_mean.iter_mut().zip(emb.u(w)) {
            acc.add(p * x as f64);
        }
        for (acc, &x) in v_mean.iter_mut().zip(emb.v(w)) {
            acc.add(p * x as f64);
        }
    }
    let u_mean: Vec<f64> = u_mean.iter().map(Kahan::value).collect();
    let v_mean: Vec<f64> = v_mean.iter().map(Kahan::value).collect();

    let mut g = vec![Kahan::default(); d * d];
    let mut centered = vec![0.0f64; d];
    for w in 0..rows as u32 {
        let p = weights[w as usize];
        if p == 0.0 {
            continue;
        }
        for ((c, &x), m) in centered.iter_mut().zip(emb.v(w)).zip(&v_mean) {
            *c = x as f64 - m;
        }
        for i in 0..d {
            let pi = p * centered[i];
            let row = &mut g[i * d..(i + 1) * d];
            for (acc, &cj) in row.iter_mut().zip(&centered) {
                acc.add(pi * cj);
            }
        }
    }
    Ok(Moments {
        d,
        u_mean,
        v_mean,
        g: g.iter().map(Kahan::value).collect(),
    })
}

/// Moments weighted by the unigram distribution of `vocab`.
pub fn compute_moments(emb: &EmbeddingSet, vocab: &Vocabulary) -> Result<Moments> {
    if emb.rows() != vocab.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} embedding rows for vocabulary of {}",
            emb.rows(),
            vocab.len()
        )));
    }
    compute_moments_weighted(emb, &vocab.unigram())
}

fn max_abs(m: &[f64]) -> f64 {
    m.iter().fold(0.0f64, |a, &x| a.max(x.abs()))
}

/// Symmetric PSD square root via eigendecomposition. Eigenvalues below
/// 1e-12·λ_max are clamped to zero; an eigenvalue below −1e-8·λ_max is a
/// not-PSD error.
pub fn matrix_sqrt(g: &[f64], d: usize) -> Result<Vec<f64>> {
    if g.len() != d * d {
        return Err(Error::DimensionMismatch(format!(
            "matrix of {} entries is not {d}×{d}",
            g.len()
        )));
    }
    let scale = max_abs(g).max(f64::MIN_POSITIVE);
    for i in 0..d {
        for j in (i + 1)..d {
            if (g[i * d + j] - g[j * d + i]).abs() > 1e-8 * scale {
                return Err(Error::InvalidArgument(format!(
                    "matrix not symmetric at ({i},{j})"
                )));
            }
        }
    }
    let eig = DMatrix::from_row_slice(d, d, g).symmetric_eigen();
    let lambda_max = eig.eigenvalues.iter().fold(0.0f64, |a, &x| a.max(x));
    let mut lambda_sqrt = Vec::with_capacity(d);
    for &l in eig.eigenvalues.iter() {
        if l < -1e-8 * lambda_max.max(f64::MIN_POSITIVE) {
            return Err(Error::Numerical(format!(
                "matrix is not positive semidefinite: eigenvalue {l:.3e}"
            )));
        }
        lambda_sqrt.push(if l < 1e-12 * lambda_max { 0.0 } else { l.sqrt() });
    }
    // S = Q·diag(√λ)·Qᵀ
    let q = &eig.eigenvectors;
    let mut s = vec![0.0f64; d * d];
    for i in 0..d {
        for j in i..d {
            let mut acc = 0.0;
            for (k, &ls) in lambda_sqrt.iter().enumerate() {
                acc += q[(i, k)] * ls * q[(j, k)];
            }
            s[i * d + j] = acc;
            s[j * d + i] = acc;
        }
    }
    Ok(s)
}

/// Build the whitening transform ũ = S·(u − center) from moments, centering
/// at ū by default or at an explicit base point.
pub fn whitening_transform(moments: &Moments, center: Option<Vec<f64>>) -> Result<WhiteningTransform> {
    let s = matrix_sqrt(&moments.g, moments.d)?;
    Ok(WhiteningTransform {
        d: moments.d,
        s,
        center: center.unwrap_or_else(|| moments.u_mean.clone()),
    })
}

/// Squared whitened norms ‖S·(u_w − center)‖² for every word.
pub fn whiten(emb: &EmbeddingSet, transform: &WhiteningTransform) -> Result<Vec<f64>> {
    let d = emb.dim();
    if d != transform.d {
        return Err(Error::DimensionMismatch(format!(
            "embeddings have d={d}, transform has d={}",
            transform.d
        )));
    }
    Ok((0..emb.rows() as u32)
        .into_par_iter()
        .map(|w| {
            let u = emb.u(w);
            let mut centered = vec![0.0f64; d];
            for ((c, &x), m) in centered.iter_mut().zip(u).zip(&transform.center) {
                *c = x as f64 - m;
            }
            let mut norm2 = 0.0;
            for i in 0..d {
                let row = &transform.s[i * d..(i + 1) * d];
                let y: f64 = row.iter().zip(&centered).map(|(&s, &c)| s * c).sum();
                norm2 += y * y;
            }
            norm2
        })
        .collect())
}

/// The same norm through the quadratic form (u−c)ᵀG(u−c), for cross-checking
/// the S path.
pub fn whitened_norm2_quadratic(moments: &Moments, center: &[f64], u: &[f32]) -> f64 {
    let d = moments.d;
    let centered: Vec<f64> = u
        .iter()
        .zip(center)
        .map(|(&x, &m)| x as f64 - m)
        .collect();
    let mut acc = 0.0;
    for i in 0..d {
        let gi = &moments.g[i * d..(i + 1) * d];
        let dot: f64 = gi.iter().zip(&centered).map(|(&g, &c)| g * c).sum();
        acc += centered[i] * dot;
    }
    acc
}

/// Raw squared norms ‖u_w‖² per word.
pub fn raw_norm2(emb: &EmbeddingSet) -> Vec<f64> {
    (0..emb.rows() as u32)
        .map(|w| emb.u(w).iter().map(|&x| (x as f64).powi(2)).sum())
        .collect()
}

/// Estimate the base point u₀ as the frequency-weighted mean of the `top_k`
/// most frequent words' embeddings (weights renormalized over the selection).
pub fn estimate_u0(emb: &EmbeddingSet, vocab: &Vocabulary, top_k: usize) -> Result<Vec<f64>> {
    if top_k < 1 {
        return Err(Error::InvalidArgument("top_k must be ≥ 1".into()));
    }
    if top_k > vocab.len() {
        return Err(Error::InvalidArgument(format!(
            "top_k={top_k} exceeds vocabulary size {}",
            vocab.len()
        )));
    }
    // Ids are ordered by descending count, so the selection is 0..top_k.
    let total: u64 = (0..top_k as u32).map(|w| vocab.count(w)).sum();
    let mut u0 = vec![0.0f64; emb.dim()];
    for w in 0..top_k as u32 {
        let weight = vocab.count(w) as f64 / total as f64;
        for (acc, &x) in u0.iter_mut().zip(emb.u(w)) {
            *acc += weight * x as f64;
        }
    }
    Ok(u0)
}

impl ExpFamilyModel {
    pub fn new(d: usize, q: Vec<f64>, suff: Vec<f64>) -> Result<Self> {
        if suff.len() != q.len() * d {
            return Err(Error::DimensionMismatch(format!(
                "{} sufficient-statistic entries for |V|={} and d={d}",
                suff.len(),
                q.len()
            )));
        }
        let qsum: f64 = q.iter().sum();
        if (qsum - 1.0).abs() > 1e-9 || q.iter().any(|&x| x < 0.0) {
            return Err(Error::InvalidArgument(
                "base measure must be a probability vector".into(),
            ));
        }
        Ok(ExpFamilyModel { d, q, suff })
    }

    pub fn vocab_size(&self) -> usize {
        self.q.len()
    }

    pub fn stat(&self, w: usize) -> &[f64] {
        &self.suff[w * self.d..(w + 1) * self.d]
    }
}

/// Log-partition ψ(u) = log Σ q(w')·e^{⟨u, v_{w'}⟩}, max-shifted.
pub fn psi(model: &ExpFamilyModel, u: &[f64]) -> f64 {
    let logits: Vec<f64> = (0..model.vocab_size())
        .filter(|&w| model.q[w] > 0.0)
        .map(|w| {
            model.q[w].ln()
                + model
                    .stat(w)
                    .iter()
                    .zip(u)
                    .map(|(&v, &x)| v * x)
                    .sum::<f64>()
        })
        .collect();
    logsumexp(&logits)
}

/// The distribution p(·|u) of the model.
pub fn model_probs(model: &ExpFamilyModel, u: &[f64]) -> Vec<f64> {
    let z = psi(model, u);
    (0..model.vocab_size())
        .map(|w| {
            if model.q[w] == 0.0 {
                0.0
            } else {
                (model.q[w].ln()
                    + model
                        .stat(w)
                        .iter()
                        .zip(u)
                        .map(|(&v, &x)| v * x)
                        .sum::<f64>()
                    - z)
                    .exp()
            }
        })
        .collect()
}

/// Mean parameter η(u) = ∇ψ(u) = E_{p(·|u)}[v].
pub fn eta(model: &ExpFamilyModel, u: &[f64]) -> Vec<f64> {
    let p = model_probs(model, u);
    let mut out = vec![0.0f64; model.d];
    for (w, &pw) in p.iter().enumerate() {
        if pw == 0.0 {
            continue;
        }
        for (acc, &v) in out.iter_mut().zip(model.stat(w)) {
            *acc += pw * v;
        }
    }
    out
}

/// Fisher information G(u) = ∇²ψ(u) = Cov_{p(·|u)}[v], row-major d×d.
pub fn fisher(model: &ExpFamilyModel, u: &[f64]) -> Vec<f64> {
    let p = model_probs(model, u);
    let mean = eta(model, u);
    let d = model.d;
    let mut g = vec![0.0f64; d * d];
    let mut centered = vec![0.0f64; d];
    for (w, &pw) in p.iter().enumerate() {
        if pw == 0.0 {
            continue;
        }
        for ((c, &v), m) in centered.iter_mut().zip(model.stat(w)).zip(&mean) {
            *c = v - m;
        }
        for i in 0..d {
            let pi = pw * centered[i];
            for j in 0..d {
                g[i * d + j] += pi * centered[j];
            }
        }
    }
    g
}

/// Closed-form KL(p(·|u1) ∥ p(·|u2)) = ⟨u1−u2, η(u1)⟩ − ψ(u1) + ψ(u2).
pub fn expfam_kl(model: &ExpFamilyModel, u1: &[f64], u2: &[f64]) -> f64 {
    let e1 = eta(model, u1);
    let dot: f64 = u1
        .iter()
        .zip(u2)
        .zip(&e1)
        .map(|((&a, &b), &e)| (a - b) * e)
        .sum();
    dot - psi(model, u1) + psi(model, u2)
}

/// Ordinary least squares of y on x over the masked indices.
pub fn fit_linear(x: &[f64], y: &[f64], mask: impl Fn(usize) -> bool) -> Result<RegressionFit> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "x has {} points, y has {}",
            x.len(),
            y.len()
        )));
    }
    let idx: Vec<usize> = (0..x.len()).filter(|&i| mask(i)).collect();
    let n = idx.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "need ≥ 2 masked points, have {n}"
        )));
    }
    let mut mx = Kahan::default();
    let mut my = Kahan::default();
    for &i in &idx {
        mx.add(x[i]);
        my.add(y[i]);
    }
    let mx = mx.value() / n as f64;
    let my = my.value() / n as f64;
    let mut sxx = Kahan::default();
    let mut sxy = Kahan::default();
    let mut syy = Kahan::default();
    for &i in &idx {
        let dx = x[i] - mx;
        let dy = y[i] - my;
        sxx.add(dx * dx);
        sxy.add(dx * dy);
        syy.add(dy * dy);
    }
    let sxx = sxx.value();
    let sxy = sxy.value();
    let syy = syy.value();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument(
            "x is constant over the masked points".into(),
        ));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 {
        0.0
    } else {
        // SS_res = syy − slope·sxy for the OLS line.
        let ss_res = (syy - slope * sxy).max(0.0);
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    };
    Ok(RegressionFit {
        slope,
        intercept,
        r_squared,
        n_points: n,
    })
}

/// Single-line fit record: "slope intercept r2 n_points mask_spec".
pub fn fit_report_line(fit: &RegressionFit, mask_spec: &str) -> String {
    format!(
        "{} {} {} {} {}",
        g6(fit.slope),
        g6(fit.intercept),
        g6(fit.r_squared),
        fit.n_points,
        mask_spec
    )
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Scatter export for external plotting: word, frequency, information gain,
/// raw squared norm, whitened squared norm.
pub fn write_scatter_csv<W: Write>(
    w: W,
    vocab: &Vocabulary,
    kl: &[f64],
    norm2: &[f64],
    whitened_norm2: &[f64],
) -> Result<()> {
    if kl.len() != vocab.len() || norm2.len() != vocab.len() || whitened_norm2.len() != vocab.len()
    {
        return Err(Error::DimensionMismatch(
            "scatter columns must all match the vocabulary length".into(),
        ));
    }
    let mut w = BufWriter::new(w);
    writeln!(w, "word,n_w,kl,norm2,whitened_norm2")?;
    for id in 0..vocab.len() as u32 {
        writeln!(
            w,
            "{},{},{},{},{}",
            csv_field(vocab.word(id)),
            vocab.count(id),
            g6(kl[id as usize]),
            g6(norm2[id as usize]),
            g6(whitened_norm2[id as usize]),
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_scatter_csv<P: AsRef<Path>>(
    path: P,
    vocab: &Vocabulary,
    kl: &[f64],
    norm2: &[f64],
    whitened_norm2: &[f64],
) -> Result<()> {
    write_scatter_csv(
        std::fs::File::create(path)?,
        vocab,
        kl,
        norm2,
        whitened_norm2,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::build_vocab;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// q=(0.5,0.5), scalar stats v=(+1,−1): ψ(u)=log cosh(u), η=tanh(u).
    fn two_point() -> ExpFamilyModel {
        ExpFamilyModel::new(1, vec![0.5, 0.5], vec![1.0, -1.0]).unwrap()
    }

    fn random_model(rng: &mut ChaCha8Rng, v: usize, d: usize) -> ExpFamilyModel {
        let mut q: Vec<f64> = (0..v).map(|_| rng.gen_range(0.05..1.0)).collect();
        let z: f64 = q.iter().sum();
        q.iter_mut().for_each(|x| *x /= z);
        let suff: Vec<f64> = (0..v * d).map(|_| rng.gen_range(-1.5..1.5)).collect();
        ExpFamilyModel::new(d, q, suff).unwrap()
    }

    fn brute_force_kl(model: &ExpFamilyModel, u1: &[f64], u2: &[f64]) -> f64 {
        let p1 = model_probs(model, u1);
        let p2 = model_probs(model, u2);
        p1.iter()
            .zip(&p2)
            .filter(|&(&a, _)| a > 0.0)
            .map(|(&a, &b)| a * (a / b).ln())
            .sum()
    }

    #[test]
    fn moments_single_word() {
        let emb = EmbeddingSet::new(1, 2, vec![3.0, -1.0], vec![2.0, 5.0]).unwrap();
        let (vocab, _) = build_vocab(&["a"], 1).unwrap();
        let m = compute_moments(&emb, &vocab).unwrap();
        assert_eq!(m.u_mean, vec![3.0, -1.0]);
        assert_eq!(m.v_mean, vec![2.0, 5.0]);
        assert!(m.g.iter().all(|&x| x.abs() < 1e-15));
    }

    #[test]
    fn moments_two_point_covariance() {
        let emb =
            EmbeddingSet::new(2, 2, vec![0.0; 4], vec![1.0, 0.0, -1.0, 0.0]).unwrap();
        let (vocab, _) = build_vocab(&["a", "b"], 1).unwrap();
        let m = compute_moments(&emb, &vocab).unwrap();
        assert!(m.v_mean.iter().all(|&x| x.abs() < 1e-15));
        assert!((m.g[0] - 1.0).abs() < 1e-15);
        assert!(m.g[1].abs() < 1e-15 && m.g[2].abs() < 1e-15 && m.g[3].abs() < 1e-15);
    }

    #[test]
    fn moments_match_uncentered_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (rows, d) = (40, 5);
        let u: Vec<f32> = (0..rows * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v: Vec<f32> = (0..rows * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let emb = EmbeddingSet::new(rows, d, u, v).unwrap();
        let mut weights: Vec<f64> = (0..rows).map(|_| rng.gen_range(0.1..1.0)).collect();
        let z: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|x| *x /= z);
        let m = compute_moments_weighted(&emb, &weights).unwrap();

        // Oracle: G = Σ p·v vᵀ − v̄ v̄ᵀ.
        let mut g2 = vec![0.0f64; d * d];
        for w in 0..rows as u32 {
            let p = weights[w as usize];
            let vr = emb.v(w);
            for i in 0..d {
                for j in 0..d {
                    g2[i * d + j] += p * vr[i] as f64 * vr[j] as f64;
                }
            }
        }
        for i in 0..d {
            for j in 0..d {
                g2[i * d + j] -= m.v_mean[i] * m.v_mean[j];
            }
        }
        for (a, b) in m.g.iter().zip(&g2) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
        // Symmetry invariant.
        for i in 0..d {
            for j in 0..d {
                assert!((m.g[i * d + j] - m.g[j * d + i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn matrix_sqrt_examples() {
        let s = matrix_sqrt(&[1.0, 0.0, 0.0, 1.0], 2).unwrap();
        assert_eq!(s, vec![1.0, 0.0, 0.0, 1.0]);
        let s = matrix_sqrt(&[4.0, 0.0, 0.0, 9.0], 2).unwrap();
        for (a, b) in s.iter().zip(&[2.0, 0.0, 0.0, 3.0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn matrix_sqrt_reconstructs_random_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d = 8;
        let a: Vec<f64> = (0..d * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        // G = AᵀA is PSD.
        let mut g = vec![0.0f64; d * d];
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    g[i * d + j] += a[k * d + i] * a[k * d + j];
                }
            }
        }
        let s = matrix_sqrt(&g, d).unwrap();
        let mut ss = vec![0.0f64; d * d];
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    ss[i * d + j] += s[i * d + k] * s[k * d + j];
                }
            }
        }
        let scale = max_abs(&g);
        for (x, y) in ss.iter().zip(&g) {
            assert!((x - y).abs() <= 1e-8 * scale);
        }
        // S is symmetric.
        for i in 0..d {
            for j in 0..d {
                assert_eq!(s[i * d + j], s[j * d + i]);
            }
        }
    }

    #[test]
    fn matrix_sqrt_rejects_indefinite_and_asymmetric() {
        assert!(matches!(
            matrix_sqrt(&[-1.0], 1),
            Err(Error::Numerical(_))
        ));
        assert!(matrix_sqrt(&[0.0, 1.0, 0.0, 0.0], 2).is_err());
    }

    #[test]
    fn whiten_basics_and_dual_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (rows, d) = (30, 6);
        let u: Vec<f32> = (0..rows * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v: Vec<f32> = (0..rows * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let emb = EmbeddingSet::new(rows, d, u, v).unwrap();
        let weights = vec![1.0 / rows as f64; rows];
        let m = compute_moments_weighted(&emb, &weights).unwrap();
        let t = whitening_transform(&m, None).unwrap();
        let norms = whiten(&emb, &t).unwrap();
        for w in 0..rows as u32 {
            let q = whitened_norm2_quadratic(&m, &t.center, emb.u(w));
            let n = norms[w as usize];
            assert!(
                (n - q).abs() <= 1e-9 * q.abs().max(1e-12),
                "S-path {n} vs quadratic {q}"
            );
        }

        // u at the center whitens to zero.
        let mut u2 = vec![0.0f32; rows * d];
        for r in 0..rows {
            for j in 0..d {
                u2[r * d + j] = m.u_mean[j] as f32;
            }
        }
        let emb2 = EmbeddingSet::new(rows, d, u2, vec![0.0; rows * d]).unwrap();
        let t2 = WhiteningTransform {
            d,
            s: t.s.clone(),
            center: m.u_mean.clone(),
        };
        let norms2 = whiten(&emb2, &t2).unwrap();
        // f32 storage of the center introduces ~1e-7 per-coordinate error.
        assert!(norms2.iter().all(|&x| x < 1e-10));

        // Identity metric reduces to the centered euclidean norm.
        let ident = WhiteningTransform {
            d,
            s: {
                let mut s = vec![0.0; d * d];
                for i in 0..d {
                    s[i * d + i] = 1.0;
                }
                s
            },
            center: vec![0.0; d],
        };
        let norms3 = whiten(&emb, &ident).unwrap();
        for w in 0..rows as u32 {
            let direct: f64 = emb.u(w).iter().map(|&x| (x as f64).powi(2)).sum();
            assert!((norms3[w as usize] - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn estimate_u0_variants() {
        // counts: a:3, b:2, c:1 → ids 0,1,2.
        let tokens = ["a", "a", "a", "b", "b", "c"];
        let (vocab, _) = build_vocab(&tokens, 1).unwrap();
        let d = 2;
        let u = vec![
            1.0f32, 0.0, // a
            0.0, 1.0, // b
            4.0, 4.0, // c
        ];
        let emb = EmbeddingSet::new(3, d, u, vec![0.0; 6]).unwrap();
        let top1 = estimate_u0(&emb, &vocab, 1).unwrap();
        assert_eq!(top1, vec![1.0, 0.0]);
        let top3 = estimate_u0(&emb, &vocab, 3).unwrap();
        // weights (3,2,1)/6 → (3·(1,0) + 2·(0,1) + 1·(4,4))/6 = (7/6, 6/6).
        assert!((top3[0] - 7.0 / 6.0).abs() < 1e-12);
        assert!((top3[1] - 1.0).abs() < 1e-12);
        assert!(estimate_u0(&emb, &vocab, 4).is_err());
        assert!(estimate_u0(&emb, &vocab, 0).is_err());
    }

    #[test]
    fn estimate_u0_equal_counts_is_arithmetic_mean() {
        let tokens = ["a", "b", "c"];
        let (vocab, _) = build_vocab(&tokens, 1).unwrap();
        let u = vec![3.0f32, 0.0, 6.0, 0.0, 0.0, 3.0];
        let emb = EmbeddingSet::new(3, 2, u, vec![0.0; 6]).unwrap();
        let u0 = estimate_u0(&emb, &vocab, 3).unwrap();
        assert!((u0[0] - 3.0).abs() < 1e-12);
        assert!((u0[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn psi_closed_forms() {
        let m = two_point();
        assert!(psi(&m, &[0.0]).abs() < 1e-15);
        let p = psi(&m, &[0.5]);
        assert!((p - 0.5f64.cosh().ln()).abs() < 1e-12);
        assert!((p - 0.120115).abs() < 5e-7);
    }

    #[test]
    fn psi_is_convex() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let m = random_model(&mut rng, 9, 3);
            let a: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let b: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let mid: Vec<f64> = a.iter().zip(&b).map(|(&x, &y)| 0.5 * (x + y)).collect();
            assert!(psi(&m, &mid) <= 0.5 * (psi(&m, &a) + psi(&m, &b)) + 1e-12);
        }
    }

    #[test]
    fn eta_closed_form_and_finite_difference() {
        let m = two_point();
        assert!(eta(&m, &[0.0])[0].abs() < 1e-15);
        let e = eta(&m, &[0.5])[0];
        assert!((e - 0.5f64.tanh()).abs() < 1e-12);
        assert!((e - 0.462117).abs() < 5e-7);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let d = 3;
            let m = random_model(&mut rng, 8, d);
            let u: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let e = eta(&m, &u);
            let step = 1e-5;
            for i in 0..d {
                let mut up = u.clone();
                let mut dn = u.clone();
                up[i] += step;
                dn[i] -= step;
                let fd = (psi(&m, &up) - psi(&m, &dn)) / (2.0 * step);
                assert!((fd - e[i]).abs() < 1e-6, "coord {i}: fd {fd} vs {e:?}");
            }
        }
    }

    #[test]
    fn fisher_closed_form_and_finite_difference() {
        let m = two_point();
        let g = fisher(&m, &[0.0]);
        assert!((g[0] - 1.0).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..5 {
            let d = 3;
            let m = random_model(&mut rng, 8, d);
            let u: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let g = fisher(&m, &u);
            let step = 1e-4;
            for i in 0..d {
                for j in 0..d {
                    let mut pp = u.clone();
                    let mut pm = u.clone();
                    let mut mp = u.clone();
                    let mut mm = u.clone();
                    pp[i] += step;
                    pp[j] += step;
                    pm[i] += step;
                    pm[j] -= step;
                    mp[i] -= step;
                    mp[j] += step;
                    mm[i] -= step;
                    mm[j] -= step;
                    let fd = (psi(&m, &pp) - psi(&m, &pm) - psi(&m, &mp) + psi(&m, &mm))
                        / (4.0 * step * step);
                    assert!(
                        (fd - g[i * d + j]).abs() < 1e-5,
                        "({i},{j}): fd {fd} vs {}",
                        g[i * d + j]
                    );
                }
            }
            // PSD check via the square-root routine.
            assert!(matrix_sqrt(&g, d).is_ok());
        }
    }

    #[test]
    fn expfam_kl_closed_form_matches_brute_force() {
        let m = two_point();
        assert!(expfam_kl(&m, &[0.7], &[0.7]).abs() < 1e-15);
        let kl = expfam_kl(&m, &[0.5], &[0.0]);
        assert!((kl - 0.110944).abs() < 5e-7);
        assert!((kl - brute_force_kl(&m, &[0.5], &[0.0])).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let d = 3;
            let m = random_model(&mut rng, 10, d);
            let u1: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let u2: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let closed = expfam_kl(&m, &u1, &u2);
            let brute = brute_force_kl(&m, &u1, &u2);
            assert!((closed - brute).abs() < 1e-10, "{closed} vs {brute}");
            assert!(closed >= -1e-12);
        }
    }

    #[test]
    fn quadratic_approximation_error_is_cubic() {
        // 2·KL(u0+ε ∥ u0) ≈ ε·G(·)·ε with O(ε³) error: halving ε must shrink
        // the error by ≈8×, with G at either endpoint. A skewed two-point
        // model keeps the third cumulant (the leading error term) firmly
        // nonzero, so the cubic rate is visible at these ε.
        let m = ExpFamilyModel::new(1, vec![0.8, 0.2], vec![1.0, -1.0]).unwrap();
        let u0 = [0.0f64];
        let mut errs_at_u1 = Vec::new();
        let mut errs_at_u0 = Vec::new();
        let mut form_gaps = Vec::new();
        for &eps in &[0.2, 0.1, 0.05] {
            let u1 = [u0[0] + eps];
            let two_kl = 2.0 * expfam_kl(&m, &u1, &u0);
            let q1 = fisher(&m, &u1)[0] * eps * eps;
            let q0 = fisher(&m, &u0)[0] * eps * eps;
            errs_at_u1.push((two_kl - q1).abs());
            errs_at_u0.push((two_kl - q0).abs());
            form_gaps.push((q1 - q0).abs());
        }
        for errs in [&errs_at_u1, &errs_at_u0, &form_gaps] {
            for k in 0..errs.len() - 1 {
                let factor = errs[k] / errs[k + 1];
                assert!(
                    (6.0..10.0).contains(&factor),
                    "cubic shrink factor {factor} in {errs:?}"
                );
            }
        }
    }

    #[test]
    fn fit_linear_examples() {
        let fit = fit_linear(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0], |_| true).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-12);
        assert!(fit.intercept.abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert_eq!(fit.n_points, 3);

        let fit = fit_linear(&[1.0, 2.0, 3.0], &[5.0, 5.0, 5.0], |_| true).unwrap();
        assert_eq!(fit.slope, 0.0);
        assert_eq!(fit.r_squared, 0.0);

        assert!(fit_linear(&[1.0, 1.0], &[2.0, 3.0], |_| true).is_err());
        assert!(fit_linear(&[1.0, 2.0], &[2.0, 3.0], |i| i == 0).is_err());
    }

    #[test]
    fn fit_linear_matches_normal_equations_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 200;
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..10.0)).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|&v| 1.7 * v - 0.4 + rng.gen_range(-0.5..0.5))
            .collect();
        let fit = fit_linear(&x, &y, |_| true).unwrap();

        // Oracle: solve [n Σx; Σx Σx²]·[b a]ᵀ = [Σy Σxy]ᵀ directly.
        let (sx, sy): (f64, f64) = (x.iter().sum(), y.iter().sum());
        let sxx: f64 = x.iter().map(|v| v * v).sum();
        let sxy: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        let nn = n as f64;
        let det = nn * sxx - sx * sx;
        let slope = (nn * sxy - sx * sy) / det;
        let intercept = (sy * sxx - sx * sxy) / det;
        assert!((fit.slope - slope).abs() < 1e-10);
        assert!((fit.intercept - intercept).abs() < 1e-10);

        // R² against the definition.
        let ss_res: f64 = x
            .iter()
            .zip(&y)
            .map(|(&a, &b)| (b - (slope * a + intercept)).powi(2))
            .sum();
        let my = sy / nn;
        let ss_tot: f64 = y.iter().map(|&b| (b - my).powi(2)).sum();
        assert!((fit.r_squared - (1.0 - ss_res / ss_tot)).abs() < 1e-10);
    }

    #[test]
    fn fit_linear_respects_mask() {
        // Outliers excluded by mask leave the clean line.
        let x = [1.0, 2.0, 3.0, 100.0];
        let y = [2.0, 4.0, 6.0, -50.0];
        let fit = fit_linear(&x, &y, |i| i < 3).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-12);
        assert_eq!(fit.n_points, 3);
    }

    #[test]
    fn synthetic_model_norms_track_information_gain() {
        // Words are parameter draws near u0; the reference distribution is
        // p(·|u0). Whitening with G = Fisher(u0) must make ‖ũ‖² ≈ 2·KL.
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let (v, d, words, radius) = (40, 6, 80, 0.1);
        let m = random_model(&mut rng, v, d);
        let u0: Vec<f64> = (0..d).map(|_| rng.gen_range(-0.3..0.3)).collect();
        let g = fisher(&m, &u0);
        let s = matrix_sqrt(&g, d).unwrap();
        let mut two_kl = Vec::new();
        let mut norm2 = Vec::new();
        for _ in 0..words {
            let u: Vec<f64> = u0
                .iter()
                .map(|&c| c + rng.gen_range(-radius..radius))
                .collect();
            two_kl.push(2.0 * expfam_kl(&m, &u, &u0));
            let delta: Vec<f64> = u.iter().zip(&u0).map(|(&a, &b)| a - b).collect();
            let mut n2 = 0.0;
            for i in 0..d {
                let y: f64 = s[i * d..(i + 1) * d]
                    .iter()
                    .zip(&delta)
                    .map(|(&a, &b)| a * b)
                    .sum();
                n2 += y * y;
            }
            norm2.push(n2);
        }
        let fit = fit_linear(&two_kl, &norm2, |_| true).unwrap();
        assert!(
            (0.95..=1.05).contains(&fit.slope),
            "slope {} out of range",
            fit.slope
        );
        assert!(fit.r_squared >= 0.99, "r² {}", fit.r_squared);
    }

    #[test]
    fn scatter_csv_format() {
        let (vocab, _) = build_vocab(&["a,x", "b"], 1).unwrap();
        let mut buf = Vec::new();
        write_scatter_csv(&mut buf, &vocab, &[0.1, 0.2], &[1.0, 2.0], &[3.0, 4.0]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "word,n_w,kl,norm2,whitened_norm2");
        assert_eq!(lines.next().unwrap(), "\"a,x\",1,0.1,1,3");
        assert_eq!(lines.next().unwrap(), "b,1,0.2,2,4");
    }

    #[test]
    fn fit_report_line_format() {
        let fit = RegressionFit {
            slope: 1.38442,
            intercept: -0.021,
            r_squared: 0.831,
            n_points: 1820,
        };
        assert_eq!(
            fit_report_line(&fit, "n_w>1000"),
            "1.38442 -0.021 0.831 1820 n_w>1000"
        );
    }
}
