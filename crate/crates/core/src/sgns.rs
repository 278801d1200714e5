//! Skip-gram with negative sampling: the ¾-power noise distribution with an
//! alias table, the SGD trainer (deterministic single-thread or lock-free
//! parallel), and word2vec-format embedding I/O.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{TokenStream, Vocabulary};
use crate::util::derive_seed;
use crate::{Error, Result};

/// Hyperparameters for SGNS training.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub dim: usize,
    pub epochs: usize,
    pub window: u32,
    pub negatives: u32,
    pub lr_initial: f64,
    pub lr_min: f64,
    pub min_count: u64,
    pub seed: u64,
    /// Worker count; 0 means use all available cores.
    pub threads: usize,
    /// Force a single worker for bitwise reproducibility.
    pub deterministic: bool,
    /// Abort if any embedding norm exceeds this bound.
    pub norm_guard: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 300,
            epochs: 100,
            window: 10,
            negatives: 5,
            lr_initial: 0.025,
            lr_min: 1e-4,
            min_count: 1,
            seed: 42,
            threads: 0,
            deterministic: false,
            norm_guard: 1e3,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 1 {
            return Err(Error::InvalidArgument("dim must be ≥ 1".into()));
        }
        if self.epochs < 1 {
            return Err(Error::InvalidArgument("epochs must be ≥ 1".into()));
        }
        if self.window < 1 {
            return Err(Error::InvalidArgument("window must be ≥ 1".into()));
        }
        if self.negatives < 1 {
            return Err(Error::InvalidArgument("negatives must be ≥ 1".into()));
        }
        if !(self.lr_min > 0.0 && self.lr_min <= self.lr_initial) {
            return Err(Error::InvalidArgument(
                "need 0 < lr_min ≤ lr_initial".into(),
            ));
        }
        if self.min_count < 1 {
            return Err(Error::InvalidArgument("min_count must be ≥ 1".into()));
        }
        Ok(())
    }

    fn effective_threads(&self) -> usize {
        if self.deterministic {
            1
        } else if self.threads == 0 {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        } else {
            self.threads
        }
    }
}

/// Word and context embedding matrices, |V|×d row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    d: usize,
    u: Vec<f32>,
    v: Vec<f32>,
}

impl EmbeddingSet {
    pub fn new(rows: usize, d: usize, u: Vec<f32>, v: Vec<f32>) -> Result<Self> {
        if u.len() != rows * d || v.len() != rows * d {
            return Err(Error::DimensionMismatch(format!(
                "expected {rows}×{d} matrices, got {} and {} entries",
                u.len(),
                v.len()
            )));
        }
        Ok(EmbeddingSet { d, u, v })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn rows(&self) -> usize {
        self.u.len() / self.d
    }

    /// Word embedding u_w.
    pub fn u(&self, w: u32) -> &[f32] {
        let i = w as usize * self.d;
        &self.u[i..i + self.d]
    }

    /// Context embedding v_w.
    pub fn v(&self, w: u32) -> &[f32] {
        let i = w as usize * self.d;
        &self.v[i..i + self.d]
    }

    pub fn max_row_norm(&self) -> f64 {
        let norm = |m: &[f32]| {
            m.chunks_exact(self.d)
                .map(|r| r.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt())
                .fold(0.0f64, f64::max)
        };
        norm(&self.u).max(norm(&self.v))
    }

    /// Write one matrix in word2vec text format: a "<rows> <d>" header, then
    /// "word x1 … xd" per line. Values use the shortest exact decimal form,
    /// so a load after save is bit-identical.
    pub fn write_word2vec<W: Write>(&self, matrix: &[f32], vocab: &Vocabulary, w: W) -> Result<()> {
        let mut w = BufWriter::new(w);
        writeln!(w, "{} {}", self.rows(), self.d)?;
        for (id, row) in matrix.chunks_exact(self.d).enumerate() {
            write!(w, "{}", vocab.word(id as u32))?;
            for x in row {
                write!(w, " {x}")?;
            }
            writeln!(w)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save<P: AsRef<Path>>(&self, vocab: &Vocabulary, u_path: P, v_path: P) -> Result<()> {
        self.write_word2vec(&self.u, vocab, std::fs::File::create(u_path)?)?;
        self.write_word2vec(&self.v, vocab, std::fs::File::create(v_path)?)?;
        Ok(())
    }

    fn read_matrix<R: Read>(r: R, vocab: &Vocabulary, origin: &str) -> Result<(usize, Vec<f32>)> {
        let parse_err = |line: usize, msg: String| Error::Parse {
            path: origin.to_string(),
            line,
            msg,
        };
        let mut lines = BufReader::new(r).lines();
        let header = lines
            .next()
            .ok_or_else(|| parse_err(1, "missing header".into()))??;
        let mut it = header.split_whitespace();
        let rows: usize = it
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| parse_err(1, format!("bad header {header:?}")))?;
        let d: usize = it
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| parse_err(1, format!("bad header {header:?}")))?;
        if rows != vocab.len() {
            return Err(parse_err(
                1,
                format!("file has {rows} rows but vocabulary has {}", vocab.len()),
            ));
        }
        let mut m = vec![0.0f32; rows * d];
        let mut seen = vec![false; rows];
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let word = it
                .next()
                .ok_or_else(|| parse_err(i + 2, "empty row".into()))?;
            let id = vocab.require_id(word)? as usize;
            if seen[id] {
                return Err(parse_err(i + 2, format!("duplicate word {word:?}")));
            }
            seen[id] = true;
            let row = &mut m[id * d..(id + 1) * d];
            for (j, slot) in row.iter_mut().enumerate() {
                *slot = it
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| parse_err(i + 2, format!("bad value at column {j}")))?;
            }
            if it.next().is_some() {
                return Err(parse_err(i + 2, format!("row longer than d={d}")));
            }
        }
        if let Some(missing) = seen.iter().position(|&s| !s) {
            return Err(parse_err(
                1,
                format!("word {:?} missing from file", vocab.word(missing as u32)),
            ));
        }
        Ok((d, m))
    }

    pub fn load<P: AsRef<Path>>(u_path: P, v_path: P, vocab: &Vocabulary) -> Result<Self> {
        let u_path = u_path.as_ref();
        let v_path = v_path.as_ref();
        let (du, u) = Self::read_matrix(
            std::fs::File::open(u_path)?,
            vocab,
            &u_path.display().to_string(),
        )?;
        let (dv, v) = Self::read_matrix(
            std::fs::File::open(v_path)?,
            vocab,
            &v_path.display().to_string(),
        )?;
        if du != dv {
            return Err(Error::DimensionMismatch(format!(
                "U has d={du} but V has d={dv}"
            )));
        }
        EmbeddingSet::new(vocab.len(), du, u, v)
    }

    pub fn u_matrix(&self) -> &[f32] {
        &self.u
    }

    pub fn v_matrix(&self) -> &[f32] {
        &self.v
    }
}

/// Negative-sampling distribution q(w) ∝ n_w^{3/4} with an alias table for
/// O(1) draws.
#[derive(Debug, Clone)]
pub struct NoiseDistribution {
    q: Vec<f64>,
    table: crate::util::AliasTable,
}

impl NoiseDistribution {
    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn prob_of(&self, w: u32) -> f64 {
        self.q[w as usize]
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> u32 {
        self.table.sample(rng)
    }
}

/// Build the ¾-power unigram noise distribution.
pub fn noise_distribution(vocab: &Vocabulary) -> NoiseDistribution {
    let weights: Vec<f64> = vocab
        .counts()
        .iter()
        .map(|&n| (n as f64).powf(0.75))
        .collect();
    let z: f64 = weights.iter().sum();
    let q: Vec<f64> = weights.iter().map(|w| w / z).collect();
    let table = crate::util::AliasTable::new(&q);
    NoiseDistribution { q, table }
}

fn sigmoid(x: f64) -> f64 {
    let x = x.clamp(-30.0, 30.0);
    1.0 / (1.0 + (-x).exp())
}

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

/// Probability that context w' is a positive (not noise) sample for center w.
///
/// Under the exponential model p(w'|w) = νq(w')·e^{⟨u,v⟩}, the discrimination
/// ratio p/(p + νq) collapses to σ(⟨u,v⟩): ν and the noise probability cancel,
/// so they do not affect the value. They stay in the signature because the
/// quantity is conceptually the NCE posterior for that specific noise setup.
pub fn positive_probability(u: &[f32], v: &[f32], _negatives: u32, _q_ctx: f64) -> f64 {
    sigmoid(dot(u, v))
}

/// Number of (center, context) positive pairs in one pass over a stream of
/// length n with window h: each ordered pair at distance ≤ h, clipped at the
/// endpoints.
pub fn pairs_per_epoch(n: usize, h: u32) -> u64 {
    let h = h as u64;
    let n = n as u64;
    if n <= 1 {
        return 0;
    }
    // Right neighbors per position sum to Σ_k min(h, k) over k = 0..n-1;
    // doubling counts both orientations.
    let right = if n > h {
        (n - h) * h + h * (h - 1) / 2
    } else {
        n * (n - 1) / 2
    };
    2 * right
}

/// Learning rate at global pair index t of T total pairs: linear decay from
/// lr_initial to lr_min, clamped below.
pub fn lr_schedule(cfg: &TrainConfig, t: u64, total: u64) -> f64 {
    let frac = if total == 0 {
        0.0
    } else {
        t as f64 / total as f64
    };
    (cfg.lr_initial + (cfg.lr_min - cfg.lr_initial) * frac).max(cfg.lr_min)
}

/// Initial parameters: U ~ uniform on [−0.5, 0.5]/d per entry, V = 0.
pub fn init_embeddings(rows: usize, d: usize, seed: u64) -> EmbeddingSet {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "sgns-init"));
    let u: Vec<f32> = (0..rows * d)
        .map(|_| ((rng.gen::<f64>() - 0.5) / d as f64) as f32)
        .collect();
    let v = vec![0.0f32; rows * d];
    EmbeddingSet { d, u, v }
}

/// Raw shared view of the parameter matrices for lock-free parallel updates.
/// Concurrent writes race benignly (hogwild): rows are plain f32 buffers with
/// no invariants, and the acceptance of stale reads is part of the algorithm.
#[derive(Clone, Copy)]
struct RawMatrix {
    ptr: *mut f32,
    d: usize,
}

unsafe impl Send for RawMatrix {}
unsafe impl Sync for RawMatrix {}

impl RawMatrix {
    /// Safety: callers must keep `w` within the allocated row count; rows may
    /// be written concurrently by other workers (tolerated by design).
    #[allow(clippy::mut_from_ref)]
    unsafe fn row(&self, w: usize) -> &mut [f32] {
        std::slice::from_raw_parts_mut(self.ptr.add(w * self.d), self.d)
    }
}

struct EpochWorker<'a> {
    tokens: &'a [u32],
    u: RawMatrix,
    v: RawMatrix,
    noise: &'a NoiseDistribution,
    cfg: &'a TrainConfig,
    total_pairs: u64,
    global_t: &'a AtomicU64,
    failed: &'a AtomicBool,
}

impl EpochWorker<'_> {
    /// Process centers in [start, end); windows may read context tokens
    /// outside the range. Returns Err on non-finite gradients.
    fn run(
        &self,
        start: usize,
        end: usize,
        rng: &mut ChaCha8Rng,
        mut observer: Option<&mut dyn FnMut(u64, f64)>,
    ) -> Result<()> {
        let n = self.tokens.len();
        let h = self.cfg.window as usize;
        let nu = self.cfg.negatives;
        let d = self.cfg.dim;
        let mut acc = vec![0.0f32; d];
        let mut local_t = 0u64;
        let mut t_base = self.global_t.fetch_add(0, Ordering::Relaxed);
        const SYNC_EVERY: u64 = 8192;

        for i in start..end {
            if self.failed.load(Ordering::Relaxed) {
                return Ok(());
            }
            let center = self.tokens[i] as usize;
            let lo = i.saturating_sub(h);
            let hi = (i + h).min(n - 1);
            for j in lo..=hi {
                if j == i {
                    continue;
                }
                let t = t_base + local_t;
                let lr = lr_schedule(self.cfg, t, self.total_pairs);
                if let Some(obs) = observer.as_deref_mut() {
                    obs(t, lr);
                }
                let context = self.tokens[j] as usize;
                // Safety: ids are validated against the vocabulary up front.
                let u_row = unsafe { self.u.row(center) };
                acc.iter_mut().for_each(|x| *x = 0.0);
                for k in 0..=nu {
                    let (target, label) = if k == 0 {
                        (context, 1.0f64)
                    } else {
                        (self.noise.sample(rng) as usize, 0.0f64)
                    };
                    let v_row = unsafe { self.v.row(target) };
                    let x = dot(u_row, v_row);
                    let g = (label - sigmoid(x)) * lr;
                    if !g.is_finite() {
                        self.failed.store(true, Ordering::Relaxed);
                        return Err(Error::Diverged(format!(
                            "non-finite gradient at pair {t} (center id {center})"
                        )));
                    }
                    let gf = g as f32;
                    for (a, &vv) in acc.iter_mut().zip(v_row.iter()) {
                        *a += gf * vv;
                    }
                    for (vv, &uu) in v_row.iter_mut().zip(u_row.iter()) {
                        *vv += gf * uu;
                    }
                }
                for (uu, &a) in u_row.iter_mut().zip(acc.iter()) {
                    *uu += a;
                }
                local_t += 1;
                if local_t % SYNC_EVERY == 0 {
                    self.global_t.fetch_add(SYNC_EVERY, Ordering::Relaxed);
                    t_base = self.global_t.load(Ordering::Relaxed) - local_t;
                }
            }
        }
        self.global_t
            .fetch_add(local_t % SYNC_EVERY, Ordering::Relaxed);
        Ok(())
    }
}

/// Train SGNS embeddings. See `train_with_observer` for the instrumented
/// variant.
pub fn train(stream: &TokenStream, vocab: &Vocabulary, cfg: &TrainConfig) -> Result<EmbeddingSet> {
    train_with_observer(stream, vocab, cfg, |_, _| {})
}

/// Train SGNS embeddings, invoking `observer(t, lr)` before every positive
/// pair when running single-threaded (deterministic mode or threads=1). The
/// observer is not called from multi-threaded runs.
pub fn train_with_observer(
    stream: &TokenStream,
    vocab: &Vocabulary,
    cfg: &TrainConfig,
    mut observer: impl FnMut(u64, f64),
) -> Result<EmbeddingSet> {
    cfg.validate()?;
    if stream.is_empty() {
        return Err(Error::InvalidArgument("empty training stream".into()));
    }
    if let Some(&bad) = stream.tokens.iter().find(|&&t| (t as usize) >= vocab.len()) {
        return Err(Error::InvalidArgument(format!(
            "token id {bad} outside vocabulary of size {}",
            vocab.len()
        )));
    }
    let noise = noise_distribution(vocab);
    let mut emb = init_embeddings(vocab.len(), cfg.dim, cfg.seed);
    let n = stream.len();
    let total_pairs = pairs_per_epoch(n, cfg.window) * cfg.epochs as u64;
    if total_pairs == 0 {
        return Err(Error::InvalidArgument(
            "stream too short for any window pair".into(),
        ));
    }
    let threads = cfg.effective_threads();
    let global_t = AtomicU64::new(0);
    let failed = AtomicBool::new(false);

    for epoch in 0..cfg.epochs {
        let u = RawMatrix {
            ptr: emb.u.as_mut_ptr(),
            d: cfg.dim,
        };
        let v = RawMatrix {
            ptr: emb.v.as_mut_ptr(),
            d: cfg.dim,
        };
        let worker = EpochWorker {
            tokens: &stream.tokens,
            u,
            v,
            noise: &noise,
            cfg,
            total_pairs,
            global_t: &global_t,
            failed: &failed,
        };
        if threads == 1 {
            let mut rng =
                ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &format!("sgns-epoch-{epoch}")));
            worker.run(0, n, &mut rng, Some(&mut observer))?;
        } else {
            let chunk = n.div_ceil(threads);
            std::thread::scope(|s| -> Result<()> {
                let mut handles = Vec::new();
                for w in 0..threads {
                    let start = w * chunk;
                    let end = ((w + 1) * chunk).min(n);
                    if start >= end {
                        continue;
                    }
                    let worker = &worker;
                    let seed = derive_seed(cfg.seed, &format!("sgns-epoch-{epoch}-worker-{w}"));
                    handles.push(s.spawn(move || {
                        let mut rng = ChaCha8Rng::seed_from_u64(seed);
                        worker.run(start, end, &mut rng, None)
                    }));
                }
                for h in handles {
                    h.join().expect("worker panicked")?;
                }
                Ok(())
            })?;
        }
        let max_norm = emb.max_row_norm();
        if !max_norm.is_finite() || max_norm > cfg.norm_guard {
            return Err(Error::Diverged(format!(
                "embedding norm {max_norm:.3e} exceeded guard {:.3e} after epoch {epoch}",
                cfg.norm_guard
            )));
        }
    }
    Ok(emb)
}

/// Mean SGNS objective, log σ(⟨u,v⟩) + Σ_ν log σ(−⟨u,v''⟩), over every
/// `stride`-th positive pair, with fresh noise draws from `seed`. Used to
/// compare training stages on held-out structure.
pub fn evaluate_objective(
    emb: &EmbeddingSet,
    stream: &TokenStream,
    noise: &NoiseDistribution,
    window: u32,
    negatives: u32,
    stride: usize,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "sgns-objective"));
    let n = stream.len();
    let h = window as usize;
    let mut total = 0.0;
    let mut count = 0u64;
    let mut pair_idx = 0usize;
    for i in 0..n {
        let lo = i.saturating_sub(h);
        let hi = (i + h).min(n.saturating_sub(1));
        for j in lo..=hi {
            if j == i {
                continue;
            }
            pair_idx += 1;
            if pair_idx % stride.max(1) != 0 {
                continue;
            }
            let u = emb.u(stream.tokens[i]);
            let mut obj = sigmoid(dot(u, emb.v(stream.tokens[j]))).max(1e-12).ln();
            for _ in 0..negatives {
                let neg = noise.sample(&mut rng);
                obj += (1.0 - sigmoid(dot(u, emb.v(neg)))).max(1e-12).ln();
            }
            total += obj;
            count += 1;
        }
    }
    total / count.max(1) as f64
}
