//! End-to-end orchestration: corpus → vocabulary → co-occurrence → word
//! statistics → embeddings → moments/whitening → fits and word lists, with
//! content-addressed stage caching in a work directory.
//!
//! Every stage writes its artifact to disk and then reads it back, so the
//! values downstream stages consume are identical whether a stage was
//! computed or served from cache — reruns are byte-identical in
//! deterministic mode.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cooc::{count_cooccurrences, CoocMatrix};
use crate::corpus::{build_vocab, tokenize, TokenStream, Vocabulary};
use crate::geometry::{
    compute_moments, estimate_u0, fit_linear, raw_norm2, save_scatter_csv, whiten,
    whitened_norm2_quadratic, whitening_transform, RegressionFit,
};
use crate::infostats::{compute_word_stats, load_stats_tsv, save_stats_tsv};
use crate::sgns::{train, EmbeddingSet, TrainConfig};
use crate::util::{derive_seed, fnv1a64, g6};
use crate::{Error, Result};

pub const VOCAB_FILE: &str = "vocab.tsv";
pub const COOC_FILE: &str = "cooc.tsv";
pub const STATS_FILE: &str = "stats.tsv";
pub const EMB_U_FILE: &str = "embeddings.u.vec";
pub const EMB_V_FILE: &str = "embeddings.v.vec";
pub const SCATTER_FILE: &str = "scatter.csv";
pub const FITS_FILE: &str = "fits.tsv";
pub const TABLE_FILE: &str = "table1.tsv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const REPORT_FILE: &str = "report.json";

/// Which base point centers the quadratic form before fitting against 2·KL.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum U0Mode {
    /// u₀ estimated from the most frequent words.
    TopKWords,
    /// u₀ replaced by the frequency-weighted mean embedding ū.
    WeightedMean,
}

impl fmt::Display for U0Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            U0Mode::TopKWords => "topk-words",
            U0Mode::WeightedMean => "weighted-mean",
        })
    }
}

impl FromStr for U0Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "topk-words" => Ok(U0Mode::TopKWords),
            "weighted-mean" => Ok(U0Mode::WeightedMean),
            other => Err(Error::InvalidArgument(format!(
                "unknown u0 mode `{other}` (expected topk-words|weighted-mean)"
            ))),
        }
    }
}

/// Every knob the pipeline consumes. One master seed reproduces the whole
/// run: stages derive their own seeds from it by name.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    pub window: u32,
    pub dim: usize,
    pub epochs: usize,
    pub negatives: u32,
    pub lr_initial: f64,
    pub lr_min: f64,
    pub min_count: u64,
    pub threads: usize,
    pub deterministic: bool,
    /// Fits use words with n_w strictly above this.
    pub fit_mask_min_n: u64,
    /// The word lists keep words with n_w at or above this.
    pub table_min_n: u64,
    /// How many top-frequency words estimate u₀.
    pub u0_top_k: usize,
    /// Length of the top/bottom word lists.
    pub list_k: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        PipelineConfig {
            seed: t.seed,
            window: t.window,
            dim: t.dim,
            epochs: t.epochs,
            negatives: t.negatives,
            lr_initial: t.lr_initial,
            lr_min: t.lr_min,
            min_count: t.min_count,
            threads: t.threads,
            deterministic: t.deterministic,
            fit_mask_min_n: 1000,
            table_min_n: 10,
            u0_top_k: 3,
            list_k: 10,
        }
    }
}

impl PipelineConfig {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            dim: self.dim,
            epochs: self.epochs,
            window: self.window,
            negatives: self.negatives,
            lr_initial: self.lr_initial,
            lr_min: self.lr_min,
            min_count: self.min_count,
            seed: derive_seed(self.seed, "train"),
            threads: self.threads,
            deterministic: self.deterministic,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.train_config().validate()?;
        if self.u0_top_k == 0 || self.list_k == 0 {
            return Err(Error::InvalidArgument(
                "u0_top_k and list_k must be ≥ 1".into(),
            ));
        }
        Ok(())
    }
}

/// One entry of the top/bottom information-gain lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordEntry {
    pub word: String,
    pub n_w: u64,
    pub kl: f64,
}

/// What one stage did: its cache key, the hash of what it produced, how
/// long it took, and whether the cache served it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub key: String,
    pub output_hash: String,
    pub seconds: f64,
    pub cached: bool,
}

/// The complete result of a pipeline run. `run_fig1` guarantees `fit_raw`,
/// `run_fig23` the fit of the requested mode, and `run_all` everything;
/// because the analysis stage is cheap and shared, the other fields are
/// usually populated as well.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PipelineReport {
    pub stages: Vec<StageRecord>,
    /// ‖u_w‖² against KL(w).
    pub fit_raw: Option<RegressionFit>,
    /// (u_w−u₀)ᵀG(u_w−u₀) against 2·KL(w), u₀ from top-frequency words.
    pub fit_quadratic_topk: Option<RegressionFit>,
    /// ‖ũ_w‖² = ‖G^{1/2}(u_w−ū)‖² against 2·KL(w).
    pub fit_whitened: Option<RegressionFit>,
    pub top_words: Vec<WordEntry>,
    pub bottom_words: Vec<WordEntry>,
}

impl PipelineReport {
    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let f = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(f, self)?;
        Ok(())
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
    }
}

/// Streaming FNV-1a over a file's bytes.
pub fn hash_file<P: AsRef<Path>>(path: P) -> Result<u64> {
    let mut f = BufReader::new(File::open(path)?);
    let mut buf = [0u8; 64 * 1024];
    let mut h = 0xcbf29ce484222325u64;
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        for &b in &buf[..n] {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    }
    Ok(h)
}

/// Combine stage name, input hashes, and config fragments into a cache key.
fn cache_key(parts: &[&str]) -> u64 {
    fnv1a64(parts.join("\x1f").as_bytes())
}

fn hex(h: u64) -> String {
    format!("{h:016x}")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ManifestEntry {
    key: String,
    output: String,
    seconds: f64,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct Manifest {
    stages: BTreeMap<String, ManifestEntry>,
}

/// Stage bookkeeping: the manifest on disk plus the records of this run.
struct StageCtx {
    workdir: PathBuf,
    manifest: Manifest,
    records: Vec<StageRecord>,
}

impl StageCtx {
    fn open(workdir: &Path) -> Result<StageCtx> {
        fs::create_dir_all(workdir)?;
        let path = workdir.join(MANIFEST_FILE);
        let manifest = if path.exists() {
            serde_json::from_reader(BufReader::new(File::open(&path)?))?
        } else {
            Manifest::default()
        };
        Ok(StageCtx {
            workdir: workdir.to_path_buf(),
            manifest,
            records: Vec::new(),
        })
    }

    fn save_manifest(&self) -> Result<()> {
        let f = BufWriter::new(File::create(self.workdir.join(MANIFEST_FILE))?);
        serde_json::to_writer_pretty(f, &self.manifest)?;
        Ok(())
    }

    /// Run or reuse one stage. `compute` writes the stage's files; `load`
    /// reads them back. The loaded value is what downstream consumes in
    /// both the fresh and the cached path, and the combined file hash is
    /// returned for downstream cache keys.
    fn run<T>(
        &mut self,
        name: &str,
        key: u64,
        files: &[&str],
        load: impl FnOnce(&[PathBuf]) -> Result<T>,
        compute: impl FnOnce(&[PathBuf]) -> Result<()>,
    ) -> Result<(T, u64)> {
        let paths: Vec<PathBuf> = files.iter().map(|f| self.workdir.join(f)).collect();
        let started = Instant::now();
        let key_hex = hex(key);

        let combined = |paths: &[PathBuf]| -> Result<u64> {
            let mut hashes = Vec::with_capacity(paths.len());
            for p in paths {
                hashes.push(hex(hash_file(p)?));
            }
            Ok(cache_key(
                &hashes.iter().map(|s| s.as_str()).collect::<Vec<_>>(),
            ))
        };

        let fresh = |e: &ManifestEntry| -> bool {
            e.key == key_hex
                && paths.iter().all(|p| p.exists())
                && combined(&paths).map(hex).is_ok_and(|h| h == e.output)
        };

        if let Some(entry) = self.manifest.stages.get(name) {
            if fresh(entry) {
                let output = entry.output.clone();
                let value = load(&paths).map_err(|e| e.in_stage(name))?;
                self.records.push(StageRecord {
                    stage: name.to_string(),
                    key: key_hex,
                    output_hash: output.clone(),
                    seconds: started.elapsed().as_secs_f64(),
                    cached: true,
                });
                return Ok((value, u64::from_str_radix(&output, 16).unwrap()));
            }
        }

        compute(&paths).map_err(|e| e.in_stage(name))?;
        let output = combined(&paths).map_err(|e| e.in_stage(name))?;
        let value = load(&paths).map_err(|e| e.in_stage(name))?;
        self.manifest.stages.insert(
            name.to_string(),
            ManifestEntry {
                key: key_hex.clone(),
                output: hex(output),
                seconds: started.elapsed().as_secs_f64(),
            },
        );
        self.save_manifest()?;
        self.records.push(StageRecord {
            stage: name.to_string(),
            key: key_hex,
            output_hash: hex(output),
            seconds: started.elapsed().as_secs_f64(),
            cached: false,
        });
        Ok((value, output))
    }
}

/// Read and tokenize a whitespace-separated corpus file.
pub fn load_corpus<P: AsRef<Path>>(path: P, min_count: u64) -> Result<(Vocabulary, TokenStream)> {
    let text = fs::read_to_string(path)?;
    let tokens = tokenize(&text, true);
    build_vocab(&tokens, min_count)
}

/// Top/bottom `k` words by information gain among words with n_w ≥ `min_n`.
/// The top list descends from the largest KL; the bottom list ascends from
/// the smallest. Ties break by word id. Asking for more than exists returns
/// the full filtered list.
pub fn run_table1(
    vocab: &Vocabulary,
    kl: &[f64],
    min_n: u64,
    k: usize,
) -> (Vec<WordEntry>, Vec<WordEntry>) {
    let mut ids: Vec<u32> = (0..vocab.len() as u32)
        .filter(|&w| vocab.count(w) >= min_n)
        .collect();
    ids.sort_by(|&a, &b| {
        kl[a as usize]
            .partial_cmp(&kl[b as usize])
            .expect("finite KL")
            .then(a.cmp(&b))
    });
    let entry = |w: u32| WordEntry {
        word: vocab.word(w).to_string(),
        n_w: vocab.count(w),
        kl: kl[w as usize],
    };
    let bottom: Vec<WordEntry> = ids.iter().take(k).map(|&w| entry(w)).collect();
    let top: Vec<WordEntry> = ids.iter().rev().take(k).map(|&w| entry(w)).collect();
    (top, bottom)
}

struct AnalysisOutputs {
    fit_raw: RegressionFit,
    fit_topk: RegressionFit,
    fit_whitened: RegressionFit,
}

fn write_fits_tsv(path: &Path, fits: &AnalysisOutputs, mask: &str) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "#relationship\tslope\tintercept\tr2\tn\tmask")?;
    for (name, fit) in [
        ("raw-norm2-vs-kl", &fits.fit_raw),
        ("quadratic-topk-vs-2kl", &fits.fit_topk),
        ("whitened-vs-2kl", &fits.fit_whitened),
    ] {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}",
            name,
            g6(fit.slope),
            g6(fit.intercept),
            g6(fit.r_squared),
            fit.n_points,
            mask
        )?;
    }
    w.flush()?;
    Ok(())
}

fn read_fits_tsv(path: &Path) -> Result<AnalysisOutputs> {
    let text = fs::read_to_string(path)?;
    let mut fits = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let parse_err = |msg: &str| Error::Parse {
            path: path.display().to_string(),
            line: i + 1,
            msg: msg.to_string(),
        };
        if fields.len() != 6 {
            return Err(parse_err("expected 6 fields"));
        }
        fits.push(RegressionFit {
            slope: fields[1].parse().map_err(|_| parse_err("bad slope"))?,
            intercept: fields[2].parse().map_err(|_| parse_err("bad intercept"))?,
            r_squared: fields[3].parse().map_err(|_| parse_err("bad r2"))?,
            n_points: fields[4].parse().map_err(|_| parse_err("bad n"))?,
        });
    }
    let [raw, topk, whitened]: [RegressionFit; 3] = fits.try_into().map_err(|_| Error::Parse {
        path: path.display().to_string(),
        line: 0,
        msg: "expected exactly 3 fit rows".into(),
    })?;
    Ok(AnalysisOutputs {
        fit_raw: raw,
        fit_topk: topk,
        fit_whitened: whitened,
    })
}

fn write_table_tsv(path: &Path, top: &[WordEntry], bottom: &[WordEntry]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "#direction\trank\tword\tn_w\tkl")?;
    for (direction, list) in [("top", top), ("bottom", bottom)] {
        for (i, e) in list.iter().enumerate() {
            writeln!(w, "{direction}\t{}\t{}\t{}\t{}", i + 1, e.word, e.n_w, g6(e.kl))?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_table_tsv(path: &Path) -> Result<(Vec<WordEntry>, Vec<WordEntry>)> {
    let text = fs::read_to_string(path)?;
    let (mut top, mut bottom) = (Vec::new(), Vec::new());
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |msg: &str| Error::Parse {
            path: path.display().to_string(),
            line: i + 1,
            msg: msg.to_string(),
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(parse_err("expected 5 fields"));
        }
        let entry = WordEntry {
            word: fields[2].to_string(),
            n_w: fields[3].parse().map_err(|_| parse_err("bad n_w"))?,
            kl: fields[4].parse().map_err(|_| parse_err("bad kl"))?,
        };
        match fields[0] {
            "top" => top.push(entry),
            "bottom" => bottom.push(entry),
            _ => return Err(parse_err("direction must be top or bottom")),
        }
    }
    Ok((top, bottom))
}

/// The full pipeline. Artifacts live in `workdir`; stages whose inputs and
/// outputs still match the manifest are reused, everything else is
/// recomputed.
fn run_pipeline(corpus: &Path, workdir: &Path, cfg: &PipelineConfig) -> Result<PipelineReport> {
    cfg.validate()?;
    let mut ctx = StageCtx::open(workdir)?;
    let corpus_hash = hex(hash_file(corpus).map_err(|e| e.in_stage("corpus"))?);

    // Tokenization is recomputed in memory every run (it is cheap and the
    // token stream is not an artifact); the vocabulary file is the stage
    // output that downstream keys chain from.
    let (vocab, stream) =
        load_corpus(corpus, cfg.min_count).map_err(|e| e.in_stage("vocab"))?;
    let (_, vocab_hash) = ctx.run(
        "vocab",
        cache_key(&["vocab", &corpus_hash, &cfg.min_count.to_string()]),
        &[VOCAB_FILE],
        |p| Vocabulary::load(&p[0]).map(|_| ()),
        |p| vocab.save(&p[0]),
    )?;
    let vocab = &vocab;

    let (cooc, cooc_hash) = ctx.run(
        "cooc",
        cache_key(&["cooc", &hex(vocab_hash), &cfg.window.to_string()]),
        &[COOC_FILE],
        |p| CoocMatrix::load(&p[0]),
        |p| count_cooccurrences(&stream, vocab, cfg.window)?.save(&p[0]),
    )?;

    let (kl, stats_hash) = ctx.run(
        "stats",
        cache_key(&["stats", &hex(vocab_hash), &hex(cooc_hash)]),
        &[STATS_FILE],
        |p| {
            let rows = load_stats_tsv(&p[0])?;
            if rows.len() != vocab.len()
                || rows
                    .iter()
                    .enumerate()
                    .any(|(i, r)| r.word != vocab.word(i as u32))
            {
                return Err(Error::InvalidArgument(
                    "statistics file no longer matches the vocabulary".into(),
                ));
            }
            Ok(rows.iter().map(|r| r.kl).collect::<Vec<f64>>())
        },
        |p| save_stats_tsv(&compute_word_stats(&cooc, vocab)?, vocab, &p[0]),
    )?;

    let train_cfg = cfg.train_config();
    let train_sig = format!(
        "d={} epochs={} h={} neg={} lr={} lrmin={} seed={} det={} threads={}",
        train_cfg.dim,
        train_cfg.epochs,
        train_cfg.window,
        train_cfg.negatives,
        train_cfg.lr_initial,
        train_cfg.lr_min,
        train_cfg.seed,
        train_cfg.deterministic,
        if train_cfg.deterministic { 0 } else { train_cfg.threads },
    );
    let (emb, train_hash) = ctx.run(
        "train",
        cache_key(&["train", &hex(vocab_hash), &corpus_hash, &train_sig]),
        &[EMB_U_FILE, EMB_V_FILE],
        |p| EmbeddingSet::load(&p[0], &p[1], vocab),
        |p| train(&stream, vocab, &train_cfg)?.save(vocab, &p[0], &p[1]),
    )?;

    let mask = format!("n_w>{}", cfg.fit_mask_min_n);
    let analysis_sig = format!("mask={} u0_top_k={}", cfg.fit_mask_min_n, cfg.u0_top_k);
    let (analysis, _) = ctx.run(
        "analysis",
        cache_key(&[
            "analysis",
            &hex(stats_hash),
            &hex(train_hash),
            &analysis_sig,
        ]),
        &[SCATTER_FILE, FITS_FILE],
        |p| read_fits_tsv(&p[1]),
        |p| {
            let raw = raw_norm2(&emb);
            let moments = compute_moments(&emb, vocab)?;
            let transform = whitening_transform(&moments, None)?;
            let whitened = whiten(&emb, &transform)?;
            let u0 = estimate_u0(&emb, vocab, cfg.u0_top_k)?;
            let quad_topk: Vec<f64> = (0..vocab.len() as u32)
                .map(|w| whitened_norm2_quadratic(&moments, &u0, emb.u(w)))
                .collect();
            let two_kl: Vec<f64> = kl.iter().map(|&v| 2.0 * v).collect();
            let keep = |i: usize| vocab.count(i as u32) > cfg.fit_mask_min_n;
            let fits = AnalysisOutputs {
                fit_raw: fit_linear(&kl, &raw, keep)?,
                fit_topk: fit_linear(&two_kl, &quad_topk, keep)?,
                fit_whitened: fit_linear(&two_kl, &whitened, keep)?,
            };
            save_scatter_csv(&p[0], vocab, &kl, &raw, &whitened)?;
            write_fits_tsv(&p[1], &fits, &mask)
        },
    )?;

    let table_sig = format!("min_n={} k={}", cfg.table_min_n, cfg.list_k);
    let ((top, bottom), _) = ctx.run(
        "table1",
        cache_key(&["table1", &hex(stats_hash), &table_sig]),
        &[TABLE_FILE],
        |p| read_table_tsv(&p[0]),
        |p| {
            let (top, bottom) = run_table1(vocab, &kl, cfg.table_min_n, cfg.list_k);
            write_table_tsv(&p[0], &top, &bottom)
        },
    )?;

    let report = PipelineReport {
        stages: ctx.records,
        fit_raw: Some(analysis.fit_raw),
        fit_quadratic_topk: Some(analysis.fit_topk),
        fit_whitened: Some(analysis.fit_whitened),
        top_words: top,
        bottom_words: bottom,
    };
    report.save(workdir.join(REPORT_FILE))?;
    Ok(report)
}

/// Scatter data and the raw-norm fit: ‖u_w‖² against KL(w) over the
/// frequency mask, with the scatter CSV emitted alongside.
pub fn run_fig1(corpus: &Path, workdir: &Path, cfg: &PipelineConfig) -> Result<PipelineReport> {
    run_pipeline(corpus, workdir, cfg)
}

/// The quadratic-form fits against 2·KL(w). `mode` selects which base
/// point the caller is after; both variants are computed by the shared
/// analysis stage, so the other fit rides along at no cost.
pub fn run_fig23(
    corpus: &Path,
    workdir: &Path,
    cfg: &PipelineConfig,
    mode: U0Mode,
) -> Result<PipelineReport> {
    let report = run_pipeline(corpus, workdir, cfg)?;
    debug_assert!(match mode {
        U0Mode::TopKWords => report.fit_quadratic_topk.is_some(),
        U0Mode::WeightedMean => report.fit_whitened.is_some(),
    });
    Ok(report)
}

/// Everything: fits, scatter, and the top/bottom information-gain lists.
pub fn run_all(corpus: &Path, workdir: &Path, cfg: &PipelineConfig) -> Result<PipelineReport> {
    run_pipeline(corpus, workdir, cfg)
}
