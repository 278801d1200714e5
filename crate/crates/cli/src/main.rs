//! Command-line driver. Each subcommand materializes one pipeline artifact
//! (vocabulary, co-occurrence counts, statistics, embeddings, moments,
//! whitened scatter, bias tables, regression fits) or evaluates a
//! downstream task. Data goes to stdout or `--out` files; progress notes go
//! to stderr.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use infogain_core::bias::{
    entropy_statistic, kl_statistic, load_bias_tsv, percentile_baseline, save_bias_tsv,
    shuffle_baseline,
};
use infogain_core::cooc::count_cooccurrences;
use infogain_core::corpus::{tokenize, TokenStream, Vocabulary};
use infogain_core::geometry::{
    compute_moments, fit_linear, fit_report_line, raw_norm2, save_scatter_csv, whiten,
    whitening_transform,
};
use infogain_core::infostats::{compute_word_stats, load_stats_tsv, save_stats_tsv};
use infogain_core::pipeline::{self, load_corpus, PipelineConfig, PipelineReport, U0Mode};
use infogain_core::sgns::train;
use infogain_core::tasks::hypernym::load_hypernym_tsv;
use infogain_core::tasks::keywords::load_keyword_jsonl;
use infogain_core::tasks::{
    evaluate_hypernym, evaluate_keywords, roc_auc, weedsprec_baselines, HypernymContext,
    HypernymMethod, HypernymScore, KeywordMeasure,
};
use infogain_core::util::{derive_seed, g6};
use infogain_core::{CoocMatrix, EmbeddingSet, TrainConfig};

/// Knobs shared by every subcommand. One master seed reproduces a whole
/// run: each stage derives its own stream from it by name.
#[derive(Args, Debug, Clone)]
struct GlobalOpts {
    /// Master random seed.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// Worker threads (0 = all available cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Single-threaded, bitwise-reproducible execution.
    #[arg(long, global = true)]
    deterministic: bool,
    /// Context window half-width h.
    #[arg(long, global = true, default_value_t = 10)]
    window: u32,
    /// Embedding dimension.
    #[arg(long, global = true, default_value_t = 300)]
    dim: usize,
    /// Training epochs.
    #[arg(long, global = true, default_value_t = 100)]
    epochs: usize,
    /// Negative samples per positive pair.
    #[arg(long, global = true, default_value_t = 5)]
    negatives: u32,
    /// Initial learning rate.
    #[arg(long, global = true, default_value_t = 0.025)]
    lr: f64,
    /// Floor the learning-rate schedule at this value.
    #[arg(long, global = true, default_value_t = 1e-4)]
    lr_min: f64,
    /// Drop words rarer than this when building vocabularies.
    #[arg(long, global = true, default_value_t = 1)]
    min_count: u64,
}

impl GlobalOpts {
    fn train_config(&self) -> TrainConfig {
        TrainConfig {
            dim: self.dim,
            epochs: self.epochs,
            window: self.window,
            negatives: self.negatives,
            lr_initial: self.lr,
            lr_min: self.lr_min,
            min_count: self.min_count,
            seed: derive_seed(self.seed, "train"),
            threads: self.threads,
            deterministic: self.deterministic,
            ..TrainConfig::default()
        }
    }

    fn pipeline_config(&self) -> PipelineConfig {
        PipelineConfig {
            seed: self.seed,
            window: self.window,
            dim: self.dim,
            epochs: self.epochs,
            negatives: self.negatives,
            lr_initial: self.lr,
            lr_min: self.lr_min,
            min_count: self.min_count,
            threads: self.threads,
            deterministic: self.deterministic,
            ..PipelineConfig::default()
        }
    }
}

#[derive(Parser)]
#[command(
    name = "infogain",
    version,
    about = "Word informativeness from co-occurrence statistics and skip-gram geometry"
)]
struct Cli {
    #[command(flatten)]
    opts: GlobalOpts,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum BiasKind {
    Shuffle,
    Percentile,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum BiasStatistic {
    Kl,
    Entropy,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum PosStatistic {
    Kl,
    Entropy,
    SelfInfo,
    Chi2,
    G2,
    Kl0,
    NW,
    Norm2,
    WhitenedNorm2,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum Direction {
    /// Larger scores indicate the positive class.
    Higher,
    /// Smaller scores indicate the positive class.
    Lower,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum Figure {
    /// Raw-norm scatter and fit.
    Fig1,
    /// Quadratic-form fits against twice the information gain.
    Fig23,
    /// Everything, including the top/bottom word lists.
    All,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build a vocabulary (word, count) table from a plain-text corpus.
    Vocab {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Count co-occurrences within ±window around every token.
    Cooc {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-word information statistics from a co-occurrence matrix.
    Stats {
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        cooc: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train skip-gram embeddings with negative sampling.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        /// Word vectors (text word2vec format).
        #[arg(long)]
        out_u: PathBuf,
        /// Context vectors.
        #[arg(long)]
        out_v: PathBuf,
    },
    /// Frequency-weighted embedding moments (mean vectors and the
    /// second-moment matrix G), as JSON.
    Moments {
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        emb_u: PathBuf,
        #[arg(long)]
        emb_v: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Whitened squared norms joined with word statistics (scatter CSV:
    /// word, n_w, kl, norm2, whitened_norm2).
    Whiten {
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        emb_u: PathBuf,
        #[arg(long)]
        emb_v: PathBuf,
        /// Statistics table providing the kl column.
        #[arg(long)]
        stats: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Frequency-bias baseline table for a per-word statistic.
    Bias {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long, value_enum, default_value_t = BiasKind::Shuffle)]
        method: BiasKind,
        #[arg(long, value_enum, default_value_t = BiasStatistic::Kl)]
        statistic: BiasStatistic,
        /// Shuffled-corpus replicates (shuffle method).
        #[arg(long, default_value_t = 10)]
        shuffles: usize,
        /// Log-spaced frequency bins before merging (percentile method).
        #[arg(long, default_value_t = 200)]
        bins: usize,
        /// Minimum words per retained bin (percentile method).
        #[arg(long, default_value_t = 50)]
        min_bin: usize,
        /// Lower percentile within each bin (percentile method).
        #[arg(long, default_value_t = 3.0)]
        pct: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Ordinary least squares over a scatter CSV: squared norm against
    /// information gain and whitened squared norm against twice the gain.
    Fit {
        #[arg(long)]
        scatter: PathBuf,
        /// Fit only words with n_w strictly above this.
        #[arg(long, default_value_t = 1000)]
        min_n: u64,
    },
    /// Keyword extraction on a JSONL dataset: MRR and P@5 per measure.
    EvalKeywords {
        /// JSONL records {"id", "text", "keywords": [...]}.
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated measures (default: all of
        /// random,count,count-entropy,chi2,count-kl).
        #[arg(long, value_delimiter = ',')]
        measures: Vec<String>,
    },
    /// Binary word-class discrimination by ROC-AUC over a statistic.
    EvalPos {
        /// Statistics table (needed for every statistic except the norms).
        #[arg(long)]
        stats: Option<PathBuf>,
        /// Scatter CSV (needed for norm2 / whitened-norm2).
        #[arg(long)]
        scatter: Option<PathBuf>,
        #[arg(long, value_enum)]
        statistic: PosStatistic,
        #[arg(long, value_enum, default_value_t = Direction::Higher)]
        direction: Direction,
        /// Positive-class word list, one word per line.
        #[arg(long)]
        positive: PathBuf,
        /// Negative-class word list, one word per line.
        #[arg(long)]
        negative: PathBuf,
    },
    /// Hypernym direction prediction on hypo<TAB>hyper pairs.
    EvalHypernym {
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        cooc: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated methods, or `all` for every method whose inputs
        /// are present.
        #[arg(long, value_delimiter = ',', default_values_t = [String::from("all")])]
        methods: Vec<String>,
        /// Contexts kept for the SLQS median.
        #[arg(long, default_value_t = 50)]
        context_size: usize,
        /// Scatter CSV supplying whitened squared norms (norm2 methods).
        #[arg(long)]
        scatter: Option<PathBuf>,
        /// Baseline tables for the Δ methods.
        #[arg(long)]
        bias_kl: Option<PathBuf>,
        #[arg(long)]
        bias_entropy: Option<PathBuf>,
        #[arg(long)]
        bias_norm2: Option<PathBuf>,
        /// Corpus for the ΔWeedsPrec shuffled baselines.
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Shuffled replicates for ΔWeedsPrec.
        #[arg(long, default_value_t = 10)]
        delta_shuffles: usize,
    },
    /// Run the cached end-to-end pipeline into a work directory and print
    /// the resulting fits and word lists.
    Report {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        workdir: PathBuf,
        #[arg(long, value_enum, default_value_t = Figure::All)]
        figure: Figure,
        /// Base point for the quadratic fit (fig23): topk-words or
        /// weighted-mean.
        #[arg(long, default_value = "weighted-mean")]
        u0_mode: String,
        /// Fit only words with n_w strictly above this.
        #[arg(long, default_value_t = 1000)]
        fit_min_n: u64,
        /// Word lists keep words with n_w at or above this.
        #[arg(long, default_value_t = 10)]
        table_min_n: u64,
        /// Most frequent words used to estimate the base point.
        #[arg(long, default_value_t = 3)]
        u0_top_k: usize,
        /// Length of the top/bottom lists.
        #[arg(long, default_value_t = 10)]
        list_k: usize,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn configure_threads(opts: &GlobalOpts) -> Result<()> {
    let n = if opts.deterministic { 1 } else { opts.threads };
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    Ok(())
}

/// Tokenize a corpus file and encode it against an existing vocabulary;
/// out-of-vocabulary tokens are dropped.
fn encode_corpus(path: &Path, vocab: &Vocabulary) -> Result<TokenStream> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading corpus {}", path.display()))?;
    let tokens = tokenize(&text, true);
    Ok(TokenStream {
        tokens: tokens.iter().filter_map(|t| vocab.id(t)).collect(),
    })
}

fn load_vocab(path: &Path) -> Result<Vocabulary> {
    Vocabulary::load(path).with_context(|| format!("loading vocabulary {}", path.display()))
}

fn load_cooc(path: &Path) -> Result<CoocMatrix> {
    CoocMatrix::load(path)
        .with_context(|| format!("loading co-occurrence matrix {}", path.display()))
}

/// Parsed scatter CSV row set: word → (n_w, kl, norm2, whitened_norm2).
struct Scatter {
    words: Vec<String>,
    n_w: Vec<u64>,
    kl: Vec<f64>,
    norm2: Vec<f64>,
    whitened: Vec<f64>,
}

fn load_scatter(path: &Path) -> Result<Scatter> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading scatter {}", path.display()))?;
    let mut s = Scatter {
        words: Vec::new(),
        n_w: Vec::new(),
        kl: Vec::new(),
        norm2: Vec::new(),
        whitened: Vec::new(),
    };
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.is_empty() {
            continue;
        }
        // The word field is written first and may be quoted; all numeric
        // fields are comma-free, so split from the right.
        let mut fields = line.rsplitn(5, ',');
        let err = |what: &str| anyhow::anyhow!("{}:{}: bad {what}", path.display(), i + 1);
        let whitened = fields.next().ok_or_else(|| err("row"))?;
        let norm2 = fields.next().ok_or_else(|| err("row"))?;
        let kl = fields.next().ok_or_else(|| err("row"))?;
        let n_w = fields.next().ok_or_else(|| err("row"))?;
        let word = fields.next().ok_or_else(|| err("row"))?;
        s.words
            .push(word.trim_matches('"').replace("\"\"", "\""));
        s.n_w.push(n_w.parse().map_err(|_| err("count"))?);
        s.kl.push(kl.parse().map_err(|_| err("kl"))?);
        s.norm2.push(norm2.parse().map_err(|_| err("norm"))?);
        s.whitened.push(whitened.parse().map_err(|_| err("norm"))?);
    }
    if s.words.is_empty() {
        bail!("{}: no data rows", path.display());
    }
    Ok(s)
}

/// Word list file: one word per line, blanks skipped.
fn load_word_list(path: &Path) -> Result<Vec<String>> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading word list {}", path.display()))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}

fn fmt_pct(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{v:.2}"),
        None => "nan".into(),
    }
}

fn run(cli: Cli) -> Result<()> {
    configure_threads(&cli.opts)?;
    let opts = &cli.opts;
    match cli.cmd {
        Cmd::Vocab { corpus, out } => {
            let (vocab, stream) = load_corpus(&corpus, opts.min_count)
                .with_context(|| format!("building vocabulary from {}", corpus.display()))?;
            vocab.save(&out)?;
            eprintln!(
                "vocab: {} words, {} tokens kept -> {}",
                vocab.len(),
                stream.len(),
                out.display()
            );
        }
        Cmd::Cooc { corpus, vocab, out } => {
            let vocab = load_vocab(&vocab)?;
            let stream = encode_corpus(&corpus, &vocab)?;
            let cooc = count_cooccurrences(&stream, &vocab, opts.window)?;
            cooc.save(&out)?;
            eprintln!(
                "cooc: {} pairs at window {} -> {}",
                cooc.total(),
                opts.window,
                out.display()
            );
        }
        Cmd::Stats { vocab, cooc, out } => {
            let vocab = load_vocab(&vocab)?;
            let cooc = load_cooc(&cooc)?;
            let stats = compute_word_stats(&cooc, &vocab)?;
            save_stats_tsv(&stats, &vocab, &out)?;
            eprintln!("stats: {} words -> {}", stats.len(), out.display());
        }
        Cmd::Train { corpus, out_u, out_v } => {
            let cfg = opts.train_config();
            let (vocab, stream) = load_corpus(&corpus, cfg.min_count)
                .with_context(|| format!("building vocabulary from {}", corpus.display()))?;
            let emb = train(&stream, &vocab, &cfg)?;
            emb.save(&vocab, &out_u, &out_v)?;
            eprintln!(
                "train: {} words, dim {}, {} epochs -> {} / {}",
                vocab.len(),
                cfg.dim,
                cfg.epochs,
                out_u.display(),
                out_v.display()
            );
        }
        Cmd::Moments {
            vocab,
            emb_u,
            emb_v,
            out,
        } => {
            let vocab = load_vocab(&vocab)?;
            let emb = EmbeddingSet::load(&emb_u, &emb_v, &vocab)?;
            let moments = compute_moments(&emb, &vocab)?;
            serde_json::to_writer_pretty(BufWriter::new(File::create(&out)?), &moments)?;
            eprintln!("moments: d={} -> {}", moments.d, out.display());
        }
        Cmd::Whiten {
            vocab,
            emb_u,
            emb_v,
            stats,
            out,
        } => {
            let vocab = load_vocab(&vocab)?;
            let emb = EmbeddingSet::load(&emb_u, &emb_v, &vocab)?;
            let rows = load_stats_tsv(&stats)?;
            if rows.len() != vocab.len()
                || rows
                    .iter()
                    .enumerate()
                    .any(|(i, r)| r.word != vocab.word(i as u32))
            {
                bail!(
                    "{}: statistics do not match the vocabulary",
                    stats.display()
                );
            }
            let kl: Vec<f64> = rows.iter().map(|r| r.kl).collect();
            let moments = compute_moments(&emb, &vocab)?;
            let transform = whitening_transform(&moments, None)?;
            let whitened = whiten(&emb, &transform)?;
            let norm2 = raw_norm2(&emb);
            save_scatter_csv(&out, &vocab, &kl, &norm2, &whitened)?;
            eprintln!("whiten: {} words -> {}", vocab.len(), out.display());
        }
        Cmd::Bias {
            corpus,
            vocab,
            method,
            statistic,
            shuffles,
            bins,
            min_bin,
            pct,
            out,
        } => {
            let vocab = load_vocab(&vocab)?;
            let stream = encode_corpus(&corpus, &vocab)?;
            let kl_stat = kl_statistic(&vocab);
            let entropy_stat = entropy_statistic();
            let stat: &(dyn Fn(&CoocMatrix) -> infogain_core::Result<Vec<Option<f64>>> + Sync) =
                match statistic {
                    BiasStatistic::Kl => &kl_stat,
                    BiasStatistic::Entropy => &entropy_stat,
                };
            let table = match method {
                BiasKind::Shuffle => shuffle_baseline(
                    &stream,
                    &vocab,
                    opts.window,
                    stat,
                    shuffles,
                    derive_seed(opts.seed, "bias"),
                )?,
                BiasKind::Percentile => {
                    let real = count_cooccurrences(&stream, &vocab, opts.window)?;
                    let values = stat(&real)?;
                    percentile_baseline(&values, vocab.counts(), bins, min_bin, pct)?
                }
            };
            save_bias_tsv(&table, &vocab, &out)?;
            let missing = table.baseline.iter().filter(|b| b.is_none()).count();
            if missing > 0 {
                eprintln!("bias: {missing} words have no baseline");
            }
            eprintln!("bias: {:?} -> {}", table.method, out.display());
        }
        Cmd::Fit { scatter, min_n } => {
            let s = load_scatter(&scatter)?;
            let keep = |i: usize| s.n_w[i] > min_n;
            let two_kl: Vec<f64> = s.kl.iter().map(|&v| 2.0 * v).collect();
            let mask = format!("n_w>{min_n}");
            println!("#relationship\tslope\tintercept\tr2\tn\tmask");
            for (name, fit) in [
                ("raw-norm2-vs-kl", fit_linear(&s.kl, &s.norm2, keep)?),
                ("whitened-vs-2kl", fit_linear(&two_kl, &s.whitened, keep)?),
            ] {
                println!(
                    "{name}\t{}",
                    fit_report_line(&fit, &mask).replace(' ', "\t")
                );
            }
        }
        Cmd::EvalKeywords { data, measures } => {
            let docs = load_keyword_jsonl(&data)?;
            let selected: Vec<KeywordMeasure> =
                if measures.is_empty() || measures.iter().any(|m| m == "all") {
                    KeywordMeasure::ALL.to_vec()
                } else {
                    measures
                        .iter()
                        .map(|m| m.parse())
                        .collect::<infogain_core::Result<_>>()?
                };
            let dataset = data
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "dataset".into());
            let mut scores = Vec::new();
            for &m in &selected {
                scores.push(evaluate_keywords(&docs, m, opts.window, opts.seed)?);
            }
            let header: Vec<String> = selected.iter().map(|m| m.to_string()).collect();
            println!("#dataset\tmetric\t{}", header.join("\t"));
            for (metric, pick) in [
                ("mrr", &(|s: &infogain_core::tasks::KeywordScore| s.mrr) as &dyn Fn(_) -> f64),
                ("p@5", &|s: &infogain_core::tasks::KeywordScore| s.p_at_5),
            ] {
                let row: Vec<String> = scores.iter().map(|s| format!("{:.2}", pick(s))).collect();
                println!("{dataset}\t{metric}\t{}", row.join("\t"));
            }
            let first = &scores[0];
            eprintln!(
                "eval-keywords: {} documents scored, {} skipped",
                first.n_docs, first.n_skipped
            );
        }
        Cmd::EvalPos {
            stats,
            scatter,
            statistic,
            direction,
            positive,
            negative,
        } => {
            let scores: HashMap<String, f64> = match statistic {
                PosStatistic::Norm2 | PosStatistic::WhitenedNorm2 => {
                    let path = scatter
                        .as_ref()
                        .context("norm statistics need --scatter")?;
                    let s = load_scatter(path)?;
                    let col = match statistic {
                        PosStatistic::Norm2 => &s.norm2,
                        _ => &s.whitened,
                    };
                    s.words.iter().cloned().zip(col.iter().copied()).collect()
                }
                _ => {
                    let path = stats.as_ref().context("this statistic needs --stats")?;
                    let rows = load_stats_tsv(path)?;
                    rows.iter()
                        .map(|r| {
                            let v = match statistic {
                                PosStatistic::Kl => r.kl,
                                PosStatistic::Entropy => r.entropy,
                                PosStatistic::SelfInfo => r.self_info,
                                PosStatistic::Chi2 => r.chi2,
                                PosStatistic::G2 => r.g2,
                                PosStatistic::Kl0 => r.kl0,
                                PosStatistic::NW => r.n_w as f64,
                                _ => unreachable!(),
                            };
                            (r.word.clone(), v)
                        })
                        .collect()
                }
            };
            let collect = |path: &Path| -> Result<(Vec<f64>, usize)> {
                let words = load_word_list(path)?;
                let mut vals = Vec::new();
                let mut missing = 0usize;
                for w in &words {
                    match scores.get(w) {
                        Some(&v) => vals.push(v),
                        None => missing += 1,
                    }
                }
                Ok((vals, missing))
            };
            let (pos, miss_pos) = collect(&positive)?;
            let (neg, miss_neg) = collect(&negative)?;
            let auc = roc_auc(&pos, &neg, direction == Direction::Higher)?;
            println!("#statistic\tdirection\tauc\tn_pos\tn_neg\tmissing_pos\tmissing_neg");
            println!(
                "{}\t{}\t{:.2}\t{}\t{}\t{}\t{}",
                match statistic {
                    PosStatistic::Kl => "kl",
                    PosStatistic::Entropy => "entropy",
                    PosStatistic::SelfInfo => "self-info",
                    PosStatistic::Chi2 => "chi2",
                    PosStatistic::G2 => "g2",
                    PosStatistic::Kl0 => "kl0",
                    PosStatistic::NW => "n-w",
                    PosStatistic::Norm2 => "norm2",
                    PosStatistic::WhitenedNorm2 => "whitened-norm2",
                },
                match direction {
                    Direction::Higher => "higher",
                    Direction::Lower => "lower",
                },
                100.0 * auc,
                pos.len(),
                neg.len(),
                miss_pos,
                miss_neg
            );
        }
        Cmd::EvalHypernym {
            vocab,
            cooc,
            data,
            methods,
            context_size,
            scatter,
            bias_kl,
            bias_entropy,
            bias_norm2,
            corpus,
            delta_shuffles,
        } => {
            let vocab = load_vocab(&vocab)?;
            let cooc = load_cooc(&cooc)?;
            let pairs = load_hypernym_tsv(&data)?;
            let entropy = entropy_statistic()(&cooc)?;
            let kl = kl_statistic(&vocab)(&cooc)?;

            // Whitened squared norms aligned to vocabulary ids.
            let norm2: Option<Vec<Option<f64>>> = match &scatter {
                None => None,
                Some(path) => {
                    let s = load_scatter(path)?;
                    let mut by_id = vec![None; vocab.len()];
                    for (w, &v) in s.words.iter().zip(&s.whitened) {
                        if let Some(id) = vocab.id(w) {
                            by_id[id as usize] = Some(v);
                        }
                    }
                    Some(by_id)
                }
            };
            let correct = |values: &[Option<f64>], path: &Option<PathBuf>| -> Result<Option<Vec<Option<f64>>>> {
                match path {
                    None => Ok(None),
                    Some(p) => {
                        let table = load_bias_tsv(p, &vocab)?;
                        Ok(Some(table.correct(values)?))
                    }
                }
            };
            let delta_kl = correct(&kl, &bias_kl)?;
            let delta_entropy = correct(&entropy, &bias_entropy)?;
            let delta_norm2 = match (&norm2, &bias_norm2) {
                (Some(n), Some(_)) => correct(n, &bias_norm2)?,
                (None, Some(_)) => bail!("--bias-norm2 needs --scatter for the raw norms"),
                _ => None,
            };

            let mut ctx = HypernymContext::new(&vocab, &cooc, &entropy, &kl);
            ctx.context_size = context_size;
            ctx.norm2 = norm2.as_deref();
            ctx.delta_kl = delta_kl.as_deref();
            ctx.delta_entropy = delta_entropy.as_deref();
            ctx.delta_norm2 = delta_norm2.as_deref();

            let available = |m: HypernymMethod| match m {
                HypernymMethod::Norm2 => ctx.norm2.is_some(),
                HypernymMethod::DeltaKl => ctx.delta_kl.is_some(),
                HypernymMethod::DeltaSlqsRow | HypernymMethod::DeltaSlqs => {
                    ctx.delta_entropy.is_some()
                }
                HypernymMethod::DeltaNorm2 => ctx.delta_norm2.is_some(),
                HypernymMethod::DeltaWeedsPrec => corpus.is_some(),
                _ => true,
            };
            let selected: Vec<HypernymMethod> = if methods.iter().any(|m| m == "all") {
                let (kept, dropped): (Vec<_>, Vec<_>) =
                    HypernymMethod::ALL.into_iter().partition(|&m| available(m));
                for m in dropped {
                    eprintln!("eval-hypernym: skipping {m} (inputs not provided)");
                }
                kept
            } else {
                methods
                    .iter()
                    .map(|m| m.parse())
                    .collect::<infogain_core::Result<_>>()?
            };

            let wp_baselines: Option<Vec<(f64, f64)>> = if selected
                .contains(&HypernymMethod::DeltaWeedsPrec)
            {
                let corpus = corpus
                    .as_ref()
                    .context("delta-weedsprec needs --corpus for shuffled baselines")?;
                let stream = encode_corpus(corpus, &vocab)?;
                eprintln!(
                    "eval-hypernym: computing {delta_shuffles} shuffled baselines for delta-weedsprec"
                );
                Some(weedsprec_baselines(
                    &stream,
                    &vocab,
                    &pairs,
                    opts.window,
                    delta_shuffles,
                    derive_seed(opts.seed, "weedsprec-baseline"),
                )?)
            } else {
                None
            };

            println!(
                "#method\tacc_hyper_frequent\tacc_hypo_frequent\taverage\t\
                 n_hyper_frequent\tn_hypo_frequent\tn_equal\tn_skipped\tn_unresolved"
            );
            for &m in &selected {
                let baselines = (m == HypernymMethod::DeltaWeedsPrec)
                    .then_some(wp_baselines.as_deref())
                    .flatten();
                let score: HypernymScore =
                    evaluate_hypernym(&ctx, &pairs, m, opts.seed, baselines)?;
                println!(
                    "{m}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                    fmt_pct(score.acc_hyper_frequent),
                    fmt_pct(score.acc_hypo_frequent),
                    fmt_pct(score.average()),
                    score.n_hyper_frequent,
                    score.n_hypo_frequent,
                    score.n_equal,
                    score.n_skipped,
                    score.n_unresolved
                );
            }
        }
        Cmd::Report {
            corpus,
            workdir,
            figure,
            u0_mode,
            fit_min_n,
            table_min_n,
            u0_top_k,
            list_k,
        } => {
            let mode: U0Mode = u0_mode.parse()?;
            let cfg = PipelineConfig {
                fit_mask_min_n: fit_min_n,
                table_min_n,
                u0_top_k,
                list_k,
                ..opts.pipeline_config()
            };
            let report = match figure {
                Figure::Fig1 => pipeline::run_fig1(&corpus, &workdir, &cfg)?,
                Figure::Fig23 => pipeline::run_fig23(&corpus, &workdir, &cfg, mode)?,
                Figure::All => pipeline::run_all(&corpus, &workdir, &cfg)?,
            };
            print_report(&report, figure, mode, fit_min_n);
            eprintln!(
                "report: artifacts in {}, summary in {}",
                workdir.display(),
                workdir.join(pipeline::REPORT_FILE).display()
            );
        }
    }
    Ok(())
}

fn print_report(report: &PipelineReport, figure: Figure, mode: U0Mode, fit_min_n: u64) {
    println!("#stage\tcached\tseconds\toutput");
    for s in &report.stages {
        println!(
            "{}\t{}\t{:.3}\t{}",
            s.stage,
            if s.cached { "yes" } else { "no" },
            s.seconds,
            s.output_hash
        );
    }
    let mask = format!("n_w>{fit_min_n}");
    let mut fits: Vec<(&str, &infogain_core::RegressionFit)> = Vec::new();
    let want_raw = figure != Figure::Fig23;
    let want_quad = figure != Figure::Fig1;
    if want_raw {
        if let Some(f) = &report.fit_raw {
            fits.push(("raw-norm2-vs-kl", f));
        }
    }
    if want_quad {
        if let Some(f) = &report.fit_quadratic_topk {
            if figure == Figure::All || mode == U0Mode::TopKWords {
                fits.push(("quadratic-topk-vs-2kl", f));
            }
        }
        if let Some(f) = &report.fit_whitened {
            if figure == Figure::All || mode == U0Mode::WeightedMean {
                fits.push(("whitened-vs-2kl", f));
            }
        }
    }
    println!("#relationship\tslope\tintercept\tr2\tn\tmask");
    for (name, f) in fits {
        println!(
            "{name}\t{}\t{}\t{}\t{}\t{mask}",
            g6(f.slope),
            g6(f.intercept),
            g6(f.r_squared),
            f.n_points
        );
    }
    if figure == Figure::All && !report.top_words.is_empty() {
        println!("#direction\trank\tword\tn_w\tkl");
        for (direction, list) in [("top", &report.top_words), ("bottom", &report.bottom_words)] {
            for (i, e) in list.iter().enumerate() {
                println!("{direction}\t{}\t{}\t{}\t{}", i + 1, e.word, e.n_w, g6(e.kl));
            }
        }
    }
}
