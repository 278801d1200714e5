//! End-to-end exercises of the `infogain` binary: artifact subcommands
//! chained into a full pipeline, the evaluation subcommands on small
//! datasets, and the cached `report` runner.

use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use infogain_core::fixtures::{gen_topic_corpus, TopicCorpusSpec};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_infogain"))
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("spawn infogain");
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stdout_lines(out: &Output) -> Vec<String> {
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .map(str::to_string)
        .collect()
}

/// A small topical corpus written as plain text.
fn write_corpus(dir: &Path) -> PathBuf {
    let spec = TopicCorpusSpec {
        vocab_size: 120,
        n_topics: 4,
        n_tokens: 20_000,
        zipf_exponent: 1.0,
        n_stopwords: 6,
        segment_len: 100,
        seed: 5,
    };
    let corpus = gen_topic_corpus(&spec).unwrap();
    let path = dir.join("corpus.txt");
    corpus.write_text(File::create(&path).unwrap()).unwrap();
    path
}

/// vocab → cooc → stats on the shared corpus, returning the file paths.
fn build_stats(dir: &Path, corpus: &Path, window: &str) -> (PathBuf, PathBuf, PathBuf) {
    let vocab = dir.join("vocab.tsv");
    let cooc = dir.join("cooc.tsv");
    let stats = dir.join("stats.tsv");
    run_ok(bin()
        .args(["vocab", "--corpus"])
        .arg(corpus)
        .arg("--out")
        .arg(&vocab));
    run_ok(bin()
        .args(["cooc", "--window", window, "--corpus"])
        .arg(corpus)
        .arg("--vocab")
        .arg(&vocab)
        .arg("--out")
        .arg(&cooc));
    run_ok(bin()
        .args(["stats", "--vocab"])
        .arg(&vocab)
        .arg("--cooc")
        .arg(&cooc)
        .arg("--out")
        .arg(&stats));
    (vocab, cooc, stats)
}

#[test]
fn artifact_subcommands_chain_into_fits() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = write_corpus(tmp.path());
    let (vocab, _cooc, stats) = build_stats(tmp.path(), &corpus, "3");

    let (u, v) = (tmp.path().join("emb.u.vec"), tmp.path().join("emb.v.vec"));
    run_ok(bin()
        .args([
            "train",
            "--dim",
            "10",
            "--epochs",
            "2",
            "--window",
            "3",
            "--negatives",
            "3",
            "--deterministic",
            "--corpus",
        ])
        .arg(&corpus)
        .arg("--out-u")
        .arg(&u)
        .arg("--out-v")
        .arg(&v));

    let moments = tmp.path().join("moments.json");
    run_ok(bin()
        .args(["moments", "--vocab"])
        .arg(&vocab)
        .arg("--emb-u")
        .arg(&u)
        .arg("--emb-v")
        .arg(&v)
        .arg("--out")
        .arg(&moments));
    let parsed: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&moments).unwrap()).unwrap();
    assert_eq!(parsed["d"], 10);

    let scatter = tmp.path().join("scatter.csv");
    run_ok(bin()
        .args(["whiten", "--vocab"])
        .arg(&vocab)
        .arg("--emb-u")
        .arg(&u)
        .arg("--emb-v")
        .arg(&v)
        .arg("--stats")
        .arg(&stats)
        .arg("--out")
        .arg(&scatter));
    let first_line = fs::read_to_string(&scatter).unwrap();
    assert!(first_line.starts_with("word,n_w,kl,norm2,whitened_norm2"));

    let out = run_ok(bin()
        .args(["fit", "--min-n", "20", "--scatter"])
        .arg(&scatter));
    let lines = stdout_lines(&out);
    assert_eq!(lines[0], "#relationship\tslope\tintercept\tr2\tn\tmask");
    assert_eq!(lines.len(), 3);
    for line in &lines[1..] {
        let fields: Vec<&str> = line.split('\t').collect();
        assert_eq!(fields.len(), 6);
        assert!(fields[1].parse::<f64>().unwrap().is_finite());
        assert!(fields[5].starts_with("n_w>"));
    }
}

#[test]
fn bias_tables_are_written_by_both_methods() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = write_corpus(tmp.path());
    let (vocab, _, _) = build_stats(tmp.path(), &corpus, "3");

    for (method, out_name, extra) in [
        ("shuffle", "bias_shuffle.tsv", vec!["--shuffles", "2"]),
        ("percentile", "bias_pct.tsv", vec!["--bins", "20", "--min-bin", "10"]),
    ] {
        let out = tmp.path().join(out_name);
        run_ok(bin()
            .args(["bias", "--window", "3", "--method", method])
            .args(extra)
            .arg("--corpus")
            .arg(&corpus)
            .arg("--vocab")
            .arg(&vocab)
            .arg("--out")
            .arg(&out));
        let text = fs::read_to_string(&out).unwrap();
        assert!(text.lines().count() > 100, "{method} table too short");
    }
}

#[test]
fn eval_keywords_prints_one_column_per_measure() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("kw.jsonl");
    let docs = [
        serde_json::json!({
            "id": "d1",
            "text": "the cat sat on the mat while the dog barked at the cat",
            "keywords": ["cat", "dog"],
        }),
        serde_json::json!({
            "id": "d2",
            "text": "stars and planets orbit in the galaxy where stars shine",
            "keywords": ["stars", "galaxy", "missing phrase"],
        }),
    ];
    let body: String = docs.iter().map(|d| format!("{d}\n")).collect();
    fs::write(&data, body).unwrap();

    let out = run_ok(bin()
        .args([
            "eval-keywords",
            "--window",
            "2",
            "--measures",
            "count,count-kl",
            "--data",
        ])
        .arg(&data));
    let lines = stdout_lines(&out);
    assert_eq!(lines[0], "#dataset\tmetric\tcount\tcount-kl");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("kw\tmrr\t"));
    assert!(lines[2].starts_with("kw\tp@5\t"));
    for line in &lines[1..] {
        for v in line.split('\t').skip(2) {
            let v: f64 = v.parse().unwrap();
            assert!((0.0..=500.0).contains(&v));
        }
    }
}

#[test]
fn eval_pos_separates_extreme_kl_words_perfectly() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = write_corpus(tmp.path());
    let (_, _, stats) = build_stats(tmp.path(), &corpus, "3");

    // Pick the two highest- and two lowest-KL words straight from the
    // emitted table; a perfect split must score AUC 100.
    let text = fs::read_to_string(&stats).unwrap();
    let mut rows: Vec<(String, f64)> = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            (f[0].to_string(), f[2].parse::<f64>().unwrap())
        })
        .collect();
    rows.sort_by(|a, b| a.1.total_cmp(&b.1));
    let lows: Vec<String> = rows[..2].iter().map(|r| r.0.clone()).collect();
    let highs: Vec<String> = rows[rows.len() - 2..].iter().map(|r| r.0.clone()).collect();
    let pos = tmp.path().join("pos.txt");
    let neg = tmp.path().join("neg.txt");
    fs::write(&pos, highs.join("\n")).unwrap();
    fs::write(&neg, format!("{}\nnot-a-word\n", lows.join("\n"))).unwrap();

    let out = run_ok(bin()
        .args(["eval-pos", "--statistic", "kl", "--direction", "higher", "--stats"])
        .arg(&stats)
        .arg("--positive")
        .arg(&pos)
        .arg("--negative")
        .arg(&neg));
    let lines = stdout_lines(&out);
    let fields: Vec<&str> = lines[1].split('\t').collect();
    assert_eq!(fields[0], "kl");
    assert_eq!(fields[2], "100.00");
    assert_eq!(fields[4], "2"); // the fake negative word was dropped
    assert_eq!(fields[6], "1");
}

#[test]
fn eval_hypernym_frequency_method_is_exact_on_both_parts() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = write_corpus(tmp.path());
    let (vocab, cooc, _) = build_stats(tmp.path(), &corpus, "3");

    // Word ids are ordered by frequency, so pseudo-word ranks give us
    // guaranteed count relations: w0 is the most frequent.
    let vocab_text = fs::read_to_string(&vocab).unwrap();
    let words: Vec<&str> = vocab_text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.is_empty())
        .map(|l| l.split('\t').next().unwrap())
        .collect();
    let pairs = tmp.path().join("pairs.tsv");
    // hypo <TAB> hyper; first two have the hypernym more frequent.
    let body = format!(
        "{}\t{}\n{}\t{}\n{}\t{}\n",
        words[10], words[0], words[11], words[1], words[2], words[12],
    );
    fs::write(&pairs, body).unwrap();

    let out = run_ok(bin()
        .args(["eval-hypernym", "--methods", "frequency,random,kl", "--vocab"])
        .arg(&vocab)
        .arg("--cooc")
        .arg(&cooc)
        .arg("--data")
        .arg(&pairs));
    let lines = stdout_lines(&out);
    assert!(lines[0].starts_with("#method\tacc_hyper_frequent"));
    let freq: Vec<&str> = lines[1].split('\t').collect();
    assert_eq!(freq[0], "frequency");
    assert_eq!(freq[1], "100.00");
    assert_eq!(freq[2], "0.00");
    assert_eq!(freq[3], "50.00");
    assert_eq!(lines.len(), 4);
}

#[test]
fn eval_hypernym_all_skips_methods_without_inputs() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = write_corpus(tmp.path());
    let (vocab, cooc, _) = build_stats(tmp.path(), &corpus, "3");
    let vocab_text = fs::read_to_string(&vocab).unwrap();
    let w: Vec<&str> = vocab_text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.is_empty())
        .map(|l| l.split('\t').next().unwrap())
        .collect();
    let pairs = tmp.path().join("pairs.tsv");
    fs::write(&pairs, format!("{}\t{}\n", w[5], w[0])).unwrap();

    let out = run_ok(bin()
        .args(["eval-hypernym", "--vocab"])
        .arg(&vocab)
        .arg("--cooc")
        .arg(&cooc)
        .arg("--data")
        .arg(&pairs));
    let stderr = String::from_utf8_lossy(&out.stderr);
    for m in ["norm2", "delta-kl", "delta-slqs", "delta-weedsprec"] {
        assert!(stderr.contains(&format!("skipping {m}")), "missing note for {m}");
    }
    let lines = stdout_lines(&out);
    // Methods with no extra inputs: random, frequency, weedsprec,
    // slqs-row, slqs, kl.
    assert_eq!(lines.len(), 1 + 6);
}

#[test]
fn report_second_run_serves_every_stage_from_cache() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = write_corpus(tmp.path());
    let work = tmp.path().join("work");
    let args = |cmd: &mut Command| {
        cmd.args([
            "report",
            "--window",
            "3",
            "--dim",
            "10",
            "--epochs",
            "2",
            "--negatives",
            "3",
            "--deterministic",
            "--fit-min-n",
            "20",
            "--table-min-n",
            "5",
            "--list-k",
            "5",
            "--corpus",
        ])
        .arg(&corpus)
        .arg("--workdir")
        .arg(&work);
    };

    let mut first = bin();
    args(&mut first);
    let out1 = run_ok(&mut first);
    let mut second = bin();
    args(&mut second);
    let out2 = run_ok(&mut second);

    let cached = |out: &Output, want: &str| {
        stdout_lines(out)
            .iter()
            .skip(1)
            .take_while(|l| !l.starts_with('#'))
            .all(|l| l.split('\t').nth(1) == Some(want))
    };
    assert!(cached(&out1, "no"), "first run must compute every stage");
    assert!(cached(&out2, "yes"), "second run must reuse every stage");

    let lines = stdout_lines(&out2);
    assert!(lines.iter().any(|l| l.starts_with("raw-norm2-vs-kl\t")));
    assert!(lines.iter().any(|l| l.starts_with("whitened-vs-2kl\t")));
    assert!(lines.iter().any(|l| l.starts_with("top\t1\t")));
    assert!(work.join("report.json").exists());
}
