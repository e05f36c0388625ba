//! End-to-end exercises of the `cqa` binary: the full pipeline from a raw
//! timestamped dump through split, generation, classification, training,
//! answering, evaluation, and reporting, plus the exit-code and determinism
//! contracts that downstream automation relies on.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BIN: &str = env!("CARGO_BIN_EXE_cqa");

/// Runs the binary in `dir` and panics if it exits non-zero.
fn run_ok(dir: &Path, args: &[&str]) -> Output {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "cqa {} failed:\n{}",
        args.join(" "),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawning cqa")
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

/// Writes a dense random knowledge-graph dump with hourly timestamps and a
/// tail of duplicated facts carrying later timestamps.
fn write_toy_dump(path: &Path) {
    let mut rng = ChaCha8Rng::seed_from_u64(900);
    let (entities, relations) = (60u32, 6u32);
    let mut seen = BTreeSet::new();
    let mut lines = Vec::new();
    let mut hour = 0u64;
    let stamp = |hour: u64| {
        let (day, h) = (hour / 24, hour % 24);
        format!("2020-{:02}-{:02}T{:02}:00:00", 1 + day / 28, 1 + day % 28, h)
    };
    while seen.len() < 900 {
        let s = rng.gen_range(0..entities);
        let o = rng.gen_range(0..entities);
        let r = rng.gen_range(0..relations);
        if s == o || !seen.insert((s, r, o)) {
            continue;
        }
        hour += 1;
        lines.push(format!("e{s}\trel{r}\te{o}\t{}", stamp(hour)));
    }
    for &(s, r, o) in seen.iter().take(40) {
        hour += 1;
        lines.push(format!("e{s}\trel{r}\te{o}\t{}", stamp(hour)));
    }
    fs::write(path, lines.join("\n") + "\n").expect("writing dump");
}

fn line_count(path: &Path) -> usize {
    fs::read_to_string(path).expect("readable file").lines().count()
}

fn json_lines(path: &Path) -> Vec<serde_json::Value> {
    fs::read_to_string(path)
        .expect("readable file")
        .lines()
        .map(|l| serde_json::from_str(l).expect("valid json line"))
        .collect()
}

#[test]
fn full_pipeline_runs_end_to_end() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let dir = tmp.path();
    write_toy_dump(&dir.join("timed.tsv"));

    // Chronological split: 940 records dedup to 900 facts, cut 80/10/10.
    run_ok(
        dir,
        &["split", "--timestamped", "timed.tsv", "--ratios", "0.8,0.1,0.1", "--out", "split"],
    );
    assert_eq!(line_count(&dir.join("split/train.txt")), 720);
    assert_eq!(line_count(&dir.join("split/valid.txt")), 90);
    assert_eq!(line_count(&dir.join("split/test.txt")), 90);
    assert!(dir.join("split/manifest.json").is_file());

    // Balanced benchmark over three query shapes with non-binding caps.
    run_ok(
        dir,
        &[
            "gen-bench", "--split-dir", "split", "--quota", "4", "--cap", "1.0", "--types",
            "1p,2p,2i", "--seed", "11", "--out-dir", "bench",
        ],
    );
    // 1p feeds only the full-inference bucket; 2p and 2i each add a
    // partial(1p) bucket alongside it.
    let buckets = [
        "1p-full-inference",
        "2p-partial-1p",
        "2p-full-inference",
        "2i-partial-1p",
        "2i-full-inference",
    ];
    for bucket in buckets {
        let records = json_lines(&dir.join(format!("bench/{bucket}.jsonl")));
        let pairs: usize = records
            .iter()
            .map(|r| r["answers"]["hard"].as_array().expect("hard list").len())
            .sum();
        assert_eq!(pairs, 4, "bucket {bucket} should fill its quota");
    }

    // Training queries for the same split.
    run_ok(
        dir,
        &["gen-train", "--split-dir", "split", "--types", "1p", "--seed", "3", "--out-dir", "trainq"],
    );
    assert_eq!(line_count(&dir.join("trainq/train-queries-1p.jsonl")), 720);

    // Re-classifying a full-inference bucket must reproduce its label on
    // every hard pair.
    run_ok(
        dir,
        &[
            "classify", "--split-dir", "split", "--queries", "bench/2p-full-inference.jsonl",
            "--expect", "bench/manifest.json", "--out", "labels.jsonl",
        ],
    );
    let labels = json_lines(&dir.join("labels.jsonl"));
    let hard: Vec<_> = labels.iter().filter(|l| l["role"] == "hard").collect();
    assert!(!hard.is_empty());
    for l in &hard {
        assert_eq!(l["label"], "full-inference", "hard pair {l} must keep its bucket label");
    }

    // The reduction matrix summarizes those labels per query type.
    run_ok(dir, &["stats", "--labels", "labels.jsonl", "--out-dir", "stats"]);
    let matrix = fs::read_to_string(dir.join("stats/matrix.csv")).expect("matrix.csv");
    assert!(matrix.lines().any(|l| l.starts_with("2p,")), "matrix should have a 2p row");

    // A small link predictor is enough for the plumbing to hold together.
    run_ok(
        dir,
        &[
            "train-lp", "--split-dir", "split", "--rank", "8", "--epochs", "5", "--seed", "5",
            "--out", "model.json",
        ],
    );
    assert!(dir.join("model.json").is_file());
    assert!(dir.join("model.json.manifest.json").is_file());

    // Dense rankings (topk 0) over the benchmark bucket.
    run_ok(
        dir,
        &[
            "answer", "--checkpoint", "model.json", "--split-dir", "split", "--queries",
            "bench/2p-full-inference.jsonl", "--beam", "32", "--tnorm", "prod", "--topk", "0",
            "--out", "rank-hybrid.jsonl",
        ],
    );
    let rankings = json_lines(&dir.join("rank-hybrid.jsonl"));
    assert_eq!(rankings.len(), line_count(&dir.join("bench/2p-full-inference.jsonl")));
    for r in &rankings {
        assert_eq!(r["ranking"].as_array().expect("ranking").len(), 60, "rankings must be dense");
    }

    run_ok(
        dir,
        &[
            "evaluate", "--split-dir", "split", "--queries", "bench/2p-full-inference.jsonl",
            "--rankings", "rank-hybrid.jsonl", "--out-dir", "eval-hybrid",
        ],
    );
    let metrics: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("eval-hybrid/metrics.json")).unwrap())
            .expect("metrics.json parses");
    let mrr = metrics["overall"]["mrr"].as_f64().expect("overall mrr");
    assert!(mrr > 0.0 && mrr <= 1.0, "mrr {mrr} out of range");
    assert_eq!(metrics["skipped"], 0);
    for name in ["stratified.txt", "stratified.csv", "table.csv", "table.txt", "cardinality.csv", "ranks.jsonl"] {
        assert!(dir.join("eval-hybrid").join(name).is_file(), "missing {name}");
    }

    // A second configuration gives the report something to compare.
    run_ok(
        dir,
        &[
            "answer", "--checkpoint", "model.json", "--split-dir", "split", "--queries",
            "bench/2p-full-inference.jsonl", "--beam", "32", "--hybrid", "off", "--topk", "0",
            "--out", "rank-plain.jsonl",
        ],
    );
    run_ok(
        dir,
        &[
            "evaluate", "--split-dir", "split", "--queries", "bench/2p-full-inference.jsonl",
            "--rankings", "rank-plain.jsonl", "--out-dir", "eval-plain",
        ],
    );
    run_ok(
        dir,
        &["report", "--eval-dir", "eval-hybrid", "--eval-dir", "eval-plain", "--out-dir", "cmp"],
    );
    let sig = fs::read_to_string(dir.join("cmp/significance.csv")).expect("significance.csv");
    let mut sig_lines = sig.lines();
    assert_eq!(
        sig_lines.next(),
        Some("run_a,run_b,pairs_a,pairs_b,u,p,exact,zero_variance")
    );
    let row = sig_lines.next().expect("one comparison row");
    assert!(row.starts_with("eval-hybrid,eval-plain,"), "unexpected row {row}");
    assert_eq!(sig_lines.next(), None, "exactly one pair of runs");
    let comparison = fs::read_to_string(dir.join("cmp/comparison.csv")).expect("comparison.csv");
    assert!(comparison.lines().any(|l| l.starts_with("overall,")));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let dir = tmp.path();
    write_toy_dump(&dir.join("timed.tsv"));
    run_ok(dir, &["split", "--timestamped", "timed.tsv", "--out", "split"]);

    let gen = |out: &str| {
        run_ok(
            dir,
            &[
                "gen-bench", "--split-dir", "split", "--quota", "3", "--cap", "1.0", "--types",
                "1p,2i", "--seed", "7", "--out-dir", out,
            ],
        );
    };
    gen("bench-a");
    gen("bench-b");
    let mut names: Vec<_> = fs::read_dir(dir.join("bench-a"))
        .expect("bench-a")
        .map(|e| e.expect("entry").file_name())
        .collect();
    names.sort();
    assert!(names.len() > 1, "benchmark should produce several files");
    for name in &names {
        let a = fs::read(dir.join("bench-a").join(name)).expect("file a");
        let b = fs::read(dir.join("bench-b").join(name)).expect("file b");
        assert_eq!(a, b, "{name:?} differs between identical runs");
    }

    run_ok(
        dir,
        &["train-lp", "--split-dir", "split", "--rank", "8", "--epochs", "3", "--out", "model.json"],
    );
    let answer = |out: &str| {
        run_ok(
            dir,
            &[
                "answer", "--checkpoint", "model.json", "--split-dir", "split", "--queries",
                "bench-a/2i-full-inference.jsonl", "--topk", "0", "--out", out,
            ],
        );
    };
    answer("rank-a.jsonl");
    answer("rank-b.jsonl");
    assert_eq!(
        fs::read(dir.join("rank-a.jsonl")).unwrap(),
        fs::read(dir.join("rank-b.jsonl")).unwrap(),
        "rankings differ between identical runs"
    );
}

#[test]
fn exit_codes_follow_contract() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let dir = tmp.path();

    // Missing required flags are a usage error.
    assert_eq!(exit_code(&run(dir, &["split"])), 1);

    // As is an invalid thread count.
    assert_eq!(
        exit_code(&run(dir, &["--threads", "0", "split", "--timestamped", "x", "--out", "y"])),
        1
    );

    // A config file with unknown keys is rejected before any work happens.
    fs::write(dir.join("bad.toml"), "[gen]\nquotaz = 3\n").unwrap();
    assert_eq!(
        exit_code(&run(
            dir,
            &["--config", "bad.toml", "gen-bench", "--split-dir", "split", "--out-dir", "x"],
        )),
        1
    );

    // Unreadable or malformed inputs are data errors.
    assert_eq!(
        exit_code(&run(dir, &["split", "--timestamped", "absent.tsv", "--out", "out"])),
        2
    );
    fs::write(dir.join("garbled.tsv"), "just one field\n").unwrap();
    assert_eq!(
        exit_code(&run(dir, &["split", "--timestamped", "garbled.tsv", "--out", "out"])),
        2
    );

    // Malformed query files are flagged with their line number.
    write_toy_dump(&dir.join("timed.tsv"));
    run_ok(dir, &["split", "--timestamped", "timed.tsv", "--out", "split"]);
    fs::write(dir.join("broken.jsonl"), "{\"not\": \"a query\"}\n").unwrap();
    let out = run(
        dir,
        &["classify", "--split-dir", "split", "--queries", "broken.jsonl", "--out", "l.jsonl"],
    );
    assert_eq!(exit_code(&out), 2);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("broken.jsonl"), "stderr should name the file: {stderr}");
}

#[test]
fn manifest_expectation_catches_drift() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let dir = tmp.path();
    write_toy_dump(&dir.join("timed.tsv"));
    run_ok(dir, &["split", "--timestamped", "timed.tsv", "--out", "split"]);
    run_ok(
        dir,
        &[
            "gen-bench", "--split-dir", "split", "--quota", "3", "--cap", "1.0", "--types", "1p",
            "--seed", "7", "--out-dir", "bench",
        ],
    );

    // The stamped manifest matches its own outputs.
    run_ok(
        dir,
        &[
            "classify", "--split-dir", "split", "--queries", "bench/1p-full-inference.jsonl",
            "--expect", "bench/manifest.json", "--out", "labels.jsonl",
        ],
    );

    // Editing a produced file afterwards breaks the expectation.
    let bucket = dir.join("bench/1p-full-inference.jsonl");
    let mut text = fs::read_to_string(&bucket).unwrap();
    text.push('\n');
    fs::write(&bucket, text).unwrap();
    let out = run(
        dir,
        &[
            "classify", "--split-dir", "split", "--queries", "bench/1p-full-inference.jsonl",
            "--expect", "bench/manifest.json", "--out", "labels2.jsonl",
        ],
    );
    assert_eq!(exit_code(&out), 2, "stale input must be a data error");
}
