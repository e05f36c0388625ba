//! `cqa gen-train` / `cqa gen-bench` — query sampling.

use std::path::PathBuf;

use clap::Args;
use serde_json::json;

use cqa_core::generator::{
    bucket_slug, generate_balanced, generate_training_queries, GenerationConfig,
};
use cqa_core::query::serialize_query;

use crate::config::{resolve_types, GenSection, PipelineConfig};
use crate::failure::{data, Failure};
use crate::manifest::Manifest;

#[derive(Args)]
pub struct GenTrainArgs {
    /// Split directory (train.txt / valid.txt / test.txt).
    #[arg(long, value_name = "DIR")]
    split_dir: PathBuf,

    #[arg(long, value_name = "N")]
    seed: Option<u64>,

    /// Comma-separated query type tags, or "all".
    #[arg(long, value_name = "LIST")]
    types: Option<String>,

    /// Sampling attempts per query type before giving up.
    #[arg(long, value_name = "N")]
    max_attempts: Option<usize>,

    /// Output directory: one train-queries-<type>.jsonl per type.
    #[arg(long, value_name = "DIR")]
    out_dir: PathBuf,

    /// Producer manifest to verify input fingerprints against.
    #[arg(long, value_name = "FILE")]
    expect: Option<PathBuf>,
}

#[derive(Args)]
pub struct GenBenchArgs {
    /// Split directory (train.txt / valid.txt / test.txt).
    #[arg(long, value_name = "DIR")]
    split_dir: PathBuf,

    /// Query/answer pairs per (type, hardness bucket).
    #[arg(long, value_name = "N")]
    quota: Option<usize>,

    /// Anchor and relation reuse cap as a fraction of the quota.
    #[arg(long, value_name = "F")]
    cap: Option<f64>,

    /// Anchor cap override.
    #[arg(long, value_name = "F")]
    anchor_cap: Option<f64>,

    /// Relation cap override.
    #[arg(long, value_name = "F")]
    relation_cap: Option<f64>,

    #[arg(long, value_name = "N")]
    seed: Option<u64>,

    /// Comma-separated query type tags, or "all".
    #[arg(long, value_name = "LIST")]
    types: Option<String>,

    /// Sampling attempts per query type before reporting shortfalls.
    #[arg(long, value_name = "N")]
    max_attempts: Option<usize>,

    /// Output directory: one <type>-<bucket>.jsonl per bucket.
    #[arg(long, value_name = "DIR")]
    out_dir: PathBuf,

    /// Producer manifest to verify input fingerprints against.
    #[arg(long, value_name = "FILE")]
    expect: Option<PathBuf>,
}

struct ResolvedGen {
    config: GenerationConfig,
    json: serde_json::Value,
}

#[allow(clippy::too_many_arguments)]
fn resolve_gen(
    section: &GenSection,
    quota: Option<usize>,
    cap: Option<f64>,
    anchor_cap: Option<f64>,
    relation_cap: Option<f64>,
    seed: Option<u64>,
    types: Option<&str>,
    max_attempts: Option<usize>,
) -> Result<ResolvedGen, Failure> {
    let defaults = GenerationConfig::default();
    let shared_cap = cap.or(section.cap);
    let config = GenerationConfig {
        quota_per_bucket: quota.or(section.quota).unwrap_or(defaults.quota_per_bucket),
        anchor_cap_fraction: anchor_cap
            .or(section.anchor_cap)
            .or(shared_cap)
            .unwrap_or(defaults.anchor_cap_fraction),
        relation_cap_fraction: relation_cap
            .or(section.relation_cap)
            .or(shared_cap)
            .unwrap_or(defaults.relation_cap_fraction),
        seed: seed.or(section.seed).unwrap_or(defaults.seed),
        types: resolve_types(types, section.types.as_ref())?,
        max_attempts: max_attempts.or(section.max_attempts).unwrap_or(defaults.max_attempts),
    };
    config.validate().map_err(data)?;
    let json = json!({
        "quota": config.quota_per_bucket,
        "anchor_cap": config.anchor_cap_fraction,
        "relation_cap": config.relation_cap_fraction,
        "seed": config.seed,
        "types": config.types.iter().map(|t| t.tag()).collect::<Vec<_>>(),
        "max_attempts": config.max_attempts,
    });
    Ok(ResolvedGen { config, json })
}

fn render_records(records: &[cqa_core::query::QueryRecord]) -> Vec<u8> {
    let mut buf = Vec::new();
    for record in records {
        buf.extend_from_slice(serialize_query(record).as_bytes());
        buf.push(b'\n');
    }
    buf
}

pub fn run_train(args: GenTrainArgs, cfg: &PipelineConfig) -> Result<(), Failure> {
    let resolved = resolve_gen(
        &cfg.gen,
        None,
        None,
        None,
        None,
        args.seed,
        args.types.as_deref(),
        args.max_attempts,
    )?;
    let split = super::load_augmented_split(&args.split_dir)?;

    let mut manifest = Manifest::new("gen-train", resolved.json);
    manifest.add_split_inputs(&args.split_dir)?;
    manifest.check_expectation(args.expect.as_ref())?;

    let per_type = generate_training_queries(&split, &resolved.config).map_err(data)?;
    let mut counts = serde_json::Map::new();
    for (qt, records) in &per_type {
        let name = format!("train-queries-{}.jsonl", qt.tag());
        manifest.write_output(&args.out_dir.join(&name), &render_records(records))?;
        counts.insert(qt.tag().to_owned(), json!(records.len()));
        eprintln!("{}: {} training queries", qt.tag(), records.len());
    }
    manifest.note("queries_per_type", serde_json::Value::Object(counts));
    manifest.save_in_dir(&args.out_dir)?;
    eprintln!("wrote training queries to {}", args.out_dir.display());
    Ok(())
}

pub fn run_bench(args: GenBenchArgs, cfg: &PipelineConfig) -> Result<(), Failure> {
    let resolved = resolve_gen(
        &cfg.gen,
        args.quota,
        args.cap,
        args.anchor_cap,
        args.relation_cap,
        args.seed,
        args.types.as_deref(),
        args.max_attempts,
    )?;
    let split = super::load_augmented_split(&args.split_dir)?;

    let mut manifest = Manifest::new("gen-bench", resolved.json);
    manifest.add_split_inputs(&args.split_dir)?;
    manifest.check_expectation(args.expect.as_ref())?;

    let benchmark = generate_balanced(&split, &resolved.config).map_err(data)?;
    let mut counts = serde_json::Map::new();
    for ((qt, label), records) in &benchmark.buckets {
        let name = format!("{}-{}.jsonl", qt.tag(), bucket_slug(label));
        let pairs: usize = records.iter().map(|r| r.hard.len()).sum();
        manifest.write_output(&args.out_dir.join(&name), &render_records(records))?;
        counts.insert(
            format!("{qt}/{label}"),
            json!({ "queries": records.len(), "pairs": pairs }),
        );
        eprintln!("{qt}/{label}: {} queries, {pairs} pairs", records.len());
    }
    for s in &benchmark.shortfalls {
        eprintln!(
            "warning: {}/{} filled {}/{} pairs before attempts ran out",
            s.query_type, s.bucket, s.filled, s.quota
        );
    }
    let shortfalls: Vec<serde_json::Value> = benchmark
        .shortfalls
        .iter()
        .map(|s| {
            json!({
                "type": s.query_type.tag(),
                "bucket": s.bucket.to_string(),
                "filled": s.filled,
                "quota": s.quota,
            })
        })
        .collect();
    manifest.note("buckets", serde_json::Value::Object(counts));
    manifest.note("shortfalls", json!(shortfalls));
    manifest.note("split_fingerprint", json!(benchmark.split_fingerprint));
    manifest.save_in_dir(&args.out_dir)?;
    eprintln!("wrote benchmark to {}", args.out_dir.display());
    Ok(())
}
