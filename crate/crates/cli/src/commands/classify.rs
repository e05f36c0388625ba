//! `cqa classify` / `cqa stats` — hardness labels and their summaries.

use std::path::PathBuf;
use std::str::FromStr;

use clap::Args;
use serde::Deserialize;
use serde_json::json;

use cqa_core::eval::imbalance_report;
use cqa_core::hardness::{classify_with, ClassifyConfig, HardnessLabel, ReductionMatrix};
use cqa_core::query::{QaPair, QueryType};

use crate::config::{parse_switch, PipelineConfig};
use crate::failure::{data_msg, FailCtx, Failure};
use crate::manifest::Manifest;

#[derive(Args)]
pub struct ClassifyArgs {
    /// Split directory the pairs are judged against.
    #[arg(long, value_name = "DIR")]
    split_dir: PathBuf,

    /// JSON-lines query file with easy/hard answer sets.
    #[arg(long, value_name = "FILE")]
    queries: PathBuf,

    /// Drop union pairs that rely on links absent from the full graph.
    #[arg(long, value_name = "on|off", value_parser = parse_switch)]
    union_filter: Option<bool>,

    /// Output label file (JSON lines).
    #[arg(long, value_name = "FILE")]
    out: PathBuf,

    /// Producer manifest to verify input fingerprints against.
    #[arg(long, value_name = "FILE")]
    expect: Option<PathBuf>,
}

/// One classified pair, as written to (and read back from) label files.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LabelLine {
    #[allow(dead_code)]
    index: usize,
    #[serde(rename = "type")]
    type_tag: String,
    #[allow(dead_code)]
    answer: u32,
    #[allow(dead_code)]
    role: String,
    label: String,
}

pub fn run_classify(args: ClassifyArgs, cfg: &PipelineConfig) -> Result<(), Failure> {
    let union_filter = args.union_filter.or(cfg.classify.union_filter).unwrap_or(true);
    let ccfg = ClassifyConfig { union_filter };
    let split = super::load_augmented_split(&args.split_dir)?;

    let mut manifest = Manifest::new("classify", json!({ "union_filter": union_filter }));
    manifest.add_split_inputs(&args.split_dir)?;
    manifest.add_input("queries", &args.queries)?;
    manifest.check_expectation(args.expect.as_ref())?;

    let records = super::read_query_file(&args.queries)?;
    super::validate_records(
        &records,
        &args.queries,
        split.entities.len(),
        split.relations.len(),
    )?;

    let mut out = Vec::new();
    let mut tally: std::collections::BTreeMap<String, usize> = Default::default();
    for (i, record) in records.iter().enumerate() {
        for (role, answers) in [("easy", &record.easy), ("hard", &record.hard)] {
            for &answer in answers {
                let qa = QaPair { query: record.query.clone(), answer };
                let label = classify_with(&qa, &split, &ccfg)
                    .or_data(|| format!("{}:{} answer {answer}", args.queries.display(), i + 1))?;
                *tally.entry(label.to_string()).or_default() += 1;
                let line = json!({
                    "index": i,
                    "type": record.query.query_type().tag(),
                    "answer": answer.0,
                    "role": role,
                    "label": label.to_string(),
                });
                out.extend_from_slice(line.to_string().as_bytes());
                out.push(b'\n');
            }
        }
    }
    manifest.write_output(&args.out, &out)?;
    manifest.note("pairs_per_label", json!(tally));
    manifest.save_beside(&args.out)?;
    for (label, n) in &tally {
        eprintln!("{label}: {n} pairs");
    }
    eprintln!("wrote labels to {}", args.out.display());
    Ok(())
}

#[derive(Args)]
pub struct StatsArgs {
    /// Label file produced by `classify`.
    #[arg(long, value_name = "FILE")]
    labels: PathBuf,

    /// Optional query files for anchor/relation imbalance tables.
    #[arg(long, value_name = "FILE")]
    queries: Vec<PathBuf>,

    /// Output directory for matrix.csv/matrix.txt (+ imbalance tables).
    #[arg(long, value_name = "DIR")]
    out_dir: PathBuf,

    /// Producer manifest to verify input fingerprints against.
    #[arg(long, value_name = "FILE")]
    expect: Option<PathBuf>,
}

pub fn run_stats(args: StatsArgs, _cfg: &PipelineConfig) -> Result<(), Failure> {
    let mut manifest = Manifest::new("stats", json!({}));
    manifest.add_input("labels", &args.labels)?;
    for (i, path) in args.queries.iter().enumerate() {
        manifest.add_input(&format!("queries[{i}]"), path)?;
    }
    manifest.check_expectation(args.expect.as_ref())?;

    let text = std::fs::read_to_string(&args.labels)
        .or_data(|| format!("reading labels {}", args.labels.display()))?;
    let mut labels: Vec<(QueryType, HardnessLabel)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: LabelLine = serde_json::from_str(line)
            .or_data(|| format!("{}:{}", args.labels.display(), i + 1))?;
        let qt = QueryType::from_tag(&parsed.type_tag).ok_or_else(|| {
            data_msg(format!(
                "{}:{}: unknown query type {:?}",
                args.labels.display(),
                i + 1,
                parsed.type_tag
            ))
        })?;
        let label = HardnessLabel::from_str(&parsed.label).map_err(|e| {
            data_msg(format!("{}:{}: {e}", args.labels.display(), i + 1))
        })?;
        labels.push((qt, label));
    }
    eprintln!("{} labeled pairs", labels.len());

    let matrix = ReductionMatrix::from_labels(labels);
    manifest.write_output(&args.out_dir.join("matrix.csv"), matrix.to_csv().as_bytes())?;
    manifest.write_output(&args.out_dir.join("matrix.txt"), matrix.to_text().as_bytes())?;

    if !args.queries.is_empty() {
        let mut queries = Vec::new();
        for path in &args.queries {
            let records = super::read_query_file(path)?;
            queries.extend(records.into_iter().map(|r| r.query));
        }
        let report = imbalance_report(queries);
        let mut csv =
            String::from("type,queries,modal_anchor,anchor_share_pct,modal_relation,relation_share_pct\n");
        let mut txt = format!(
            "{:<8}{:>9}{:>14}{:>12}{:>16}{:>12}\n",
            "type", "queries", "modal_anchor", "share_pct", "modal_relation", "share_pct"
        );
        for (qt, row) in &report {
            csv.push_str(&format!(
                "{},{},{},{:.1},{},{:.1}\n",
                qt.tag(),
                row.queries,
                row.modal_anchor,
                row.modal_anchor_share * 100.0,
                row.modal_relation,
                row.modal_relation_share * 100.0,
            ));
            txt.push_str(&format!(
                "{:<8}{:>9}{:>14}{:>12.1}{:>16}{:>12.1}\n",
                qt.tag(),
                row.queries,
                row.modal_anchor,
                row.modal_anchor_share * 100.0,
                row.modal_relation,
                row.modal_relation_share * 100.0,
            ));
        }
        manifest.write_output(&args.out_dir.join("imbalance.csv"), csv.as_bytes())?;
        manifest.write_output(&args.out_dir.join("imbalance.txt"), txt.as_bytes())?;
    }

    manifest.save_in_dir(&args.out_dir)?;
    eprintln!("wrote statistics to {}", args.out_dir.display());
    Ok(())
}
