//! `cqa report` — cross-run comparison and significance tables.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use clap::Args;
use serde::Deserialize;
use serde_json::json;

use cqa_core::eval::mann_whitney_u;

use crate::config::PipelineConfig;
use crate::failure::{data_msg, usage, FailCtx, Failure};
use crate::manifest::Manifest;

#[derive(Args)]
pub struct ReportArgs {
    /// Evaluation directories from `evaluate`; runs are named after them.
    #[arg(long, value_name = "DIR", required = true)]
    eval_dir: Vec<PathBuf>,

    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out_dir: PathBuf,
}

#[derive(Debug, Deserialize)]
struct MetricsFile {
    overall: Metrics,
    strata: Vec<Stratum>,
}

#[derive(Debug, Deserialize)]
struct Metrics {
    queries: usize,
    mrr: f64,
}

#[derive(Debug, Deserialize)]
struct Stratum {
    #[serde(rename = "type")]
    type_tag: String,
    label: String,
    metrics: Metrics,
}

#[derive(Debug, Deserialize)]
struct RankLine {
    rr: f64,
}

struct Run {
    name: String,
    metrics: MetricsFile,
    reciprocal_ranks: Vec<f64>,
}

pub fn run(args: ReportArgs, _cfg: &PipelineConfig) -> Result<(), Failure> {
    if args.eval_dir.is_empty() {
        return Err(usage("give at least one --eval-dir"));
    }
    let mut manifest = Manifest::new("report", json!({}));

    let mut runs: Vec<Run> = Vec::new();
    let mut seen_names: BTreeMap<String, usize> = BTreeMap::new();
    for dir in &args.eval_dir {
        let base = dir
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "run".to_owned());
        let n = seen_names.entry(base.clone()).or_insert(0);
        *n += 1;
        let name = if *n == 1 { base } else { format!("{base}-{n}") };

        let metrics_path = dir.join("metrics.json");
        let ranks_path = dir.join("ranks.jsonl");
        manifest.add_input(&format!("{name}/metrics.json"), &metrics_path)?;
        manifest.add_input(&format!("{name}/ranks.jsonl"), &ranks_path)?;

        let metrics: MetricsFile = serde_json::from_str(
            &std::fs::read_to_string(&metrics_path)
                .or_data(|| format!("reading {}", metrics_path.display()))?,
        )
        .or_data(|| format!("parsing {}", metrics_path.display()))?;

        let text = std::fs::read_to_string(&ranks_path)
            .or_data(|| format!("reading {}", ranks_path.display()))?;
        let mut reciprocal_ranks = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parsed: RankLine = serde_json::from_str(line)
                .or_data(|| format!("{}:{}", ranks_path.display(), i + 1))?;
            reciprocal_ranks.push(parsed.rr);
        }
        eprintln!(
            "run {name}: {} queries, {} ranked pairs, mrr {:.4}",
            metrics.overall.queries,
            reciprocal_ranks.len(),
            metrics.overall.mrr
        );
        runs.push(Run { name, metrics, reciprocal_ranks });
    }

    // Comparison: one row per stratum, one MRR column per run.
    let strata: BTreeSet<String> = runs
        .iter()
        .flat_map(|r| r.metrics.strata.iter().map(|s| format!("{}/{}", s.type_tag, s.label)))
        .collect();
    let mut comparison_csv = String::from("stratum");
    let mut comparison_txt = format!("{:<26}", "stratum");
    for run in &runs {
        comparison_csv.push_str(&format!(",{}", run.name));
        comparison_txt.push_str(&format!("{:>14}", run.name));
    }
    comparison_csv.push('\n');
    comparison_txt.push('\n');
    let cell = |run: &Run, stratum: &str| -> String {
        run.metrics
            .strata
            .iter()
            .find(|s| format!("{}/{}", s.type_tag, s.label) == stratum)
            .map(|s| format!("{:.4}", s.metrics.mrr))
            .unwrap_or_else(|| "-".to_owned())
    };
    for stratum in &strata {
        comparison_csv.push_str(stratum);
        comparison_txt.push_str(&format!("{stratum:<26}"));
        for run in &runs {
            let v = cell(run, stratum);
            comparison_csv.push_str(&format!(",{v}"));
            comparison_txt.push_str(&format!("{v:>14}"));
        }
        comparison_csv.push('\n');
        comparison_txt.push('\n');
    }
    comparison_csv.push_str("overall");
    comparison_txt.push_str(&format!("{:<26}", "overall"));
    for run in &runs {
        let v = format!("{:.4}", run.metrics.overall.mrr);
        comparison_csv.push_str(&format!(",{v}"));
        comparison_txt.push_str(&format!("{v:>14}"));
    }
    comparison_csv.push('\n');
    comparison_txt.push('\n');

    // All-vs-all rank-sum tests on the reciprocal ranks.
    let mut significance_csv =
        String::from("run_a,run_b,pairs_a,pairs_b,u,p,exact,zero_variance\n");
    let mut significance_txt = format!(
        "{:<14}{:<14}{:>9}{:>9}{:>12}{:>12}{:>7}{:>14}\n",
        "run_a", "run_b", "pairs_a", "pairs_b", "u", "p", "exact", "zero_variance"
    );
    let mut significance_rows = Vec::new();
    for i in 0..runs.len() {
        for j in (i + 1)..runs.len() {
            let (a, b) = (&runs[i], &runs[j]);
            let result = mann_whitney_u(&a.reciprocal_ranks, &b.reciprocal_ranks)
                .ok_or_else(|| {
                    data_msg(format!(
                        "run {} or {} has no ranked pairs; cannot test",
                        a.name, b.name
                    ))
                })?;
            significance_csv.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                a.name,
                b.name,
                a.reciprocal_ranks.len(),
                b.reciprocal_ranks.len(),
                result.u,
                result.p,
                result.exact,
                result.zero_variance
            ));
            significance_txt.push_str(&format!(
                "{:<14}{:<14}{:>9}{:>9}{:>12.2}{:>12.6}{:>7}{:>14}\n",
                a.name,
                b.name,
                a.reciprocal_ranks.len(),
                b.reciprocal_ranks.len(),
                result.u,
                result.p,
                result.exact,
                result.zero_variance
            ));
            significance_rows.push(json!({
                "run_a": a.name,
                "run_b": b.name,
                "result": result,
            }));
        }
    }
    if runs.len() < 2 {
        eprintln!("single run: significance table is empty");
    }

    let combined = json!({
        "runs": runs
            .iter()
            .map(|r| json!({
                "name": r.name,
                "overall_mrr": r.metrics.overall.mrr,
                "queries": r.metrics.overall.queries,
                "pairs": r.reciprocal_ranks.len(),
            }))
            .collect::<Vec<_>>(),
        "significance": significance_rows,
    });
    let mut combined_text =
        serde_json::to_string_pretty(&combined).or_internal(|| "rendering report".to_owned())?;
    combined_text.push('\n');

    manifest.write_output(&args.out_dir.join("comparison.csv"), comparison_csv.as_bytes())?;
    manifest.write_output(&args.out_dir.join("comparison.txt"), comparison_txt.as_bytes())?;
    manifest.write_output(&args.out_dir.join("significance.csv"), significance_csv.as_bytes())?;
    manifest.write_output(&args.out_dir.join("significance.txt"), significance_txt.as_bytes())?;
    manifest.write_output(&args.out_dir.join("report.json"), combined_text.as_bytes())?;
    manifest.save_in_dir(&args.out_dir)?;
    eprintln!("wrote report to {}", args.out_dir.display());
    Ok(())
}
