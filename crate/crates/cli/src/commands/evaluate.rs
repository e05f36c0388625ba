//! `cqa evaluate` — filtered ranking metrics stratified by hardness.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use clap::Args;
use serde::Deserialize;
use serde_json::json;

use cqa_core::eval::{
    cardinality_strata, filtered_rank, stratified, CardinalityBands, GroupMetrics, QueryEval,
    StratumKey, TiePolicy, HITS_AT,
};
use cqa_core::hardness::{classify_with, ClassifyConfig, HardnessLabel};
use cqa_core::kg::EntityId;
use cqa_core::matcher::intermediate_cardinality;
use cqa_core::query::{QaPair, QueryType};

use crate::config::{parse_switch, PipelineConfig};
use crate::failure::{data_msg, usage, FailCtx, Failure};
use crate::manifest::Manifest;

fn parse_ties(s: &str) -> Result<TiePolicy, String> {
    match s {
        "average" => Ok(TiePolicy::Average),
        "optimistic" => Ok(TiePolicy::Optimistic),
        "pessimistic" => Ok(TiePolicy::Pessimistic),
        other => Err(format!("expected average|optimistic|pessimistic, found {other:?}")),
    }
}

#[derive(Args)]
pub struct EvaluateArgs {
    /// Split directory used for stratification and cardinality counts.
    #[arg(long, value_name = "DIR")]
    split_dir: PathBuf,

    /// Query files; give once per ranking file, in the same order.
    #[arg(long, value_name = "FILE", required = true)]
    queries: Vec<PathBuf>,

    /// Ranking files from `answer` (complete rankings, --topk 0).
    #[arg(long, value_name = "FILE", required = true)]
    rankings: Vec<PathBuf>,

    /// Remove other known answers from the candidate pool before ranking.
    #[arg(long, value_name = "on|off", value_parser = parse_switch)]
    filtering: Option<bool>,

    /// Tie handling: average, optimistic or pessimistic.
    #[arg(long, value_name = "POLICY", value_parser = parse_ties)]
    ties: Option<TiePolicy>,

    /// Union-pair filtering during stratification.
    #[arg(long, value_name = "on|off", value_parser = parse_switch)]
    union_filter: Option<bool>,

    /// Cardinality band edges, e.g. 0,1,2,4,8,16.
    #[arg(long, value_name = "LIST")]
    bands: Option<String>,

    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out_dir: PathBuf,

    /// Producer manifest to verify input fingerprints against.
    #[arg(long, value_name = "FILE")]
    expect: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RankLine {
    query_index: usize,
    #[serde(rename = "type")]
    type_tag: String,
    ranking: Vec<(u32, f64)>,
}

fn parse_bands(
    flag: Option<&str>,
    section: Option<&Vec<usize>>,
) -> Result<CardinalityBands, Failure> {
    let edges: Vec<usize> = match (flag, section) {
        (Some(s), _) => s
            .split(',')
            .map(|t| t.trim().parse().map_err(|_| usage(format!("bad band edge {t:?}"))))
            .collect::<Result<_, _>>()?,
        (None, Some(v)) => v.clone(),
        (None, None) => return Ok(CardinalityBands::default()),
    };
    CardinalityBands::new(edges)
        .ok_or_else(|| usage("band edges must start at 0 and increase strictly"))
}

/// Mean reciprocal rank and hits over one group of answers.
fn eval_group(
    scores: &[f64],
    answers: &[EntityId],
    exclude: &BTreeSet<EntityId>,
    policy: TiePolicy,
    mut per_answer: impl FnMut(EntityId, f64),
) -> QueryEval {
    let mut rr = 0.0;
    let mut hits = [0.0; 3];
    for &a in answers {
        let rank = filtered_rank(scores, a, exclude, policy);
        per_answer(a, rank);
        rr += 1.0 / rank;
        for (i, &k) in HITS_AT.iter().enumerate() {
            if rank <= k as f64 {
                hits[i] += 1.0;
            }
        }
    }
    let n = answers.len() as f64;
    QueryEval { rr: rr / n, hits: hits.map(|h| h / n), hard_answers: answers.len() }
}

/// Bucket labels that can appear as pivot columns, in display order.
fn pivot_columns() -> Vec<HardnessLabel> {
    let mut reduced: BTreeSet<QueryType> = BTreeSet::new();
    for qt in QueryType::ALL {
        reduced.extend(cqa_core::hardness::possible_reductions(qt).iter().copied());
    }
    let mut cols: Vec<HardnessLabel> =
        reduced.into_iter().map(HardnessLabel::Partial).collect();
    cols.push(HardnessLabel::FullInference);
    cols
}

fn fmt_mrr(m: Option<&GroupMetrics>) -> String {
    match m {
        Some(g) => format!("{:.4}", g.mrr),
        None => "-".to_owned(),
    }
}

pub fn run(args: EvaluateArgs, cfg: &PipelineConfig) -> Result<(), Failure> {
    if args.queries.len() != args.rankings.len() {
        return Err(usage(format!(
            "{} query files but {} ranking files; give them in matched pairs",
            args.queries.len(),
            args.rankings.len()
        )));
    }
    let filtering = args.filtering.or(cfg.evaluate.filtering).unwrap_or(true);
    let policy = match (args.ties, cfg.evaluate.ties.as_deref()) {
        (Some(p), _) => p,
        (None, Some(s)) => parse_ties(s).map_err(usage)?,
        (None, None) => TiePolicy::Average,
    };
    let union_filter = args.union_filter.or(cfg.classify.union_filter).unwrap_or(true);
    let ccfg = ClassifyConfig { union_filter };
    let bands = parse_bands(args.bands.as_deref(), cfg.evaluate.bands.as_ref())?;

    let split = super::load_augmented_split(&args.split_dir)?;
    let n = split.train.entity_count();

    let config_json = json!({
        "filtering": filtering,
        "ties": match policy {
            TiePolicy::Average => "average",
            TiePolicy::Optimistic => "optimistic",
            TiePolicy::Pessimistic => "pessimistic",
        },
        "union_filter": union_filter,
    });
    let mut manifest = Manifest::new("evaluate", config_json);
    manifest.add_split_inputs(&args.split_dir)?;
    for (i, (qf, rf)) in args.queries.iter().zip(&args.rankings).enumerate() {
        manifest.add_input(&format!("queries[{i}]"), qf)?;
        manifest.add_input(&format!("rankings[{i}]"), rf)?;
    }
    manifest.check_expectation(args.expect.as_ref())?;

    let mut per_stratum: BTreeMap<StratumKey, Vec<QueryEval>> = BTreeMap::new();
    let mut cardinality_items: Vec<(usize, QueryEval)> = Vec::new();
    let mut rank_lines: Vec<u8> = Vec::new();
    let mut skipped = 0usize;

    for (qf, rf) in args.queries.iter().zip(&args.rankings) {
        let records = super::read_query_file(qf)?;
        super::validate_records(&records, qf, split.entities.len(), split.relations.len())?;
        let stem = super::file_stem(qf);

        let text = std::fs::read_to_string(rf)
            .or_data(|| format!("reading rankings {}", rf.display()))?;
        let mut score_rows: Vec<Vec<f64>> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parsed: RankLine = serde_json::from_str(line)
                .or_data(|| format!("{}:{}", rf.display(), i + 1))?;
            if parsed.query_index != score_rows.len() {
                return Err(data_msg(format!(
                    "{}:{}: query_index {} out of order (expected {})",
                    rf.display(),
                    i + 1,
                    parsed.query_index,
                    score_rows.len()
                )));
            }
            if parsed.ranking.len() != n {
                return Err(data_msg(format!(
                    "{}:{}: {} scored entities but the split has {n}; \
                     evaluation needs complete rankings (answer --topk 0)",
                    rf.display(),
                    i + 1,
                    parsed.ranking.len()
                )));
            }
            let mut scores = vec![f64::NAN; n];
            for &(e, s) in &parsed.ranking {
                let idx = e as usize;
                if idx >= n || !scores[idx].is_nan() {
                    return Err(data_msg(format!(
                        "{}:{}: entity {e} out of range or repeated",
                        rf.display(),
                        i + 1
                    )));
                }
                scores[idx] = s;
            }
            let record = records.get(parsed.query_index).ok_or_else(|| {
                data_msg(format!(
                    "{}:{}: no matching query line in {}",
                    rf.display(),
                    i + 1,
                    qf.display()
                ))
            })?;
            if record.query.query_type().tag() != parsed.type_tag {
                return Err(data_msg(format!(
                    "{}:{}: type {} does not match query file's {}",
                    rf.display(),
                    i + 1,
                    parsed.type_tag,
                    record.query.query_type().tag()
                )));
            }
            score_rows.push(scores);
        }
        if score_rows.len() != records.len() {
            return Err(data_msg(format!(
                "{} covers {} of {} queries in {}",
                rf.display(),
                score_rows.len(),
                records.len(),
                qf.display()
            )));
        }

        for (qi, (record, scores)) in records.iter().zip(&score_rows).enumerate() {
            if record.hard.is_empty() {
                skipped += 1;
                eprintln!("warning: {}:{} has no hard answers; skipped", qf.display(), qi + 1);
                continue;
            }
            // Group this query's hard answers by hardness for stratification.
            let mut by_label: BTreeMap<HardnessLabel, Vec<EntityId>> = BTreeMap::new();
            for &a in &record.hard {
                let qa = QaPair { query: record.query.clone(), answer: a };
                let label = classify_with(&qa, &split, &ccfg)
                    .or_data(|| format!("{}:{} answer {a}", qf.display(), qi + 1))?;
                by_label.entry(label).or_default().push(a);
            }
            let exclude: BTreeSet<EntityId> = if filtering {
                record.easy.iter().chain(&record.hard).copied().collect()
            } else {
                BTreeSet::new()
            };
            let qt = record.query.query_type();
            let card = (qt.var_count() > 0)
                .then(|| intermediate_cardinality(&record.query, &split.train));
            for (label, answers) in by_label {
                let eval = eval_group(scores, &answers, &exclude, policy, |a, rank| {
                    let line = json!({
                        "file": stem,
                        "query_index": qi,
                        "type": qt.tag(),
                        "label": label.to_string(),
                        "answer": a.0,
                        "rank": rank,
                        "rr": 1.0 / rank,
                    });
                    rank_lines.extend_from_slice(line.to_string().as_bytes());
                    rank_lines.push(b'\n');
                });
                per_stratum.entry(StratumKey { query_type: qt, label }).or_default().push(eval);
                if let Some(card) = card {
                    cardinality_items.push((card, eval));
                }
            }
        }
    }

    let report = stratified(&per_stratum, skipped);

    // Flat per-stratum table.
    let mut flat_csv = String::from("stratum,queries,mrr,hits1,hits3,hits10\n");
    for (key, g) in &report.strata {
        flat_csv.push_str(&format!(
            "{key},{},{:.6},{:.6},{:.6},{:.6}\n",
            g.queries, g.mrr, g.hits1, g.hits3, g.hits10
        ));
    }
    let o = &report.overall;
    flat_csv.push_str(&format!(
        "overall,{},{:.6},{:.6},{:.6},{:.6}\n",
        o.queries, o.mrr, o.hits1, o.hits3, o.hits10
    ));

    // Pivot: rows are query types, columns hardness buckets.
    let cols = pivot_columns();
    let types: BTreeSet<QueryType> = report.strata.keys().map(|k| k.query_type).collect();
    let mut pivot_csv = String::from("type,queries,ovr");
    let mut pivot_txt = format!("{:<6}{:>9}{:>9}", "type", "queries", "ovr");
    for col in &cols {
        let name = match col {
            HardnessLabel::Partial(qt) => qt.tag().to_owned(),
            other => other.tag().to_owned(),
        };
        pivot_csv.push_str(&format!(",{name}"));
        pivot_txt.push_str(&format!("{name:>16}"));
    }
    pivot_csv.push('\n');
    pivot_txt.push('\n');
    for &qt in &types {
        let row: BTreeMap<HardnessLabel, &GroupMetrics> = report
            .strata
            .iter()
            .filter(|(k, _)| k.query_type == qt)
            .map(|(k, g)| (k.label, g))
            .collect();
        let total: usize = row.values().map(|g| g.queries).sum();
        let ovr = if total == 0 {
            0.0
        } else {
            row.values().map(|g| g.queries as f64 * g.mrr).sum::<f64>() / total as f64
        };
        pivot_csv.push_str(&format!("{},{total},{ovr:.4}", qt.tag()));
        pivot_txt.push_str(&format!("{:<6}{total:>9}{ovr:>9.4}", qt.tag()));
        let possible = cqa_core::generator::buckets_for(qt);
        for col in &cols {
            let cell = if possible.contains(col) {
                fmt_mrr(row.get(col).copied())
            } else {
                "-".to_owned()
            };
            pivot_csv.push_str(&format!(",{cell}"));
            pivot_txt.push_str(&format!("{cell:>16}"));
        }
        pivot_csv.push('\n');
        pivot_txt.push('\n');
    }

    let card_table = cardinality_strata(&cardinality_items, &bands);
    let mut card_csv = String::from("band,queries,mrr,hits1,hits3,hits10\n");
    for (band, g) in &card_table {
        card_csv.push_str(&format!(
            "{band},{},{:.6},{:.6},{:.6},{:.6}\n",
            g.queries, g.mrr, g.hits1, g.hits3, g.hits10
        ));
    }

    let metrics = json!({
        "filtering": filtering,
        "overall": report.overall,
        "skipped": report.skipped,
        "strata": report
            .strata
            .iter()
            .map(|(k, g)| json!({
                "type": k.query_type.tag(),
                "label": k.label.to_string(),
                "metrics": g,
            }))
            .collect::<Vec<_>>(),
        "cardinality": card_table
            .iter()
            .map(|(band, g)| json!({ "band": band, "metrics": g }))
            .collect::<Vec<_>>(),
    });
    let mut metrics_text =
        serde_json::to_string_pretty(&metrics).or_internal(|| "rendering metrics".to_owned())?;
    metrics_text.push('\n');

    manifest.write_output(&args.out_dir.join("stratified.txt"), report.to_text().as_bytes())?;
    manifest.write_output(&args.out_dir.join("stratified.csv"), flat_csv.as_bytes())?;
    manifest.write_output(&args.out_dir.join("table.csv"), pivot_csv.as_bytes())?;
    manifest.write_output(&args.out_dir.join("table.txt"), pivot_txt.as_bytes())?;
    manifest.write_output(&args.out_dir.join("cardinality.csv"), card_csv.as_bytes())?;
    manifest.write_output(&args.out_dir.join("ranks.jsonl"), &rank_lines)?;
    manifest.write_output(&args.out_dir.join("metrics.json"), metrics_text.as_bytes())?;
    manifest.note(
        "totals",
        json!({ "queries": report.overall.queries, "skipped": report.skipped }),
    );
    manifest.save_in_dir(&args.out_dir)?;

    eprint!("{}", report.to_text());
    eprintln!("wrote evaluation to {}", args.out_dir.display());
    Ok(())
}
