//! `cqa answer` — fuzzy beam-search query answering.

use std::path::PathBuf;

use clap::Args;
use serde_json::json;

use cqa_core::predictor::{ComplEx, TripleScorer};
use cqa_core::solver::{solve, SolverConfig, TNorm, BEAM_MAX, BEAM_MIN};

use crate::config::{parse_switch, PipelineConfig};
use crate::failure::{data, usage, Failure};
use crate::manifest::Manifest;

fn parse_tnorm(s: &str) -> Result<TNorm, String> {
    match s {
        "prod" => Ok(TNorm::Product),
        "min" => Ok(TNorm::Minimum),
        other => Err(format!("expected prod|min, found {other:?}")),
    }
}

#[derive(Args)]
pub struct AnswerArgs {
    /// JSON-lines query file.
    #[arg(long, value_name = "FILE")]
    queries: PathBuf,

    /// Link predictor checkpoint from `train-lp`.
    #[arg(long, value_name = "FILE")]
    checkpoint: PathBuf,

    /// Split directory; required with --hybrid on (training edges override
    /// predicted scores).
    #[arg(long, value_name = "DIR")]
    split_dir: Option<PathBuf>,

    /// Beam width for intermediate frontiers.
    #[arg(long, value_name = "K")]
    beam: Option<usize>,

    /// Conjunction semantics: product or minimum.
    #[arg(long, value_name = "prod|min", value_parser = parse_tnorm)]
    tnorm: Option<TNorm>,

    /// Score known training edges 1.0 (0.0 when negated).
    #[arg(long, value_name = "on|off", value_parser = parse_switch)]
    hybrid: Option<bool>,

    /// Entities kept per ranking line; 0 keeps all (required for exact
    /// evaluation downstream).
    #[arg(long, value_name = "N")]
    topk: Option<usize>,

    /// Output ranking file (JSON lines).
    #[arg(long, value_name = "FILE")]
    out: PathBuf,

    /// Producer manifest to verify input fingerprints against.
    #[arg(long, value_name = "FILE")]
    expect: Option<PathBuf>,
}

pub fn run(args: AnswerArgs, cfg: &PipelineConfig) -> Result<(), Failure> {
    let defaults = SolverConfig::default();
    let section = &cfg.answer;
    let tnorm = match (args.tnorm, section.tnorm.as_deref()) {
        (Some(t), _) => t,
        (None, Some(s)) => parse_tnorm(s).map_err(usage)?,
        (None, None) => defaults.tnorm,
    };
    let beam = args.beam.or(section.beam).unwrap_or(defaults.beam_k);
    let hybrid = args.hybrid.or(section.hybrid).unwrap_or(defaults.hybrid);
    let topk = args.topk.or(section.topk).unwrap_or(0);
    let scfg = SolverConfig { beam_k: beam, tnorm, hybrid, normalize: true };

    if hybrid && args.split_dir.is_none() {
        return Err(usage("--hybrid on requires --split-dir for the training graph"));
    }

    let model = ComplEx::load(&args.checkpoint)
        .map_err(|e| data(anyhow::Error::from(e).context("loading checkpoint")))?;
    eprintln!(
        "loaded checkpoint: {} entities, {} relations, rank {}",
        model.entity_count(),
        model.relation_count(),
        model.rank()
    );

    let split = match &args.split_dir {
        Some(dir) => Some(super::load_augmented_split(dir)?),
        None => None,
    };
    if let Some(split) = &split {
        if split.train.entity_count() != model.entity_count()
            || split.train.relation_count() != model.relation_count()
        {
            return Err(crate::failure::data_msg(format!(
                "checkpoint shape ({} entities, {} relations) does not match the split ({}, {})",
                model.entity_count(),
                model.relation_count(),
                split.train.entity_count(),
                split.train.relation_count(),
            )));
        }
    }

    let config_json = json!({
        "beam": beam,
        "beam_effective": beam.clamp(BEAM_MIN, BEAM_MAX),
        "tnorm": match tnorm { TNorm::Product => "prod", TNorm::Minimum => "min" },
        "hybrid": hybrid,
        "topk": topk,
    });
    let mut manifest = Manifest::new("answer", config_json);
    manifest.add_input("queries", &args.queries)?;
    manifest.add_input("checkpoint", &args.checkpoint)?;
    if let Some(dir) = &args.split_dir {
        manifest.add_split_inputs(dir)?;
    }
    manifest.check_expectation(args.expect.as_ref())?;

    let records = super::read_query_file(&args.queries)?;
    super::validate_records(
        &records,
        &args.queries,
        model.entity_count(),
        model.relation_count(),
    )?;

    let train = split.as_ref().map(|s| &s.train);
    let mut out = Vec::new();
    for (i, record) in records.iter().enumerate() {
        let ranking = solve(&record.query, &model, train, &scfg)
            .map_err(|e| data(anyhow::Error::from(e).context(format!("query {i}"))))?;
        let mut order: Vec<(u32, f64)> = ranking
            .scores
            .iter()
            .enumerate()
            .map(|(e, &s)| (e as u32, s))
            .collect();
        order.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        if topk > 0 {
            order.truncate(topk);
        }
        let line = json!({
            "query_index": i,
            "type": record.query.query_type().tag(),
            "ranking": order,
        });
        out.extend_from_slice(line.to_string().as_bytes());
        out.push(b'\n');
    }
    manifest.write_output(&args.out, &out)?;
    manifest.note("queries", json!(records.len()));
    manifest.save_beside(&args.out)?;
    eprintln!("wrote {} rankings to {}", records.len(), args.out.display());
    Ok(())
}
