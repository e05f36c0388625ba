//! `cqa train-lp` — complex-embedding link predictor training.

use std::path::PathBuf;

use clap::Args;
use serde_json::json;

use cqa_core::predictor::{train, TrainConfig, TripleScorer};

use crate::config::PipelineConfig;
use crate::failure::{data, usage, FailCtx, Failure};
use crate::manifest::Manifest;

#[derive(Args)]
pub struct TrainLpArgs {
    /// Split directory; training uses the train graph with inverse edges.
    #[arg(long, value_name = "DIR")]
    split_dir: PathBuf,

    /// Complex embedding dimension.
    #[arg(long, value_name = "N")]
    rank: Option<usize>,

    #[arg(long, value_name = "N")]
    epochs: Option<usize>,

    #[arg(long, value_name = "N")]
    batch_size: Option<usize>,

    #[arg(long = "lr", value_name = "F")]
    learning_rate: Option<f64>,

    /// Weight of the cubed-magnitude regularizer.
    #[arg(long, value_name = "F")]
    reg: Option<f64>,

    #[arg(long, value_name = "F")]
    init_scale: Option<f64>,

    #[arg(long, value_name = "N")]
    seed: Option<u64>,

    /// Checkpoint file to write.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,

    /// Producer manifest to verify input fingerprints against.
    #[arg(long, value_name = "FILE")]
    expect: Option<PathBuf>,
}

pub fn run(args: TrainLpArgs, cfg: &PipelineConfig) -> Result<(), Failure> {
    let defaults = TrainConfig::default();
    let section = &cfg.train;
    let tcfg = TrainConfig {
        rank: args.rank.or(section.rank).unwrap_or(defaults.rank),
        epochs: args.epochs.or(section.epochs).unwrap_or(defaults.epochs),
        batch_size: args.batch_size.or(section.batch_size).unwrap_or(defaults.batch_size),
        learning_rate: args
            .learning_rate
            .or(section.learning_rate)
            .unwrap_or(defaults.learning_rate),
        reg_weight: args.reg.or(section.reg).unwrap_or(defaults.reg_weight),
        init_scale: args.init_scale.or(section.init_scale).unwrap_or(defaults.init_scale),
        seed: args.seed.or(section.seed).unwrap_or(defaults.seed),
    };
    if tcfg.rank == 0 || tcfg.epochs == 0 || tcfg.batch_size == 0 {
        return Err(usage("rank, epochs and batch size must all be positive"));
    }

    let split = super::load_augmented_split(&args.split_dir)?;

    let config_json = json!({
        "rank": tcfg.rank,
        "epochs": tcfg.epochs,
        "batch_size": tcfg.batch_size,
        "learning_rate": tcfg.learning_rate,
        "reg": tcfg.reg_weight,
        "init_scale": tcfg.init_scale,
        "seed": tcfg.seed,
    });
    let mut manifest = Manifest::new("train-lp", config_json);
    manifest.add_split_inputs(&args.split_dir)?;
    manifest.check_expectation(args.expect.as_ref())?;

    eprintln!(
        "training rank-{} model for {} epochs on {} edges",
        tcfg.rank,
        tcfg.epochs,
        split.train.edge_count()
    );
    let (model, losses) = train(&split.train, &tcfg).map_err(data)?;
    let stride = (tcfg.epochs / 10).max(1);
    for (i, loss) in losses.iter().enumerate() {
        if (i + 1) % stride == 0 || i + 1 == losses.len() {
            eprintln!("epoch {}/{}: loss {loss:.6}", i + 1, losses.len());
        }
    }

    // Write via a sibling temp file so a crash never leaves a torn
    // checkpoint behind.
    let dir = args.out.parent().map(|p| p.to_path_buf()).unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).or_data(|| format!("creating {}", dir.display()))?;
    let tmp = dir.join(format!(
        ".{}.tmp.{}",
        args.out.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
        std::process::id()
    ));
    let write = model.save(&tmp).map_err(data);
    if write.is_err() {
        let _ = std::fs::remove_file(&tmp);
        return write.map(|_| ());
    }
    std::fs::rename(&tmp, &args.out).or_data(|| format!("moving checkpoint into place"))?;
    manifest.record_output(&args.out)?;
    manifest.note(
        "model",
        json!({
            "entities": model.entity_count(),
            "relations": model.relation_count(),
            "rank": model.rank(),
        }),
    );
    manifest.note("epoch_losses", json!(losses));
    manifest.save_beside(&args.out)?;
    eprintln!("wrote checkpoint to {}", args.out.display());
    Ok(())
}
