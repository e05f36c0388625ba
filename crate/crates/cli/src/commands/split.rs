//! `cqa split` — chronological train/valid/test splitting.

use std::path::PathBuf;

use clap::Args;
use serde_json::json;

use cqa_core::kg::{
    load_timed_triples, temporal_split, write_dict, write_triples, KnowledgeGraphSplit,
    SymbolTable,
};

use crate::config::{parse_ratios, PipelineConfig};
use crate::failure::{usage, FailCtx, Failure};
use crate::manifest::Manifest;

#[derive(Args)]
pub struct SplitArgs {
    /// Timestamped triple file: subject<TAB>relation<TAB>object<TAB>ISO-8601 time.
    #[arg(long, value_name = "FILE")]
    timestamped: PathBuf,

    /// Chronological train,valid,test fractions (default 0.8,0.1,0.1).
    #[arg(long, value_name = "R,R,R")]
    ratios: Option<String>,

    /// Output split directory.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

pub fn run(args: SplitArgs, cfg: &PipelineConfig) -> Result<(), Failure> {
    let ratios = match &args.ratios {
        Some(s) => parse_ratios(s)?,
        None => cfg.split.ratios.unwrap_or([0.8, 0.1, 0.1]),
    };

    let mut entities = SymbolTable::new();
    let mut relations = SymbolTable::new();
    let timed = load_timed_triples(&args.timestamped, &mut entities, &mut relations)
        .or_data(|| format!("loading {}", args.timestamped.display()))?;
    if timed.is_empty() {
        return Err(usage(format!("{} holds no triples", args.timestamped.display())));
    }
    eprintln!(
        "loaded {} timestamped facts: {} entities, {} relations",
        timed.len(),
        entities.len(),
        relations.len()
    );

    let (train, valid, test) = temporal_split(&timed, (ratios[0], ratios[1], ratios[2]))
        .or_data(|| "splitting chronologically".to_owned())?;
    let counts = json!({
        "train": train.len(),
        "valid": valid.len(),
        "test": test.len(),
        "unique_facts": train.len() + valid.len() + test.len(),
        "raw_records": timed.len(),
    });
    let split = KnowledgeGraphSplit::new(entities, relations, train, valid, test)
        .or_data(|| "assembling split".to_owned())?;

    let mut manifest = Manifest::new("split", json!({ "ratios": ratios }));
    manifest.add_input("timestamped", &args.timestamped)?;

    for (name, graph) in [
        ("train.txt", &split.train),
        ("valid.txt", &split.valid),
        ("test.txt", &split.test),
    ] {
        let mut buf = Vec::new();
        write_triples(&mut buf, graph, &split.entities, &split.relations)
            .or_internal(|| format!("rendering {name}"))?;
        manifest.write_output(&args.out.join(name), &buf)?;
    }
    for (name, table) in
        [("entities.dict", &split.entities), ("relations.dict", &split.relations)]
    {
        let mut buf = Vec::new();
        write_dict(&mut buf, table).or_internal(|| format!("rendering {name}"))?;
        manifest.write_output(&args.out.join(name), &buf)?;
    }
    manifest.note("counts", counts);
    manifest.save_in_dir(&args.out)?;
    eprintln!(
        "wrote split to {} ({}/{}/{} train/valid/test edges)",
        args.out.display(),
        split.train.edge_count(),
        split.valid.edge_count(),
        split.test.edge_count()
    );
    Ok(())
}
