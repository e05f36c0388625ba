//! One module per subcommand, plus shared input helpers.

pub mod answer;
pub mod classify;
pub mod evaluate;
pub mod gen;
pub mod report;
pub mod split;
pub mod train_lp;

use std::path::Path;

use cqa_core::kg::{load_split_dir, KnowledgeGraphSplit};
use cqa_core::query::{parse_query, QueryRecord};

use crate::failure::{data, FailCtx, Failure};

/// Loads a split directory and materializes inverse relations, which is
/// the representation every downstream stage works in.
pub(crate) fn load_augmented_split(dir: &Path) -> Result<KnowledgeGraphSplit, Failure> {
    let split = load_split_dir(dir)
        .or_data(|| format!("loading split directory {}", dir.display()))?;
    let split = split
        .augment_with_inverses()
        .or_data(|| format!("augmenting split {}", dir.display()))?;
    eprintln!(
        "loaded split {}: {} entities, {} relations (with inverses), {}/{}/{} train/valid/test edges",
        dir.display(),
        split.entities.len(),
        split.relations.len(),
        split.train.edge_count(),
        split.valid.edge_count(),
        split.test.edge_count(),
    );
    Ok(split)
}

/// Reads a JSON-lines query file, reporting the first bad line.
pub(crate) fn read_query_file(path: &Path) -> Result<Vec<QueryRecord>, Failure> {
    let text = std::fs::read_to_string(path)
        .or_data(|| format!("reading queries {}", path.display()))?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record = parse_query(line)
            .map_err(|e| data(e).into_data_context(path, i + 1))?;
        records.push(record);
    }
    Ok(records)
}

impl Failure {
    fn into_data_context(self, path: &Path, line: usize) -> Failure {
        match self {
            Failure::Data(e) => {
                Failure::Data(e.context(format!("{}:{line}", path.display())))
            }
            other => other,
        }
    }
}

/// Validates every record against an entity/relation id space.
pub(crate) fn validate_records(
    records: &[QueryRecord],
    path: &Path,
    entity_count: usize,
    relation_count: usize,
) -> Result<(), Failure> {
    for (i, record) in records.iter().enumerate() {
        record
            .validate_ids(entity_count, relation_count)
            .map_err(|e| data(e).into_data_context(path, i + 1))?;
    }
    Ok(())
}

/// File stem used to identify a query file in derived outputs.
pub(crate) fn file_stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}
