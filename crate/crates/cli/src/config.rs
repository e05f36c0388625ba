//! Optional TOML configuration file, merged under command-line flags.
//!
//! Every key is optional; a flag always beats the file, and the file beats
//! the built-in default. Unknown keys anywhere are rejected so typos
//! cannot silently fall back to defaults.

use std::path::Path;

use serde::Deserialize;

use cqa_core::query::QueryType;

use crate::failure::{usage, Failure};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub split: SplitSection,
    pub gen: GenSection,
    pub train: TrainSection,
    pub answer: AnswerSection,
    pub evaluate: EvaluateSection,
    pub classify: ClassifySection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSection {
    /// Chronological train/valid/test fractions; must sum to 1.
    pub ratios: Option<[f64; 3]>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenSection {
    pub quota: Option<usize>,
    /// Sets both caps unless a specific one is given.
    pub cap: Option<f64>,
    pub anchor_cap: Option<f64>,
    pub relation_cap: Option<f64>,
    pub seed: Option<u64>,
    /// Query type tags, e.g. ["1p", "2p"]; "all" selects every type.
    pub types: Option<Vec<String>>,
    pub max_attempts: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub rank: Option<usize>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub reg: Option<f64>,
    pub init_scale: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnswerSection {
    pub beam: Option<usize>,
    /// "prod" or "min".
    pub tnorm: Option<String>,
    pub hybrid: Option<bool>,
    /// Entities kept per ranking line; 0 keeps all (required for exact
    /// evaluation).
    pub topk: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluateSection {
    /// Remove other known answers from the candidate pool before ranking.
    pub filtering: Option<bool>,
    /// "average", "optimistic" or "pessimistic".
    pub ties: Option<String>,
    /// Band edges for cardinality strata; must start at 0, strictly
    /// increasing.
    pub bands: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifySection {
    /// Drop union pairs relying on links absent from the full graph.
    pub union_filter: Option<bool>,
}

pub fn load(path: Option<&Path>) -> Result<PipelineConfig, Failure> {
    let Some(path) = path else {
        return Ok(PipelineConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| usage(format!("invalid config {}: {e}", path.display())))
}

/// Parses an `on`/`off` switch (also accepting `true`/`false`).
pub fn parse_switch(s: &str) -> Result<bool, String> {
    match s {
        "on" | "true" => Ok(true),
        "off" | "false" => Ok(false),
        other => Err(format!("expected on|off, found {other:?}")),
    }
}

/// Resolves a comma-separated type list; `all` (or nothing anywhere)
/// selects every type.
pub fn resolve_types(
    flag: Option<&str>,
    section: Option<&Vec<String>>,
) -> Result<Vec<QueryType>, Failure> {
    let tags: Vec<String> = match (flag, section) {
        (Some(s), _) => s.split(',').map(|t| t.trim().to_owned()).collect(),
        (None, Some(list)) => list.clone(),
        (None, None) => return Ok(QueryType::ALL.to_vec()),
    };
    if tags.iter().any(|t| t == "all") {
        return Ok(QueryType::ALL.to_vec());
    }
    let mut out = Vec::new();
    for tag in &tags {
        let qt = QueryType::from_tag(tag)
            .ok_or_else(|| usage(format!("unknown query type {tag:?}")))?;
        if !out.contains(&qt) {
            out.push(qt);
        }
    }
    if out.is_empty() {
        return Err(usage("empty query type list"));
    }
    Ok(out)
}

/// Parses `a,b,c` ratio flags.
pub fn parse_ratios(s: &str) -> Result<[f64; 3], Failure> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(usage(format!("expected three comma-separated ratios, found {s:?}")));
    }
    let mut out = [0.0; 3];
    for (slot, raw) in out.iter_mut().zip(&parts) {
        *slot = raw
            .trim()
            .parse()
            .map_err(|_| usage(format!("bad ratio {raw:?}")))?;
    }
    Ok(out)
}
