//! Balanced benchmark generation.
//!
//! Queries are sampled backward: a random entity is chosen as the answer
//! and the template is walked from the target towards the anchors, picking
//! random incident edges of the full graph (negated atoms draw their
//! anchor/relation from a random global edge instead). Every full-graph
//! answer of an accepted query is classified, and pairs fill per-(type,
//! reduction-bucket) quotas, with per-type caps keeping any single anchor
//! entity or relation name from dominating. Trivial pairs and union pairs
//! with absent links never enter a benchmark.
//!
//! All sampling is driven by one seed; each query type uses its own RNG
//! stream, so a benchmark restricted to fewer types still produces
//! identical files for the types it shares with a full run.

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::hardness::{classify_with, ClassifyConfig, HardnessLabel};
use crate::kg::{EntityId, KnowledgeGraph, KnowledgeGraphSplit, RelationId};
use crate::matcher::answers;
use crate::query::{QaPair, Query, QueryRecord, QueryType};
use crate::util::sha256_hex;

#[derive(Debug, Clone)]
pub struct GenerationConfig {
    pub quota_per_bucket: usize,
    /// Largest share of a type's pairs allowed to reuse one anchor entity.
    pub anchor_cap_fraction: f64,
    /// Largest share of a type's pairs allowed to reuse one relation.
    pub relation_cap_fraction: f64,
    pub seed: u64,
    pub types: Vec<QueryType>,
    /// Sampling attempts per query type before giving up with a shortfall.
    pub max_attempts: usize,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            quota_per_bucket: 100,
            anchor_cap_fraction: 0.2,
            relation_cap_fraction: 0.2,
            seed: 0,
            types: QueryType::ALL.to_vec(),
            max_attempts: 10_000_000,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<(), GenError> {
        for (name, cap) in [
            ("anchor_cap_fraction", self.anchor_cap_fraction),
            ("relation_cap_fraction", self.relation_cap_fraction),
        ] {
            if !(cap > 0.0 && cap <= 1.0) {
                return Err(GenError::BadConfig(format!("{name} must be in (0, 1]")));
            }
        }
        if self.quota_per_bucket == 0 {
            return Err(GenError::BadConfig("quota_per_bucket must be at least 1".into()));
        }
        if self.types.is_empty() {
            return Err(GenError::BadConfig("at least one query type is required".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum GenError {
    #[error("bad generation configuration: {0}")]
    BadConfig(String),
    #[error("split must be augmented with inverse relations before sampling")]
    NotAugmented,
}

/// A backward-sampled query with its answer sets.
#[derive(Debug, Clone)]
pub struct SampledQuery {
    pub query: Query,
    pub full_answers: std::collections::BTreeSet<EntityId>,
    pub train_answers: std::collections::BTreeSet<EntityId>,
}

/// An unfillable bucket: how far generation got before `max_attempts`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Shortfall {
    pub query_type: QueryType,
    pub bucket: HardnessLabel,
    pub filled: usize,
    pub quota: usize,
}

/// Bucket identifier inside a benchmark: the label every pair of the
/// bucket re-classifies to.
pub type BucketKey = (QueryType, HardnessLabel);

#[derive(Debug, Clone)]
pub struct Benchmark {
    pub buckets: BTreeMap<BucketKey, Vec<QueryRecord>>,
    pub shortfalls: Vec<Shortfall>,
    pub seed: u64,
    /// Content hash of the split the benchmark was generated from.
    pub split_fingerprint: String,
}

impl Benchmark {
    /// Total QA pairs (hard answers) in a bucket.
    pub fn bucket_size(&self, key: &BucketKey) -> usize {
        self.buckets
            .get(key)
            .map(|records| records.iter().map(|r| r.hard.len()).sum())
            .unwrap_or(0)
    }
}

/// File-name fragment for a bucket, e.g. `full-inference` or `partial-2p`.
pub fn bucket_slug(label: &HardnessLabel) -> String {
    match label {
        HardnessLabel::Partial(qt) => format!("partial-{qt}"),
        other => other.tag().to_string(),
    }
}

/// The buckets a query type can fill: one per reachable reduction plus
/// full inference.
pub fn buckets_for(qt: QueryType) -> Vec<HardnessLabel> {
    let mut buckets: Vec<HardnessLabel> = crate::hardness::possible_reductions(qt)
        .iter()
        .map(|&r| HardnessLabel::Partial(r))
        .collect();
    buckets.push(HardnessLabel::FullInference);
    buckets
}

/// Deterministic content hash of a split: dimensions, symbol tables and
/// all three triple lists.
pub fn split_fingerprint(split: &KnowledgeGraphSplit) -> String {
    let mut bytes = Vec::new();
    for table in [&split.entities, &split.relations] {
        for (_, name) in table.iter() {
            bytes.extend_from_slice(name.as_bytes());
            bytes.push(0);
        }
        bytes.push(1);
    }
    for graph in [&split.train, &split.valid, &split.test] {
        for t in graph.triples() {
            bytes.extend_from_slice(&t.subject.0.to_le_bytes());
            bytes.extend_from_slice(&t.relation.0.to_le_bytes());
            bytes.extend_from_slice(&t.object.0.to_le_bytes());
        }
        bytes.push(2);
    }
    sha256_hex(&bytes)
}

/// Walks `qt`'s template backward from a random answer entity. `None`
/// signals a dead end (missing incident edges, duplicate atoms, or an
/// instantiation the answer doesn't actually satisfy) — callers retry.
pub fn sample_query(
    qt: QueryType,
    split: &KnowledgeGraphSplit,
    rng: &mut ChaCha12Rng,
) -> Option<SampledQuery> {
    sample_query_on(qt, split, false, rng)
}

/// Like [`sample_query`] but optionally walking only the training graph
/// (for training-query generation, where answers must exist on it).
fn sample_query_on(
    qt: QueryType,
    split: &KnowledgeGraphSplit,
    walk_train: bool,
    rng: &mut ChaCha12Rng,
) -> Option<SampledQuery> {
    let walk: &KnowledgeGraph = if walk_train { &split.train } else { &split.full };
    let n = walk.entity_count();
    if n == 0 {
        return None;
    }
    let target = EntityId(rng.gen_range(0..n as u32));
    let template = qt.template_for_validation();
    let mut anchors: Vec<Option<EntityId>> = vec![None; qt.anchor_count()];
    let mut relations: Vec<Option<RelationId>> = vec![None; qt.relation_count()];
    let mut vars: Vec<Option<EntityId>> = vec![None; qt.var_count()];

    let resolve = |node: crate::query::Slot,
                   vars: &[Option<EntityId>],
                   anchors: &[Option<EntityId>]|
     -> Option<EntityId> {
        match node {
            crate::query::Slot::Target => Some(target),
            crate::query::Slot::Var(i) => vars[i],
            crate::query::Slot::Anchor(i) => anchors[i],
        }
    };

    // Positive atoms, walked target-first so every object is bound.
    let negated_flags: Vec<bool> = {
        // Template atom order matches Query atom order.
        let probe = Query::instantiate(
            qt,
            &vec![EntityId(0); qt.anchor_count()],
            &vec![RelationId(0); qt.relation_count()],
        )
        .expect("arity by construction");
        probe.atoms().iter().map(|a| a.negated).collect()
    };
    for i in (0..template.len()).rev() {
        if negated_flags[i] {
            continue;
        }
        let (s_slot, o_slot) = template[i];
        let obj = resolve(o_slot, &vars, &anchors).expect("objects are bound target-first");
        let edges = walk.out_edges(obj);
        if edges.is_empty() {
            return None;
        }
        let &(rel_out, subj) = edges.choose(rng).expect("non-empty");
        relations[i] = Some(rel_out.inverse());
        match s_slot {
            crate::query::Slot::Anchor(a) => anchors[a] = Some(subj),
            crate::query::Slot::Var(v) => vars[v] = Some(subj),
            crate::query::Slot::Target => unreachable!("targets are never subjects"),
        }
    }

    // Negated atoms draw their anchor and relation from a random global
    // edge; when the atom is fully bound, an existing edge is a collision
    // worth a few local retries.
    let all_edges: Vec<crate::kg::Triple> = walk.triples().collect();
    for i in 0..template.len() {
        if !negated_flags[i] {
            continue;
        }
        let (s_slot, o_slot) = template[i];
        let mut placed = false;
        for _ in 0..32 {
            let t = all_edges.choose(rng)?;
            if let crate::query::Slot::Anchor(a) = s_slot {
                anchors[a] = Some(t.subject);
            }
            relations[i] = Some(t.relation);
            let s_bound = resolve(s_slot, &vars, &anchors);
            let o_bound = resolve(o_slot, &vars, &anchors);
            match (s_bound, o_bound) {
                (Some(s), Some(o)) if split.full.contains(s, t.relation, o) => continue,
                _ => {
                    placed = true;
                    break;
                }
            }
        }
        if !placed {
            return None;
        }
    }

    let anchors: Vec<EntityId> = anchors.into_iter().collect::<Option<_>>()?;
    let relation_ids: Vec<RelationId> = relations.into_iter().collect::<Option<_>>()?;
    let query = Query::instantiate(qt, &anchors, &relation_ids).expect("arity by construction");

    // Degenerate walks that collapse two atoms into one are dead ends.
    let mut seen_atoms = HashSet::new();
    for atom in query.atoms() {
        if !seen_atoms.insert((atom.subject, atom.relation, atom.object, atom.negated)) {
            return None;
        }
    }
    // The walk guarantees the positive atoms hold on the walked graph, but
    // a negated atom can still eliminate the target under every
    // assignment, so verify end to end.
    let full_answers = answers(&query, &split.full).expect("ids in range by construction");
    let train_answers = answers(&query, &split.train).expect("ids in range by construction");
    let verified =
        if walk_train { train_answers.contains(&target) } else { full_answers.contains(&target) };
    if !verified {
        return None;
    }
    Some(SampledQuery { query, full_answers, train_answers })
}

fn type_stream(seed: u64, qt: QueryType) -> ChaCha12Rng {
    let index = QueryType::ALL.iter().position(|&t| t == qt).expect("known type") as u64;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(1 + index);
    rng
}

/// Caps and tallies for one query type.
struct CapState {
    anchor_limit: f64,
    relation_limit: f64,
    anchors: HashMap<EntityId, usize>,
    relations: HashMap<RelationId, usize>,
}

impl CapState {
    fn admits(&self, query: &Query) -> bool {
        let (anchors, relations) = dedup_slots(query);
        anchors.iter().all(|a| {
            (self.anchors.get(a).copied().unwrap_or(0) + 1) as f64 <= self.anchor_limit + 1e-9
        }) && relations.iter().all(|r| {
            (self.relations.get(r).copied().unwrap_or(0) + 1) as f64
                <= self.relation_limit + 1e-9
        })
    }

    fn admit(&mut self, query: &Query) {
        let (anchors, relations) = dedup_slots(query);
        for a in anchors {
            *self.anchors.entry(a).or_default() += 1;
        }
        for r in relations {
            *self.relations.entry(r).or_default() += 1;
        }
    }
}

fn dedup_slots(query: &Query) -> (Vec<EntityId>, Vec<RelationId>) {
    let mut anchors = query.anchors();
    anchors.sort_unstable();
    anchors.dedup();
    let mut relations = query.relations();
    relations.sort_unstable();
    relations.dedup();
    (anchors, relations)
}

pub fn generate_balanced(
    split: &KnowledgeGraphSplit,
    config: &GenerationConfig,
) -> Result<Benchmark, GenError> {
    config.validate()?;
    if !split.full.augmented() {
        return Err(GenError::NotAugmented);
    }
    let classify_config = ClassifyConfig::default();
    let quota = config.quota_per_bucket;
    let mut benchmark = Benchmark {
        buckets: BTreeMap::new(),
        shortfalls: Vec::new(),
        seed: config.seed,
        split_fingerprint: split_fingerprint(split),
    };
    for &qt in &config.types {
        let mut rng = type_stream(config.seed, qt);
        let buckets = buckets_for(qt);
        let mut filled: BTreeMap<HardnessLabel, Vec<QueryRecord>> =
            buckets.iter().map(|&b| (b, Vec::new())).collect();
        let mut sizes: BTreeMap<HardnessLabel, usize> =
            buckets.iter().map(|&b| (b, 0)).collect();
        let mut caps = CapState {
            anchor_limit: config.anchor_cap_fraction * quota as f64,
            relation_limit: config.relation_cap_fraction * quota as f64,
            anchors: HashMap::new(),
            relations: HashMap::new(),
        };
        let mut seen = HashSet::new();
        let mut attempts = 0usize;
        while sizes.values().any(|&s| s < quota) && attempts < config.max_attempts {
            attempts += 1;
            let Some(sample) = sample_query(qt, split, &mut rng) else {
                continue;
            };
            if !seen.insert(sample.query.clone()) {
                continue;
            }
            // Pairs one query can contribute, grouped by bucket.
            let mut by_bucket: BTreeMap<HardnessLabel, Vec<EntityId>> = BTreeMap::new();
            for &a in &sample.full_answers {
                let qa = QaPair { query: sample.query.clone(), answer: a };
                let label = classify_with(&qa, split, &classify_config)
                    .expect("answers come from the full graph");
                match label {
                    HardnessLabel::Trivial | HardnessLabel::FilteredOut => {}
                    other => by_bucket.entry(other).or_default().push(a),
                }
            }
            for (label, mut candidates) in by_bucket {
                let Some(&size) = sizes.get(&label) else {
                    // Unreachable: the classifier only returns declared
                    // reductions, all of which have buckets.
                    continue;
                };
                let remaining = quota - size;
                if remaining == 0 {
                    continue;
                }
                if !caps.admits(&sample.query) {
                    continue;
                }
                let taken: Vec<EntityId> = if candidates.len() <= remaining {
                    candidates
                } else {
                    // Seeded uniform subsample of the overflow.
                    candidates.shuffle(&mut rng);
                    candidates.truncate(remaining);
                    candidates.sort_unstable();
                    candidates
                };
                if taken.is_empty() {
                    continue;
                }
                caps.admit(&sample.query);
                *sizes.get_mut(&label).unwrap() += taken.len();
                let easy: Vec<EntityId> = sample
                    .full_answers
                    .iter()
                    .copied()
                    .filter(|a| !taken.contains(a))
                    .collect();
                filled
                    .get_mut(&label)
                    .unwrap()
                    .push(QueryRecord::new(sample.query.clone(), easy, taken));
            }
        }
        for (&label, &size) in &sizes {
            if size < quota {
                benchmark.shortfalls.push(Shortfall {
                    query_type: qt,
                    bucket: label,
                    filled: size,
                    quota,
                });
            }
        }
        for (label, records) in filled {
            benchmark.buckets.insert((qt, label), records);
        }
    }
    Ok(benchmark)
}

/// Training queries: one 1p record per forward training triple, then as
/// many sampled queries per remaining type, with answers taken from the
/// training graph only.
pub fn generate_training_queries(
    split: &KnowledgeGraphSplit,
    config: &GenerationConfig,
) -> Result<BTreeMap<QueryType, Vec<QueryRecord>>, GenError> {
    config.validate()?;
    if !split.full.augmented() {
        return Err(GenError::NotAugmented);
    }
    let mut out: BTreeMap<QueryType, Vec<QueryRecord>> = BTreeMap::new();
    let forward: Vec<crate::kg::Triple> =
        split.train.triples().filter(|t| t.relation.is_forward()).collect();
    let per_type = forward.len();
    if config.types.contains(&QueryType::OneP) {
        let records = forward
            .iter()
            .map(|t| {
                let query = Query::instantiate(QueryType::OneP, &[t.subject], &[t.relation])
                    .expect("1p arity");
                QueryRecord::new(query, Vec::new(), vec![t.object])
            })
            .collect();
        out.insert(QueryType::OneP, records);
    }
    for &qt in &config.types {
        if qt == QueryType::OneP {
            continue;
        }
        let mut rng = type_stream(config.seed ^ 0x7261_696e, qt);
        let mut records = Vec::with_capacity(per_type);
        let mut seen = HashSet::new();
        let mut attempts = 0usize;
        while records.len() < per_type && attempts < config.max_attempts {
            attempts += 1;
            let Some(sample) = sample_query_on(qt, split, true, &mut rng) else {
                continue;
            };
            if sample.train_answers.is_empty() || !seen.insert(sample.query.clone()) {
                continue;
            }
            let hard: Vec<EntityId> = sample.train_answers.iter().copied().collect();
            records.push(QueryRecord::new(sample.query, Vec::new(), hard));
        }
        out.insert(qt, records);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{random_split, RandomSplitConfig};

    fn test_split(seed: u64) -> KnowledgeGraphSplit {
        random_split(&RandomSplitConfig {
            entities: 40,
            relations: 5,
            edges: 420,
            seed,
            ..RandomSplitConfig::default()
        })
        .augment_with_inverses()
        .unwrap()
    }

    #[test]
    fn sampling_requires_an_augmented_split() {
        let split = random_split(&RandomSplitConfig::default());
        let config = GenerationConfig { quota_per_bucket: 2, ..GenerationConfig::default() };
        assert!(matches!(generate_balanced(&split, &config), Err(GenError::NotAugmented)));
    }

    #[test]
    fn sampled_queries_contain_their_target() {
        let split = test_split(3);
        for qt in QueryType::ALL {
            let mut rng = type_stream(9, qt);
            let mut found = 0;
            for _ in 0..400 {
                if let Some(s) = sample_query(qt, &split, &mut rng) {
                    assert!(!s.full_answers.is_empty(), "{qt}: sampled query has no answers");
                    found += 1;
                }
            }
            assert!(found > 0, "{qt}: no sample in 400 attempts");
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let split = test_split(4);
        for qt in [QueryType::ThreeP, QueryType::TwoInOneP] {
            let mut a = type_stream(5, qt);
            let mut b = type_stream(5, qt);
            for _ in 0..50 {
                let qa = sample_query(qt, &split, &mut a).map(|s| s.query);
                let qb = sample_query(qt, &split, &mut b).map(|s| s.query);
                assert_eq!(qa, qb);
            }
        }
    }

    #[test]
    fn balanced_benchmark_fills_buckets_and_reclassifies_cleanly() {
        let split = test_split(11);
        // Caps stay non-binding here; enforcement has its own test below.
        let config = GenerationConfig {
            quota_per_bucket: 8,
            anchor_cap_fraction: 1.0,
            relation_cap_fraction: 1.0,
            types: vec![QueryType::TwoP, QueryType::TwoI, QueryType::TwoU],
            seed: 21,
            max_attempts: 40_000,
            ..GenerationConfig::default()
        };
        let benchmark = generate_balanced(&split, &config).unwrap();
        assert!(benchmark.shortfalls.is_empty(), "shortfalls: {:?}", benchmark.shortfalls);
        // 2p: buckets partial-1p + full; 2i: partial-1p + full; 2u: full only.
        assert_eq!(benchmark.buckets.len(), 5);
        for (key, records) in &benchmark.buckets {
            let total: usize = records.iter().map(|r| r.hard.len()).sum();
            assert_eq!(total, 8, "bucket {key:?}");
            for record in records {
                for &a in &record.hard {
                    let qa = QaPair { query: record.query.clone(), answer: a };
                    let label = crate::hardness::classify(&qa, &split).unwrap();
                    assert_eq!(label, key.1, "re-classification moved a pair");
                }
            }
        }
    }

    #[test]
    fn caps_bound_anchor_and_relation_reuse() {
        let split = test_split(7);
        let quota = 10;
        let config = GenerationConfig {
            quota_per_bucket: quota,
            anchor_cap_fraction: 0.3,
            relation_cap_fraction: 0.5,
            types: vec![QueryType::TwoP],
            seed: 2,
            max_attempts: 40_000,
            ..GenerationConfig::default()
        };
        let benchmark = generate_balanced(&split, &config).unwrap();
        // Caps count each anchor/relation once per accepted record within
        // the whole type, bounded by cap × quota.
        let mut anchor_counts: HashMap<EntityId, usize> = HashMap::new();
        let mut relation_counts: HashMap<RelationId, usize> = HashMap::new();
        for records in benchmark.buckets.values() {
            for record in records {
                let (anchors, relations) = dedup_slots(&record.query);
                for a in anchors {
                    *anchor_counts.entry(a).or_default() += 1;
                }
                for r in relations {
                    *relation_counts.entry(r).or_default() += 1;
                }
            }
        }
        assert!(!anchor_counts.is_empty() && !relation_counts.is_empty());
        for &c in anchor_counts.values() {
            assert!(c as f64 <= 0.3 * quota as f64 + 1e-9, "anchor used {c} times");
        }
        for &c in relation_counts.values() {
            assert!(c as f64 <= 0.5 * quota as f64 + 1e-9, "relation used {c} times");
        }
    }

    #[test]
    fn benchmarks_are_deterministic_and_type_independent() {
        let split = test_split(13);
        let full_config = GenerationConfig {
            quota_per_bucket: 6,
            anchor_cap_fraction: 1.0,
            relation_cap_fraction: 1.0,
            types: vec![QueryType::TwoP, QueryType::ThreeP],
            seed: 77,
            max_attempts: 8_000,
            ..GenerationConfig::default()
        };
        let only_3p = GenerationConfig {
            types: vec![QueryType::ThreeP],
            ..full_config.clone()
        };
        let a = generate_balanced(&split, &full_config).unwrap();
        let b = generate_balanced(&split, &full_config).unwrap();
        let c = generate_balanced(&split, &only_3p).unwrap();
        for (key, records) in &a.buckets {
            assert_eq!(records, &b.buckets[key]);
            if key.0 == QueryType::ThreeP {
                assert_eq!(records, &c.buckets[key], "type streams are not independent");
            }
        }
    }

    #[test]
    fn training_queries_cover_every_forward_triple() {
        let split = test_split(5);
        let forward = split.train.triples().filter(|t| t.relation.is_forward()).count();
        let config = GenerationConfig {
            types: vec![QueryType::OneP, QueryType::TwoP],
            seed: 3,
            max_attempts: 200_000,
            ..GenerationConfig::default()
        };
        let training = generate_training_queries(&split, &config).unwrap();
        assert_eq!(training[&QueryType::OneP].len(), forward);
        assert_eq!(training[&QueryType::TwoP].len(), forward);
        for record in &training[&QueryType::TwoP] {
            let on_train = answers(&record.query, &split.train).unwrap();
            for a in &record.hard {
                assert!(on_train.contains(a));
            }
            assert!(record.easy.is_empty());
        }
    }

    #[test]
    fn fingerprints_track_split_content() {
        let a = split_fingerprint(&test_split(1));
        let b = split_fingerprint(&test_split(1));
        let c = split_fingerprint(&test_split(2));
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
