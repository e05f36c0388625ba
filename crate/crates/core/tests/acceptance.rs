//! Acceptance suite: one test per release criterion, each finishing with a
//! single `criterion N: PASS` line (visible with `--nocapture`). Criterion 2
//! depends on an external dataset and prints a SKIP line when the
//! `CQA_FB15K237_DIR` environment variable is unset.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::time::Instant;

use chrono::{Duration, NaiveDate, NaiveDateTime};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use cqa_core::eval::{evaluate_query, filtered_rank, mann_whitney_u, TiePolicy};
use cqa_core::generator::{buckets_for, generate_balanced, sample_query, GenerationConfig};
use cqa_core::hardness::{classify_with, ClassifyConfig, HardnessLabel};
use cqa_core::kg::{
    load_split_dir, load_timed_triples, temporal_split, EntityId, KnowledgeGraph,
    KnowledgeGraphSplit, RelationId, SymbolTable, Triple,
};
use cqa_core::matcher::answers;
use cqa_core::oracle::classify_naive;
use cqa_core::predictor::{normalize_scores, train, ComplEx, TrainConfig, TripleScorer};
use cqa_core::query::{parse_query, QaPair, Query, QueryType};
use cqa_core::solver::{exact_oracle_solver, ranked_entities, solve, SolverConfig, TNorm};
use cqa_core::synthetic::{random_query, random_split, RandomSplitConfig};

/// Splits sized so the exhaustive reference stays affordable on
/// many-variable shapes while honouring the stated bounds (at most 25
/// entities, 4 relations and 150 edges).
fn reference_sized_config(qt: QueryType, seed: u64) -> RandomSplitConfig {
    let entities = match qt.var_count() {
        0 | 1 => 25,
        2 => 16,
        _ => 11,
    };
    RandomSplitConfig {
        entities,
        relations: 2,
        edges: ((entities * entities) / 4).min(150),
        train_fraction: 0.6,
        valid_fraction: 0.2,
        seed,
    }
}

#[test]
fn criterion_1_classifier_matches_exhaustive_reference_on_1000_pairs() {
    let started = Instant::now();
    const SPLITS: usize = 50;
    const PAIRS_PER_SPLIT: usize = 20;
    let config = ClassifyConfig::default();
    let mut pairs = 0usize;
    let mut mismatches: Vec<String> = Vec::new();
    for i in 0..SPLITS {
        let qt = QueryType::ALL[i % QueryType::ALL.len()];
        let split = random_split(&reference_sized_config(qt, 1000 + i as u64))
            .augment_with_inverses()
            .expect("random splits augment cleanly");
        let mut rng = ChaCha12Rng::seed_from_u64(777 + i as u64);
        let mut collected = 0usize;
        let mut attempts = 0usize;
        'pairs: while collected < PAIRS_PER_SPLIT {
            attempts += 1;
            assert!(attempts < 200_000, "criterion 1: starved of {qt} pairs on split {i}");
            let Some(sample) = sample_query(qt, &split, &mut rng) else { continue };
            for &answer in &sample.full_answers {
                let qa = QaPair { query: sample.query.clone(), answer };
                let fast = classify_with(&qa, &split, &config).expect("full-graph answer");
                let slow = classify_naive(&qa, &split, true).expect("full-graph answer");
                if fast != slow && mismatches.len() < 5 {
                    mismatches.push(format!("{qt} split {i} answer {answer:?}: {fast} vs {slow}"));
                }
                pairs += 1;
                collected += 1;
                if collected == PAIRS_PER_SPLIT {
                    break 'pairs;
                }
            }
        }
    }
    assert_eq!(pairs, SPLITS * PAIRS_PER_SPLIT, "criterion 1: pair budget not met");
    assert!(mismatches.is_empty(), "criterion 1: label mismatches: {mismatches:?}");
    let secs = started.elapsed().as_secs_f64();
    assert!(secs < 60.0, "criterion 1: took {secs:.1}s, budget 60s");
    println!(
        "criterion 1: PASS — classifier agreed with the exhaustive reference on {pairs} pairs \
         across {SPLITS} random splits covering all 16 shapes ({secs:.1}s)"
    );
}

const EXTERNAL_DATASET_ENV: &str = "CQA_FB15K237_DIR";

/// Expected hardness mix for the 2p test queries of the standard FB15k-237
/// complex-query benchmark: 98.1% of pairs reduce to a single missing hop,
/// 1.9% need every hop predicted. Runs only when `CQA_FB15K237_DIR` points
/// at a directory with `train.txt`/`valid.txt`/`test.txt` and the 2p test
/// queries in canonical JSON-lines form as `2p-test.jsonl` (relation ids in
/// the inverse-augmented space).
#[test]
fn criterion_2_external_2p_benchmark_reduction_shares() {
    let Some(dir) = std::env::var_os(EXTERNAL_DATASET_ENV) else {
        println!(
            "criterion 2: SKIP — set {EXTERNAL_DATASET_ENV} to a directory holding \
             train.txt/valid.txt/test.txt and 2p-test.jsonl to enable this check"
        );
        return;
    };
    let dir = std::path::PathBuf::from(dir);
    let split = load_split_dir(&dir)
        .and_then(|s| s.augment_with_inverses())
        .expect("criterion 2: dataset loads");
    let queries =
        std::fs::read_to_string(dir.join("2p-test.jsonl")).expect("criterion 2: 2p-test.jsonl");
    let config = ClassifyConfig::default();
    let (mut n_one_hop, mut n_full, mut n_other) = (0u64, 0u64, 0u64);
    for line in queries.lines().filter(|l| !l.trim().is_empty()) {
        let record = parse_query(line).expect("criterion 2: canonical query record");
        assert_eq!(record.query.query_type(), QueryType::TwoP, "criterion 2: 2p queries only");
        for &answer in &record.hard {
            let qa = QaPair { query: record.query.clone(), answer };
            match classify_with(&qa, &split, &config).expect("criterion 2: answer holds") {
                HardnessLabel::Partial(QueryType::OneP) => n_one_hop += 1,
                HardnessLabel::Partial(_) => n_other += 1,
                HardnessLabel::FullInference => n_full += 1,
                HardnessLabel::Trivial | HardnessLabel::FilteredOut => {}
            }
        }
    }
    let denom = (n_one_hop + n_full + n_other) as f64;
    assert!(denom > 0.0, "criterion 2: no non-trivial pairs found");
    let pct_one_hop = 100.0 * n_one_hop as f64 / denom;
    let pct_full = 100.0 * n_full as f64 / denom;
    assert!(
        (pct_one_hop - 98.1).abs() <= 0.3,
        "criterion 2: 1p share {pct_one_hop:.2}% vs expected 98.1% ± 0.3pp"
    );
    assert!(
        (pct_full - 1.9).abs() <= 0.3,
        "criterion 2: full-inference share {pct_full:.2}% vs expected 1.9% ± 0.3pp"
    );
    println!(
        "criterion 2: PASS — 2p pairs reduce to 1p {pct_one_hop:.2}% / need full inference \
         {pct_full:.2}% (expected 98.1% / 1.9% ± 0.3pp)"
    );
}

#[test]
fn criterion_3_balanced_generation_fills_every_bucket_under_caps() {
    let started = Instant::now();
    let split = random_split(&RandomSplitConfig {
        entities: 300,
        relations: 60,
        edges: 6000,
        train_fraction: 0.7,
        valid_fraction: 0.1,
        seed: 5,
    })
    .augment_with_inverses()
    .expect("random splits augment cleanly");
    let config = GenerationConfig { seed: 9, ..GenerationConfig::default() };
    assert_eq!(config.quota_per_bucket, 100, "criterion 3: quota");
    assert_eq!(config.anchor_cap_fraction, 0.2, "criterion 3: anchor cap");
    assert_eq!(config.relation_cap_fraction, 0.2, "criterion 3: relation cap");
    let bench = generate_balanced(&split, &config).expect("generation succeeds");

    assert!(bench.shortfalls.is_empty(), "criterion 3: shortfalls {:?}", bench.shortfalls);
    let expected_buckets: usize = QueryType::ALL.iter().map(|&qt| buckets_for(qt).len()).sum();
    assert_eq!(bench.buckets.len(), expected_buckets, "criterion 3: bucket coverage");
    for &(qt, label) in bench.buckets.keys() {
        assert!(
            matches!(label, HardnessLabel::Partial(_) | HardnessLabel::FullInference),
            "criterion 3: bucket {qt}/{label} admits trivial or filtered pairs"
        );
        assert_eq!(
            bench.bucket_size(&(qt, label)),
            config.quota_per_bucket,
            "criterion 3: bucket {qt}/{label} not exactly at quota"
        );
    }

    // Re-classify every delivered pair and recompute the per-type reuse
    // tallies independently of the generator's own bookkeeping.
    let classify_config = ClassifyConfig::default();
    let reuse_limit = (config.anchor_cap_fraction * config.quota_per_bucket as f64) as usize;
    let mut checked_pairs = 0usize;
    let mut anchor_tallies: HashMap<(QueryType, EntityId), usize> = HashMap::new();
    let mut relation_tallies: HashMap<(QueryType, RelationId), usize> = HashMap::new();
    for (&(qt, label), records) in &bench.buckets {
        for record in records {
            let mut anchors = record.query.anchors();
            anchors.sort_unstable();
            anchors.dedup();
            for a in anchors {
                *anchor_tallies.entry((qt, a)).or_default() += 1;
            }
            let mut relations = record.query.relations();
            relations.sort_unstable();
            relations.dedup();
            for r in relations {
                *relation_tallies.entry((qt, r)).or_default() += 1;
            }
            for &answer in &record.hard {
                let qa = QaPair { query: record.query.clone(), answer };
                let got = classify_with(&qa, &split, &classify_config).expect("pair classifies");
                assert_eq!(got, label, "criterion 3: {qt} pair filed under {label}, got {got}");
                checked_pairs += 1;
            }
        }
    }
    assert_eq!(
        checked_pairs,
        expected_buckets * config.quota_per_bucket,
        "criterion 3: delivered pair count"
    );
    for (&(qt, a), &tally) in &anchor_tallies {
        assert!(
            tally <= reuse_limit,
            "criterion 3: anchor {a:?} used by {tally} {qt} records, cap {reuse_limit}"
        );
    }
    for (&(qt, r), &tally) in &relation_tallies {
        assert!(
            tally <= reuse_limit,
            "criterion 3: relation {r:?} used by {tally} {qt} records, cap {reuse_limit}"
        );
    }
    let secs = started.elapsed().as_secs_f64();
    assert!(secs < 120.0, "criterion 3: took {secs:.1}s, budget 120s");
    println!(
        "criterion 3: PASS — {expected_buckets} buckets all filled to exactly {} pairs, every \
         pair re-classified to its bucket, reuse tallies ≤ {reuse_limit} per type ({secs:.1}s)",
        config.quota_per_bucket
    );
}

#[test]
fn criterion_4_oracle_solver_reproduces_answer_sets_with_perfect_rank() {
    let started = Instant::now();
    const QUERIES: usize = 500;
    let split = random_split(&RandomSplitConfig {
        entities: 20,
        relations: 4,
        edges: 100,
        train_fraction: 0.6,
        valid_fraction: 0.2,
        seed: 0xACCE,
    });
    let mut rng = ChaCha12Rng::seed_from_u64(4242);
    let mut answered = 0usize;
    let mut rr_sum = 0.0f64;
    for i in 0..QUERIES {
        let qt = QueryType::ALL[i % QueryType::ALL.len()];
        let query = random_query(qt, split.entities.len(), split.relations.len(), &mut rng);
        let ranking = exact_oracle_solver(&query, &split.full).expect("oracle solve");
        let expected = answers(&query, &split.full).expect("matcher agrees on ids");
        for &s in &ranking.scores {
            assert!(s == 0.0 || s == 1.0, "criterion 4: oracle score {s} is not an indicator");
        }
        let top: BTreeSet<EntityId> = ranking
            .scores
            .iter()
            .enumerate()
            .filter(|&(_, &s)| s == 1.0)
            .map(|(e, _)| EntityId(e as u32))
            .collect();
        assert_eq!(top, expected, "criterion 4: top set diverges for {qt} query {i}");
        if !expected.is_empty() {
            let mut rr = 0.0;
            for &a in &expected {
                rr += 1.0 / filtered_rank(&ranking.scores, a, &expected, TiePolicy::Average);
            }
            rr_sum += rr / expected.len() as f64;
            answered += 1;
        }
    }
    assert!(answered > 0, "criterion 4: every sampled query was empty");
    let mrr = rr_sum / answered as f64;
    assert_eq!(mrr, 1.0, "criterion 4: filtered MRR {mrr} is not exactly 1.0");
    let secs = started.elapsed().as_secs_f64();
    assert!(secs < 60.0, "criterion 4: took {secs:.1}s, budget 60s");
    println!(
        "criterion 4: PASS — {QUERIES} queries across all shapes, top sets equal the matcher's \
         answers, filtered MRR exactly 1.0 over {answered} non-empty queries ({secs:.1}s)"
    );
}

/// Predictor whose designated rows are exact indicators; every other row is
/// a deterministic hash-derived value in [0, 1). Pinning the rows that feed
/// the trained hops leaves exactly one live path through each chain, so the
/// final scores must equal the last hop's normalized row bit for bit.
struct PinnedRowScorer {
    entity_count: usize,
    pinned: HashMap<(EntityId, RelationId), EntityId>,
}

impl TripleScorer for PinnedRowScorer {
    fn entity_count(&self) -> usize {
        self.entity_count
    }

    fn score(&self, s: EntityId, r: RelationId, o: EntityId) -> f64 {
        match self.pinned.get(&(s, r)) {
            Some(&hit) => {
                if o == hit {
                    1.0
                } else {
                    0.0
                }
            }
            None => hashed_unit_score(s, r, o),
        }
    }
}

/// Deterministic pseudo-random value in [0, 1) from the triple's ids.
fn hashed_unit_score(s: EntityId, r: RelationId, o: EntityId) -> f64 {
    let mut x = ((s.0 as u64) << 40) ^ ((r.0 as u64) << 20) ^ (o.0 as u64);
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x ^= x >> 30;
    x = x.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^= x >> 31;
    (x % 1_000_003) as f64 / 1_000_003.0
}

struct ChainFixture {
    split: KnowledgeGraphSplit,
    scorer: PinnedRowScorer,
    query: Query,
    hard_answer: EntityId,
    final_subject: EntityId,
    final_relation: RelationId,
}

/// A query whose non-final hops are all training edges and whose final hop
/// is a held-out edge: classification must reduce it to a single missing
/// hop from `final_subject` via `final_relation`.
fn chain_fixture(qt: QueryType) -> ChainFixture {
    let n = 9usize;
    let mut entities = SymbolTable::new();
    for i in 0..n {
        entities.intern(&format!("e{i}"));
    }
    let mut relations = SymbolTable::new();
    for i in 0..3 {
        relations.intern(&format!("r{i}"));
    }
    let e = EntityId;
    let r = RelationId;
    let (train, test, query, pinned) = match qt {
        QueryType::TwoP => (
            vec![Triple::new(e(0), r(0), e(2))],
            vec![Triple::new(e(2), r(1), e(4))],
            Query::instantiate(qt, &[e(0)], &[r(0), r(1)]).expect("arity"),
            HashMap::from([((e(0), r(0)), e(2))]),
        ),
        QueryType::ThreeP => (
            vec![Triple::new(e(0), r(0), e(2)), Triple::new(e(2), r(1), e(3))],
            vec![Triple::new(e(3), r(2), e(5))],
            Query::instantiate(qt, &[e(0)], &[r(0), r(1), r(2)]).expect("arity"),
            HashMap::from([((e(0), r(0)), e(2)), ((e(2), r(1)), e(3))]),
        ),
        QueryType::TwoIOneP => (
            vec![Triple::new(e(0), r(0), e(2)), Triple::new(e(1), r(1), e(2))],
            vec![Triple::new(e(2), r(2), e(6))],
            Query::instantiate(qt, &[e(0), e(1)], &[r(0), r(1), r(2)]).expect("arity"),
            HashMap::from([((e(0), r(0)), e(2)), ((e(1), r(1)), e(2))]),
        ),
        other => panic!("no chain fixture for {other}"),
    };
    let final_edge = test[0];
    let split = KnowledgeGraphSplit::new(entities, relations, train, Vec::new(), test)
        .expect("disjoint fixture parts");
    ChainFixture {
        split,
        scorer: PinnedRowScorer { entity_count: n, pinned },
        query,
        hard_answer: final_edge.object,
        final_subject: final_edge.subject,
        final_relation: final_edge.relation,
    }
}

#[test]
fn criterion_5_hybrid_chain_scores_equal_the_residual_link_prediction_row() {
    let config = SolverConfig::default();
    assert!(matches!(config.tnorm, TNorm::Product), "product t-norm is the default");
    for qt in [QueryType::TwoP, QueryType::ThreeP, QueryType::TwoIOneP] {
        let fixture = chain_fixture(qt);
        let qa = QaPair { query: fixture.query.clone(), answer: fixture.hard_answer };
        let label =
            classify_with(&qa, &fixture.split, &ClassifyConfig::default()).expect("fixture pair");
        assert_eq!(
            label,
            HardnessLabel::Partial(QueryType::OneP),
            "criterion 5: {qt} fixture must reduce to a single missing hop"
        );

        let n = fixture.split.full.entity_count();
        let raw_row: Vec<f64> = (0..n)
            .map(|o| {
                fixture.scorer.score(
                    fixture.final_subject,
                    fixture.final_relation,
                    EntityId(o as u32),
                )
            })
            .collect();
        let expected = normalize_scores(&raw_row).expect("finite row");

        let full = solve(&fixture.query, &fixture.scorer, Some(&fixture.split.train), &config)
            .expect("chain solve");
        let residual =
            Query::instantiate(QueryType::OneP, &[fixture.final_subject], &[fixture.final_relation])
                .expect("arity");
        let one_hop = solve(&residual, &fixture.scorer, Some(&fixture.split.train), &config)
            .expect("residual solve");

        for o in 0..n {
            assert!(
                (full.scores[o] - expected[o]).abs() <= 1e-12,
                "criterion 5: {qt} entity {o}: chain score {} vs normalized row {}",
                full.scores[o],
                expected[o]
            );
            assert!(
                (full.scores[o] - one_hop.scores[o]).abs() <= 1e-12,
                "criterion 5: {qt} entity {o}: chain score {} vs one-hop score {}",
                full.scores[o],
                one_hop.scores[o]
            );
        }
        assert_eq!(
            ranked_entities(&full),
            ranked_entities(&one_hop),
            "criterion 5: {qt} ranking must equal the one-hop ranking"
        );
    }
    println!(
        "criterion 5: PASS — 2p/3p/2i1p chains with trained prefixes score like their residual \
         one-hop queries within 1e-12, with identical rankings"
    );
}

#[test]
fn criterion_6_union_scores_equal_the_branch_disjunction_exactly() {
    let split = random_split(&RandomSplitConfig {
        entities: 60,
        relations: 6,
        edges: 700,
        train_fraction: 0.7,
        valid_fraction: 0.1,
        seed: 3,
    })
    .augment_with_inverses()
    .expect("random splits augment cleanly");
    let gen = GenerationConfig {
        quota_per_bucket: 25,
        anchor_cap_fraction: 1.0,
        relation_cap_fraction: 1.0,
        seed: 21,
        types: vec![QueryType::TwoU],
        ..GenerationConfig::default()
    };
    let bench = generate_balanced(&split, &gen).expect("union benchmark");
    assert!(bench.shortfalls.is_empty(), "criterion 6: shortfalls {:?}", bench.shortfalls);
    let model = ComplEx::new_random(
        split.full.entity_count(),
        split.full.relation_count(),
        8,
        0.5,
        5,
    )
    .expect("model dims");
    let mut checked = 0usize;
    for (&(qt, _), records) in &bench.buckets {
        assert_eq!(qt, QueryType::TwoU, "criterion 6: only 2u records requested");
        for record in records {
            let anchors = record.query.anchors();
            let relations = record.query.relations();
            let left_query =
                Query::instantiate(QueryType::OneP, &[anchors[0]], &[relations[0]]).expect("arity");
            let right_query =
                Query::instantiate(QueryType::OneP, &[anchors[1]], &[relations[1]]).expect("arity");
            for tnorm in [TNorm::Product, TNorm::Minimum] {
                let config = SolverConfig { tnorm, ..SolverConfig::default() };
                let union =
                    solve(&record.query, &model, Some(&split.train), &config).expect("union");
                let left =
                    solve(&left_query, &model, Some(&split.train), &config).expect("left branch");
                let right =
                    solve(&right_query, &model, Some(&split.train), &config).expect("right branch");
                for o in 0..union.scores.len() {
                    let manual = tnorm.disjoin(left.scores[o], right.scores[o]);
                    assert!(
                        union.scores[o] == manual,
                        "criterion 6: entity {o}: union score {} != branch disjunction {manual} \
                         under {tnorm:?}",
                        union.scores[o]
                    );
                }
            }
            checked += 1;
        }
    }
    assert!(checked > 0, "criterion 6: no union records generated");
    println!(
        "criterion 6: PASS — {checked} generated 2u queries score exactly as the element-wise \
         disjunction of their two 1p branches under both t-norms"
    );
}

#[test]
fn criterion_7_training_memorizes_a_toy_graph_and_gradients_match_numerics() {
    let started = Instant::now();
    let n = 30u32;
    let mut triples = Vec::new();
    for i in 0..n {
        triples.push(Triple::new(EntityId(i), RelationId(0), EntityId((i + 1) % n)));
        triples.push(Triple::new(EntityId(i), RelationId(1), EntityId((i + 7) % n)));
    }
    let graph =
        KnowledgeGraph::from_triples(n as usize, 2, triples.clone()).expect("toy graph is valid");
    let cfg = TrainConfig {
        rank: 64,
        epochs: 200,
        batch_size: 32,
        learning_rate: 0.1,
        reg_weight: 1e-3,
        init_scale: 0.1,
        seed: 7,
    };
    let (model, losses) = train(&graph, &cfg).expect("training runs");
    assert!(
        losses.last().expect("epochs recorded") < &losses[0],
        "criterion 7: training loss did not fall"
    );

    let mut objects_by_pair: HashMap<(EntityId, RelationId), BTreeSet<EntityId>> = HashMap::new();
    for t in &triples {
        objects_by_pair.entry((t.subject, t.relation)).or_default().insert(t.object);
    }
    let mut rr_sum = 0.0;
    for t in &triples {
        let scores = model.score_all(t.subject, t.relation);
        let exclude = &objects_by_pair[&(t.subject, t.relation)];
        rr_sum += 1.0 / filtered_rank(&scores, t.object, exclude, TiePolicy::Average);
    }
    let mrr = rr_sum / triples.len() as f64;
    assert!(mrr >= 0.95, "criterion 7: filtered train MRR {mrr:.4} below 0.95");

    // Analytic gradients vs central finite differences on a fresh model,
    // where gradients are far from zero and well conditioned.
    let mut probe_model = ComplEx::new_random(n as usize, 2, 8, 0.3, 42).expect("probe model");
    let mut rng = ChaCha12Rng::seed_from_u64(9);
    let batch: Vec<Triple> = (0..20).map(|_| triples[rng.gen_range(0..triples.len())]).collect();
    let reg = 0.05;
    let (_, grad_ent, grad_rel) = probe_model.batch_gradients(&batch, reg);
    let h = 1e-6;
    let mut max_rel_err = 0.0f64;
    for probe in 0..20 {
        let on_entities = rng.gen_bool(0.5);
        let (idx, analytic) = if on_entities {
            let i = rng.gen_range(0..grad_ent.len());
            (i, grad_ent[i])
        } else {
            let i = rng.gen_range(0..grad_rel.len());
            (i, grad_rel[i])
        };
        let mut loss_shifted = |delta: f64| -> f64 {
            let original;
            {
                let (ent, rel) = probe_model.params_mut();
                let buf = if on_entities { ent } else { rel };
                original = buf[idx];
                buf[idx] = original + delta;
            }
            let loss = probe_model.batch_loss(&batch, reg);
            let (ent, rel) = probe_model.params_mut();
            let buf = if on_entities { ent } else { rel };
            buf[idx] = original;
            loss
        };
        let numeric = (loss_shifted(h) - loss_shifted(-h)) / (2.0 * h);
        let rel_err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
        max_rel_err = max_rel_err.max(rel_err);
        assert!(
            rel_err <= 1e-4,
            "criterion 7: probe {probe} ({} index {idx}): analytic {analytic:.6e} vs numeric \
             {numeric:.6e}, relative error {rel_err:.2e}",
            if on_entities { "entity" } else { "relation" }
        );
    }
    let secs = started.elapsed().as_secs_f64();
    assert!(secs < 120.0, "criterion 7: took {secs:.1}s, budget 120s");
    println!(
        "criterion 7: PASS — filtered train MRR {mrr:.4} ≥ 0.95 at rank 64 after 200 epochs; 20 \
         gradient probes within 1e-4 of central differences (max {max_rel_err:.2e}) ({secs:.1}s)"
    );
}

#[test]
fn criterion_8_chronological_split_dedupes_to_exact_ratio_sizes() {
    let base = NaiveDate::from_ymd_opt(2021, 1, 1)
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .expect("valid base timestamp");
    let n_unique = 950usize;
    // (subject, hop, relation) is injective in i, so the facts are distinct.
    let fact = |i: usize| {
        let s = (i % 31) as u32;
        let j = i / 31;
        let hop = 1 + (j % 30) as u32;
        Triple::new(EntityId(s), RelationId((j / 11) as u32), EntityId((s + hop) % 31))
    };
    // Odd repeats predate their original observation, so deduplication must
    // adopt their earlier timestamp; even repeats are later and are dropped.
    let early_repeats: HashSet<usize> = (0..50).filter(|k| k % 2 == 1).map(|k| 19 * k).collect();
    let mut rows: Vec<(Triple, NaiveDateTime)> = (0..n_unique)
        .map(|i| (fact(i), base + Duration::hours(i as i64)))
        .collect();
    for k in 0..50usize {
        let i = 19 * k;
        let offset = if k % 2 == 1 { -30 } else { 30 };
        rows.push((fact(i), base + Duration::hours(i as i64) + Duration::minutes(offset)));
    }
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.shuffle(&mut ChaCha12Rng::seed_from_u64(77));

    let dir = tempfile::tempdir().expect("temp dir");
    let path = dir.path().join("observations.tsv");
    let mut out = String::new();
    for &idx in &order {
        let (t, ts) = &rows[idx];
        out.push_str(&format!(
            "n{}\tq{}\tn{}\t{}\n",
            t.subject.0,
            t.relation.0,
            t.object.0,
            ts.format("%Y-%m-%dT%H:%M:%S")
        ));
    }
    std::fs::write(&path, out).expect("write observations");

    let mut entities = SymbolTable::new();
    let mut relations = SymbolTable::new();
    let timed = load_timed_triples(&path, &mut entities, &mut relations).expect("file loads");
    assert_eq!(timed.len(), 1000, "criterion 8: observation count");
    let (train, valid, test) = temporal_split(&timed, (0.8, 0.1, 0.1)).expect("split succeeds");
    assert_eq!(
        (train.len(), valid.len(), test.len()),
        (760, 95, 95),
        "criterion 8: exact floor sizes over 950 unique facts"
    );

    // Independent expectation: unique facts ordered by their earliest
    // observation, mapped into the loader's id space (interning follows
    // file order, not construction order).
    let to_loaded = |t: &Triple| {
        Triple::new(
            EntityId(entities.get(&format!("n{}", t.subject.0)).expect("subject interned")),
            RelationId(relations.get(&format!("q{}", t.relation.0)).expect("relation interned")),
            EntityId(entities.get(&format!("n{}", t.object.0)).expect("object interned")),
        )
    };
    let mut effective: Vec<(NaiveDateTime, Triple)> = (0..n_unique)
        .map(|i| {
            let mut ts = base + Duration::hours(i as i64);
            if early_repeats.contains(&i) {
                ts -= Duration::minutes(30);
            }
            (ts, to_loaded(&fact(i)))
        })
        .collect();
    effective.sort_by_key(|&(ts, _)| ts);
    let expected: Vec<Triple> = effective.iter().map(|&(_, t)| t).collect();
    assert_eq!(train.as_slice(), &expected[..760], "criterion 8: train window");
    assert_eq!(valid.as_slice(), &expected[760..855], "criterion 8: valid window");
    assert_eq!(test.as_slice(), &expected[855..], "criterion 8: test window");
    println!(
        "criterion 8: PASS — 1000 observations deduplicate to 950 facts at their earliest \
         timestamps and split 760/95/95 in strict time order"
    );
}

#[test]
fn criterion_9_metric_units_return_exact_reference_values() {
    // Two hard answers at filtered ranks 1 and 2 (a non-answer in between).
    let scores = vec![0.9, 0.8, 0.85, 0.4, 0.2, 0.1];
    let hard: BTreeSet<EntityId> = [EntityId(0), EntityId(1)].into();
    let easy = BTreeSet::new();
    let eval = evaluate_query(&scores, &hard, &easy, TiePolicy::Average).expect("hard answers");
    assert_eq!(eval.rr, 0.75, "criterion 9: MRR for ranks 1 and 2");
    assert_eq!(eval.hits, [0.5, 1.0, 1.0], "criterion 9: hits@1/3/10 for ranks 1 and 2");

    let sample = vec![0.3, 0.5, 0.9, 1.4, 2.0];
    let same = mann_whitney_u(&sample, &sample).expect("non-empty samples");
    assert_eq!(same.p, 1.0, "criterion 9: identical samples must be uninformative");
    assert_eq!(same.u, 12.5, "criterion 9: U sits at the tie midpoint n²/2");

    let low = vec![1.0, 2.0, 3.0];
    let high = vec![4.0, 5.0, 6.0];
    let separated = mann_whitney_u(&low, &high).expect("non-empty samples");
    assert_eq!(separated.u, 0.0, "criterion 9: fully separated samples have U = 0");
    assert!(separated.exact, "criterion 9: small samples use the exact null distribution");
    assert_eq!(separated.p, 0.1, "criterion 9: exact two-sided tail is 2/20");
    println!(
        "criterion 9: PASS — MRR 0.75 for ranks {{1, 2}}, identical-sample p = 1.0, separated \
         U = 0 with exact p = 0.1"
    );
}
