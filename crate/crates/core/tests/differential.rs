//! Differential tests: the optimized matcher and classifier must agree
//! with the brute-force reference on randomized graphs of every query
//! shape.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use cqa_core::hardness::{classify_with, ClassifyConfig, HardnessLabel};
use cqa_core::matcher::answers;
use cqa_core::oracle::{answers_naive, classify_naive};
use cqa_core::query::{QaPair, QueryType};
use cqa_core::synthetic::{random_query, random_split, RandomSplitConfig};

/// Keeps brute-force enumeration affordable for many-variable shapes.
fn sized_config(qt: QueryType, seed: u64) -> RandomSplitConfig {
    let entities = match qt.var_count() {
        0 | 1 => 22,
        2 => 16,
        _ => 11,
    };
    RandomSplitConfig {
        entities,
        relations: 4,
        edges: (entities * entities) / 4,
        train_fraction: 0.6,
        valid_fraction: 0.2,
        seed,
    }
}

#[test]
fn matcher_agrees_with_brute_force_on_full_and_train_graphs() {
    for seed in 0..4u64 {
        for qt in QueryType::ALL {
            let split = random_split(&sized_config(qt, seed));
            let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0x51ab);
            for _ in 0..4 {
                let q = random_query(qt, split.entities.len(), split.relations.len(), &mut rng);
                for graph in [&split.full, &split.train] {
                    assert_eq!(
                        answers(&q, graph).unwrap(),
                        answers_naive(&q, graph),
                        "answers diverge for {qt} seed {seed}"
                    );
                }
            }
        }
    }
}

#[test]
fn classifier_agrees_with_brute_force_for_every_shape() {
    for seed in 0..3u64 {
        for qt in QueryType::ALL {
            let split = random_split(&sized_config(qt, seed + 100));
            let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0xc1a5);
            for _ in 0..4 {
                let q = random_query(qt, split.entities.len(), split.relations.len(), &mut rng);
                let answers = answers(&q, &split.full).unwrap();
                for (flag, cfg) in [
                    (true, ClassifyConfig { union_filter: true }),
                    (false, ClassifyConfig { union_filter: false }),
                ] {
                    for &a in answers.iter().take(8) {
                        let qa = QaPair { query: q.clone(), answer: a };
                        let fast = classify_with(&qa, &split, &cfg).unwrap();
                        let slow = classify_naive(&qa, &split, flag).unwrap();
                        assert_eq!(
                            fast, slow,
                            "labels diverge for {qt} seed {seed} answer {a} filter {flag}"
                        );
                    }
                }
            }
        }
    }
}

#[test]
fn classifier_agreement_holds_after_inverse_augmentation() {
    for qt in [QueryType::TwoP, QueryType::TwoIOneP, QueryType::TwoInOneP, QueryType::TwoUOneP] {
        let split = random_split(&sized_config(qt, 7)).augment_with_inverses().unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(0xa06);
        for _ in 0..4 {
            let q = random_query(qt, split.entities.len(), split.relations.len(), &mut rng);
            let found = answers(&q, &split.full).unwrap();
            assert_eq!(found, answers_naive(&q, &split.full));
            for &a in found.iter().take(6) {
                let qa = QaPair { query: q.clone(), answer: a };
                assert_eq!(
                    classify_with(&qa, &split, &ClassifyConfig::default()).unwrap(),
                    classify_naive(&qa, &split, true).unwrap()
                );
            }
        }
    }
}

#[test]
fn partial_labels_only_use_declared_reductions() {
    for seed in 0..3u64 {
        for qt in QueryType::ALL {
            let split = random_split(&sized_config(qt, seed + 40));
            let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0x9e);
            for _ in 0..4 {
                let q = random_query(qt, split.entities.len(), split.relations.len(), &mut rng);
                for &a in answers(&q, &split.full).unwrap().iter().take(8) {
                    let qa = QaPair { query: q.clone(), answer: a };
                    if let HardnessLabel::Partial(r) =
                        classify_with(&qa, &split, &ClassifyConfig::default()).unwrap()
                    {
                        assert!(
                            cqa_core::hardness::possible_reductions(qt).contains(&r),
                            "{qt} reduced to undeclared {r}"
                        );
                    }
                }
            }
        }
    }
}
