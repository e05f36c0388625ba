//! Small deterministic datasets for tests, examples and acceptance checks.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::kg::{EntityId, KnowledgeGraphSplit, RelationId, SymbolTable, Triple};
use crate::query::{Query, QueryType};

/// A nine-entity movie graph whose single 2i1p query ("things featured in
/// a blu-ray release located in NYC") has one answer per hardness pattern:
///
/// * kirsten — both anchor legs trained, feature edge held out;
/// * joy — one anchor leg trained, two held-out links;
/// * kyle — feature edge trained, both anchor legs held out;
/// * andy — all three links held out.
///
/// The trained intermediates are spiderman2 and when_in_rome.
pub fn movie_split() -> (KnowledgeGraphSplit, Query) {
    let mut entities = SymbolTable::new();
    let mut relations = SymbolTable::new();
    let mut ent = |n: &str| EntityId(entities.intern(n));
    let blu_ray = ent("blu_ray");
    let nyc = ent("new_york");
    let sp2 = ent("spiderman2");
    let wir = ent("when_in_rome");
    let ckl = ent("crazy_kind_of_love");
    let mbv = ent("madame_bovary");
    let mre = ent("mortal_engines");
    let kirsten = ent("kirsten");
    let joy = ent("joy");
    let kyle = ent("kyle");
    let andy = ent("andy");
    let format_of = RelationId(relations.intern("format_of"));
    let location_of = RelationId(relations.intern("location_of"));
    let features = RelationId(relations.intern("features"));

    let train = vec![
        Triple::new(blu_ray, format_of, sp2),
        Triple::new(blu_ray, format_of, wir),
        Triple::new(blu_ray, format_of, ckl),
        Triple::new(nyc, location_of, sp2),
        Triple::new(nyc, location_of, wir),
        Triple::new(mbv, features, kyle),
    ];
    let test = vec![
        Triple::new(sp2, features, kirsten),
        Triple::new(nyc, location_of, ckl),
        Triple::new(ckl, features, joy),
        Triple::new(blu_ray, format_of, mbv),
        Triple::new(nyc, location_of, mbv),
        Triple::new(blu_ray, format_of, mre),
        Triple::new(nyc, location_of, mre),
        Triple::new(mre, features, andy),
    ];
    let split = KnowledgeGraphSplit::new(entities, relations, train, Vec::new(), test)
        .expect("fixture is consistent");
    let query = Query::instantiate(
        QueryType::TwoIOneP,
        &[blu_ray, nyc],
        &[format_of, location_of, features],
    )
    .expect("fixture arity");
    (split, query)
}

/// Entity id by name, for assertions against [`movie_split`].
pub fn entity(split: &KnowledgeGraphSplit, name: &str) -> EntityId {
    EntityId(split.entities.get(name).unwrap_or_else(|| panic!("unknown entity {name}")))
}

/// Parameters for [`random_split`].
#[derive(Debug, Clone)]
pub struct RandomSplitConfig {
    pub entities: usize,
    pub relations: usize,
    pub edges: usize,
    pub train_fraction: f64,
    pub valid_fraction: f64,
    pub seed: u64,
}

impl Default for RandomSplitConfig {
    fn default() -> Self {
        RandomSplitConfig {
            entities: 25,
            relations: 4,
            edges: 120,
            train_fraction: 0.7,
            valid_fraction: 0.1,
            seed: 0,
        }
    }
}

/// A seeded random split: `edges` distinct uniform triples shuffled and cut
/// into train/valid/test. Identical configs produce identical splits.
pub fn random_split(cfg: &RandomSplitConfig) -> KnowledgeGraphSplit {
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let mut seen = std::collections::BTreeSet::new();
    let max_attempts = 50 * cfg.edges + 1000;
    for _ in 0..max_attempts {
        if seen.len() >= cfg.edges {
            break;
        }
        let s = rng.gen_range(0..cfg.entities as u32);
        let r = rng.gen_range(0..cfg.relations as u32);
        let o = rng.gen_range(0..cfg.entities as u32);
        if s != o {
            seen.insert(Triple::new(EntityId(s), RelationId(r), EntityId(o)));
        }
    }
    let mut triples: Vec<Triple> = seen.into_iter().collect();
    triples.shuffle(&mut rng);

    let n = triples.len();
    let n_train = (cfg.train_fraction * n as f64).floor() as usize;
    let n_valid = (cfg.valid_fraction * n as f64).floor() as usize;
    let test = triples.split_off(n_train + n_valid);
    let valid = triples.split_off(n_train);
    let train = triples;

    let mut entities = SymbolTable::new();
    for i in 0..cfg.entities {
        entities.intern(&format!("e{i}"));
    }
    let mut relations = SymbolTable::new();
    for i in 0..cfg.relations {
        relations.intern(&format!("r{i}"));
    }
    KnowledgeGraphSplit::new(entities, relations, train, valid, test)
        .expect("distinct triples cannot overlap")
}

/// A uniformly random instantiation of `qt` — anchors and relations drawn
/// independently, with no guarantee the query has answers. Useful for
/// differential tests against the brute-force reference.
pub fn random_query(
    qt: QueryType,
    entity_count: usize,
    relation_count: usize,
    rng: &mut impl Rng,
) -> Query {
    let anchors: Vec<EntityId> = (0..qt.anchor_count())
        .map(|_| EntityId(rng.gen_range(0..entity_count as u32)))
        .collect();
    let relations: Vec<RelationId> = (0..qt.relation_count())
        .map(|_| RelationId(rng.gen_range(0..relation_count as u32)))
        .collect();
    Query::instantiate(qt, &anchors, &relations).expect("arity by construction")
}
