//! Fuzzy beam-search query answering over a trained link predictor.
//!
//! Each DNF branch is swept atom by atom: atoms whose object (or, for
//! negated atoms, either endpoint) is new bind it by enumerating all
//! entities, scores are combined with a t-norm, variables leaving scope
//! are existentially aggregated with the matching t-conorm, and
//! intermediate frontiers are truncated to a beam. In hybrid mode edges
//! present in the training graph score exactly 1.0 (and 0.0 under
//! negation), so certain knowledge always dominates model predictions,
//! whose normalized scores stay at or below
//! [`NORMALIZED_MAX`](crate::predictor::NORMALIZED_MAX).
//!
//! With indicator scores from [`GraphScorer`] and a beam as wide as the
//! entity set, the sweep degenerates to exact crisp evaluation; see
//! [`exact_oracle_solver`].

use std::collections::{BTreeMap, HashMap};
use std::rc::Rc;

use thiserror::Error;

use crate::kg::{EntityId, KnowledgeGraph, RelationId};
use crate::predictor::{normalize_scores, GraphScorer, PredictorError, TripleScorer};
use crate::query::{Node, Query};

/// Fuzzy conjunction flavor; each pairs with its canonical disjunction
/// (product with probabilistic sum, minimum with maximum).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TNorm {
    #[default]
    Product,
    Minimum,
}

impl TNorm {
    pub fn conjoin(self, a: f64, b: f64) -> f64 {
        match self {
            TNorm::Product => a * b,
            TNorm::Minimum => a.min(b),
        }
    }

    pub fn disjoin(self, a: f64, b: f64) -> f64 {
        match self {
            TNorm::Product => a + b - a * b,
            TNorm::Minimum => a.max(b),
        }
    }
}

pub const BEAM_MIN: usize = 2;
pub const BEAM_MAX: usize = 512;

#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Beam width for intermediate variable frontiers, clamped to
    /// `[BEAM_MIN, BEAM_MAX]`. Target candidates are never truncated.
    pub beam_k: usize,
    pub tnorm: TNorm,
    /// Score training edges 1.0 (0.0 when negated) instead of trusting the
    /// predictor on them.
    pub hybrid: bool,
    /// Min-max rescale every predictor row into `[0, NORMALIZED_MAX]`.
    pub normalize: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { beam_k: 128, tnorm: TNorm::Product, hybrid: true, normalize: true }
    }
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("bad solver configuration: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Predictor(#[from] PredictorError),
    #[error("query references ids outside the scorer's vocabulary: {0}")]
    IdOutOfRange(String),
}

/// Scores for every entity as the query target; higher ranks first.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    pub scores: Vec<f64>,
}

/// One frontier entry: a partial binding of (vars..., target) plus its
/// accumulated score.
type Tuple = Vec<Option<EntityId>>;

struct RowCache<'a, S: TripleScorer + ?Sized> {
    scorer: &'a S,
    train: Option<&'a KnowledgeGraph>,
    normalize: bool,
    rows: HashMap<(EntityId, RelationId), Rc<Vec<f64>>>,
}

impl<'a, S: TripleScorer + ?Sized> RowCache<'a, S> {
    /// Scores of `(s, r, o)` for all `o`, normalized then hybrid-overridden.
    fn row(&mut self, s: EntityId, r: RelationId) -> Result<Rc<Vec<f64>>, SolverError> {
        if let Some(row) = self.rows.get(&(s, r)) {
            return Ok(Rc::clone(row));
        }
        let mut row = self.scorer.score_all(s, r);
        if self.normalize {
            row = normalize_scores(&row)?;
        }
        if let Some(train) = self.train {
            for &o in train.neighbors(s, r, crate::kg::Direction::Forward) {
                row[o.index()] = 1.0;
            }
        }
        let row = Rc::new(row);
        self.rows.insert((s, r), Rc::clone(&row));
        Ok(row)
    }
}

pub fn solve<S: TripleScorer + ?Sized>(
    query: &Query,
    scorer: &S,
    train: Option<&KnowledgeGraph>,
    config: &SolverConfig,
) -> Result<Ranking, SolverError> {
    let beam = config.beam_k.clamp(BEAM_MIN, BEAM_MAX);
    solve_impl(query, scorer, train, config, beam)
}

/// Exact evaluation: indicator scores from the full graph, no truncation.
/// The resulting scores are 1.0 exactly on the crisp answer set.
pub fn exact_oracle_solver(query: &Query, graph: &KnowledgeGraph) -> Result<Ranking, SolverError> {
    let scorer = GraphScorer { graph };
    let config = SolverConfig {
        beam_k: graph.entity_count(),
        tnorm: TNorm::Product,
        hybrid: false,
        normalize: false,
    };
    solve_impl(query, &scorer, None, &config, graph.entity_count().max(1))
}

fn solve_impl<S: TripleScorer + ?Sized>(
    query: &Query,
    scorer: &S,
    train: Option<&KnowledgeGraph>,
    config: &SolverConfig,
    beam: usize,
) -> Result<Ranking, SolverError> {
    if config.hybrid && train.is_none() {
        return Err(SolverError::BadConfig(
            "hybrid scoring requires a training graph".into(),
        ));
    }
    let n = scorer.entity_count();
    if let Some(g) = train {
        if g.entity_count() != n {
            return Err(SolverError::BadConfig(
                "training graph and scorer disagree on entity count".into(),
            ));
        }
    }
    for atom in query.atoms() {
        if let Node::Anchor(e) = atom.subject {
            if e.index() >= n {
                return Err(SolverError::IdOutOfRange(format!("entity {e}")));
            }
        }
        if let Node::Anchor(e) = atom.object {
            if e.index() >= n {
                return Err(SolverError::IdOutOfRange(format!("entity {e}")));
            }
        }
    }
    let mut cache = RowCache {
        scorer,
        train: if config.hybrid { train } else { None },
        normalize: config.normalize,
        rows: HashMap::new(),
    };
    let tnorm = config.tnorm;
    let var_count = query.query_type().var_count();
    let target_slot = var_count; // tuples are (vars..., target)

    let mut final_scores: Option<Vec<f64>> = None;
    for branch in query.dnf_branches() {
        let branch_scores = sweep_branch(
            query,
            &branch,
            &mut cache,
            tnorm,
            n,
            var_count,
            target_slot,
            beam,
        )?;
        final_scores = Some(match final_scores {
            None => branch_scores,
            Some(acc) => acc
                .iter()
                .zip(&branch_scores)
                .map(|(&a, &b)| tnorm.disjoin(a, b))
                .collect(),
        });
    }
    Ok(Ranking { scores: final_scores.expect("queries have at least one branch") })
}

#[allow(clippy::too_many_arguments)]
fn sweep_branch<S: TripleScorer + ?Sized>(
    query: &Query,
    branch: &[usize],
    cache: &mut RowCache<'_, S>,
    tnorm: TNorm,
    n: usize,
    var_count: usize,
    target_slot: usize,
    beam: usize,
) -> Result<Vec<f64>, SolverError> {
    let slot_of = |node: Node| -> Option<usize> {
        match node {
            Node::Anchor(_) => None,
            Node::Var(i) => Some(i),
            Node::Target => Some(target_slot),
        }
    };
    let mut state: Vec<(Tuple, f64)> = vec![(vec![None; var_count + 1], 1.0)];
    for (pos, &ai) in branch.iter().enumerate() {
        let atom = query.atom(ai);
        let mut next: Vec<(Tuple, f64)> = Vec::new();
        for (tuple, score) in &state {
            let subj = match atom.subject {
                Node::Anchor(e) => Some(e),
                node => slot_of(node).and_then(|s| tuple[s]),
            };
            let obj = match atom.object {
                Node::Anchor(e) => Some(e),
                node => slot_of(node).and_then(|s| tuple[s]),
            };
            match (subj, obj) {
                (Some(s), Some(o)) => {
                    let row = cache.row(s, atom.relation)?;
                    let mut sc = row[o.index()];
                    if atom.negated {
                        sc = 1.0 - sc;
                    }
                    next.push((tuple.clone(), tnorm.conjoin(*score, sc)));
                }
                (Some(s), None) => {
                    let o_slot = slot_of(atom.object).expect("unbound object is a slot");
                    let row = cache.row(s, atom.relation)?;
                    for o in 0..n {
                        let mut sc = row[o];
                        if atom.negated {
                            sc = 1.0 - sc;
                        }
                        let mut t = tuple.clone();
                        t[o_slot] = Some(EntityId(o as u32));
                        next.push((t, tnorm.conjoin(*score, sc)));
                    }
                }
                (None, _) => {
                    // Only negated atoms can reach here (positive atoms
                    // bind subjects left to right), so enumerate subjects
                    // and, if needed, objects.
                    let s_slot = slot_of(atom.subject).expect("unbound subject is a slot");
                    for s in 0..n {
                        let s_ent = EntityId(s as u32);
                        let row = cache.row(s_ent, atom.relation)?;
                        let push = |next: &mut Vec<(Tuple, f64)>, t: Tuple, raw: f64| {
                            let sc = if atom.negated { 1.0 - raw } else { raw };
                            next.push((t, tnorm.conjoin(*score, sc)));
                        };
                        match obj {
                            Some(o) => {
                                let mut t = tuple.clone();
                                t[s_slot] = Some(s_ent);
                                push(&mut next, t, row[o.index()]);
                            }
                            None => {
                                let o_slot =
                                    slot_of(atom.object).expect("unbound object is a slot");
                                for o in 0..n {
                                    let mut t = tuple.clone();
                                    t[s_slot] = Some(s_ent);
                                    t[o_slot] = Some(EntityId(o as u32));
                                    push(&mut next, t, row[o]);
                                }
                            }
                        }
                    }
                }
            }
        }

        // Drop variables no later atom mentions, existentially aggregating
        // the duplicates this creates.
        let mut keep = vec![false; var_count + 1];
        keep[target_slot] = true;
        for &later in &branch[pos + 1..] {
            let a = query.atom(later);
            for node in [a.subject, a.object] {
                if let Some(s) = slot_of(node) {
                    keep[s] = true;
                }
            }
        }
        let mut merged: BTreeMap<Tuple, f64> = BTreeMap::new();
        for (mut tuple, score) in next {
            for (slot, keep) in keep.iter().enumerate() {
                if !keep {
                    tuple[slot] = None;
                }
            }
            merged
                .entry(tuple)
                .and_modify(|acc| *acc = tnorm.disjoin(*acc, score))
                .or_insert(score);
        }
        state = merged.into_iter().collect();

        // Truncate frontiers still carrying intermediate variables; target
        // candidates always survive in full.
        let has_free_var = state
            .iter()
            .any(|(t, _)| t[..target_slot].iter().any(|v| v.is_some()));
        if has_free_var && state.len() > beam {
            state.sort_by(|(ta, sa), (tb, sb)| {
                sb.partial_cmp(sa).unwrap_or(std::cmp::Ordering::Equal).then_with(|| ta.cmp(tb))
            });
            state.truncate(beam);
        }
    }

    let mut scores = vec![0.0; n];
    for (tuple, score) in state {
        match tuple[target_slot] {
            Some(t) => {
                scores[t.index()] = tnorm.disjoin(scores[t.index()], score);
            }
            None => {
                // A branch that never binds the target (impossible for the
                // supported shapes) would rank nothing.
            }
        }
    }
    Ok(scores)
}

/// Entities ordered by ranking score, best first, ties by ascending id.
pub fn ranked_entities(ranking: &Ranking) -> Vec<EntityId> {
    let mut order: Vec<usize> = (0..ranking.scores.len()).collect();
    order.sort_by(|&a, &b| {
        ranking.scores[b]
            .partial_cmp(&ranking.scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.cmp(&b))
    });
    order.into_iter().map(|i| EntityId(i as u32)).collect()
}
