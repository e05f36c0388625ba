//! Brute-force reference implementations used to cross-check the fast
//! query matcher and hardness classifier.
//!
//! Everything here is written as literally as possible — exhaustive
//! enumeration of variable assignments, repeated-relabel contraction, and
//! shape matching by trying every node bijection — trading speed for
//! obviousness. Tests compare these against the optimized implementations;
//! the two sides share only vocabulary types, not machinery.

use std::collections::BTreeSet;

use crate::hardness::HardnessLabel;
use crate::kg::{EntityId, KnowledgeGraph, KnowledgeGraphSplit, SplitPart};
use crate::matcher::AtomProvenance;
use crate::query::{Node, QaPair, Query, QueryType, Slot};

fn bind(node: Node, vars: &[Option<EntityId>], target: EntityId) -> Option<EntityId> {
    match node {
        Node::Anchor(e) => Some(e),
        Node::Var(i) => vars[i],
        Node::Target => Some(target),
    }
}

/// All entities satisfying the query on `graph`, by checking every target
/// against every branch with every variable assignment.
pub fn answers_naive(query: &Query, graph: &KnowledgeGraph) -> BTreeSet<EntityId> {
    let n = graph.entity_count();
    let branches = query.dnf_branches();
    let mut out = BTreeSet::new();
    for t in 0..n {
        let target = EntityId(t as u32);
        let satisfied = branches.iter().any(|branch| {
            let mut var_ids: Vec<usize> = Vec::new();
            for &i in branch {
                let atom = query.atom(i);
                for node in [atom.subject, atom.object] {
                    if let Node::Var(v) = node {
                        if !var_ids.contains(&v) {
                            var_ids.push(v);
                        }
                    }
                }
            }
            each_assignment(query.query_type().var_count(), &var_ids, n, |vars| {
                branch.iter().all(|&i| {
                    let atom = query.atom(i);
                    let s = bind(atom.subject, vars, target).expect("bound");
                    let o = bind(atom.object, vars, target).expect("bound");
                    graph.contains(s, atom.relation, o) != atom.negated
                })
            })
        });
        if satisfied {
            out.insert(target);
        }
    }
    out
}

/// Runs `check` for every assignment of the listed variables over `n`
/// entities (other variables stay unbound); true if any assignment passes.
fn each_assignment(
    var_count: usize,
    var_ids: &[usize],
    n: usize,
    mut check: impl FnMut(&[Option<EntityId>]) -> bool,
) -> bool {
    let mut vars: Vec<Option<EntityId>> = vec![None; var_count];
    fn rec(
        vars: &mut Vec<Option<EntityId>>,
        var_ids: &[usize],
        pos: usize,
        n: usize,
        check: &mut impl FnMut(&[Option<EntityId>]) -> bool,
    ) -> bool {
        if pos == var_ids.len() {
            return check(vars);
        }
        for e in 0..n {
            vars[var_ids[pos]] = Some(EntityId(e as u32));
            if rec(vars, var_ids, pos + 1, n, check) {
                return true;
            }
        }
        vars[var_ids[pos]] = None;
        false
    }
    rec(&mut vars, var_ids, 0, n, &mut check)
}

#[derive(Debug, Clone)]
struct NaiveTree {
    branch: usize,
    vars: Vec<Option<EntityId>>,
    /// Provenance of every positive query atom bound under this assignment,
    /// including atoms of other union branches.
    all_positive: Vec<(usize, AtomProvenance)>,
    /// Missing count over the chosen branch's positive atoms.
    missing: usize,
    branch_positive_len: usize,
}

fn provenance_of(split: &KnowledgeGraphSplit, s: EntityId, r: crate::kg::RelationId, o: EntityId) -> AtomProvenance {
    match split.locate(s, r, o) {
        Some(SplitPart::Train) => AtomProvenance::Train,
        Some(_) => AtomProvenance::Missing,
        None => AtomProvenance::NonExistent,
    }
}

fn naive_trees(qa: &QaPair, split: &KnowledgeGraphSplit) -> Vec<NaiveTree> {
    let query = &qa.query;
    let n = split.full.entity_count();
    let mut out = Vec::new();
    for (b, branch) in query.dnf_branches().iter().enumerate() {
        let positive: Vec<usize> =
            branch.iter().copied().filter(|&i| !query.atom(i).negated).collect();
        let mut var_ids: Vec<usize> = Vec::new();
        for &i in &positive {
            let atom = query.atom(i);
            for node in [atom.subject, atom.object] {
                if let Node::Var(v) = node {
                    if !var_ids.contains(&v) {
                        var_ids.push(v);
                    }
                }
            }
        }
        each_assignment(query.query_type().var_count(), &var_ids, n, |vars| {
            let holds = positive.iter().all(|&i| {
                let atom = query.atom(i);
                let s = bind(atom.subject, vars, qa.answer).expect("bound");
                let o = bind(atom.object, vars, qa.answer).expect("bound");
                split.full.contains(s, atom.relation, o)
            });
            if holds {
                let mut all_positive = Vec::new();
                let mut missing = 0;
                for (i, atom) in query.atoms().iter().enumerate() {
                    if atom.negated {
                        continue;
                    }
                    let (Some(s), Some(o)) = (
                        bind(atom.subject, vars, qa.answer),
                        bind(atom.object, vars, qa.answer),
                    ) else {
                        continue;
                    };
                    let p = provenance_of(split, s, atom.relation, o);
                    all_positive.push((i, p));
                    if positive.contains(&i) && p == AtomProvenance::Missing {
                        missing += 1;
                    }
                }
                out.push(NaiveTree {
                    branch: b,
                    vars: vars.to_vec(),
                    all_positive,
                    missing,
                    branch_positive_len: positive.len(),
                });
            }
            false // keep enumerating every assignment
        });
    }
    out
}

fn tree_key(t: &NaiveTree) -> (usize, usize, Vec<Option<EntityId>>, usize) {
    (t.missing, t.branch_positive_len, t.vars.clone(), t.branch)
}

/// Brute-force hardness label; `None` when the answer does not satisfy the
/// query on the full graph.
///
/// Panics if a residual shape matches none of the supported query types,
/// which would indicate a bug worth failing a test over.
pub fn classify_naive(
    qa: &QaPair,
    split: &KnowledgeGraphSplit,
    union_filter: bool,
) -> Option<HardnessLabel> {
    let query = &qa.query;
    let trees = naive_trees(qa, split);
    let minimal = trees.iter().min_by_key(|t| tree_key(t))?;

    if union_filter
        && query.query_type().has_union()
        && minimal.all_positive.iter().any(|&(_, p)| p == AtomProvenance::NonExistent)
    {
        return Some(HardnessLabel::FilteredOut);
    }
    if minimal.missing == 0 {
        return Some(HardnessLabel::Trivial);
    }
    if minimal.missing == minimal.branch_positive_len {
        return Some(HardnessLabel::FullInference);
    }
    if query.query_type().has_union() {
        let branch_count = query.dnf_branches().len();
        let tied: Vec<&NaiveTree> = (0..branch_count)
            .filter_map(|b| trees.iter().filter(|t| t.branch == b).min_by_key(|t| tree_key(t)))
            .filter(|t| t.missing == minimal.missing)
            .collect();
        if tied.len() >= 2 {
            for t in &tied {
                assert_eq!(
                    naive_reduce(query, t),
                    QueryType::OneP,
                    "tied union branches must leave single held-out links"
                );
            }
            return Some(HardnessLabel::Partial(QueryType::TwoU));
        }
    }
    Some(HardnessLabel::Partial(naive_reduce(query, minimal)))
}

/// Contracts trained edges by repeated relabelling and identifies the
/// residual shape by trying every bijection onto each candidate template.
fn naive_reduce(query: &Query, tree: &NaiveTree) -> QueryType {
    let qt = query.query_type();
    let a_count = qt.anchor_count();
    let v_count = qt.var_count();
    let node_count = a_count + v_count + 1;
    let target_node = node_count - 1;
    let slots = qt.template_for_validation();
    let slot_node = |slot: Slot| match slot {
        Slot::Anchor(i) => i,
        Slot::Var(i) => a_count + i,
        Slot::Target => target_node,
    };

    let branch = &query.dnf_branches()[tree.branch];
    let mut labels: Vec<usize> = (0..node_count).collect();
    for &(i, p) in &tree.all_positive {
        if branch.contains(&i) && p == AtomProvenance::Train {
            let (s, o) = slots[i];
            let (la, lb) = (labels[slot_node(s)], labels[slot_node(o)]);
            for l in labels.iter_mut() {
                if *l == la {
                    *l = lb;
                }
            }
        }
    }
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for &(i, p) in &tree.all_positive {
        if branch.contains(&i) && p == AtomProvenance::Missing {
            let (s, o) = slots[i];
            edges.push((labels[slot_node(s)], labels[slot_node(o)]));
        }
    }
    let target_class = labels[target_node];

    let mut classes: Vec<usize> = edges.iter().flat_map(|&(s, o)| [s, o]).collect();
    classes.push(target_class);
    classes.sort_unstable();
    classes.dedup();
    let incoming: BTreeSet<usize> = edges.iter().map(|&(_, o)| o).collect();
    let anchors_r: Vec<usize> = classes
        .iter()
        .copied()
        .filter(|&c| c != target_class && !incoming.contains(&c))
        .collect();
    let vars_r: Vec<usize> = classes
        .iter()
        .copied()
        .filter(|&c| c != target_class && incoming.contains(&c))
        .collect();

    const CANDIDATES: [QueryType; 9] = [
        QueryType::OneP,
        QueryType::TwoP,
        QueryType::ThreeP,
        QueryType::FourP,
        QueryType::TwoI,
        QueryType::ThreeI,
        QueryType::FourI,
        QueryType::OnePTwoI,
        QueryType::TwoIOneP,
    ];
    for cand in CANDIDATES {
        if cand.atom_count() != edges.len()
            || cand.anchor_count() != anchors_r.len()
            || cand.var_count() != vars_r.len()
        {
            continue;
        }
        if shape_matches(cand, &edges, target_class, &anchors_r, &vars_r) {
            return cand;
        }
    }
    panic!("residual shape {edges:?} (target {target_class}) matches no query type");
}

fn shape_matches(
    cand: QueryType,
    edges: &[(usize, usize)],
    target_class: usize,
    anchors_r: &[usize],
    vars_r: &[usize],
) -> bool {
    let cand_slots = cand.template_for_validation();
    let mut residual_sorted: Vec<(usize, usize)> = edges.to_vec();
    residual_sorted.sort_unstable();
    // Map residual classes onto candidate slots in every possible way.
    for anchor_perm in permutations(anchors_r) {
        for var_perm in permutations(vars_r) {
            let map_slot = |slot: Slot| match slot {
                Slot::Anchor(i) => anchor_perm[i],
                Slot::Var(i) => var_perm[i],
                Slot::Target => target_class,
            };
            let mut mapped: Vec<(usize, usize)> =
                cand_slots.iter().map(|&(s, o)| (map_slot(s), map_slot(o))).collect();
            mapped.sort_unstable();
            if mapped == residual_sorted {
                return true;
            }
        }
    }
    false
}

fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.is_empty() {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for (i, &x) in items.iter().enumerate() {
        let mut rest: Vec<usize> = items.to_vec();
        rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, x);
            out.push(tail);
        }
    }
    out
}
