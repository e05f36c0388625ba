//! Exact query answering and reasoning-tree enumeration.
//!
//! `answers` evaluates a query over one graph with set semantics:
//! existential variables range over all entities and a negated atom is
//! satisfied when the edge is absent. Query DAGs are trees flowing into the
//! target, so per-branch candidate propagation (union along each atom,
//! intersection at shared nodes, set subtraction for negations) is exact.
//!
//! `enumerate_trees` works on a train/valid/test split instead: it lists,
//! per DNF branch, every assignment whose *positive* branch atoms all exist
//! in the full graph, recording for each positive atom whether the edge was
//! seen in training or only in the held-out splits. Negated atoms are not
//! enforced here — the tree describes how an answer is reached through
//! evidence, and negation contributes no evidence. Bound negated atoms are
//! instead reported with their own membership so callers can inspect them.
//! Union queries additionally record the other branch's atoms under the
//! same assignment, which is what reveals reasoning trees containing edges
//! absent from the whole graph.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::kg::{Direction, EntityId, KnowledgeGraph, KnowledgeGraphSplit, RelationId, SplitPart};
use crate::query::{Atom, Node, QaPair, Query};

/// Where one instantiated atom's edge lives relative to a split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum AtomProvenance {
    /// Edge present in the training graph.
    Train,
    /// Edge held out (validation or test graph).
    Missing,
    /// Edge absent from the full graph.
    NonExistent,
}

/// A total binding of a query's nodes that were needed to reach the answer.
/// Variables occurring only in negated atoms stay unbound.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Assignment {
    pub vars: Vec<Option<EntityId>>,
    pub target: EntityId,
}

/// One way of reaching an answer: a DNF branch plus an assignment, with
/// per-atom provenance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReasoningTree {
    /// Index into the query's DNF branch list.
    pub branch: usize,
    pub assignment: Assignment,
    /// (atom index, provenance) for every bound positive atom of the whole
    /// query — branch atoms first, then any cross-branch union atoms.
    pub provenance: Vec<(usize, AtomProvenance)>,
    /// (atom index, membership) for every bound negated atom. `NonExistent`
    /// here means the negation actually holds in the full graph.
    pub negated: Vec<(usize, AtomProvenance)>,
    /// Number of `Missing` atoms among the chosen branch's positive atoms.
    pub missing_count: usize,
}

impl ReasoningTree {
    /// Provenance entries restricted to the chosen branch.
    pub fn branch_provenance<'q>(
        &self,
        query: &'q Query,
    ) -> impl Iterator<Item = (usize, AtomProvenance)> + '_ {
        let branch_atoms = query.dnf_branches()[self.branch].clone();
        self.provenance
            .iter()
            .copied()
            .filter(move |(i, _)| branch_atoms.contains(i))
    }

    /// True if any positive atom of the instantiated structure (including
    /// cross-branch union atoms) is absent from the full graph.
    pub fn has_nonexistent_link(&self) -> bool {
        self.provenance.iter().any(|&(_, p)| p == AtomProvenance::NonExistent)
    }

    /// All branch positive atoms are training edges.
    pub fn fully_trained(&self) -> bool {
        self.missing_count == 0
    }
}

#[derive(Debug, Error)]
pub enum MatchError {
    #[error("query references ids outside the graph: {0}")]
    IdOutOfRange(String),
}

fn validate_query(query: &Query, graph: &KnowledgeGraph) -> Result<(), MatchError> {
    for atom in query.atoms() {
        if atom.relation.index() >= graph.relation_count() {
            return Err(MatchError::IdOutOfRange(format!("relation {}", atom.relation)));
        }
        for node in [atom.subject, atom.object] {
            if let Node::Anchor(e) = node {
                if e.index() >= graph.entity_count() {
                    return Err(MatchError::IdOutOfRange(format!("entity {e}")));
                }
            }
        }
    }
    Ok(())
}

/// Candidate set for a node during propagation. The complement form avoids
/// materializing near-full sets for unconstrained negated variables.
enum CandSet {
    All,
    AllExcept(Vec<EntityId>),
    Set(BTreeSet<EntityId>),
}

impl CandSet {
    fn len(&self, n: usize) -> usize {
        match self {
            CandSet::All => n,
            CandSet::AllExcept(ex) => n - ex.len(),
            CandSet::Set(s) => s.len(),
        }
    }

    fn contains(&self, e: EntityId) -> bool {
        match self {
            CandSet::All => true,
            CandSet::AllExcept(ex) => ex.binary_search(&e).is_err(),
            CandSet::Set(s) => s.contains(&e),
        }
    }

    fn to_set(&self, n: usize) -> BTreeSet<EntityId> {
        match self {
            CandSet::All => (0..n as u32).map(EntityId).collect(),
            CandSet::AllExcept(ex) => {
                (0..n as u32).map(EntityId).filter(|e| ex.binary_search(e).is_err()).collect()
            }
            CandSet::Set(s) => s.clone(),
        }
    }
}

/// Node-indexed storage: variables then target.
struct Cands {
    vars: Vec<CandSet>,
    target: CandSet,
}

impl Cands {
    fn get(&self, node: Node) -> &CandSet {
        match node {
            Node::Var(k) => &self.vars[k],
            Node::Target => &self.target,
            Node::Anchor(_) => unreachable!("anchor candidates are handled inline"),
        }
    }
}

fn subject_set(node: Node, cands: &Cands, n: usize) -> BTreeSet<EntityId> {
    match node {
        Node::Anchor(e) => std::iter::once(e).collect(),
        other => cands.get(other).to_set(n),
    }
}

/// Entities reachable from the subject's candidates along one positive atom.
fn positive_contribution(
    atom: &Atom,
    cands: &Cands,
    graph: &KnowledgeGraph,
    n: usize,
) -> BTreeSet<EntityId> {
    let subjects = subject_set(atom.subject, cands, n);
    let mut out = BTreeSet::new();
    for s in subjects {
        out.extend(graph.neighbors(s, atom.relation, Direction::Forward).iter().copied());
    }
    out
}

/// Keeps candidates for which some subject candidate lacks the edge.
fn apply_negation(
    cand: CandSet,
    atom: &Atom,
    cands: &Cands,
    graph: &KnowledgeGraph,
    n: usize,
) -> CandSet {
    // Resolve the subject side without the target/object side.
    enum Subj<'a> {
        Single(EntityId),
        Cand(&'a CandSet),
    }
    let subj = match atom.subject {
        Node::Anchor(e) => Subj::Single(e),
        other => Subj::Cand(cands.get(other)),
    };
    let subj_len = match &subj {
        Subj::Single(_) => 1,
        Subj::Cand(c) => c.len(n),
    };
    if subj_len == 0 {
        // No subject to witness the negation.
        return CandSet::Set(BTreeSet::new());
    }
    let keep = |o: EntityId| -> bool {
        // Count subject candidates that do have the edge; keep the object
        // when at least one subject candidate lacks it.
        let present = match &subj {
            Subj::Single(s) => usize::from(graph.contains(*s, atom.relation, o)),
            Subj::Cand(c) => graph
                .neighbors(o, atom.relation, Direction::Backward)
                .iter()
                .filter(|&&s| c.contains(s))
                .count(),
        };
        present < subj_len
    };
    match cand {
        CandSet::Set(s) => CandSet::Set(s.into_iter().filter(|&o| keep(o)).collect()),
        CandSet::All => {
            if let Subj::Single(s) = subj {
                CandSet::AllExcept(
                    graph.neighbors(s, atom.relation, Direction::Forward).to_vec(),
                )
            } else {
                CandSet::Set(
                    (0..n as u32).map(EntityId).filter(|&o| keep(o)).collect(),
                )
            }
        }
        other => CandSet::Set(other.to_set(n).into_iter().filter(|&o| keep(o)).collect()),
    }
}

fn branch_answers(query: &Query, branch: &[usize], graph: &KnowledgeGraph) -> BTreeSet<EntityId> {
    let n = graph.entity_count();
    let atoms: Vec<&Atom> = branch.iter().map(|&i| query.atom(i)).collect();
    let mut cands = Cands { vars: Vec::new(), target: CandSet::All };

    // Variables in index order, then the target: topological for every
    // supported shape.
    let nodes: Vec<Node> =
        (0..query.var_count()).map(Node::Var).chain(std::iter::once(Node::Target)).collect();
    for node in nodes {
        let incoming: Vec<&&Atom> = atoms.iter().filter(|a| a.object == node).collect();
        let positives: Vec<&&&Atom> = incoming.iter().filter(|a| !a.negated).collect();
        let mut cand = if positives.is_empty() {
            CandSet::All
        } else {
            let mut sets = positives
                .iter()
                .map(|a| positive_contribution(a, &cands, graph, n));
            let mut acc = sets.next().expect("non-empty");
            for s in sets {
                acc = acc.intersection(&s).copied().collect();
            }
            CandSet::Set(acc)
        };
        for neg in incoming.iter().filter(|a| a.negated) {
            cand = apply_negation(cand, neg, &cands, graph, n);
        }
        match node {
            Node::Var(_) => cands.vars.push(cand),
            Node::Target => cands.target = cand,
            Node::Anchor(_) => unreachable!(),
        }
    }

    // Every variable mentioned by the branch must be satisfiable.
    for k in 0..query.var_count() {
        let mentioned = atoms
            .iter()
            .any(|a| a.subject == Node::Var(k) || a.object == Node::Var(k));
        if mentioned && cands.vars[k].len(n) == 0 {
            return BTreeSet::new();
        }
    }
    cands.target.to_set(n)
}

/// All answers of `query` over `graph`: the union over DNF branches of the
/// targets reachable under some assignment satisfying every branch atom.
pub fn answers(query: &Query, graph: &KnowledgeGraph) -> Result<BTreeSet<EntityId>, MatchError> {
    validate_query(query, graph)?;
    let mut out = BTreeSet::new();
    for branch in query.dnf_branches() {
        out.extend(branch_answers(query, &branch, graph));
    }
    Ok(out)
}

fn provenance_of(
    split: &KnowledgeGraphSplit,
    s: EntityId,
    r: RelationId,
    o: EntityId,
) -> AtomProvenance {
    match split.locate(s, r, o) {
        Some(SplitPart::Train) => AtomProvenance::Train,
        Some(_) => AtomProvenance::Missing,
        None => AtomProvenance::NonExistent,
    }
}

fn resolve(node: Node, vars: &[Option<EntityId>], target: EntityId) -> Option<EntityId> {
    match node {
        Node::Anchor(e) => Some(e),
        Node::Var(k) => vars[k],
        Node::Target => Some(target),
    }
}

/// Depth-first enumeration of assignments satisfying the branch's positive
/// atoms over the full graph, with the target pinned to the answer.
fn enumerate_branch(
    qa: &QaPair,
    split: &KnowledgeGraphSplit,
    branch_idx: usize,
    positive: &[usize],
    out: &mut Vec<ReasoningTree>,
) {
    let query = &qa.query;
    let full = &split.full;

    fn recurse(
        qa: &QaPair,
        split: &KnowledgeGraphSplit,
        full: &KnowledgeGraph,
        branch_idx: usize,
        positive: &[usize],
        depth: usize,
        vars: &mut Vec<Option<EntityId>>,
        out: &mut Vec<ReasoningTree>,
    ) {
        let query = &qa.query;
        if depth == positive.len() {
            out.push(build_tree(qa, split, branch_idx, positive, vars));
            return;
        }
        let atom = query.atom(positive[depth]);
        let s = resolve(atom.subject, vars, qa.answer)
            .expect("template order binds subjects before use");
        match atom.object {
            Node::Var(k) if vars[k].is_none() => {
                let objects: Vec<EntityId> =
                    full.neighbors(s, atom.relation, Direction::Forward).to_vec();
                for o in objects {
                    vars[k] = Some(o);
                    recurse(qa, split, full, branch_idx, positive, depth + 1, vars, out);
                }
                vars[k] = None;
            }
            node => {
                let o = resolve(node, vars, qa.answer).expect("bound object");
                if full.contains(s, atom.relation, o) {
                    recurse(qa, split, full, branch_idx, positive, depth + 1, vars, out);
                }
            }
        }
    }

    let mut vars: Vec<Option<EntityId>> = vec![None; query.var_count()];
    recurse(qa, split, full, branch_idx, positive, 0, &mut vars, out);
}

fn build_tree(
    qa: &QaPair,
    split: &KnowledgeGraphSplit,
    branch_idx: usize,
    positive: &[usize],
    vars: &[Option<EntityId>],
) -> ReasoningTree {
    let query = &qa.query;
    let mut provenance = Vec::new();
    let mut missing_count = 0;
    // Branch atoms first.
    for &i in positive {
        let atom = query.atom(i);
        let s = resolve(atom.subject, vars, qa.answer).expect("bound");
        let o = resolve(atom.object, vars, qa.answer).expect("bound");
        let p = provenance_of(split, s, atom.relation, o);
        if p == AtomProvenance::Missing {
            missing_count += 1;
        }
        provenance.push((i, p));
    }
    // Cross-branch positive atoms of union structures, if bound.
    let mut negated = Vec::new();
    for (i, atom) in query.atoms().iter().enumerate() {
        if atom.negated {
            if let (Some(s), Some(o)) =
                (resolve(atom.subject, vars, qa.answer), resolve(atom.object, vars, qa.answer))
            {
                negated.push((i, provenance_of(split, s, atom.relation, o)));
            }
            continue;
        }
        if positive.contains(&i) {
            continue;
        }
        if let (Some(s), Some(o)) =
            (resolve(atom.subject, vars, qa.answer), resolve(atom.object, vars, qa.answer))
        {
            provenance.push((i, provenance_of(split, s, atom.relation, o)));
        }
    }
    ReasoningTree {
        branch: branch_idx,
        assignment: Assignment { vars: vars.to_vec(), target: qa.answer },
        provenance,
        negated,
        missing_count,
    }
}

/// Positive atoms of one branch, in template order.
pub fn branch_positive_atoms(query: &Query, branch: &[usize]) -> Vec<usize> {
    branch.iter().copied().filter(|&i| !query.atom(i).negated).collect()
}

/// Every reasoning tree of a QA pair over the full graph. Empty when the
/// answer is unreachable through any branch's positive atoms.
pub fn enumerate_trees(qa: &QaPair, split: &KnowledgeGraphSplit) -> Vec<ReasoningTree> {
    let mut out = Vec::new();
    for (b, branch) in qa.query.dnf_branches().iter().enumerate() {
        let positive = branch_positive_atoms(&qa.query, branch);
        enumerate_branch(qa, split, b, &positive, &mut out);
    }
    out
}

/// Selection order for the minimal tree: fewest missing links, then fewest
/// branch hops, then lexicographically smallest assignment, then branch
/// index. Total, so the minimum is unique and deterministic.
pub fn tree_order(query: &Query) -> impl Fn(&ReasoningTree, &ReasoningTree) -> std::cmp::Ordering {
    let branch_sizes: Vec<usize> = query
        .dnf_branches()
        .iter()
        .map(|b| branch_positive_atoms(query, b).len())
        .collect();
    move |a, b| {
        (a.missing_count, branch_sizes[a.branch], &a.assignment.vars, a.branch).cmp(&(
            b.missing_count,
            branch_sizes[b.branch],
            &b.assignment.vars,
            b.branch,
        ))
    }
}

/// The minimal reasoning tree under [`tree_order`], or `None` when the
/// answer is not realizable in the full graph.
pub fn minimal_tree(qa: &QaPair, split: &KnowledgeGraphSplit) -> Option<ReasoningTree> {
    let trees = enumerate_trees(qa, split);
    let cmp = tree_order(&qa.query);
    trees.into_iter().min_by(|a, b| cmp(a, b))
}

/// Number of distinct entities that can bind each existential variable
/// through *training* edges on its anchor side, summed over variables.
/// Variables bound only by negated atoms contribute zero (no train edge can
/// bind them). Queries without variables yield zero.
pub fn intermediate_cardinality(query: &Query, train: &KnowledgeGraph) -> usize {
    let n = train.entity_count();
    let mut total = 0;
    for k in 0..query.var_count() {
        let mut entities: BTreeSet<EntityId> = BTreeSet::new();
        for branch in query.dnf_branches() {
            let atoms: Vec<&Atom> = branch.iter().map(|&i| query.atom(i)).collect();
            // Propagate positive candidates var-by-var up to k.
            let mut cands = Cands { vars: Vec::new(), target: CandSet::All };
            for j in 0..=k {
                let node = Node::Var(j);
                let positives: Vec<&&Atom> =
                    atoms.iter().filter(|a| !a.negated && a.object == node).collect();
                let cand = if positives.is_empty() {
                    CandSet::Set(BTreeSet::new())
                } else {
                    let mut sets = positives
                        .iter()
                        .map(|a| positive_contribution(a, &cands, train, n));
                    let mut acc = sets.next().expect("non-empty");
                    for s in sets {
                        acc = acc.intersection(&s).copied().collect();
                    }
                    CandSet::Set(acc)
                };
                cands.vars.push(cand);
            }
            entities.extend(cands.vars[k].to_set(n));
        }
        total += entities.len();
    }
    total
}
