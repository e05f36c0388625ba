//! Query shapes over knowledge graphs.
//!
//! A query is a small DAG of relational atoms flowing from constant anchor
//! entities through existential variables to a single target node. Sixteen
//! shapes are supported: relation chains (`1p`..`4p`), intersections
//! (`2i`..`4i`), chain/intersection combinations (`1p2i`, `2i1p`), unions
//! (`2u`, `2u1p`) and negations (`2in`, `3in`, `2in1p`, `2pi1pn`, `2nu1p`).
//! Union and negated-union shapes are stored in disjunctive normal form;
//! every other shape is a single conjunctive branch.
//!
//! Atoms follow a fixed canonical order per shape (the template), so two
//! queries with the same constants compare equal structurally.

mod json;

pub use json::{parse_query, serialize_query, QueryRecord};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::{EntityId, RelationId};

/// A node of the query DAG.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Node {
    /// A constant entity the query is anchored on.
    Anchor(EntityId),
    /// The k-th existential variable.
    Var(usize),
    /// The free answer node.
    Target,
}

/// One relational atom `subject --relation--> object`, possibly negated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Atom {
    pub subject: Node,
    pub relation: RelationId,
    pub object: Node,
    pub negated: bool,
}

/// Template slot: like [`Node`] but with anchors referred to by position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Slot {
    Anchor(usize),
    Var(usize),
    Target,
}

/// A template atom: slots plus a relation position.
#[derive(Debug, Clone, Copy)]
struct AtomTemplate {
    subject: Slot,
    relation: usize,
    object: Slot,
    negated: bool,
}

macro_rules! tpl {
    (- $s:expr, $r:expr, $o:expr) => {
        AtomTemplate { subject: $s, relation: $r, object: $o, negated: true }
    };
    ($s:expr, $r:expr, $o:expr) => {
        AtomTemplate { subject: $s, relation: $r, object: $o, negated: false }
    };
}

use Slot::{Anchor as A, Target as T, Var as V};

/// The supported query shapes. Tags (`1p`, `2i1p`, ...) name the shape by
/// its construction: `p` hops, `i` intersections, `u` unions, `n` negation.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(try_from = "String", into = "String")]
pub enum QueryType {
    OneP,
    TwoP,
    ThreeP,
    FourP,
    TwoI,
    ThreeI,
    FourI,
    OnePTwoI,
    TwoIOneP,
    TwoU,
    TwoUOneP,
    TwoIn,
    ThreeIn,
    TwoInOneP,
    TwoPiOnePn,
    TwoNuOneP,
}

impl QueryType {
    pub const ALL: [QueryType; 16] = [
        QueryType::OneP,
        QueryType::TwoP,
        QueryType::ThreeP,
        QueryType::FourP,
        QueryType::TwoI,
        QueryType::ThreeI,
        QueryType::FourI,
        QueryType::OnePTwoI,
        QueryType::TwoIOneP,
        QueryType::TwoU,
        QueryType::TwoUOneP,
        QueryType::TwoIn,
        QueryType::ThreeIn,
        QueryType::TwoInOneP,
        QueryType::TwoPiOnePn,
        QueryType::TwoNuOneP,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            QueryType::OneP => "1p",
            QueryType::TwoP => "2p",
            QueryType::ThreeP => "3p",
            QueryType::FourP => "4p",
            QueryType::TwoI => "2i",
            QueryType::ThreeI => "3i",
            QueryType::FourI => "4i",
            QueryType::OnePTwoI => "1p2i",
            QueryType::TwoIOneP => "2i1p",
            QueryType::TwoU => "2u",
            QueryType::TwoUOneP => "2u1p",
            QueryType::TwoIn => "2in",
            QueryType::ThreeIn => "3in",
            QueryType::TwoInOneP => "2in1p",
            QueryType::TwoPiOnePn => "2pi1pn",
            QueryType::TwoNuOneP => "2nu1p",
        }
    }

    pub fn from_tag(tag: &str) -> Option<QueryType> {
        QueryType::ALL.iter().copied().find(|qt| qt.tag() == tag)
    }

    fn template(self) -> Vec<AtomTemplate> {
        match self {
            QueryType::OneP => vec![tpl!(A(0), 0, T)],
            QueryType::TwoP => vec![tpl!(A(0), 0, V(0)), tpl!(V(0), 1, T)],
            QueryType::ThreeP => {
                vec![tpl!(A(0), 0, V(0)), tpl!(V(0), 1, V(1)), tpl!(V(1), 2, T)]
            }
            QueryType::FourP => vec![
                tpl!(A(0), 0, V(0)),
                tpl!(V(0), 1, V(1)),
                tpl!(V(1), 2, V(2)),
                tpl!(V(2), 3, T),
            ],
            QueryType::TwoI => vec![tpl!(A(0), 0, T), tpl!(A(1), 1, T)],
            QueryType::ThreeI => vec![tpl!(A(0), 0, T), tpl!(A(1), 1, T), tpl!(A(2), 2, T)],
            QueryType::FourI => vec![
                tpl!(A(0), 0, T),
                tpl!(A(1), 1, T),
                tpl!(A(2), 2, T),
                tpl!(A(3), 3, T),
            ],
            QueryType::OnePTwoI => {
                vec![tpl!(A(0), 0, V(0)), tpl!(V(0), 1, T), tpl!(A(1), 2, T)]
            }
            QueryType::TwoIOneP => {
                vec![tpl!(A(0), 0, V(0)), tpl!(A(1), 1, V(0)), tpl!(V(0), 2, T)]
            }
            QueryType::TwoU => vec![tpl!(A(0), 0, T), tpl!(A(1), 1, T)],
            QueryType::TwoUOneP => {
                vec![tpl!(A(0), 0, V(0)), tpl!(A(1), 1, V(0)), tpl!(V(0), 2, T)]
            }
            QueryType::TwoIn => vec![tpl!(A(0), 0, T), tpl!(-A(1), 1, T)],
            QueryType::ThreeIn => {
                vec![tpl!(A(0), 0, T), tpl!(A(1), 1, T), tpl!(-A(2), 2, T)]
            }
            QueryType::TwoInOneP => {
                vec![tpl!(A(0), 0, V(0)), tpl!(-A(1), 1, V(0)), tpl!(V(0), 2, T)]
            }
            QueryType::TwoPiOnePn => {
                vec![tpl!(A(0), 0, V(0)), tpl!(V(0), 1, T), tpl!(-A(1), 2, T)]
            }
            // Disjunctive form of "not both chain atoms, and the direct
            // atom": each branch negates one chain atom.
            QueryType::TwoNuOneP => {
                vec![tpl!(-A(0), 0, V(0)), tpl!(-V(0), 1, T), tpl!(A(1), 2, T)]
            }
        }
    }

    /// (subject, object) slot pairs of the template, for canonical-form
    /// validation during parsing.
    pub(crate) fn template_for_validation(self) -> Vec<(Slot, Slot)> {
        self.template().into_iter().map(|t| (t.subject, t.object)).collect()
    }

    /// Branches of the disjunctive normal form as atom index sets.
    pub fn dnf_branches(self) -> Vec<Vec<usize>> {
        match self {
            QueryType::TwoU => vec![vec![0], vec![1]],
            QueryType::TwoUOneP | QueryType::TwoNuOneP => vec![vec![0, 2], vec![1, 2]],
            other => vec![(0..other.atom_count()).collect()],
        }
    }

    pub fn atom_count(self) -> usize {
        self.template().len()
    }

    pub fn anchor_count(self) -> usize {
        match self {
            QueryType::OneP | QueryType::TwoP | QueryType::ThreeP | QueryType::FourP => 1,
            QueryType::ThreeI | QueryType::ThreeIn => 3,
            QueryType::FourI => 4,
            _ => 2,
        }
    }

    pub fn relation_count(self) -> usize {
        self.template().len()
    }

    pub fn var_count(self) -> usize {
        match self {
            QueryType::TwoP => 1,
            QueryType::ThreeP => 2,
            QueryType::FourP => 3,
            QueryType::OnePTwoI
            | QueryType::TwoIOneP
            | QueryType::TwoUOneP
            | QueryType::TwoInOneP
            | QueryType::TwoPiOnePn
            | QueryType::TwoNuOneP => 1,
            _ => 0,
        }
    }

    pub fn has_union(self) -> bool {
        matches!(self, QueryType::TwoU | QueryType::TwoUOneP | QueryType::TwoNuOneP)
    }

    pub fn has_negation(self) -> bool {
        matches!(
            self,
            QueryType::TwoIn
                | QueryType::ThreeIn
                | QueryType::TwoInOneP
                | QueryType::TwoPiOnePn
                | QueryType::TwoNuOneP
        )
    }
}

impl std::fmt::Display for QueryType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

impl TryFrom<String> for QueryType {
    type Error = QueryError;
    fn try_from(s: String) -> Result<Self, QueryError> {
        QueryType::from_tag(&s).ok_or(QueryError::UnknownType(s))
    }
}

impl From<QueryType> for String {
    fn from(qt: QueryType) -> String {
        qt.tag().to_owned()
    }
}

/// An instantiated query: a shape plus concrete anchors and relations.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Query {
    query_type: QueryType,
    atoms: Vec<Atom>,
}

impl Query {
    /// Binds a template's anchor and relation slots. Slice lengths must
    /// match the shape's arities exactly.
    pub fn instantiate(
        query_type: QueryType,
        anchors: &[EntityId],
        relations: &[RelationId],
    ) -> Result<Query, QueryError> {
        if anchors.len() != query_type.anchor_count() {
            return Err(QueryError::ArityMismatch {
                query_type,
                detail: format!(
                    "expected {} anchors, got {}",
                    query_type.anchor_count(),
                    anchors.len()
                ),
            });
        }
        if relations.len() != query_type.relation_count() {
            return Err(QueryError::ArityMismatch {
                query_type,
                detail: format!(
                    "expected {} relations, got {}",
                    query_type.relation_count(),
                    relations.len()
                ),
            });
        }
        let bind = |slot: Slot| match slot {
            Slot::Anchor(i) => Node::Anchor(anchors[i]),
            Slot::Var(i) => Node::Var(i),
            Slot::Target => Node::Target,
        };
        let atoms = query_type
            .template()
            .into_iter()
            .map(|t| Atom {
                subject: bind(t.subject),
                relation: relations[t.relation],
                object: bind(t.object),
                negated: t.negated,
            })
            .collect();
        Ok(Query { query_type, atoms })
    }

    pub fn query_type(&self) -> QueryType {
        self.query_type
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn atom(&self, i: usize) -> &Atom {
        &self.atoms[i]
    }

    pub fn var_count(&self) -> usize {
        self.query_type.var_count()
    }

    /// Branches of the disjunctive normal form as atom index sets.
    pub fn dnf_branches(&self) -> Vec<Vec<usize>> {
        self.query_type.dnf_branches()
    }

    /// Anchor entities in template slot order.
    pub fn anchors(&self) -> Vec<EntityId> {
        let mut out = vec![EntityId(0); self.query_type.anchor_count()];
        for (tpl, atom) in self.query_type.template().iter().zip(&self.atoms) {
            for (slot, node) in [(tpl.subject, atom.subject), (tpl.object, atom.object)] {
                if let (Slot::Anchor(i), Node::Anchor(e)) = (slot, node) {
                    out[i] = e;
                }
            }
        }
        out
    }

    /// Relations in template slot order.
    pub fn relations(&self) -> Vec<RelationId> {
        self.atoms.iter().map(|a| a.relation).collect()
    }
}

/// A query paired with a single answer entity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QaPair {
    pub query: Query,
    pub answer: EntityId,
}

#[derive(Debug, Error)]
pub enum QueryError {
    #[error("unknown query type tag {0:?}")]
    UnknownType(String),
    #[error("arity mismatch for {}: {detail}", query_type.tag())]
    ArityMismatch { query_type: QueryType, detail: String },
    #[error("{path}: {msg}")]
    Schema { path: String, msg: String },
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(i: u32) -> EntityId {
        EntityId(i)
    }
    fn r(i: u32) -> RelationId {
        RelationId(i)
    }

    #[test]
    fn tags_round_trip_for_all_types() {
        for qt in QueryType::ALL {
            assert_eq!(QueryType::from_tag(qt.tag()), Some(qt));
        }
        assert_eq!(QueryType::from_tag("5p"), None);
    }

    #[test]
    fn atom_counts_match_shape_sizes() {
        let expect = [
            (QueryType::OneP, 1),
            (QueryType::TwoP, 2),
            (QueryType::ThreeP, 3),
            (QueryType::FourP, 4),
            (QueryType::TwoI, 2),
            (QueryType::ThreeI, 3),
            (QueryType::FourI, 4),
            (QueryType::OnePTwoI, 3),
            (QueryType::TwoIOneP, 3),
            (QueryType::TwoU, 2),
            (QueryType::TwoUOneP, 3),
            (QueryType::TwoIn, 2),
            (QueryType::ThreeIn, 3),
            (QueryType::TwoInOneP, 3),
            (QueryType::TwoPiOnePn, 3),
            (QueryType::TwoNuOneP, 3),
        ];
        for (qt, n) in expect {
            assert_eq!(qt.atom_count(), n, "{qt}");
        }
    }

    #[test]
    fn instantiation_validates_arity() {
        assert!(Query::instantiate(QueryType::TwoP, &[e(0)], &[r(0), r(1)]).is_ok());
        assert!(Query::instantiate(QueryType::TwoP, &[e(0), e(1)], &[r(0), r(1)]).is_err());
        assert!(Query::instantiate(QueryType::TwoP, &[e(0)], &[r(0)]).is_err());
    }

    #[test]
    fn chain_template_links_through_variables() {
        let q = Query::instantiate(QueryType::ThreeP, &[e(7)], &[r(0), r(1), r(2)]).unwrap();
        assert_eq!(q.atom(0).subject, Node::Anchor(e(7)));
        assert_eq!(q.atom(0).object, Node::Var(0));
        assert_eq!(q.atom(1).subject, Node::Var(0));
        assert_eq!(q.atom(1).object, Node::Var(1));
        assert_eq!(q.atom(2).object, Node::Target);
        assert!(q.atoms().iter().all(|a| !a.negated));
    }

    #[test]
    fn union_shapes_have_two_branches_sharing_the_projection() {
        let q =
            Query::instantiate(QueryType::TwoUOneP, &[e(1), e(2)], &[r(0), r(1), r(2)]).unwrap();
        assert_eq!(q.dnf_branches(), vec![vec![0, 2], vec![1, 2]]);
        assert_eq!(q.atom(0).object, Node::Var(0));
        assert_eq!(q.atom(1).object, Node::Var(0));
        assert_eq!(q.atom(2).subject, Node::Var(0));
        // Three independent relation slots.
        assert_eq!(q.relations(), vec![r(0), r(1), r(2)]);
    }

    #[test]
    fn negated_union_negates_one_chain_atom_per_branch() {
        let q =
            Query::instantiate(QueryType::TwoNuOneP, &[e(1), e(2)], &[r(0), r(1), r(2)]).unwrap();
        assert!(q.atom(0).negated);
        assert!(q.atom(1).negated);
        assert!(!q.atom(2).negated);
        for branch in q.dnf_branches() {
            let negs = branch.iter().filter(|&&i| q.atom(i).negated).count();
            assert_eq!(negs, 1);
            assert!(branch.contains(&2));
        }
    }

    #[test]
    fn negation_sits_in_the_declared_slot() {
        let q = Query::instantiate(QueryType::ThreeIn, &[e(1), e(2), e(3)], &[r(0), r(1), r(2)])
            .unwrap();
        assert_eq!(
            q.atoms().iter().map(|a| a.negated).collect::<Vec<_>>(),
            vec![false, false, true]
        );
        let q = Query::instantiate(QueryType::TwoInOneP, &[e(1), e(2)], &[r(0), r(1), r(2)])
            .unwrap();
        assert_eq!(
            q.atoms().iter().map(|a| a.negated).collect::<Vec<_>>(),
            vec![false, true, false]
        );
    }

    #[test]
    fn anchors_and_relations_recover_slot_order() {
        let q =
            Query::instantiate(QueryType::OnePTwoI, &[e(9), e(4)], &[r(5), r(6), r(7)]).unwrap();
        assert_eq!(q.anchors(), vec![e(9), e(4)]);
        assert_eq!(q.relations(), vec![r(5), r(6), r(7)]);
    }
}
