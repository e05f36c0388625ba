//! Multi-relational graph storage: interned entities/relations, indexed
//! triple sets, train/valid/test splits and temporal splitting.

mod graph;
mod io;
mod split;
mod symbol;

pub use graph::KnowledgeGraph;
pub use io::{
    load_plain_triples, load_split_dir, load_timed_triples, parse_plain_triples,
    parse_timed_triples, read_dict, save_split_dir, write_dict, write_triples,
};
pub use split::{temporal_split, KnowledgeGraphSplit, SplitPart, TimedTriple};
pub use symbol::SymbolTable;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Dense entity identifier. Ids are assigned contiguously from 0 in
/// first-seen order (or taken from a dictionary file).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntityId(pub u32);

/// Dense relation identifier. After inverse materialization, relation `2k`
/// is the k-th forward relation and `2k+1` its inverse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RelationId(pub u32);

impl EntityId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl RelationId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }

    /// The paired relation under the even/odd inverse convention. Only
    /// meaningful on a graph where inverses have been materialized.
    #[inline]
    pub fn inverse(self) -> RelationId {
        RelationId(self.0 ^ 1)
    }

    /// True if this id denotes a forward relation under the even/odd
    /// convention.
    #[inline]
    pub fn is_forward(self) -> bool {
        self.0 % 2 == 0
    }
}

impl std::fmt::Display for EntityId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::fmt::Display for RelationId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A directed labelled edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triple {
    pub subject: EntityId,
    pub relation: RelationId,
    pub object: EntityId,
}

impl Triple {
    pub fn new(subject: EntityId, relation: RelationId, object: EntityId) -> Self {
        Triple { subject, relation, object }
    }
}

/// Traversal direction for neighbor lookups.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// subject -> object
    Forward,
    /// object -> subject
    Backward,
}

#[derive(Debug, Error)]
pub enum KgError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },
    #[error("id out of range: {0}")]
    IdOutOfRange(String),
    #[error("splits overlap: {0} appears in more than one of train/valid/test")]
    OverlappingSplits(String),
    #[error("inverse relations already materialized")]
    AlreadyAugmented,
    #[error("graphs are not compatible: {0}")]
    Incompatible(String),
    #[error("invalid split ratios: {0}")]
    BadRatios(String),
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("symbol table collision: {0}")]
    NameCollision(String),
}
