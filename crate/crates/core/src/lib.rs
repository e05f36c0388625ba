//! Complex query answering over incomplete knowledge graphs.
//!
//! The crate covers the full workbench pipeline:
//!
//! * [`kg`] — interned, indexed triple stores with train/valid/test splits
//!   and chronological splitting of timestamped facts;
//! * [`query`] — the 16 supported query shapes (projections, intersections,
//!   unions, negations) with a JSON-lines exchange format;
//! * [`matcher`] — exact query answering and reasoning-tree enumeration with
//!   per-link train/missing provenance;
//! * [`hardness`] — answer hardness labels (trivial / partial / full
//!   inference), query-type reduction and reduction matrices;
//! * [`generator`] — seeded, hardness-balanced benchmark generation;
//! * [`predictor`] — a complex-embedding link predictor with softmax
//!   training, plus baselines and checkpointing;
//! * [`solver`] — fuzzy-logic beam-search query solving over any link
//!   predictor, with an exact train-edge override mode;
//! * [`eval`] — filtered ranking metrics, stratified reports and rank-sum
//!   significance tests;
//! * [`oracle`] — deliberately naive reference implementations used to
//!   cross-check the fast paths in tests.

pub mod eval;
pub mod generator;
pub mod hardness;
pub mod kg;
pub mod matcher;
pub mod oracle;
pub mod predictor;
pub mod query;
pub mod solver;
pub mod synthetic;
pub mod util;
