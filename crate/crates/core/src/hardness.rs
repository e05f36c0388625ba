//! Answer hardness: how much of a query's reasoning tree was seen in
//! training.
//!
//! A QA pair is *trivial* when some reasoning tree consists of training
//! edges only, *full-inference* when its minimal tree has no training edge
//! at all, and *partial* otherwise. Partial pairs are assigned a reduced
//! query type: contracting every trained edge of the minimal tree collapses
//! the known region of the query into fresh anchors, and the shape of the
//! remaining held-out edges is itself one of the supported query types.
//! Union pairs whose instantiated structure contains an edge absent from
//! the whole graph are flagged for removal instead, since one of their
//! branches is unverifiable even with a perfect predictor.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::matcher::{
    branch_positive_atoms, enumerate_trees, minimal_tree, tree_order, AtomProvenance,
    ReasoningTree,
};
use crate::kg::KnowledgeGraphSplit;
use crate::query::{QaPair, Query, QueryType, Slot};

/// Hardness of one QA pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum HardnessLabel {
    /// Fully answerable from training edges.
    Trivial,
    /// Requires predicting some links; the payload is the shape of the
    /// held-out remainder after contracting trained edges.
    Partial(QueryType),
    /// Every link of the minimal tree must be predicted.
    FullInference,
    /// Union pair with an edge absent from the full graph.
    FilteredOut,
}

impl HardnessLabel {
    pub fn tag(&self) -> &'static str {
        match self {
            HardnessLabel::Trivial => "trivial",
            HardnessLabel::Partial(_) => "partial",
            HardnessLabel::FullInference => "full-inference",
            HardnessLabel::FilteredOut => "filtered-out",
        }
    }

    pub fn reduced_type(&self) -> Option<QueryType> {
        match self {
            HardnessLabel::Partial(qt) => Some(*qt),
            _ => None,
        }
    }
}

impl std::fmt::Display for HardnessLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            HardnessLabel::Partial(qt) => write!(f, "partial({qt})"),
            other => f.write_str(other.tag()),
        }
    }
}

impl std::str::FromStr for HardnessLabel {
    type Err = String;

    /// Inverse of [`Display`](std::fmt::Display): accepts `trivial`,
    /// `full-inference`, `filtered-out` and `partial(<type tag>)`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "trivial" => return Ok(HardnessLabel::Trivial),
            "full-inference" => return Ok(HardnessLabel::FullInference),
            "filtered-out" => return Ok(HardnessLabel::FilteredOut),
            _ => {}
        }
        if let Some(tag) = s.strip_prefix("partial(").and_then(|r| r.strip_suffix(')')) {
            if let Some(qt) = QueryType::from_tag(tag) {
                return Ok(HardnessLabel::Partial(qt));
            }
        }
        Err(format!("unknown hardness label {s:?}"))
    }
}

#[derive(Debug, Clone)]
pub struct ClassifyConfig {
    /// Remove union pairs whose instantiated structure contains an edge
    /// absent from the full graph (the strict published rule). Disabling
    /// keeps such pairs and classifies them by their realizable branch.
    pub union_filter: bool,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        ClassifyConfig { union_filter: true }
    }
}

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("entity {answer} is not an answer of the query on the full graph")]
    NotAnAnswer { answer: u32 },
    #[error("residual shape cannot be canonicalized: {0}")]
    UnreducibleShape(String),
    #[error("query type {0} has no negated atoms")]
    NotANegationType(QueryType),
}

/// Classifies with the default configuration (union filtering on).
pub fn classify(qa: &QaPair, split: &KnowledgeGraphSplit) -> Result<HardnessLabel, ClassifyError> {
    classify_with(qa, split, &ClassifyConfig::default())
}

pub fn classify_with(
    qa: &QaPair,
    split: &KnowledgeGraphSplit,
    config: &ClassifyConfig,
) -> Result<HardnessLabel, ClassifyError> {
    let trees = enumerate_trees(qa, split);
    if trees.is_empty() {
        return Err(ClassifyError::NotAnAnswer { answer: qa.answer.0 });
    }
    let query = &qa.query;
    let cmp = tree_order(query);
    let minimal = trees.iter().min_by(|a, b| cmp(a, b)).expect("non-empty");

    if config.union_filter && query.query_type().has_union() && minimal.has_nonexistent_link() {
        return Ok(HardnessLabel::FilteredOut);
    }
    if minimal.missing_count == 0 {
        return Ok(HardnessLabel::Trivial);
    }
    let branches = query.dnf_branches();
    let branch_size = branch_positive_atoms(query, &branches[minimal.branch]).len();
    if minimal.missing_count == branch_size {
        return Ok(HardnessLabel::FullInference);
    }

    // Partial. For union structures, several branches tied at the minimal
    // missing count mean the model may choose which branch to predict: the
    // residual is itself a union of the per-branch residuals.
    if query.query_type().has_union() {
        let mut per_branch_min: BTreeMap<usize, &ReasoningTree> = BTreeMap::new();
        for t in &trees {
            per_branch_min
                .entry(t.branch)
                .and_modify(|best| {
                    if cmp(t, best).is_lt() {
                        *best = t;
                    }
                })
                .or_insert(t);
        }
        let tied: Vec<&ReasoningTree> = per_branch_min
            .values()
            .copied()
            .filter(|t| t.missing_count == minimal.missing_count)
            .collect();
        if tied.len() >= 2 {
            for t in &tied {
                if reduce_type(query, t)? != QueryType::OneP {
                    return Err(ClassifyError::UnreducibleShape(
                        "tied union branches with non-atomic residuals".into(),
                    ));
                }
            }
            return Ok(HardnessLabel::Partial(QueryType::TwoU));
        }
    }
    Ok(HardnessLabel::Partial(reduce_type(query, minimal)?))
}

/// Hardness of a negation query's positive part, plus where the negated
/// edges (instantiated by the minimal positive tree) actually live.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NegationReport {
    pub label: HardnessLabel,
    /// Bound negated atoms whose edge is in the training graph.
    pub negated_train: usize,
    /// Bound negated atoms whose edge is held out (valid/test).
    pub negated_missing: usize,
    /// Bound negated atoms whose edge is absent — the negation truly holds.
    pub negated_absent: usize,
}

pub fn classify_negation(
    qa: &QaPair,
    split: &KnowledgeGraphSplit,
) -> Result<NegationReport, ClassifyError> {
    if !qa.query.query_type().has_negation() {
        return Err(ClassifyError::NotANegationType(qa.query.query_type()));
    }
    let label = classify(qa, split)?;
    let minimal = minimal_tree(qa, split).expect("classify succeeded");
    let mut report =
        NegationReport { label, negated_train: 0, negated_missing: 0, negated_absent: 0 };
    for &(_, p) in &minimal.negated {
        match p {
            AtomProvenance::Train => report.negated_train += 1,
            AtomProvenance::Missing => report.negated_missing += 1,
            AtomProvenance::NonExistent => report.negated_absent += 1,
        }
    }
    Ok(report)
}

/// Identity of a query node by structural position, so that equal anchor
/// entities in different slots stay distinct during contraction.
type NodeClass = usize;

fn slot_index(slot: Slot, anchor_count: usize) -> NodeClass {
    match slot {
        Slot::Anchor(i) => i,
        Slot::Var(i) => anchor_count + i,
        Slot::Target => usize::MAX, // replaced by the caller
    }
}

/// Contracts the trained edges of one reasoning tree and canonicalizes the
/// shape of the held-out remainder.
///
/// Every Train atom of the tree's branch merges its endpoint nodes; the
/// Missing atoms over the merged classes form the residual. The class
/// containing the target is the residual target, classes with no incoming
/// residual edge are anchors, everything else is an existential variable.
pub fn reduce_type(query: &Query, tree: &ReasoningTree) -> Result<QueryType, ClassifyError> {
    let qt = query.query_type();
    let anchor_count = qt.anchor_count();
    let node_count = anchor_count + qt.var_count() + 1;
    let target_node = node_count - 1;
    let slots = qt.template_for_validation();
    let node_of = |slot: Slot| -> NodeClass {
        let i = slot_index(slot, anchor_count);
        if i == usize::MAX {
            target_node
        } else {
            i
        }
    };

    // Tiny union-find.
    let mut parent: Vec<usize> = (0..node_count).collect();
    fn find(parent: &mut Vec<usize>, x: usize) -> usize {
        if parent[x] != x {
            let root = find(parent, parent[x]);
            parent[x] = root;
        }
        parent[x]
    }
    let prov: BTreeMap<usize, AtomProvenance> = tree.branch_provenance(query).collect();
    for (&i, &p) in &prov {
        if p == AtomProvenance::Train {
            let (s_slot, o_slot) = slots[i];
            let a = find(&mut parent, node_of(s_slot));
            let b = find(&mut parent, node_of(o_slot));
            parent[a] = b;
        }
    }
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for (&i, &p) in &prov {
        if p == AtomProvenance::Missing {
            let (s_slot, o_slot) = slots[i];
            let a = find(&mut parent, node_of(s_slot));
            let b = find(&mut parent, node_of(o_slot));
            if a == b {
                return Err(ClassifyError::UnreducibleShape(
                    "held-out edge inside a contracted region".into(),
                ));
            }
            edges.push((a, b));
        }
    }
    if edges.is_empty() {
        return Err(ClassifyError::UnreducibleShape("no held-out edges to reduce".into()));
    }
    let target_class = find(&mut parent, target_node);
    canonical_shape(&edges, target_class)
        .ok_or_else(|| ClassifyError::UnreducibleShape(format!("{edges:?}")))
}

/// Maps a residual edge multiset to its query type by degree analysis.
fn canonical_shape(edges: &[(usize, usize)], target: usize) -> Option<QueryType> {
    let k = edges.len();
    let mut in_deg: BTreeMap<usize, usize> = BTreeMap::new();
    let mut out_deg: BTreeMap<usize, usize> = BTreeMap::new();
    for &(s, o) in edges {
        *out_deg.entry(s).or_default() += 1;
        *in_deg.entry(o).or_default() += 1;
        in_deg.entry(s).or_default();
        out_deg.entry(o).or_default();
    }
    if !in_deg.contains_key(&target) || in_deg[&target] == 0 {
        return None; // target must receive at least one held-out edge
    }
    if out_deg[&target] != 0 {
        return None;
    }
    // Internal nodes: neither target nor pure source.
    let internals: Vec<usize> = in_deg
        .keys()
        .filter(|&&n| n != target && in_deg[&n] > 0)
        .copied()
        .collect();
    let target_in = in_deg[&target];
    match (k, target_in, internals.len()) {
        (1, 1, 0) => Some(QueryType::OneP),
        (2, 2, 0) => Some(QueryType::TwoI),
        (3, 3, 0) => Some(QueryType::ThreeI),
        (4, 4, 0) => Some(QueryType::FourI),
        (2, 1, 1) => chain_ok(&internals, &in_deg, &out_deg).then_some(QueryType::TwoP),
        (3, 1, 2) => chain_ok(&internals, &in_deg, &out_deg).then_some(QueryType::ThreeP),
        (4, 1, 3) => chain_ok(&internals, &in_deg, &out_deg).then_some(QueryType::FourP),
        (3, 2, 1) => {
            let v = internals[0];
            (in_deg[&v] == 1 && out_deg[&v] == 1).then_some(QueryType::OnePTwoI)
        }
        (3, 1, 1) => {
            let v = internals[0];
            (in_deg[&v] == 2 && out_deg[&v] == 1).then_some(QueryType::TwoIOneP)
        }
        _ => None,
    }
}

fn chain_ok(
    internals: &[usize],
    in_deg: &BTreeMap<usize, usize>,
    out_deg: &BTreeMap<usize, usize>,
) -> bool {
    internals.iter().all(|v| in_deg[v] == 1 && out_deg[v] == 1)
}

/// Reduced types reachable from each query shape (excluding the shape
/// itself, which denotes full inference). Empty means the shape can only
/// produce trivial or full-inference pairs.
pub fn possible_reductions(qt: QueryType) -> &'static [QueryType] {
    use QueryType::*;
    match qt {
        OneP | TwoU | TwoIn | TwoNuOneP => &[],
        TwoP | TwoI | ThreeIn | TwoInOneP | TwoPiOnePn => &[OneP],
        ThreeP => &[OneP, TwoP],
        FourP => &[OneP, TwoP, ThreeP],
        ThreeI => &[OneP, TwoI],
        FourI => &[OneP, TwoI, ThreeI],
        OnePTwoI | TwoIOneP => &[OneP, TwoP, TwoI],
        TwoUOneP => &[OneP, TwoU],
    }
}

/// Per-type classification tallies.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MatrixRow {
    pub reduced_counts: BTreeMap<QueryType, usize>,
    pub full_count: usize,
    pub trivial_count: usize,
    pub filtered_count: usize,
}

impl MatrixRow {
    /// Pairs participating in percentages: partial + full inference.
    pub fn counted(&self) -> usize {
        self.reduced_counts.values().sum::<usize>() + self.full_count
    }
}

/// Reduction percentages per original query type. Trivial and filtered
/// pairs are excluded from percentages but reported alongside.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReductionMatrix {
    pub rows: BTreeMap<QueryType, MatrixRow>,
}

/// One-decimal percentage with ties away from zero (97.25 -> 97.3).
pub fn percent_1dp(count: usize, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let pct = 100.0 * count as f64 / total as f64;
    (pct * 10.0).round() / 10.0
}

pub fn reduction_matrix(
    pairs: &[QaPair],
    split: &KnowledgeGraphSplit,
) -> Result<ReductionMatrix, ClassifyError> {
    reduction_matrix_with(pairs, split, &ClassifyConfig::default())
}

pub fn reduction_matrix_with(
    pairs: &[QaPair],
    split: &KnowledgeGraphSplit,
    config: &ClassifyConfig,
) -> Result<ReductionMatrix, ClassifyError> {
    let mut matrix = ReductionMatrix::default();
    for qa in pairs {
        let row = matrix.rows.entry(qa.query.query_type()).or_default();
        match classify_with(qa, split, config)? {
            HardnessLabel::Trivial => row.trivial_count += 1,
            HardnessLabel::FilteredOut => row.filtered_count += 1,
            HardnessLabel::FullInference => row.full_count += 1,
            HardnessLabel::Partial(reduced) => {
                *row.reduced_counts.entry(reduced).or_default() += 1
            }
        }
    }
    Ok(matrix)
}

impl ReductionMatrix {
    /// Builds a matrix from already-computed `(query type, label)` pairs,
    /// e.g. read back from a label file.
    pub fn from_labels(labels: impl IntoIterator<Item = (QueryType, HardnessLabel)>) -> Self {
        let mut matrix = ReductionMatrix::default();
        for (qt, label) in labels {
            let row = matrix.rows.entry(qt).or_default();
            match label {
                HardnessLabel::Trivial => row.trivial_count += 1,
                HardnessLabel::FilteredOut => row.filtered_count += 1,
                HardnessLabel::FullInference => row.full_count += 1,
                HardnessLabel::Partial(reduced) => {
                    *row.reduced_counts.entry(reduced).or_default() += 1
                }
            }
        }
        matrix
    }

    fn cell(&self, row_type: QueryType, col: QueryType, row: &MatrixRow) -> Option<f64> {
        let total = row.counted();
        if col == row_type {
            Some(percent_1dp(row.full_count, total))
        } else if possible_reductions(row_type).contains(&col) {
            Some(percent_1dp(row.reduced_counts.get(&col).copied().unwrap_or(0), total))
        } else {
            None
        }
    }

    /// CSV with one row per query type; impossible cells are "-".
    pub fn to_csv(&self) -> String {
        let mut out = String::from("type,pairs");
        for col in QueryType::ALL {
            out.push_str(&format!(",{col}"));
        }
        out.push_str(",trivial,filtered\n");
        for (&qt, row) in &self.rows {
            out.push_str(&format!("{qt},{}", row.counted()));
            for col in QueryType::ALL {
                match self.cell(qt, col, row) {
                    Some(p) => out.push_str(&format!(",{p:.1}")),
                    None => out.push_str(",-"),
                }
            }
            out.push_str(&format!(",{},{}\n", row.trivial_count, row.filtered_count));
        }
        out
    }

    /// Fixed-width table for terminals.
    pub fn to_text(&self) -> String {
        let mut out = format!("{:<8}{:>8}", "type", "pairs");
        for col in QueryType::ALL {
            out.push_str(&format!("{:>8}", col.tag()));
        }
        out.push_str(&format!("{:>9}{:>9}\n", "trivial", "filtered"));
        for (&qt, row) in &self.rows {
            out.push_str(&format!("{:<8}{:>8}", qt.tag(), row.counted()));
            for col in QueryType::ALL {
                match self.cell(qt, col, row) {
                    Some(p) => out.push_str(&format!("{:>8.1}", p)),
                    None => out.push_str(&format!("{:>8}", "-")),
                }
            }
            out.push_str(&format!("{:>9}{:>9}\n", row.trivial_count, row.filtered_count));
        }
        out
    }
}
