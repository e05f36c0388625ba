//! Ranking metrics with filtered evaluation, hardness-stratified reports,
//! and a Mann–Whitney U test for comparing score samples.
//!
//! Ranks are *filtered*: when ranking one answer, every other known answer
//! of the query (easy or hard) is removed from the candidate list so
//! correct competitors don't count as mistakes. The headline number is the
//! doubly normalized mean reciprocal rank — reciprocal ranks are averaged
//! within each query first, then across queries — so queries with many
//! answers don't dominate.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::hardness::HardnessLabel;
use crate::kg::EntityId;
use crate::query::QueryType;

/// How candidates with identical scores share a rank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TiePolicy {
    /// Rank = 1 + better + ties/2 (expected rank under random shuffling).
    #[default]
    Average,
    /// Ties resolve in the answer's favor.
    Optimistic,
    /// Ties resolve against the answer.
    Pessimistic,
}

/// Thresholds for hits@k columns.
pub const HITS_AT: [usize; 3] = [1, 3, 10];

/// Filtered rank of `answer` within `scores`, with every entity in
/// `exclude` (minus the answer itself) removed from the candidate pool.
pub fn filtered_rank(
    scores: &[f64],
    answer: EntityId,
    exclude: &BTreeSet<EntityId>,
    policy: TiePolicy,
) -> f64 {
    let own = scores[answer.index()];
    let mut better = 0usize;
    let mut ties = 0usize;
    for (e, &s) in scores.iter().enumerate() {
        let e = EntityId(e as u32);
        if e == answer || exclude.contains(&e) {
            continue;
        }
        if s > own {
            better += 1;
        } else if s == own {
            ties += 1;
        }
    }
    match policy {
        TiePolicy::Average => 1.0 + better as f64 + ties as f64 / 2.0,
        TiePolicy::Optimistic => 1.0 + better as f64,
        TiePolicy::Pessimistic => 1.0 + (better + ties) as f64,
    }
}

/// Per-query metrics: reciprocal rank and hits averaged over the query's
/// hard answers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QueryEval {
    pub rr: f64,
    pub hits: [f64; 3],
    pub hard_answers: usize,
}

/// Evaluates one query's ranking; `None` when it has no hard answers
/// (callers should count those as skipped).
pub fn evaluate_query(
    scores: &[f64],
    hard: &BTreeSet<EntityId>,
    easy: &BTreeSet<EntityId>,
    policy: TiePolicy,
) -> Option<QueryEval> {
    if hard.is_empty() {
        return None;
    }
    let all: BTreeSet<EntityId> = hard.union(easy).copied().collect();
    let mut rr = 0.0;
    let mut hits = [0.0; 3];
    for &a in hard {
        let rank = filtered_rank(scores, a, &all, policy);
        rr += 1.0 / rank;
        for (i, &k) in HITS_AT.iter().enumerate() {
            if rank <= k as f64 {
                hits[i] += 1.0;
            }
        }
    }
    let n = hard.len() as f64;
    Some(QueryEval { rr: rr / n, hits: hits.map(|h| h / n), hard_answers: hard.len() })
}

/// Mean metrics over a group of evaluated queries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GroupMetrics {
    pub queries: usize,
    pub mrr: f64,
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
}

pub fn aggregate(evals: &[QueryEval]) -> GroupMetrics {
    let n = evals.len();
    if n == 0 {
        return GroupMetrics { queries: 0, mrr: 0.0, hits1: 0.0, hits3: 0.0, hits10: 0.0 };
    }
    let sum = |f: fn(&QueryEval) -> f64| evals.iter().map(f).sum::<f64>() / n as f64;
    GroupMetrics {
        queries: n,
        mrr: sum(|e| e.rr),
        hits1: sum(|e| e.hits[0]),
        hits3: sum(|e| e.hits[1]),
        hits10: sum(|e| e.hits[2]),
    }
}

/// One stratum of the report: a query shape at a hardness level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct StratumKey {
    pub query_type: QueryType,
    pub label: HardnessLabel,
}

impl std::fmt::Display for StratumKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.query_type, self.label)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StratifiedReport {
    pub strata: BTreeMap<StratumKey, GroupMetrics>,
    /// Query-count-weighted combination of all strata.
    pub overall: GroupMetrics,
    /// Queries dropped for having no hard answers.
    pub skipped: usize,
}

pub fn stratified(
    per_stratum: &BTreeMap<StratumKey, Vec<QueryEval>>,
    skipped: usize,
) -> StratifiedReport {
    let strata: BTreeMap<StratumKey, GroupMetrics> =
        per_stratum.iter().map(|(&k, v)| (k, aggregate(v))).collect();
    let total: usize = strata.values().map(|g| g.queries).sum();
    let overall = if total == 0 {
        GroupMetrics { queries: 0, mrr: 0.0, hits1: 0.0, hits3: 0.0, hits10: 0.0 }
    } else {
        let w = |f: fn(&GroupMetrics) -> f64| {
            strata.values().map(|g| g.queries as f64 * f(g)).sum::<f64>() / total as f64
        };
        GroupMetrics {
            queries: total,
            mrr: w(|g| g.mrr),
            hits1: w(|g| g.hits1),
            hits3: w(|g| g.hits3),
            hits10: w(|g| g.hits10),
        }
    };
    StratifiedReport { strata, overall, skipped }
}

impl StratifiedReport {
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{:<24}{:>8}{:>9}{:>9}{:>9}{:>9}\n",
            "stratum", "queries", "mrr", "hits@1", "hits@3", "hits@10"
        );
        for (key, g) in &self.strata {
            out.push_str(&format!(
                "{:<24}{:>8}{:>9.4}{:>9.4}{:>9.4}{:>9.4}\n",
                key.to_string(),
                g.queries,
                g.mrr,
                g.hits1,
                g.hits3,
                g.hits10
            ));
        }
        out.push_str(&format!(
            "{:<24}{:>8}{:>9.4}{:>9.4}{:>9.4}{:>9.4}\n",
            "overall",
            self.overall.queries,
            self.overall.mrr,
            self.overall.hits1,
            self.overall.hits3,
            self.overall.hits10
        ));
        if self.skipped > 0 {
            out.push_str(&format!("skipped (no hard answers): {}\n", self.skipped));
        }
        out
    }
}

/// Half-open bands over intermediate-entity counts; the last band is
/// unbounded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CardinalityBands {
    edges: Vec<usize>,
}

impl Default for CardinalityBands {
    fn default() -> Self {
        CardinalityBands { edges: vec![0, 1, 2, 4, 8, 16] }
    }
}

impl CardinalityBands {
    /// Edges must be strictly increasing and start at 0.
    pub fn new(edges: Vec<usize>) -> Option<Self> {
        if edges.first() != Some(&0) || edges.windows(2).any(|w| w[0] >= w[1]) {
            return None;
        }
        Some(CardinalityBands { edges })
    }

    pub fn band_count(&self) -> usize {
        self.edges.len()
    }

    pub fn band_of(&self, cardinality: usize) -> usize {
        match self.edges.binary_search(&cardinality) {
            Ok(i) => i,
            Err(i) => i - 1,
        }
    }

    pub fn label(&self, band: usize) -> String {
        let lo = self.edges[band];
        match self.edges.get(band + 1) {
            None => format!("{lo}+"),
            Some(&hi) if hi == lo + 1 => format!("{lo}"),
            Some(&hi) => format!("{lo}-{}", hi - 1),
        }
    }
}

/// Metrics grouped by how many distinct intermediate entities each query's
/// trained region reaches.
pub fn cardinality_strata(
    items: &[(usize, QueryEval)],
    bands: &CardinalityBands,
) -> BTreeMap<String, GroupMetrics> {
    let mut grouped: BTreeMap<usize, Vec<QueryEval>> = BTreeMap::new();
    for &(card, ev) in items {
        grouped.entry(bands.band_of(card)).or_default().push(ev);
    }
    grouped
        .into_iter()
        .map(|(band, evals)| (bands.label(band), aggregate(&evals)))
        .collect()
}

/// Share of queries per type touching the single most frequent anchor or
/// relation. Each query counts an anchor/relation at most once even if it
/// occupies several slots.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImbalanceRow {
    pub queries: usize,
    pub modal_anchor: u32,
    pub modal_anchor_share: f64,
    pub modal_relation: u32,
    pub modal_relation_share: f64,
}

pub fn imbalance_report(
    queries: impl IntoIterator<Item = crate::query::Query>,
) -> BTreeMap<QueryType, ImbalanceRow> {
    struct Tally {
        queries: usize,
        anchors: BTreeMap<u32, usize>,
        relations: BTreeMap<u32, usize>,
    }
    let mut per_type: BTreeMap<QueryType, Tally> = BTreeMap::new();
    for q in queries {
        let t = per_type.entry(q.query_type()).or_insert_with(|| Tally {
            queries: 0,
            anchors: BTreeMap::new(),
            relations: BTreeMap::new(),
        });
        t.queries += 1;
        let mut anchors: Vec<u32> = q.anchors().iter().map(|a| a.0).collect();
        anchors.sort_unstable();
        anchors.dedup();
        for a in anchors {
            *t.anchors.entry(a).or_default() += 1;
        }
        let mut relations: Vec<u32> = q.relations().iter().map(|r| r.0).collect();
        relations.sort_unstable();
        relations.dedup();
        for r in relations {
            *t.relations.entry(r).or_default() += 1;
        }
    }
    per_type
        .into_iter()
        .map(|(qt, t)| {
            let modal = |m: &BTreeMap<u32, usize>| {
                m.iter()
                    .max_by_key(|&(&id, &c)| (c, std::cmp::Reverse(id)))
                    .map(|(&id, &c)| (id, c as f64 / t.queries as f64))
                    .unwrap_or((0, 0.0))
            };
            let (a_id, a_share) = modal(&t.anchors);
            let (r_id, r_share) = modal(&t.relations);
            (
                qt,
                ImbalanceRow {
                    queries: t.queries,
                    modal_anchor: a_id,
                    modal_anchor_share: a_share,
                    modal_relation: r_id,
                    modal_relation_share: r_share,
                },
            )
        })
        .collect()
}

/// Two-sided Mann–Whitney U comparison of two score samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MwuResult {
    /// U statistic of the first sample (pairs won plus half the pairs tied).
    pub u: f64,
    pub p: f64,
    /// Exact permutation p-value (both samples small) vs normal
    /// approximation with tie correction and continuity correction.
    pub exact: bool,
    /// All observations identical: the test is uninformative and p is 1.
    pub zero_variance: bool,
}

/// Sample sizes up to this use exact enumeration of all group relabelings.
pub const MWU_EXACT_LIMIT: usize = 8;

pub fn mann_whitney_u(xs: &[f64], ys: &[f64]) -> Option<MwuResult> {
    if xs.is_empty() || ys.is_empty() {
        return None;
    }
    let (n1, n2) = (xs.len(), ys.len());
    let u_of = |xs: &[f64], ys: &[f64]| -> f64 {
        let mut u = 0.0;
        for &x in xs {
            for &y in ys {
                if x > y {
                    u += 1.0;
                } else if x == y {
                    u += 0.5;
                }
            }
        }
        u
    };
    let u_obs = u_of(xs, ys);
    let mean = n1 as f64 * n2 as f64 / 2.0;

    let mut combined: Vec<f64> = xs.iter().chain(ys).copied().collect();
    combined.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let zero_variance = combined.first() == combined.last();
    if zero_variance {
        return Some(MwuResult { u: u_obs, p: 1.0, exact: n1 <= MWU_EXACT_LIMIT && n2 <= MWU_EXACT_LIMIT, zero_variance: true });
    }

    if n1 <= MWU_EXACT_LIMIT && n2 <= MWU_EXACT_LIMIT {
        // Permutation distribution of U over every way of relabelling the
        // observed values into groups of the same sizes.
        let threshold = (u_obs - mean).abs() - 1e-12;
        let mut hits = 0usize;
        let mut total = 0usize;
        let mut chosen = Vec::with_capacity(n1);
        enumerate_splits(&combined, n1, 0, &mut chosen, &mut |sel, rest| {
            total += 1;
            if (u_of(sel, rest) - mean).abs() >= threshold {
                hits += 1;
            }
        });
        return Some(MwuResult {
            u: u_obs,
            p: hits as f64 / total as f64,
            exact: true,
            zero_variance: false,
        });
    }

    // Normal approximation with tie correction and continuity correction.
    let n = (n1 + n2) as f64;
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < combined.len() {
        let mut j = i + 1;
        while j < combined.len() && combined[j] == combined[i] {
            j += 1;
        }
        let t = (j - i) as f64;
        tie_term += t * t * t - t;
        i = j;
    }
    let var = (n1 as f64 * n2 as f64 / 12.0) * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if var <= 0.0 {
        return Some(MwuResult { u: u_obs, p: 1.0, exact: false, zero_variance: true });
    }
    let z = ((u_obs - mean).abs() - 0.5).max(0.0) / var.sqrt();
    let p = (2.0 * normal_sf(z)).min(1.0);
    Some(MwuResult { u: u_obs, p, exact: false, zero_variance: false })
}

/// Calls `visit(selected, rest)` for every size-`k` subset of `values`.
fn enumerate_splits(
    values: &[f64],
    k: usize,
    start: usize,
    chosen: &mut Vec<usize>,
    visit: &mut impl FnMut(&[f64], &[f64]),
) {
    if chosen.len() == k {
        let sel: Vec<f64> = chosen.iter().map(|&i| values[i]).collect();
        let rest: Vec<f64> = (0..values.len())
            .filter(|i| !chosen.contains(i))
            .map(|i| values[i])
            .collect();
        visit(&sel, &rest);
        return;
    }
    let remaining = k - chosen.len();
    for i in start..=values.len().saturating_sub(remaining) {
        chosen.push(i);
        enumerate_splits(values, k, i + 1, chosen, visit);
        chosen.pop();
    }
}

/// Standard normal survival function via an error-function rational
/// approximation (absolute error below 1.5e-7, plenty for p-values).
fn normal_sf(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let ans = t
        * (-z * z - 1.26551223
            + t * (1.00002368
                + t * (0.37409196
                    + t * (0.09678418
                        + t * (-0.18628806
                            + t * (0.27886807
                                + t * (-1.13520398
                                    + t * (1.48851587
                                        + t * (-0.82215223 + t * 0.17087277)))))))))
        .exp();
    if x >= 0.0 {
        ans
    } else {
        2.0 - ans
    }
}
