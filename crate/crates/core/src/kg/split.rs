//! Train/valid/test splits and timestamp-ordered splitting.

use std::collections::HashMap;

use chrono::NaiveDateTime;

use super::{EntityId, KgError, KnowledgeGraph, RelationId, SymbolTable, Triple};

/// Which split a triple belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitPart {
    Train,
    Valid,
    Test,
}

/// A triple observed at a point in time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimedTriple {
    pub triple: Triple,
    pub timestamp: NaiveDateTime,
}

/// A knowledge graph partitioned into train/valid/test, with the union
/// ("full") graph materialized and the name tables that produced the ids.
#[derive(Debug, Clone)]
pub struct KnowledgeGraphSplit {
    pub train: KnowledgeGraph,
    pub valid: KnowledgeGraph,
    pub test: KnowledgeGraph,
    pub full: KnowledgeGraph,
    pub entities: SymbolTable,
    pub relations: SymbolTable,
}

impl KnowledgeGraphSplit {
    /// Assembles a split, checking that the three parts are pairwise
    /// disjoint. The full graph is their union.
    pub fn new(
        entities: SymbolTable,
        relations: SymbolTable,
        train: Vec<Triple>,
        valid: Vec<Triple>,
        test: Vec<Triple>,
    ) -> Result<Self, KgError> {
        let ne = entities.len();
        let nr = relations.len();
        let train = KnowledgeGraph::from_triples(ne, nr, train)?;
        let valid = KnowledgeGraph::from_triples(ne, nr, valid)?;
        let test = KnowledgeGraph::from_triples(ne, nr, test)?;
        for t in valid.triples() {
            if train.contains(t.subject, t.relation, t.object) {
                return Err(KgError::OverlappingSplits(describe(&t, &entities, &relations)));
            }
        }
        for t in test.triples() {
            if train.contains(t.subject, t.relation, t.object)
                || valid.contains(t.subject, t.relation, t.object)
            {
                return Err(KgError::OverlappingSplits(describe(&t, &entities, &relations)));
            }
        }
        let full = KnowledgeGraph::union(&[&train, &valid, &test])?;
        Ok(KnowledgeGraphSplit { train, valid, test, full, entities, relations })
    }

    /// Materializes inverse relations in all four graphs and extends the
    /// relation name table: base name at id 2k, `name^-1` at 2k+1.
    pub fn augment_with_inverses(self) -> Result<Self, KgError> {
        let mut relations = SymbolTable::new();
        for (_, name) in self.relations.iter() {
            relations.insert_new(name)?;
            relations.insert_new(&format!("{name}^-1"))?;
        }
        Ok(KnowledgeGraphSplit {
            train: self.train.augment_with_inverses()?,
            valid: self.valid.augment_with_inverses()?,
            test: self.test.augment_with_inverses()?,
            full: self.full.augment_with_inverses()?,
            entities: self.entities,
            relations,
        })
    }

    /// Locates an edge: `None` means it exists in no split.
    pub fn locate(&self, s: EntityId, r: RelationId, o: EntityId) -> Option<SplitPart> {
        if self.train.contains(s, r, o) {
            Some(SplitPart::Train)
        } else if self.valid.contains(s, r, o) {
            Some(SplitPart::Valid)
        } else if self.test.contains(s, r, o) {
            Some(SplitPart::Test)
        } else {
            None
        }
    }
}

fn describe(t: &Triple, entities: &SymbolTable, relations: &SymbolTable) -> String {
    format!(
        "({}, {}, {})",
        entities.name(t.subject.0).unwrap_or("?"),
        relations.name(t.relation.0).unwrap_or("?"),
        entities.name(t.object.0).unwrap_or("?"),
    )
}

/// Splits timestamped triples chronologically into train/valid/test.
///
/// Repeated facts are deduplicated keeping the earliest observation; the
/// retained records are then stably ordered by (timestamp, input position)
/// and cut at `floor(r_train * n)` and `floor(r_valid * n)`. Timestamps are
/// discarded afterwards.
pub fn temporal_split(
    triples: &[TimedTriple],
    ratios: (f64, f64, f64),
) -> Result<(Vec<Triple>, Vec<Triple>, Vec<Triple>), KgError> {
    let (rt, rv, rs) = ratios;
    for r in [rt, rv, rs] {
        if !(0.0..=1.0).contains(&r) || !r.is_finite() {
            return Err(KgError::BadRatios(format!("ratio {r} outside [0, 1]")));
        }
    }
    if (rt + rv + rs - 1.0).abs() > 1e-9 {
        return Err(KgError::BadRatios(format!("ratios sum to {}, expected 1", rt + rv + rs)));
    }
    if triples.is_empty() {
        return Err(KgError::EmptyInput("no timestamped triples".into()));
    }

    // fact -> (earliest timestamp, input position of that observation)
    let mut earliest: HashMap<Triple, (NaiveDateTime, usize)> = HashMap::new();
    for (pos, tt) in triples.iter().enumerate() {
        let key = (tt.timestamp, pos);
        earliest
            .entry(tt.triple)
            .and_modify(|best| {
                if key < *best {
                    *best = key;
                }
            })
            .or_insert(key);
    }
    let mut ordered: Vec<(NaiveDateTime, usize, Triple)> =
        earliest.into_iter().map(|(t, (ts, pos))| (ts, pos, t)).collect();
    ordered.sort_unstable_by_key(|&(ts, pos, _)| (ts, pos));

    let n = ordered.len();
    let n_train = (rt * n as f64).floor() as usize;
    let n_valid = (rv * n as f64).floor() as usize;
    let mut it = ordered.into_iter().map(|(_, _, t)| t);
    let train: Vec<Triple> = it.by_ref().take(n_train).collect();
    let valid: Vec<Triple> = it.by_ref().take(n_valid).collect();
    let test: Vec<Triple> = it.collect();
    Ok((train, valid, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn t(s: u32, r: u32, o: u32) -> Triple {
        Triple::new(EntityId(s), RelationId(r), EntityId(o))
    }

    fn day(d: u32) -> NaiveDateTime {
        NaiveDate::from_ymd_opt(2018, 1, d).unwrap().and_hms_opt(0, 0, 0).unwrap()
    }

    fn tables(ne: u32, nr: u32) -> (SymbolTable, SymbolTable) {
        let mut ents = SymbolTable::new();
        for i in 0..ne {
            ents.intern(&format!("e{i}"));
        }
        let mut rels = SymbolTable::new();
        for i in 0..nr {
            rels.intern(&format!("r{i}"));
        }
        (ents, rels)
    }

    #[test]
    fn split_rejects_overlap() {
        let (e, r) = tables(3, 1);
        let err = KnowledgeGraphSplit::new(e, r, vec![t(0, 0, 1)], vec![t(0, 0, 1)], vec![]);
        assert!(matches!(err, Err(KgError::OverlappingSplits(_))));
    }

    #[test]
    fn full_graph_is_the_union() {
        let (e, r) = tables(4, 1);
        let s =
            KnowledgeGraphSplit::new(e, r, vec![t(0, 0, 1)], vec![t(1, 0, 2)], vec![t(2, 0, 3)])
                .unwrap();
        assert_eq!(s.full.edge_count(), 3);
        assert_eq!(s.locate(EntityId(0), RelationId(0), EntityId(1)), Some(SplitPart::Train));
        assert_eq!(s.locate(EntityId(2), RelationId(0), EntityId(3)), Some(SplitPart::Test));
        assert_eq!(s.locate(EntityId(3), RelationId(0), EntityId(0)), None);
    }

    #[test]
    fn augmenting_split_extends_name_table_in_pairs() {
        let (e, r) = tables(3, 2);
        let s = KnowledgeGraphSplit::new(e, r, vec![t(0, 1, 2)], vec![], vec![]).unwrap();
        let s = s.augment_with_inverses().unwrap();
        assert_eq!(s.relations.len(), 4);
        assert_eq!(s.relations.name(2), Some("r1"));
        assert_eq!(s.relations.name(3), Some("r1^-1"));
        assert!(s.train.contains(EntityId(2), RelationId(3), EntityId(0)));
    }

    #[test]
    fn temporal_split_orders_by_time_and_keeps_earliest_duplicate() {
        // Same fact at day 3 and day 7: counted once, placed by day 3.
        let triples = vec![
            TimedTriple { triple: t(0, 0, 1), timestamp: day(7) },
            TimedTriple { triple: t(1, 0, 2), timestamp: day(1) },
            TimedTriple { triple: t(0, 0, 1), timestamp: day(3) },
            TimedTriple { triple: t(2, 0, 3), timestamp: day(5) },
            TimedTriple { triple: t(3, 0, 0), timestamp: day(9) },
        ];
        let (train, valid, test) = temporal_split(&triples, (0.5, 0.25, 0.25)).unwrap();
        // 4 unique facts: floor(2.0)=2 train, floor(1.0)=1 valid, rest test.
        assert_eq!(train, vec![t(1, 0, 2), t(0, 0, 1)]);
        assert_eq!(valid, vec![t(2, 0, 3)]);
        assert_eq!(test, vec![t(3, 0, 0)]);
    }

    #[test]
    fn temporal_split_breaks_timestamp_ties_by_input_order() {
        let triples = vec![
            TimedTriple { triple: t(1, 0, 2), timestamp: day(1) },
            TimedTriple { triple: t(0, 0, 1), timestamp: day(1) },
            TimedTriple { triple: t(2, 0, 3), timestamp: day(1) },
            TimedTriple { triple: t(3, 0, 0), timestamp: day(1) },
        ];
        let (train, valid, test) = temporal_split(&triples, (0.5, 0.25, 0.25)).unwrap();
        assert_eq!(train, vec![t(1, 0, 2), t(0, 0, 1)]);
        assert_eq!(valid, vec![t(2, 0, 3)]);
        assert_eq!(test, vec![t(3, 0, 0)]);
    }

    #[test]
    fn temporal_split_validates_ratios_and_input() {
        let triples = vec![TimedTriple { triple: t(0, 0, 1), timestamp: day(1) }];
        assert!(matches!(
            temporal_split(&triples, (0.8, 0.3, 0.1)),
            Err(KgError::BadRatios(_))
        ));
        assert!(matches!(
            temporal_split(&[], (0.8, 0.1, 0.1)),
            Err(KgError::EmptyInput(_))
        ));
    }
}
