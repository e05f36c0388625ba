//! Indexed triple store with O(log d) membership and slice neighbor lookups.

use std::collections::HashMap;

use super::{Direction, EntityId, KgError, RelationId, Triple};

const NO_NEIGHBORS: &[EntityId] = &[];

/// An immutable multi-relational graph over dense entity/relation ids.
///
/// Two adjacency indexes are kept — (subject, relation) -> objects and
/// (object, relation) -> subjects — plus a per-subject edge list used for
/// uniform edge sampling and deterministic iteration. Neighbor lists are
/// sorted and deduplicated.
#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    entity_count: usize,
    relation_count: usize,
    fwd: HashMap<(EntityId, RelationId), Vec<EntityId>>,
    bwd: HashMap<(EntityId, RelationId), Vec<EntityId>>,
    out_by_entity: Vec<Vec<(RelationId, EntityId)>>,
    edge_count: usize,
    augmented: bool,
}

impl KnowledgeGraph {
    /// Builds a graph from triples. Duplicates are silently dropped; ids
    /// outside the declared ranges are an error.
    pub fn from_triples(
        entity_count: usize,
        relation_count: usize,
        triples: impl IntoIterator<Item = Triple>,
    ) -> Result<Self, KgError> {
        Self::build(entity_count, relation_count, triples, false)
    }

    fn build(
        entity_count: usize,
        relation_count: usize,
        triples: impl IntoIterator<Item = Triple>,
        augmented: bool,
    ) -> Result<Self, KgError> {
        let mut out_by_entity = vec![Vec::new(); entity_count];
        for t in triples {
            if t.subject.index() >= entity_count || t.object.index() >= entity_count {
                return Err(KgError::IdOutOfRange(format!(
                    "entity in ({}, {}, {}) exceeds entity count {}",
                    t.subject, t.relation, t.object, entity_count
                )));
            }
            if t.relation.index() >= relation_count {
                return Err(KgError::IdOutOfRange(format!(
                    "relation in ({}, {}, {}) exceeds relation count {}",
                    t.subject, t.relation, t.object, relation_count
                )));
            }
            out_by_entity[t.subject.index()].push((t.relation, t.object));
        }
        let mut edge_count = 0;
        let mut fwd: HashMap<(EntityId, RelationId), Vec<EntityId>> = HashMap::new();
        let mut bwd: HashMap<(EntityId, RelationId), Vec<EntityId>> = HashMap::new();
        for (s, edges) in out_by_entity.iter_mut().enumerate() {
            edges.sort_unstable();
            edges.dedup();
            edge_count += edges.len();
            let s = EntityId(s as u32);
            for &(r, o) in edges.iter() {
                fwd.entry((s, r)).or_default().push(o);
                bwd.entry((o, r)).or_default().push(s);
            }
        }
        // fwd lists are already sorted via the per-subject sort; bwd needs its own.
        for subs in bwd.values_mut() {
            subs.sort_unstable();
        }
        Ok(KnowledgeGraph {
            entity_count,
            relation_count,
            fwd,
            bwd,
            out_by_entity,
            edge_count,
            augmented,
        })
    }

    pub fn entity_count(&self) -> usize {
        self.entity_count
    }

    pub fn relation_count(&self) -> usize {
        self.relation_count
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    /// True once inverse relations have been materialized.
    pub fn augmented(&self) -> bool {
        self.augmented
    }

    /// Sorted neighbor slice of `e` under `r`: objects when looking forward,
    /// subjects when looking backward. Unknown keys yield an empty slice.
    pub fn neighbors(&self, e: EntityId, r: RelationId, dir: Direction) -> &[EntityId] {
        let index = match dir {
            Direction::Forward => &self.fwd,
            Direction::Backward => &self.bwd,
        };
        index.get(&(e, r)).map(Vec::as_slice).unwrap_or(NO_NEIGHBORS)
    }

    pub fn contains(&self, s: EntityId, r: RelationId, o: EntityId) -> bool {
        self.fwd
            .get(&(s, r))
            .map(|objs| objs.binary_search(&o).is_ok())
            .unwrap_or(false)
    }

    /// Outgoing (relation, object) pairs of `e`, sorted; supports uniform
    /// sampling of incident edges.
    pub fn out_edges(&self, e: EntityId) -> &[(RelationId, EntityId)] {
        &self.out_by_entity[e.index()]
    }

    /// All triples in (subject, relation, object) order.
    pub fn triples(&self) -> impl Iterator<Item = Triple> + '_ {
        self.out_by_entity.iter().enumerate().flat_map(|(s, edges)| {
            edges
                .iter()
                .map(move |&(r, o)| Triple::new(EntityId(s as u32), r, o))
        })
    }

    /// Triples under even (forward) relations of an augmented graph, with
    /// relation ids mapped back to the pre-augmentation numbering.
    pub fn forward_triples(&self) -> impl Iterator<Item = Triple> + '_ {
        let augmented = self.augmented;
        self.triples().filter_map(move |t| {
            if !augmented {
                Some(t)
            } else if t.relation.is_forward() {
                Some(Triple::new(t.subject, RelationId(t.relation.0 / 2), t.object))
            } else {
                None
            }
        })
    }

    /// Materializes inverse edges: forward relation k becomes 2k and gains a
    /// mirror relation 2k+1 holding every edge reversed. Every backward
    /// traversal is then expressible as a forward lookup. Augmenting twice is
    /// an error, since it would silently double the relation space again.
    pub fn augment_with_inverses(&self) -> Result<KnowledgeGraph, KgError> {
        if self.augmented {
            return Err(KgError::AlreadyAugmented);
        }
        let doubled = self.triples().flat_map(|t| {
            [
                Triple::new(t.subject, RelationId(t.relation.0 * 2), t.object),
                Triple::new(t.object, RelationId(t.relation.0 * 2 + 1), t.subject),
            ]
        });
        // Collect before rebuilding: `build` consumes an iterator over self.
        let doubled: Vec<Triple> = doubled.collect();
        Self::build(self.entity_count, self.relation_count * 2, doubled, true)
    }

    /// Deduplicated union of graphs sharing one id space.
    pub fn union(parts: &[&KnowledgeGraph]) -> Result<KnowledgeGraph, KgError> {
        let first = parts
            .first()
            .ok_or_else(|| KgError::EmptyInput("union of zero graphs".into()))?;
        for g in parts {
            if g.entity_count != first.entity_count
                || g.relation_count != first.relation_count
                || g.augmented != first.augmented
            {
                return Err(KgError::Incompatible(
                    "union requires identical entity/relation spaces".into(),
                ));
            }
        }
        let all = parts.iter().flat_map(|g| g.triples()).collect::<Vec<_>>();
        Self::build(first.entity_count, first.relation_count, all, first.augmented)
    }
}
