//! JSON-lines exchange format for queries and their answer sets.
//!
//! One record per line:
//!
//! ```json
//! {"type": "2p",
//!  "atoms": [{"s": {"anchor": 5}, "r": 0, "o": {"var": 0}},
//!            {"s": {"var": 0}, "r": 3, "o": "target", "neg": false}],
//!  "answers": {"easy": [1, 4], "hard": [9]}}
//! ```
//!
//! Node references are `{"anchor": id}`, `{"var": k}` or the string
//! `"target"`; a missing `"neg"` flag means not negated. Parsing is strict:
//! unknown type tags, unknown fields and atoms that deviate from the type's
//! canonical template are rejected with the offending path.

use serde_json::{json, Map, Value};

use crate::kg::{EntityId, RelationId};
use crate::query::{Atom, Node, Query, QueryError, QueryType};

/// A query plus its answer sets, as carried by benchmark files. `easy`
/// holds known answers that are excluded from ranking at evaluation time;
/// `hard` holds the answers being evaluated. Both are kept sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryRecord {
    pub query: Query,
    pub easy: Vec<EntityId>,
    pub hard: Vec<EntityId>,
}

impl QueryRecord {
    pub fn new(query: Query, mut easy: Vec<EntityId>, mut hard: Vec<EntityId>) -> Self {
        easy.sort_unstable();
        easy.dedup();
        hard.sort_unstable();
        hard.dedup();
        QueryRecord { query, easy, hard }
    }

    /// Checks every id against a graph's entity/relation space.
    pub fn validate_ids(&self, entity_count: usize, relation_count: usize) -> Result<(), QueryError> {
        let bad_entity = |e: EntityId| e.index() >= entity_count;
        for (i, atom) in self.query.atoms().iter().enumerate() {
            if atom.relation.index() >= relation_count {
                return Err(schema(format!("atoms[{i}].r"), format!(
                    "relation {} out of range (relation count {relation_count})",
                    atom.relation
                )));
            }
            for (label, node) in [("s", atom.subject), ("o", atom.object)] {
                if let Node::Anchor(e) = node {
                    if bad_entity(e) {
                        return Err(schema(
                            format!("atoms[{i}].{label}"),
                            format!("entity {e} out of range (entity count {entity_count})"),
                        ));
                    }
                }
            }
        }
        for (name, set) in [("easy", &self.easy), ("hard", &self.hard)] {
            if let Some(e) = set.iter().find(|&&e| bad_entity(e)) {
                return Err(schema(
                    format!("answers.{name}"),
                    format!("entity {e} out of range (entity count {entity_count})"),
                ));
            }
        }
        Ok(())
    }
}

fn schema(path: impl Into<String>, msg: impl Into<String>) -> QueryError {
    QueryError::Schema { path: path.into(), msg: msg.into() }
}

fn node_to_value(node: Node) -> Value {
    match node {
        Node::Anchor(e) => json!({ "anchor": e.0 }),
        Node::Var(k) => json!({ "var": k }),
        Node::Target => Value::String("target".to_owned()),
    }
}

/// Renders one record as a single JSON line (no trailing newline).
pub fn serialize_query(record: &QueryRecord) -> String {
    let atoms: Vec<Value> = record
        .query
        .atoms()
        .iter()
        .map(|a| {
            let mut m = Map::new();
            m.insert("s".into(), node_to_value(a.subject));
            m.insert("r".into(), json!(a.relation.0));
            m.insert("o".into(), node_to_value(a.object));
            if a.negated {
                m.insert("neg".into(), json!(true));
            }
            Value::Object(m)
        })
        .collect();
    let easy: Vec<u32> = record.easy.iter().map(|e| e.0).collect();
    let hard: Vec<u32> = record.hard.iter().map(|e| e.0).collect();
    json!({
        "type": record.query.query_type().tag(),
        "atoms": atoms,
        "answers": { "easy": easy, "hard": hard },
    })
    .to_string()
}

fn expect_object<'v>(
    value: &'v Value,
    path: &str,
    allowed: &[&str],
) -> Result<&'v Map<String, Value>, QueryError> {
    let map = value
        .as_object()
        .ok_or_else(|| schema(path, "expected an object"))?;
    for key in map.keys() {
        if !allowed.contains(&key.as_str()) {
            return Err(schema(format!("{path}.{key}"), "unknown field"));
        }
    }
    Ok(map)
}

fn expect_u32(value: &Value, path: &str) -> Result<u32, QueryError> {
    value
        .as_u64()
        .and_then(|v| u32::try_from(v).ok())
        .ok_or_else(|| schema(path, "expected a non-negative 32-bit integer"))
}

fn parse_node(value: &Value, path: &str) -> Result<Node, QueryError> {
    match value {
        Value::String(s) if s == "target" => Ok(Node::Target),
        Value::String(s) => Err(schema(path, format!("unknown node string {s:?}"))),
        Value::Object(map) => {
            if map.len() != 1 {
                return Err(schema(path, "node object must have exactly one key"));
            }
            let (key, val) = map.iter().next().expect("len checked");
            match key.as_str() {
                "anchor" => Ok(Node::Anchor(EntityId(expect_u32(val, path)?))),
                "var" => Ok(Node::Var(expect_u32(val, path)? as usize)),
                other => Err(schema(path, format!("unknown node key {other:?}"))),
            }
        }
        _ => Err(schema(path, "expected \"target\", {\"anchor\": id} or {\"var\": k}")),
    }
}

fn parse_entity_list(value: &Value, path: &str) -> Result<Vec<EntityId>, QueryError> {
    let arr = value
        .as_array()
        .ok_or_else(|| schema(path, "expected an array of entity ids"))?;
    arr.iter()
        .enumerate()
        .map(|(i, v)| Ok(EntityId(expect_u32(v, &format!("{path}[{i}]"))?)))
        .collect()
}

/// Parses one JSON line. Atoms must match the type's canonical template;
/// anything else is a schema error naming the offending path.
pub fn parse_query(line: &str) -> Result<QueryRecord, QueryError> {
    let value: Value = serde_json::from_str(line)
        .map_err(|e| schema("$", format!("invalid JSON: {e}")))?;
    let map = expect_object(&value, "$", &["type", "atoms", "answers"])?;

    let tag = map
        .get("type")
        .ok_or_else(|| schema("$.type", "missing"))?
        .as_str()
        .ok_or_else(|| schema("$.type", "expected a string"))?;
    let query_type =
        QueryType::from_tag(tag).ok_or_else(|| QueryError::UnknownType(tag.to_owned()))?;

    let atoms_value = map.get("atoms").ok_or_else(|| schema("$.atoms", "missing"))?;
    let atoms_arr = atoms_value
        .as_array()
        .ok_or_else(|| schema("$.atoms", "expected an array"))?;
    if atoms_arr.len() != query_type.atom_count() {
        return Err(schema(
            "$.atoms",
            format!("type {tag} has {} atoms, found {}", query_type.atom_count(), atoms_arr.len()),
        ));
    }
    let mut atoms = Vec::with_capacity(atoms_arr.len());
    for (i, av) in atoms_arr.iter().enumerate() {
        let path = format!("$.atoms[{i}]");
        let am = expect_object(av, &path, &["s", "r", "o", "neg"])?;
        let s = parse_node(am.get("s").ok_or_else(|| schema(format!("{path}.s"), "missing"))?, &format!("{path}.s"))?;
        let o = parse_node(am.get("o").ok_or_else(|| schema(format!("{path}.o"), "missing"))?, &format!("{path}.o"))?;
        let r = expect_u32(
            am.get("r").ok_or_else(|| schema(format!("{path}.r"), "missing"))?,
            &format!("{path}.r"),
        )?;
        let negated = match am.get("neg") {
            None => false,
            Some(v) => v
                .as_bool()
                .ok_or_else(|| schema(format!("{path}.neg"), "expected a boolean"))?,
        };
        atoms.push(Atom { subject: s, relation: RelationId(r), object: o, negated });
    }

    // Rebuild from the template and require structural equality, so every
    // accepted record is in canonical form.
    let mut anchors = vec![None; query_type.anchor_count()];
    {
        let template = query_type.template_for_validation();
        for (i, (tpl, atom)) in template.iter().zip(&atoms).enumerate() {
            for (slot, node) in [(tpl.0, atom.subject), (tpl.1, atom.object)] {
                if let super::Slot::Anchor(k) = slot {
                    match node {
                        Node::Anchor(e) => {
                            if let Some(prev) = anchors[k] {
                                if prev != e {
                                    // Same slot bound twice with different entities
                                    // cannot happen in any current template, but
                                    // guard for future shapes.
                                    return Err(schema(
                                        format!("$.atoms[{i}]"),
                                        "conflicting anchor binding",
                                    ));
                                }
                            }
                            anchors[k] = Some(e);
                        }
                        _ => {
                            return Err(schema(
                                format!("$.atoms[{i}]"),
                                format!("expected an anchor in slot {k} for type {tag}"),
                            ))
                        }
                    }
                }
            }
        }
    }
    let anchors: Vec<EntityId> = anchors
        .into_iter()
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| schema("$.atoms", format!("anchors of type {tag} not all bound")))?;
    let relations: Vec<RelationId> = atoms.iter().map(|a| a.relation).collect();
    let rebuilt = Query::instantiate(query_type, &anchors, &relations)?;
    if rebuilt.atoms() != atoms.as_slice() {
        let bad = rebuilt
            .atoms()
            .iter()
            .zip(&atoms)
            .position(|(a, b)| a != b)
            .unwrap_or(0);
        return Err(schema(
            format!("$.atoms[{bad}]"),
            format!("atom does not follow the canonical {tag} template"),
        ));
    }

    let (easy, hard) = match map.get("answers") {
        None => (Vec::new(), Vec::new()),
        Some(av) => {
            let am = expect_object(av, "$.answers", &["easy", "hard"])?;
            let easy = match am.get("easy") {
                None => Vec::new(),
                Some(v) => parse_entity_list(v, "$.answers.easy")?,
            };
            let hard = match am.get("hard") {
                None => Vec::new(),
                Some(v) => parse_entity_list(v, "$.answers.hard")?,
            };
            (easy, hard)
        }
    };
    Ok(QueryRecord::new(rebuilt, easy, hard))
}
