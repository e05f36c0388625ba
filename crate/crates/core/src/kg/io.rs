//! Tab-separated triple files, dictionary files and split directories.
//!
//! On-disk layout of a split directory:
//!
//! ```text
//! train.txt / valid.txt / test.txt   subject<TAB>relation<TAB>object
//! entities.dict / relations.dict     id<TAB>name, dense from 0
//! ```
//!
//! Timestamped files carry a fourth ISO-8601 column. Dictionary files are
//! optional on load (names are interned in first-seen order without them)
//! but always written on save so id assignments survive round trips.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{NaiveDate, NaiveDateTime};

use super::{
    EntityId, KgError, KnowledgeGraph, KnowledgeGraphSplit, RelationId, SymbolTable, TimedTriple,
    Triple,
};

fn parse_err(path: &str, line: usize, msg: impl Into<String>) -> KgError {
    KgError::Parse { path: path.to_owned(), line, msg: msg.into() }
}

fn split_fields<'a>(
    raw: &'a str,
    expected: usize,
    path: &str,
    line: usize,
) -> Result<Vec<&'a str>, KgError> {
    let fields: Vec<&str> = raw.split('\t').collect();
    if fields.len() != expected {
        return Err(parse_err(
            path,
            line,
            format!("expected {expected} tab-separated fields, found {}", fields.len()),
        ));
    }
    Ok(fields)
}

fn parse_timestamp(raw: &str, path: &str, line: usize) -> Result<NaiveDateTime, KgError> {
    if let Ok(dt) = NaiveDateTime::from_str(raw) {
        return Ok(dt);
    }
    if let Ok(d) = NaiveDate::from_str(raw) {
        return Ok(d.and_hms_opt(0, 0, 0).expect("midnight is valid"));
    }
    Err(parse_err(path, line, format!("unparseable ISO-8601 timestamp {raw:?}")))
}

/// Parses `subject<TAB>relation<TAB>object` lines, interning names.
pub fn parse_plain_triples(
    reader: impl BufRead,
    path: &str,
    entities: &mut SymbolTable,
    relations: &mut SymbolTable,
) -> Result<Vec<Triple>, KgError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let raw = line.trim_end_matches('\r');
        if raw.is_empty() {
            continue;
        }
        let f = split_fields(raw, 3, path, i + 1)?;
        out.push(Triple::new(
            EntityId(entities.intern(f[0])),
            RelationId(relations.intern(f[1])),
            EntityId(entities.intern(f[2])),
        ));
    }
    Ok(out)
}

/// Parses `subject<TAB>relation<TAB>object<TAB>timestamp` lines.
pub fn parse_timed_triples(
    reader: impl BufRead,
    path: &str,
    entities: &mut SymbolTable,
    relations: &mut SymbolTable,
) -> Result<Vec<TimedTriple>, KgError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let raw = line.trim_end_matches('\r');
        if raw.is_empty() {
            continue;
        }
        let f = split_fields(raw, 4, path, i + 1)?;
        out.push(TimedTriple {
            triple: Triple::new(
                EntityId(entities.intern(f[0])),
                RelationId(relations.intern(f[1])),
                EntityId(entities.intern(f[2])),
            ),
            timestamp: parse_timestamp(f[3], path, i + 1)?,
        });
    }
    Ok(out)
}

pub fn load_plain_triples(
    path: &Path,
    entities: &mut SymbolTable,
    relations: &mut SymbolTable,
) -> Result<Vec<Triple>, KgError> {
    let reader = BufReader::new(File::open(path)?);
    parse_plain_triples(reader, &path.display().to_string(), entities, relations)
}

pub fn load_timed_triples(
    path: &Path,
    entities: &mut SymbolTable,
    relations: &mut SymbolTable,
) -> Result<Vec<TimedTriple>, KgError> {
    let reader = BufReader::new(File::open(path)?);
    parse_timed_triples(reader, &path.display().to_string(), entities, relations)
}

/// Reads an `id<TAB>name` dictionary; ids must be dense from 0.
pub fn read_dict(reader: impl BufRead, path: &str) -> Result<SymbolTable, KgError> {
    let mut rows: Vec<(u32, String)> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let raw = line.trim_end_matches('\r');
        if raw.is_empty() {
            continue;
        }
        let f = split_fields(raw, 2, path, i + 1)?;
        let id: u32 = f[0]
            .parse()
            .map_err(|_| parse_err(path, i + 1, format!("bad id {:?}", f[0])))?;
        rows.push((id, f[1].to_owned()));
    }
    rows.sort_by_key(|&(id, _)| id);
    let mut table = SymbolTable::new();
    for (expect, (id, name)) in rows.into_iter().enumerate() {
        if id as usize != expect {
            return Err(parse_err(path, 0, format!("ids are not dense: expected {expect}, found {id}")));
        }
        table.insert_new(&name)?;
    }
    Ok(table)
}

pub fn write_dict(writer: &mut impl Write, table: &SymbolTable) -> Result<(), KgError> {
    for (id, name) in table.iter() {
        writeln!(writer, "{id}\t{name}")?;
    }
    Ok(())
}

/// Writes the graph's forward triples as `subject<TAB>relation<TAB>object`.
/// On an augmented graph only the even relations are written, under their
/// base names.
pub fn write_triples(
    writer: &mut impl Write,
    graph: &KnowledgeGraph,
    entities: &SymbolTable,
    relations: &SymbolTable,
) -> Result<(), KgError> {
    let augmented = graph.augmented();
    for t in graph.forward_triples() {
        let rel_id = if augmented { t.relation.0 * 2 } else { t.relation.0 };
        let s = entities
            .name(t.subject.0)
            .ok_or_else(|| KgError::IdOutOfRange(format!("entity {}", t.subject)))?;
        let r = relations
            .name(rel_id)
            .ok_or_else(|| KgError::IdOutOfRange(format!("relation {rel_id}")))?;
        let o = entities
            .name(t.object.0)
            .ok_or_else(|| KgError::IdOutOfRange(format!("entity {}", t.object)))?;
        writeln!(writer, "{s}\t{r}\t{o}")?;
    }
    Ok(())
}

fn load_part(
    dir: &Path,
    file: &str,
    entities: &mut SymbolTable,
    relations: &mut SymbolTable,
    pinned: bool,
) -> Result<Vec<Triple>, KgError> {
    let path = dir.join(file);
    let before_e = entities.len();
    let before_r = relations.len();
    let triples = load_plain_triples(&path, entities, relations)?;
    if pinned && (entities.len() != before_e || relations.len() != before_r) {
        return Err(parse_err(
            &path.display().to_string(),
            0,
            "names not present in the dictionary files",
        ));
    }
    Ok(triples)
}

/// Loads `train.txt`/`valid.txt`/`test.txt` (+ optional dictionaries) from a
/// directory. With dictionaries present, every name must resolve; without
/// them ids follow first-seen order across train, then valid, then test.
pub fn load_split_dir(dir: &Path) -> Result<KnowledgeGraphSplit, KgError> {
    let ent_dict = dir.join("entities.dict");
    let rel_dict = dir.join("relations.dict");
    let pinned = ent_dict.exists() && rel_dict.exists();
    let (mut entities, mut relations) = if pinned {
        (
            read_dict(BufReader::new(File::open(&ent_dict)?), &ent_dict.display().to_string())?,
            read_dict(BufReader::new(File::open(&rel_dict)?), &rel_dict.display().to_string())?,
        )
    } else {
        (SymbolTable::new(), SymbolTable::new())
    };
    let train = load_part(dir, "train.txt", &mut entities, &mut relations, pinned)?;
    let valid = load_part(dir, "valid.txt", &mut entities, &mut relations, pinned)?;
    let test = load_part(dir, "test.txt", &mut entities, &mut relations, pinned)?;
    KnowledgeGraphSplit::new(entities, relations, train, valid, test)
}

/// Writes a split directory (triples plus both dictionaries). Augmented
/// splits are written forward-only so a save/load round trip recovers the
/// same forward graph.
pub fn save_split_dir(dir: &Path, split: &KnowledgeGraphSplit) -> Result<(), KgError> {
    std::fs::create_dir_all(dir)?;
    let parts: [(&str, &KnowledgeGraph); 3] =
        [("train.txt", &split.train), ("valid.txt", &split.valid), ("test.txt", &split.test)];
    for (name, graph) in parts {
        let mut w = BufWriter::new(File::create(dir.join(name))?);
        write_triples(&mut w, graph, &split.entities, &split.relations)?;
        w.flush()?;
    }
    let mut w = BufWriter::new(File::create(dir.join("entities.dict"))?);
    write_dict(&mut w, &split.entities)?;
    w.flush()?;
    let mut w = BufWriter::new(File::create(dir.join("relations.dict"))?);
    if split.train.augmented() {
        // Persist base names only; augmentation is an in-memory construct.
        let mut base = SymbolTable::new();
        for (id, name) in split.relations.iter() {
            if id % 2 == 0 {
                base.insert_new(name)?;
            }
        }
        write_dict(&mut w, &base)?;
    } else {
        write_dict(&mut w, &split.relations)?;
    }
    w.flush()?;
    Ok(())
}
