//! Immutable nested-document index.
//!
//! Slots follow the block-join layout: each patient's children occupy a
//! contiguous run of slots (grouped by [`ChildKind`], ordered by day) followed
//! by the patient's own slot. Column data is stored per level: patient-level
//! columns are indexed by patient ordinal, child-level columns by the child's
//! row inside its kind table. Rows of a kind ascend with slot number, so sorted
//! row postings are also sorted slot postings.

mod schema;
mod snapshot;

use std::collections::{BTreeMap, HashMap};
use std::ops::Range;

use thiserror::Error;

pub use schema::{ChildKind, ChildRef, FacetBlock, FieldSchema, Level, Schema, ValueKind};
pub(crate) use schema::{child_at, child_value, patient_value, Value};
pub use snapshot::{decode_snapshot, encode_snapshot, read_snapshot, write_snapshot, SnapshotError, SNAPSHOT_MAGIC, SNAPSHOT_VERSION};

use crate::datamodel::{normalize_term, Day, EndpointKind, PatientRecord};
use crate::text::tokenize;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SchemaError {
    #[error("unknown field {0:?}")]
    UnknownField(String),
    #[error("unknown child kind {0:?}")]
    UnknownKind(String),
    #[error("field {0:?} is not facetable")]
    NotFacetable(String),
    #[error("field {field:?} is not a {expected} field")]
    WrongValueKind { field: String, expected: &'static str },
    #[error("field {field:?} does not belong to child kind {kind}")]
    WrongLevel { field: String, kind: ChildKind },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IndexError {
    #[error("duplicate patient_id {0:?}")]
    DuplicatePatient(String),
    #[error("empty patient_id at position {0}")]
    EmptyPatientId(usize),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub(crate) struct KindTable {
    pub parent: Vec<u32>,
    pub slot: Vec<u32>,
    pub day: Vec<Option<Day>>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct KeywordColumn {
    /// Distinct raw values, ordered by (normalized, raw).
    pub terms: Vec<String>,
    pub normalized: Vec<String>,
    /// Term id per row.
    pub values: Vec<Option<u32>>,
    /// Sorted rows per term.
    pub postings: Vec<Vec<u32>>,
    /// Distinct parents per term over the whole index.
    pub parent_counts: Vec<u32>,
}

impl KeywordColumn {
    pub fn term_id(&self, term: &str) -> Option<u32> {
        let key = normalize_term(term);
        let start = self.normalized.partition_point(|n| n.as_str() < key.as_str());
        self.normalized[start..]
            .iter()
            .zip(&self.terms[start..])
            .take_while(|(n, _)| **n == key)
            .position(|(_, t)| t == term)
            .map(|i| (start + i) as u32)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Posting {
    pub row: u32,
    pub positions: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct FulltextColumn {
    pub postings: BTreeMap<String, Vec<Posting>>,
    /// Char span of every token, by row then position.
    pub spans: Vec<Vec<(u32, u32)>>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Column {
    /// Declared in the schema but not readable from records.
    Absent,
    Keyword(KeywordColumn),
    Numeric(Vec<Option<f64>>),
    Fulltext(FulltextColumn),
}

/// Per-patient child row ranges, one per [`ChildKind`].
pub(crate) type Block = [(u32, u32); 6];

#[derive(Debug, Clone, PartialEq)]
pub struct NestedIndex {
    schema: Schema,
    patient_ids: Vec<String>,
    id_lookup: HashMap<String, u32>,
    parent_slots: Vec<u32>,
    blocks: Vec<Block>,
    tables: Vec<KindTable>,
    endpoints: Vec<(EndpointKind, u32)>,
    doc_ids: Vec<String>,
    columns: Vec<Column>,
    slot_count: usize,
}

/// A term with its unique-patient count.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct TermCount {
    pub term: String,
    pub count: u32,
}

/// Word tokens of a text body with their ordinal positions.
pub fn tokenize_fulltext(body: &str) -> Vec<(String, usize)> {
    tokenize(body)
        .into_iter()
        .enumerate()
        .map(|(i, t)| (t.text, i))
        .collect()
}

fn child_order(rec: &PatientRecord, kind: ChildKind) -> Vec<usize> {
    let n = kind.count_in(rec);
    let mut idx: Vec<usize> = (0..n).collect();
    match kind {
        ChildKind::Document => idx.sort_by(|&a, &b| {
            let (da, db) = (&rec.documents[a], &rec.documents[b]);
            (da.day, &da.doc_id).cmp(&(db.day, &db.doc_id))
        }),
        _ => idx.sort_by_key(|&i| child_at(rec, kind, i).day()),
    }
    idx
}

impl NestedIndex {
    /// Builds the index. Schema fields the index cannot read are logged and
    /// kept as empty columns.
    pub fn build(snapshot: &[PatientRecord], schema: &Schema) -> Result<Self, IndexError> {
        let mut id_lookup = HashMap::with_capacity(snapshot.len());
        for (i, rec) in snapshot.iter().enumerate() {
            if rec.patient_id.is_empty() {
                return Err(IndexError::EmptyPatientId(i));
            }
            if id_lookup.insert(rec.patient_id.clone(), i as u32).is_some() {
                return Err(IndexError::DuplicatePatient(rec.patient_id.clone()));
            }
        }

        let mut tables = vec![KindTable::default(); ChildKind::ALL.len()];
        // row → (patient ordinal, index within the record's list)
        let mut sources: Vec<Vec<(u32, u32)>> = vec![Vec::new(); ChildKind::ALL.len()];
        let mut blocks = Vec::with_capacity(snapshot.len());
        let mut parent_slots = Vec::with_capacity(snapshot.len());
        let mut endpoints = Vec::new();
        let mut doc_ids = Vec::new();
        let mut slot = 0u32;
        for (p, rec) in snapshot.iter().enumerate() {
            let mut block: Block = [(0, 0); 6];
            for kind in ChildKind::ALL {
                let table = &mut tables[kind.slot()];
                let start = table.parent.len() as u32;
                for i in child_order(rec, kind) {
                    let child = child_at(rec, kind, i);
                    table.parent.push(p as u32);
                    table.slot.push(slot);
                    table.day.push(child.day());
                    sources[kind.slot()].push((p as u32, i as u32));
                    match child {
                        ChildRef::Endpoint(e) => endpoints.push((e.kind, e.ordinal)),
                        ChildRef::Document(d) => doc_ids.push(d.doc_id.clone()),
                        _ => {}
                    }
                    slot += 1;
                }
                block[kind.slot()] = (start, table.parent.len() as u32);
            }
            blocks.push(block);
            parent_slots.push(slot);
            slot += 1;
        }

        let columns = schema
            .fields
            .iter()
            .map(|f| {
                if !schema::is_known(&f.name, f.level) {
                    log::warn!("schema field {:?} is not readable from patient records; skipped", f.name);
                    return Column::Absent;
                }
                let values: Vec<(u32, Option<Value<'_>>)> = match f.level {
                    Level::Patient => snapshot
                        .iter()
                        .enumerate()
                        .map(|(p, r)| (p as u32, patient_value(&f.name, r)))
                        .collect(),
                    Level::Child(kind) => sources[kind.slot()]
                        .iter()
                        .map(|&(p, i)| {
                            let rec = &snapshot[p as usize];
                            (p, child_value(&f.name, child_at(rec, kind, i as usize)))
                        })
                        .collect(),
                };
                build_column(f.value_kind, values)
            })
            .collect();

        Ok(NestedIndex {
            schema: schema.clone(),
            patient_ids: snapshot.iter().map(|r| r.patient_id.clone()).collect(),
            id_lookup,
            parent_slots,
            blocks,
            tables,
            endpoints,
            doc_ids,
            columns,
            slot_count: slot as usize,
        })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn patient_count(&self) -> usize {
        self.patient_ids.len()
    }

    /// Total slots: one per patient plus one per child.
    pub fn slot_count(&self) -> usize {
        self.slot_count
    }

    pub fn child_count(&self, kind: ChildKind) -> usize {
        self.tables[kind.slot()].parent.len()
    }

    pub fn patient_id(&self, ordinal: usize) -> &str {
        &self.patient_ids[ordinal]
    }

    pub fn patient_ids(&self) -> &[String] {
        &self.patient_ids
    }

    pub fn patient_ordinal(&self, id: &str) -> Option<usize> {
        self.id_lookup.get(id).map(|&p| p as usize)
    }

    pub fn parent_slot(&self, ordinal: usize) -> u32 {
        self.parent_slots[ordinal]
    }

    /// Slots of one patient's children of `kind`, in block order.
    pub fn child_slots(&self, ordinal: usize, kind: ChildKind) -> &[u32] {
        let r = self.rows(ordinal, kind);
        &self.tables[kind.slot()].slot[r]
    }

    /// Parent slot owning `slot` (itself for a parent slot).
    pub fn parent_of_slot(&self, slot: u32) -> u32 {
        let i = self.parent_slots.partition_point(|&s| s < slot);
        self.parent_slots[i]
    }

    pub(crate) fn rows(&self, ordinal: usize, kind: ChildKind) -> Range<usize> {
        let (a, b) = self.blocks[ordinal][kind.slot()];
        a as usize..b as usize
    }

    pub(crate) fn table(&self, kind: ChildKind) -> &KindTable {
        &self.tables[kind.slot()]
    }

    pub(crate) fn endpoint_meta(&self, row: usize) -> (EndpointKind, u32) {
        self.endpoints[row]
    }

    pub(crate) fn doc_id(&self, row: usize) -> &str {
        &self.doc_ids[row]
    }

    pub(crate) fn column(&self, field: &str) -> Result<(&FieldSchema, &Column), SchemaError> {
        let i = self
            .schema
            .position(field)
            .ok_or_else(|| SchemaError::UnknownField(field.to_string()))?;
        Ok((&self.schema.fields[i], &self.columns[i]))
    }

    pub(crate) fn keyword_column(&self, field: &str) -> Result<(&FieldSchema, Option<&KeywordColumn>), SchemaError> {
        let (f, c) = self.column(field)?;
        match c {
            Column::Keyword(k) => Ok((f, Some(k))),
            Column::Absent if f.value_kind == ValueKind::Keyword => Ok((f, None)),
            _ => Err(SchemaError::WrongValueKind {
                field: field.to_string(),
                expected: "keyword",
            }),
        }
    }

    #[allow(clippy::type_complexity)]
    pub(crate) fn numeric_column(&self, field: &str) -> Result<(&FieldSchema, Option<&[Option<f64>]>), SchemaError> {
        let (f, c) = self.column(field)?;
        match c {
            Column::Numeric(v) => Ok((f, Some(v.as_slice()))),
            Column::Absent if f.value_kind.is_numeric() => Ok((f, None)),
            _ => Err(SchemaError::WrongValueKind {
                field: field.to_string(),
                expected: "numeric",
            }),
        }
    }

    pub(crate) fn fulltext_column(&self, field: &str) -> Result<Option<&FulltextColumn>, SchemaError> {
        let (f, c) = self.column(field)?;
        match c {
            Column::Fulltext(t) => Ok(Some(t)),
            Column::Absent if f.value_kind == ValueKind::Fulltext => Ok(None),
            _ => Err(SchemaError::WrongValueKind {
                field: field.to_string(),
                expected: "fulltext",
            }),
        }
    }

    /// Number of distinct values indexed for a keyword field.
    pub fn term_count(&self, field: &str) -> Result<usize, SchemaError> {
        Ok(self.keyword_column(field)?.1.map_or(0, |c| c.terms.len()))
    }

    /// Sorted slots holding `term` in `field`.
    pub fn postings(&self, field: &str, term: &str) -> Result<Vec<u32>, SchemaError> {
        let (f, col) = self.keyword_column(field)?;
        let Some(col) = col else { return Ok(Vec::new()) };
        let Some(id) = col.term_id(term) else { return Ok(Vec::new()) };
        let rows = &col.postings[id as usize];
        Ok(match f.level {
            Level::Patient => rows.iter().map(|&p| self.parent_slots[p as usize]).collect(),
            Level::Child(kind) => rows.iter().map(|&r| self.tables[kind.slot()].slot[r as usize]).collect(),
        })
    }

    /// Terms of a facetable keyword field whose normalized form contains the
    /// normalized `substring`, alphabetically, with whole-index patient counts.
    pub fn term_lookup(&self, field: &str, substring: &str) -> Result<Vec<TermCount>, SchemaError> {
        let (f, col) = self.keyword_column(field)?;
        if !f.facetable {
            return Err(SchemaError::NotFacetable(field.to_string()));
        }
        let Some(col) = col else { return Ok(Vec::new()) };
        let needle = normalize_term(substring);
        Ok(col
            .terms
            .iter()
            .zip(&col.normalized)
            .zip(&col.parent_counts)
            .filter(|((_, n), _)| n.contains(&needle))
            .map(|((t, _), &c)| TermCount {
                term: t.clone(),
                count: c,
            })
            .collect())
    }
}

fn build_column(kind: ValueKind, values: Vec<(u32, Option<Value<'_>>)>) -> Column {
    match kind {
        ValueKind::Keyword => Column::Keyword(build_keyword(values)),
        ValueKind::Numeric | ValueKind::DateDay => Column::Numeric(
            values
                .into_iter()
                .map(|(_, v)| match v {
                    Some(Value::Num(x)) if !x.is_nan() => Some(x),
                    Some(Value::Str(s)) => s.trim().parse::<f64>().ok().filter(|x| !x.is_nan()),
                    _ => None,
                })
                .collect(),
        ),
        ValueKind::Fulltext => {
            let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
            let mut spans = Vec::with_capacity(values.len());
            for (row, (_, v)) in values.into_iter().enumerate() {
                let body = match v {
                    Some(Value::Str(s)) => s,
                    _ => Default::default(),
                };
                let toks = tokenize(&body);
                spans.push(toks.iter().map(|t| (t.begin as u32, t.end as u32)).collect());
                let mut per_term: BTreeMap<&str, Vec<u32>> = BTreeMap::new();
                for (pos, t) in toks.iter().enumerate() {
                    per_term.entry(&t.text).or_default().push(pos as u32);
                }
                for (term, positions) in per_term {
                    postings.entry(term.to_string()).or_default().push(Posting {
                        row: row as u32,
                        positions,
                    });
                }
            }
            Column::Fulltext(FulltextColumn { postings, spans })
        }
    }
}

fn build_keyword(values: Vec<(u32, Option<Value<'_>>)>) -> KeywordColumn {
    let as_str = |v: &Option<Value<'_>>| -> Option<String> {
        match v {
            Some(Value::Str(s)) => Some(s.to_string()),
            Some(Value::Num(x)) => Some(x.to_string()),
            None => None,
        }
    };
    let mut provisional: HashMap<String, u32> = HashMap::new();
    let mut raw_ids = Vec::with_capacity(values.len());
    for (_, v) in &values {
        raw_ids.push(as_str(v).map(|s| {
            let next = provisional.len() as u32;
            *provisional.entry(s).or_insert(next)
        }));
    }
    let mut distinct: Vec<(String, String, u32)> = provisional
        .into_iter()
        .map(|(raw, id)| (normalize_term(&raw), raw, id))
        .collect();
    distinct.sort();
    let mut remap = vec![0u32; distinct.len()];
    for (new, (_, _, old)) in distinct.iter().enumerate() {
        remap[*old as usize] = new as u32;
    }
    let mut postings = vec![Vec::new(); distinct.len()];
    let mut parent_counts = vec![0u32; distinct.len()];
    let mut last_parent = vec![u32::MAX; distinct.len()];
    let ids: Vec<Option<u32>> = raw_ids.into_iter().map(|o| o.map(|id| remap[id as usize])).collect();
    for (row, (&id, (parent, _))) in ids.iter().zip(&values).enumerate() {
        let parent = *parent;
        if let Some(id) = id {
            let id = id as usize;
            postings[id].push(row as u32);
            if last_parent[id] != parent {
                last_parent[id] = parent;
                parent_counts[id] += 1;
            }
        }
    }
    let (normalized, terms) = distinct.into_iter().map(|(n, r, _)| (n, r)).unzip();
    KeywordColumn {
        terms,
        normalized,
        values: ids,
        postings,
        parent_counts,
    }
}
