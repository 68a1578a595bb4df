//! Field declarations and the record accessors that back them.

use std::borrow::Cow;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::SchemaError;
use crate::datamodel::{
    days_since_epoch, DiagnosisEvent, EndpointEvent, ExaminationEvent, LabEvent, MedicationEvent,
    PatientRecord, TextDocument,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChildKind {
    Diagnosis,
    Lab,
    Medication,
    Examination,
    Endpoint,
    Document,
}

impl ChildKind {
    pub const ALL: [ChildKind; 6] = [
        ChildKind::Diagnosis,
        ChildKind::Lab,
        ChildKind::Medication,
        ChildKind::Examination,
        ChildKind::Endpoint,
        ChildKind::Document,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ChildKind::Diagnosis => "diagnosis",
            ChildKind::Lab => "lab",
            ChildKind::Medication => "medication",
            ChildKind::Examination => "examination",
            ChildKind::Endpoint => "endpoint",
            ChildKind::Document => "document",
        }
    }

    pub(crate) fn slot(self) -> usize {
        self as usize
    }

    pub fn count_in(self, rec: &PatientRecord) -> usize {
        match self {
            ChildKind::Diagnosis => rec.diagnoses.len(),
            ChildKind::Lab => rec.labs.len(),
            ChildKind::Medication => rec.medications.len(),
            ChildKind::Examination => rec.examinations.len(),
            ChildKind::Endpoint => rec.endpoints.len(),
            ChildKind::Document => rec.documents.len(),
        }
    }
}

impl fmt::Display for ChildKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ChildKind {
    type Err = SchemaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ChildKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| SchemaError::UnknownKind(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "level", content = "kind")]
pub enum Level {
    Patient,
    Child(ChildKind),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    Keyword,
    Numeric,
    DateDay,
    Fulltext,
}

impl ValueKind {
    pub fn is_numeric(self) -> bool {
        matches!(self, ValueKind::Numeric | ValueKind::DateDay)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSchema {
    pub name: String,
    pub level: Level,
    pub value_kind: ValueKind,
    pub facetable: bool,
}

impl FieldSchema {
    fn new(name: &str, level: Level, value_kind: ValueKind, facetable: bool) -> Self {
        FieldSchema {
            name: name.to_string(),
            level,
            value_kind,
            facetable,
        }
    }
}

/// A named group of facets opened and closed together in the workbench.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FacetBlock {
    pub name: String,
    pub fields: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub fields: Vec<FieldSchema>,
    #[serde(default)]
    pub blocks: Vec<FacetBlock>,
}

impl Default for Schema {
    fn default() -> Self {
        use ChildKind::*;
        use ValueKind::*;
        let p = Level::Patient;
        let c = Level::Child;
        let fields = vec![
            FieldSchema::new("patient_id", p, Keyword, false),
            FieldSchema::new("sex", p, Keyword, true),
            FieldSchema::new("blood_group", p, Keyword, true),
            FieldSchema::new("deceased", p, Keyword, true),
            FieldSchema::new("height_cm", p, Numeric, false),
            FieldSchema::new("age", p, Numeric, false),
            FieldSchema::new("birth_day", p, DateDay, false),
            FieldSchema::new("last_contact_day", p, DateDay, false),
            FieldSchema::new("diagnosis.term", c(Diagnosis), Keyword, true),
            FieldSchema::new("diagnosis.icd10", c(Diagnosis), Keyword, true),
            FieldSchema::new("diagnosis.therapy_term", c(Diagnosis), Keyword, true),
            FieldSchema::new("diagnosis.therapy_code", c(Diagnosis), Keyword, true),
            FieldSchema::new("diagnosis.provenance", c(Diagnosis), Keyword, true),
            FieldSchema::new("diagnosis.day", c(Diagnosis), DateDay, false),
            FieldSchema::new("lab.term", c(Lab), Keyword, true),
            FieldSchema::new("lab.term_canon", c(Lab), Keyword, true),
            FieldSchema::new("lab.numeric_value", c(Lab), Numeric, false),
            FieldSchema::new("lab.text_value", c(Lab), Keyword, true),
            FieldSchema::new("lab.classification", c(Lab), Keyword, true),
            FieldSchema::new("lab.provenance", c(Lab), Keyword, true),
            FieldSchema::new("lab.day", c(Lab), DateDay, false),
            FieldSchema::new("medication.term", c(Medication), Keyword, true),
            FieldSchema::new("medication.code", c(Medication), Keyword, true),
            FieldSchema::new("medication.day", c(Medication), DateDay, false),
            FieldSchema::new("examination.method", c(Examination), Keyword, true),
            FieldSchema::new("examination.physician", c(Examination), Keyword, true),
            FieldSchema::new("examination.birads", c(Examination), Keyword, true),
            FieldSchema::new("examination.day", c(Examination), DateDay, false),
            FieldSchema::new("endpoint.kind", c(Endpoint), Keyword, true),
            FieldSchema::new("endpoint.ordinal", c(Endpoint), Numeric, false),
            FieldSchema::new("endpoint.day", c(Endpoint), DateDay, false),
            FieldSchema::new("document.doc_type", c(Document), Keyword, true),
            FieldSchema::new("document.day", c(Document), DateDay, false),
            FieldSchema::new("document.body", c(Document), Fulltext, false),
        ];
        let block = |name: &str, fields: &[&str]| FacetBlock {
            name: name.to_string(),
            fields: fields.iter().map(|f| f.to_string()).collect(),
        };
        let blocks = vec![
            block("master_data", &["sex", "blood_group", "deceased"]),
            block(
                "diagnoses",
                &["diagnosis.term", "diagnosis.icd10", "diagnosis.therapy_term", "diagnosis.therapy_code"],
            ),
            block("labs", &["lab.term", "lab.classification", "lab.provenance"]),
            block("medications", &["medication.term", "medication.code"]),
            block("examinations", &["examination.method", "examination.birads", "examination.physician"]),
            block("endpoints", &["endpoint.kind"]),
            block("documents", &["document.doc_type"]),
        ];
        Schema { fields, blocks }
    }
}

impl Schema {
    pub fn position(&self, name: &str) -> Option<usize> {
        self.fields.iter().position(|f| f.name == name)
    }

    pub fn field(&self, name: &str) -> Result<&FieldSchema, SchemaError> {
        self.fields
            .iter()
            .find(|f| f.name == name)
            .ok_or_else(|| SchemaError::UnknownField(name.to_string()))
    }

    pub fn block(&self, name: &str) -> Option<&FacetBlock> {
        self.blocks.iter().find(|b| b.name == name)
    }
}

/// A borrowed child event of any kind.
#[derive(Debug, Clone, Copy)]
pub enum ChildRef<'a> {
    Diagnosis(&'a DiagnosisEvent),
    Lab(&'a LabEvent),
    Medication(&'a MedicationEvent),
    Examination(&'a ExaminationEvent),
    Endpoint(&'a EndpointEvent),
    Document(&'a TextDocument),
}

impl ChildRef<'_> {
    pub fn day(&self) -> Option<i32> {
        match self {
            ChildRef::Diagnosis(d) => Some(d.day),
            ChildRef::Lab(l) => Some(l.day),
            ChildRef::Medication(m) => Some(m.day),
            ChildRef::Examination(e) => Some(e.day),
            ChildRef::Endpoint(e) => Some(e.day),
            ChildRef::Document(d) => d.day,
        }
    }
}

pub(crate) fn child_at(rec: &PatientRecord, kind: ChildKind, i: usize) -> ChildRef<'_> {
    match kind {
        ChildKind::Diagnosis => ChildRef::Diagnosis(&rec.diagnoses[i]),
        ChildKind::Lab => ChildRef::Lab(&rec.labs[i]),
        ChildKind::Medication => ChildRef::Medication(&rec.medications[i]),
        ChildKind::Examination => ChildRef::Examination(&rec.examinations[i]),
        ChildKind::Endpoint => ChildRef::Endpoint(&rec.endpoints[i]),
        ChildKind::Document => ChildRef::Document(&rec.documents[i]),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Value<'a> {
    Str(Cow<'a, str>),
    Num(f64),
}

fn s(v: &str) -> Option<Value<'_>> {
    Some(Value::Str(Cow::Borrowed(v)))
}

fn owned<'a>(v: String) -> Option<Value<'a>> {
    Some(Value::Str(Cow::Owned(v)))
}

/// Whether `name` is a field the index knows how to read at `level`.
pub(crate) fn is_known(name: &str, level: Level) -> bool {
    match level {
        Level::Patient => matches!(
            name,
            "patient_id" | "sex" | "blood_group" | "deceased" | "height_cm" | "age" | "birth_day" | "last_contact_day"
        ),
        Level::Child(kind) => {
            let Some((prefix, _)) = name.split_once('.') else {
                return false;
            };
            prefix == kind.as_str() && KNOWN_CHILD_FIELDS.contains(&name)
        }
    }
}

const KNOWN_CHILD_FIELDS: &[&str] = &[
    "diagnosis.term",
    "diagnosis.icd10",
    "diagnosis.therapy_term",
    "diagnosis.therapy_code",
    "diagnosis.provenance",
    "diagnosis.day",
    "lab.term",
    "lab.term_canon",
    "lab.numeric_value",
    "lab.text_value",
    "lab.classification",
    "lab.provenance",
    "lab.day",
    "medication.term",
    "medication.code",
    "medication.provenance",
    "medication.day",
    "examination.method",
    "examination.physician",
    "examination.birads",
    "examination.day",
    "endpoint.kind",
    "endpoint.ordinal",
    "endpoint.day",
    "document.doc_id",
    "document.doc_type",
    "document.day",
    "document.body",
];

pub(crate) fn patient_value<'a>(name: &str, rec: &'a PatientRecord) -> Option<Value<'a>> {
    match name {
        "patient_id" => s(&rec.patient_id),
        "sex" => s(rec.sex.as_str()),
        "blood_group" => s(rec.blood_group.as_str()),
        "deceased" => s(if rec.deceased { "true" } else { "false" }),
        "height_cm" => rec.height_cm.map(Value::Num),
        "age" => rec.age_years().map(|a| Value::Num(a as f64)),
        "birth_day" => rec.birth_date.and_then(|d| days_since_epoch(d).ok()).map(|d| Value::Num(d as f64)),
        "last_contact_day" => rec
            .last_contact
            .and_then(|d| days_since_epoch(d).ok())
            .map(|d| Value::Num(d as f64)),
        _ => None,
    }
}

pub(crate) fn child_value<'a>(name: &str, child: ChildRef<'a>) -> Option<Value<'a>> {
    let day = |d: i32| Some(Value::Num(d as f64));
    match (name, child) {
        ("diagnosis.term", ChildRef::Diagnosis(d)) => s(&d.term),
        ("diagnosis.icd10", ChildRef::Diagnosis(d)) => d.icd10.as_deref().and_then(s),
        ("diagnosis.therapy_term", ChildRef::Diagnosis(d)) => d.therapy_term.as_deref().and_then(s),
        ("diagnosis.therapy_code", ChildRef::Diagnosis(d)) => d.therapy_code.as_deref().and_then(s),
        ("diagnosis.provenance", ChildRef::Diagnosis(d)) => s(d.provenance.as_str()),
        ("diagnosis.day", ChildRef::Diagnosis(d)) => day(d.day),
        ("lab.term", ChildRef::Lab(l)) => s(&l.term),
        ("lab.term_canon", ChildRef::Lab(l)) => s(&l.term_canon),
        ("lab.numeric_value", ChildRef::Lab(l)) => l.numeric_value.map(Value::Num),
        ("lab.text_value", ChildRef::Lab(l)) => l.text_value.as_deref().and_then(s),
        ("lab.classification", ChildRef::Lab(l)) => l.classification.map(|c| c.as_str()).and_then(s),
        ("lab.provenance", ChildRef::Lab(l)) => s(l.provenance.as_str()),
        ("lab.day", ChildRef::Lab(l)) => day(l.day),
        ("medication.term", ChildRef::Medication(m)) => s(&m.term),
        ("medication.code", ChildRef::Medication(m)) => m.code.as_deref().and_then(s),
        ("medication.provenance", ChildRef::Medication(m)) => s(m.provenance.as_str()),
        ("medication.day", ChildRef::Medication(m)) => day(m.day),
        ("examination.method", ChildRef::Examination(e)) => s(e.method.as_str()),
        ("examination.physician", ChildRef::Examination(e)) => e.physician.as_deref().and_then(s),
        ("examination.birads", ChildRef::Examination(e)) => e.birads.map(|b| b.to_string()).and_then(owned),
        ("examination.day", ChildRef::Examination(e)) => day(e.day),
        ("endpoint.kind", ChildRef::Endpoint(e)) => s(e.kind.as_str()),
        ("endpoint.ordinal", ChildRef::Endpoint(e)) => Some(Value::Num(e.ordinal as f64)),
        ("endpoint.day", ChildRef::Endpoint(e)) => day(e.day),
        ("document.doc_id", ChildRef::Document(d)) => s(&d.doc_id),
        ("document.doc_type", ChildRef::Document(d)) => s(d.doc_type.as_str()),
        ("document.day", ChildRef::Document(d)) => d.day.map(|v| Value::Num(v as f64)),
        ("document.body", ChildRef::Document(d)) => s(&d.body),
        _ => None,
    }
}
