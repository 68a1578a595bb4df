//! Findings store: every text document ever ingested, keyed by doc id.
//!
//! Patients are re-assembled from the base record plus all stored findings,
//! so a later import never drops an earlier finding of the same patient.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{io_err, CsvImport, IngestError};
use crate::datamodel::{ExaminationEvent, PatientRecord, Sex, TextDocument};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredFinding {
    pub patient_id: String,
    pub document: TextDocument,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FindingStore {
    /// Patient records without documents.
    patients: BTreeMap<String, PatientRecord>,
    findings: BTreeMap<String, StoredFinding>,
    /// Examinations imported from exports, keyed by their first doc id.
    examinations: BTreeMap<String, (String, ExaminationEvent)>,
    #[serde(skip)]
    dirty: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assembled {
    pub patients: Vec<PatientRecord>,
    /// Doc ids of findings whose patient is unknown, sorted.
    pub pending: Vec<String>,
}

impl FindingStore {
    pub fn new() -> Self {
        FindingStore::default()
    }

    pub fn len(&self) -> usize {
        self.findings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.findings.is_empty()
    }

    pub fn finding(&self, doc_id: &str) -> Option<&StoredFinding> {
        self.findings.get(doc_id)
    }

    pub fn findings_of<'a>(&'a self, patient_id: &'a str) -> impl Iterator<Item = &'a TextDocument> + 'a {
        self.findings
            .values()
            .filter(move |f| f.patient_id == patient_id)
            .map(|f| &f.document)
    }

    /// Patients touched since the store was created or loaded.
    pub fn dirty(&self) -> &BTreeSet<String> {
        &self.dirty
    }

    pub fn clear_dirty(&mut self) {
        self.dirty.clear();
    }

    /// Stores or replaces `doc` by doc id and marks its patient dirty.
    pub fn upsert_finding(&mut self, doc: TextDocument, patient_id: &str) {
        assert!(!doc.doc_id.is_empty(), "finding without doc_id");
        if let Some(prev) = self.findings.get(&doc.doc_id) {
            if prev.patient_id != patient_id {
                self.dirty.insert(prev.patient_id.clone());
            }
        }
        self.dirty.insert(patient_id.to_string());
        self.findings.insert(
            doc.doc_id.clone(),
            StoredFinding {
                patient_id: patient_id.to_string(),
                document: doc,
            },
        );
    }

    /// Replaces the patient's base record; its documents become findings.
    /// Sex and birth date already known from an export survive when `rec`
    /// lacks them.
    pub fn upsert_patient(&mut self, mut rec: PatientRecord) {
        for doc in std::mem::take(&mut rec.documents) {
            self.upsert_finding(doc, &rec.patient_id);
        }
        if let Some(prev) = self.patients.get(&rec.patient_id) {
            if rec.sex == Sex::Unknown {
                rec.sex = prev.sex;
            }
            rec.birth_date = rec.birth_date.or(prev.birth_date);
        }
        self.dirty.insert(rec.patient_id.clone());
        self.patients.insert(rec.patient_id.clone(), rec);
    }

    /// Adds export rows. Metadata only creates missing patients or fills
    /// unknown fields; it never overrides a record loaded from JSON.
    pub fn apply_csv(&mut self, import: CsvImport) {
        for meta in import.patients {
            let rec = self
                .patients
                .entry(meta.patient_id.clone())
                .or_insert_with(|| PatientRecord::new(meta.patient_id.clone()));
            if rec.sex == Sex::Unknown {
                if let Some(s) = meta.sex {
                    rec.sex = s;
                }
            }
            rec.birth_date = rec.birth_date.or(meta.birth_date);
            self.dirty.insert(meta.patient_id);
        }
        for row in import.rows {
            let key = row
                .examination
                .finding_text_ref
                .clone()
                .or_else(|| row.examination.evaluation_text_ref.clone())
                .expect("accepted rows carry at least one document");
            for doc in row.documents {
                self.upsert_finding(doc, &row.patient_id);
            }
            self.examinations.insert(key, (row.patient_id, row.examination));
        }
    }

    /// Every known patient with all of its findings; children sorted by day,
    /// documents by `(day, doc_id)`.
    pub fn assemble_patients(&self) -> Assembled {
        let mut patients: BTreeMap<&str, PatientRecord> =
            self.patients.iter().map(|(k, v)| (k.as_str(), v.clone())).collect();
        let mut pending = Vec::new();
        for (doc_id, f) in &self.findings {
            match patients.get_mut(f.patient_id.as_str()) {
                Some(rec) => rec.documents.push(f.document.clone()),
                None => pending.push(doc_id.clone()),
            }
        }
        for (pid, exam) in self.examinations.values() {
            if let Some(rec) = patients.get_mut(pid.as_str()) {
                if !rec.examinations.contains(exam) {
                    rec.examinations.push(exam.clone());
                }
            }
        }
        let patients = patients
            .into_values()
            .map(|mut rec| {
                rec.sort_children();
                rec
            })
            .collect();
        Assembled { patients, pending }
    }

    /// Deterministic JSON encoding: equal stores give equal bytes.
    pub fn to_json_bytes(&self) -> Vec<u8> {
        serde_json::to_vec_pretty(self).expect("store serializes")
    }

    pub fn save(&self, path: &Path) -> Result<(), IngestError> {
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, self.to_json_bytes()).map_err(io_err(&tmp))?;
        fs::rename(&tmp, path).map_err(io_err(path))
    }

    pub fn load(path: &Path) -> Result<Self, IngestError> {
        let bytes = fs::read(path).map_err(io_err(path))?;
        serde_json::from_slice(&bytes).map_err(|e| IngestError::Store {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }
}
