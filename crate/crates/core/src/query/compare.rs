//! Compares extracted annotations against a patient's structured record.

use serde::{Deserialize, Serialize};

use crate::datamodel::{canonical_lab_term, normalize_term, ExamMethod, PatientRecord};
use crate::extract::{Annotation, AnnotationType};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordStatus {
    /// The record already holds a matching event.
    Known,
    /// Not yet in the record.
    New,
    /// Negated in text, but the record holds the fact.
    Contradiction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparedAnnotation {
    pub annotation: Annotation,
    pub status: RecordStatus,
}

fn eq_code(a: Option<&str>, b: Option<&str>) -> bool {
    match (a, b) {
        (Some(a), Some(b)) => a.trim().eq_ignore_ascii_case(b.trim()),
        _ => false,
    }
}

fn same_term(ann: &Annotation, term: &str) -> bool {
    let t = normalize_term(term);
    !t.is_empty() && (normalize_term(&ann.canonical_term) == t || normalize_term(&ann.surface) == t)
}

fn in_record(rec: &PatientRecord, ann: &Annotation) -> bool {
    let code = ann.code.as_deref();
    match ann.annotation_type {
        AnnotationType::Diagnosis | AnnotationType::Disorder => rec
            .diagnoses
            .iter()
            .any(|d| eq_code(code, d.icd10.as_deref()) || same_term(ann, &d.term)),
        AnnotationType::Procedure => rec.diagnoses.iter().any(|d| {
            eq_code(code, d.therapy_code.as_deref()) || d.therapy_term.as_deref().is_some_and(|t| same_term(ann, t))
        }),
        AnnotationType::Medication | AnnotationType::Drug => rec
            .medications
            .iter()
            .any(|m| eq_code(code, m.code.as_deref()) || same_term(ann, &m.term)),
        AnnotationType::LabValue => {
            let canon = canonical_lab_term(&ann.canonical_term);
            rec.labs
                .iter()
                .any(|l| l.term_canon == canon || same_term(ann, &l.term) || same_term(ann, &l.term_canon))
        }
        AnnotationType::Examination | AnnotationType::ExamMethod => {
            let m = ExamMethod::parse_lenient(&ann.canonical_term);
            m != ExamMethod::Other && rec.examinations.iter().any(|e| e.method == m)
        }
        AnnotationType::Birads => rec
            .examinations
            .iter()
            .any(|e| e.birads.is_some_and(|b| b.to_string() == ann.canonical_term)),
    }
}

/// Status of each annotation relative to `patient`: known when a child event
/// of the same kind matches by code or normalized term, contradiction when
/// such a match exists but the annotation is negated, new otherwise.
pub fn compare_extraction_to_record(patient: &PatientRecord, annotations: &[Annotation]) -> Vec<ComparedAnnotation> {
    annotations
        .iter()
        .map(|a| {
            let status = match (in_record(patient, a), a.negated) {
                (true, false) => RecordStatus::Known,
                (true, true) => RecordStatus::Contradiction,
                (false, _) => RecordStatus::New,
            };
            ComparedAnnotation {
                annotation: a.clone(),
                status,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::{DiagnosisEvent, Provenance};
    use crate::extract::{annotate, PipelineConfig};

    #[test]
    fn statuses() {
        let mut p = PatientRecord::new("p");
        p.diagnoses.push(DiagnosisEvent {
            term: "Arterielle Hypertonie".into(),
            icd10: Some("I10".into()),
            therapy_term: None,
            therapy_code: None,
            day: 0,
            provenance: Provenance::Database,
        });
        let cfg = PipelineConfig::builtin();
        let anns = annotate("Kein Anhalt für Hypertonie. Fieber seit gestern.", &cfg);
        let out = compare_extraction_to_record(&p, &anns);
        let status = |term: &str| out.iter().find(|c| c.annotation.canonical_term == term).unwrap().status;
        assert_eq!(status("Hypertonie"), RecordStatus::Contradiction);
        assert_eq!(status("Fieber"), RecordStatus::New);

        let anns = annotate("Bekannte arterielle Hypertonie.", &cfg);
        let out = compare_extraction_to_record(&p, &anns);
        assert!(out.iter().all(|c| c.status == RecordStatus::Known));
    }
}
