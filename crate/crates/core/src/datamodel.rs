//! Canonical patient record hierarchy shared by every other module.
//!
//! A [`PatientRecord`] is the root document. Its child events (diagnoses,
//! labs, medications, examinations, endpoints, text documents) hang directly
//! below it, and annotations/fields form the third and last level.
//!
//! Time is stored as whole days since 1900-01-01 ([`Day`]).

use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::extract::Annotation;

/// Whole days since 1900-01-01 (day 0).
pub type Day = i32;

const EPOCH: (i32, u32, u32) = (1900, 1, 1);
const MIN_YEAR: i32 = 1900;
const MAX_YEAR: i32 = 2100;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("date {0} outside supported range 1900-01-01..=2100-12-31")]
    DateOutOfRange(NaiveDate),
    #[error("day {0} outside supported range")]
    DayOutOfRange(Day),
    #[error("patient record has an empty patient_id")]
    EmptyPatientId,
    #[error("patient {patient}: {reason}")]
    Invalid { patient: String, reason: String },
    #[error("invalid BIRADS class {0:?}")]
    Birads(String),
}

fn epoch() -> NaiveDate {
    NaiveDate::from_ymd_opt(EPOCH.0, EPOCH.1, EPOCH.2).expect("valid epoch")
}

/// Day count of `date` relative to 1900-01-01.
pub fn days_since_epoch(date: NaiveDate) -> Result<Day, ModelError> {
    if date.year() < MIN_YEAR || date.year() > MAX_YEAR {
        return Err(ModelError::DateOutOfRange(date));
    }
    Ok(date.signed_duration_since(epoch()).num_days() as Day)
}

/// Inverse of [`days_since_epoch`].
pub fn date_from_day(day: Day) -> Result<NaiveDate, ModelError> {
    let date = epoch()
        .checked_add_signed(chrono::Duration::days(day as i64))
        .ok_or(ModelError::DayOutOfRange(day))?;
    if date.year() < MIN_YEAR || date.year() > MAX_YEAR {
        return Err(ModelError::DayOutOfRange(day));
    }
    Ok(date)
}

fn fold_char(c: char, out: &mut String) {
    match c {
        'ä' => out.push_str("ae"),
        'ö' => out.push_str("oe"),
        'ü' => out.push_str("ue"),
        'ß' => out.push_str("ss"),
        // combining diaeresis (decomposed umlaut)
        '\u{0308}' => out.push('e'),
        _ => out.push(c),
    }
}

/// Lowercases and folds German umlauts/ß (`ä` → `ae`, `ß` → `ss`).
pub fn fold_case(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    for c in raw.chars() {
        for lc in c.to_lowercase() {
            fold_char(lc, &mut out);
        }
    }
    out
}

/// Deterministic, idempotent term normalization.
///
/// Folds case and umlauts, collapses whitespace runs to one space and strips
/// non-alphanumeric characters from both ends. Interior punctuation and word
/// order are kept: `"Anämie, renal"` becomes `"anaemie, renal"`.
pub fn normalize_term(raw: &str) -> String {
    let folded = fold_case(raw);
    let collapsed = folded.split_whitespace().collect::<Vec<_>>().join(" ");
    collapsed
        .trim_matches(|c: char| !c.is_alphanumeric())
        .to_string()
}

/// Compact lab test key: normalized words with punctuation removed, joined by `_`.
///
/// `"KreatininHP (mg/dl)"` becomes `"kreatininhp_mgdl"`.
pub fn canonical_lab_term(raw: &str) -> String {
    normalize_term(raw)
        .split(' ')
        .map(|w| w.chars().filter(|c| c.is_alphanumeric()).collect::<String>())
        .filter(|w| !w.is_empty())
        .collect::<Vec<_>>()
        .join("_")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
pub enum Sex {
    F,
    M,
    #[default]
    #[serde(rename = "unknown")]
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
pub enum BloodGroup {
    A,
    B,
    AB,
    #[serde(rename = "0")]
    O,
    #[default]
    #[serde(rename = "unknown")]
    Unknown,
}

impl Sex {
    pub fn as_str(self) -> &'static str {
        match self {
            Sex::F => "F",
            Sex::M => "M",
            Sex::Unknown => "unknown",
        }
    }
}

impl BloodGroup {
    pub fn as_str(self) -> &'static str {
        match self {
            BloodGroup::A => "A",
            BloodGroup::B => "B",
            BloodGroup::AB => "AB",
            BloodGroup::O => "0",
            BloodGroup::Unknown => "unknown",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Database,
    Extraction,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Database => "database",
            Provenance::Extraction => "extraction",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabClassification {
    Low,
    Normal,
    High,
    Unclassified,
}

impl LabClassification {
    pub fn as_str(self) -> &'static str {
        match self {
            LabClassification::Low => "low",
            LabClassification::Normal => "normal",
            LabClassification::High => "high",
            LabClassification::Unclassified => "unclassified",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisEvent {
    pub term: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub icd10: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub therapy_term: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub therapy_code: Option<String>,
    pub day: Day,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabEvent {
    pub term: String,
    pub term_canon: String,
    pub day: Day,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub numeric_value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_value: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classification: Option<LabClassification>,
    pub provenance: Provenance,
}

impl LabEvent {
    pub fn numeric(term: &str, day: Day, value: f64) -> Self {
        LabEvent {
            term: term.to_string(),
            term_canon: canonical_lab_term(term),
            day,
            numeric_value: Some(value),
            text_value: None,
            classification: None,
            provenance: Provenance::Database,
        }
    }

    pub fn text(term: &str, day: Day, value: &str) -> Self {
        LabEvent {
            term: term.to_string(),
            term_canon: canonical_lab_term(term),
            day,
            numeric_value: None,
            text_value: Some(value.to_string()),
            classification: None,
            provenance: Provenance::Database,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MedicationEvent {
    pub term: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code: Option<String>,
    pub day: Day,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExamMethod {
    Sonography,
    Mammography,
    Mrt,
    Ct,
    Xray,
    Other,
}

impl ExamMethod {
    pub const ALL: [ExamMethod; 6] = [
        ExamMethod::Sonography,
        ExamMethod::Mammography,
        ExamMethod::Mrt,
        ExamMethod::Ct,
        ExamMethod::Xray,
        ExamMethod::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExamMethod::Sonography => "sonography",
            ExamMethod::Mammography => "mammography",
            ExamMethod::Mrt => "mrt",
            ExamMethod::Ct => "ct",
            ExamMethod::Xray => "xray",
            ExamMethod::Other => "other",
        }
    }

    /// Maps free-text method labels (German or English) onto the enum.
    pub fn parse_lenient(raw: &str) -> ExamMethod {
        let n = normalize_term(raw);
        match n.as_str() {
            "sonography" | "sonographie" | "sono" | "ultraschall" | "us" => ExamMethod::Sonography,
            "mammography" | "mammographie" | "mammo" | "mg" => ExamMethod::Mammography,
            "mrt" | "mri" | "mr" | "mr-mammographie" => ExamMethod::Mrt,
            "ct" | "computertomographie" => ExamMethod::Ct,
            "xray" | "x-ray" | "roentgen" => ExamMethod::Xray,
            _ => ExamMethod::Other,
        }
    }
}

/// BIRADS assessment category 0–6 with optional a–c subdivision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BiradsClass {
    category: u8,
    suffix: Option<char>,
}

impl BiradsClass {
    pub fn new(category: u8, suffix: Option<char>) -> Result<Self, ModelError> {
        let ok_suffix = suffix.is_none_or(|s| matches!(s, 'a'..='c'));
        if category > 6 || !ok_suffix {
            return Err(ModelError::Birads(format!("{category}{}", suffix.map(String::from).unwrap_or_default())));
        }
        Ok(BiradsClass { category, suffix })
    }

    pub fn category(&self) -> u8 {
        self.category
    }

    pub fn suffix(&self) -> Option<char> {
        self.suffix
    }
}

impl fmt::Display for BiradsClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.category)?;
        if let Some(s) = self.suffix {
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

impl FromStr for BiradsClass {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut chars = s.trim().chars();
        let err = || ModelError::Birads(s.to_string());
        let cat = chars.next().and_then(|c| c.to_digit(10)).ok_or_else(err)?;
        let suffix = chars.next().map(|c| c.to_ascii_lowercase());
        if chars.next().is_some() {
            return Err(err());
        }
        BiradsClass::new(cat as u8, suffix)
    }
}

impl Serialize for BiradsClass {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BiradsClass {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExaminationEvent {
    pub method: ExamMethod,
    pub day: Day,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub physician: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finding_text_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evaluation_text_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub birads: Option<BiradsClass>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndpointKind {
    BasicDisease,
    FirstDialysis,
    Transplantation,
    Rejection,
    Failure,
    Death,
}

impl EndpointKind {
    pub const ALL: [EndpointKind; 6] = [
        EndpointKind::BasicDisease,
        EndpointKind::FirstDialysis,
        EndpointKind::Transplantation,
        EndpointKind::Rejection,
        EndpointKind::Failure,
        EndpointKind::Death,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EndpointKind::BasicDisease => "basic_disease",
            EndpointKind::FirstDialysis => "first_dialysis",
            EndpointKind::Transplantation => "transplantation",
            EndpointKind::Rejection => "rejection",
            EndpointKind::Failure => "failure",
            EndpointKind::Death => "death",
        }
    }

    /// Display label used for event types on the timeline.
    pub fn label(self) -> &'static str {
        match self {
            EndpointKind::BasicDisease => "Basic disease",
            EndpointKind::FirstDialysis => "First dialysis",
            EndpointKind::Transplantation => "Transplantation",
            EndpointKind::Rejection => "Rejection",
            EndpointKind::Failure => "Failure",
            EndpointKind::Death => "Death",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndpointEvent {
    pub kind: EndpointKind,
    pub day: Day,
    pub ordinal: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DocType {
    Finding,
    Visit,
    ClinicalReport,
    ProgressReport,
    Evaluation,
}

impl DocType {
    pub fn as_str(self) -> &'static str {
        match self {
            DocType::Finding => "finding",
            DocType::Visit => "visit",
            DocType::ClinicalReport => "clinical_report",
            DocType::ProgressReport => "progress_report",
            DocType::Evaluation => "evaluation",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextDocument {
    pub doc_id: String,
    pub doc_type: DocType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub day: Option<Day>,
    pub body: String,
    #[serde(default)]
    pub annotations: Vec<Annotation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub patient_id: String,
    #[serde(default)]
    pub sex: Sex,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub birth_date: Option<NaiveDate>,
    #[serde(default)]
    pub deceased: bool,
    #[serde(default)]
    pub blood_group: BloodGroup,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height_cm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_contact: Option<NaiveDate>,
    #[serde(default)]
    pub diagnoses: Vec<DiagnosisEvent>,
    #[serde(default)]
    pub labs: Vec<LabEvent>,
    #[serde(default)]
    pub medications: Vec<MedicationEvent>,
    #[serde(default)]
    pub examinations: Vec<ExaminationEvent>,
    #[serde(default)]
    pub endpoints: Vec<EndpointEvent>,
    #[serde(default)]
    pub documents: Vec<TextDocument>,
}

fn is_icd10(code: &str) -> bool {
    let b = code.as_bytes();
    let head = b.len() >= 3
        && b[0].is_ascii_uppercase()
        && b[1].is_ascii_digit()
        && b[2].is_ascii_digit();
    match b.len() {
        3 => head,
        5 => head && b[3] == b'.' && b[4].is_ascii_digit(),
        _ => false,
    }
}

impl PatientRecord {
    pub fn new(patient_id: impl Into<String>) -> Self {
        PatientRecord {
            patient_id: patient_id.into(),
            sex: Sex::Unknown,
            birth_date: None,
            deceased: false,
            blood_group: BloodGroup::Unknown,
            height_cm: None,
            last_contact: None,
            diagnoses: Vec::new(),
            labs: Vec::new(),
            medications: Vec::new(),
            examinations: Vec::new(),
            endpoints: Vec::new(),
            documents: Vec::new(),
        }
    }

    /// Checks the per-record invariants.
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.patient_id.is_empty() {
            return Err(ModelError::EmptyPatientId);
        }
        let invalid = |reason: String| ModelError::Invalid {
            patient: self.patient_id.clone(),
            reason,
        };
        if let Some(h) = self.height_cm {
            if h.is_nan() || h < 0.0 {
                return Err(invalid(format!("negative height {h}")));
            }
        }
        for d in &self.diagnoses {
            if d.term.trim().is_empty() {
                return Err(invalid("diagnosis with empty term".into()));
            }
            if let Some(code) = &d.icd10 {
                if !is_icd10(code) {
                    return Err(invalid(format!("malformed ICD-10 code {code:?}")));
                }
            }
        }
        for l in &self.labs {
            if l.numeric_value.is_some() == l.text_value.is_some() {
                return Err(invalid(format!(
                    "lab {:?} on day {} must carry exactly one of numeric_value/text_value",
                    l.term, l.day
                )));
            }
        }
        for doc in &self.documents {
            if doc.doc_id.is_empty() || doc.body.is_empty() {
                return Err(invalid("document with empty doc_id or body".into()));
            }
        }
        if !endpoint_ordinals_consistent(&self.endpoints) {
            return Err(invalid("endpoint ordinals are not consecutive in day order".into()));
        }
        Ok(())
    }

    pub fn endpoints_of(&self, kind: EndpointKind) -> impl Iterator<Item = &EndpointEvent> {
        self.endpoints.iter().filter(move |e| e.kind == kind)
    }

    /// Sorts every child list by day (documents by `(day, doc_id)`).
    ///
    /// Sorting is stable, so same-day children keep their input order.
    pub fn sort_children(&mut self) {
        self.diagnoses.sort_by_key(|d| d.day);
        self.labs.sort_by_key(|l| l.day);
        self.medications.sort_by_key(|m| m.day);
        self.examinations.sort_by_key(|e| e.day);
        self.endpoints.sort_by_key(|e| (e.day, e.kind, e.ordinal));
        self.documents
            .sort_by(|a, b| (a.day, &a.doc_id).cmp(&(b.day, &b.doc_id)));
    }

    /// Latest day mentioned anywhere in the record.
    pub fn latest_day(&self) -> Option<Day> {
        let last_contact = self.last_contact.and_then(|d| days_since_epoch(d).ok());
        self.diagnoses
            .iter()
            .map(|d| d.day)
            .chain(self.labs.iter().map(|l| l.day))
            .chain(self.medications.iter().map(|m| m.day))
            .chain(self.examinations.iter().map(|e| e.day))
            .chain(self.endpoints.iter().map(|e| e.day))
            .chain(self.documents.iter().filter_map(|d| d.day))
            .chain(last_contact)
            .max()
    }

    /// Age in whole years at `last_contact`, or at the latest recorded event.
    pub fn age_years(&self) -> Option<u32> {
        let birth = self.birth_date?;
        let at = match self.last_contact {
            Some(d) => d,
            None => date_from_day(self.latest_day()?).ok()?,
        };
        at.years_since(birth)
    }
}

/// Assigns ordinals per kind, consecutive from 1 in day order.
pub fn assign_endpoint_ordinals(endpoints: &mut [EndpointEvent]) {
    endpoints.sort_by_key(|e| (e.day, e.kind));
    for kind in EndpointKind::ALL {
        let mut n = 0;
        for e in endpoints.iter_mut().filter(|e| e.kind == kind) {
            n += 1;
            e.ordinal = n;
        }
    }
}

fn endpoint_ordinals_consistent(endpoints: &[EndpointEvent]) -> bool {
    EndpointKind::ALL.iter().all(|&kind| {
        let mut seq: Vec<(u32, Day)> = endpoints
            .iter()
            .filter(|e| e.kind == kind)
            .map(|e| (e.ordinal, e.day))
            .collect();
        seq.sort_unstable();
        seq.iter().enumerate().all(|(i, &(ord, _))| ord as usize == i + 1)
            && seq.windows(2).all(|w| w[0].1 <= w[1].1)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn date(y: i32, m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, d).unwrap()
    }

    /// Day count by explicit year/month summation, independent of chrono.
    fn oracle_days(y: i32, m: u32, d: u32) -> i32 {
        let leap = |y: i32| (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
        let month_len = [31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31];
        let mut days = 0;
        for yy in 1900..y {
            days += if leap(yy) { 366 } else { 365 };
        }
        for mm in 1..m {
            days += month_len[(mm - 1) as usize];
            if mm == 2 && leap(y) {
                days += 1;
            }
        }
        days + d as i32 - 1
    }

    #[test]
    fn epoch_examples() {
        assert_eq!(days_since_epoch(date(1900, 1, 1)).unwrap(), 0);
        assert_eq!(days_since_epoch(date(1900, 1, 2)).unwrap(), 1);
        assert_eq!(oracle_days(2000, 3, 1), 36584);
        assert_eq!(days_since_epoch(date(2000, 3, 1)).unwrap(), 36584);
    }

    #[test]
    fn epoch_range_errors() {
        assert!(days_since_epoch(date(1899, 12, 31)).is_err());
        assert!(days_since_epoch(date(2101, 1, 1)).is_err());
        assert!(days_since_epoch(date(2100, 12, 31)).is_ok());
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_term("Renale Anämie"), "renale anaemie");
        assert_eq!(normalize_term(""), "");
        assert_eq!(normalize_term("Anämie, renal"), "anaemie, renal");
        assert_eq!(normalize_term("  Größe  (cm). "), "groesse (cm");
    }

    #[test]
    fn lab_canon() {
        assert_eq!(canonical_lab_term("KreatininHP (mg/dl)"), "kreatininhp_mgdl");
        assert_eq!(canonical_lab_term("CRPHP (mg/l)"), "crphp_mgl");
        assert_eq!(canonical_lab_term("ASTHP (U/I)"), "asthp_ui");
    }

    #[test]
    fn birads_parse() {
        assert_eq!("4b".parse::<BiradsClass>().unwrap().to_string(), "4b");
        assert_eq!("0".parse::<BiradsClass>().unwrap().category(), 0);
        assert!("7".parse::<BiradsClass>().is_err());
        assert!("4d".parse::<BiradsClass>().is_err());
    }

    #[test]
    fn icd10_pattern() {
        assert!(is_icd10("N18"));
        assert!(is_icd10("D63.8"));
        assert!(!is_icd10("D63.81"));
        assert!(!is_icd10("n18"));
    }

    #[test]
    fn lab_needs_exactly_one_value() {
        let mut p = PatientRecord::new("p1");
        let mut lab = LabEvent::numeric("CRP", 5, 1.0);
        lab.text_value = Some("x".into());
        p.labs.push(lab);
        assert!(p.validate().is_err());
    }

    #[test]
    fn ordinals_reassigned_in_day_order() {
        let mut eps = vec![
            EndpointEvent { kind: EndpointKind::Transplantation, day: 500, ordinal: 0 },
            EndpointEvent { kind: EndpointKind::Failure, day: 400, ordinal: 0 },
            EndpointEvent { kind: EndpointKind::Transplantation, day: 100, ordinal: 0 },
        ];
        assign_endpoint_ordinals(&mut eps);
        let tx: Vec<_> = eps
            .iter()
            .filter(|e| e.kind == EndpointKind::Transplantation)
            .map(|e| (e.day, e.ordinal))
            .collect();
        assert_eq!(tx, vec![(100, 1), (500, 2)]);
        assert!(endpoint_ordinals_consistent(&eps));
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(s in "\\PC{0,40}") {
            let once = normalize_term(&s);
            prop_assert_eq!(normalize_term(&once), once.clone());
        }

        #[test]
        fn normalize_is_idempotent_german(s in "[ÄÖÜäöüßa-zA-Z ,.;()-]{0,30}") {
            let once = normalize_term(&s);
            prop_assert_eq!(normalize_term(&once), once);
        }

        #[test]
        fn days_strictly_monotone(a in 0i32..73000, b in 0i32..73000) {
            let da = date_from_day(a).unwrap();
            let db = date_from_day(b).unwrap();
            prop_assert_eq!(a.cmp(&b), da.cmp(&db));
            prop_assert_eq!(days_since_epoch(da).unwrap(), a);
            let (y, m, d) = (da.year(), da.month(), da.day());
            prop_assert_eq!(oracle_days(y, m, d), a);
        }

        #[test]
        fn ordinal_assignment_is_stable(days in proptest::collection::vec((0usize..6, 0i32..1000), 0..12)) {
            let mut eps: Vec<EndpointEvent> = days
                .iter()
                .map(|&(k, d)| EndpointEvent { kind: EndpointKind::ALL[k], day: d, ordinal: 0 })
                .collect();
            assign_endpoint_ordinals(&mut eps);
            let before = eps.clone();
            assign_endpoint_ordinals(&mut eps);
            prop_assert_eq!(before, eps.clone());
            prop_assert!(endpoint_ordinals_consistent(&eps));
        }
    }
}
