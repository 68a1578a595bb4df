use cohort_core::datamodel::{Day, EndpointKind, PatientRecord, Sex};
use serde::{Deserialize, Serialize};

/// Short presentation of one patient in a result list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatientProfile {
    pub patient_id: String,
    pub sex: Sex,
    pub age: Option<u32>,
    pub deceased: bool,
    /// Diagnosis recorded on the basic-disease day, if any.
    pub basic_disease: Option<String>,
    pub basic_disease_day: Option<Day>,
    pub first_dialysis_day: Option<Day>,
    pub transplant_count: u32,
    pub failure_count: u32,
}

impl PatientProfile {
    pub fn of(p: &PatientRecord) -> Self {
        let first_day = |kind| p.endpoints_of(kind).map(|e| e.day).min();
        let count = |kind| p.endpoints_of(kind).count() as u32;
        let basic_disease_day = first_day(EndpointKind::BasicDisease);
        let basic_disease = basic_disease_day.and_then(|day| {
            p.diagnoses
                .iter()
                .filter(|d| d.day == day)
                .map(|d| d.term.clone())
                .min()
        });
        PatientProfile {
            patient_id: p.patient_id.clone(),
            sex: p.sex,
            age: p.age_years(),
            deceased: p.deceased,
            basic_disease,
            basic_disease_day,
            first_dialysis_day: first_day(EndpointKind::FirstDialysis),
            transplant_count: count(EndpointKind::Transplantation),
            failure_count: count(EndpointKind::Failure),
        }
    }
}
