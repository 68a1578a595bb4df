//! Seeded synthetic cohorts of transplant patients.
//!
//! Child totals are exact: each total is split across patients by random
//! weights and largest remainders. Sampling uses only integer draws and
//! basic float arithmetic (no `exp`/`ln`/`powf`) so a seed produces the same
//! cohort on every platform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::datamodel::{
    assign_endpoint_ordinals, date_from_day, days_since_epoch, BiradsClass, BloodGroup, Day, DiagnosisEvent, DocType,
    EndpointEvent, EndpointKind, ExamMethod, ExaminationEvent, LabClassification, LabEvent, MedicationEvent,
    PatientRecord, Provenance, Sex, TextDocument,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DemoConfig {
    pub patients: usize,
    pub seed: u64,
    pub diagnoses: usize,
    pub labs: usize,
    pub medications: usize,
    pub examinations: usize,
    /// Distinct diagnosis terms to draw from.
    pub vocabulary: usize,
    /// Free-text letters per patient, at most.
    pub letters_per_patient: usize,
    /// Emit a finding document per examination.
    pub exam_findings: bool,
}

impl DemoConfig {
    /// Per-patient rates of the published cohort (185 patients, 6,300
    /// diagnoses, 830,000 lab values, 25,000 medications, 12,000 examinations).
    pub fn scaled(patients: usize, seed: u64) -> Self {
        let per = |total: usize| total * patients / 185;
        DemoConfig {
            patients,
            seed,
            diagnoses: per(6_300),
            labs: per(830_000),
            medications: per(25_000),
            examinations: per(12_000),
            vocabulary: 600,
            letters_per_patient: 3,
            exam_findings: true,
        }
    }

    pub fn paper_scale(seed: u64) -> Self {
        DemoConfig::scaled(185, seed)
    }

    /// 4,000 patients, 3,500 diagnosis terms, 1M lab values.
    pub fn performance_scale(seed: u64) -> Self {
        DemoConfig {
            patients: 4_000,
            seed,
            diagnoses: 140_000,
            labs: 1_000_000,
            medications: 60_000,
            examinations: 20_000,
            vocabulary: 3_500,
            letters_per_patient: 2,
            exam_findings: false,
        }
    }

    /// Small cohort for tests: a few hundred children per kind.
    pub fn small(patients: usize, seed: u64) -> Self {
        DemoConfig {
            patients,
            seed,
            diagnoses: patients * 8,
            labs: patients * 60,
            medications: patients * 4,
            examinations: patients * 2,
            vocabulary: 60,
            letters_per_patient: 2,
            exam_findings: true,
        }
    }
}

/// Real terms first, so they are the most frequent.
const BASE_DIAGNOSES: &[(&str, &str)] = &[
    ("Arterielle Hypertonie", "I10"),
    ("Chronische Glomerulonephritis", "N03.9"),
    ("Renale Anämie", "D63.8"),
    ("Diabetes mellitus Typ 2", "E11.9"),
    ("Hyperlipidämie", "E78.5"),
    ("Hyperparathyreoidismus", "N25.8"),
    ("Zystennieren", "Q61.3"),
    ("Koronare Herzkrankheit", "I25.9"),
    ("renale Anämie", "D63.8"),
    ("Anämie", "D64.9"),
    ("Vorhofflimmern", "I48.9"),
    ("Herzinsuffizienz", "I50.9"),
    ("Harnwegsinfekt", "N39.0"),
    ("Zytomegalie", "B25.9"),
    ("Hyperkaliämie", "E87.5"),
    ("Gicht", "M10.9"),
    ("Osteoporose", "M81.9"),
    ("Fieber", "R50.9"),
    ("Pneumonie", "J18.9"),
    ("Hepatitis C", "B18.2"),
    ("IgA-Nephropathie", "N02.8"),
    ("Diabetische Nephropathie", "E14.2"),
    ("Anämie bei chronischer Nierenkrankheit", "D63.8"),
    ("Hypertonie", "I10"),
];

const ADJECTIVES: &[&str] = &[
    "Akute", "Chronische", "Rezidivierende", "Sekundäre", "Primäre", "Latente", "Toxische", "Obstruktive",
    "Entzündliche", "Hereditäre", "Idiopathische", "Postoperative", "Fokale", "Diffuse", "Benigne", "Maligne",
    "Infektiöse", "Degenerative", "Ischämische", "Medikamentöse",
];

const NOUNS: &[&str] = &[
    "Nephritis", "Zystitis", "Gastritis", "Kolitis", "Myopathie", "Neuropathie", "Arthropathie", "Hepatopathie",
    "Kardiomyopathie", "Vaskulitis", "Pankreatitis", "Bronchitis", "Dermatitis", "Stenose", "Fibrose", "Sklerose",
    "Insuffizienz", "Dysplasie", "Hypertrophie", "Atrophie", "Ektasie", "Thrombose", "Embolie", "Blutung",
    "Infektion", "Läsion", "Ulzeration", "Nekrose", "Effusion", "Ödem",
];

const GRADES: &[&str] = &["", " Grad I", " Grad II", " Grad III", " Stadium 1", " Stadium 2", " Stadium 3"];

/// Lab types: (term, typical value, spread, rises before rejection).
const LAB_TYPES: &[(&str, f64, f64, bool)] = &[
    ("KreatininHP (mg/dl)", 1.4, 0.5, true),
    ("CRPHP (mg/l)", 4.0, 3.0, true),
    ("ASTHP (U/I)", 18.0, 6.0, true),
    ("ALTHP (U/I)", 20.0, 8.0, false),
    ("HarnstoffHP (mg/dl)", 45.0, 15.0, true),
    ("HämoglobinHP (g/dl)", 12.5, 1.5, false),
    ("LeukozytenHP (/nl)", 7.0, 2.0, false),
    ("KaliumHP (mmol/l)", 4.4, 0.5, false),
    ("NatriumHP (mmol/l)", 140.0, 3.0, false),
    ("TacrolimusHP (ng/ml)", 8.0, 2.5, false),
    ("GlukoseHP (mg/dl)", 105.0, 20.0, false),
    ("ThrombozytenHP (/nl)", 240.0, 60.0, false),
];

const TEXT_LABS: &[(&str, &[&str])] = &[
    ("Urinstatus", &["negativ", "Spur Eiweiß", "Leukozyten positiv"]),
    ("CMV-PCR", &["negativ", "positiv"]),
];

const MEDICATIONS: &[(&str, &str)] = &[
    ("Tacrolimus", "L04AD02"),
    ("Mycophenolatmofetil", "L04AA06"),
    ("Prednisolon", "H02AB06"),
    ("Ciclosporin", "L04AD01"),
    ("Ramipril", "C09AA05"),
    ("Amlodipin", "C08CA01"),
    ("Metoprolol", "C07AB02"),
    ("Epoetin alfa", "B03XA01"),
    ("Furosemid", "C03CA01"),
    ("Calcitriol", "A11CC04"),
    ("Valganciclovir", "J05AB14"),
    ("Cotrimoxazol", "J01EE01"),
    ("Pantoprazol", "A02BC02"),
    ("Simvastatin", "C10AA01"),
    ("Allopurinol", "M04AA01"),
];

const PHYSICIANS: &[&str] = &["Dr. Schmidt", "Dr. Müller", "Dr. Weber", "Dr. Fischer", "Dr. Wagner"];

const FINDING_TEXTS: &[&str] = &[
    "Transplantatniere regelrecht perfundiert, kein Harnstau.",
    "Kleine Zyste am Unterpol, ca. 1.2 cm, keine Raumforderung.",
    "Kein Anhalt für Abstoßung. Kein Aszites.",
    "Verdacht auf Lymphozele, sonst unauffällig.",
    "Röntgenbilder des Thorax ohne Infiltrat.",
    "Mikrokalk links, BIRADS 4a, Biopsie empfohlen.",
    "Keine Metastasen nachweisbar.",
];

/// Diagnosis vocabulary with synthetic ICD codes past the real terms.
pub fn diagnosis_vocabulary(n: usize) -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = BASE_DIAGNOSES
        .iter()
        .take(n)
        .map(|(t, c)| (t.to_string(), c.to_string()))
        .collect();
    let mut i = 0usize;
    'outer: for g in GRADES {
        for adj in ADJECTIVES {
            for noun in NOUNS {
                if out.len() >= n {
                    break 'outer;
                }
                let code = format!(
                    "{}{:02}.{}",
                    (b'K' + (i % 14) as u8) as char,
                    (i / 14) % 100,
                    (i / 1400) % 10
                );
                out.push((format!("{adj} {noun}{g}"), code));
                i += 1;
            }
        }
    }
    let mut extra = 0;
    while out.len() < n {
        extra += 1;
        out.push((format!("Seltene Erkrankung {extra}"), format!("Z{:02}.{}", extra % 100, (extra / 100) % 10)));
    }
    out
}

/// Splits `total` into `n` parts with random weights; parts sum to `total`.
fn split_total(rng: &mut ChaCha8Rng, total: usize, n: usize) -> Vec<usize> {
    if n == 0 {
        return Vec::new();
    }
    let weights: Vec<u64> = (0..n).map(|_| rng.random_range(50..=150)).collect();
    let sum: u64 = weights.iter().sum();
    let mut parts: Vec<usize> = weights.iter().map(|&w| (total as u128 * w as u128 / sum as u128) as usize).collect();
    let mut rema: Vec<(u128, usize)> = weights
        .iter()
        .enumerate()
        .map(|(i, &w)| ((total as u128 * w as u128) % sum as u128, i))
        .collect();
    rema.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let short = total - parts.iter().sum::<usize>();
    for &(_, i) in rema.iter().take(short) {
        parts[i] += 1;
    }
    parts
}

/// Cumulative `1/k` weights for a Zipf-like draw over `n` ranks.
fn zipf_table(n: usize) -> Vec<f64> {
    let mut acc = 0.0;
    (1..=n)
        .map(|k| {
            acc += 1.0 / k as f64;
            acc
        })
        .collect()
}

fn zipf_draw(rng: &mut ChaCha8Rng, table: &[f64]) -> usize {
    let u = rng.random::<f64>() * table[table.len() - 1];
    table.partition_point(|&c| c <= u).min(table.len() - 1)
}

/// Roughly normal noise in [-1.5, 1.5] from three uniforms.
fn noise(rng: &mut ChaCha8Rng) -> f64 {
    (0..3).map(|_| rng.random::<f64>() - 0.5).sum()
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

fn classify(value: f64, typical: f64, spread: f64) -> LabClassification {
    if value > typical + 2.0 * spread {
        LabClassification::High
    } else if value < typical - 2.0 * spread {
        LabClassification::Low
    } else {
        LabClassification::Normal
    }
}

struct Span {
    start: Day,
    end: Day,
}

fn endpoints(rng: &mut ChaCha8Rng, span: &mut Span) -> (Vec<EndpointEvent>, bool) {
    let mut out = Vec::new();
    let mut ep = |kind, day| out.push(EndpointEvent { kind, day, ordinal: 0 });
    let start = span.start;
    ep(EndpointKind::BasicDisease, start);
    let dialysis = start + rng.random_range(100..700);
    ep(EndpointKind::FirstDialysis, dialysis);
    let mut tx = dialysis + rng.random_range(200..1500);
    let transplants = if rng.random_bool(0.3) { 2 } else { 1 };
    let mut last = tx;
    let mut died = false;
    for i in 0..transplants {
        ep(EndpointKind::Transplantation, tx);
        last = last.max(tx);
        if rng.random_bool(0.5) {
            let r = tx + rng.random_range(0..=30);
            ep(EndpointKind::Rejection, r);
            last = last.max(r);
        }
        let fails = i + 1 < transplants || rng.random_bool(0.3);
        if fails {
            let f = tx + rng.random_range(100..1500);
            ep(EndpointKind::Failure, f);
            last = last.max(f);
            tx = f + rng.random_range(150..900);
        }
    }
    if rng.random_bool(0.1) {
        let d = last + rng.random_range(30..900);
        ep(EndpointKind::Death, d);
        last = d;
        died = true;
    }
    assign_endpoint_ordinals(&mut out);
    span.end = span.end.max(last + if died { 0 } else { rng.random_range(30..400) });
    (out, died)
}

fn letter(rng: &mut ChaCha8Rng, rec: &PatientRecord, n: usize) -> String {
    let mut s = String::new();
    let dx = |rng: &mut ChaCha8Rng| -> Option<&str> {
        (!rec.diagnoses.is_empty()).then(|| rec.diagnoses[rng.random_range(0..rec.diagnoses.len())].term.as_str())
    };
    if let Some(d) = dx(rng) {
        s.push_str(&format!("Diagnosen: Bekannte {d}. "));
    }
    if let Some(t) = rec.endpoints_of(EndpointKind::Transplantation).next() {
        if let Ok(date) = date_from_day(t.day) {
            s.push_str(&format!("Z.n. Nierentransplantation am {}. ", date.format("%d.%m.%Y")));
        }
    }
    match rng.random_range(0..4) {
        0 => s.push_str("Kein Anhalt für Hypertonie. "),
        1 => s.push_str("Keine Hinweise auf Fieber oder Husten. "),
        2 => s.push_str("Eine Pneumonie wurde ausgeschlossen. "),
        _ => s.push_str("Patient berichtet über Husten, aber kein Fieber. "),
    }
    if !rec.medications.is_empty() {
        let m = &rec.medications[rng.random_range(0..rec.medications.len())];
        s.push_str(&format!("Medikation mit {} fortgeführt. ", m.term));
    }
    if rng.random_bool(0.3) {
        s.push_str("Röntgenbilder des Thorax zeigen keine Infiltrate. ");
    }
    if rng.random_bool(0.2) {
        s.push_str(&format!("Sonographie: Befund BIRADS {}. ", rng.random_range(1..=5)));
    }
    if let Some(d) = dx(rng) {
        s.push_str(&format!("Weiterhin {d} (Brief {n})."));
    } else {
        s.push_str(&format!("Kontrolle in drei Monaten (Brief {n})."));
    }
    s
}

/// Generates a cohort; equal configs always produce equal records.
pub fn generate(cfg: &DemoConfig) -> Vec<PatientRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.patients;
    let vocab = diagnosis_vocabulary(cfg.vocabulary.max(1));
    let zipf = zipf_table(vocab.len());
    let lab_zipf = zipf_table(LAB_TYPES.len());
    let dx_counts = split_total(&mut rng, cfg.diagnoses, n);
    let lab_counts = split_total(&mut rng, cfg.labs, n);
    let med_counts = split_total(&mut rng, cfg.medications, n);
    let exam_counts = split_total(&mut rng, cfg.examinations, n);
    let epoch_2000 = 36_524;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut rec = PatientRecord::new(format!("P{:05}", i + 1));
        rec.sex = if rng.random_bool(0.5) { Sex::F } else { Sex::M };
        let birth = epoch_2000 - rng.random_range(20 * 365..70 * 365);
        rec.birth_date = date_from_day(birth).ok();
        rec.blood_group = [BloodGroup::A, BloodGroup::B, BloodGroup::AB, BloodGroup::O][rng.random_range(0..4)];
        rec.height_cm = Some(round2(150.0 + rng.random_range(0..450) as f64 / 10.0));
        let mut span = Span {
            start: epoch_2000 + rng.random_range(0..3000),
            end: 0,
        };
        let (eps, died) = endpoints(&mut rng, &mut span);
        rec.endpoints = eps;
        rec.deceased = died;
        rec.last_contact = date_from_day(span.end).ok();
        let day_in = |rng: &mut ChaCha8Rng| rng.random_range(span.start..=span.end);

        let has_gn = rng.random_bool(0.3);
        for k in 0..dx_counts[i] {
            let (term, code) = if k == 0 && has_gn {
                (&vocab[1.min(vocab.len() - 1)].0, &vocab[1.min(vocab.len() - 1)].1)
            } else if k == 1 && has_gn {
                (&vocab[0].0, &vocab[0].1)
            } else {
                let v = &vocab[zipf_draw(&mut rng, &zipf)];
                (&v.0, &v.1)
            };
            let therapy = rng.random_bool(0.1);
            rec.diagnoses.push(DiagnosisEvent {
                term: term.clone(),
                icd10: Some(code.clone()),
                therapy_term: therapy.then(|| "Dialyse".to_string()),
                therapy_code: therapy.then(|| "8-854".to_string()),
                day: day_in(&mut rng),
                provenance: Provenance::Database,
            });
        }

        let events: Vec<(EndpointKind, Day)> = rec.endpoints.iter().map(|e| (e.kind, e.day)).collect();
        for _ in 0..lab_counts[i] {
            let day = day_in(&mut rng);
            if rng.random_ratio(1, 100) {
                let (term, values) = TEXT_LABS[rng.random_range(0..TEXT_LABS.len())];
                rec.labs.push(LabEvent::text(term, day, values[rng.random_range(0..values.len())]));
                continue;
            }
            let (term, typical, spread, rises) = LAB_TYPES[zipf_draw(&mut rng, &lab_zipf)];
            let mut v = typical + spread * noise(&mut rng);
            let near = |kind: EndpointKind, before: Day| {
                events.iter().any(|&(k, d)| k == kind && day <= d && d - day <= before)
            };
            if rises && (near(EndpointKind::Rejection, 5) || near(EndpointKind::Failure, 30)) {
                v *= 2.0 + rng.random::<f64>() * 2.0;
            }
            let v = round2(v.max(spread / 10.0));
            let mut lab = LabEvent::numeric(term, day, v);
            lab.classification = Some(classify(v, typical, spread));
            rec.labs.push(lab);
        }

        for _ in 0..med_counts[i] {
            let (term, code) = MEDICATIONS[rng.random_range(0..MEDICATIONS.len())];
            rec.medications.push(MedicationEvent {
                term: term.to_string(),
                code: Some(code.to_string()),
                day: day_in(&mut rng),
                provenance: Provenance::Database,
            });
        }

        for k in 0..exam_counts[i] {
            let method = ExamMethod::ALL[rng.random_range(0..5)];
            let day = day_in(&mut rng);
            let birads = (method == ExamMethod::Mammography)
                .then(|| BiradsClass::new(rng.random_range(0..=6), None).expect("valid category"));
            let finding_text_ref = cfg.exam_findings.then(|| format!("{}-E{}", rec.patient_id, k + 1));
            if let Some(id) = &finding_text_ref {
                rec.documents.push(TextDocument {
                    doc_id: id.clone(),
                    doc_type: DocType::Finding,
                    day: Some(day),
                    body: FINDING_TEXTS[rng.random_range(0..FINDING_TEXTS.len())].to_string(),
                    annotations: Vec::new(),
                });
            }
            rec.examinations.push(ExaminationEvent {
                method,
                day,
                physician: Some(PHYSICIANS[rng.random_range(0..PHYSICIANS.len())].to_string()),
                finding_text_ref,
                evaluation_text_ref: None,
                birads,
            });
        }

        let letters = if cfg.letters_per_patient == 0 {
            0
        } else {
            rng.random_range(1..=cfg.letters_per_patient)
        };
        for k in 0..letters {
            let body = letter(&mut rng, &rec, k + 1);
            let doc_type = [DocType::ClinicalReport, DocType::Visit, DocType::ProgressReport][rng.random_range(0..3)];
            rec.documents.push(TextDocument {
                doc_id: format!("{}-L{}", rec.patient_id, k + 1),
                doc_type,
                day: Some(day_in(&mut rng)),
                body,
                annotations: Vec::new(),
            });
        }
        rec.sort_children();
        out.push(rec);
    }
    debug_assert!(out.iter().all(|p| p.validate().is_ok()));
    out
}

/// Day of 2000-01-01, used as a lower bound for generated events.
pub fn demo_epoch() -> Day {
    days_since_epoch(chrono::NaiveDate::from_ymd_opt(2000, 1, 1).expect("valid date")).expect("in range")
}
