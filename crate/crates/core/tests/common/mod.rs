//! Linear-scan oracles over plain `PatientRecord`s and random restriction
//! generators, shared by the property and acceptance tests.
//!
//! Nothing here touches `NestedIndex`: every answer is recomputed from the
//! records directly.

#![allow(dead_code)]

pub mod golden;
pub mod timeline_oracle;

use std::collections::{BTreeMap, BTreeSet};

use cohort_core::datamodel::{normalize_term, EndpointKind, PatientRecord};
use cohort_core::index::ChildKind;
use cohort_core::query::{
    ChildGroup, DayWindow, EndpointRelation, EndpointSelector, Expr, FacetReport, FacetValue, FreeText,
    KeywordPredicate, OrdinalRule, Predicate, RangePredicate, Restriction, RestrictionBody, TemporalChild,
    TermPattern,
};
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use regex::Regex;

#[derive(Debug, Clone, PartialEq)]
pub enum OVal {
    S(String),
    N(f64),
}

pub struct OChild {
    pub day: Option<i32>,
    pub fields: BTreeMap<&'static str, OVal>,
}

fn put_s(m: &mut BTreeMap<&'static str, OVal>, k: &'static str, v: Option<&str>) {
    if let Some(v) = v {
        m.insert(k, OVal::S(v.to_string()));
    }
}

fn put_n(m: &mut BTreeMap<&'static str, OVal>, k: &'static str, v: Option<f64>) {
    if let Some(v) = v {
        m.insert(k, OVal::N(v));
    }
}

fn days_from_1900(d: chrono::NaiveDate) -> f64 {
    (d - chrono::NaiveDate::from_ymd_opt(1900, 1, 1).unwrap()).num_days() as f64
}

pub fn patient_fields(p: &PatientRecord) -> BTreeMap<&'static str, OVal> {
    let mut m = BTreeMap::new();
    put_s(&mut m, "patient_id", Some(&p.patient_id));
    let sex = serde_json::to_value(p.sex).unwrap();
    put_s(&mut m, "sex", sex.as_str());
    let bg = serde_json::to_value(p.blood_group).unwrap();
    put_s(&mut m, "blood_group", bg.as_str());
    put_s(&mut m, "deceased", Some(if p.deceased { "true" } else { "false" }));
    put_n(&mut m, "height_cm", p.height_cm);
    put_n(&mut m, "age", oracle_age(p).map(|a| a as f64));
    put_n(&mut m, "birth_day", p.birth_date.map(days_from_1900));
    put_n(&mut m, "last_contact_day", p.last_contact.map(days_from_1900));
    m
}

/// Whole years between birth and last contact (or the latest event).
pub fn oracle_age(p: &PatientRecord) -> Option<u32> {
    use chrono::Datelike;
    let birth = p.birth_date?;
    let at = match p.last_contact {
        Some(d) => d,
        None => {
            let mut days: Vec<i32> = p.diagnoses.iter().map(|d| d.day).collect();
            days.extend(p.labs.iter().map(|l| l.day));
            days.extend(p.medications.iter().map(|m| m.day));
            days.extend(p.examinations.iter().map(|e| e.day));
            days.extend(p.endpoints.iter().map(|e| e.day));
            days.extend(p.documents.iter().filter_map(|d| d.day));
            let max = *days.iter().max()?;
            chrono::NaiveDate::from_ymd_opt(1900, 1, 1).unwrap() + chrono::Days::new(max as u64)
        }
    };
    let mut years = at.year() - birth.year();
    if (at.month(), at.day()) < (birth.month(), birth.day()) {
        years -= 1;
    }
    (years >= 0).then_some(years as u32)
}

fn snake<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_value(v).unwrap().as_str().unwrap().to_string()
}

pub fn children(p: &PatientRecord, kind: ChildKind) -> Vec<OChild> {
    let mut out = Vec::new();
    match kind {
        ChildKind::Diagnosis => {
            for d in &p.diagnoses {
                let mut m = BTreeMap::new();
                put_s(&mut m, "diagnosis.term", Some(&d.term));
                put_s(&mut m, "diagnosis.icd10", d.icd10.as_deref());
                put_s(&mut m, "diagnosis.therapy_term", d.therapy_term.as_deref());
                put_s(&mut m, "diagnosis.therapy_code", d.therapy_code.as_deref());
                put_s(&mut m, "diagnosis.provenance", Some(&snake(&d.provenance)));
                put_n(&mut m, "diagnosis.day", Some(d.day as f64));
                out.push(OChild { day: Some(d.day), fields: m });
            }
        }
        ChildKind::Lab => {
            for l in &p.labs {
                let mut m = BTreeMap::new();
                put_s(&mut m, "lab.term", Some(&l.term));
                put_s(&mut m, "lab.term_canon", Some(&l.term_canon));
                put_n(&mut m, "lab.numeric_value", l.numeric_value);
                put_s(&mut m, "lab.text_value", l.text_value.as_deref());
                put_s(&mut m, "lab.classification", l.classification.map(|c| snake(&c)).as_deref());
                put_s(&mut m, "lab.provenance", Some(&snake(&l.provenance)));
                put_n(&mut m, "lab.day", Some(l.day as f64));
                out.push(OChild { day: Some(l.day), fields: m });
            }
        }
        ChildKind::Medication => {
            for x in &p.medications {
                let mut m = BTreeMap::new();
                put_s(&mut m, "medication.term", Some(&x.term));
                put_s(&mut m, "medication.code", x.code.as_deref());
                put_s(&mut m, "medication.provenance", Some(&snake(&x.provenance)));
                put_n(&mut m, "medication.day", Some(x.day as f64));
                out.push(OChild { day: Some(x.day), fields: m });
            }
        }
        ChildKind::Examination => {
            for e in &p.examinations {
                let mut m = BTreeMap::new();
                put_s(&mut m, "examination.method", Some(&snake(&e.method)));
                put_s(&mut m, "examination.physician", e.physician.as_deref());
                put_s(&mut m, "examination.birads", e.birads.map(|b| snake(&b)).as_deref());
                put_n(&mut m, "examination.day", Some(e.day as f64));
                out.push(OChild { day: Some(e.day), fields: m });
            }
        }
        ChildKind::Endpoint => {
            for e in &p.endpoints {
                let mut m = BTreeMap::new();
                put_s(&mut m, "endpoint.kind", Some(&snake(&e.kind)));
                put_n(&mut m, "endpoint.ordinal", Some(e.ordinal as f64));
                put_n(&mut m, "endpoint.day", Some(e.day as f64));
                out.push(OChild { day: Some(e.day), fields: m });
            }
        }
        ChildKind::Document => {
            for d in &p.documents {
                let mut m = BTreeMap::new();
                put_s(&mut m, "document.doc_id", Some(&d.doc_id));
                put_s(&mut m, "document.doc_type", Some(&snake(&d.doc_type)));
                put_n(&mut m, "document.day", d.day.map(|v| v as f64));
                out.push(OChild { day: d.day, fields: m });
            }
        }
    }
    out
}

fn kind_of_field(field: &str) -> Option<ChildKind> {
    let prefix = field.split_once('.')?.0;
    Some(match prefix {
        "diagnosis" => ChildKind::Diagnosis,
        "lab" => ChildKind::Lab,
        "medication" => ChildKind::Medication,
        "examination" => ChildKind::Examination,
        "endpoint" => ChildKind::Endpoint,
        "document" => ChildKind::Document,
        _ => return None,
    })
}

fn pred_holds(fields: &BTreeMap<&'static str, OVal>, p: &Predicate) -> bool {
    match p {
        Predicate::Keyword(k) => matches!(fields.get(k.field.as_str()), Some(OVal::S(s)) if k.terms.contains(s)),
        Predicate::Range(r) => match fields.get(r.field.as_str()) {
            Some(OVal::N(v)) => r.lower.is_none_or(|l| *v >= l) && r.upper.is_none_or(|u| *v <= u),
            _ => false,
        },
    }
}

fn group_days(p: &PatientRecord, g: &ChildGroup) -> Vec<Option<i32>> {
    children(p, g.kind)
        .into_iter()
        .filter(|c| g.predicates.iter().all(|pr| pred_holds(&c.fields, pr)))
        .map(|c| c.day)
        .collect()
}

fn selected_days(p: &PatientRecord, s: &EndpointSelector) -> Vec<i32> {
    p.endpoints
        .iter()
        .filter(|e| e.kind == s.kind)
        .filter(|e| match s.ordinal {
            OrdinalRule::First => e.ordinal == 1,
            OrdinalRule::Any => true,
            OrdinalRule::Nth(n) => e.ordinal == n,
        })
        .map(|e| e.day)
        .collect()
}

fn in_window(w: &DayWindow, d: i32) -> bool {
    w.lower.is_none_or(|l| d >= l) && w.upper.is_none_or(|u| d <= u)
}

/// Lowercase, umlaut-folded alphanumeric runs.
pub fn oracle_tokens(text: &str) -> Vec<(String, usize, usize)> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if !chars[i].is_alphanumeric() {
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len() && chars[i].is_alphanumeric() {
            i += 1;
        }
        let mut t = String::new();
        for c in chars[start..i].iter().flat_map(|c| c.to_lowercase()) {
            match c {
                'ä' => t.push_str("ae"),
                'ö' => t.push_str("oe"),
                'ü' => t.push_str("ue"),
                'ß' => t.push_str("ss"),
                c => t.push(c),
            }
        }
        out.push((t, start, i));
    }
    out
}

fn pattern_regex(p: &TermPattern) -> Regex {
    let src = match p {
        TermPattern::Exact(t) => regex::escape(t),
        TermPattern::Glob(cs) => cs
            .iter()
            .map(|&c| match c {
                '*' => ".*".to_string(),
                '?' => ".".to_string(),
                c => regex::escape(&c.to_string()),
            })
            .collect(),
    };
    Regex::new(&format!("^(?s:{src})$")).unwrap()
}

pub fn doc_matches(expr: &Expr, tokens: &[(String, usize, usize)]) -> bool {
    match expr {
        Expr::Word { parts, .. } => parts.iter().all(|p| {
            let re = pattern_regex(p);
            tokens.iter().any(|(t, _, _)| re.is_match(t))
        }),
        Expr::And(xs) => xs.iter().all(|x| doc_matches(x, tokens)),
        Expr::Or(xs) => xs.iter().any(|x| doc_matches(x, tokens)),
        Expr::Not(x) => !doc_matches(x, tokens),
    }
}

pub fn restriction_holds(p: &PatientRecord, r: &Restriction) -> bool {
    match &r.body {
        RestrictionBody::Keyword(k) => match kind_of_field(&k.field) {
            None => pred_holds(&patient_fields(p), &Predicate::Keyword(k.clone())),
            Some(kind) => children(p, kind)
                .iter()
                .any(|c| pred_holds(&c.fields, &Predicate::Keyword(k.clone()))),
        },
        RestrictionBody::Range(x) => match kind_of_field(&x.field) {
            None => pred_holds(&patient_fields(p), &Predicate::Range(x.clone())),
            Some(kind) => children(p, kind)
                .iter()
                .any(|c| pred_holds(&c.fields, &Predicate::Range(x.clone()))),
        },
        RestrictionBody::ChildGroup(g) => !group_days(p, g).is_empty(),
        RestrictionBody::TemporalChild(t) => {
            let anchors = selected_days(p, &t.anchor);
            group_days(p, &t.group)
                .into_iter()
                .flatten()
                .any(|c| anchors.iter().any(|&a| in_window(&t.window, c - a)))
        }
        RestrictionBody::EndpointRelation(e) => {
            let a = selected_days(p, &e.a);
            let b = selected_days(p, &e.b);
            a.iter().any(|&x| b.iter().any(|&y| in_window(&e.window, x - y)))
        }
        RestrictionBody::FreeText(f) => p
            .documents
            .iter()
            .any(|d| doc_matches(&f.expr, &oracle_tokens(&d.body))),
    }
}

pub fn oracle_evaluate(pats: &[PatientRecord], rs: &[Restriction]) -> Vec<String> {
    let mut ids: Vec<String> = pats
        .iter()
        .filter(|p| rs.iter().all(|r| restriction_holds(p, r)))
        .map(|p| p.patient_id.clone())
        .collect();
    ids.sort();
    ids
}

fn field_strings(p: &PatientRecord, field: &str) -> BTreeSet<String> {
    let vals: Vec<OVal> = match kind_of_field(field) {
        None => patient_fields(p).get(field).cloned().into_iter().collect(),
        Some(kind) => children(p, kind)
            .into_iter()
            .filter_map(|c| c.fields.get(field).cloned())
            .collect(),
    };
    vals.into_iter()
        .filter_map(|v| match v {
            OVal::S(s) => Some(s),
            OVal::N(_) => None,
        })
        .collect()
}

fn field_numbers(p: &PatientRecord, field: &str) -> Vec<f64> {
    let vals: Vec<OVal> = match kind_of_field(field) {
        None => patient_fields(p).get(field).cloned().into_iter().collect(),
        Some(kind) => children(p, kind)
            .into_iter()
            .filter_map(|c| c.fields.get(field).cloned())
            .collect(),
    };
    vals.into_iter()
        .filter_map(|v| match v {
            OVal::N(n) => Some(n),
            OVal::S(_) => None,
        })
        .collect()
}

pub fn oracle_facet(
    pats: &[PatientRecord],
    rs: &[Restriction],
    field: &str,
    top_k: usize,
    mincount: u32,
    substring: Option<&str>,
) -> FacetReport {
    let matched: Vec<&PatientRecord> = pats.iter().filter(|p| rs.iter().all(|r| restriction_holds(p, r))).collect();
    let total = matched.len() as u32;
    let mut counts: BTreeMap<(String, String), u32> = BTreeMap::new();
    for p in &matched {
        for v in field_strings(p, field) {
            *counts.entry((normalize_term(&v), v)).or_default() += 1;
        }
    }
    let needle = substring.map(normalize_term);
    let values: Vec<FacetValue> = counts
        .into_iter()
        .filter(|((n, _), _)| needle.as_ref().is_none_or(|s| n.contains(s.as_str())))
        .map(|((_, term), count)| FacetValue {
            term,
            count,
            common_to_all: count == total,
        })
        .collect();
    let menu = values.iter().filter(|v| v.count >= mincount).cloned().collect();
    let mut top = values.clone();
    // insertion-sort style: pick the max count repeatedly, first occurrence wins
    let mut picked = Vec::new();
    while picked.len() < top_k && !top.is_empty() {
        let best = top.iter().map(|v| v.count).max().unwrap();
        let i = top.iter().position(|v| v.count == best).unwrap();
        picked.push(top.remove(i));
    }
    FacetReport {
        field: field.to_string(),
        total_remaining_patients: total,
        values,
        menu,
        top: picked,
        shown_top_k: top_k,
        mincount,
    }
}

pub fn oracle_intervals(pats: &[PatientRecord], rs: &[Restriction], field: &str, edges: &[f64]) -> Vec<u32> {
    let matched: Vec<&PatientRecord> = pats.iter().filter(|p| rs.iter().all(|r| restriction_holds(p, r))).collect();
    (0..edges.len() - 1)
        .map(|b| {
            matched
                .iter()
                .filter(|p| field_numbers(p, field).iter().any(|&v| v >= edges[b] && v < edges[b + 1]))
                .count() as u32
        })
        .collect()
}

/// `(doc_id, patient_id, highlighted char spans)`.
pub type DocHit = (String, String, Vec<(usize, usize)>);

/// Per-document oracle.
pub fn oracle_free_text(
    pats: &[PatientRecord],
    rs: &[Restriction],
    expr: &Expr,
) -> Vec<DocHit> {
    let mut out = Vec::new();
    for p in pats.iter().filter(|p| rs.iter().all(|r| restriction_holds(p, r))) {
        for d in &p.documents {
            let toks = oracle_tokens(&d.body);
            if doc_matches(expr, &toks) {
                out.push((d.doc_id.clone(), p.patient_id.clone(), positive_spans(expr, &toks)));
            }
        }
    }
    out.sort_by(|a, b| (&a.1, &a.0).cmp(&(&b.1, &b.0)));
    out
}

fn positive_spans(expr: &Expr, toks: &[(String, usize, usize)]) -> Vec<(usize, usize)> {
    fn walk<'e>(e: &'e Expr, neg: bool, out: &mut Vec<&'e [TermPattern]>) {
        match e {
            Expr::Word { parts, .. } => {
                if !neg {
                    out.push(parts)
                }
            }
            Expr::And(xs) | Expr::Or(xs) => xs.iter().for_each(|x| walk(x, neg, out)),
            Expr::Not(x) => walk(x, !neg, out),
        }
    }
    let mut words = Vec::new();
    walk(expr, false, &mut words);
    let mut spans = BTreeSet::new();
    for parts in words {
        let res: Vec<Regex> = parts.iter().map(pattern_regex).collect();
        let hits: Vec<Vec<(usize, usize)>> = res
            .iter()
            .map(|re| toks.iter().filter(|t| re.is_match(&t.0)).map(|t| (t.1, t.2)).collect())
            .collect();
        if hits.iter().all(|h| !h.is_empty()) {
            spans.extend(hits.into_iter().flatten());
        }
    }
    spans.into_iter().collect()
}

// ---------------------------------------------------------------------------
// Random restrictions drawn from values present in a cohort.

pub struct Vocab {
    pub dx_terms: Vec<String>,
    pub lab_canon: Vec<String>,
    pub med_terms: Vec<String>,
    pub words: Vec<String>,
}

impl Vocab {
    pub fn of(pats: &[PatientRecord]) -> Self {
        let mut dx = BTreeSet::new();
        let mut lab = BTreeSet::new();
        let mut med = BTreeSet::new();
        let mut words = BTreeSet::new();
        for p in pats {
            dx.extend(p.diagnoses.iter().map(|d| d.term.clone()));
            lab.extend(p.labs.iter().map(|l| l.term_canon.clone()));
            med.extend(p.medications.iter().map(|m| m.term.clone()));
            for d in &p.documents {
                words.extend(oracle_tokens(&d.body).into_iter().map(|t| t.0).filter(|t| t.len() > 3));
            }
        }
        let v = |s: BTreeSet<String>| -> Vec<String> {
            let mut v: Vec<String> = s.into_iter().collect();
            if v.is_empty() {
                v.push("none".into());
            }
            v
        };
        Vocab {
            dx_terms: v(dx),
            lab_canon: v(lab),
            med_terms: v(med),
            words: v(words),
        }
    }
}

fn pick<'a>(rng: &mut ChaCha8Rng, xs: &'a [String]) -> &'a str {
    xs.choose(rng).unwrap()
}

fn selector(rng: &mut ChaCha8Rng) -> EndpointSelector {
    let kinds = [
        EndpointKind::Transplantation,
        EndpointKind::Rejection,
        EndpointKind::Failure,
        EndpointKind::FirstDialysis,
        EndpointKind::Death,
    ];
    let ordinal = match rng.random_range(0..3) {
        0 => OrdinalRule::First,
        1 => OrdinalRule::Any,
        _ => OrdinalRule::Nth(rng.random_range(1..=2)),
    };
    EndpointSelector {
        kind: *kinds.choose(rng).unwrap(),
        ordinal,
    }
}

fn window(rng: &mut ChaCha8Rng, span: i32) -> DayWindow {
    let a = rng.random_range(-span..=span);
    let b = a + rng.random_range(0..=span);
    DayWindow {
        lower: rng.random_bool(0.85).then_some(a),
        upper: rng.random_bool(0.85).then_some(b),
    }
}

fn lab_group(rng: &mut ChaCha8Rng, v: &Vocab) -> ChildGroup {
    let mut predicates = vec![Predicate::Keyword(KeywordPredicate::equals("lab.term_canon", pick(rng, &v.lab_canon)))];
    if rng.random_bool(0.8) {
        let lo = rng.random_range(0..60) as f64 / 4.0;
        predicates.push(Predicate::Range(RangePredicate::new(
            "lab.numeric_value",
            Some(lo),
            rng.random_bool(0.4).then_some(lo + rng.random_range(1..200) as f64),
        )));
    }
    ChildGroup {
        kind: ChildKind::Lab,
        predicates,
    }
}

fn text_expr(rng: &mut ChaCha8Rng, v: &Vocab, depth: u32) -> String {
    let word = |rng: &mut ChaCha8Rng| {
        let w = pick(rng, &v.words).to_string();
        match rng.random_range(0..5) {
            0 if w.chars().count() > 4 => format!("{}*", w.chars().take(4).collect::<String>()),
            1 if w.chars().count() > 2 => {
                let mut cs: Vec<char> = w.chars().collect();
                cs[1] = '?';
                cs.into_iter().collect()
            }
            _ => w,
        }
    };
    if depth == 0 || rng.random_bool(0.4) {
        return word(rng);
    }
    let a = text_expr(rng, v, depth - 1);
    let b = text_expr(rng, v, depth - 1);
    match rng.random_range(0..4) {
        0 => format!("{a} AND {b}"),
        1 => format!("({a} OR {b})"),
        2 => format!("{a} AND NOT {}", word(rng)),
        _ => format!("{a} {b}"),
    }
}

pub fn random_restriction(rng: &mut ChaCha8Rng, v: &Vocab, id: usize) -> Restriction {
    let id = format!("r{id}");
    let body = match rng.random_range(0..10) {
        0 => RestrictionBody::Keyword(KeywordPredicate::equals("sex", ["F", "M"].choose(rng).unwrap())),
        1 => RestrictionBody::Range(RangePredicate::new(
            "age",
            Some(rng.random_range(20..60) as f64),
            Some(rng.random_range(60..100) as f64),
        )),
        2 => {
            let n = rng.random_range(1..=3);
            let terms: Vec<&str> = (0..n).map(|_| pick(rng, &v.dx_terms)).collect();
            RestrictionBody::Keyword(KeywordPredicate::any_of("diagnosis.term", &terms))
        }
        3 => RestrictionBody::Keyword(KeywordPredicate::equals("medication.term", pick(rng, &v.med_terms))),
        4 => RestrictionBody::ChildGroup(lab_group(rng, v)),
        5 | 6 => RestrictionBody::TemporalChild(TemporalChild {
            group: lab_group(rng, v),
            anchor: selector(rng),
            window: window(rng, 60),
        }),
        7 => RestrictionBody::EndpointRelation(EndpointRelation {
            a: selector(rng),
            b: selector(rng),
            window: window(rng, 400),
        }),
        8 => RestrictionBody::FreeText(FreeText::parse(&text_expr(rng, v, 2)).unwrap()),
        _ => RestrictionBody::Keyword(KeywordPredicate::equals(
            "deceased",
            ["true", "false"].choose(rng).unwrap(),
        )),
    };
    Restriction::new(id, body)
}

pub fn random_restrictions(rng: &mut ChaCha8Rng, v: &Vocab, max: usize) -> Vec<Restriction> {
    let n = rng.random_range(0..=max);
    (0..n).map(|i| random_restriction(rng, v, i)).collect()
}
