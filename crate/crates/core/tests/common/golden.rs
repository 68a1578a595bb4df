//! Hand-labelled extraction goldens rendered to the exact annotation JSON.
//!
//! Offsets come from locating each labelled surface in the sentence; codes
//! come from the labels or, failing that, from the dictionary TSV files.

use std::collections::HashMap;

use serde::Deserialize;

#[derive(Deserialize)]
pub struct Golden {
    pub cases: Vec<Case>,
}

#[derive(Deserialize)]
pub struct Case {
    pub text: String,
    pub expect: Vec<Expected>,
}

#[derive(Deserialize)]
pub struct Expected {
    #[serde(rename = "type")]
    pub ty: String,
    pub surface: String,
    pub canonical: String,
    #[serde(default)]
    pub code: Option<String>,
    #[serde(default)]
    pub negated: bool,
    #[serde(default)]
    pub trigger: Option<String>,
    /// Which occurrence of `surface` is meant, 0-based.
    #[serde(default)]
    pub nth: usize,
}

pub fn load() -> Golden {
    serde_json::from_str(include_str!("../golden/extraction.json")).unwrap()
}

/// Char offsets of the `nth` occurrence of `needle` in `text`.
pub fn char_span(text: &str, needle: &str, nth: usize) -> (usize, usize) {
    let byte = text
        .match_indices(needle)
        .nth(nth)
        .unwrap_or_else(|| panic!("{needle:?} not in {text:?}"))
        .0;
    let begin = text[..byte].chars().count();
    (begin, begin + needle.chars().count())
}

/// `(type, term) -> code` read from the bundled TSV dictionaries.
pub fn dictionary_codes() -> HashMap<(String, String), String> {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/data/dict/system");
    let mut out = HashMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let ty = path.file_stem().unwrap().to_string_lossy().to_string();
        for line in std::fs::read_to_string(&path).unwrap().lines() {
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            let mut cols = line.split('\t');
            let term = cols.next().unwrap().trim().to_string();
            if let Some(code) = cols.next().map(str::trim).filter(|c| !c.is_empty()) {
                out.insert((ty.clone(), term), code.to_string());
            }
        }
    }
    out
}

const TYPE_ORDER: [&str; 9] = [
    "diagnosis",
    "disorder",
    "examination",
    "procedure",
    "medication",
    "drug",
    "lab_value",
    "birads",
    "exam_method",
];

/// The JSON array `annotate` must produce for `case`, built by hand.
pub fn expected_json(case: &Case, codes: &HashMap<(String, String), String>) -> String {
    let js = |s: &str| serde_json::to_string(s).unwrap();
    let mut rows: Vec<(usize, usize, usize, String)> = case
        .expect
        .iter()
        .map(|e| {
            let (b, end) = char_span(&case.text, &e.surface, e.nth);
            let rule = e.ty == "birads";
            let code = e
                .code
                .clone()
                .or_else(|| codes.get(&(e.ty.clone(), e.canonical.clone())).cloned());
            let obj = format!(
                "{{\"annotation_type\":{},\"begin\":{b},\"end\":{end},\"surface\":{},\"canonical_term\":{},\
                 \"code\":{},\"negated\":{},\"negation_trigger\":{},\"provenance\":{},\"confidence\":1.0}}",
                js(&e.ty),
                js(&e.surface),
                js(&e.canonical),
                code.as_deref().map_or("null".to_string(), js),
                e.negated,
                e.trigger.as_deref().map_or("null".to_string(), js),
                js(if rule { "rule" } else { "system_dictionary" }),
            );
            let ty = TYPE_ORDER.iter().position(|t| *t == e.ty).unwrap();
            (b, end, ty, obj)
        })
        .collect();
    rows.sort();
    format!("[{}]", rows.into_iter().map(|r| r.3).collect::<Vec<_>>().join(","))
}
