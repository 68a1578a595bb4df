//! Annotation pipeline: dictionary longest-match, regex rules and negation.
//!
//! A [`PipelineConfig`] is an immutable value. Extending the user dictionary
//! produces a new config with a higher version; [`ConfigHandle`] swaps the
//! active config atomically so concurrent callers see either version whole.

mod dictionary;
mod feedback;
mod negation;
mod rules;

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::{Arc, RwLock};

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dictionary::{load_dictionary_dir, Dictionary, DictionaryEntry, Tier};
pub use feedback::{read_feedback_log, FeedbackEntry, FeedbackLog, Verdict};
pub use negation::{default_triggers, negation_scope, NegationTrigger, ScopeDirection, DEFAULT_WINDOW, SCOPE_BREAKERS};
pub use rules::{parse_rules, Canonicalizer, RuleSpec, BIRADS_PATTERN};

use crate::datamodel::normalize_term;
use crate::text::{char_slice, tokenize_sentences, Token};
use dictionary::TokenTrie;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExtractError {
    #[error("unknown annotation type {0:?}")]
    UnknownType(String),
    #[error("rule {name:?} does not compile: {message}")]
    Rule { name: String, message: String },
    #[error("rules file line {line}: {message}")]
    RulesFile { line: usize, message: String },
    #[error("{0}: {1}")]
    Io(String, String),
    #[error("empty dictionary term")]
    EmptyTerm,
    #[error("{annotation_type} term {term:?} already in the user dictionary")]
    Duplicate { annotation_type: AnnotationType, term: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationType {
    Diagnosis,
    Disorder,
    Examination,
    Procedure,
    Medication,
    Drug,
    LabValue,
    Birads,
    ExamMethod,
}

impl AnnotationType {
    pub const ALL: [AnnotationType; 9] = [
        AnnotationType::Diagnosis,
        AnnotationType::Disorder,
        AnnotationType::Examination,
        AnnotationType::Procedure,
        AnnotationType::Medication,
        AnnotationType::Drug,
        AnnotationType::LabValue,
        AnnotationType::Birads,
        AnnotationType::ExamMethod,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AnnotationType::Diagnosis => "diagnosis",
            AnnotationType::Disorder => "disorder",
            AnnotationType::Examination => "examination",
            AnnotationType::Procedure => "procedure",
            AnnotationType::Medication => "medication",
            AnnotationType::Drug => "drug",
            AnnotationType::LabValue => "lab_value",
            AnnotationType::Birads => "birads",
            AnnotationType::ExamMethod => "exam_method",
        }
    }
}

impl fmt::Display for AnnotationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AnnotationType {
    type Err = ExtractError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AnnotationType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| ExtractError::UnknownType(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationProvenance {
    SystemDictionary,
    UserDictionary,
    Rule,
}

/// A typed text span. `begin`/`end` are char (Unicode scalar) offsets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub annotation_type: AnnotationType,
    pub begin: usize,
    pub end: usize,
    pub surface: String,
    pub canonical_term: String,
    #[serde(default)]
    pub code: Option<String>,
    pub negated: bool,
    #[serde(default)]
    pub negation_trigger: Option<String>,
    pub provenance: AnnotationProvenance,
    pub confidence: f64,
}

impl Annotation {
    /// Identifier that is unique within one annotate response.
    pub fn id(&self) -> String {
        format!("{}:{}-{}", self.annotation_type, self.begin, self.end)
    }
}

struct Compiled {
    trie: TokenTrie,
    rules: Vec<Regex>,
    triggers: Vec<Vec<String>>,
}

impl fmt::Debug for Compiled {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Compiled").finish_non_exhaustive()
    }
}

/// Dictionaries, rules and negation triggers, compiled once.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    dictionaries: Vec<Dictionary>,
    rules: Vec<RuleSpec>,
    triggers: Vec<NegationTrigger>,
    version: u64,
    compiled: Arc<Compiled>,
}

const BUILTIN_DICTIONARIES: &[(AnnotationType, &str)] = &[
    (AnnotationType::Diagnosis, include_str!("../../data/dict/system/diagnosis.tsv")),
    (AnnotationType::Medication, include_str!("../../data/dict/system/medication.tsv")),
    (AnnotationType::LabValue, include_str!("../../data/dict/system/lab_value.tsv")),
    (AnnotationType::ExamMethod, include_str!("../../data/dict/system/exam_method.tsv")),
    (AnnotationType::Procedure, include_str!("../../data/dict/system/procedure.tsv")),
];

impl PipelineConfig {
    pub fn new(
        dictionaries: Vec<Dictionary>,
        rules: Vec<RuleSpec>,
        triggers: Vec<NegationTrigger>,
        version: u64,
    ) -> Result<Self, ExtractError> {
        let compiled = Compiled {
            trie: TokenTrie::build(&dictionaries),
            rules: rules.iter().map(RuleSpec::compile).collect::<Result<_, _>>()?,
            triggers: negation::compile_triggers(&triggers),
        };
        Ok(PipelineConfig {
            dictionaries,
            rules,
            triggers,
            version,
            compiled: Arc::new(compiled),
        })
    }

    /// The bundled German seed lexicon, the BIRADS rule and default triggers.
    pub fn builtin() -> Self {
        let dictionaries = BUILTIN_DICTIONARIES
            .iter()
            .map(|(ty, tsv)| Dictionary::parse_tsv(*ty, Tier::System, tsv))
            .collect();
        PipelineConfig::new(dictionaries, vec![RuleSpec::birads()], default_triggers(), 1)
            .expect("builtin pipeline compiles")
    }

    /// Loads `<dir>/system/*.tsv` and, if present, `<dir>/user/*.tsv`.
    pub fn load(dict_dir: &Path, rules_file: Option<&Path>) -> Result<Self, ExtractError> {
        let mut dictionaries = load_dictionary_dir(&dict_dir.join("system"), Tier::System)?;
        let user = dict_dir.join("user");
        if user.is_dir() {
            dictionaries.extend(load_dictionary_dir(&user, Tier::User)?);
        }
        let rules = match rules_file {
            Some(p) => {
                let content = std::fs::read_to_string(p)
                    .map_err(|e| ExtractError::Io(p.display().to_string(), e.to_string()))?;
                parse_rules(&content)?
            }
            None => vec![RuleSpec::birads()],
        };
        PipelineConfig::new(dictionaries, rules, default_triggers(), 1)
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn dictionaries(&self) -> &[Dictionary] {
        &self.dictionaries
    }

    pub fn rules(&self) -> &[RuleSpec] {
        &self.rules
    }

    pub fn triggers(&self) -> &[NegationTrigger] {
        &self.triggers
    }

    pub fn with_triggers(&self, triggers: Vec<NegationTrigger>) -> Self {
        PipelineConfig::new(self.dictionaries.clone(), self.rules.clone(), triggers, self.version + 1)
            .expect("rules already compiled once")
    }

    /// Returns a new config with `term` appended to the user tier.
    pub fn add_user_entry(
        &self,
        annotation_type: AnnotationType,
        term: &str,
        code: Option<&str>,
        definition: Option<&str>,
    ) -> Result<Self, ExtractError> {
        if normalize_term(term).is_empty() {
            return Err(ExtractError::EmptyTerm);
        }
        let duplicate = self
            .dictionaries
            .iter()
            .filter(|d| d.tier == Tier::User && d.annotation_type == annotation_type)
            .any(|d| d.contains_normalized(term));
        if duplicate {
            return Err(ExtractError::Duplicate {
                annotation_type,
                term: term.to_string(),
            });
        }
        let entry = DictionaryEntry {
            term: term.trim().to_string(),
            code: code.map(str::to_string),
            definition: definition.map(str::to_string),
        };
        let mut dictionaries = self.dictionaries.clone();
        match dictionaries
            .iter_mut()
            .find(|d| d.tier == Tier::User && d.annotation_type == annotation_type)
        {
            Some(d) => d.entries.push(entry),
            None => {
                let mut d = Dictionary::new(annotation_type, Tier::User);
                d.entries.push(entry);
                dictionaries.push(d);
            }
        }
        PipelineConfig::new(dictionaries, self.rules.clone(), self.triggers.clone(), self.version + 1)
    }

    /// User-tier dictionary for one type, if any entries exist.
    pub fn user_dictionary(&self, annotation_type: AnnotationType) -> Option<&Dictionary> {
        self.dictionaries
            .iter()
            .find(|d| d.tier == Tier::User && d.annotation_type == annotation_type)
    }
}

/// Annotates `text`; the output is sorted by `begin` and fully deterministic.
pub fn annotate(text: &str, config: &PipelineConfig) -> Vec<Annotation> {
    if text.is_empty() {
        return Vec::new();
    }
    let tokens = tokenize_sentences(text);
    let mut out = dictionary_pass(text, &tokens, config);
    out.extend(rule_pass(text, config));
    negation_pass(text, &tokens, config, &mut out);
    out.sort_by(|a, b| {
        (a.begin, a.end, a.annotation_type, &a.canonical_term)
            .cmp(&(b.begin, b.end, b.annotation_type, &b.canonical_term))
    });
    out
}

fn dictionary_pass(text: &str, tokens: &[Token], config: &PipelineConfig) -> Vec<Annotation> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let Some((r, last)) = config.compiled.trie.longest_match(tokens, i) else {
            i += 1;
            continue;
        };
        let dict = &config.dictionaries[r.dict];
        let entry = &dict.entries[r.entry];
        let (begin, end) = (tokens[i].begin, tokens[last].end);
        out.push(Annotation {
            annotation_type: dict.annotation_type,
            begin,
            end,
            surface: char_slice(text, begin, end),
            canonical_term: entry.term.clone(),
            code: entry.code.clone(),
            negated: false,
            negation_trigger: None,
            provenance: match dict.tier {
                Tier::System => AnnotationProvenance::SystemDictionary,
                Tier::User => AnnotationProvenance::UserDictionary,
            },
            confidence: 1.0,
        });
        i = last + 1;
    }
    out
}

fn rule_pass(text: &str, config: &PipelineConfig) -> Vec<Annotation> {
    let mut char_at_byte = vec![0usize; text.len() + 1];
    let mut n = 0;
    for (b, _) in text.char_indices() {
        char_at_byte[b] = n;
        n += 1;
    }
    char_at_byte[text.len()] = n;

    let mut out = Vec::new();
    for (spec, re) in config.rules.iter().zip(&config.compiled.rules) {
        for caps in re.captures_iter(text) {
            let m = caps.get(0).expect("group 0");
            if m.is_empty() {
                continue;
            }
            out.push(Annotation {
                annotation_type: spec.annotation_type,
                begin: char_at_byte[m.start()],
                end: char_at_byte[m.end()],
                surface: m.as_str().to_string(),
                canonical_term: spec.canonical(&caps),
                code: None,
                negated: false,
                negation_trigger: None,
                provenance: AnnotationProvenance::Rule,
                confidence: 1.0,
            });
        }
    }
    out
}

fn negation_pass(text: &str, tokens: &[Token], config: &PipelineConfig, anns: &mut [Annotation]) {
    let hits = negation::find_triggers(tokens, &config.triggers, &config.compiled.triggers);
    if hits.is_empty() {
        return;
    }
    for ann in anns.iter_mut() {
        let first = tokens.iter().position(|t| t.end > ann.begin && t.begin < ann.end);
        let Some(first) = first else { continue };
        let last = tokens
            .iter()
            .rposition(|t| t.end > ann.begin && t.begin < ann.end)
            .unwrap_or(first);
        let span = first..last + 1;
        let overlaps = |r: &std::ops::Range<usize>| r.start < span.end && span.start < r.end;
        let best = hits
            .iter()
            .filter(|h| overlaps(&h.scope) && !overlaps(&h.tokens))
            .min_by_key(|h| {
                let dist = if h.tokens.end <= span.start {
                    span.start - h.tokens.end
                } else {
                    h.tokens.start - span.end
                };
                (dist, h.tokens.start)
            });
        if let Some(h) = best {
            let (b, e) = (tokens[h.tokens.start].begin, tokens[h.tokens.end - 1].end);
            ann.negated = true;
            ann.negation_trigger = Some(char_slice(text, b, e));
        }
    }
}

/// Shared, atomically replaceable active configuration.
#[derive(Debug)]
pub struct ConfigHandle {
    current: RwLock<Arc<PipelineConfig>>,
}

impl ConfigHandle {
    pub fn new(config: PipelineConfig) -> Self {
        ConfigHandle {
            current: RwLock::new(Arc::new(config)),
        }
    }

    pub fn current(&self) -> Arc<PipelineConfig> {
        self.current.read().expect("config lock poisoned").clone()
    }

    /// Adds a user entry and swaps in the resulting config.
    pub fn add_user_entry(
        &self,
        annotation_type: AnnotationType,
        term: &str,
        code: Option<&str>,
        definition: Option<&str>,
    ) -> Result<Arc<PipelineConfig>, ExtractError> {
        let mut guard = self.current.write().expect("config lock poisoned");
        let next = Arc::new(guard.add_user_entry(annotation_type, term, code, definition)?);
        *guard = next.clone();
        Ok(next)
    }

    pub fn replace(&self, config: PipelineConfig) {
        *self.current.write().expect("config lock poisoned") = Arc::new(config);
    }
}
