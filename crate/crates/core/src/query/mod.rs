//! Faceted cohort queries over a [`NestedIndex`].
//!
//! A query is an unordered set of [`Restriction`]s, each removable by id.
//! A patient matches when every restriction holds. Child predicates inside a
//! [`ChildGroup`] must all hold on the same child instance.

mod compare;
mod eval;
mod facets;
mod fulltext;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use compare::{compare_extraction_to_record, ComparedAnnotation, RecordStatus};
pub use eval::{evaluate, evaluate_with, matching_ordinals};
pub use facets::{
    facet_report, facet_report_with, numeric_interval_report, FacetOptions, FacetReport, FacetValue, IntervalCount,
    DEFAULT_MINCOUNT, DEFAULT_TOP_K,
};
pub use fulltext::{
    free_text_search, parse_expr, DocumentMatch, Expr, FreeTextResult, HighlightSpan, SyntaxError, TermPattern,
};

use crate::datamodel::EndpointKind;
use crate::index::{ChildKind, Level, Schema, SchemaError, ValueKind};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QueryError {
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error("invalid argument: {0}")]
    Argument(String),
}

/// Equality (one term) or any-of (several terms) on a keyword field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KeywordWire", into = "KeywordWire")]
pub struct KeywordPredicate {
    pub field: String,
    pub terms: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct KeywordWire {
    field: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    term: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    terms: Option<Vec<String>>,
}

impl TryFrom<KeywordWire> for KeywordPredicate {
    type Error = String;

    fn try_from(w: KeywordWire) -> Result<Self, Self::Error> {
        let terms = match (w.term, w.terms) {
            (Some(t), None) => vec![t],
            (None, Some(ts)) if !ts.is_empty() => ts,
            (None, Some(_)) => return Err(format!("field {:?}: `terms` must not be empty", w.field)),
            (None, None) => return Err(format!("field {:?}: expected `term` or `terms`", w.field)),
            (Some(_), Some(_)) => return Err(format!("field {:?}: give either `term` or `terms`", w.field)),
        };
        Ok(KeywordPredicate { field: w.field, terms })
    }
}

impl From<KeywordPredicate> for KeywordWire {
    fn from(k: KeywordPredicate) -> Self {
        let (term, terms) = if k.terms.len() == 1 {
            (k.terms.into_iter().next(), None)
        } else {
            (None, Some(k.terms))
        };
        KeywordWire {
            field: k.field,
            term,
            terms,
        }
    }
}

impl KeywordPredicate {
    pub fn equals(field: &str, term: &str) -> Self {
        KeywordPredicate {
            field: field.to_string(),
            terms: vec![term.to_string()],
        }
    }

    pub fn any_of<S: AsRef<str>>(field: &str, terms: &[S]) -> Self {
        KeywordPredicate {
            field: field.to_string(),
            terms: terms.iter().map(|t| t.as_ref().to_string()).collect(),
        }
    }
}

/// Inclusive numeric range; an absent bound is unbounded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangePredicate {
    pub field: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
}

impl RangePredicate {
    pub fn new(field: &str, lower: Option<f64>, upper: Option<f64>) -> Self {
        RangePredicate {
            field: field.to_string(),
            lower,
            upper,
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lower.is_none_or(|l| v >= l) && self.upper.is_none_or(|u| v <= u)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Predicate {
    Keyword(KeywordPredicate),
    Range(RangePredicate),
}

impl Predicate {
    pub fn field(&self) -> &str {
        match self {
            Predicate::Keyword(k) => &k.field,
            Predicate::Range(r) => &r.field,
        }
    }
}

/// Predicates that must all hold on one child of `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChildGroup {
    pub kind: ChildKind,
    pub predicates: Vec<Predicate>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrdinalRule {
    First,
    Any,
    Nth(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndpointSelector {
    pub kind: EndpointKind,
    pub ordinal: OrdinalRule,
}

impl EndpointSelector {
    pub fn first(kind: EndpointKind) -> Self {
        EndpointSelector {
            kind,
            ordinal: OrdinalRule::First,
        }
    }

    pub fn any(kind: EndpointKind) -> Self {
        EndpointSelector {
            kind,
            ordinal: OrdinalRule::Any,
        }
    }

    pub fn selects(&self, kind: EndpointKind, ordinal: u32) -> bool {
        kind == self.kind
            && match self.ordinal {
                OrdinalRule::First => ordinal == 1,
                OrdinalRule::Any => true,
                OrdinalRule::Nth(n) => ordinal == n,
            }
    }
}

/// Inclusive whole-day interval; an absent bound is unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct DayWindow {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<i32>,
}

impl DayWindow {
    pub fn new(lower: i32, upper: i32) -> Self {
        DayWindow {
            lower: Some(lower),
            upper: Some(upper),
        }
    }

    pub fn contains(&self, d: i32) -> bool {
        self.lower.is_none_or(|l| d >= l) && self.upper.is_none_or(|u| d <= u)
    }
}

/// A child group whose matching child lies within `window` days of an anchor
/// endpoint: `day(child) - day(anchor)` in `window`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalChild {
    pub group: ChildGroup,
    pub anchor: EndpointSelector,
    pub window: DayWindow,
}

/// Two endpoints with `day(a) - day(b)` in `window`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointRelation {
    pub a: EndpointSelector,
    pub b: EndpointSelector,
    pub window: DayWindow,
}

/// Boolean/wildcard expression over document tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FreeTextWire", into = "FreeTextWire")]
pub struct FreeText {
    pub source: String,
    pub field: String,
    pub expr: Expr,
}

pub const DEFAULT_TEXT_FIELD: &str = "document.body";

#[derive(Serialize, Deserialize)]
struct FreeTextWire {
    expr: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    field: Option<String>,
}

impl TryFrom<FreeTextWire> for FreeText {
    type Error = SyntaxError;

    fn try_from(w: FreeTextWire) -> Result<Self, Self::Error> {
        FreeText::parse(&w.expr).map(|mut f| {
            if let Some(field) = w.field {
                f.field = field;
            }
            f
        })
    }
}

impl From<FreeText> for FreeTextWire {
    fn from(f: FreeText) -> Self {
        FreeTextWire {
            expr: f.source,
            field: (f.field != DEFAULT_TEXT_FIELD).then_some(f.field),
        }
    }
}

impl FreeText {
    pub fn parse(source: &str) -> Result<Self, SyntaxError> {
        Ok(FreeText {
            source: source.to_string(),
            field: DEFAULT_TEXT_FIELD.to_string(),
            expr: parse_expr(source)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RestrictionBody {
    Keyword(KeywordPredicate),
    Range(RangePredicate),
    ChildGroup(ChildGroup),
    TemporalChild(TemporalChild),
    EndpointRelation(EndpointRelation),
    #[serde(rename = "fulltext")]
    FreeText(FreeText),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Restriction {
    pub id: String,
    #[serde(flatten)]
    pub body: RestrictionBody,
}

impl Restriction {
    pub fn new(id: impl Into<String>, body: RestrictionBody) -> Self {
        Restriction { id: id.into(), body }
    }

    /// Checks field names, value kinds and levels against `schema`.
    pub fn validate(&self, schema: &Schema) -> Result<(), QueryError> {
        match &self.body {
            RestrictionBody::Keyword(k) => validate_keyword(schema, k, None),
            RestrictionBody::Range(r) => validate_range(schema, r, None),
            RestrictionBody::ChildGroup(g) => validate_group(schema, g),
            RestrictionBody::TemporalChild(t) => {
                validate_group(schema, &t.group)?;
                validate_selector(&t.anchor)?;
                validate_window(&t.window)
            }
            RestrictionBody::EndpointRelation(e) => {
                validate_selector(&e.a)?;
                validate_selector(&e.b)?;
                validate_window(&e.window)
            }
            RestrictionBody::FreeText(f) => {
                let field = schema.field(&f.field)?;
                if field.value_kind != ValueKind::Fulltext {
                    return Err(SchemaError::WrongValueKind {
                        field: f.field.clone(),
                        expected: "fulltext",
                    }
                    .into());
                }
                Ok(())
            }
        }
    }
}

fn check_level(schema: &Schema, field: &str, kind: Option<ChildKind>) -> Result<(), QueryError> {
    if let Some(kind) = kind {
        if schema.field(field)?.level != Level::Child(kind) {
            return Err(SchemaError::WrongLevel {
                field: field.to_string(),
                kind,
            }
            .into());
        }
    }
    Ok(())
}

fn validate_keyword(schema: &Schema, k: &KeywordPredicate, kind: Option<ChildKind>) -> Result<(), QueryError> {
    if schema.field(&k.field)?.value_kind != ValueKind::Keyword {
        return Err(SchemaError::WrongValueKind {
            field: k.field.clone(),
            expected: "keyword",
        }
        .into());
    }
    if k.terms.is_empty() {
        return Err(QueryError::Argument(format!("no terms given for {:?}", k.field)));
    }
    check_level(schema, &k.field, kind)
}

fn validate_range(schema: &Schema, r: &RangePredicate, kind: Option<ChildKind>) -> Result<(), QueryError> {
    if !schema.field(&r.field)?.value_kind.is_numeric() {
        return Err(SchemaError::WrongValueKind {
            field: r.field.clone(),
            expected: "numeric",
        }
        .into());
    }
    if r.lower.is_some_and(f64::is_nan) || r.upper.is_some_and(f64::is_nan) {
        return Err(QueryError::Argument(format!("NaN bound on {:?}", r.field)));
    }
    check_level(schema, &r.field, kind)
}

fn validate_group(schema: &Schema, g: &ChildGroup) -> Result<(), QueryError> {
    for p in &g.predicates {
        match p {
            Predicate::Keyword(k) => validate_keyword(schema, k, Some(g.kind))?,
            Predicate::Range(r) => validate_range(schema, r, Some(g.kind))?,
        }
    }
    Ok(())
}

fn validate_selector(s: &EndpointSelector) -> Result<(), QueryError> {
    match s.ordinal {
        OrdinalRule::Nth(0) => Err(QueryError::Argument("nth(n) requires n >= 1".into())),
        _ => Ok(()),
    }
}

fn validate_window(w: &DayWindow) -> Result<(), QueryError> {
    match (w.lower, w.upper) {
        (Some(l), Some(u)) if l > u => Err(QueryError::Argument(format!("day window [{l}, {u}] is empty"))),
        _ => Ok(()),
    }
}

/// Removable restriction set owned by one caller.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct QueryState {
    restrictions: Vec<Restriction>,
}

impl QueryState {
    pub fn new() -> Self {
        QueryState::default()
    }

    pub fn from_restrictions(restrictions: Vec<Restriction>) -> Self {
        let mut s = QueryState::new();
        for r in restrictions {
            s.add(r);
        }
        s
    }

    /// Adds `r`, replacing any restriction with the same id.
    pub fn add(&mut self, r: Restriction) {
        match self.restrictions.iter_mut().find(|x| x.id == r.id) {
            Some(slot) => *slot = r,
            None => self.restrictions.push(r),
        }
    }

    pub fn remove(&mut self, id: &str) -> Option<Restriction> {
        let pos = self.restrictions.iter().position(|r| r.id == id)?;
        Some(self.restrictions.remove(pos))
    }

    pub fn restrictions(&self) -> &[Restriction] {
        &self.restrictions
    }

    pub fn is_empty(&self) -> bool {
        self.restrictions.is_empty()
    }
}

/// Matching patient ids, sorted and duplicate-free.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultSet {
    pub patient_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_at: Option<String>,
}

impl ResultSet {
    pub fn from_ids(mut ids: Vec<String>) -> Self {
        ids.sort();
        ids.dedup();
        ResultSet {
            patient_ids: ids,
            name: None,
            created_at: None,
        }
    }

    pub fn len(&self) -> usize {
        self.patient_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patient_ids.is_empty()
    }
}

impl fmt::Display for ResultSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for id in &self.patient_ids {
            writeln!(f, "{id}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn wire_forms() {
        let r: Restriction = serde_json::from_value(json!({
            "id": "r1", "type": "keyword", "field": "diagnosis.term", "term": "Hypertonie"
        }))
        .unwrap();
        assert_eq!(r.body, RestrictionBody::Keyword(KeywordPredicate::equals("diagnosis.term", "Hypertonie")));

        let r: Restriction = serde_json::from_value(json!({
            "id": "t", "type": "temporal_child",
            "group": {"kind": "lab", "predicates": [
                {"type": "keyword", "field": "lab.term_canon", "term": "crphp_mgl"},
                {"type": "range", "field": "lab.numeric_value", "lower": 6.0}
            ]},
            "anchor": {"kind": "failure", "ordinal": "any"},
            "window": {"lower": -30, "upper": 0}
        }))
        .unwrap();
        let RestrictionBody::TemporalChild(t) = &r.body else { panic!() };
        assert_eq!(t.window, DayWindow::new(-30, 0));
        assert_eq!(t.anchor.ordinal, OrdinalRule::Any);

        let r: Restriction = serde_json::from_value(json!({
            "id": "e", "type": "endpoint_relation",
            "a": {"kind": "rejection", "ordinal": "first"},
            "b": {"kind": "transplantation", "ordinal": {"nth": 2}},
            "window": {"lower": 0, "upper": 3}
        }))
        .unwrap();
        let back = serde_json::to_value(&r).unwrap();
        assert_eq!(back["b"]["ordinal"], json!({"nth": 2}));
        assert_eq!(serde_json::from_value::<Restriction>(back).unwrap(), r);

        let r: Restriction =
            serde_json::from_value(json!({"id": "f", "type": "fulltext", "expr": "anäm* AND NOT hypertonie"})).unwrap();
        assert_eq!(serde_json::to_value(&r).unwrap()["expr"], "anäm* AND NOT hypertonie");
    }

    #[test]
    fn wire_errors() {
        for bad in [
            json!({"id": "x", "type": "nope"}),
            json!({"id": "x", "type": "keyword", "field": "sex"}),
            json!({"id": "x", "type": "fulltext", "expr": "(a OR"}),
            json!({"type": "keyword", "field": "sex", "term": "F"}),
        ] {
            assert!(serde_json::from_value::<Restriction>(bad).is_err());
        }
    }

    #[test]
    fn validation() {
        let schema = Schema::default();
        let ok = Restriction::new("a", RestrictionBody::Keyword(KeywordPredicate::equals("sex", "F")));
        assert!(ok.validate(&schema).is_ok());
        let unknown = Restriction::new("a", RestrictionBody::Keyword(KeywordPredicate::equals("nope", "F")));
        assert!(matches!(unknown.validate(&schema), Err(QueryError::Schema(SchemaError::UnknownField(_)))));
        let wrong_level = Restriction::new(
            "g",
            RestrictionBody::ChildGroup(ChildGroup {
                kind: ChildKind::Lab,
                predicates: vec![Predicate::Keyword(KeywordPredicate::equals("diagnosis.term", "x"))],
            }),
        );
        assert!(wrong_level.validate(&schema).is_err());
        let nth0 = Restriction::new(
            "e",
            RestrictionBody::EndpointRelation(EndpointRelation {
                a: EndpointSelector { kind: EndpointKind::Rejection, ordinal: OrdinalRule::Nth(0) },
                b: EndpointSelector::first(EndpointKind::Transplantation),
                window: DayWindow::default(),
            }),
        );
        assert!(matches!(nth0.validate(&schema), Err(QueryError::Argument(_))));
    }

    #[test]
    fn state_add_remove() {
        let mut s = QueryState::new();
        s.add(Restriction::new("a", RestrictionBody::Keyword(KeywordPredicate::equals("sex", "F"))));
        s.add(Restriction::new("a", RestrictionBody::Keyword(KeywordPredicate::equals("sex", "M"))));
        assert_eq!(s.restrictions().len(), 1);
        assert!(s.remove("a").is_some());
        assert!(s.remove("a").is_none());
        assert!(s.is_empty());
    }
}
