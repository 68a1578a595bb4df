//! Boolean/wildcard free-text expressions over tokenized document bodies.
//!
//! ```text
//! expr := or
//! or   := and ("OR" and)*
//! and  := not ("AND"? not)*
//! not  := "NOT" atom | atom
//! atom := TOKEN | "(" expr ")"
//! ```
//!
//! Operators are uppercase keywords. A TOKEN is folded like indexed text and
//! split at non-alphanumeric chars into sub-terms that must all occur in the
//! document. `*` matches any run of chars inside a token, `?` exactly one.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Bound;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{evaluate_with, QueryError, Restriction, ResultSet};
use crate::datamodel::fold_case;
use crate::index::{ChildKind, FulltextColumn, Level, NestedIndex, Posting};
use crate::par::Execution;

#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[error("syntax error at position {position}: {message}")]
pub struct SyntaxError {
    /// Char offset into the expression.
    pub position: usize,
    pub message: String,
}

/// One sub-term of a word: a literal token or a glob pattern.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TermPattern {
    Exact(String),
    Glob(Vec<char>),
}

impl TermPattern {
    fn parse(folded: &str) -> Self {
        if folded.contains(['*', '?']) {
            TermPattern::Glob(folded.chars().collect())
        } else {
            TermPattern::Exact(folded.to_string())
        }
    }

    pub fn matches(&self, token: &str) -> bool {
        match self {
            TermPattern::Exact(t) => t == token,
            TermPattern::Glob(p) => glob_match(p, &token.chars().collect::<Vec<_>>()),
        }
    }

    /// Literal chars before the first wildcard.
    fn prefix(&self) -> String {
        match self {
            TermPattern::Exact(t) => t.clone(),
            TermPattern::Glob(p) => p.iter().take_while(|c| **c != '*' && **c != '?').collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    /// A query word; all parts must occur in the same document.
    Word { raw: String, parts: Vec<TermPattern> },
    And(Vec<Expr>),
    Or(Vec<Expr>),
    Not(Box<Expr>),
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |f: &mut fmt::Formatter<'_>, xs: &[Expr], op: &str| -> fmt::Result {
            write!(f, "(")?;
            for (i, x) in xs.iter().enumerate() {
                if i > 0 {
                    write!(f, " {op} ")?;
                }
                write!(f, "{x}")?;
            }
            write!(f, ")")
        };
        match self {
            Expr::Word { raw, .. } => write!(f, "{raw}"),
            Expr::And(xs) => join(f, xs, "AND"),
            Expr::Or(xs) => join(f, xs, "OR"),
            Expr::Not(x) => write!(f, "NOT {x}"),
        }
    }
}

/// Glob match with `*` (any run) and `?` (one char).
pub(crate) fn glob_match(p: &[char], t: &[char]) -> bool {
    let (mut pi, mut ti) = (0, 0);
    let mut star: Option<(usize, usize)> = None;
    while ti < t.len() {
        if pi < p.len() && (p[pi] == '?' || p[pi] == t[ti]) {
            pi += 1;
            ti += 1;
        } else if pi < p.len() && p[pi] == '*' {
            star = Some((pi, ti));
            pi += 1;
        } else if let Some((sp, st)) = star {
            pi = sp + 1;
            ti = st + 1;
            star = Some((sp, st + 1));
        } else {
            return false;
        }
    }
    p[pi..].iter().all(|&c| c == '*')
}

#[derive(Debug, Clone, PartialEq)]
enum Lexeme {
    Word(String),
    And,
    Or,
    Not,
    Open,
    Close,
}

fn lex(src: &str) -> Vec<(usize, Lexeme)> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c == '(' || c == ')' {
            out.push((i, if c == '(' { Lexeme::Open } else { Lexeme::Close }));
            i += 1;
        } else {
            let start = i;
            while i < chars.len() && !chars[i].is_whitespace() && chars[i] != '(' && chars[i] != ')' {
                i += 1;
            }
            let w: String = chars[start..i].iter().collect();
            let lx = match w.as_str() {
                "AND" => Lexeme::And,
                "OR" => Lexeme::Or,
                "NOT" => Lexeme::Not,
                _ => Lexeme::Word(w),
            };
            out.push((start, lx));
        }
    }
    out
}

struct Parser {
    toks: Vec<(usize, Lexeme)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Lexeme> {
        self.toks.get(self.pos).map(|(_, l)| l)
    }

    fn here(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |(p, _)| *p)
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, SyntaxError> {
        Err(SyntaxError {
            position: self.here(),
            message: message.into(),
        })
    }

    fn or(&mut self) -> Result<Expr, SyntaxError> {
        let mut xs = vec![self.and()?];
        while self.peek() == Some(&Lexeme::Or) {
            self.pos += 1;
            xs.push(self.and()?);
        }
        Ok(if xs.len() == 1 { xs.pop().unwrap() } else { Expr::Or(xs) })
    }

    fn and(&mut self) -> Result<Expr, SyntaxError> {
        let mut xs = vec![self.not()?];
        loop {
            match self.peek() {
                Some(Lexeme::And) => {
                    self.pos += 1;
                    xs.push(self.not()?);
                }
                Some(Lexeme::Word(_) | Lexeme::Not | Lexeme::Open) => xs.push(self.not()?),
                _ => break,
            }
        }
        Ok(if xs.len() == 1 { xs.pop().unwrap() } else { Expr::And(xs) })
    }

    fn not(&mut self) -> Result<Expr, SyntaxError> {
        if self.peek() == Some(&Lexeme::Not) {
            self.pos += 1;
            return Ok(Expr::Not(Box::new(self.atom()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr, SyntaxError> {
        match self.peek().cloned() {
            Some(Lexeme::Word(raw)) => {
                let parts: Vec<TermPattern> = fold_case(&raw)
                    .split(|c: char| !c.is_alphanumeric() && c != '*' && c != '?')
                    .filter(|p| !p.is_empty())
                    .map(TermPattern::parse)
                    .collect();
                if parts.is_empty() {
                    return self.err(format!("{raw:?} contains no searchable characters"));
                }
                self.pos += 1;
                Ok(Expr::Word { raw, parts })
            }
            Some(Lexeme::Open) => {
                self.pos += 1;
                let e = self.or()?;
                if self.peek() != Some(&Lexeme::Close) {
                    return self.err("expected ')'");
                }
                self.pos += 1;
                Ok(e)
            }
            Some(Lexeme::Close) => self.err("unexpected ')'"),
            Some(Lexeme::And) => self.err("unexpected AND"),
            Some(Lexeme::Or) => self.err("unexpected OR"),
            Some(Lexeme::Not) => self.err("NOT must be followed by a term or group"),
            None => self.err("unexpected end of expression"),
        }
    }
}

pub fn parse_expr(src: &str) -> Result<Expr, SyntaxError> {
    let mut p = Parser {
        toks: lex(src),
        pos: 0,
        end: src.chars().count(),
    };
    if p.toks.is_empty() {
        return p.err("empty expression");
    }
    let e = p.or()?;
    if p.pos < p.toks.len() {
        return p.err("unexpected ')'");
    }
    Ok(e)
}

/// Index keys matching `pat`, scanning only the literal-prefix range.
fn matching_keys<'c>(col: &'c FulltextColumn, pat: &TermPattern) -> Vec<&'c [Posting]> {
    if let TermPattern::Exact(t) = pat {
        return col.postings.get(t).map(|p| vec![p.as_slice()]).unwrap_or_default();
    }
    let prefix = pat.prefix();
    col.postings
        .range::<str, _>((Bound::Included(prefix.as_str()), Bound::Unbounded))
        .take_while(|(k, _)| k.starts_with(&prefix))
        .filter(|(k, _)| pat.matches(k))
        .map(|(_, p)| p.as_slice())
        .collect()
}

fn word_rows(col: &FulltextColumn, parts: &[TermPattern], n: usize) -> Vec<bool> {
    let mut acc = vec![true; n];
    for part in parts {
        let mut hit = vec![false; n];
        for postings in matching_keys(col, part) {
            for p in postings {
                hit[p.row as usize] = true;
            }
        }
        for (a, h) in acc.iter_mut().zip(hit) {
            *a &= h;
        }
    }
    acc
}

/// Rows of `col` satisfying `expr`.
pub(crate) fn eval_rows(col: &FulltextColumn, expr: &Expr) -> Vec<bool> {
    let n = col.spans.len();
    match expr {
        Expr::Word { parts, .. } => word_rows(col, parts, n),
        Expr::And(xs) => xs.iter().fold(vec![true; n], |mut acc, x| {
            for (a, r) in acc.iter_mut().zip(eval_rows(col, x)) {
                *a &= r;
            }
            acc
        }),
        Expr::Or(xs) => xs.iter().fold(vec![false; n], |mut acc, x| {
            for (a, r) in acc.iter_mut().zip(eval_rows(col, x)) {
                *a |= r;
            }
            acc
        }),
        Expr::Not(x) => eval_rows(col, x).into_iter().map(|b| !b).collect(),
    }
}

fn positive_words<'e>(expr: &'e Expr, negated: bool, out: &mut Vec<&'e [TermPattern]>) {
    match expr {
        Expr::Word { parts, .. } => {
            if !negated {
                out.push(parts);
            }
        }
        Expr::And(xs) | Expr::Or(xs) => xs.iter().for_each(|x| positive_words(x, negated, out)),
        Expr::Not(x) => positive_words(x, !negated, out),
    }
}

fn positions_in_row(postings: &[Posting], row: u32) -> &[u32] {
    match postings.binary_search_by_key(&row, |p| p.row) {
        Ok(i) => &postings[i].positions,
        Err(_) => &[],
    }
}

/// Token positions in `row` produced by positive words that fully occur there.
fn highlight_positions(col: &FulltextColumn, expr: &Expr, row: u32) -> Vec<u32> {
    let mut words = Vec::new();
    positive_words(expr, false, &mut words);
    let mut out = Vec::new();
    for parts in words {
        let mut found = Vec::new();
        let mut all = true;
        for part in parts {
            let before = found.len();
            for postings in matching_keys(col, part) {
                found.extend_from_slice(positions_in_row(postings, row));
            }
            all &= found.len() > before;
        }
        if all {
            out.extend(found);
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HighlightSpan {
    /// Char offset into the document body.
    pub begin: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentMatch {
    pub doc_id: String,
    pub patient_id: String,
    pub highlights: Vec<HighlightSpan>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreeTextResult {
    pub result: ResultSet,
    /// Matched documents ordered by (patient_id, doc_id).
    pub documents: Vec<DocumentMatch>,
}

impl FreeTextResult {
    /// Highlight spans keyed by matched doc id.
    pub fn match_map(&self) -> BTreeMap<&str, &[HighlightSpan]> {
        self.documents
            .iter()
            .map(|d| (d.doc_id.as_str(), d.highlights.as_slice()))
            .collect()
    }
}

/// Owner ordinal of a row at `level`.
pub(crate) fn row_owner(index: &NestedIndex, level: Level, row: usize) -> usize {
    match level {
        Level::Patient => row,
        Level::Child(kind) => index.table(kind).parent[row] as usize,
    }
}

fn row_name(index: &NestedIndex, level: Level, row: usize) -> String {
    match level {
        Level::Child(ChildKind::Document) => index.doc_id(row).to_string(),
        Level::Child(kind) => format!("{}:{}", kind, index.table(kind).slot[row]),
        Level::Patient => index.patient_id(row).to_string(),
    }
}

/// Patients within the current restrictions having at least one document
/// matching `expr` (in the default text field), with per-document highlights.
pub fn free_text_search(
    index: &NestedIndex,
    restrictions: &[Restriction],
    expr: &str,
) -> Result<FreeTextResult, QueryError> {
    let ft = super::FreeText::parse(expr)?;
    search_field(index, restrictions, &ft.field, &ft.expr, Execution::default())
}

pub(crate) fn search_field(
    index: &NestedIndex,
    restrictions: &[Restriction],
    field: &str,
    expr: &Expr,
    exec: Execution,
) -> Result<FreeTextResult, QueryError> {
    let level = index.schema().field(field)?.level;
    let Some(col) = index.fulltext_column(field)? else {
        return Ok(FreeTextResult {
            result: ResultSet::from_ids(Vec::new()),
            documents: Vec::new(),
        });
    };
    let base = evaluate_with(index, restrictions, exec)?;
    let allowed: std::collections::HashSet<usize> = base
        .patient_ids
        .iter()
        .filter_map(|id| index.patient_ordinal(id))
        .collect();
    let rows = eval_rows(col, expr);
    let mut documents = Vec::new();
    let mut ids = Vec::new();
    for (row, _) in rows.iter().enumerate().filter(|(_, m)| **m) {
        let owner = row_owner(index, level, row);
        if !allowed.contains(&owner) {
            continue;
        }
        let spans = &col.spans[row];
        let highlights = highlight_positions(col, expr, row as u32)
            .into_iter()
            .map(|p| {
                let (b, e) = spans[p as usize];
                HighlightSpan {
                    begin: b as usize,
                    end: e as usize,
                }
            })
            .collect();
        let pid = index.patient_id(owner).to_string();
        ids.push(pid.clone());
        documents.push(DocumentMatch {
            doc_id: row_name(index, level, row),
            patient_id: pid,
            highlights,
        });
    }
    documents.sort_by(|a, b| (&a.patient_id, &a.doc_id).cmp(&(&b.patient_id, &b.doc_id)));
    Ok(FreeTextResult {
        result: ResultSet::from_ids(ids),
        documents,
    })
}
