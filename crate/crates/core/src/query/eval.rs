//! Restriction evaluation: compile once against the index, then test each
//! patient block independently.

use super::fulltext::{eval_rows, row_owner};
use super::{
    ChildGroup, DayWindow, EndpointSelector, Predicate, QueryError, RangePredicate, Restriction, RestrictionBody,
    ResultSet,
};
use crate::index::{ChildKind, KeywordColumn, Level, NestedIndex};
use crate::par::{filter_indices, Execution};

enum ChildPred<'a> {
    Keyword { values: &'a [Option<u32>], ids: Vec<u32> },
    Range { values: &'a [Option<f64>], range: RangePredicate },
}

impl ChildPred<'_> {
    fn holds(&self, row: usize) -> bool {
        match self {
            ChildPred::Keyword { values, ids } => values[row].is_some_and(|v| ids.binary_search(&v).is_ok()),
            ChildPred::Range { values, range } => values[row].is_some_and(|v| range.contains(v)),
        }
    }
}

struct Group<'a> {
    kind: ChildKind,
    preds: Vec<ChildPred<'a>>,
}

enum Compiled<'a> {
    Never,
    PatientKeyword { values: &'a [Option<u32>], ids: Vec<u32> },
    PatientRange { values: &'a [Option<f64>], range: RangePredicate },
    Group(Group<'a>),
    Temporal { group: Group<'a>, anchor: EndpointSelector, window: DayWindow },
    Relation { a: EndpointSelector, b: EndpointSelector, window: DayWindow },
    /// Patients owning at least one matching full-text row.
    Owners(Vec<bool>),
}

fn term_ids(col: &KeywordColumn, terms: &[String]) -> Vec<u32> {
    let mut ids: Vec<u32> = terms.iter().filter_map(|t| col.term_id(t)).collect();
    ids.sort_unstable();
    ids.dedup();
    ids
}

/// `None` when the predicate can never hold.
fn compile_pred<'a>(index: &'a NestedIndex, p: &Predicate) -> Result<Option<ChildPred<'a>>, QueryError> {
    Ok(match p {
        Predicate::Keyword(k) => index.keyword_column(&k.field)?.1.and_then(|col| {
            let ids = term_ids(col, &k.terms);
            (!ids.is_empty()).then_some(ChildPred::Keyword {
                values: &col.values,
                ids,
            })
        }),
        Predicate::Range(r) => index.numeric_column(&r.field)?.1.map(|values| ChildPred::Range {
            values,
            range: r.clone(),
        }),
    })
}

fn compile_group<'a>(index: &'a NestedIndex, g: &ChildGroup) -> Result<Option<Group<'a>>, QueryError> {
    let mut preds = Vec::with_capacity(g.predicates.len());
    for p in &g.predicates {
        match compile_pred(index, p)? {
            Some(c) => preds.push(c),
            None => return Ok(None),
        }
    }
    Ok(Some(Group { kind: g.kind, preds }))
}

fn compile_field_pred<'a>(index: &'a NestedIndex, p: Predicate) -> Result<Compiled<'a>, QueryError> {
    let level = index.schema().field(p.field())?.level;
    Ok(match level {
        Level::Child(kind) => match compile_group(index, &ChildGroup { kind, predicates: vec![p] })? {
            Some(g) => Compiled::Group(g),
            None => Compiled::Never,
        },
        Level::Patient => match compile_pred(index, &p)? {
            None => Compiled::Never,
            Some(ChildPred::Keyword { values, ids }) => Compiled::PatientKeyword { values, ids },
            Some(ChildPred::Range { values, range }) => Compiled::PatientRange { values, range },
        },
    })
}

fn compile<'a>(index: &'a NestedIndex, r: &Restriction) -> Result<Compiled<'a>, QueryError> {
    r.validate(index.schema())?;
    Ok(match &r.body {
        RestrictionBody::Keyword(k) => compile_field_pred(index, Predicate::Keyword(k.clone()))?,
        RestrictionBody::Range(x) => compile_field_pred(index, Predicate::Range(x.clone()))?,
        RestrictionBody::ChildGroup(g) => compile_group(index, g)?.map_or(Compiled::Never, Compiled::Group),
        RestrictionBody::TemporalChild(t) => match compile_group(index, &t.group)? {
            Some(group) => Compiled::Temporal {
                group,
                anchor: t.anchor,
                window: t.window,
            },
            None => Compiled::Never,
        },
        RestrictionBody::EndpointRelation(e) => Compiled::Relation {
            a: e.a,
            b: e.b,
            window: e.window,
        },
        RestrictionBody::FreeText(f) => {
            let level = index.schema().field(&f.field)?.level;
            match index.fulltext_column(&f.field)? {
                None => Compiled::Never,
                Some(col) => {
                    let mut owners = vec![false; index.patient_count()];
                    for (row, hit) in eval_rows(col, &f.expr).into_iter().enumerate() {
                        if hit {
                            owners[row_owner(index, level, row)] = true;
                        }
                    }
                    Compiled::Owners(owners)
                }
            }
        }
    })
}

fn group_rows<'g>(index: &'g NestedIndex, ord: usize, g: &'g Group<'_>) -> impl Iterator<Item = usize> + 'g {
    index.rows(ord, g.kind).filter(move |&r| g.preds.iter().all(|p| p.holds(r)))
}

fn anchor_days(index: &NestedIndex, ord: usize, sel: &EndpointSelector) -> Vec<i32> {
    let table = index.table(ChildKind::Endpoint);
    index
        .rows(ord, ChildKind::Endpoint)
        .filter(|&r| {
            let (kind, ordinal) = index.endpoint_meta(r);
            sel.selects(kind, ordinal)
        })
        .filter_map(|r| table.day[r])
        .collect()
}

fn holds(index: &NestedIndex, ord: usize, c: &Compiled<'_>) -> bool {
    match c {
        Compiled::Never => false,
        Compiled::PatientKeyword { values, ids } => values[ord].is_some_and(|v| ids.binary_search(&v).is_ok()),
        Compiled::PatientRange { values, range } => values[ord].is_some_and(|v| range.contains(v)),
        Compiled::Group(g) => group_rows(index, ord, g).next().is_some(),
        Compiled::Temporal { group, anchor, window } => {
            let anchors = anchor_days(index, ord, anchor);
            if anchors.is_empty() {
                return false;
            }
            let days = &index.table(group.kind).day;
            group_rows(index, ord, group)
                .filter_map(|r| days[r])
                .any(|dc| anchors.iter().any(|&de| window.contains(dc - de)))
        }
        Compiled::Relation { a, b, window } => {
            let da = anchor_days(index, ord, a);
            if da.is_empty() {
                return false;
            }
            let db = anchor_days(index, ord, b);
            da.iter().any(|&x| db.iter().any(|&y| window.contains(x - y)))
        }
        Compiled::Owners(owners) => owners[ord],
    }
}

/// Ascending patient ordinals satisfying every restriction.
pub fn matching_ordinals(
    index: &NestedIndex,
    restrictions: &[Restriction],
    exec: Execution,
) -> Result<Vec<usize>, QueryError> {
    let compiled = restrictions
        .iter()
        .map(|r| compile(index, r))
        .collect::<Result<Vec<_>, _>>()?;
    if compiled.iter().any(|c| matches!(c, Compiled::Never)) {
        return Ok(Vec::new());
    }
    Ok(filter_indices(index.patient_count(), exec, |ord| {
        compiled.iter().all(|c| holds(index, ord, c))
    }))
}

pub fn evaluate_with(index: &NestedIndex, restrictions: &[Restriction], exec: Execution) -> Result<ResultSet, QueryError> {
    let ords = matching_ordinals(index, restrictions, exec)?;
    Ok(ResultSet::from_ids(
        ords.into_iter().map(|o| index.patient_id(o).to_string()).collect(),
    ))
}

/// Patients matching all `restrictions`; an empty set matches everyone.
pub fn evaluate(index: &NestedIndex, restrictions: &[Restriction]) -> Result<ResultSet, QueryError> {
    evaluate_with(index, restrictions, Execution::default())
}
