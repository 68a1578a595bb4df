//! Facet value counts and numeric histograms over the current result set.

use serde::{Deserialize, Serialize};

use super::eval::matching_ordinals;
use super::{QueryError, Restriction};
use crate::datamodel::normalize_term;
use crate::index::{Level, NestedIndex, SchemaError};
use crate::par::{fold_reduce, Execution};

pub const DEFAULT_TOP_K: usize = 4;
pub const DEFAULT_MINCOUNT: u32 = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FacetOptions {
    pub top_k: usize,
    pub mincount: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub substring: Option<String>,
}

impl Default for FacetOptions {
    fn default() -> Self {
        FacetOptions {
            top_k: DEFAULT_TOP_K,
            mincount: DEFAULT_MINCOUNT,
            substring: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FacetValue {
    pub term: String,
    /// Distinct patients in the result set having this value.
    pub count: u32,
    pub common_to_all: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FacetReport {
    pub field: String,
    pub total_remaining_patients: u32,
    /// Every value with a nonzero count, alphabetically.
    pub values: Vec<FacetValue>,
    /// Values with `count >= mincount`, alphabetically.
    pub menu: Vec<FacetValue>,
    /// The `top_k` most frequent values; ties alphabetical.
    pub top: Vec<FacetValue>,
    pub shown_top_k: usize,
    pub mincount: u32,
}

/// Values of a facetable keyword field counted over the current result set.
///
/// All `restrictions` apply, including those on `field` itself. A substring
/// filter (normalized containment) applies to `values`, `menu` and `top`.
pub fn facet_report(
    index: &NestedIndex,
    restrictions: &[Restriction],
    field: &str,
    opts: &FacetOptions,
) -> Result<FacetReport, QueryError> {
    facet_report_with(index, restrictions, field, opts, Execution::default())
}

pub fn facet_report_with(
    index: &NestedIndex,
    restrictions: &[Restriction],
    field: &str,
    opts: &FacetOptions,
    exec: Execution,
) -> Result<FacetReport, QueryError> {
    let (schema, col) = index.keyword_column(field)?;
    if !schema.facetable {
        return Err(SchemaError::NotFacetable(field.to_string()).into());
    }
    let level = schema.level;
    let ords = matching_ordinals(index, restrictions, exec)?;
    let total = ords.len() as u32;
    let mut values = Vec::new();
    if let Some(col) = col {
        let counts = fold_reduce(
            &ords,
            exec,
            || vec![0u32; col.terms.len()],
            |mut acc, &ord| {
                match level {
                    Level::Patient => {
                        if let Some(id) = col.values[ord] {
                            acc[id as usize] += 1;
                        }
                    }
                    Level::Child(kind) => {
                        let mut ids: Vec<u32> = index.rows(ord, kind).filter_map(|r| col.values[r]).collect();
                        ids.sort_unstable();
                        ids.dedup();
                        for id in ids {
                            acc[id as usize] += 1;
                        }
                    }
                }
                acc
            },
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        );
        let needle = opts.substring.as_deref().map(normalize_term);
        for (i, &count) in counts.iter().enumerate() {
            if count == 0 || needle.as_ref().is_some_and(|n| !col.normalized[i].contains(n.as_str())) {
                continue;
            }
            values.push(FacetValue {
                term: col.terms[i].clone(),
                count,
                common_to_all: count == total,
            });
        }
    }
    let menu = values.iter().filter(|v| v.count >= opts.mincount).cloned().collect();
    // `values` is already alphabetical, so a stable sort by count keeps ties alphabetical.
    let mut top = values.clone();
    top.sort_by_key(|v| std::cmp::Reverse(v.count));
    top.truncate(opts.top_k);
    Ok(FacetReport {
        field: field.to_string(),
        total_remaining_patients: total,
        values,
        menu,
        top,
        shown_top_k: opts.top_k,
        mincount: opts.mincount,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalCount {
    /// Inclusive lower edge.
    pub lower: f64,
    /// Exclusive upper edge.
    pub upper: f64,
    pub count: u32,
}

/// Distinct-patient counts per half-open bucket `[e_i, e_{i+1})`.
pub fn numeric_interval_report(
    index: &NestedIndex,
    restrictions: &[Restriction],
    field: &str,
    edges: &[f64],
) -> Result<Vec<IntervalCount>, QueryError> {
    if edges.len() < 2 {
        return Err(QueryError::Argument("at least two bucket edges are required".into()));
    }
    if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(QueryError::Argument("bucket edges must be finite and strictly increasing".into()));
    }
    let (schema, col) = index.numeric_column(field)?;
    let level = schema.level;
    let ords = matching_ordinals(index, restrictions, Execution::default())?;
    let buckets = edges.len() - 1;
    let bucket_of = |v: f64| -> Option<usize> {
        if v < edges[0] || v >= edges[buckets] {
            return None;
        }
        Some(edges.partition_point(|&e| e <= v) - 1)
    };
    let mut counts = vec![0u32; buckets];
    if let Some(col) = col {
        let mut seen = vec![u32::MAX; buckets];
        for &ord in &ords {
            let mut mark = |v: Option<f64>| {
                if let Some(b) = v.and_then(bucket_of) {
                    if seen[b] != ord as u32 {
                        seen[b] = ord as u32;
                        counts[b] += 1;
                    }
                }
            };
            match level {
                Level::Patient => mark(col[ord]),
                Level::Child(kind) => index.rows(ord, kind).for_each(|r| mark(col[r])),
            }
        }
    }
    Ok(edges
        .windows(2)
        .zip(counts)
        .map(|(w, count)| IntervalCount {
            lower: w[0],
            upper: w[1],
            count,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::{DiagnosisEvent, PatientRecord, Provenance};
    use crate::index::Schema;

    fn dx(term: &str) -> DiagnosisEvent {
        DiagnosisEvent {
            term: term.into(),
            icd10: None,
            therapy_term: None,
            therapy_code: None,
            day: 1,
            provenance: Provenance::Database,
        }
    }

    #[test]
    fn top_k_ties_alphabetical_and_mincount() {
        let mut pats = Vec::new();
        for i in 0..6 {
            let mut p = PatientRecord::new(format!("p{i}"));
            p.diagnoses.push(dx("Zyste"));
            p.diagnoses.push(dx("Zyste"));
            if i < 3 {
                p.diagnoses.push(dx("Fieber"));
                p.diagnoses.push(dx("Anämie"));
            }
            pats.push(p);
        }
        let idx = NestedIndex::build(&pats, &Schema::default()).unwrap();
        let opts = FacetOptions {
            top_k: 2,
            ..FacetOptions::default()
        };
        let r = facet_report(&idx, &[], "diagnosis.term", &opts).unwrap();
        assert_eq!(r.total_remaining_patients, 6);
        let top: Vec<_> = r.top.iter().map(|v| (v.term.as_str(), v.count)).collect();
        assert_eq!(top, vec![("Zyste", 6), ("Anämie", 3)]);
        assert!(r.top[0].common_to_all);
        assert_eq!(r.menu.len(), 1);
        assert_eq!(r.values.len(), 3);
        let sub = facet_report(&idx, &[], "diagnosis.term", &FacetOptions { substring: Some("ANÄM".into()), ..opts }).unwrap();
        assert_eq!(sub.values.len(), 1);
    }

    #[test]
    fn interval_edges_validated() {
        let idx = NestedIndex::build(&[], &Schema::default()).unwrap();
        for bad in [&[1.0][..], &[1.0, 1.0], &[2.0, 1.0], &[0.0, f64::NAN]] {
            assert!(matches!(
                numeric_interval_report(&idx, &[], "height_cm", bad),
                Err(QueryError::Argument(_))
            ));
        }
        assert!(numeric_interval_report(&idx, &[], "sex", &[0.0, 1.0]).is_err());
    }
}
