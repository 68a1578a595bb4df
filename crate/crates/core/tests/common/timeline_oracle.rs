//! Exhaustive-scan timeline oracles.

use std::collections::BTreeMap;

use cohort_core::datamodel::{EndpointKind, PatientRecord};
use cohort_core::timeline::{FocusState, SignificanceParams, TimelineFilters, TimelineSeries};

/// Episode membership straight from the definition.
pub fn in_some_episode(p: &PatientRecord, r: i32, day: i32) -> bool {
    let mut tx: Vec<i32> = p
        .endpoints
        .iter()
        .filter(|e| e.kind == EndpointKind::Transplantation)
        .map(|e| e.day)
        .collect();
    tx.sort();
    tx.iter().enumerate().any(|(i, &t)| {
        let next = tx.get(i + 1).copied().unwrap_or(i32::MAX);
        let end = p
            .endpoints
            .iter()
            .filter(|e| matches!(e.kind, EndpointKind::Failure | EndpointKind::Death))
            .map(|e| e.day)
            .filter(|&d| d >= t && d < next)
            .min()
            .unwrap_or(t);
        day >= t - r && day <= end + r
    })
}

pub fn oracle_deviation(p: &PatientRecord, term: &str, day: i32, value: f64, w: i32) -> Option<f64> {
    let win: Vec<f64> = p
        .labs
        .iter()
        .filter(|l| l.term == term && l.day >= day - w && l.day < day)
        .filter_map(|l| l.numeric_value)
        .collect();
    if win.is_empty() {
        return None;
    }
    let base = win.iter().sum::<f64>() / win.len() as f64;
    (base != 0.0).then(|| (value - base) / base.abs() * 100.0)
}

/// Lab counts per type surviving the active filters.
pub fn oracle_lab_counts(p: &PatientRecord, focus: &FocusState, f: &TimelineFilters) -> BTreeMap<String, u32> {
    let mut out = BTreeMap::new();
    for l in &p.labs {
        if let Some(r) = f.episode_days {
            if !in_some_episode(p, r as i32, l.day) {
                continue;
            }
        }
        if f.focus_range
            && !focus
                .focus_points
                .iter()
                .any(|fp| l.day >= fp.day - focus.before as i32 && l.day <= fp.day + focus.after as i32)
        {
            continue;
        }
        if let Some(s) = f.significance {
            let dev = l
                .numeric_value
                .and_then(|v| oracle_deviation(p, &l.term, l.day, v, s.window_days as i32));
            if !dev.is_some_and(|d| d.abs() >= s.threshold_pct) {
                continue;
            }
        }
        *out.entry(l.term.clone()).or_insert(0) += 1;
    }
    out
}

pub fn filter_combos(r: u32, sig: SignificanceParams) -> Vec<TimelineFilters> {
    let mut out = Vec::new();
    for mask in 0..8u8 {
        out.push(TimelineFilters {
            episode_days: (mask & 1 != 0).then_some(r),
            focus_range: mask & 2 != 0,
            significance: (mask & 4 != 0).then_some(sig),
            term_substring: None,
        });
    }
    out
}

pub fn lab_types(p: &PatientRecord) -> Vec<String> {
    let mut t: Vec<String> = p.labs.iter().map(|l| l.term.clone()).collect();
    t.sort();
    t.dedup();
    t
}

pub type PointKey = (String, u32, i32, Option<u64>);

/// Multiset of chart points keyed by (type, layer, x, y bits).
pub fn point_bag(ts: &TimelineSeries) -> BTreeMap<PointKey, u32> {
    let mut bag = BTreeMap::new();
    for layer in &ts.layers {
        for s in &layer.series {
            for pt in &s.points {
                let key = (s.type_name.clone(), layer.ordinal, pt.x, pt.y.map(f64::to_bits));
                *bag.entry(key).or_insert(0) += 1;
            }
        }
    }
    bag
}

pub fn bag_meet(a: &BTreeMap<PointKey, u32>, b: &BTreeMap<PointKey, u32>) -> BTreeMap<PointKey, u32> {
    a.iter()
        .filter_map(|(k, &n)| b.get(k).map(|&m| (k.clone(), n.min(m))))
        .collect()
}

pub fn shifted(p: &PatientRecord, k: i32) -> PatientRecord {
    let mut q = p.clone();
    q.diagnoses.iter_mut().for_each(|d| d.day += k);
    q.labs.iter_mut().for_each(|l| l.day += k);
    q.endpoints.iter_mut().for_each(|e| e.day += k);
    q.medications.iter_mut().for_each(|m| m.day += k);
    q
}
