//! Focus-aligned event series for a single patient.
//!
//! Three independent per-event filters narrow the displayed events:
//!
//! * **F1** episodes: the event lies inside some transplantation episode.
//! * **F2** focus range: the event lies within `[focus - before, focus + after]`
//!   of a focus point.
//! * **F3** significance (labs only): the value deviates from its trailing
//!   baseline by at least `threshold_pct` percent.
//!
//! Each filter is a predicate on one event, so any activation order yields the
//! same surviving set.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datamodel::{normalize_term, Day, EndpointKind, PatientRecord};

pub const DEFAULT_EPISODE_DAYS: u32 = 30;
pub const DEFAULT_WINDOW_DAYS: u32 = 30;
pub const DEFAULT_THRESHOLD_PCT: f64 = 50.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TimelineError {
    #[error("no event types selected")]
    EmptySelection,
    #[error("invalid timeline parameters: {0}")]
    Params(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Episode {
    pub ordinal: u32,
    pub start_day: Day,
    pub end_day: Day,
}

impl Episode {
    pub fn contains(&self, day: Day) -> bool {
        (self.start_day..=self.end_day).contains(&day)
    }
}

/// One episode per transplantation, from `r` days before it to `r` days after
/// the first failure or death preceding the next transplantation (or after the
/// transplantation itself when neither occurred).
pub fn compute_episodes(patient: &PatientRecord, r: u32) -> Vec<Episode> {
    let r = r as Day;
    let mut tx: Vec<(Day, u32)> = patient
        .endpoints_of(EndpointKind::Transplantation)
        .map(|e| (e.day, e.ordinal))
        .collect();
    tx.sort_unstable();
    let mut terminal: Vec<Day> = patient
        .endpoints
        .iter()
        .filter(|e| matches!(e.kind, EndpointKind::Failure | EndpointKind::Death))
        .map(|e| e.day)
        .collect();
    terminal.sort_unstable();
    tx.iter()
        .enumerate()
        .map(|(i, &(day, ordinal))| {
            let next = tx.get(i + 1).map(|t| t.0);
            let end = terminal
                .iter()
                .copied()
                .find(|&d| d >= day && next.is_none_or(|n| d < n))
                .unwrap_or(day);
            Episode {
                ordinal,
                start_day: day - r,
                end_day: end + r,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FocusPoint {
    /// Layer number; transplantation or failure ordinal when aligned to those.
    pub ordinal: u32,
    pub day: Day,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FocusState {
    pub focus_points: Vec<FocusPoint>,
    #[serde(default)]
    pub before: u32,
    #[serde(default)]
    pub after: u32,
}

impl FocusState {
    /// A single layer focused on `day`.
    pub fn at_day(day: Day, before: u32, after: u32) -> Self {
        FocusState {
            focus_points: vec![FocusPoint { ordinal: 1, day }],
            before,
            after,
        }
    }

    /// One layer per endpoint of `kind`, ordered by its ordinal.
    pub fn aligned_to(patient: &PatientRecord, kind: EndpointKind, before: u32, after: u32) -> Self {
        let mut focus_points: Vec<FocusPoint> = patient
            .endpoints_of(kind)
            .map(|e| FocusPoint {
                ordinal: e.ordinal,
                day: e.day,
            })
            .collect();
        focus_points.sort_by_key(|p| p.ordinal);
        FocusState {
            focus_points,
            before,
            after,
        }
    }

    pub fn validate(&self) -> Result<(), TimelineError> {
        let mut ords: Vec<u32> = self.focus_points.iter().map(|p| p.ordinal).collect();
        ords.sort_unstable();
        if ords.windows(2).any(|w| w[0] == w[1]) {
            return Err(TimelineError::Params("duplicate focus layer ordinal".into()));
        }
        Ok(())
    }

    fn in_range(&self, p: &FocusPoint, day: Day) -> bool {
        let d = day - p.day;
        d >= -(self.before as Day) && d <= self.after as Day
    }

    /// True when `day` is in range of any focus point.
    pub fn covers(&self, day: Day) -> bool {
        self.focus_points.iter().any(|p| self.in_range(p, day))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignificanceParams {
    pub window_days: u32,
    pub threshold_pct: f64,
}

impl Default for SignificanceParams {
    fn default() -> Self {
        SignificanceParams {
            window_days: DEFAULT_WINDOW_DAYS,
            threshold_pct: DEFAULT_THRESHOLD_PCT,
        }
    }
}

impl SignificanceParams {
    pub fn validate(&self) -> Result<(), TimelineError> {
        if self.window_days < 1 {
            return Err(TimelineError::Params("window_days must be at least 1".into()));
        }
        if !(self.threshold_pct.is_finite() && self.threshold_pct > 0.0) {
            return Err(TimelineError::Params("threshold_pct must be positive".into()));
        }
        Ok(())
    }
}

/// Mean of values with day in `[at_day - window_days, at_day)`.
///
/// `series` must be sorted by day.
pub fn baseline(series: &[(Day, f64)], at_day: Day, window_days: u32) -> Option<f64> {
    let lo = series.partition_point(|&(d, _)| d < at_day - window_days as Day);
    let hi = series.partition_point(|&(d, _)| d < at_day);
    let win = &series[lo..hi.max(lo)];
    (!win.is_empty()).then(|| win.iter().map(|&(_, v)| v).sum::<f64>() / win.len() as f64)
}

/// Signed percent change of `value` against `base`; `None` when `base` is 0.
pub fn deviation_pct(value: f64, base: f64) -> Option<f64> {
    (base != 0.0).then(|| (value - base) / base.abs() * 100.0)
}

/// Distances to the nearest candidate strictly before and strictly after any
/// focus point, minimized across layers.
pub fn nearest_event_hints(focus: &FocusState, days: &[Day]) -> Hints {
    let mut h = Hints::default();
    for p in &focus.focus_points {
        for &d in days {
            let diff = d - p.day;
            if diff < 0 {
                let v = (-diff) as u32;
                h.before = Some(h.before.map_or(v, |b| b.min(v)));
            } else if diff > 0 {
                let v = diff as u32;
                h.after = Some(h.after.map_or(v, |a| a.min(v)));
            }
        }
    }
    h
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Hints {
    pub before: Option<u32>,
    pub after: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tab {
    Diagnoses,
    Labs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Diagnosis,
    Endpoint,
    Lab,
}

/// A point event on the timeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineEvent {
    pub kind: EventKind,
    pub type_name: String,
    pub day: Day,
    pub value: Option<f64>,
    pub label: Option<String>,
}

/// Events shown on `tab`: diagnoses and endpoints, or lab values.
pub fn patient_events(patient: &PatientRecord, tab: Tab) -> Vec<TimelineEvent> {
    let mut out = Vec::new();
    match tab {
        Tab::Diagnoses => {
            for d in &patient.diagnoses {
                out.push(TimelineEvent {
                    kind: EventKind::Diagnosis,
                    type_name: d.term.clone(),
                    day: d.day,
                    value: None,
                    label: d.icd10.clone(),
                });
            }
            for e in &patient.endpoints {
                out.push(TimelineEvent {
                    kind: EventKind::Endpoint,
                    type_name: e.kind.label().to_string(),
                    day: e.day,
                    value: None,
                    label: Some(format!("{} {}", e.kind.label(), e.ordinal)),
                });
            }
        }
        Tab::Labs => {
            for l in &patient.labs {
                out.push(TimelineEvent {
                    kind: EventKind::Lab,
                    type_name: l.term.clone(),
                    day: l.day,
                    value: l.numeric_value,
                    label: l.text_value.clone(),
                });
            }
        }
    }
    out.sort_by(|a, b| (a.day, &a.type_name).cmp(&(b.day, &b.type_name)));
    out
}

/// Which filters are active. A field left empty disables that filter.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TimelineFilters {
    /// F1 with this episode size `r` in days.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub episode_days: Option<u32>,
    /// F2 using the focus state's before/after bounds.
    #[serde(default)]
    pub focus_range: bool,
    /// F3; ignored for non-lab events.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub significance: Option<SignificanceParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub term_substring: Option<String>,
}

/// Per-event precomputation shared by the type list and the chart.
struct Evaluated {
    event: TimelineEvent,
    deviation: Option<f64>,
    base: Option<f64>,
    f1: bool,
    f3: bool,
}

fn evaluate_events(
    patient: &PatientRecord,
    events: Vec<TimelineEvent>,
    filters: &TimelineFilters,
    baseline_window: Option<u32>,
) -> Result<Vec<Evaluated>, TimelineError> {
    if let Some(s) = &filters.significance {
        s.validate()?;
    }
    let episodes = filters.episode_days.map(|r| compute_episodes(patient, r));
    let window = filters.significance.map(|s| s.window_days).or(baseline_window);
    let mut series: BTreeMap<&str, Vec<(Day, f64)>> = BTreeMap::new();
    if window.is_some() {
        for e in events.iter().filter(|e| e.kind == EventKind::Lab) {
            if let Some(v) = e.value {
                series.entry(e.type_name.as_str()).or_default().push((e.day, v));
            }
        }
        for s in series.values_mut() {
            s.sort_by_key(|p| p.0);
        }
    }
    let mut zero_base_logged = std::collections::HashSet::new();
    let out = events
        .iter()
        .map(|e| {
            let base = match (window, e.value) {
                (Some(w), Some(_)) => series.get(e.type_name.as_str()).and_then(|s| baseline(s, e.day, w)),
                _ => None,
            };
            let deviation = match (base, e.value) {
                (Some(b), Some(v)) => {
                    let d = deviation_pct(v, b);
                    if d.is_none() && zero_base_logged.insert(e.type_name.clone()) {
                        log::warn!("zero baseline in lab series {:?}; points not flaggable", e.type_name);
                    }
                    d
                }
                _ => None,
            };
            let f1 = episodes.as_ref().is_none_or(|eps| eps.iter().any(|ep| ep.contains(e.day)));
            let f3 = match (&filters.significance, e.kind) {
                (Some(s), EventKind::Lab) => deviation.is_some_and(|d| d.abs() >= s.threshold_pct),
                _ => true,
            };
            Evaluated {
                event: e.clone(),
                deviation,
                base,
                f1,
                f3,
            }
        })
        .collect();
    Ok(out)
}

fn type_matches(filters: &TimelineFilters, name: &str) -> bool {
    filters
        .term_substring
        .as_deref()
        .is_none_or(|s| normalize_term(name).contains(&normalize_term(s)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaxDeviation {
    pub deviation_pct: f64,
    pub day: Day,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventTypeSummary {
    #[serde(rename = "type")]
    pub type_name: String,
    pub kind: EventKind,
    pub count: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_deviation: Option<MaxDeviation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventTypeReport {
    pub types: Vec<EventTypeSummary>,
    /// Suggested before/after bounds: distance to the nearest event excluded
    /// only by the focus range.
    pub hints: Hints,
}

/// Event types with at least one event surviving all active filters.
///
/// Significance is ignored on the diagnoses tab. `focus` is required when
/// `filters.focus_range` is set.
pub fn filter_event_types(
    patient: &PatientRecord,
    tab: Tab,
    focus: Option<&FocusState>,
    filters: &TimelineFilters,
) -> Result<EventTypeReport, TimelineError> {
    let mut filters = filters.clone();
    if tab == Tab::Diagnoses {
        filters.significance = None;
    }
    let focus = match (filters.focus_range, focus) {
        (true, None) => return Err(TimelineError::Params("focus range filter needs a focus state".into())),
        (_, f) => f,
    };
    if let Some(f) = focus {
        f.validate()?;
    }
    let evaluated = evaluate_events(patient, patient_events(patient, tab), &filters, None)?;
    let mut types: BTreeMap<(String, String), EventTypeSummary> = BTreeMap::new();
    let mut outside = Vec::new();
    for ev in evaluated.iter().filter(|ev| ev.f1 && ev.f3 && type_matches(&filters, &ev.event.type_name)) {
        let f2 = !filters.focus_range || focus.is_some_and(|f| f.covers(ev.event.day));
        if !f2 {
            outside.push(ev.event.day);
            continue;
        }
        let e = &ev.event;
        let entry = types
            .entry((normalize_term(&e.type_name), e.type_name.clone()))
            .or_insert_with(|| EventTypeSummary {
                type_name: e.type_name.clone(),
                kind: e.kind,
                count: 0,
                max_deviation: None,
            });
        entry.count += 1;
        if filters.significance.is_some() {
            if let (Some(d), Some(v)) = (ev.deviation, e.value) {
                if entry.max_deviation.is_none_or(|m| d.abs() > m.deviation_pct.abs()) {
                    entry.max_deviation = Some(MaxDeviation {
                        deviation_pct: d,
                        day: e.day,
                        value: v,
                    });
                }
            }
        }
    }
    let hints = match focus {
        Some(f) if filters.focus_range => nearest_event_hints(f, &outside),
        _ => Hints::default(),
    };
    Ok(EventTypeReport {
        types: types.into_values().collect(),
        hints,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: Day,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselinePoint {
    pub x: Day,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Flag {
    pub x: Day,
    pub y: f64,
    pub deviation_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    #[serde(rename = "type")]
    pub type_name: String,
    pub kind: EventKind,
    pub points: Vec<Point>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<Vec<BaselinePoint>>,
    pub flags: Vec<Flag>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub ordinal: u32,
    pub focus_day: Day,
    pub series: Vec<Series>,
}

/// Chart data: one layer per focus point, ordered by ordinal (first at the
/// bottom of the stack).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineSeries {
    pub layers: Vec<Layer>,
}

fn kind_of(patient: &PatientRecord, name: &str) -> EventKind {
    if patient.labs.iter().any(|l| l.term == name) {
        EventKind::Lab
    } else if EndpointKind::ALL.iter().any(|k| k.label() == name) {
        EventKind::Endpoint
    } else {
        EventKind::Diagnosis
    }
}

/// Aligned series of the `selected` event types for every focus layer.
///
/// Points carry `x = day - focus_day`. A selected type without surviving
/// events yields an empty series. Baselines use the significance window, or
/// the default window when significance is off.
pub fn build_timeline(
    patient: &PatientRecord,
    selected: &[String],
    focus: &FocusState,
    filters: &TimelineFilters,
    include_baselines: bool,
) -> Result<TimelineSeries, TimelineError> {
    if selected.is_empty() {
        return Err(TimelineError::EmptySelection);
    }
    focus.validate()?;
    let mut events = patient_events(patient, Tab::Diagnoses);
    events.extend(patient_events(patient, Tab::Labs));
    events.retain(|e| selected.contains(&e.type_name));
    let evaluated = evaluate_events(
        patient,
        events,
        filters,
        include_baselines.then_some(DEFAULT_WINDOW_DAYS),
    )?;
    let mut points_by_focus: Vec<&FocusPoint> = focus.focus_points.iter().collect();
    points_by_focus.sort_by_key(|p| p.ordinal);
    let layers = points_by_focus
        .into_iter()
        .map(|fp| {
            let series = selected
                .iter()
                .map(|name| {
                    let kind = kind_of(patient, name);
                    let visible: Vec<&Evaluated> = evaluated
                        .iter()
                        .filter(|ev| &ev.event.type_name == name && ev.f1)
                        .filter(|ev| !filters.focus_range || focus.in_range(fp, ev.event.day))
                        .collect();
                    let x = |ev: &Evaluated| ev.event.day - fp.day;
                    let points = visible
                        .iter()
                        .filter(|ev| ev.f3)
                        .map(|ev| Point {
                            x: x(ev),
                            y: ev.event.value,
                            label: ev.event.label.clone(),
                        })
                        .collect();
                    let baseline = (include_baselines && kind == EventKind::Lab).then(|| {
                        visible
                            .iter()
                            .filter_map(|ev| ev.base.map(|y| BaselinePoint { x: x(ev), y }))
                            .collect()
                    });
                    let flags = match filters.significance {
                        Some(s) if kind == EventKind::Lab => visible
                            .iter()
                            .filter_map(|ev| {
                                let (d, y) = (ev.deviation?, ev.event.value?);
                                (d.abs() >= s.threshold_pct).then(|| Flag {
                                    x: x(ev),
                                    y,
                                    deviation_pct: d,
                                })
                            })
                            .collect(),
                        _ => Vec::new(),
                    };
                    Series {
                        type_name: name.clone(),
                        kind,
                        points,
                        baseline,
                        flags,
                    }
                })
                .collect();
            Layer {
                ordinal: fp.ordinal,
                focus_day: fp.day,
                series,
            }
        })
        .collect();
    Ok(TimelineSeries { layers })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::{EndpointEvent, LabEvent};

    fn ep(kind: EndpointKind, day: Day, ordinal: u32) -> EndpointEvent {
        EndpointEvent { kind, day, ordinal }
    }

    #[test]
    fn episodes() {
        let mut p = PatientRecord::new("p");
        p.endpoints = vec![ep(EndpointKind::Transplantation, 100, 1), ep(EndpointKind::Failure, 400, 1)];
        assert_eq!(compute_episodes(&p, 30), vec![Episode { ordinal: 1, start_day: 70, end_day: 430 }]);
        p.endpoints.pop();
        assert_eq!(compute_episodes(&p, 30)[0].end_day, 130);
        p.endpoints = vec![
            ep(EndpointKind::Transplantation, 100, 1),
            ep(EndpointKind::Failure, 400, 1),
            ep(EndpointKind::Transplantation, 500, 2),
        ];
        let eps = compute_episodes(&p, 0);
        assert_eq!((eps[0].start_day, eps[0].end_day), (100, 400));
        assert_eq!((eps[1].start_day, eps[1].end_day), (500, 500));
        assert!(compute_episodes(&PatientRecord::new("x"), 30).is_empty());
    }

    #[test]
    fn baseline_and_deviation() {
        let d = 50;
        assert_eq!(baseline(&[(d - 3, 10.0), (d - 2, 10.0), (d - 1, 10.0)], d, 5), Some(10.0));
        assert_eq!(baseline(&[(d - 2, 8.0), (d - 1, 12.0)], d, 3), Some(10.0));
        assert_eq!(baseline(&[(d, 8.0)], d, 3), None);
        assert_eq!(baseline(&[], d, 3), None);
        assert_eq!(deviation_pct(40.0, 10.0), Some(300.0));
        assert_eq!(deviation_pct(10.0, 10.0), Some(0.0));
        assert_eq!(deviation_pct(5.0, 0.0), None);
        assert!((deviation_pct(48.0, 14.0).unwrap() - 242.857).abs() < 1e-3);
        assert_eq!(deviation_pct(5.0, 10.0), Some(-50.0));
    }

    #[test]
    fn hints_are_strict() {
        let f = FocusState::at_day(100, 0, 0);
        assert_eq!(nearest_event_hints(&f, &[93, 102, 100]), Hints { before: Some(7), after: Some(2) });
        assert_eq!(nearest_event_hints(&f, &[]), Hints::default());
        assert_eq!(nearest_event_hints(&f, &[100]), Hints::default());
    }

    #[test]
    fn realignment_shifts_x() {
        let mut p = PatientRecord::new("p");
        p.endpoints = vec![ep(EndpointKind::Transplantation, 100, 1), ep(EndpointKind::Rejection, 103, 1)];
        p.labs = vec![LabEvent::numeric("ASTHP (U/I)", 100, 14.0)];
        let sel = vec!["ASTHP (U/I)".to_string(), "Transplantation".to_string()];
        let f = TimelineFilters::default();
        let a = build_timeline(&p, &sel, &FocusState::aligned_to(&p, EndpointKind::Transplantation, 0, 0), &f, false).unwrap();
        let b = build_timeline(&p, &sel, &FocusState::aligned_to(&p, EndpointKind::Rejection, 0, 0), &f, false).unwrap();
        assert_eq!(a.layers[0].series[0].points[0].x, 0);
        assert_eq!(b.layers[0].series[0].points[0].x, -3);
        assert_eq!(a.layers[0].series[1].kind, EventKind::Endpoint);
        assert!(build_timeline(&p, &[], &FocusState::at_day(0, 0, 0), &f, false).is_err());
    }

    #[test]
    fn significance_ignored_on_diagnoses() {
        let mut p = PatientRecord::new("p");
        p.endpoints = vec![ep(EndpointKind::Transplantation, 100, 1)];
        let f = TimelineFilters {
            significance: Some(SignificanceParams::default()),
            ..Default::default()
        };
        let r = filter_event_types(&p, Tab::Diagnoses, None, &f).unwrap();
        assert_eq!(r.types.len(), 1);
        assert_eq!(r.types[0].count, 1);
        let r = filter_event_types(&p, Tab::Labs, None, &f).unwrap();
        assert!(r.types.is_empty());
        let bad = TimelineFilters {
            significance: Some(SignificanceParams { window_days: 0, threshold_pct: 10.0 }),
            ..Default::default()
        };
        assert!(filter_event_types(&p, Tab::Labs, None, &bad).is_err());
    }
}
