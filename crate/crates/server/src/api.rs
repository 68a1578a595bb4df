//! Request and response bodies and the library calls behind each endpoint.
//!
//! Handlers only parse, call one function here and serialize, so the
//! contract tests can compare the HTTP path with a direct call.

use cohort_core::datamodel::EndpointKind;
use cohort_core::extract::{annotate, Annotation, AnnotationType, PipelineConfig};
use cohort_core::query::{
    compare_extraction_to_record, evaluate, facet_report, free_text_search, numeric_interval_report,
    ComparedAnnotation, FacetOptions, FacetReport, FreeTextResult, IntervalCount, Restriction,
};
use cohort_core::timeline::{
    build_timeline, filter_event_types, EventTypeReport, FocusState, SignificanceParams, Tab, TimelineFilters,
    TimelineSeries,
};
use serde::{Deserialize, Serialize};

use crate::error::ApiError;
use crate::profile::PatientProfile;
use crate::state::Dataset;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SearchRequest {
    #[serde(default)]
    pub restrictions: Vec<Restriction>,
    #[serde(default)]
    pub offset: usize,
    /// Page size; the server default applies when absent.
    #[serde(default)]
    pub limit: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResponse {
    pub total: usize,
    pub offset: usize,
    pub limit: usize,
    pub restrictions: Vec<Restriction>,
    /// Every matching id, sorted.
    pub patient_ids: Vec<String>,
    /// Profiles of `patient_ids[offset..offset + limit]`.
    pub patient_profiles: Vec<PatientProfile>,
}

/// Checks every restriction against the schema, naming the first bad one.
pub fn validate_restrictions(ds: &Dataset, restrictions: &[Restriction]) -> Result<(), ApiError> {
    for (i, r) in restrictions.iter().enumerate() {
        r.validate(ds.schema())
            .map_err(|e| ApiError::bad_request(format!("restriction {:?}: {e}", r.id)).at(format!("restrictions[{i}]")))?;
    }
    Ok(())
}

pub fn search(ds: &Dataset, restrictions: &[Restriction], offset: usize, limit: usize) -> Result<SearchResponse, ApiError> {
    validate_restrictions(ds, restrictions)?;
    let rs = evaluate(&ds.index, restrictions).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let patient_profiles = rs
        .patient_ids
        .iter()
        .skip(offset)
        .take(limit)
        .filter_map(|id| ds.patient(id))
        .map(PatientProfile::of)
        .collect();
    Ok(SearchResponse {
        total: rs.len(),
        offset,
        limit,
        restrictions: restrictions.to_vec(),
        patient_ids: rs.patient_ids,
        patient_profiles,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockInfo {
    pub name: String,
    pub fields: Vec<String>,
    pub open: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockFacets {
    pub block: String,
    pub reports: Vec<FacetReport>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FacetsResponse {
    pub blocks: Vec<BlockFacets>,
}

/// Facet reports for every field of `block`, or 404 if the block is unknown.
pub fn block_facets(
    ds: &Dataset,
    restrictions: &[Restriction],
    block: &str,
    opts: &FacetOptions,
) -> Result<BlockFacets, ApiError> {
    let b = ds
        .schema()
        .block(block)
        .ok_or_else(|| ApiError::not_found(format!("unknown facet block {block:?}")).at("block"))?;
    validate_restrictions(ds, restrictions)?;
    let reports = b
        .fields
        .iter()
        .map(|f| facet_report(&ds.index, restrictions, f, opts).map_err(|e| ApiError::bad_request(e.to_string())))
        .collect::<Result<_, _>>()?;
    Ok(BlockFacets {
        block: b.name.clone(),
        reports,
    })
}

pub fn intervals(
    ds: &Dataset,
    restrictions: &[Restriction],
    field: &str,
    edges: &[f64],
) -> Result<Vec<IntervalCount>, ApiError> {
    numeric_interval_report(&ds.index, restrictions, field, edges).map_err(|e| ApiError::bad_request(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FreeTextRequest {
    pub query: String,
}

pub fn free_text(ds: &Dataset, restrictions: &[Restriction], query: &str) -> Result<FreeTextResult, ApiError> {
    validate_restrictions(ds, restrictions)?;
    free_text_search(&ds.index, restrictions, query)
        .map_err(|e| ApiError::bad_request(e.to_string()).at("query"))
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AnnotateRequest {
    pub text: String,
    /// When set, each annotation is compared with this patient's record.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patient_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotateResponse {
    pub annotations: Vec<Annotation>,
    pub pipeline_version: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compared: Option<Vec<ComparedAnnotation>>,
}

pub fn annotate_text(ds: &Dataset, cfg: &PipelineConfig, req: &AnnotateRequest) -> Result<AnnotateResponse, ApiError> {
    let patient = match &req.patient_id {
        Some(id) => Some(ds.patient(id).ok_or_else(|| unknown_patient(id))?),
        None => None,
    };
    let annotations = annotate(&req.text, cfg);
    let compared = patient.map(|p| compare_extraction_to_record(p, &annotations));
    Ok(AnnotateResponse {
        annotations,
        pipeline_version: cfg.version(),
        compared,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DictionaryRequest {
    #[serde(rename = "type")]
    pub annotation_type: AnnotationType,
    pub term: String,
    #[serde(default)]
    pub code: Option<String>,
    #[serde(default)]
    pub definition: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DictionaryResponse {
    #[serde(rename = "type")]
    pub annotation_type: AnnotationType,
    pub term: String,
    pub pipeline_version: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackRequest {
    pub annotation_id: String,
    /// Document or text the annotation came from.
    #[serde(default)]
    pub doc_ref: String,
    #[serde(default)]
    pub pipeline_version: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackResponse {
    pub entry: cohort_core::extract::FeedbackEntry,
    pub log_size: usize,
}

/// Either explicit focus points or alignment on an endpoint kind.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FocusSpec {
    Explicit(FocusState),
    Aligned {
        align_to: EndpointKind,
        #[serde(default)]
        before: u32,
        #[serde(default)]
        after: u32,
    },
}

impl FocusSpec {
    pub fn resolve(&self, p: &cohort_core::datamodel::PatientRecord) -> FocusState {
        match self {
            FocusSpec::Explicit(f) => f.clone(),
            FocusSpec::Aligned { align_to, before, after } => FocusState::aligned_to(p, *align_to, *before, *after),
        }
    }
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineRequest {
    pub patient_id: String,
    pub selected_types: Vec<String>,
    pub focus: FocusSpec,
    #[serde(default)]
    pub filters: TimelineFilters,
    #[serde(default = "yes")]
    pub include_baselines: bool,
}

fn unknown_patient(id: &str) -> ApiError {
    ApiError::not_found(format!("unknown patient {id:?}")).at("patient_id")
}

pub fn timeline(ds: &Dataset, req: &TimelineRequest) -> Result<TimelineSeries, ApiError> {
    let p = ds.patient(&req.patient_id).ok_or_else(|| unknown_patient(&req.patient_id))?;
    let focus = req.focus.resolve(p);
    build_timeline(p, &req.selected_types, &focus, &req.filters, req.include_baselines)
        .map_err(|e| ApiError::bad_request(e.to_string()))
}

/// Flat query-string form of the type-list request.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
pub struct TimelineTypesQuery {
    pub patient_id: String,
    #[serde(default = "default_tab")]
    pub tab: Tab,
    /// Endpoint kind to align on; without it there is no focus.
    #[serde(default)]
    pub align_to: Option<EndpointKind>,
    /// Single focus day, used when `align_to` is absent.
    #[serde(default)]
    pub focus_day: Option<i32>,
    #[serde(default)]
    pub before: u32,
    #[serde(default)]
    pub after: u32,
    #[serde(default)]
    pub episode_days: Option<u32>,
    #[serde(default)]
    pub focus_range: bool,
    #[serde(default)]
    pub significance: bool,
    #[serde(default)]
    pub window_days: Option<u32>,
    #[serde(default)]
    pub threshold_pct: Option<f64>,
    #[serde(default)]
    pub term_substring: Option<String>,
}

fn default_tab() -> Tab {
    Tab::Labs
}

impl TimelineTypesQuery {
    pub fn filters(&self) -> TimelineFilters {
        let sig = self.significance || self.window_days.is_some() || self.threshold_pct.is_some();
        let d = SignificanceParams::default();
        TimelineFilters {
            episode_days: self.episode_days,
            focus_range: self.focus_range,
            significance: sig.then(|| SignificanceParams {
                window_days: self.window_days.unwrap_or(d.window_days),
                threshold_pct: self.threshold_pct.unwrap_or(d.threshold_pct),
            }),
            term_substring: self.term_substring.clone().filter(|s| !s.is_empty()),
        }
    }
}

pub fn timeline_types(ds: &Dataset, q: &TimelineTypesQuery) -> Result<EventTypeReport, ApiError> {
    let p = ds.patient(&q.patient_id).ok_or_else(|| unknown_patient(&q.patient_id))?;
    let focus = match (q.align_to, q.focus_day) {
        (Some(kind), _) => Some(FocusState::aligned_to(p, kind, q.before, q.after)),
        (None, Some(day)) => Some(FocusState::at_day(day, q.before, q.after)),
        (None, None) => None,
    };
    filter_event_types(p, q.tab, focus.as_ref(), &q.filters()).map_err(|e| ApiError::bad_request(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaveResultSetRequest {
    pub name: String,
    /// Defaults to the session's current restrictions.
    #[serde(default)]
    pub restrictions: Option<Vec<Restriction>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReloadResponse {
    pub patients: usize,
}
