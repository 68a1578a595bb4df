//! HTTP/JSON workbench service over an immutable cohort snapshot.
//!
//! Sessions are keyed by the `x-session-id` header; a request without one
//! gets a fresh id echoed in the response header.

pub mod api;
pub mod error;
pub mod profile;
pub mod state;

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, HeaderName, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use cohort_core::extract::Verdict;
use cohort_core::query::{FacetOptions, Restriction, DEFAULT_TOP_K};
use serde::{Deserialize, Serialize};
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

use api::*;
use error::{parse_json, parse_json_required, ApiError};
use state::{AppState, Dataset, SavedResultSet};

pub const SESSION_HEADER: &str = "x-session-id";

type Shared = State<Arc<AppState>>;

fn session_id(headers: &HeaderMap) -> String {
    headers
        .get(SESSION_HEADER)
        .and_then(|v| v.to_str().ok())
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .unwrap_or_else(|| uuid::Uuid::new_v4().to_string())
}

fn reply<T: Serialize>(status: StatusCode, sid: &str, body: &T) -> Response {
    let mut resp = (status, Json(body)).into_response();
    if let Ok(v) = HeaderValue::from_str(sid) {
        resp.headers_mut().insert(HeaderName::from_static(SESSION_HEADER), v);
    }
    resp
}

fn query<T>(q: Result<Query<T>, QueryRejection>) -> Result<T, ApiError> {
    q.map(|Query(t)| t).map_err(|e| ApiError::bad_request(e.body_text()))
}

fn session_restrictions(st: &AppState, sid: &str) -> Vec<Restriction> {
    st.with_session(sid, |s| s.query.restrictions().to_vec())
}

#[derive(Debug, Default, Deserialize)]
struct Page {
    #[serde(default)]
    offset: usize,
    #[serde(default)]
    limit: Option<usize>,
}

async fn search_post(State(st): Shared, headers: HeaderMap, body: Bytes) -> Result<Response, ApiError> {
    let sid = session_id(&headers);
    let req: SearchRequest = parse_json(&body)?;
    let ds = st.dataset();
    let limit = req.limit.unwrap_or(st.config.default_limit);
    let out = search(&ds, &req.restrictions, req.offset, limit)?;
    st.with_session(&sid, |s| s.query = cohort_core::query::QueryState::from_restrictions(req.restrictions));
    Ok(reply(StatusCode::OK, &sid, &out))
}

async fn search_get(
    State(st): Shared,
    headers: HeaderMap,
    page: Result<Query<Page>, QueryRejection>,
) -> Result<Response, ApiError> {
    let sid = session_id(&headers);
    let page = query(page)?;
    let rs = session_restrictions(&st, &sid);
    let out = search(&st.dataset(), &rs, page.offset, page.limit.unwrap_or(st.config.default_limit))?;
    Ok(reply(StatusCode::OK, &sid, &out))
}

async fn restriction_add(State(st): Shared, headers: HeaderMap, body: Bytes) -> Result<Response, ApiError> {
    let sid = session_id(&headers);
    let r: Restriction = parse_json_required(&body)?;
    let ds = st.dataset();
    validate_restrictions(&ds, std::slice::from_ref(&r))?;
    let rs = st.with_session(&sid, |s| {
        s.query.add(r);
        s.query.restrictions().to_vec()
    });
    let out = search(&ds, &rs, 0, st.config.default_limit)?;
    Ok(reply(StatusCode::OK, &sid, &out))
}

async fn restriction_delete(State(st): Shared, headers: HeaderMap, Path(id): Path<String>) -> Result<Response, ApiError> {
    let sid = session_id(&headers);
    let (removed, rs) = st.with_session(&sid, |s| (s.query.remove(&id).is_some(), s.query.restrictions().to_vec()));
    if !removed {
        return Err(ApiError::not_found(format!("no restriction {id:?} in this session")));
    }
    let out = search(&st.dataset(), &rs, 0, st.config.default_limit)?;
    Ok(reply(StatusCode::OK, &sid, &out))
}

async fn blocks_list(State(st): Shared, headers: HeaderMap) -> Response {
    let sid = session_id(&headers);
    let open = st.with_session(&sid, |s| s.open_blocks.clone());
    let ds = st.dataset();
    let out: Vec<BlockInfo> = ds
        .schema()
        .blocks
        .iter()
        .map(|b| BlockInfo {
            name: b.name.clone(),
            fields: b.fields.clone(),
            open: open.contains(&b.name),
        })
        .collect();
    reply(StatusCode::OK, &sid, &out)
}

async fn block_close(State(st): Shared, headers: HeaderMap, Path(name): Path<String>) -> Result<Response, ApiError> {
    let sid = session_id(&headers);
    if !st.with_session(&sid, |s| s.open_blocks.remove(&name)) {
        return Err(ApiError::not_found(format!("block {name:?} is not open")));
    }
    let mut resp = StatusCode::NO_CONTENT.into_response();
    if let Ok(v) = HeaderValue::from_str(&sid) {
        resp.headers_mut().insert(HeaderName::from_static(SESSION_HEADER), v);
    }
    Ok(resp)
}

#[derive(Debug, Default, Deserialize)]
struct FacetQuery {
    block: Option<String>,
    top_k: Option<usize>,
    mincount: Option<u32>,
    substring: Option<String>,
}

/// Reports for `block` (which is opened), or for every open block.
async fn facets(
    State(st): Shared,
    headers: HeaderMap,
    q: Result<Query<FacetQuery>, QueryRejection>,
) -> Result<Response, ApiError> {
    let sid = session_id(&headers);
    let q = query(q)?;
    let ds = st.dataset();
    let opts = FacetOptions {
        top_k: q.top_k.unwrap_or(DEFAULT_TOP_K),
        mincount: q.mincount.unwrap_or(st.config.mincount_default),
        substring: q.substring.filter(|s| !s.is_empty()),
    };
    let rs = session_restrictions(&st, &sid);
    let names: Vec<String> = match q.block {
        Some(b) => {
            let report = block_facets(&ds, &rs, &b, &opts)?;
            st.with_session(&sid, |s| s.open_blocks.insert(b));
            return Ok(reply(StatusCode::OK, &sid, &FacetsResponse { blocks: vec![report] }));
        }
        None => st.with_session(&sid, |s| s.open_blocks.iter().cloned().collect()),
    };
    let blocks = names
        .iter()
        .map(|b| block_facets(&ds, &rs, b, &opts))
        .collect::<Result<_, _>>()?;
    Ok(reply(StatusCode::OK, &sid, &FacetsResponse { blocks }))
}

#[derive(Debug, Deserialize)]
struct IntervalQuery {
    field: String,
    /// Comma-separated ascending bucket edges.
    edges: String,
}

async fn intervals_get(
    State(st): Shared,
    headers: HeaderMap,
    q: Result<Query<IntervalQuery>, QueryRejection>,
) -> Result<Response, ApiError> {
    let sid = session_id(&headers);
    let q = query(q)?;
    let edges = q
        .edges
        .split(',')
        .map(|e| e.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| ApiError::bad_request(format!("edges: {e}")).at("edges"))?;
    let rs = session_restrictions(&st, &sid);
    let out = intervals(&st.dataset(), &rs, &q.field, &edges)?;
    Ok(reply(StatusCode::OK, &sid, &out))
}

async fn fulltext_post(State(st): Shared, headers: HeaderMap, body: Bytes) -> Result<Response, ApiError> {
    let sid = session_id(&headers);
    let req: FreeTextRequest = parse_json_required(&body)?;
    let rs = session_restrictions(&st, &sid);
    let out = free_text(&st.dataset(), &rs, &req.query)?;
    Ok(reply(StatusCode::OK, &sid, &out))
}

async fn annotate_post(State(st): Shared, headers: HeaderMap, body: Bytes) -> Result<Response, ApiError> {
    let sid = session_id(&headers);
    let req: AnnotateRequest = parse_json(&body)?;
    let out = annotate_text(&st.dataset(), &st.pipeline.current(), &req)?;
    Ok(reply(StatusCode::OK, &sid, &out))
}

async fn dictionary_post(State(st): Shared, headers: HeaderMap, body: Bytes) -> Result<Response, ApiError> {
    use cohort_core::extract::ExtractError;
    let sid = session_id(&headers);
    let req: DictionaryRequest = parse_json_required(&body)?;
    let cfg = st
        .add_dictionary_entry(req.annotation_type, &req.term, req.code.as_deref(), req.definition.as_deref())
        .map_err(|e| match e {
            ExtractError::Duplicate { .. } => ApiError::conflict(e.to_string()).at("term"),
            ExtractError::EmptyTerm => ApiError::bad_request(e.to_string()).at("term"),
            other => ApiError::internal(other.to_string()),
        })?;
    let out = DictionaryResponse {
        annotation_type: req.annotation_type,
        term: req.term.trim().to_string(),
        pipeline_version: cfg.version(),
    };
    Ok(reply(StatusCode::CREATED, &sid, &out))
}

async fn dictionary_get(State(st): Shared, headers: HeaderMap) -> Response {
    let sid = session_id(&headers);
    let cfg = st.pipeline.current();
    let user: Vec<_> = cfg
        .dictionaries()
        .iter()
        .filter(|d| d.tier == cohort_core::extract::Tier::User)
        .cloned()
        .collect();
    reply(StatusCode::OK, &sid, &user)
}

async fn feedback_post(State(st): Shared, headers: HeaderMap, body: Bytes) -> Result<Response, ApiError> {
    let sid = session_id(&headers);
    let req: FeedbackRequest = parse_json_required(&body)?;
    if req.annotation_id.trim().is_empty() {
        return Err(ApiError::bad_request("annotation_id is empty").at("annotation_id"));
    }
    let version = req.pipeline_version.unwrap_or_else(|| st.pipeline.current().version());
    let internal = |e: std::io::Error| ApiError::internal(format!("feedback log: {e}"));
    let entry = st
        .feedback
        .record(&req.annotation_id, Verdict::Incorrect, &req.doc_ref, version)
        .map_err(internal)?;
    let log_size = st.feedback.entries().map_err(internal)?.len();
    Ok(reply(StatusCode::ACCEPTED, &sid, &FeedbackResponse { entry, log_size }))
}

async fn feedback_get(State(st): Shared, headers: HeaderMap) -> Result<Response, ApiError> {
    let sid = session_id(&headers);
    let entries = st
        .feedback
        .entries()
        .map_err(|e| ApiError::internal(format!("feedback log: {e}")))?;
    Ok(reply(StatusCode::OK, &sid, &entries))
}

async fn timeline_post(State(st): Shared, headers: HeaderMap, body: Bytes) -> Result<Response, ApiError> {
    let sid = session_id(&headers);
    let req: TimelineRequest = parse_json_required(&body)?;
    let out = timeline(&st.dataset(), &req)?;
    Ok(reply(StatusCode::OK, &sid, &out))
}

async fn timeline_types_get(
    State(st): Shared,
    headers: HeaderMap,
    q: Result<Query<TimelineTypesQuery>, QueryRejection>,
) -> Result<Response, ApiError> {
    let sid = session_id(&headers);
    let q = query(q)?;
    let out = timeline_types(&st.dataset(), &q)?;
    Ok(reply(StatusCode::OK, &sid, &out))
}

async fn resultsets_post(State(st): Shared, headers: HeaderMap, body: Bytes) -> Result<Response, ApiError> {
    let sid = session_id(&headers);
    let req: SaveResultSetRequest = parse_json_required(&body)?;
    if req.name.trim().is_empty() {
        return Err(ApiError::bad_request("name is empty").at("name"));
    }
    let rs = match req.restrictions {
        Some(rs) => rs,
        None => session_restrictions(&st, &sid),
    };
    let ds = st.dataset();
    validate_restrictions(&ds, &rs)?;
    let ids = cohort_core::query::evaluate(&ds.index, &rs).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let mut store = st.lock_result_sets();
    if store.contains(&req.name) {
        return Err(ApiError::conflict(format!("result set {:?} already exists", req.name)).at("name"));
    }
    let saved = SavedResultSet {
        name: req.name,
        patient_ids: ids.patient_ids,
        restrictions: rs,
        created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
    };
    store.insert(saved.clone()).map_err(|e| ApiError::internal(e.to_string()))?;
    Ok(reply(StatusCode::CREATED, &sid, &saved))
}

async fn resultsets_list(State(st): Shared, headers: HeaderMap) -> Response {
    let sid = session_id(&headers);
    let list = st.lock_result_sets().list();
    reply(StatusCode::OK, &sid, &list)
}

async fn resultset_get(State(st): Shared, headers: HeaderMap, Path(name): Path<String>) -> Result<Response, ApiError> {
    let sid = session_id(&headers);
    let set = st
        .lock_result_sets()
        .get(&name)
        .cloned()
        .ok_or_else(|| ApiError::not_found(format!("no result set {name:?}")))?;
    Ok(reply(StatusCode::OK, &sid, &set))
}

/// Re-reads the configured snapshot file and swaps it in.
async fn reload(State(st): Shared, headers: HeaderMap) -> Result<Response, ApiError> {
    let sid = session_id(&headers);
    let path = st
        .config
        .snapshot
        .clone()
        .ok_or_else(|| ApiError::conflict("server was started without a snapshot file"))?;
    let ds = tokio::task::spawn_blocking(move || Dataset::load(&path))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
        .map_err(|e| ApiError::internal(e.to_string()))?;
    let patients = st.swap_dataset(ds).patients.len();
    Ok(reply(StatusCode::OK, &sid, &ReloadResponse { patients }))
}

#[derive(Debug, Serialize)]
struct Health {
    patients: usize,
    pipeline_version: u64,
}

async fn health(State(st): Shared) -> Json<Health> {
    Json(Health {
        patients: st.dataset().patients.len(),
        pipeline_version: st.pipeline.current().version(),
    })
}

fn cors(origin: Option<&str>) -> CorsLayer {
    let allow = match origin.and_then(|o| HeaderValue::from_str(o).ok()) {
        Some(o) => AllowOrigin::exact(o),
        None => AllowOrigin::any(),
    };
    CorsLayer::new()
        .allow_origin(allow)
        .allow_methods(Any)
        .allow_headers(Any)
        .expose_headers([HeaderName::from_static(SESSION_HEADER)])
}

pub fn router(state: Arc<AppState>) -> Router {
    let cors = cors(state.config.cors_origin.as_deref());
    Router::new()
        .route("/api/health", get(health))
        .route("/api/search", post(search_post).get(search_get))
        .route("/api/restrictions", post(restriction_add))
        .route("/api/restrictions/{id}", delete(restriction_delete))
        .route("/api/blocks", get(blocks_list))
        .route("/api/blocks/{name}", delete(block_close))
        .route("/api/facets", get(facets))
        .route("/api/intervals", get(intervals_get))
        .route("/api/fulltext", post(fulltext_post))
        .route("/api/annotate", post(annotate_post))
        .route("/api/dictionary", post(dictionary_post).get(dictionary_get))
        .route("/api/feedback", post(feedback_post).get(feedback_get))
        .route("/api/timeline", post(timeline_post))
        .route("/api/timeline/types", get(timeline_types_get))
        .route("/api/resultsets", post(resultsets_post).get(resultsets_list))
        .route("/api/resultsets/{name}", get(resultset_get))
        .route("/api/reload", post(reload))
        .layer(cors)
        .with_state(state)
}

/// Binds `addr` and serves until Ctrl-C.
pub async fn serve(state: Arc<AppState>, addr: SocketAddr) -> std::io::Result<()> {
    serve_on(state, tokio::net::TcpListener::bind(addr).await?).await
}

/// Serves on an already bound listener until Ctrl-C.
pub async fn serve_on(state: Arc<AppState>, listener: tokio::net::TcpListener) -> std::io::Result<()> {
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
