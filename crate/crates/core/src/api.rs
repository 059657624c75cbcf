//! Wire types and request handlers shared by the HTTP service, the CLI's
//! in-process mode and the C ABI. Each handler maps a request value to a
//! response value; [`to_json`] is the single serializer, so every front end
//! emits identical bytes for identical state.

use std::io::Cursor;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::engine::{Engine, QueryTrace};
use crate::error::{Error, ErrorCode};
use crate::index::{Document, DocumentRecord, IngestReport, SearchHit};
use crate::query::{PromptTemplate, QuerySpec, DEFAULT_K, MAX_K};
use crate::recommender::{TreeNode, WalkParams, WalkStart};
use crate::vecmath::{self, UnitVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<serde_json::Value>,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        ApiError { code, message: message.into(), detail: None }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::BadRequest, message)
    }

    pub fn status(&self) -> u16 {
        self.code.http_status()
    }
}

impl From<Error> for ApiError {
    fn from(err: Error) -> Self {
        let detail = match &err {
            Error::DimensionMismatch { expected, found } => {
                Some(serde_json::json!({ "expected": expected, "found": found }))
            }
            Error::BatchItem { index, .. } => Some(serde_json::json!({ "index": index })),
            _ => None,
        };
        ApiError { code: err.code(), message: err.to_string(), detail }
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let code = serde_json::to_value(self.code).ok();
        let code = code.as_ref().and_then(|v| v.as_str()).unwrap_or("error");
        write!(f, "{code}: {}", self.message)
    }
}

impl std::error::Error for ApiError {}

pub type ApiResult<T> = std::result::Result<T, ApiError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct SearchResponse {
    pub hits: Vec<SearchHit>,
    pub compiled_query_norm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<QueryTrace>,
}

fn default_k() -> usize {
    DEFAULT_K
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct RecommendRequest {
    pub seed_ids: Vec<String>,
    #[serde(default = "default_k")]
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct HitsResponse {
    pub hits: Vec<SearchHit>,
}

/// Where a walk starts. Exactly one field must be set.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct WalkStartSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doc_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vector: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_spec: Option<QuerySpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct WalkRequest {
    pub start: WalkStartSpec,
    /// Server defaults apply when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<WalkParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct WalkResponse {
    pub tree: TreeNode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ExpandRequest {
    pub query_spec: QuerySpec,
    #[serde(default)]
    pub liked_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct HealthResponse {
    pub status: String,
    pub dimension: usize,
    pub doc_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct DeleteResponse {
    pub id: String,
    pub deleted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ReloadResponse {
    pub templates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct RestoreResponse {
    pub doc_count: usize,
}

pub fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    serde_json::to_vec(value).expect("API types always serialize")
}

pub fn parse_json<'a, T: Deserialize<'a>>(body: &'a [u8]) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))
}

pub fn search(engine: &Engine, spec: &QuerySpec, debug: bool) -> ApiResult<SearchResponse> {
    let (compiled, hits) = engine.search_traced(spec)?;
    Ok(SearchResponse {
        hits,
        compiled_query_norm: vecmath::norm(&compiled.vector),
        trace: debug.then_some(compiled.trace),
    })
}

pub fn recommend(engine: &Engine, req: &RecommendRequest) -> ApiResult<HitsResponse> {
    if !(1..=MAX_K).contains(&req.k) {
        return Err(ApiError::bad_request(format!("k must be in [1, {MAX_K}]")));
    }
    if req.seed_ids.is_empty() {
        return Err(ApiError::bad_request("seed_ids must not be empty"));
    }
    Ok(HitsResponse { hits: engine.recommend(&req.seed_ids, req.k)? })
}

pub fn walk(engine: &Engine, req: &WalkRequest) -> ApiResult<WalkResponse> {
    let s = &req.start;
    let set = [s.doc_id.is_some(), s.vector.is_some(), s.query_spec.is_some()];
    if set.iter().filter(|b| **b).count() != 1 {
        return Err(ApiError::bad_request("start needs exactly one of doc_id, vector, query_spec"));
    }
    let start = if let Some(id) = &s.doc_id {
        WalkStart::Document(id.clone())
    } else if let Some(raw) = &s.vector {
        if raw.len() != engine.dimension() {
            return Err(Error::DimensionMismatch { expected: engine.dimension(), found: raw.len() }.into());
        }
        WalkStart::Vector(UnitVector::from_components(raw.clone())?)
    } else {
        let spec = s.query_spec.as_ref().expect("checked above");
        WalkStart::Vector(engine.compile_query(spec)?.vector)
    };
    let params = req.params.unwrap_or(engine.config().walk_defaults);
    Ok(WalkResponse { tree: engine.walk(&start, &params)?.to_node() })
}

pub fn expand(engine: &Engine, req: &ExpandRequest) -> ApiResult<QuerySpec> {
    Ok(engine.expand_with_feedback(&req.query_spec, &req.liked_ids)?)
}

pub fn templates(engine: &Engine) -> Vec<PromptTemplate> {
    engine.templates()
}

pub fn reload_templates(engine: &Engine) -> ApiResult<ReloadResponse> {
    Ok(ReloadResponse { templates: engine.reload_templates()? })
}

pub fn health(engine: &Engine) -> HealthResponse {
    HealthResponse {
        status: "ok".into(),
        dimension: engine.dimension(),
        doc_count: engine.index().count(),
    }
}

pub fn get_document(engine: &Engine, id: &str) -> ApiResult<Document> {
    Ok(engine.index().get(id)?)
}

pub fn delete_document(engine: &Engine, id: &str) -> DeleteResponse {
    DeleteResponse { id: id.to_owned(), deleted: engine.index().delete(id) }
}

/// Bulk ingestion from newline-delimited JSON records.
pub fn ingest_ndjson(engine: &Engine, body: &[u8], embed_missing: bool) -> ApiResult<IngestReport> {
    Ok(engine.index().ingest_reader(Cursor::new(body), embed_missing, engine.embedder())?)
}

/// Bulk ingestion from a JSON array; element `i` is reported as line `i + 1`.
pub fn ingest_array(engine: &Engine, body: &[u8], embed_missing: bool) -> ApiResult<IngestReport> {
    let items: Vec<serde_json::Value> = parse_json(body)?;
    let mut ndjson = Vec::with_capacity(body.len() + items.len());
    for item in &items {
        serde_json::to_writer(&mut ndjson, item).expect("re-serializing parsed JSON");
        ndjson.push(b'\n');
    }
    ingest_ndjson(engine, &ndjson, embed_missing)
}

pub fn snapshot(engine: &Engine) -> Vec<u8> {
    engine.index().snapshot_bytes()
}

pub fn restore(engine: &Engine, body: &[u8]) -> ApiResult<RestoreResponse> {
    Ok(RestoreResponse { doc_count: engine.index().restore_reader(Cursor::new(body))? })
}

/// JSON schemas for every request and response body, keyed by type name.
pub fn schemas() -> serde_json::Value {
    macro_rules! all {
        ($($t:ty),* $(,)?) => {{
            let mut map = serde_json::Map::new();
            $(map.insert(stringify!($t).to_owned(), schemars::schema_for!($t).to_value());)*
            serde_json::Value::Object(map)
        }};
    }
    all!(
        QuerySpec,
        SearchResponse,
        RecommendRequest,
        HitsResponse,
        WalkRequest,
        WalkResponse,
        ExpandRequest,
        HealthResponse,
        Document,
        DocumentRecord,
        PromptTemplate,
        DeleteResponse,
        IngestReport,
        ReloadResponse,
        RestoreResponse,
        ApiError,
    )
}
