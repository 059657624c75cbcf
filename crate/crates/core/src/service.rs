//! HTTP facade over the engine.
//!
//! | Method | Path | Body | Response |
//! |---|---|---|---|
//! | POST | `/v1/search[?debug=1]` | `QuerySpec` | `SearchResponse` |
//! | POST | `/v1/recommend` | `RecommendRequest` | `HitsResponse` |
//! | POST | `/v1/walk` | `WalkRequest` | `WalkResponse` |
//! | POST | `/v1/expand` | `ExpandRequest` | `QuerySpec` |
//! | POST | `/v1/documents[?embed_missing=false]` | JSON array or NDJSON | `IngestReport` |
//! | GET/DELETE | `/v1/documents/{id}` | | `Document` / `DeleteResponse` |
//! | GET | `/v1/templates` | | `[PromptTemplate]` |
//! | GET | `/v1/healthz` | | `HealthResponse` |
//! | GET | `/v1/schema` | | schemas keyed by type |
//! | POST | `/v1/admin/templates/reload` | | `ReloadResponse` |
//! | GET | `/v1/admin/snapshot` | | snapshot JSONL |
//! | POST | `/v1/admin/restore` | snapshot JSONL | `RestoreResponse` |
//!
//! Errors are `ApiError` bodies with the status given by their code.
//! Engine work runs on the blocking pool.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, RawQuery, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::Serialize;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};
use tower_http::services::ServeDir;

use crate::api::{self, ApiError, ApiResult};
use crate::config::Settings;
use crate::engine::Engine;
use crate::error::{Error, ErrorCode, Result};

pub const NDJSON: &str = "application/x-ndjson";

#[derive(Clone)]
pub struct AppState {
    engine: Arc<Engine>,
}

fn json_bytes(status: StatusCode, body: Vec<u8>, content_type: &'static str) -> Response {
    (status, [(header::CONTENT_TYPE, HeaderValue::from_static(content_type))], body).into_response()
}

fn ok<T: Serialize>(value: &T) -> Response {
    json_bytes(StatusCode::OK, api::to_json(value), "application/json")
}

fn fail(err: ApiError) -> Response {
    let status = StatusCode::from_u16(err.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    json_bytes(status, api::to_json(&err), "application/json")
}

fn respond<T: Serialize>(result: ApiResult<T>) -> Response {
    match result {
        Ok(v) => ok(&v),
        Err(e) => fail(e),
    }
}

async fn blocking<T, F>(state: &AppState, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&Engine) -> ApiResult<T> + Send + 'static,
{
    let engine = state.engine.clone();
    tokio::task::spawn_blocking(move || f(&engine))
        .await
        .unwrap_or_else(|e| Err(ApiError::new(ErrorCode::Internal, format!("worker failed: {e}"))))
}

fn query_flag(query: &Option<String>, name: &str, default: bool) -> bool {
    let Some(q) = query else { return default };
    for pair in q.split('&') {
        let (k, v) = pair.split_once('=').unwrap_or((pair, "1"));
        if k == name {
            return matches!(v, "1" | "true" | "yes");
        }
    }
    default
}

async fn search(State(st): State<AppState>, RawQuery(q): RawQuery, body: Bytes) -> Response {
    let debug = query_flag(&q, "debug", false);
    respond(match api::parse_json(&body) {
        Ok(spec) => blocking(&st, move |e| api::search(e, &spec, debug)).await,
        Err(e) => Err(e),
    })
}

async fn recommend(State(st): State<AppState>, body: Bytes) -> Response {
    respond(match api::parse_json(&body) {
        Ok(req) => blocking(&st, move |e| api::recommend(e, &req)).await,
        Err(e) => Err(e),
    })
}

async fn walk(State(st): State<AppState>, body: Bytes) -> Response {
    respond(match api::parse_json(&body) {
        Ok(req) => blocking(&st, move |e| api::walk(e, &req)).await,
        Err(e) => Err(e),
    })
}

async fn expand(State(st): State<AppState>, body: Bytes) -> Response {
    respond(match api::parse_json(&body) {
        Ok(req) => blocking(&st, move |e| api::expand(e, &req)).await,
        Err(e) => Err(e),
    })
}

async fn post_documents(
    State(st): State<AppState>,
    RawQuery(q): RawQuery,
    headers: HeaderMap,
    body: Bytes,
) -> Response {
    let embed_missing = query_flag(&q, "embed_missing", true);
    let ndjson = headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|ct| ct.starts_with(NDJSON));
    respond(
        blocking(&st, move |e| {
            if ndjson {
                api::ingest_ndjson(e, &body, embed_missing)
            } else {
                api::ingest_array(e, &body, embed_missing)
            }
        })
        .await,
    )
}

async fn get_document(State(st): State<AppState>, Path(id): Path<String>) -> Response {
    respond(api::get_document(&st.engine, &id))
}

async fn delete_document(State(st): State<AppState>, Path(id): Path<String>) -> Response {
    ok(&api::delete_document(&st.engine, &id))
}

async fn templates(State(st): State<AppState>) -> Response {
    ok(&api::templates(&st.engine))
}

async fn reload_templates(State(st): State<AppState>) -> Response {
    respond(blocking(&st, api::reload_templates).await)
}

async fn healthz(State(st): State<AppState>) -> Response {
    ok(&api::health(&st.engine))
}

async fn schema() -> Response {
    ok(&api::schemas())
}

async fn snapshot(State(st): State<AppState>) -> Response {
    match blocking(&st, |e| Ok(api::snapshot(e))).await {
        Ok(bytes) => json_bytes(StatusCode::OK, bytes, NDJSON),
        Err(e) => fail(e),
    }
}

async fn restore(State(st): State<AppState>, body: Bytes) -> Response {
    respond(blocking(&st, move |e| api::restore(e, &body)).await)
}

async fn fallback() -> Response {
    fail(ApiError::new(ErrorCode::NotFound, "no such route"))
}

/// All API routes over a shared engine.
pub fn router(engine: Arc<Engine>) -> Router {
    Router::new()
        .route("/v1/search", post(search))
        .route("/v1/recommend", post(recommend))
        .route("/v1/walk", post(walk))
        .route("/v1/expand", post(expand))
        .route("/v1/documents", post(post_documents))
        .route("/v1/documents/{id}", get(get_document).delete(delete_document))
        .route("/v1/templates", get(templates))
        .route("/v1/healthz", get(healthz))
        .route("/v1/schema", get(schema))
        .route("/v1/admin/templates/reload", post(reload_templates))
        .route("/v1/admin/snapshot", get(snapshot))
        .route("/v1/admin/restore", post(restore))
        .fallback(fallback)
        .with_state(AppState { engine })
}

/// The router plus the CORS layer and static console configured in `settings`.
pub fn app(engine: Arc<Engine>, settings: &Settings) -> Result<Router> {
    let mut app = router(engine);
    if let Some(dir) = &settings.console_dir {
        app = app.nest_service("/console", ServeDir::new(dir));
    }
    if let Some(origin) = &settings.cors_origin {
        let allow = if origin == "*" {
            AllowOrigin::any()
        } else {
            let value = HeaderValue::from_str(origin)
                .map_err(|e| Error::Config(format!("cors origin `{origin}`: {e}")))?;
            AllowOrigin::exact(value)
        };
        app = app.layer(CorsLayer::new().allow_origin(allow).allow_methods(Any).allow_headers(Any));
    }
    Ok(app)
}

/// Serves until ctrl-c.
pub async fn serve(settings: Settings) -> Result<()> {
    let engine = Arc::new(settings.build_engine()?);
    let addr: SocketAddr = settings
        .bind
        .parse()
        .map_err(|e| Error::Config(format!("bind address `{}`: {e}", settings.bind)))?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(%addr, documents = engine.index().count(), dimension = engine.dimension(), "listening");
    axum::serve(listener, app(engine, &settings)?)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
