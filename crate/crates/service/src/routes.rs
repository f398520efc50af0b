use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::Arc;

use arc_swap::ArcSwap;
use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::Serialize;
use tower_http::cors::{AllowOrigin, CorsLayer};
use ucrs_core::control::CommandJson;

use crate::api::{self, ApiError};
use crate::snapshot::ServingSnapshot;
use crate::ServiceError;

pub const DEFAULT_K: usize = 10;
/// Largest `k` a request may ask for.
pub const MAX_K: usize = 1000;

/// Shared handler state. Requests load the current snapshot without locking;
/// reload replaces it wholesale.
#[derive(Clone)]
pub struct AppState {
    snapshot: Arc<ArcSwap<ServingSnapshot>>,
}

impl AppState {
    pub fn new(snapshot: ServingSnapshot) -> Self {
        AppState {
            snapshot: Arc::new(ArcSwap::from_pointee(snapshot)),
        }
    }

    pub fn current(&self) -> Arc<ServingSnapshot> {
        self.snapshot.load_full()
    }

    /// Loads the current snapshot's sources again, warms it and swaps it in.
    pub fn reload(&self) -> Result<Arc<ServingSnapshot>, ServiceError> {
        let old = self.current();
        let fresh = ServingSnapshot::load(old.source.clone(), old.grouping.clone())?;
        fresh.warm();
        let fresh = Arc::new(fresh);
        self.snapshot.store(fresh.clone());
        Ok(fresh)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        json(status, &self.body)
    }
}

fn json<T: Serialize>(status: StatusCode, body: &T) -> Response {
    match serde_json::to_vec(body) {
        Ok(bytes) => (status, [(header::CONTENT_TYPE, "application/json")], bytes).into_response(),
        Err(e) => (
            StatusCode::INTERNAL_SERVER_ERROR,
            [(header::CONTENT_TYPE, "application/json")],
            format!(r#"{{"code":"internal","message":"serialization failed: {e}"}}"#),
        )
            .into_response(),
    }
}

fn ok<T: Serialize>(r: Result<T, ApiError>) -> Response {
    match r {
        Ok(body) => json(StatusCode::OK, &body),
        Err(e) => e.into_response(),
    }
}

fn parse_k(q: &HashMap<String, String>) -> Result<usize, ApiError> {
    match q.get("k") {
        None => Ok(DEFAULT_K),
        Some(s) => match s.parse::<usize>() {
            Ok(k) if k <= MAX_K => Ok(k),
            _ => Err(ApiError::new(400, "bad_request", format!("k must be an integer in 0..={MAX_K}, got '{s}'"))),
        },
    }
}

/// Runs CPU-bound work off the async workers.
async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .unwrap_or_else(|e| Err(ApiError::new(500, "internal", format!("worker failed: {e}"))))
}

async fn recommendations(
    State(st): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> Response {
    let snap = st.current();
    ok(parse_k(&q).and_then(|k| api::recommendations(&snap, &id, k)))
}

async fn controls(
    State(st): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
    body: Bytes,
) -> Response {
    let k = match parse_k(&q) {
        Ok(k) => k,
        Err(e) => return e.into_response(),
    };
    let command: CommandJson = match serde_json::from_slice(&body) {
        Ok(c) => c,
        Err(e) => return ApiError::new(422, "invalid_command", format!("malformed command body: {e}")).into_response(),
    };
    let snap = st.current();
    ok(blocking(move || api::control_response(&snap, &id, &command, k)).await)
}

async fn bubble_report(State(st): State<AppState>, Path(id): Path<String>) -> Response {
    let snap = st.current();
    ok(blocking(move || api::bubble_report(&snap, &id)).await)
}

async fn history(State(st): State<AppState>, Path(id): Path<String>) -> Response {
    ok(api::history(&st.current(), &id))
}

async fn categories(State(st): State<AppState>) -> Response {
    json(StatusCode::OK, &api::catalog_categories(&st.current()))
}

async fn user_features(State(st): State<AppState>) -> Response {
    json(StatusCode::OK, &api::catalog_user_features(&st.current()))
}

async fn healthz(State(st): State<AppState>) -> Response {
    json(StatusCode::OK, &api::health(&st.current()))
}

async fn reload(State(st): State<AppState>) -> Response {
    let r = tokio::task::spawn_blocking(move || st.reload()).await;
    match r {
        Ok(Ok(snap)) => {
            log::info!("reloaded snapshot {}", snap.version);
            json(StatusCode::OK, &api::health(&snap))
        }
        Ok(Err(e)) => ApiError::new(500, "reload_failed", e.to_string()).into_response(),
        Err(e) => ApiError::new(500, "internal", format!("worker failed: {e}")).into_response(),
    }
}

async fn not_found() -> Response {
    ApiError::new(404, "not_found", "no such route").into_response()
}

/// All routes. `cors_origins` empty means no CORS headers; `*` allows any origin.
pub fn router(state: AppState, cors_origins: &[String]) -> Result<Router, ServiceError> {
    let mut app = Router::new()
        .route("/users/{id}/recommendations", get(recommendations))
        .route("/users/{id}/controls", post(controls))
        .route("/users/{id}/bubble-report", get(bubble_report))
        .route("/users/{id}/history", get(history))
        .route("/catalog/categories", get(categories))
        .route("/catalog/user-features", get(user_features))
        .route("/healthz", get(healthz))
        .route("/admin/reload", post(reload))
        .fallback(not_found)
        .with_state(state);
    if !cors_origins.is_empty() {
        let origin = if cors_origins.iter().any(|o| o == "*") {
            AllowOrigin::any()
        } else {
            let values = cors_origins
                .iter()
                .map(|o| HeaderValue::from_str(o).map_err(|_| ServiceError::Invalid(format!("bad CORS origin '{o}'"))))
                .collect::<Result<Vec<_>, _>>()?;
            AllowOrigin::list(values)
        };
        app = app.layer(
            CorsLayer::new()
                .allow_origin(origin)
                .allow_methods([Method::GET, Method::POST])
                .allow_headers([header::CONTENT_TYPE]),
        );
    }
    Ok(app)
}

/// Warms the snapshot and serves until Ctrl-C.
pub async fn serve(addr: SocketAddr, snapshot: ServingSnapshot, cors_origins: &[String]) -> Result<(), ServiceError> {
    let snapshot = tokio::task::spawn_blocking(move || {
        snapshot.warm();
        snapshot
    })
    .await
    .map_err(|e| ServiceError::Invalid(format!("warm-up failed: {e}")))?;
    log::info!("snapshot {} ready: {} users, {} items", snapshot.version, snapshot.dataset.n_users(), snapshot.dataset.n_items());
    let app = router(AppState::new(snapshot), cors_origins)?;
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| ServiceError::io(addr.to_string(), e))?;
    log::info!("listening on {addr}");
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| ServiceError::io(addr.to_string(), e))
}
