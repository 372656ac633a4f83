//! Stateless HTTP scoring sidecar.

use std::future::Future;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use mbti_rank_core::RewardConfig;
use serde_json::json;
use tokio::net::TcpListener;

use crate::scoring::{parse_score_request, score_request, RequestError};

#[derive(Debug)]
struct AppState {
    defaults: RewardConfig,
    started: Instant,
}

pub fn router(defaults: RewardConfig, max_body_bytes: usize) -> Router {
    let state = Arc::new(AppState {
        defaults,
        started: Instant::now(),
    });
    Router::new()
        .route("/v1/score", post(score))
        .route("/v1/health", get(health))
        .layer(DefaultBodyLimit::max(max_body_bytes))
        .with_state(state)
}

fn bad_request(err: RequestError) -> Response {
    (
        StatusCode::BAD_REQUEST,
        Json(json!({ "error": err.message, "field": err.field })),
    )
        .into_response()
}

async fn score(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let resp = parse_score_request(&body).and_then(|req| score_request(&req, &state.defaults));
    match resp {
        Ok(resp) => match serde_json::to_vec(&resp) {
            Ok(bytes) => ([(header::CONTENT_TYPE, "application/json")], bytes).into_response(),
            Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
        },
        Err(err) => bad_request(err),
    }
}

async fn health(State(state): State<Arc<AppState>>) -> Json<serde_json::Value> {
    Json(json!({
        "status": "ok",
        "version": env!("CARGO_PKG_VERSION"),
        "k": state.defaults.k(),
        "epsilon": state.defaults.dim_weight.epsilon(),
        "uptime_seconds": state.started.elapsed().as_secs_f64(),
    }))
}

/// Serves on an already bound listener until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    app: Router,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, app).with_graceful_shutdown(shutdown).await
}

pub async fn bind(addr: SocketAddr) -> std::io::Result<TcpListener> {
    TcpListener::bind(addr).await
}
