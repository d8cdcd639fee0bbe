//! HTTP API for collecting expert ratings.
//!
//! | Method | Path | Response |
//! |---|---|---|
//! | GET | `/api/tasks/next?rater=<id>` | 200 task, 204 when the rater is done |
//! | GET | `/api/progress[?rater=<id>]` | 200 progress counts |
//! | GET | `/api/image/<sample_id>` | 200 image bytes, 404 unknown sample |
//! | POST | `/api/ratings` | 201 stored rating, 400 invalid, 404 unknown sample |
//!
//! Everything else is served from the asset directory when one is given;
//! without one, `/` returns a minimal built-in rating page.

use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::body::{Body, Bytes};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use cseval_core::harness::rating::{RatingBook, RatingError, RatingSubmission};
use serde::Deserialize;
use serde_json::json;
use tower_http::services::ServeDir;

const BUILTIN_PAGE: &str = include_str!("index.html");

#[derive(Clone)]
struct AppState {
    book: Arc<Mutex<RatingBook>>,
}

#[derive(Debug, Deserialize)]
struct RaterQuery {
    rater: Option<String>,
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

fn rating_error(e: RatingError) -> Response {
    let status = match &e {
        RatingError::InvalidScore(_) | RatingError::Invalid(_) => StatusCode::BAD_REQUEST,
        RatingError::UnknownSample(_) => StatusCode::NOT_FOUND,
        RatingError::Setup(_) | RatingError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
    };
    error(status, e.to_string())
}

/// Builds the service. `assets` points at the built rating UI; `/` and any
/// non-API path are served from it.
pub fn router(book: RatingBook, assets: Option<PathBuf>) -> Router {
    let state = AppState { book: Arc::new(Mutex::new(book)) };
    let api = Router::new()
        .route("/api/tasks/next", get(next_task))
        .route("/api/progress", get(progress))
        .route("/api/image/{id}", get(image))
        .route("/api/ratings", post(submit))
        .with_state(state);
    match assets {
        Some(dir) => api.fallback_service(ServeDir::new(dir).append_index_html_on_directories(true)),
        None => api.route("/", get(|| async { Html(BUILTIN_PAGE) })),
    }
}

async fn next_task(State(state): State<AppState>, Query(q): Query<RaterQuery>) -> Response {
    let Some(rater) = q.rater.filter(|r| !r.trim().is_empty()) else {
        return error(StatusCode::BAD_REQUEST, "missing rater");
    };
    let book = state.book.lock().expect("rating book lock");
    match book.next_task(&rater) {
        Some(task) => Json(task).into_response(),
        None => StatusCode::NO_CONTENT.into_response(),
    }
}

async fn progress(State(state): State<AppState>, Query(q): Query<RaterQuery>) -> Response {
    let book = state.book.lock().expect("rating book lock");
    Json(book.progress(q.rater.as_deref())).into_response()
}

async fn image(State(state): State<AppState>, Path(id): Path<String>) -> Response {
    let found = {
        let book = state.book.lock().expect("rating book lock");
        book.image(&id).map(|(p, ct)| (p.to_path_buf(), ct))
    };
    let Some((path, content_type)) = found else {
        return error(StatusCode::NOT_FOUND, format!("unknown sample {id:?}"));
    };
    match tokio::fs::read(&path).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, content_type)], Body::from(bytes)).into_response(),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, format!("{}: {e}", path.display())),
    }
}

async fn submit(State(state): State<AppState>, body: Bytes) -> Response {
    let sub: RatingSubmission = match serde_json::from_slice(&body) {
        Ok(s) => s,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("bad rating body: {e}")),
    };
    // The append ends in an fsync, so keep it off the async workers.
    let book = state.book.clone();
    let stored = tokio::task::spawn_blocking(move || book.lock().expect("rating book lock").submit(sub))
        .await
        .expect("rating task");
    match stored {
        Ok(rating) => (StatusCode::CREATED, Json(rating)).into_response(),
        Err(e) => rating_error(e),
    }
}

/// Serves until Ctrl-C.
pub async fn serve(listener: tokio::net::TcpListener, app: Router) -> std::io::Result<()> {
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
