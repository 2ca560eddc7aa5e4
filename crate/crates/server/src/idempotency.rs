//! Replay of POST responses keyed by a client-supplied request id.

use std::collections::HashMap;
use std::sync::Arc;

use axum::body::{to_bytes, Body, Bytes};
use axum::extract::{Request, State};
use axum::http::{HeaderMap, Method, StatusCode};
use axum::middleware::Next;
use axum::response::{IntoResponse, Response};

use crate::error::ApiError;

/// Accepted spellings of the request-id header.
pub const REQUEST_ID_HEADERS: [&str; 3] = ["request_id", "request-id", "x-request-id"];

const MAX_BODY: usize = 16 << 20;

#[derive(Debug, Clone)]
struct Recorded {
    status: StatusCode,
    headers: HeaderMap,
    body: Bytes,
}

type Slot = Arc<tokio::sync::Mutex<Option<Recorded>>>;

#[derive(Debug, Default)]
pub struct IdempotencyCache {
    slots: parking_lot::Mutex<HashMap<(String, String), Slot>>,
}

impl IdempotencyCache {
    fn slot(&self, path: &str, id: &str) -> Slot {
        self.slots.lock().entry((path.to_string(), id.to_string())).or_default().clone()
    }

    pub fn len(&self) -> usize {
        self.slots.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn request_id(headers: &HeaderMap) -> Option<String> {
    REQUEST_ID_HEADERS
        .iter()
        .find_map(|h| headers.get(*h))
        .and_then(|v| v.to_str().ok())
        .map(str::to_string)
}

/// Runs a POST with a request id at most once per path; retries get the
/// recorded response. Concurrent retries wait for the first to finish.
pub async fn layer(State(cache): State<Arc<IdempotencyCache>>, req: Request, next: Next) -> Response {
    let id = match request_id(req.headers()) {
        Some(id) if req.method() == Method::POST => id,
        _ => return next.run(req).await,
    };
    let slot = cache.slot(req.uri().path(), &id);
    let mut guard = slot.lock().await;
    if let Some(r) = guard.as_ref() {
        return replay(r);
    }
    let (parts, body) = next.run(req).await.into_parts();
    let body = match to_bytes(body, MAX_BODY).await {
        Ok(b) => b,
        Err(e) => return ApiError::internal(format!("response body: {e}")).into_response(),
    };
    let recorded = Recorded { status: parts.status, headers: parts.headers, body };
    let response = replay(&recorded);
    // Server errors are not final; a retry may succeed.
    if !recorded.status.is_server_error() {
        *guard = Some(recorded);
    }
    response
}

fn replay(r: &Recorded) -> Response {
    let mut resp = Response::new(Body::from(r.body.clone()));
    *resp.status_mut() = r.status;
    *resp.headers_mut() = r.headers.clone();
    resp
}
