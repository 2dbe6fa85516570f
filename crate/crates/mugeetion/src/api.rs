//! HTTP and WebSocket control API.
//!
//! - `GET /v1/snapshot`: the latest [`Snapshot`](crate::engine::Snapshot).
//! - `GET /v1/model`, `GET /v1/profile`: the active model and profile.
//! - `POST /v1/control`: a [`ControlCommand`]; replies with an [`Ack`].
//! - `GET /v1/live`: WebSocket pushing snapshots, at most 15 per second.
//!
//! Errors are JSON objects `{"error": kind, "message": text}` with 503 when
//! the engine is not running and 422 when validation fails.

use std::net::SocketAddr;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use axum::extract::rejection::JsonRejection;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::json;
use tokio::sync::oneshot;

use crate::engine::{Ack, ControlCommand, ControlError, EngineHandle};

/// Minimum spacing between WebSocket pushes.
pub const LIVE_INTERVAL: Duration = Duration::from_millis(1000 / 15);

pub struct ApiServer {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl ApiServer {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ApiServer {
    fn drop(&mut self) {
        self.stop();
    }
}

/// Binds `addr` and serves the API on a background thread.
pub fn serve(handle: EngineHandle, addr: SocketAddr) -> std::io::Result<ApiServer> {
    let listener = std::net::TcpListener::bind(addr)?;
    listener.set_nonblocking(true)?;
    let local = listener.local_addr()?;
    let rt = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()?;
    let (tx, rx) = oneshot::channel::<()>();
    let thread = thread::Builder::new().name("control-api".into()).spawn(move || {
        rt.block_on(async move {
            let listener = match tokio::net::TcpListener::from_std(listener) {
                Ok(l) => l,
                Err(e) => {
                    log::error!("control API: {e}");
                    return;
                }
            };
            let served = axum::serve(listener, router(handle))
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await;
            if let Err(e) = served {
                log::error!("control API: {e}");
            }
        });
        rt.shutdown_timeout(Duration::from_secs(1));
    })?;
    log::info!("control API on http://{local}");
    Ok(ApiServer {
        addr: local,
        shutdown: Some(tx),
        thread: Some(thread),
    })
}

pub fn router(handle: EngineHandle) -> Router {
    Router::new()
        .route("/v1/snapshot", get(snapshot))
        .route("/v1/model", get(model))
        .route("/v1/profile", get(profile))
        .route("/v1/control", post(control))
        .route("/v1/live", get(live))
        .with_state(handle)
}

fn error(status: StatusCode, kind: &str, message: impl ToString) -> Response {
    (
        status,
        Json(json!({ "error": kind, "message": message.to_string() })),
    )
        .into_response()
}

fn not_running() -> Response {
    error(
        StatusCode::SERVICE_UNAVAILABLE,
        "NotRunning",
        "engine is not running",
    )
}

async fn snapshot(State(h): State<EngineHandle>) -> Response {
    match h.snapshot() {
        Ok(s) => Json(&*s).into_response(),
        Err(_) => not_running(),
    }
}

async fn model(State(h): State<EngineHandle>) -> Response {
    match h.model() {
        Ok(m) => Json(&*m).into_response(),
        Err(_) => not_running(),
    }
}

async fn profile(State(h): State<EngineHandle>) -> Response {
    match h.profile() {
        Ok(p) => Json(&*p).into_response(),
        Err(_) => not_running(),
    }
}

async fn control(
    State(h): State<EngineHandle>,
    body: Result<Json<ControlCommand>, JsonRejection>,
) -> Response {
    let Json(cmd) = match body {
        Ok(b) => b,
        Err(e) => return error(StatusCode::BAD_REQUEST, "BadRequest", e.body_text()),
    };
    let result = tokio::task::spawn_blocking(move || h.control(cmd)).await;
    match result {
        Ok(Ok(ack)) => Json::<Ack>(ack).into_response(),
        Ok(Err(ControlError::ValidationFailed(m))) => {
            error(StatusCode::UNPROCESSABLE_ENTITY, "ValidationFailed", m)
        }
        Ok(Err(ControlError::NotRunning)) => not_running(),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, "Internal", e),
    }
}

async fn live(ws: WebSocketUpgrade, State(h): State<EngineHandle>) -> Response {
    ws.on_upgrade(move |socket| push_snapshots(socket, h))
}

/// Sends a snapshot whenever a new frame has been processed, no more often
/// than [`LIVE_INTERVAL`]. Closes once the engine stops.
async fn push_snapshots(mut socket: WebSocket, h: EngineHandle) {
    let mut ticker = tokio::time::interval(LIVE_INTERVAL);
    ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    let mut last_sent: Option<(u64, String)> = None;
    loop {
        ticker.tick().await;
        let snap = match h.snapshot() {
            Ok(s) => s,
            Err(_) => {
                let _ = socket.send(Message::Close(None)).await;
                return;
            }
        };
        let key = (snap.ticks, snap.config_hash.clone());
        if last_sent.as_ref() == Some(&key) {
            continue;
        }
        let text = match serde_json::to_string(&*snap) {
            Ok(t) => t,
            Err(e) => {
                log::error!("snapshot encoding: {e}");
                return;
            }
        };
        if socket.send(Message::Text(text)).await.is_err() {
            return;
        }
        last_sent = Some(key);
    }
}
