//! WebSocket endpoint: one session per connection on `/ws`.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::Router;
use futures::{SinkExt, StreamExt};
use tokio::net::TcpListener;
use tokio::sync::mpsc;

use crate::pipeline::Pipeline;
use crate::session::{run_session, Incoming, Outgoing, Scene, Session, SessionConfig};

#[derive(Clone)]
pub struct AppState {
    pub scene: Arc<Scene>,
    pub pipeline: Arc<Pipeline>,
    pub session: SessionConfig,
    next_id: Arc<AtomicU64>,
}

impl AppState {
    pub fn new(scene: Scene, pipeline: Pipeline, session: SessionConfig) -> Self {
        Self { scene: Arc::new(scene), pipeline: Arc::new(pipeline), session, next_id: Arc::new(AtomicU64::new(1)) }
    }
}

pub fn app(state: AppState) -> Router {
    Router::new().route("/ws", get(ws_handler)).route("/health", get(|| async { "ok" })).with_state(state)
}

pub async fn serve(listener: TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, app(state)).await
}

async fn ws_handler(ws: WebSocketUpgrade, State(state): State<AppState>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| connection(socket, state))
}

async fn connection(socket: WebSocket, state: AppState) {
    let id = state.next_id.fetch_add(1, Ordering::SeqCst);
    tracing::info!(session = id, "viewer connected");
    let (mut sink, mut stream) = socket.split();
    let (in_tx, in_rx) = mpsc::channel(16);
    // small buffer: a slow viewer makes the frame loop wait, and the
    // schedule then skips frames instead of queueing them
    let (out_tx, mut out_rx) = mpsc::channel::<Outgoing>(4);
    let writer = tokio::spawn(async move {
        while let Some(m) = out_rx.recv().await {
            let msg = match m {
                Outgoing::Text(t) => Message::Text(t.into()),
                Outgoing::Binary(b) => Message::Binary(b.into()),
            };
            if sink.send(msg).await.is_err() {
                break;
            }
        }
        let _ = sink.close().await;
    });
    let reader = tokio::spawn(async move {
        while let Some(Ok(msg)) = stream.next().await {
            let m = match msg {
                Message::Text(t) => Incoming::Text(t.to_string()),
                Message::Binary(b) => Incoming::Binary(b.to_vec()),
                Message::Close(_) => break,
                _ => continue,
            };
            if in_tx.send(m).await.is_err() {
                break;
            }
        }
    });
    run_session(Session::new(id), state.scene, state.pipeline, state.session, in_rx, out_tx).await;
    reader.abort();
    let _ = writer.await;
    tracing::info!(session = id, "viewer disconnected");
}
