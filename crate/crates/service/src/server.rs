//! HTTP document endpoints and the session socket.
//!
//! All paths live under `/api/v1`:
//!
//! | method | path | |
//! |---|---|---|
//! | GET | `/project` | project summary |
//! | POST | `/project/save` | write the session graph to the project files |
//! | POST | `/project/load` | reload the graph from the project files |
//! | GET | `/graph` | graph snapshot with session version |
//! | GET | `/export/spots.csv`, `/export/links.csv` | CSV export |
//! | GET | `/volume/slab?t=&x0=&y0=&z0=&x1=&y1=&z1=` | raw sub-box of one frame |
//! | GET | `/ws` | session protocol socket |
//!
//! A slab response is a little-endian `u32` byte length, a JSON descriptor
//! of that length, then the samples as little-endian `u16`, x fastest. The
//! box bounds are voxel indices, upper bounds exclusive, and are clipped to
//! the volume; the descriptor reports both boxes.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::net::TcpListener;
use tokio::sync::watch;

use celltrace::bridge::{Envelope, Request, Session, ENGINE, PROTOCOL_VERSION};
use celltrace::project::{write_graph, Project};
use celltrace::volume::VoxelBox;

/// Interval of the playback clock.
pub const TICK: Duration = Duration::from_millis(25);

pub struct AppState {
    session: Mutex<Session>,
    project: Project,
    /// Bumped after every change so socket tasks flush their outboxes.
    changed: watch::Sender<u64>,
}

impl AppState {
    /// Takes the project's graph and volume into a new session.
    pub fn new(project: Project) -> anyhow::Result<Arc<Self>> {
        let mut session = Session::new(
            project.graph.clone(),
            Some(Arc::new(project.volume.clone())),
            project.manifest.config.clone(),
        )?;
        session.set_log_enabled(false);
        let (changed, _) = watch::channel(0);
        Ok(Arc::new(AppState { session: Mutex::new(session), project, changed }))
    }

    pub fn session(&self) -> MutexGuard<'_, Session> {
        self.session.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn notify(&self) {
        self.changed.send_modify(|v| *v += 1);
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/v1/project", get(project_info))
        .route("/api/v1/project/save", post(save_project))
        .route("/api/v1/project/load", post(load_project))
        .route("/api/v1/graph", get(graph_snapshot))
        .route("/api/v1/export/spots.csv", get(export_spots))
        .route("/api/v1/export/links.csv", get(export_links))
        .route("/api/v1/volume/slab", get(volume_slab))
        .route("/api/v1/ws", get(socket))
        .with_state(state)
}

/// Serves until the listener fails or ctrl-c.
pub async fn serve(project: Project, listener: TcpListener) -> anyhow::Result<()> {
    let state = AppState::new(project)?;
    tokio::spawn(playback_clock(state.clone()));
    let addr: SocketAddr = listener.local_addr()?;
    tracing::info!(%addr, "serving");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

/// Drives session playback in real time.
pub async fn playback_clock(state: Arc<AppState>) {
    let mut tick = tokio::time::interval(TICK);
    let mut last = Instant::now();
    loop {
        tick.tick().await;
        let now = Instant::now();
        let dt = (now - last).as_secs_f64();
        last = now;
        let moved = {
            let mut s = state.session();
            if !s.is_playing() {
                continue;
            }
            let v = s.version();
            s.advance_playback(dt);
            s.version() != v
        };
        if moved {
            state.notify();
        }
    }
}

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

fn internal(e: impl std::fmt::Display) -> ApiError {
    ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
}

async fn project_info(State(st): State<Arc<AppState>>) -> Json<Value> {
    let s = st.session();
    let h = st.project.volume.header();
    Json(json!({
        "name": st.project.manifest.name,
        "timepoints": s.graph().timepoints(),
        "dims": h.dims,
        "voxelSize": h.voxel_size,
        "version": s.version(),
        "timepoint": s.timepoint(),
        "protocolVersion": PROTOCOL_VERSION,
        "config": st.project.manifest.config,
    }))
}

async fn save_project(State(st): State<Arc<AppState>>) -> Result<Json<Value>, ApiError> {
    let s = st.session();
    let path: PathBuf = st.project.graph_path();
    write_graph(s.graph(), &path).map_err(internal)?;
    Ok(Json(json!({
        "graph": path,
        "spots": s.graph().spot_count(),
        "links": s.graph().link_count(),
        "version": s.version(),
    })))
}

async fn load_project(State(st): State<Arc<AppState>>) -> Result<Json<Value>, ApiError> {
    let loaded = Project::open(&st.project.manifest_path()).map_err(|e| ApiError(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
    let body = {
        let mut s = st.session();
        s.replace_graph(loaded.graph).map_err(|e| ApiError(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
        json!({ "spots": s.graph().spot_count(), "links": s.graph().link_count(), "version": s.version() })
    };
    st.notify();
    Ok(Json(body))
}

async fn graph_snapshot(State(st): State<Arc<AppState>>) -> Json<Value> {
    let s = st.session();
    Json(json!({ "version": s.version(), "timepoint": s.timepoint(), "snapshot": s.graph().snapshot() }))
}

fn csv_response(body: String) -> Response {
    ([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], body).into_response()
}

async fn export_spots(State(st): State<Arc<AppState>>) -> Response {
    csv_response(st.session().graph().to_csv().0)
}

async fn export_links(State(st): State<Arc<AppState>>) -> Response {
    csv_response(st.session().graph().to_csv().1)
}

#[derive(Debug, Deserialize)]
struct SlabQuery {
    t: i64,
    #[serde(default)]
    x0: i64,
    #[serde(default)]
    y0: i64,
    #[serde(default)]
    z0: i64,
    x1: Option<i64>,
    y1: Option<i64>,
    z1: Option<i64>,
}

async fn volume_slab(State(st): State<Arc<AppState>>, Query(q): Query<SlabQuery>) -> Result<Response, ApiError> {
    let volume = &st.project.volume;
    let h = volume.header();
    let requested = VoxelBox {
        min: [q.x0, q.y0, q.z0],
        max: [
            q.x1.unwrap_or(h.dims[0] as i64),
            q.y1.unwrap_or(h.dims[1] as i64),
            q.z1.unwrap_or(h.dims[2] as i64),
        ],
    };
    let slab = volume.slab(q.t, requested).map_err(|e| ApiError(StatusCode::BAD_REQUEST, e.to_string()))?;
    let descriptor = json!({
        "timepoint": slab.timepoint,
        "requested": slab.requested,
        "box": slab.actual,
        "dims": slab.actual.dims(),
        "voxelSize": h.voxel_size,
        "valueType": "uint16",
        "byteOrder": "little",
        "bytes": slab.data.len() * 2,
    });
    let desc = serde_json::to_vec(&descriptor).map_err(internal)?;
    let mut body = Vec::with_capacity(4 + desc.len() + slab.data.len() * 2);
    body.extend_from_slice(&(desc.len() as u32).to_le_bytes());
    body.extend_from_slice(&desc);
    for v in &slab.data {
        body.extend_from_slice(&v.to_le_bytes());
    }
    Ok(([(header::CONTENT_TYPE, "application/octet-stream")], Bytes::from(body)).into_response())
}

async fn socket(ws: WebSocketUpgrade, State(st): State<Arc<AppState>>) -> Response {
    ws.on_upgrade(move |socket| client_loop(st, socket))
}

/// One connected client. The first message must be a `hello` carrying the
/// server's protocol version; otherwise the socket is rejected and closed.
async fn client_loop(st: Arc<AppState>, mut socket: WebSocket) {
    let id = st.session().connect();
    let mut changed = st.changed.subscribe();
    let mut greeted = false;
    tracing::debug!(client = %id, "connected");
    if flush(&st, &id, &mut socket).await.is_ok() {
        loop {
            tokio::select! {
                msg = socket.recv() => {
                    let text = match msg {
                        Some(Ok(Message::Text(t))) => t.to_string(),
                        Some(Ok(Message::Binary(_))) => {
                            let reject = Envelope::new("reject", 0, ENGINE, json!({ "request": null, "reason": "binary frames are not supported" }));
                            if socket.send(Message::Text(reject.to_json().into())).await.is_err() {
                                break;
                            }
                            continue;
                        }
                        Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                        Some(Ok(_)) => continue,
                    };
                    if !greeted {
                        match handshake(&text) {
                            Ok(()) => greeted = true,
                            Err(reason) => {
                                let reject = Envelope::new("reject", 0, ENGINE, json!({ "request": "hello", "reason": reason }));
                                let _ = socket.send(Message::Text(reject.to_json().into())).await;
                                let _ = socket.send(Message::Close(None)).await;
                                break;
                            }
                        }
                    }
                    st.session().handle_text(&id, &text);
                    st.notify();
                }
                res = changed.changed() => {
                    if res.is_err() {
                        break;
                    }
                }
            }
            if flush(&st, &id, &mut socket).await.is_err() {
                break;
            }
        }
    }
    st.session().disconnect(&id);
    tracing::debug!(client = %id, "disconnected");
}

fn handshake(text: &str) -> Result<(), String> {
    let env: Envelope = serde_json::from_str(text).map_err(|e| format!("expected hello: {e}"))?;
    match env.to_request() {
        Ok(Request::Hello { protocol_version }) if protocol_version == PROTOCOL_VERSION => Ok(()),
        Ok(Request::Hello { protocol_version }) => {
            Err(format!("protocol version {protocol_version} unsupported, server speaks {PROTOCOL_VERSION}"))
        }
        _ => Err(format!("expected hello, got {}", env.kind)),
    }
}

async fn flush(st: &AppState, id: &str, socket: &mut WebSocket) -> Result<(), axum::Error> {
    let out = st.session().drain(id);
    for env in out {
        socket.send(Message::Text(env.to_json().into())).await?;
    }
    Ok(())
}
