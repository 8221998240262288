//! HTTP/JSON service over the core library: experiments, record analytics and live matches.

pub mod api;
mod live;
pub mod protocol;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use textcraft_core::harness::{replay_verify_path, run_experiment, ExperimentConfig, ExperimentSummary};
use textcraft_core::metrics::{aggregate, compute, export_finetune_pairs, format_table, partition_by_apu, PairFilter};
use textcraft_core::record::MatchRecord;
use tokio::net::TcpListener;
use tokio::sync::broadcast::error::RecvError;

use api::{
    ExportRequest, ExportResponse, Health, MetricsResponse, PartitionResponse, RecordsRequest, VerifyOutcome,
    VerifyResponse,
};
pub use live::LiveMatch;
use protocol::{ClientMessage, Created, ErrorBody, MatchSpec, MatchStatus, ServerMessage, SCHEMA};

#[derive(Default)]
pub struct AppState {
    matches: Mutex<HashMap<String, Arc<LiveMatch>>>,
}

pub type Shared = Arc<AppState>;

/// An error answered as `{"error": ...}` with a status code.
#[derive(Debug)]
pub struct ApiError(pub StatusCode, pub String);

impl ApiError {
    fn bad_request(msg: impl ToString) -> ApiError {
        ApiError(StatusCode::BAD_REQUEST, msg.to_string())
    }

    fn not_found(msg: impl ToString) -> ApiError {
        ApiError(StatusCode::NOT_FOUND, msg.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(ErrorBody { error: self.1 })).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
}

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/schema", get(schema))
        .route("/matches", post(create_match).get(list_matches))
        .route("/matches/{id}", get(match_status))
        .route("/matches/{id}/stream", get(stream))
        .route("/experiments", post(experiments))
        .route("/metrics", post(metrics))
        .route("/partition", post(partition))
        .route("/export-pairs", post(export_pairs))
        .route("/replay-verify", post(replay_verify))
        .with_state(state)
}

/// Binds `addr` and serves until the task is dropped; returns the bound address.
pub async fn bind(
    addr: SocketAddr,
) -> std::io::Result<(SocketAddr, impl std::future::Future<Output = std::io::Result<()>>)> {
    let listener = TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    let app = router(Shared::default());
    Ok((local, async move { axum::serve(listener, app).await }))
}

async fn healthz() -> Json<Health> {
    Json(Health { status: "ok".into(), version: env!("CARGO_PKG_VERSION").into() })
}

async fn schema() -> Response {
    ([(axum::http::header::CONTENT_TYPE, "application/schema+json")], SCHEMA).into_response()
}

async fn create_match(State(state): State<Shared>, body: Bytes) -> Result<(StatusCode, Json<Created>), ApiError> {
    let spec: MatchSpec = parse(&body)?;
    let id = uuid::Uuid::new_v4().simple().to_string();
    let m = blocking({
        let id = id.clone();
        move || LiveMatch::create(id, spec).map_err(ApiError::bad_request)
    })
    .await?;
    state.matches.lock().unwrap().insert(id.clone(), Arc::new(m));
    tracing::info!(%id, "match created");
    Ok((StatusCode::CREATED, Json(Created { id })))
}

fn lookup(state: &Shared, id: &str) -> Result<Arc<LiveMatch>, ApiError> {
    state
        .matches
        .lock()
        .unwrap()
        .get(id)
        .cloned()
        .ok_or_else(|| ApiError::not_found(format!("no match with id `{id}`")))
}

async fn list_matches(State(state): State<Shared>) -> Json<Vec<MatchStatus>> {
    let mut all: Vec<MatchStatus> = state.matches.lock().unwrap().values().map(|m| m.status()).collect();
    all.sort_by(|a, b| a.id.cmp(&b.id));
    Json(all)
}

async fn match_status(State(state): State<Shared>, Path(id): Path<String>) -> ApiResult<MatchStatus> {
    Ok(Json(lookup(&state, &id)?.status()))
}

async fn stream(
    State(state): State<Shared>,
    Path(id): Path<String>,
    ws: WebSocketUpgrade,
) -> Result<Response, ApiError> {
    let m = lookup(&state, &id)?;
    Ok(ws.on_upgrade(move |socket| session(socket, m)))
}

fn encode(msg: &ServerMessage) -> Message {
    Message::Text(serde_json::to_string(msg).expect("message serializes").into())
}

async fn session(mut socket: WebSocket, m: Arc<LiveMatch>) {
    let (latest, mut updates) = m.subscribe();
    if let Some(msg) = latest {
        if socket.send(encode(&msg)).await.is_err() {
            return;
        }
    }
    loop {
        tokio::select! {
            update = updates.recv() => match update {
                Ok(msg) => {
                    let done = matches!(msg, ServerMessage::Result { .. });
                    if socket.send(encode(&msg)).await.is_err() || done {
                        break;
                    }
                }
                Err(RecvError::Lagged(n)) => tracing::debug!(skipped = n, "slow stream subscriber"),
                Err(RecvError::Closed) => break,
            },
            incoming = socket.recv() => match incoming {
                Some(Ok(Message::Text(text))) => match serde_json::from_str::<ClientMessage>(&text) {
                    Ok(msg) => m.send(msg),
                    Err(e) => {
                        let err = ServerMessage::Error { message: format!("invalid message: {e}") };
                        if socket.send(encode(&err)).await.is_err() {
                            break;
                        }
                    }
                },
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                Some(Ok(_)) => {}
            },
        }
    }
    let _ = socket.send(Message::Close(None)).await;
}

async fn experiments(body: Bytes) -> ApiResult<ExperimentSummary> {
    let cfg: ExperimentConfig = parse(&body)?;
    cfg.validate().map_err(ApiError::bad_request)?;
    blocking(move || run_experiment(&cfg).map_err(ApiError::bad_request)).await.map(Json)
}

fn read_records(paths: &[PathBuf]) -> Result<Vec<MatchRecord>, ApiError> {
    if paths.is_empty() {
        return Err(ApiError::bad_request("no record paths given"));
    }
    paths.iter().map(|p| MatchRecord::read(p).map_err(ApiError::bad_request)).collect()
}

async fn metrics(body: Bytes) -> ApiResult<MetricsResponse> {
    let req: RecordsRequest = parse(&body)?;
    blocking(move || {
        let records = read_records(&req.paths)?;
        let reports = records.iter().map(compute).collect::<Result<Vec<_>, _>>().map_err(ApiError::bad_request)?;
        let summary = aggregate(req.label.as_deref().unwrap_or("records"), &reports).map_err(ApiError::bad_request)?;
        let table = format_table(std::slice::from_ref(&summary));
        Ok(MetricsResponse { reports, summary, table })
    })
    .await
    .map(Json)
}

async fn partition(body: Bytes) -> ApiResult<PartitionResponse> {
    let req: RecordsRequest = parse(&body)?;
    blocking(move || {
        let records = read_records(&req.paths)?;
        let reports = records.iter().map(compute).collect::<Result<Vec<_>, _>>().map_err(ApiError::bad_request)?;
        Ok(PartitionResponse { buckets: partition_by_apu(&reports).into() })
    })
    .await
    .map(Json)
}

async fn export_pairs(body: Bytes) -> ApiResult<ExportResponse> {
    let req: ExportRequest = parse(&body)?;
    let filter: PairFilter = req.filter.parse().map_err(ApiError::bad_request)?;
    blocking(move || {
        let records = read_records(&req.paths)?;
        let pairs = export_finetune_pairs(&records, filter).map_err(ApiError::bad_request)?;
        let count = pairs.len();
        match &req.output {
            Some(path) => {
                let mut text = String::new();
                for p in &pairs {
                    text.push_str(&serde_json::to_string(p).expect("pair serializes"));
                    text.push('\n');
                }
                std::fs::write(path, text).map_err(|e| ApiError::bad_request(format!("{}: {e}", path.display())))?;
                Ok(ExportResponse { count, output: Some(path.clone()), pairs: Vec::new() })
            }
            None => Ok(ExportResponse { count, output: None, pairs }),
        }
    })
    .await
    .map(Json)
}

async fn replay_verify(body: Bytes) -> ApiResult<VerifyResponse> {
    let req: RecordsRequest = parse(&body)?;
    if req.paths.is_empty() {
        return Err(ApiError::bad_request("no record paths given"));
    }
    blocking(move || {
        let results = req
            .paths
            .into_iter()
            .map(|path| match replay_verify_path(&path) {
                Ok(report) => VerifyOutcome { path, report: Some(report), error: None },
                Err(e) => VerifyOutcome { path, report: None, error: Some(e.to_string()) },
            })
            .collect();
        Ok(VerifyResponse { results })
    })
    .await
    .map(Json)
}
