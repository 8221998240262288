//! Typed client for the textcraft HTTP service.

use std::path::PathBuf;

use reqwest::StatusCode;
use serde::de::DeserializeOwned;
use serde::Serialize;
use textcraft_core::harness::{ExperimentConfig, ExperimentSummary};
use textcraft_server::api::{
    ExportRequest, ExportResponse, Health, MetricsResponse, PartitionResponse, RecordsRequest, VerifyResponse,
};
use textcraft_server::protocol::{Created, ErrorBody, MatchSpec, MatchStatus};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("server answered {status}: {message}")]
    Status { status: StatusCode, message: String },
    #[error("request failed: {0}")]
    Transport(#[from] reqwest::Error),
}

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    pub fn new(base_url: &str) -> Client {
        Client { base: base_url.trim_end_matches('/').to_string(), http: reqwest::Client::new() }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    /// WebSocket URL of a match stream.
    pub fn stream_url(&self, id: &str) -> String {
        let ws = if let Some(rest) = self.base.strip_prefix("https://") {
            format!("wss://{rest}")
        } else if let Some(rest) = self.base.strip_prefix("http://") {
            format!("ws://{rest}")
        } else {
            self.base.clone()
        };
        format!("{ws}/matches/{id}/stream")
    }

    async fn decode<T: DeserializeOwned>(resp: reqwest::Response) -> Result<T, ClientError> {
        let status = resp.status();
        if status.is_success() {
            return Ok(resp.json().await?);
        }
        let text = resp.text().await.unwrap_or_default();
        let message = serde_json::from_str::<ErrorBody>(&text).map(|b| b.error).unwrap_or(text);
        Err(ClientError::Status { status, message })
    }

    async fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T, ClientError> {
        Self::decode(self.http.get(format!("{}{path}", self.base)).send().await?).await
    }

    async fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T, ClientError> {
        Self::decode(self.http.post(format!("{}{path}", self.base)).json(body).send().await?).await
    }

    pub async fn health(&self) -> Result<Health, ClientError> {
        self.get("/healthz").await
    }

    pub async fn create_match(&self, spec: &MatchSpec) -> Result<Created, ClientError> {
        self.post("/matches", spec).await
    }

    pub async fn match_status(&self, id: &str) -> Result<MatchStatus, ClientError> {
        self.get(&format!("/matches/{id}")).await
    }

    pub async fn run_experiment(&self, cfg: &ExperimentConfig) -> Result<ExperimentSummary, ClientError> {
        self.post("/experiments", cfg).await
    }

    pub async fn metrics(&self, paths: Vec<PathBuf>, label: Option<String>) -> Result<MetricsResponse, ClientError> {
        self.post("/metrics", &RecordsRequest { paths, label }).await
    }

    pub async fn partition(&self, paths: Vec<PathBuf>) -> Result<PartitionResponse, ClientError> {
        self.post("/partition", &RecordsRequest { paths, label: None }).await
    }

    pub async fn export_pairs(&self, req: &ExportRequest) -> Result<ExportResponse, ClientError> {
        self.post("/export-pairs", req).await
    }

    pub async fn replay_verify(&self, paths: Vec<PathBuf>) -> Result<VerifyResponse, ClientError> {
        self.post("/replay-verify", &RecordsRequest { paths, label: None }).await
    }
}
