//! Typed async client for the task service.
//!
//! ```no_run
//! # async fn demo() -> Result<(), perceptkit_client::ClientError> {
//! let client = perceptkit_client::Client::new("http://127.0.0.1:8640")?;
//! for s in client.list_sessions().await? {
//!     println!("{} {:?}", s.id, s.state);
//! }
//! # Ok(())
//! # }
//! ```

use perceptkit_core::corpus::{RedundancyPlan, Stream};
use perceptkit_core::decoder::DelayModel;
use perceptkit_core::metrics::{BootstrapCi, HypeScore};
use perceptkit_core::staircase::HypeTimeScore;
use perceptkit_protocol::*;
use reqwest::{Method, StatusCode};
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("invalid server URL `{0}`")]
    BadUrl(String),
    #[error("transport: {0}")]
    Transport(#[from] reqwest::Error),
    /// The server answered with an error body.
    #[error("{status}: {} ({})", body.message, body.code)]
    Api { status: StatusCode, body: ErrorBody },
}

impl ClientError {
    /// The service's error code, when the server produced the error.
    pub fn code(&self) -> Option<&str> {
        match self {
            ClientError::Api { body, .. } => Some(&body.code),
            _ => None,
        }
    }
}

pub type Result<T, E = ClientError> = std::result::Result<T, E>;

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    pub fn new(base_url: &str) -> Result<Self> {
        let base = base_url.trim_end_matches('/').to_string();
        if !(base.starts_with("http://") || base.starts_with("https://")) {
            return Err(ClientError::BadUrl(base_url.to_string()));
        }
        Ok(Self {
            base,
            http: reqwest::Client::new(),
        })
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    fn url(&self, path: &str) -> String {
        format!("{}{API_PREFIX}{path}", self.base)
    }

    async fn send<T: DeserializeOwned>(&self, req: reqwest::RequestBuilder) -> Result<T> {
        let resp = check(req.send().await?).await?;
        Ok(resp.json().await?)
    }

    async fn call<B: Serialize + ?Sized, T: DeserializeOwned>(&self, method: Method, path: &str, body: Option<&B>) -> Result<T> {
        let mut req = self.http.request(method, self.url(path));
        if let Some(b) = body {
            req = req.json(b);
        }
        self.send(req).await
    }

    async fn post<B: Serialize + ?Sized, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T> {
        self.call(Method::POST, path, Some(body)).await
    }

    async fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T> {
        self.call::<(), T>(Method::GET, path, None).await
    }

    pub async fn health(&self) -> Result<Health> {
        self.get("/health").await
    }

    pub async fn create_session(&self, req: &CreateSession) -> Result<Session> {
        self.post("/sessions", req).await
    }

    pub async fn list_sessions(&self) -> Result<Vec<Session>> {
        self.get("/sessions").await
    }

    pub async fn get_task_spec(&self, session_id: &str) -> Result<TaskView> {
        self.get(&format!("/sessions/{session_id}")).await
    }

    pub async fn append_events(&self, session_id: &str, events: &[EventRecord]) -> Result<Ack> {
        self.post(&format!("/sessions/{session_id}/events"), events).await
    }

    /// Sends an NDJSON event log as-is.
    pub async fn append_ndjson(&self, session_id: &str, ndjson: String) -> Result<Ack> {
        let req = self
            .http
            .post(self.url(&format!("/sessions/{session_id}/events")))
            .header(reqwest::header::CONTENT_TYPE, "application/x-ndjson")
            .body(ndjson);
        self.send(req).await
    }

    /// The stored event log, byte for byte.
    pub async fn events_ndjson(&self, session_id: &str) -> Result<String> {
        let resp = check(self.http.get(self.url(&format!("/sessions/{session_id}/events"))).send().await?).await?;
        Ok(resp.text().await?)
    }

    pub async fn finalize(&self, session_id: &str) -> Result<ExportBundle> {
        self.post(&format!("/sessions/{session_id}/finalize"), &()).await
    }

    pub async fn export(&self, session_id: &str) -> Result<ExportBundle> {
        self.get(&format!("/sessions/{session_id}/export")).await
    }

    /// WebSocket URL of a session's live channel.
    pub fn live_url(&self, session_id: &str) -> String {
        let ws = self.base.replacen("http", "ws", 1);
        format!("{ws}{API_PREFIX}/sessions/{session_id}/live")
    }

    pub async fn build_stream(&self, req: &StreamRequest) -> Result<Stream> {
        self.post("/streams", req).await
    }

    pub async fn plan_redundancy(&self, req: &PlanRequest) -> Result<RedundancyPlan> {
        self.post("/plans", req).await
    }

    pub async fn calibrate(&self, req: &CalibrateRequest) -> Result<DelayModel> {
        self.post("/calibrate", req).await
    }

    pub async fn decode(&self, req: &DecodeRequest) -> Result<DecodeResponse> {
        self.post("/decode", req).await
    }

    pub async fn speedup(&self, req: &SpeedupRequest) -> Result<SpeedupResponse> {
        self.post("/speedup", req).await
    }

    pub async fn hype_score(&self, req: &HypeScoreRequest) -> Result<HypeScore> {
        self.post("/hype/score", req).await
    }

    pub async fn time_score(&self, req: &TimeScoreRequest) -> Result<HypeTimeScore> {
        self.post("/hype/time-score", req).await
    }

    pub async fn qualify(&self, req: &QualifyRequest) -> Result<QualifyResponse> {
        self.post("/qualify", req).await
    }

    pub async fn bootstrap(&self, req: &BootstrapRequest) -> Result<BootstrapCi> {
        self.post("/bootstrap", req).await
    }

    pub async fn stats(&self, req: &StatsRequest) -> Result<StatsResponse> {
        self.post("/stats", req).await
    }

    pub async fn cascade_plan(&self, req: &CascadePlanRequest) -> Result<CascadePlanResponse> {
        self.post("/cascade/plan", req).await
    }

    pub async fn naive_cost(&self, req: &NaiveCostRequest) -> Result<CostResponse> {
        self.post("/cascade/naive-cost", req).await
    }
}

async fn check(resp: reqwest::Response) -> Result<reqwest::Response> {
    let status = resp.status();
    if status.is_success() {
        return Ok(resp);
    }
    let text = resp.text().await.unwrap_or_default();
    let body = serde_json::from_str(&text).unwrap_or(ErrorBody {
        code: "http".into(),
        message: text,
    });
    Err(ClientError::Api { status, body })
}
