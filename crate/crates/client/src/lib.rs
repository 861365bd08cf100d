//! Thin async client for the shadowdrive service.

use futures_util::{SinkExt, StreamExt};
use serde::de::DeserializeOwned;
use serde::Serialize;
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{MaybeTlsStream, WebSocketStream};

use shadowdrive_core::api::{
    ClientMessage, ErrorBody, EvalRequest, EvalResponse, ReplayRequest, ScenarioList, ServerMessage, SimulateRequest,
    SimulateResponse, SuiteRequest,
};
use shadowdrive_core::harness::TestScenario;
use shadowdrive_core::session::ReplayOutcome;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("request failed: {0}")]
    Http(#[from] reqwest::Error),

    /// The service rejected the request.
    #[error("{}: {}", .0.code, .0.detail)]
    Api(ErrorBody),

    #[error("unexpected {status} response: {body}")]
    Status { status: u16, body: String },

    #[error("websocket: {0}")]
    WebSocket(#[from] tokio_tungstenite::tungstenite::Error),

    #[error("bad server message: {0}")]
    Decode(#[from] serde_json::Error),
}

pub type Result<T, E = ClientError> = std::result::Result<T, E>;

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    /// `base` is the service root, e.g. `http://127.0.0.1:8080`.
    pub fn new(base: impl Into<String>) -> Self {
        Client {
            base: base.into().trim_end_matches('/').to_string(),
            http: reqwest::Client::new(),
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    async fn decode<T: DeserializeOwned>(resp: reqwest::Response) -> Result<T> {
        let status = resp.status();
        if status.is_success() {
            return Ok(resp.json().await?);
        }
        let body = resp.text().await?;
        match serde_json::from_str::<ErrorBody>(&body) {
            Ok(err) => Err(ClientError::Api(err)),
            Err(_) => Err(ClientError::Status {
                status: status.as_u16(),
                body,
            }),
        }
    }

    async fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T> {
        let resp = self.http.post(format!("{}{path}", self.base)).json(body).send().await?;
        Self::decode(resp).await
    }

    pub async fn health(&self) -> Result<()> {
        let resp = self.http.get(format!("{}/health", self.base)).send().await?;
        if resp.status().is_success() {
            Ok(())
        } else {
            Err(ClientError::Status {
                status: resp.status().as_u16(),
                body: resp.text().await?,
            })
        }
    }

    pub async fn scenarios(&self) -> Result<ScenarioList> {
        let resp = self.http.get(format!("{}/api/scenarios", self.base)).send().await?;
        Self::decode(resp).await
    }

    pub async fn simulate(&self, req: &SimulateRequest) -> Result<SimulateResponse> {
        self.post("/api/simulate", req).await
    }

    pub async fn suite(&self, req: &SuiteRequest) -> Result<Vec<TestScenario>> {
        self.post("/api/suite", req).await
    }

    pub async fn eval(&self, req: &EvalRequest) -> Result<EvalResponse> {
        self.post("/api/eval", req).await
    }

    pub async fn replay(&self, req: &ReplayRequest) -> Result<ReplayOutcome> {
        self.post("/api/replay", req).await
    }

    /// Opens a live session and sends `hello`.
    pub async fn connect(&self, hello: &ClientMessage) -> Result<SessionClient> {
        let ws_base = if let Some(rest) = self.base.strip_prefix("https://") {
            format!("wss://{rest}")
        } else if let Some(rest) = self.base.strip_prefix("http://") {
            format!("ws://{rest}")
        } else {
            self.base.clone()
        };
        let (stream, _) = tokio_tungstenite::connect_async(format!("{ws_base}/ws")).await?;
        let mut session = SessionClient { stream };
        session.send(hello).await?;
        Ok(session)
    }
}

/// A connected WebSocket session.
pub struct SessionClient {
    stream: WebSocketStream<MaybeTlsStream<TcpStream>>,
}

impl SessionClient {
    pub async fn send(&mut self, msg: &ClientMessage) -> Result<()> {
        self.send_raw(serde_json::to_string(msg)?).await
    }

    /// Sends an arbitrary text frame; useful for exercising protocol errors.
    pub async fn send_raw(&mut self, text: String) -> Result<()> {
        self.stream.send(Message::text(text)).await?;
        Ok(())
    }

    /// Next server message, or `None` once the server closes the session.
    pub async fn recv(&mut self) -> Result<Option<ServerMessage>> {
        while let Some(frame) = self.stream.next().await {
            match frame? {
                Message::Text(text) => return Ok(Some(serde_json::from_str(&text)?)),
                Message::Close(_) => return Ok(None),
                _ => {}
            }
        }
        Ok(None)
    }

    /// Reads messages until the server closes, returning all of them.
    pub async fn drain(&mut self) -> Result<Vec<ServerMessage>> {
        let mut out = Vec::new();
        while let Some(msg) = self.recv().await? {
            out.push(msg);
        }
        Ok(out)
    }

    pub async fn close(mut self) -> Result<()> {
        self.stream.close(None).await?;
        Ok(())
    }
}
