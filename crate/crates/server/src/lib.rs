//! Session service: HTTP/JSON operations plus a WebSocket endpoint that
//! hosts one live session per connection.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use axum::routing::{get, post};
use axum::Router;
use tokio::net::TcpListener;

use shadowdrive_core::api::{is_valid_id, ScenarioList};
use shadowdrive_core::harness::{load_suite, TestScenario};
use shadowdrive_core::sim::ScenarioSpec;
use shadowdrive_core::{Error, Result};

mod http;
mod ws;

pub const SUITE_FILE: &str = "suite.json";

#[derive(Debug, Clone)]
pub struct ServerConfig {
    /// Holds `<id>.json` scenario specs and an optional `suite.json`.
    pub scenario_dir: PathBuf,
    /// Traces go to `traces/`, quiz answers to `responses/`.
    pub data_dir: PathBuf,
    /// Wall-clock time between ticks of a live session.
    pub tick_interval: Duration,
}

impl ServerConfig {
    pub fn new(scenario_dir: impl Into<PathBuf>, data_dir: impl Into<PathBuf>) -> Self {
        ServerConfig {
            scenario_dir: scenario_dir.into(),
            data_dir: data_dir.into(),
            tick_interval: Duration::from_millis(100),
        }
    }

    pub fn traces_dir(&self) -> PathBuf {
        self.data_dir.join("traces")
    }

    pub fn responses_dir(&self) -> PathBuf {
        self.data_dir.join("responses")
    }
}

pub(crate) type AppState = Arc<ServerConfig>;

pub fn router(config: ServerConfig) -> Router {
    Router::new()
        .route("/health", get(http::health))
        .route("/api/scenarios", get(http::scenarios))
        .route("/api/simulate", post(http::simulate))
        .route("/api/suite", post(http::suite))
        .route("/api/eval", post(http::eval))
        .route("/api/replay", post(http::replay))
        .route("/ws", get(ws::upgrade))
        .with_state(Arc::new(config))
}

/// Serves until the listener fails.
pub async fn serve(listener: TcpListener, config: ServerConfig) -> std::io::Result<()> {
    tokio::fs::create_dir_all(config.traces_dir()).await?;
    tokio::fs::create_dir_all(config.responses_dir()).await?;
    tracing::info!(addr = %listener.local_addr()?, scenarios = %config.scenario_dir.display(), "listening");
    axum::serve(listener, router(config)).await
}

pub(crate) async fn load_scenario(dir: &Path, id: &str) -> Result<ScenarioSpec> {
    if !is_valid_id(id) || id == SUITE_FILE.trim_end_matches(".json") {
        return Err(Error::Usage(format!("invalid scenario id {id:?}")));
    }
    let path = dir.join(format!("{id}.json"));
    let text = tokio::fs::read_to_string(&path)
        .await
        .map_err(|_| Error::Usage(format!("unknown scenario {id:?}")))?;
    ScenarioSpec::from_json(&text, &path.display().to_string())
}

pub(crate) async fn load_suite_file(dir: &Path) -> Result<Vec<TestScenario>> {
    let path = dir.join(SUITE_FILE);
    let text = tokio::fs::read_to_string(&path)
        .await
        .map_err(|_| Error::Usage(format!("no quiz suite at {}", path.display())))?;
    load_suite(&text, &path.display().to_string())
}

pub(crate) async fn list_scenarios(dir: &Path) -> Result<ScenarioList> {
    let mut scenarios = Vec::new();
    let mut entries = tokio::fs::read_dir(dir).await?;
    while let Some(entry) = entries.next_entry().await? {
        let name = entry.file_name();
        let Some(stem) = name.to_str().and_then(|n| n.strip_suffix(".json")) else {
            continue;
        };
        if stem != "suite" && is_valid_id(stem) {
            scenarios.push(stem.to_string());
        }
    }
    scenarios.sort();
    let suite = match load_suite_file(dir).await {
        Ok(s) => Some(s.into_iter().map(|s| s.id).collect()),
        Err(_) => None,
    };
    Ok(ScenarioList { scenarios, suite })
}
