//! Request/response bodies for the HTTP operations, the WebSocket session
//! protocol, and the in-process implementations of each operation.
//!
//! File contents travel as text so that parse errors keep their source names
//! and line numbers no matter which side of the wire reads them.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::delegate::PreviewEvent;
use crate::error::{Error, Result};
use crate::explain::Explanation;
use crate::harness::{self, Condition, MetricsReport, ParticipantResponse, TestScenario};
use crate::mpc::Maneuver;
use crate::session::{self, ControlLog, Mode, ReplayOutcome, SessionConfig};
use crate::sim::{LaneChangeCmd, VehicleState};

/// A named text blob, usually the contents of a file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceText {
    pub name: String,
    pub text: String,
}

impl SourceText {
    pub fn new(name: impl Into<String>, text: impl Into<String>) -> Self {
        SourceText {
            name: name.into(),
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateRequest {
    pub session: SessionConfig,
    /// JSON-lines control log; required in manual_preview, rejected otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control_log: Option<SourceText>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateResponse {
    pub records: usize,
    pub trace: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuiteRequest {
    pub seed: u64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRequest {
    pub responses: Vec<SourceText>,
    pub suite: SourceText,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResponse {
    pub report: MetricsReport,
    pub table: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayRequest {
    pub trace: SourceText,
}

/// Scenarios a server can host, by id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioList {
    pub scenarios: Vec<String>,
    /// Ids in the quiz suite, when the server has one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suite: Option<Vec<String>>,
}

/// Whether `id` is safe to use as a file stem (scenario, participant).
pub fn is_valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub detail: String,
}

impl From<&Error> for ErrorBody {
    fn from(e: &Error) -> Self {
        ErrorBody {
            code: e.code().to_string(),
            detail: e.to_string(),
        }
    }
}

pub fn simulate(req: &SimulateRequest) -> Result<SimulateResponse> {
    let log = req
        .control_log
        .as_ref()
        .map(|src| ControlLog::parse(&src.text, &src.name))
        .transpose()?;
    let records = session::run_headless(&req.session, log.as_ref())?;
    Ok(SimulateResponse {
        records: records.len(),
        trace: session::write_trace(&req.session, &records),
    })
}

pub fn suite(req: &SuiteRequest) -> Result<Vec<TestScenario>> {
    if req.n == 0 {
        return Err(Error::Usage("suite size must be at least 1".into()));
    }
    harness::generate_test_suite(req.seed, req.n)
}

/// Ingests every responses source, rejects duplicate participants, and scores them.
pub fn evaluate(req: &EvalRequest) -> Result<EvalResponse> {
    let suite = harness::load_suite(&req.suite.text, &req.suite.name)?;
    let mut responses: Vec<ParticipantResponse> = Vec::new();
    for src in &req.responses {
        responses.extend(harness::ingest_responses(&src.text, &src.name)?);
    }
    let mut seen = BTreeSet::new();
    for r in &responses {
        if !seen.insert(r.participant_id.as_str()) {
            return Err(Error::Ingestion(format!("participant {} appears more than once", r.participant_id)));
        }
    }
    let report = harness::build_report(&responses, &suite)?;
    let table = harness::render_table(&report);
    Ok(EvalResponse { report, table })
}

pub fn replay(req: &ReplayRequest) -> Result<ReplayOutcome> {
    session::replay_trace(&req.trace.text, &req.trace.name)
}

/// Client-to-server WebSocket message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    Hello {
        mode: Mode,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scenario_id: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        participant_id: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        condition: Option<Condition>,
    },
    Control {
        a_lon_cmd: f64,
        #[serde(default)]
        lane_change_cmd: LaneChangeCmd,
    },
    QuizAnswer {
        scenario_id: String,
        t_hat: f64,
        confidence: f64,
    },
}

/// Server-to-client WebSocket message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    State {
        tick: u64,
        time: f64,
        ego: VehicleState,
        traffic: Vec<VehicleState>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scenario_id: Option<String>,
    },
    /// The control the server will apply, after clamping.
    ControlAck {
        a_lon_cmd: f64,
        lane_change_cmd: LaneChangeCmd,
    },
    Preview {
        #[serde(flatten)]
        event: PreviewEvent,
        explanation: Explanation,
    },
    ExecutedAction {
        tick: u64,
        maneuver: Maneuver,
    },
    End {
        trace_id: String,
    },
    Error {
        code: String,
        detail: String,
    },
}
