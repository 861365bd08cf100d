//! One live session per WebSocket connection.
//!
//! The first client message must be `hello`. Ticks run on a wall-clock
//! interval; control messages arriving between two ticks overwrite each
//! other and take effect at the next tick. Any protocol violation ends the
//! session with an `error` frame. Traces are persisted however the session
//! ends.

use std::collections::BTreeMap;
use std::path::PathBuf;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::Response;
use tokio::time::{interval, MissedTickBehavior};

use shadowdrive_core::api::{is_valid_id, ClientMessage, ServerMessage};
use shadowdrive_core::explain::render_explanation;
use shadowdrive_core::harness::{Condition, ParticipantResponse, ScenarioAnswer, TestScenario};
use shadowdrive_core::session::{write_trace, ControlLatch, Mode, Session, SessionConfig, TraceRecord};
use shadowdrive_core::sim::ControlInput;

use crate::{AppState, SUITE_FILE};

pub(crate) async fn upgrade(ws: WebSocketUpgrade, State(state): State<AppState>) -> Response {
    ws.on_upgrade(move |socket| async move {
        let mut conn = Conn { socket };
        match run(&mut conn, &state).await {
            Ok(()) | Err(Halt::Closed) => {}
            Err(Halt::Fault { code, detail }) => {
                tracing::info!(code, %detail, "session terminated");
                let _ = conn.send(&ServerMessage::Error { code: code.into(), detail }).await;
            }
        }
        let _ = conn.socket.send(Message::Close(None)).await;
    })
}

enum Halt {
    /// The peer went away.
    Closed,
    /// The peer broke the protocol, or the session could not start.
    Fault { code: &'static str, detail: String },
}

fn fault(code: &'static str, detail: impl Into<String>) -> Halt {
    Halt::Fault {
        code,
        detail: detail.into(),
    }
}

struct Conn {
    socket: WebSocket,
}

impl Conn {
    async fn send(&mut self, msg: &ServerMessage) -> Result<(), Halt> {
        let text = serde_json::to_string(msg).expect("server messages serialize");
        self.socket.send(Message::Text(text.into())).await.map_err(|_| Halt::Closed)
    }

    /// Next client message. Cancel-safe: nothing is buffered across awaits.
    async fn recv(&mut self) -> Result<ClientMessage, Halt> {
        loop {
            match self.socket.recv().await {
                None | Some(Err(_)) | Some(Ok(Message::Close(_))) => return Err(Halt::Closed),
                Some(Ok(Message::Text(text))) => {
                    return serde_json::from_str(&text).map_err(|e| fault("bad_message", e.to_string()))
                }
                Some(Ok(Message::Binary(_))) => return Err(fault("bad_message", "binary frames are not supported")),
                Some(Ok(_)) => {}
            }
        }
    }
}

async fn run(conn: &mut Conn, state: &AppState) -> Result<(), Halt> {
    match conn.recv().await? {
        ClientMessage::Hello {
            mode: Mode::Quiz,
            participant_id,
            condition,
            ..
        } => {
            let participant = participant_id.ok_or_else(|| fault("missing_field", "quiz needs participant_id"))?;
            if !is_valid_id(&participant) {
                return Err(fault("missing_field", format!("invalid participant_id {participant:?}")));
            }
            let condition = condition.ok_or_else(|| fault("missing_field", "quiz needs condition"))?;
            quiz(conn, state, participant, condition).await
        }
        ClientMessage::Hello { mode, scenario_id, .. } => {
            let id = scenario_id.ok_or_else(|| fault("missing_field", "hello needs scenario_id"))?;
            live(conn, state, mode, &id).await
        }
        other => Err(fault("expected_hello", format!("first message must be hello, got {}", kind(&other)))),
    }
}

fn kind(msg: &ClientMessage) -> &'static str {
    match msg {
        ClientMessage::Hello { .. } => "hello",
        ClientMessage::Control { .. } => "control",
        ClientMessage::QuizAnswer { .. } => "quiz_answer",
    }
}

fn state_message(r: &TraceRecord, scenario_id: Option<&str>) -> ServerMessage {
    ServerMessage::State {
        tick: r.tick,
        time: r.time,
        ego: r.ego.clone(),
        traffic: r.traffic.clone(),
        scenario_id: scenario_id.map(str::to_string),
    }
}

async fn persist_trace(state: &AppState, trace_id: &str, config: &SessionConfig, records: &[TraceRecord]) {
    let path: PathBuf = state.traces_dir().join(format!("{trace_id}.jsonl"));
    let result = async {
        tokio::fs::create_dir_all(state.traces_dir()).await?;
        tokio::fs::write(&path, write_trace(config, records)).await
    }
    .await;
    match result {
        Ok(()) => tracing::info!(trace = %path.display(), records = records.len(), "trace persisted"),
        Err(e) => tracing::error!(trace = %path.display(), error = %e, "could not persist trace"),
    }
}

/// Driving (manual_preview) or watching (autopilot_observe) one scenario.
async fn live(conn: &mut Conn, state: &AppState, mode: Mode, scenario_id: &str) -> Result<(), Halt> {
    let spec = crate::load_scenario(&state.scenario_dir, scenario_id)
        .await
        .map_err(|e| fault("unknown_scenario", e.to_string()))?;
    let config = SessionConfig::new(mode, spec);
    let mut session = Session::new(config.clone()).map_err(|e| fault(e.code(), e.to_string()))?;
    let trace_id = uuid::Uuid::new_v4().to_string();
    tracing::info!(%trace_id, scenario = scenario_id, ?mode, "session started");

    let mut records = Vec::new();
    let outcome = drive(conn, state, &mut session, &mut records).await;
    persist_trace(state, &trace_id, &config, &records).await;
    outcome?;
    conn.send(&ServerMessage::End { trace_id }).await
}

async fn drive(
    conn: &mut Conn,
    state: &AppState,
    session: &mut Session,
    records: &mut Vec<TraceRecord>,
) -> Result<(), Halt> {
    let manual = session.config().mode == Mode::ManualPreview;
    let mut latch = ControlLatch::default();
    let mut ticker = interval(state.tick_interval);
    ticker.set_missed_tick_behavior(MissedTickBehavior::Delay);
    while !session.is_finished() {
        tokio::select! {
            msg = conn.recv() => match msg? {
                ClientMessage::Control { a_lon_cmd, lane_change_cmd } if manual => {
                    let applied = latch.push(ControlInput::new(a_lon_cmd, lane_change_cmd));
                    conn.send(&ServerMessage::ControlAck {
                        a_lon_cmd: applied.a_lon_cmd,
                        lane_change_cmd: applied.lane_change_cmd,
                    })
                    .await?;
                }
                other => {
                    return Err(fault("unexpected_message", format!("{} is not accepted in this session", kind(&other))))
                }
            },
            _ = ticker.tick() => {
                let record = if manual {
                    session.advance_with(latch.take())
                } else {
                    session.advance()
                };
                let Some(record) = record else { break };
                conn.send(&state_message(&record, None)).await?;
                match (&record.preview_event, record.executed_maneuver_start) {
                    (Some(event), _) if manual => {
                        let explanation = render_explanation(event);
                        conn.send(&ServerMessage::Preview { event: event.clone(), explanation }).await?;
                    }
                    (_, Some(maneuver)) if !manual => {
                        conn.send(&ServerMessage::ExecutedAction { tick: record.tick, maneuver }).await?;
                    }
                    _ => {}
                }
                records.push(record);
            }
        }
    }
    Ok(())
}

struct QuizAnswers<'a> {
    suite: &'a [TestScenario],
    answers: BTreeMap<String, ScenarioAnswer>,
}

impl QuizAnswers<'_> {
    fn accept(&mut self, msg: ClientMessage) -> Result<(), Halt> {
        let ClientMessage::QuizAnswer {
            scenario_id,
            t_hat,
            confidence,
        } = msg
        else {
            return Err(fault("unexpected_message", format!("{} is not accepted in a quiz", kind(&msg))));
        };
        if !self.suite.iter().any(|s| s.id == scenario_id) {
            return Err(fault("invalid_answer", format!("scenario {scenario_id:?} is not in the suite")));
        }
        if !t_hat.is_finite() || !confidence.is_finite() {
            return Err(fault("invalid_answer", "t_hat and confidence must be finite"));
        }
        // A repeated answer replaces the earlier one.
        self.answers.insert(
            scenario_id.clone(),
            ScenarioAnswer {
                scenario_id,
                t_hat,
                confidence,
            },
        );
        Ok(())
    }

    fn complete(&self) -> bool {
        self.answers.len() == self.suite.len()
    }

    fn into_response(mut self, participant_id: String, condition: Condition) -> ParticipantResponse {
        let answers = self.suite.iter().filter_map(|s| self.answers.remove(&s.id)).collect();
        ParticipantResponse {
            participant_id,
            condition,
            answers,
        }
    }
}

/// Plays every suite scenario under the autopilot with actions hidden, then
/// waits until each one has an answer.
async fn quiz(conn: &mut Conn, state: &AppState, participant: String, condition: Condition) -> Result<(), Halt> {
    let suite = crate::load_suite_file(&state.scenario_dir)
        .await
        .map_err(|e| fault("no_suite", e.to_string()))?;
    let session_id = uuid::Uuid::new_v4().to_string();
    tracing::info!(%session_id, %participant, scenarios = suite.len(), "quiz started");
    let mut answers = QuizAnswers {
        suite: &suite,
        answers: BTreeMap::new(),
    };

    for scenario in &suite {
        let mut config = SessionConfig::new(Mode::Quiz, scenario.spec.clone());
        config.suite_ref = Some(SUITE_FILE.into());
        config.attach_delegate = false;
        let mut session = Session::new(config.clone()).map_err(|e| fault(e.code(), e.to_string()))?;
        let mut records = Vec::new();
        let mut ticker = interval(state.tick_interval);
        ticker.set_missed_tick_behavior(MissedTickBehavior::Delay);
        let played: Result<(), Halt> = async {
            while !session.is_finished() {
                tokio::select! {
                    msg = conn.recv() => answers.accept(msg?)?,
                    _ = ticker.tick() => {
                        let Some(record) = session.advance() else { break };
                        conn.send(&state_message(&record, Some(&scenario.id))).await?;
                        records.push(record);
                    }
                }
            }
            Ok(())
        }
        .await;
        persist_trace(state, &format!("{session_id}-{}", scenario.id), &config, &records).await;
        played?;
    }

    while !answers.complete() {
        let msg = conn.recv().await?;
        answers.accept(msg)?;
    }

    let response = answers.into_response(participant.clone(), condition);
    let path = state.responses_dir().join(format!("{participant}.json"));
    let body = serde_json::to_string_pretty(&[response]).expect("responses serialize");
    let written = async {
        tokio::fs::create_dir_all(state.responses_dir()).await?;
        tokio::fs::write(&path, body).await
    }
    .await;
    if let Err(e) = written {
        tracing::error!(path = %path.display(), error = %e, "could not persist quiz responses");
        return Err(fault("io", "could not persist quiz responses"));
    }
    tracing::info!(path = %path.display(), "quiz responses persisted");
    conn.send(&ServerMessage::End { trace_id: session_id }).await
}
