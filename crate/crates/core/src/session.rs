//! Session engine shared by the headless runner and the network service.
//!
//! A trace file is line-delimited JSON. The first line is a session header
//! (`{"format": 1, "session": ...}`) carrying everything needed to rebuild the run; every
//! following line is one [`TraceRecord`]. Re-applying the recorded control
//! column to the header's scenario regenerates the file byte for byte.

use serde::{Deserialize, Serialize};

use crate::delegate::{PreviewEvent, TargetShadow};
use crate::error::{Error, Result};
use crate::mpc::{self, Maneuver, MpcConfig};
use crate::predict::PredictionConfig;
use crate::sim::{maneuver_target, step_world, Collision, ControlInput, LaneChangeCmd, ScenarioSpec, VehicleState, WorldState};

pub const TRACE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Human drives; the delegate previews the autopilot (treatment condition).
    ManualPreview,
    /// Autopilot drives; executed maneuvers are shown (comparison condition).
    AutopilotObserve,
    /// Autopilot drives with no annotations; used for timing quizzes.
    Quiz,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionConfig {
    pub mode: Mode,
    pub scenario: ScenarioSpec,
    pub autopilot: MpcConfig,
    pub prediction: PredictionConfig,
    /// Ticks per second of wall-clock playback.
    pub tick_rate: f64,
    /// Whether the shadow delegate observes the session.
    #[serde(default = "yes")]
    pub attach_delegate: bool,
    /// Test suite the quiz draws from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suite_ref: Option<String>,
}

fn yes() -> bool {
    true
}

impl SessionConfig {
    /// Session defaults for a scenario: its own autopilot parameters, a
    /// predictor on the same grid, and real-time playback.
    pub fn new(mode: Mode, scenario: ScenarioSpec) -> Self {
        let prediction = PredictionConfig {
            dt: scenario.dt,
            ..PredictionConfig::default()
        };
        SessionConfig {
            mode,
            autopilot: scenario.autopilot,
            prediction,
            tick_rate: 1.0 / scenario.dt,
            scenario,
            attach_delegate: true,
            suite_ref: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.autopilot.validate(self.scenario.dt)?;
        self.prediction.validate()?;
        if (self.prediction.dt - self.scenario.dt).abs() > 1e-12 {
            return Err(Error::contract("prediction dt must equal the simulation dt"));
        }
        if (self.tick_rate * self.scenario.dt - 1.0).abs() > 1e-9 {
            return Err(Error::contract("tick_rate * dt must equal 1"));
        }
        if self.mode == Mode::Quiz && self.suite_ref.is_none() {
            return Err(Error::contract("quiz mode requires a suite reference"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceRecord {
    pub tick: u64,
    pub time: f64,
    pub ego: VehicleState,
    pub traffic: Vec<VehicleState>,
    /// Control applied at this tick, after clamping.
    pub control: ControlInput,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preview_event: Option<PreviewEvent>,
    /// Lane change the applied control started at this tick.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub executed_maneuver_start: Option<Maneuver>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub collision: Option<Collision>,
}

/// Coalesces control messages arriving between two ticks.
///
/// The longitudinal command is last-writer-wins and held until replaced. A
/// lane-change request is latched until the next tick consumes it, so a
/// key tap followed by a release within one tick is not lost.
#[derive(Debug, Clone, Copy, Default)]
pub struct ControlLatch {
    a_lon_cmd: f64,
    lane_change_cmd: LaneChangeCmd,
}

impl ControlLatch {
    /// Records a message and returns it clamped.
    pub fn push(&mut self, control: ControlInput) -> ControlInput {
        let control = control.clamped();
        self.a_lon_cmd = control.a_lon_cmd;
        if control.lane_change_cmd != LaneChangeCmd::None {
            self.lane_change_cmd = control.lane_change_cmd;
        }
        control
    }

    /// Control for the tick boundary being crossed.
    pub fn take(&mut self) -> ControlInput {
        let out = ControlInput::new(self.a_lon_cmd, self.lane_change_cmd);
        self.lane_change_cmd = LaneChangeCmd::None;
        out
    }
}

/// One line of a control log file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlLogEntry {
    pub tick: u64,
    pub a_lon_cmd: f64,
    #[serde(default)]
    pub lane_change_cmd: LaneChangeCmd,
}

/// Sparse, tick-ordered human control messages.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ControlLog {
    pub entries: Vec<ControlLogEntry>,
}

impl ControlLog {
    /// Parses line-delimited JSON. Blank lines are skipped; ticks must not decrease.
    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let mut entries: Vec<ControlLogEntry> = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: ControlLogEntry =
                serde_json::from_str(line).map_err(|e| Error::parse(source_name, &e, idx))?;
            if entries.last().is_some_and(|prev| entry.tick < prev.tick) {
                return Err(Error::Parse {
                    source_name: source_name.to_string(),
                    line: idx + 1,
                    message: format!("tick {} goes backwards", entry.tick),
                });
            }
            entries.push(entry);
        }
        Ok(ControlLog { entries })
    }

    pub fn to_jsonl(&self) -> String {
        self.entries
            .iter()
            .map(|e| serde_json::to_string(e).expect("control entries serialize") + "\n")
            .collect()
    }

    /// Dense per-tick controls for `ticks` ticks, coalesced through a [`ControlLatch`].
    pub fn expand(&self, ticks: u64) -> Vec<ControlInput> {
        let mut latch = ControlLatch::default();
        let mut pending = self.entries.iter().peekable();
        (0..ticks)
            .map(|tick| {
                while let Some(e) = pending.next_if(|e| e.tick <= tick) {
                    latch.push(ControlInput::new(e.a_lon_cmd, e.lane_change_cmd));
                }
                latch.take()
            })
            .collect()
    }
}

/// A running simulation with its optional shadow delegate.
#[derive(Debug, Clone)]
pub struct Session {
    config: SessionConfig,
    world: WorldState,
    shadow: Option<TargetShadow>,
    total_ticks: u64,
}

impl Session {
    pub fn new(config: SessionConfig) -> Result<Self> {
        config.validate()?;
        let world = config.scenario.initial_world()?;
        let shadow = config
            .attach_delegate
            .then(|| TargetShadow::new(config.autopilot, config.prediction));
        let total_ticks = config.scenario.tick_count();
        Ok(Session {
            config,
            world,
            shadow,
            total_ticks,
        })
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn world(&self) -> &WorldState {
        &self.world
    }

    pub fn total_ticks(&self) -> u64 {
        self.total_ticks
    }

    pub fn is_finished(&self) -> bool {
        self.world.tick >= self.total_ticks
    }

    /// Control the session's mode would apply this tick without outside input.
    pub fn autonomous_control(&self) -> ControlInput {
        match self.config.mode {
            Mode::ManualPreview => ControlInput::default(),
            Mode::AutopilotObserve | Mode::Quiz => mpc::plan(&self.world, &self.config.autopilot).control(),
        }
    }

    /// Advances one tick under the mode's own control source.
    pub fn advance(&mut self) -> Option<TraceRecord> {
        let control = self.autonomous_control();
        self.advance_with(control)
    }

    /// Advances one tick applying `control` to the ego.
    ///
    /// The delegate observes the pre-step world; its output is recorded but
    /// never fed into the control path.
    pub fn advance_with(&mut self, control: ControlInput) -> Option<TraceRecord> {
        if self.is_finished() {
            return None;
        }
        let preview_event = self.shadow.as_mut().and_then(|s| s.observe(&self.world));
        let control = control.clamped();
        let executed_maneuver_start = maneuver_target(&self.world.ego, control.lane_change_cmd, &self.world.lanes)
            .map(|target| if target > self.world.ego.lane { Maneuver::ChangeLeft } else { Maneuver::ChangeRight });
        let record = TraceRecord {
            tick: self.world.tick,
            time: self.world.time,
            ego: self.world.ego.clone(),
            traffic: self.world.traffic.clone(),
            control,
            preview_event,
            executed_maneuver_start,
            collision: self.world.collision,
        };
        self.world = step_world(&self.world, &control, self.config.scenario.dt);
        Some(record)
    }
}

/// Runs a whole session without a network peer.
pub fn run_headless(config: &SessionConfig, control_log: Option<&ControlLog>) -> Result<Vec<TraceRecord>> {
    let mut session = Session::new(config.clone())?;
    let controls = match (config.mode, control_log) {
        (Mode::ManualPreview, Some(log)) => Some(log.expand(session.total_ticks())),
        (Mode::ManualPreview, None) => {
            return Err(Error::Usage("manual_preview mode needs a control log when run headless".into()))
        }
        (_, Some(_)) => {
            return Err(Error::Usage("a control log is only accepted in manual_preview mode".into()))
        }
        (_, None) => None,
    };
    let mut records = Vec::with_capacity(session.total_ticks() as usize);
    match controls {
        Some(controls) => {
            for c in controls {
                records.extend(session.advance_with(c));
            }
        }
        None => {
            while let Some(r) = session.advance() {
                records.push(r);
            }
        }
    }
    Ok(records)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TraceHeader {
    format: u32,
    session: SessionConfig,
}

/// Serializes a trace: header line plus one line per record.
pub fn write_trace(config: &SessionConfig, records: &[TraceRecord]) -> String {
    let header = TraceHeader {
        format: TRACE_FORMAT_VERSION,
        session: config.clone(),
    };
    let mut out = serde_json::to_string(&header).expect("header serializes");
    out.push('\n');
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    out
}

pub fn parse_trace(text: &str, source_name: &str) -> Result<(SessionConfig, Vec<TraceRecord>)> {
    let mut lines = text.lines().enumerate();
    let (_, first) = lines.next().ok_or_else(|| Error::Parse {
        source_name: source_name.to_string(),
        line: 1,
        message: "empty trace".into(),
    })?;
    let header: TraceHeader = serde_json::from_str(first).map_err(|e| Error::parse(source_name, &e, 0))?;
    if header.format != TRACE_FORMAT_VERSION {
        return Err(Error::Parse {
            source_name: source_name.to_string(),
            line: 1,
            message: format!("unsupported trace format {}", header.format),
        });
    }
    let records = lines
        .map(|(idx, line)| serde_json::from_str(line).map_err(|e| Error::parse(source_name, &e, idx)))
        .collect::<Result<Vec<TraceRecord>>>()?;
    Ok((header.session, records))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayOutcome {
    pub identical: bool,
    /// 1-based line of the first difference.
    pub first_mismatch_line: Option<usize>,
    pub records: usize,
}

/// Re-simulates a trace from its header and control column and compares bytes.
pub fn replay_trace(text: &str, source_name: &str) -> Result<ReplayOutcome> {
    let (config, records) = parse_trace(text, source_name)?;
    let mut session = Session::new(config.clone())?;
    let regenerated: Vec<TraceRecord> = records.iter().filter_map(|r| session.advance_with(r.control)).collect();
    let rewritten = write_trace(&config, &regenerated);
    let first_mismatch_line = if rewritten == text {
        None
    } else {
        let mut a = rewritten.lines();
        let mut b = text.lines();
        let mut line = 1;
        loop {
            match (a.next(), b.next()) {
                (Some(x), Some(y)) if x == y => line += 1,
                _ => break Some(line),
            }
        }
    };
    Ok(ReplayOutcome {
        identical: first_mismatch_line.is_none(),
        first_mismatch_line,
        records: records.len(),
    })
}
