//! Fixed-timestep kinematic simulation of a straight multi-lane highway.
//!
//! Lane 0 is the rightmost lane. A positive lateral offset points left, toward
//! higher lane indices. Longitudinal position `s` is the vehicle's center.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mpc::{IdmParams, MpcConfig};

pub type VehicleId = u32;

/// Simulation timestep, seconds.
pub const DEFAULT_DT: f64 = 0.1;
/// Duration of a lane change maneuver, seconds.
pub const LANE_CHANGE_SECS: f64 = 3.0;
/// Upper bound on commanded longitudinal acceleration, m/s².
pub const MAX_ACCEL: f64 = 2.0;
/// Upper bound on commanded braking, m/s² (applied as a negative acceleration).
pub const MAX_BRAKE: f64 = 8.0;

/// Slack used by geometric comparisons so that touching footprints count as overlapping.
const GEOM_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaneConfig {
    pub lane_count: u32,
    #[serde(default = "default_lane_width")]
    pub lane_width: f64,
    pub road_length: f64,
}

fn default_lane_width() -> f64 {
    3.5
}

impl LaneConfig {
    pub fn new(lane_count: u32, road_length: f64) -> Self {
        LaneConfig {
            lane_count,
            lane_width: default_lane_width(),
            road_length,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lane_count < 1 {
            return Err(Error::contract("lane_count must be at least 1"));
        }
        if !(self.lane_width > 0.0) {
            return Err(Error::contract("lane_width must be positive"));
        }
        if !(self.road_length > 0.0) {
            return Err(Error::contract("road_length must be positive"));
        }
        Ok(())
    }

    pub fn has_lane(&self, lane: i64) -> bool {
        lane >= 0 && lane < self.lane_count as i64
    }

    pub fn lane_center(&self, lane: u32) -> f64 {
        (lane as f64 + 0.5) * self.lane_width
    }

    /// Lane whose corridor contains the lateral coordinate `y`.
    pub fn lane_at(&self, y: f64) -> u32 {
        let idx = (y / self.lane_width).floor();
        idx.clamp(0.0, (self.lane_count - 1) as f64) as u32
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleState {
    pub id: VehicleId,
    pub s: f64,
    pub lane: u32,
    #[serde(default)]
    pub lat_offset: f64,
    pub v: f64,
    #[serde(default)]
    pub a_lon: f64,
    #[serde(default)]
    pub a_lat: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub maneuver_progress: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub maneuver_target_lane: Option<u32>,
    #[serde(default = "default_length")]
    pub length: f64,
    #[serde(default = "default_width")]
    pub width: f64,
}

fn default_length() -> f64 {
    4.5
}

fn default_width() -> f64 {
    1.8
}

impl VehicleState {
    pub fn new(id: VehicleId, lane: u32, s: f64, v: f64) -> Self {
        VehicleState {
            id,
            s,
            lane,
            lat_offset: 0.0,
            v,
            a_lon: 0.0,
            a_lat: 0.0,
            maneuver_progress: None,
            maneuver_target_lane: None,
            length: default_length(),
            width: default_width(),
        }
    }

    pub fn with_accel(mut self, a_lon: f64) -> Self {
        self.a_lon = a_lon;
        self
    }

    pub fn is_maneuvering(&self) -> bool {
        self.maneuver_target_lane.is_some()
    }

    /// Lateral coordinate of the footprint center.
    pub fn lateral_position(&self, lanes: &LaneConfig) -> f64 {
        lanes.lane_center(self.lane) + self.lat_offset
    }

    /// Whether the footprint laterally intrudes into `lane`'s corridor.
    pub fn occupies_lane(&self, lane: u32, lanes: &LaneConfig) -> bool {
        let y = self.lateral_position(lanes);
        let lo = lane as f64 * lanes.lane_width;
        let hi = lo + lanes.lane_width;
        y + self.width / 2.0 > lo && y - self.width / 2.0 < hi
    }

    /// Lanes considered when looking for a vehicle to follow: the lane under
    /// the footprint center plus the target lane of an active maneuver.
    pub fn attention_lanes(&self, lanes: &LaneConfig) -> Vec<u32> {
        let mut out = vec![lanes.lane_at(self.lateral_position(lanes))];
        if let Some(target) = self.maneuver_target_lane {
            if !out.contains(&target) {
                out.push(target);
            }
        }
        out
    }

    fn validate(&self, lanes: &LaneConfig) -> Result<()> {
        let id = self.id;
        if !self.s.is_finite() || self.s < 0.0 || self.s > lanes.road_length {
            return Err(Error::contract(format!("vehicle {id}: s outside [0, road_length]")));
        }
        if !lanes.has_lane(self.lane as i64) {
            return Err(Error::contract(format!("vehicle {id}: lane {} does not exist", self.lane)));
        }
        if !self.v.is_finite() || self.v < 0.0 {
            return Err(Error::contract(format!("vehicle {id}: speed must be finite and nonnegative")));
        }
        if self.lat_offset.abs() > lanes.lane_width {
            return Err(Error::contract(format!("vehicle {id}: |lat_offset| exceeds lane_width")));
        }
        if !(self.length > 0.0 && self.width > 0.0) {
            return Err(Error::contract(format!("vehicle {id}: footprint must be positive")));
        }
        match (self.maneuver_progress, self.maneuver_target_lane) {
            (None, None) => {}
            (Some(p), Some(t)) => {
                if !(0.0..=LANE_CHANGE_SECS).contains(&p) {
                    return Err(Error::contract(format!("vehicle {id}: maneuver_progress out of range")));
                }
                if !lanes.has_lane(t as i64) || t.abs_diff(self.lane) != 1 {
                    return Err(Error::contract(format!("vehicle {id}: invalid maneuver target lane")));
                }
            }
            _ => {
                return Err(Error::contract(format!(
                    "vehicle {id}: maneuver_progress and maneuver_target_lane must be set together"
                )))
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaneChangeCmd {
    #[default]
    None,
    Left,
    Right,
}

impl LaneChangeCmd {
    pub fn direction(self) -> i64 {
        match self {
            LaneChangeCmd::None => 0,
            LaneChangeCmd::Left => 1,
            LaneChangeCmd::Right => -1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlInput {
    pub a_lon_cmd: f64,
    #[serde(default)]
    pub lane_change_cmd: LaneChangeCmd,
}

impl ControlInput {
    pub fn new(a_lon_cmd: f64, lane_change_cmd: LaneChangeCmd) -> Self {
        ControlInput { a_lon_cmd, lane_change_cmd }
    }

    /// Longitudinal command limited to `[-MAX_BRAKE, MAX_ACCEL]`; NaN becomes 0.
    pub fn clamped(self) -> Self {
        let a = if self.a_lon_cmd.is_nan() {
            0.0
        } else {
            self.a_lon_cmd.clamp(-MAX_BRAKE, MAX_ACCEL)
        };
        ControlInput { a_lon_cmd: a, ..self }
    }
}

/// Scripted longitudinal behavior of a traffic vehicle. Traffic never changes lanes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Behavior {
    /// Holds the initial `a_lon` for the whole run.
    ConstantAccel,
    FollowIdm {
        v_des: f64,
        #[serde(default)]
        idm: IdmParams,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficInit {
    pub state: VehicleState,
    pub behavior: Behavior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub seed: u64,
    pub duration: f64,
    pub lanes: LaneConfig,
    pub ego_init: VehicleState,
    #[serde(default)]
    pub traffic_init: Vec<TrafficInit>,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub autopilot: MpcConfig,
}

fn default_dt() -> f64 {
    DEFAULT_DT
}

/// Integer ratio `num / den`, or `None` if it is not (within 1e-9) a whole number.
pub(crate) fn whole_ratio(num: f64, den: f64) -> Option<u64> {
    let r = num / den;
    if !r.is_finite() || r < 0.0 {
        return None;
    }
    let rounded = r.round();
    ((r - rounded).abs() < 1e-9).then_some(rounded as u64)
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::contract("dt must be positive"));
        }
        if !(self.duration > 0.0) || whole_ratio(self.duration, self.dt).is_none() {
            return Err(Error::contract("duration must be a positive whole number of ticks"));
        }
        self.lanes.validate()?;
        self.autopilot.validate(self.dt)?;
        self.ego_init.validate(&self.lanes)?;
        let mut ids = vec![self.ego_init.id];
        for t in &self.traffic_init {
            t.state.validate(&self.lanes)?;
            if t.state.is_maneuvering() {
                return Err(Error::contract(format!("traffic vehicle {} cannot start mid-maneuver", t.state.id)));
            }
            ids.push(t.state.id);
        }
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::contract("vehicle ids must be unique"));
        }
        Ok(())
    }

    pub fn tick_count(&self) -> u64 {
        whole_ratio(self.duration, self.dt).unwrap_or(0)
    }

    pub fn from_json(text: &str, source_name: &str) -> Result<Self> {
        let spec: ScenarioSpec =
            serde_json::from_str(text).map_err(|e| Error::parse(source_name, &e, 0))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn initial_world(&self) -> Result<WorldState> {
        self.validate()?;
        let mut traffic: Vec<_> = self
            .traffic_init
            .iter()
            .map(|t| (t.state.clone(), t.behavior))
            .collect();
        traffic.sort_by_key(|(s, _)| s.id);
        let (traffic, behaviors) = traffic.into_iter().unzip();
        Ok(WorldState {
            tick: 0,
            time: 0.0,
            dt: self.dt,
            ego: self.ego_init.clone(),
            traffic,
            behaviors,
            lanes: self.lanes,
            collision: None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Collision {
    pub actor_id: VehicleId,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub tick: u64,
    pub time: f64,
    /// Timestep the world is advanced with, seconds.
    pub dt: f64,
    pub ego: VehicleState,
    /// Sorted by id; order never changes.
    pub traffic: Vec<VehicleState>,
    /// Behavior script of `traffic[i]`.
    pub behaviors: Vec<Behavior>,
    pub lanes: LaneConfig,
    /// Ground-truth ego overlap at this tick, if any.
    pub collision: Option<Collision>,
}

/// Which vehicle of a world is being referred to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subject {
    Ego,
    Traffic(usize),
}

/// The vehicle being followed and the bumper-to-bumper gap to it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lead {
    pub id: VehicleId,
    pub gap: f64,
    pub v: f64,
}

impl WorldState {
    pub fn vehicle(&self, who: Subject) -> &VehicleState {
        match who {
            Subject::Ego => &self.ego,
            Subject::Traffic(i) => &self.traffic[i],
        }
    }

    fn others(&self, who: Subject) -> impl Iterator<Item = &VehicleState> {
        let ego = (who != Subject::Ego).then_some(&self.ego);
        let skip = match who {
            Subject::Traffic(i) => Some(i),
            Subject::Ego => None,
        };
        ego.into_iter().chain(
            self.traffic
                .iter()
                .enumerate()
                .filter(move |(i, _)| Some(*i) != skip)
                .map(|(_, v)| v),
        )
    }

    /// Nearest vehicle strictly ahead of `who` occupying any of `lanes`.
    pub fn lead_in_lanes(&self, who: Subject, lanes: &[u32]) -> Option<Lead> {
        let me = self.vehicle(who);
        self.others(who)
            .filter(|o| o.s > me.s)
            .filter(|o| lanes.iter().any(|&l| o.occupies_lane(l, &self.lanes)))
            .map(|o| Lead {
                id: o.id,
                gap: bumper_gap(me, o),
                v: o.v,
            })
            .min_by(|a, b| a.gap.total_cmp(&b.gap).then(a.id.cmp(&b.id)))
    }
}

/// Bumper-to-bumper longitudinal distance from `follower` to `leader`.
/// Negative when the footprints overlap longitudinally.
pub fn bumper_gap(follower: &VehicleState, leader: &VehicleState) -> f64 {
    leader.s - follower.s - (leader.length + follower.length) / 2.0
}

/// Lateral offset and lateral acceleration of a lane change `progress` seconds in.
///
/// `direction` is +1 for a change to the left and -1 for a change to the right.
pub fn lateral_profile(progress: f64, t_lc: f64, lane_width: f64, direction: f64) -> Result<(f64, f64)> {
    if !(t_lc > 0.0) {
        return Err(Error::contract("lane change duration must be positive"));
    }
    if !(progress >= -GEOM_EPS && progress <= t_lc + GEOM_EPS) {
        return Err(Error::contract(format!(
            "lane change progress {progress} outside [0, {t_lc}]"
        )));
    }
    let tau = progress.clamp(0.0, t_lc);
    let half = lane_width / 2.0;
    let phase = PI * tau / t_lc;
    let offset = direction * half * (1.0 - phase.cos());
    let a_lat = direction * half * (PI / t_lc).powi(2) * phase.cos();
    Ok((offset, a_lat))
}

/// Advances one vehicle by `dt` under constant longitudinal acceleration.
///
/// Speed is floored at zero; if the vehicle stops mid-step the displacement is
/// clipped at the stopping point. An active lane change advances along
/// [`lateral_profile`] and completes by reassigning the lane index.
pub fn step_vehicle(state: &VehicleState, a_lon: f64, dt: f64, lanes: &LaneConfig) -> VehicleState {
    debug_assert!(dt > 0.0);
    let mut next = state.clone();
    let v = state.v;
    let v_next = v + a_lon * dt;
    let ds = if v_next < 0.0 {
        // a_lon < 0 here; stop after v / |a| seconds.
        v * v / (2.0 * -a_lon)
    } else {
        v * dt + 0.5 * a_lon * dt * dt
    };
    next.v = v_next.max(0.0);
    next.a_lon = a_lon;
    next.s = state.s + ds.max(0.0);
    if next.s >= lanes.road_length {
        next.s = lanes.road_length;
        next.v = 0.0;
    }

    if let (Some(progress), Some(target)) = (state.maneuver_progress, state.maneuver_target_lane) {
        // Progress is kept on the dt grid so it never drifts.
        let elapsed_ticks = (progress / dt).round() + 1.0;
        let progress = elapsed_ticks * dt;
        if progress >= LANE_CHANGE_SECS - GEOM_EPS {
            next.lane = target;
            next.lat_offset = 0.0;
            next.a_lat = 0.0;
            next.maneuver_progress = None;
            next.maneuver_target_lane = None;
        } else {
            let direction = if target > state.lane { 1.0 } else { -1.0 };
            let (offset, a_lat) = lateral_profile(progress, LANE_CHANGE_SECS, lanes.lane_width, direction)
                .expect("progress stays within the maneuver duration");
            next.lat_offset = offset;
            next.a_lat = a_lat;
            next.maneuver_progress = Some(progress);
        }
    }
    next
}

/// Target lane that `cmd` would start a maneuver toward, or `None` if the
/// command is empty, a maneuver is already active, or the lane does not exist.
pub fn maneuver_target(ego: &VehicleState, cmd: LaneChangeCmd, lanes: &LaneConfig) -> Option<u32> {
    if cmd == LaneChangeCmd::None || ego.is_maneuvering() {
        return None;
    }
    let target = ego.lane as i64 + cmd.direction();
    lanes.has_lane(target).then_some(target as u32)
}

/// Acceleration a traffic vehicle's behavior script produces in `world`.
pub fn traffic_accel(world: &WorldState, index: usize) -> f64 {
    let vehicle = &world.traffic[index];
    match world.behaviors[index] {
        Behavior::ConstantAccel => vehicle.a_lon,
        Behavior::FollowIdm { v_des, idm } => {
            let lanes = vehicle.attention_lanes(&world.lanes);
            let (gap, v_lead) = world
                .lead_in_lanes(Subject::Traffic(index), &lanes)
                .map_or((f64::INFINITY, 0.0), |l| (l.gap, l.v));
            idm.accel(vehicle.v, v_des, gap, v_lead)
        }
    }
}

/// Advances the whole world by one tick.
///
/// Traffic accelerations are computed from the pre-step state so that update
/// order does not matter. The ego follows `ego_control` after clamping.
pub fn step_world(world: &WorldState, ego_control: &ControlInput, dt: f64) -> WorldState {
    let control = ego_control.clamped();
    let accels: Vec<f64> = (0..world.traffic.len()).map(|i| traffic_accel(world, i)).collect();

    let mut ego = world.ego.clone();
    if let Some(target) = maneuver_target(&ego, control.lane_change_cmd, &world.lanes) {
        ego.maneuver_progress = Some(0.0);
        ego.maneuver_target_lane = Some(target);
    }
    let ego = step_vehicle(&ego, control.a_lon_cmd, dt, &world.lanes);
    let traffic = world
        .traffic
        .iter()
        .zip(&accels)
        .map(|(v, &a)| step_vehicle(v, a, dt, &world.lanes))
        .collect();

    let tick = world.tick + 1;
    let mut next = WorldState {
        tick,
        time: tick as f64 * dt,
        dt,
        ego,
        traffic,
        behaviors: world.behaviors.clone(),
        lanes: world.lanes,
        collision: None,
    };
    next.collision = check_collision(&next);
    next
}

/// Axis-aligned footprint overlap test. Touching footprints overlap.
pub fn footprints_overlap(a: &VehicleState, b: &VehicleState, lanes: &LaneConfig) -> bool {
    let ds = (a.s - b.s).abs();
    let dy = (a.lateral_position(lanes) - b.lateral_position(lanes)).abs();
    ds <= (a.length + b.length) / 2.0 + GEOM_EPS && dy <= (a.width + b.width) / 2.0 + GEOM_EPS
}

/// First traffic vehicle (in id order) whose footprint overlaps the ego's.
pub fn check_collision(world: &WorldState) -> Option<Collision> {
    world
        .traffic
        .iter()
        .find(|t| footprints_overlap(&world.ego, t, &world.lanes))
        .map(|t| Collision {
            actor_id: t.id,
            time: world.time,
        })
}

/// Builds a world from raw parts, mostly for tests and generators.
pub fn world_from_parts(
    lanes: LaneConfig,
    ego: VehicleState,
    traffic: Vec<(VehicleState, Behavior)>,
) -> WorldState {
    let mut traffic = traffic;
    traffic.sort_by_key(|(s, _)| s.id);
    let (traffic, behaviors) = traffic.into_iter().unzip();
    let mut world = WorldState {
        tick: 0,
        time: 0.0,
        dt: DEFAULT_DT,
        ego,
        traffic,
        behaviors,
        lanes,
        collision: None,
    };
    world.collision = check_collision(&world);
    world
}
