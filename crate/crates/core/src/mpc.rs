//! Receding-horizon lane-change planner used as the target autopilot.
//!
//! Each tick the planner enumerates at most three maneuvers, rolls each one
//! forward over the horizon with IDM longitudinal control, and keeps the
//! cheapest. Only the first tick of the winning plan is applied.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{
    bumper_gap, step_world, whole_ratio, ControlInput, LaneChangeCmd, Subject, VehicleState, WorldState,
    MAX_BRAKE,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IdmParams {
    pub a_max: f64,
    pub b_comf: f64,
    pub s0: f64,
    pub t_headway: f64,
    pub delta: f64,
}

impl Default for IdmParams {
    fn default() -> Self {
        IdmParams {
            a_max: 2.0,
            b_comf: 3.0,
            s0: 2.0,
            t_headway: 1.5,
            delta: 4.0,
        }
    }
}

impl IdmParams {
    /// Intelligent Driver Model acceleration, clamped to `[-MAX_BRAKE, a_max]`.
    ///
    /// A non-positive gap yields full braking; pass `f64::INFINITY` when there
    /// is no lead vehicle.
    pub fn accel(&self, v: f64, v_des: f64, gap: f64, v_lead: f64) -> f64 {
        if gap <= 0.0 {
            return -MAX_BRAKE;
        }
        let free = if v_des > 0.0 {
            (v / v_des).powf(self.delta)
        } else if v > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        let interaction = if gap.is_infinite() {
            0.0
        } else {
            let s_star = self.s0 + v * self.t_headway + v * (v - v_lead) / (2.0 * (self.a_max * self.b_comf).sqrt());
            (s_star.max(0.0) / gap).powi(2)
        };
        let a = self.a_max * (1.0 - free - interaction);
        if a.is_nan() {
            return -MAX_BRAKE;
        }
        a.clamp(-MAX_BRAKE, self.a_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MpcConfig {
    /// Planning horizon, seconds.
    pub horizon: f64,
    pub v_des: f64,
    pub w_v: f64,
    pub w_lc: f64,
    pub min_gap: f64,
    pub idm: IdmParams,
}

impl Default for MpcConfig {
    fn default() -> Self {
        MpcConfig {
            horizon: 5.0,
            v_des: 25.0,
            w_v: 1.0,
            w_lc: 4.0,
            min_gap: 6.0,
            idm: IdmParams::default(),
        }
    }
}

impl MpcConfig {
    pub fn validate(&self, dt: f64) -> Result<()> {
        if !(self.horizon > 0.0) || whole_ratio(self.horizon, dt).is_none() {
            return Err(Error::contract("autopilot horizon must be a positive whole number of ticks"));
        }
        if !(self.w_v >= 0.0 && self.w_lc >= 0.0) {
            return Err(Error::contract("autopilot weights must be nonnegative"));
        }
        if !(self.min_gap > 0.0) {
            return Err(Error::contract("autopilot min_gap must be positive"));
        }
        if !(self.v_des >= 0.0) {
            return Err(Error::contract("autopilot v_des must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Maneuver {
    KeepLane,
    ChangeLeft,
    ChangeRight,
}

impl Maneuver {
    /// Candidates in tie-break priority order.
    pub const ALL: [Maneuver; 3] = [Maneuver::KeepLane, Maneuver::ChangeLeft, Maneuver::ChangeRight];

    pub fn lane_change_cmd(self) -> LaneChangeCmd {
        match self {
            Maneuver::KeepLane => LaneChangeCmd::None,
            Maneuver::ChangeLeft => LaneChangeCmd::Left,
            Maneuver::ChangeRight => LaneChangeCmd::Right,
        }
    }

    /// Maneuver currently being executed by `ego`, if any.
    pub fn active(ego: &VehicleState) -> Option<Maneuver> {
        ego.maneuver_target_lane.map(|target| {
            if target > ego.lane {
                Maneuver::ChangeLeft
            } else {
                Maneuver::ChangeRight
            }
        })
    }
}

/// IDM acceleration for a vehicle at speed `v` following a lead `gap` metres ahead.
pub fn idm_accel(v: f64, gap: f64, v_lead: f64, cfg: &MpcConfig) -> Result<f64> {
    if !(gap > 0.0) {
        return Err(Error::contract(format!("IDM gap must be positive, got {gap}")));
    }
    Ok(cfg.idm.accel(v, cfg.v_des, gap, v_lead))
}

/// Ego acceleration the planner's longitudinal law produces in `world`.
pub fn ego_idm_accel(world: &WorldState, cfg: &MpcConfig) -> f64 {
    let lanes = world.ego.attention_lanes(&world.lanes);
    let (gap, v_lead) = world
        .lead_in_lanes(Subject::Ego, &lanes)
        .map_or((f64::INFINITY, 0.0), |l| (l.gap, l.v));
    cfg.idm.accel(world.ego.v, cfg.v_des, gap, v_lead)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePlan {
    pub maneuver: Maneuver,
    /// Ego state after each rollout tick. Truncated at the first violation.
    pub trajectory: Vec<VehicleState>,
    /// `f64::INFINITY` when the rollout is unsafe or the maneuver impossible.
    pub cost: f64,
    /// Acceleration applied on the first rollout tick.
    pub first_accel: f64,
}

impl CandidatePlan {
    pub fn is_feasible(&self) -> bool {
        self.cost.is_finite()
    }

    fn infeasible(maneuver: Maneuver) -> Self {
        CandidatePlan {
            maneuver,
            trajectory: Vec::new(),
            cost: f64::INFINITY,
            first_accel: -MAX_BRAKE,
        }
    }
}

/// Lane the rollout must respect gaps in, or `None` if the maneuver cannot start.
fn rollout_lane(ego: &VehicleState, maneuver: Maneuver, lane_count: u32) -> Option<u32> {
    match (Maneuver::active(ego), maneuver) {
        (Some(active), m) if m == active || m == Maneuver::KeepLane => ego.maneuver_target_lane,
        (Some(_), _) => None,
        (None, Maneuver::KeepLane) => Some(ego.lane),
        (None, Maneuver::ChangeLeft) => (ego.lane + 1 < lane_count).then_some(ego.lane + 1),
        (None, Maneuver::ChangeRight) => ego.lane.checked_sub(1),
    }
}

/// True if some vehicle in `lane` sits closer than `min_gap` to the ego.
/// Vehicles behind are only checked when `check_rear` is set.
fn gap_violated(world: &WorldState, lane: u32, min_gap: f64, check_rear: bool) -> bool {
    let ego = &world.ego;
    world
        .traffic
        .iter()
        .filter(|o| o.occupies_lane(lane, &world.lanes))
        .any(|o| {
            if o.s >= ego.s {
                bumper_gap(ego, o) < min_gap
            } else {
                check_rear && bumper_gap(o, ego) < min_gap
            }
        })
}

/// Simulates `maneuver` over the horizon and prices it.
pub fn rollout_plan(world: &WorldState, maneuver: Maneuver, cfg: &MpcConfig) -> CandidatePlan {
    let Some(lane) = rollout_lane(&world.ego, maneuver, world.lanes.lane_count) else {
        return CandidatePlan::infeasible(maneuver);
    };
    let changing = maneuver != Maneuver::KeepLane || world.ego.is_maneuvering();
    let dt = world.dt;
    let ticks = whole_ratio(cfg.horizon, dt).unwrap_or(0);

    let mut state = world.clone();
    let mut trajectory = Vec::with_capacity(ticks as usize);
    let mut cost = if maneuver == Maneuver::KeepLane { 0.0 } else { cfg.w_lc };
    let mut first_accel = 0.0;
    for k in 0..ticks {
        let a = ego_idm_accel(&state, cfg);
        if k == 0 {
            first_accel = a;
        }
        let cmd = if k == 0 { maneuver.lane_change_cmd() } else { LaneChangeCmd::None };
        state = step_world(&state, &ControlInput::new(a, cmd), dt);
        if state.collision.is_some() || gap_violated(&state, lane, cfg.min_gap, changing) {
            return CandidatePlan {
                maneuver,
                trajectory,
                cost: f64::INFINITY,
                first_accel,
            };
        }
        let dv = state.ego.v - cfg.v_des;
        cost += dt * cfg.w_v * dv * dv;
        trajectory.push(state.ego.clone());
    }
    CandidatePlan {
        maneuver,
        trajectory,
        cost,
        first_accel,
    }
}

/// Output of one planner invocation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanDecision {
    pub maneuver: Maneuver,
    pub a_lon: f64,
    /// Set when every candidate was unsafe and the fallback was returned.
    pub infeasible: bool,
}

impl PlanDecision {
    pub fn control(&self) -> ControlInput {
        ControlInput::new(self.a_lon, self.maneuver.lane_change_cmd())
    }
}

/// Chooses the cheapest maneuver for the current tick.
///
/// An active lane change is always continued. Ties resolve in the order
/// `KeepLane`, `ChangeLeft`, `ChangeRight`.
pub fn plan(world: &WorldState, cfg: &MpcConfig) -> PlanDecision {
    if let Some(active) = Maneuver::active(&world.ego) {
        return PlanDecision {
            maneuver: active,
            a_lon: ego_idm_accel(world, cfg),
            infeasible: false,
        };
    }
    let mut best: Option<CandidatePlan> = None;
    for m in Maneuver::ALL {
        let candidate = rollout_plan(world, m, cfg);
        if candidate.is_feasible() && best.as_ref().is_none_or(|b| candidate.cost < b.cost) {
            best = Some(candidate);
        }
    }
    match best {
        Some(b) => PlanDecision {
            maneuver: b.maneuver,
            a_lon: b.first_accel,
            infeasible: false,
        },
        None => PlanDecision {
            maneuver: Maneuver::KeepLane,
            a_lon: -MAX_BRAKE,
            infeasible: true,
        },
    }
}
