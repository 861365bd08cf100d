//! Short-horizon future prediction under a proposed action.
//!
//! Traffic is extrapolated at its current accelerations, the ego holds the
//! proposed longitudinal acceleration and follows the lane-change profile.
//! Collisions are footprint overlaps on the same grid as the simulator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mpc::Maneuver;
use crate::sim::{check_collision, step_world, whole_ratio, Behavior, ControlInput, LaneChangeCmd, VehicleId, WorldState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredictionConfig {
    /// Prediction horizon, seconds.
    pub horizon: f64,
    pub dt: f64,
}

impl Default for PredictionConfig {
    fn default() -> Self {
        PredictionConfig {
            horizon: 5.0,
            dt: crate::sim::DEFAULT_DT,
        }
    }
}

impl PredictionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.horizon > 0.0) || whole_ratio(self.horizon, self.dt).is_none() {
            return Err(Error::contract("prediction horizon must be a positive whole number of ticks"));
        }
        Ok(())
    }

    pub fn steps(&self) -> u64 {
        whole_ratio(self.horizon, self.dt).unwrap_or(0)
    }
}

/// Predicted implication of taking an action.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PredictedEffect {
    None,
    CollisionRisk { ttc: f64, actor_id: VehicleId },
    TakeOverRequest,
}

impl PredictedEffect {
    /// Urgency rank: `None < TakeOverRequest < CollisionRisk`.
    pub fn severity(&self) -> u8 {
        match self {
            PredictedEffect::None => 0,
            PredictedEffect::TakeOverRequest => 1,
            PredictedEffect::CollisionRisk { .. } => 2,
        }
    }
}

/// First predicted collision: time offset from the trajectory start and the actor hit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollisionEstimate {
    pub ttc: f64,
    pub actor_id: VehicleId,
}

/// Open-loop rollout of `world` for `cfg.horizon` seconds.
///
/// Returns the states after each step; element `k` is `k + 1` steps ahead.
pub fn predict_future(world: &WorldState, maneuver: Maneuver, a_lon: f64, cfg: &PredictionConfig) -> Vec<WorldState> {
    let mut state = world.clone();
    state.dt = cfg.dt;
    state.behaviors.iter_mut().for_each(|b| *b = Behavior::ConstantAccel);
    let mut out = Vec::with_capacity(cfg.steps() as usize);
    for k in 0..cfg.steps() {
        let cmd = if k == 0 { maneuver.lane_change_cmd() } else { LaneChangeCmd::None };
        state = step_world(&state, &ControlInput::new(a_lon, cmd), cfg.dt);
        out.push(state.clone());
    }
    out
}

/// Scans a predicted trajectory for the first ego footprint overlap.
pub fn estimate_collision(trajectory: &[WorldState], cfg: &PredictionConfig) -> Option<CollisionEstimate> {
    trajectory.iter().enumerate().find_map(|(k, state)| {
        check_collision(state).map(|c| CollisionEstimate {
            ttc: (k + 1) as f64 * cfg.dt,
            actor_id: c.actor_id,
        })
    })
}

/// Classifies the implication of taking `(maneuver, a_lon)` in `world`.
pub fn classify_effect(
    world: &WorldState,
    maneuver: Maneuver,
    a_lon: f64,
    planner_infeasible: bool,
    cfg: &PredictionConfig,
) -> PredictedEffect {
    if planner_infeasible {
        return PredictedEffect::TakeOverRequest;
    }
    let trajectory = predict_future(world, maneuver, a_lon, cfg);
    match estimate_collision(&trajectory, cfg) {
        Some(c) => PredictedEffect::CollisionRisk {
            ttc: c.ttc,
            actor_id: c.actor_id,
        },
        None => PredictedEffect::None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{lateral_profile, world_from_parts, LaneConfig, VehicleState, LANE_CHANGE_SECS};

    fn closing_gap_world() -> WorldState {
        world_from_parts(
            LaneConfig::new(2, 10_000.0),
            VehicleState::new(0, 0, 0.0, 30.0),
            vec![(VehicleState::new(3, 0, 25.0, 20.0), Behavior::ConstantAccel)],
        )
    }

    #[test]
    fn uniform_motion_rollout() {
        let w = world_from_parts(
            LaneConfig::new(3, 10_000.0),
            VehicleState::new(0, 1, 0.0, 20.0),
            vec![(VehicleState::new(1, 0, 10.0, 15.0), Behavior::ConstantAccel)],
        );
        let cfg = PredictionConfig::default();
        let traj = predict_future(&w, Maneuver::KeepLane, 0.0, &cfg);
        assert_eq!(traj.len(), 50);
        let last = traj.last().unwrap();
        assert!((last.ego.s - 100.0).abs() < 1e-9);
        assert!((last.traffic[0].s - 85.0).abs() < 1e-9);
    }

    #[test]
    fn closing_gap_matches_closed_form() {
        let cfg = PredictionConfig::default();
        let traj = predict_future(&closing_gap_world(), Maneuver::KeepLane, 0.0, &cfg);
        for (k, state) in traj.iter().enumerate() {
            let t = (k + 1) as f64 * 0.1;
            let gap = crate::sim::bumper_gap(&state.ego, &state.traffic[0]);
            assert!((gap - (20.5 - 10.0 * t)).abs() < 1e-9, "k={k}");
        }
        let hit = estimate_collision(&traj, &cfg).unwrap();
        assert!((hit.ttc - 2.1).abs() < 1e-12);
        assert_eq!(hit.actor_id, 3);
    }

    #[test]
    fn lane_change_follows_profile() {
        let w = world_from_parts(LaneConfig::new(3, 10_000.0), VehicleState::new(0, 1, 0.0, 20.0), vec![]);
        let cfg = PredictionConfig::default();
        let traj = predict_future(&w, Maneuver::ChangeLeft, 0.0, &cfg);
        for (k, state) in traj.iter().enumerate().take(29) {
            let (expected, _) = lateral_profile((k + 1) as f64 * 0.1, LANE_CHANGE_SECS, 3.5, 1.0).unwrap();
            assert!((state.ego.lat_offset - expected).abs() < 1e-12);
        }
        assert_eq!(traj[29].ego.lane, 2);
    }

    #[test]
    fn empty_and_opening_gaps_predict_nothing() {
        let cfg = PredictionConfig::default();
        let empty = world_from_parts(LaneConfig::new(2, 10_000.0), VehicleState::new(0, 0, 0.0, 30.0), vec![]);
        assert_eq!(estimate_collision(&predict_future(&empty, Maneuver::KeepLane, 0.0, &cfg), &cfg), None);
        let opening = world_from_parts(
            LaneConfig::new(2, 10_000.0),
            VehicleState::new(0, 0, 0.0, 20.0),
            vec![(VehicleState::new(1, 0, 10.0, 25.0), Behavior::ConstantAccel)],
        );
        assert_eq!(estimate_collision(&predict_future(&opening, Maneuver::KeepLane, 0.0, &cfg), &cfg), None);
    }

    #[test]
    fn classification_priorities() {
        let cfg = PredictionConfig::default();
        let w = closing_gap_world();
        assert_eq!(classify_effect(&w, Maneuver::KeepLane, 0.0, true, &cfg), PredictedEffect::TakeOverRequest);
        match classify_effect(&w, Maneuver::KeepLane, 0.0, false, &cfg) {
            PredictedEffect::CollisionRisk { ttc, actor_id } => {
                assert!((ttc - 2.1).abs() < 1e-12);
                assert_eq!(actor_id, 3);
            }
            other => panic!("unexpected {other:?}"),
        }
        let empty = world_from_parts(LaneConfig::new(2, 10_000.0), VehicleState::new(0, 0, 0.0, 30.0), vec![]);
        assert_eq!(classify_effect(&empty, Maneuver::KeepLane, 0.0, false, &cfg), PredictedEffect::None);
    }

    #[test]
    fn longer_horizon_reports_same_ttc() {
        let w = closing_gap_world();
        let short = PredictionConfig { horizon: 2.5, ..Default::default() };
        let long = PredictionConfig { horizon: 8.0, ..Default::default() };
        let a = estimate_collision(&predict_future(&w, Maneuver::KeepLane, 0.0, &short), &short).unwrap();
        let b = estimate_collision(&predict_future(&w, Maneuver::KeepLane, 0.0, &long), &long).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn effect_serializes_with_kind_tag() {
        let e = PredictedEffect::CollisionRisk { ttc: 2.1, actor_id: 3 };
        assert_eq!(serde_json::to_string(&e).unwrap(), r#"{"kind":"collision_risk","ttc":2.1,"actor_id":3}"#);
        assert_eq!(serde_json::to_string(&PredictedEffect::None).unwrap(), r#"{"kind":"none"}"#);
        assert!(serde_json::from_str::<PredictedEffect>(r#"{"kind":"meteor"}"#).is_err());
    }
}
