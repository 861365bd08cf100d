//! Shadow delegate that announces what the target autopilot would do.
//!
//! The delegate only ever produces [`PreviewEvent`]s. It has no path to a
//! [`ControlInput`](crate::sim::ControlInput), so attaching it cannot change
//! how the vehicle moves.

use serde::{Deserialize, Serialize};

use crate::explain;
use crate::mpc::{self, Maneuver, MpcConfig, PlanDecision};
use crate::predict::{classify_effect, PredictedEffect, PredictionConfig};
use crate::sim::WorldState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmissionTrigger {
    SessionStart,
    ManeuverChange,
    SeverityEscalation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreviewEvent {
    pub tick: u64,
    pub time: f64,
    pub proposed_maneuver: Maneuver,
    pub proposed_a_lon: f64,
    /// Lane the proposed maneuver ends in; absent for `KeepLane`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_lane: Option<u32>,
    pub effect: PredictedEffect,
    pub explanation_id: String,
    pub trigger: EmissionTrigger,
}

impl PreviewEvent {
    /// True for announcements of a newly proposed lane change.
    pub fn announces_lane_change(&self) -> bool {
        self.proposed_maneuver != Maneuver::KeepLane && self.trigger != EmissionTrigger::SeverityEscalation
    }
}

fn proposed_target_lane(world: &WorldState, maneuver: Maneuver) -> Option<u32> {
    if let Some(target) = world.ego.maneuver_target_lane {
        return Some(target);
    }
    match maneuver {
        Maneuver::KeepLane => None,
        Maneuver::ChangeLeft => Some(world.ego.lane + 1),
        Maneuver::ChangeRight => world.ego.lane.checked_sub(1),
    }
}

/// Emission memory of one preview session.
#[derive(Debug, Clone, Default)]
pub struct Delegate {
    last: Option<PreviewEvent>,
}

impl Delegate {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn last_emitted(&self) -> Option<&PreviewEvent> {
        self.last.as_ref()
    }

    /// Runs `policy` and `predictor` on `world` and decides whether to speak.
    ///
    /// An event is emitted on the first call, when the proposed maneuver (or
    /// its target lane) differs from the last emission, or when the predicted
    /// effect is more severe than at the last emission.
    pub fn shadow_step<P, F>(&mut self, world: &WorldState, policy: P, predictor: F) -> Option<PreviewEvent>
    where
        P: FnOnce(&WorldState) -> PlanDecision,
        F: FnOnce(&WorldState, &PlanDecision) -> PredictedEffect,
    {
        let decision = policy(world);
        let effect = predictor(world, &decision);
        let target_lane = proposed_target_lane(world, decision.maneuver);

        let trigger = match &self.last {
            None => EmissionTrigger::SessionStart,
            Some(last) if last.proposed_maneuver != decision.maneuver || last.target_lane != target_lane => {
                EmissionTrigger::ManeuverChange
            }
            Some(last) if effect.severity() > last.effect.severity() => EmissionTrigger::SeverityEscalation,
            Some(_) => return None,
        };
        let event = PreviewEvent {
            tick: world.tick,
            time: world.time,
            proposed_maneuver: decision.maneuver,
            proposed_a_lon: decision.a_lon,
            target_lane,
            effect,
            explanation_id: explain::template_id(&effect).to_string(),
            trigger,
        };
        self.last = Some(event.clone());
        Some(event)
    }
}

/// Delegate wired to the target autopilot and the kinematic predictor.
#[derive(Debug, Clone)]
pub struct TargetShadow {
    pub autopilot: MpcConfig,
    pub prediction: PredictionConfig,
    delegate: Delegate,
}

impl TargetShadow {
    pub fn new(autopilot: MpcConfig, prediction: PredictionConfig) -> Self {
        TargetShadow {
            autopilot,
            prediction,
            delegate: Delegate::new(),
        }
    }

    pub fn observe(&mut self, world: &WorldState) -> Option<PreviewEvent> {
        let (autopilot, prediction) = (self.autopilot, self.prediction);
        self.delegate.shadow_step(
            world,
            |w| mpc::plan(w, &autopilot),
            |w, d| classify_effect(w, d.maneuver, d.a_lon, d.infeasible, &prediction),
        )
    }
}
