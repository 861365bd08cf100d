//! Fixed English templates for the advisory action column.

use serde::{Deserialize, Serialize};

use crate::delegate::PreviewEvent;
use crate::mpc::Maneuver;
use crate::predict::PredictedEffect;
use crate::sim::VehicleId;

pub const TEMPLATE_INFO: &str = "info.v1";
pub const TEMPLATE_WARNING: &str = "warning.v1";
pub const TEMPLATE_CRITICAL: &str = "critical.v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Info,
    Warning,
    Critical,
}

impl From<&PredictedEffect> for Severity {
    fn from(effect: &PredictedEffect) -> Self {
        match effect {
            PredictedEffect::None => Severity::Info,
            PredictedEffect::CollisionRisk { .. } => Severity::Warning,
            PredictedEffect::TakeOverRequest => Severity::Critical,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationParams {
    pub maneuver: Maneuver,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ttc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub actor_id: Option<VehicleId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub severity: Severity,
    pub template_id: String,
    pub text: String,
    pub params: ExplanationParams,
}

pub fn maneuver_phrase(m: Maneuver) -> &'static str {
    match m {
        Maneuver::KeepLane => "keep lane",
        Maneuver::ChangeLeft => "change to the left lane",
        Maneuver::ChangeRight => "change to the right lane",
    }
}

pub fn template_id(effect: &PredictedEffect) -> &'static str {
    match Severity::from(effect) {
        Severity::Info => TEMPLATE_INFO,
        Severity::Warning => TEMPLATE_WARNING,
        Severity::Critical => TEMPLATE_CRITICAL,
    }
}

/// Renders the explanation text for a maneuver and its predicted effect.
pub fn render(maneuver: Maneuver, effect: &PredictedEffect) -> Explanation {
    let phrase = maneuver_phrase(maneuver);
    let (text, ttc, actor_id) = match *effect {
        PredictedEffect::None => (format!("Autopilot would {phrase} now."), None, None),
        PredictedEffect::CollisionRisk { ttc, actor_id } => (
            format!("Autopilot would {phrase} now \u{2014} predicted collision with vehicle {actor_id} in {ttc:.1} s."),
            Some(ttc),
            Some(actor_id),
        ),
        PredictedEffect::TakeOverRequest => (
            "Autopilot cannot find a safe action \u{2014} take over now.".to_string(),
            None,
            None,
        ),
    };
    Explanation {
        severity: Severity::from(effect),
        template_id: template_id(effect).to_string(),
        text,
        params: ExplanationParams { maneuver, ttc, actor_id },
    }
}

pub fn render_explanation(event: &PreviewEvent) -> Explanation {
    render(event.proposed_maneuver, &event.effect)
}
