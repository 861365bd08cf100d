//! Seeded scenario and control-log generators.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::mpc::{IdmParams, MpcConfig};
use crate::session::{ControlLog, ControlLogEntry};
use crate::sim::{Behavior, LaneChangeCmd, LaneConfig, ScenarioSpec, TrafficInit, VehicleState, DEFAULT_DT};

const ROAD_LENGTH: f64 = 20_000.0;
const EGO_START: f64 = 500.0;

/// Places `count` traffic vehicles without initial overlaps.
///
/// Same-lane vehicles (and the ego) keep at least `spacing` metres between centers.
fn place_traffic(
    rng: &mut ChaCha8Rng,
    lanes: u32,
    ego: &VehicleState,
    count: usize,
    first_id: u32,
    spacing: f64,
    behavior: impl Fn(&mut ChaCha8Rng, f64) -> (Behavior, f64),
) -> Vec<TrafficInit> {
    let mut placed: Vec<TrafficInit> = Vec::new();
    let mut attempts = 0;
    while placed.len() < count && attempts < 200 {
        attempts += 1;
        let lane = rng.random_range(0..lanes);
        let s = ego.s + rng.random_range(-80.0..250.0);
        let clash = |other: &VehicleState| other.lane == lane && (other.s - s).abs() < spacing;
        if clash(ego) || placed.iter().any(|t| clash(&t.state)) {
            continue;
        }
        let v = rng.random_range(10.0..30.0);
        let (behavior, a_lon) = behavior(rng, v);
        let id = first_id + placed.len() as u32;
        placed.push(TrafficInit {
            state: VehicleState::new(id, lane, s, v).with_accel(a_lon),
            behavior,
        });
    }
    placed
}

/// Random mixed-traffic scenario of the given duration.
pub fn random_scenario(seed: u64, duration: f64) -> ScenarioSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lane_count = rng.random_range(2..=4);
    let v_des = rng.random_range(20.0..30.0);
    let ego = VehicleState::new(0, rng.random_range(0..lane_count), EGO_START, rng.random_range(15.0..30.0));
    let count = rng.random_range(3..=8);
    let traffic = place_traffic(&mut rng, lane_count, &ego, count, 1, 12.0, |rng, v| {
        if rng.random_bool(0.7) {
            let v_des = (v + rng.random_range(-3.0..3.0)).max(5.0);
            (Behavior::FollowIdm { v_des, idm: IdmParams::default() }, 0.0)
        } else {
            (Behavior::ConstantAccel, rng.random_range(-0.5..0.5))
        }
    });
    ScenarioSpec {
        seed,
        duration,
        lanes: LaneConfig::new(lane_count, ROAD_LENGTH),
        ego_init: ego,
        traffic_init: traffic,
        dt: DEFAULT_DT,
        autopilot: MpcConfig {
            v_des,
            ..MpcConfig::default()
        },
    }
}

/// Random human control log: piecewise-constant acceleration with occasional lane changes.
///
/// Some commands deliberately exceed the actuator limits.
pub fn random_control_log(seed: u64, ticks: u64) -> ControlLog {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_c0de);
    let mut entries = Vec::new();
    let mut tick = 0;
    while tick < ticks {
        let lane_change_cmd = match rng.random_range(0..10) {
            0 => LaneChangeCmd::Left,
            1 => LaneChangeCmd::Right,
            _ => LaneChangeCmd::None,
        };
        entries.push(ControlLogEntry {
            tick,
            a_lon_cmd: rng.random_range(-10.0..4.0),
            lane_change_cmd,
        });
        tick += rng.random_range(1..25);
    }
    ControlLog { entries }
}

/// Candidate for a lane-switch timing test: a slow vehicle ahead of the ego,
/// with a neighbour that may hold the passing lane for a while.
pub fn timing_candidate(seed: u64) -> ScenarioSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lane_count = 3;
    let v_des = rng.random_range(22.0..28.0);
    let ego_lane = rng.random_range(0..2);
    let ego = VehicleState::new(0, ego_lane, EGO_START, v_des);

    let mut traffic = Vec::new();
    let closing = rng.random_range(5.0..12.0);
    let lead_gap = rng.random_range(40.0..220.0);
    traffic.push(TrafficInit {
        state: VehicleState::new(1, ego_lane, ego.s + ego.length + lead_gap, v_des - closing),
        behavior: Behavior::ConstantAccel,
    });

    if rng.random_bool(0.6) {
        let offset = rng.random_range(-40.0..25.0);
        let v = v_des + rng.random_range(-4.0..3.0);
        traffic.push(TrafficInit {
            state: VehicleState::new(2, ego_lane + 1, ego.s + offset, v),
            behavior: Behavior::FollowIdm { v_des: v, idm: IdmParams::default() },
        });
    }
    if ego_lane == 1 {
        // Keep the right lane occupied by a slow queue so passing goes left.
        let s = ego.s + rng.random_range(-10.0..40.0);
        traffic.push(TrafficInit {
            state: VehicleState::new(3, 0, s, v_des - closing - rng.random_range(0.0..3.0)),
            behavior: Behavior::ConstantAccel,
        });
    }
    ScenarioSpec {
        seed,
        duration: 5.0,
        lanes: LaneConfig::new(lane_count, ROAD_LENGTH),
        ego_init: ego,
        traffic_init: traffic,
        dt: DEFAULT_DT,
        autopilot: MpcConfig {
            v_des,
            ..MpcConfig::default()
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generators_are_deterministic_and_valid() {
        for seed in 0..30 {
            let a = random_scenario(seed, 30.0);
            assert_eq!(a, random_scenario(seed, 30.0));
            a.validate().unwrap();
            let c = timing_candidate(seed);
            assert_eq!(c, timing_candidate(seed));
            c.validate().unwrap();
            assert_eq!(random_control_log(seed, 300), random_control_log(seed, 300));
        }
    }
}
