use std::f64::consts::PI;

use proptest::prelude::*;

use shadowdrive_core::mpc::{plan, rollout_plan, Maneuver, MpcConfig};
use shadowdrive_core::predict::{estimate_collision, predict_future, PredictionConfig};
use shadowdrive_core::scenario::{random_control_log, random_scenario};
use shadowdrive_core::session::{run_headless, write_trace, Mode, SessionConfig};
use shadowdrive_core::sim::{
    bumper_gap, check_collision, footprints_overlap, step_world, world_from_parts, Behavior, ControlInput,
    LaneChangeCmd, LaneConfig, VehicleState, LANE_CHANGE_SECS,
};
use shadowdrive_core::stats::{mann_whitney_u, student_t, weighted_l1, TimedAnswer};

fn manual_config(seed: u64, duration: f64) -> SessionConfig {
    SessionConfig::new(Mode::ManualPreview, random_scenario(seed, duration))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn simulation_invariants_hold(seed in any::<u64>()) {
        let config = manual_config(seed, 20.0);
        let log = random_control_log(seed, 200);
        let a = run_headless(&config, Some(&log)).unwrap();
        let b = run_headless(&config, Some(&log)).unwrap();
        prop_assert_eq!(write_trace(&config, &a), write_trace(&config, &b));

        let lanes = config.scenario.lanes;
        let max_lateral_step = lanes.lane_width / 2.0 * (PI / LANE_CHANGE_SECS) * config.scenario.dt + 1e-9;
        for w in a.windows(2) {
            let (prev, next) = (&w[0], &w[1]);
            prop_assert!(next.ego.v >= 0.0);
            prop_assert!(next.traffic.iter().all(|t| t.v >= 0.0));
            let dy = (next.ego.lateral_position(&lanes) - prev.ego.lateral_position(&lanes)).abs();
            prop_assert!(dy <= max_lateral_step, "lateral jump {dy}");
            if prev.ego.is_maneuvering() && next.ego.is_maneuvering() {
                prop_assert_eq!(prev.ego.maneuver_target_lane, next.ego.maneuver_target_lane);
                prop_assert_eq!(prev.ego.lane, next.ego.lane);
            }
            if prev.ego.lane != next.ego.lane {
                prop_assert_eq!(prev.ego.maneuver_target_lane, Some(next.ego.lane));
                prop_assert!(!next.ego.is_maneuvering());
            }
            let ids: Vec<_> = next.traffic.iter().map(|t| t.id).collect();
            prop_assert!(ids.windows(2).all(|p| p[0] < p[1]));
        }
    }

    #[test]
    fn footprint_overlap_is_symmetric(
        s1 in 0.0..50.0f64, s2 in 0.0..50.0f64,
        l1 in 0u32..3, l2 in 0u32..3,
        off1 in -3.5..3.5f64, off2 in -3.5..3.5f64,
        len1 in 3.0..6.0f64, len2 in 3.0..6.0f64,
    ) {
        let lanes = LaneConfig::new(3, 1000.0);
        let mut a = VehicleState::new(0, l1, s1, 0.0);
        a.lat_offset = off1;
        a.length = len1;
        let mut b = VehicleState::new(1, l2, s2, 0.0);
        b.lat_offset = off2;
        b.length = len2;
        prop_assert_eq!(footprints_overlap(&a, &b, &lanes), footprints_overlap(&b, &a, &lanes));

        let ab = world_from_parts(lanes, a.clone(), vec![(b.clone(), Behavior::ConstantAccel)]);
        let mut b_ego = b.clone();
        b_ego.id = 0;
        let mut a_actor = a.clone();
        a_actor.id = 1;
        let ba = world_from_parts(lanes, b_ego, vec![(a_actor, Behavior::ConstantAccel)]);
        prop_assert_eq!(check_collision(&ab).is_some(), check_collision(&ba).is_some());
    }

    #[test]
    fn planner_is_pure_and_scale_invariant(seed in any::<u64>(), k_exp in -3i32..4) {
        let spec = random_scenario(seed, 10.0);
        let world = spec.initial_world().unwrap();
        let cfg = spec.autopilot;
        let d = plan(&world, &cfg);
        prop_assert_eq!(d, plan(&world, &cfg));

        // Power-of-two scaling keeps every cost term exact.
        let k = 2f64.powi(k_exp);
        let scaled = MpcConfig { w_v: cfg.w_v * k, w_lc: cfg.w_lc * k, ..cfg };
        prop_assert_eq!(plan(&world, &scaled).maneuver, d.maneuver);
    }

    #[test]
    fn chosen_plan_respects_min_gap(seed in any::<u64>()) {
        let spec = random_scenario(seed, 10.0);
        let world = spec.initial_world().unwrap();
        let cfg = spec.autopilot;
        let d = plan(&world, &cfg);
        prop_assume!(!d.infeasible);
        let chosen = rollout_plan(&world, d.maneuver, &cfg);
        prop_assert!(chosen.cost.is_finite());
        prop_assert_eq!(chosen.first_accel, d.a_lon);

        // Re-simulate the rollout independently and measure every gap in the lane kept or entered.
        let target = match d.maneuver {
            Maneuver::KeepLane => world.ego.lane,
            Maneuver::ChangeLeft => world.ego.lane + 1,
            Maneuver::ChangeRight => world.ego.lane - 1,
        };
        let mut state = world.clone();
        for (k, ego) in chosen.trajectory.iter().enumerate() {
            let cmd = if k == 0 { d.maneuver.lane_change_cmd() } else { LaneChangeCmd::None };
            let a = shadowdrive_core::mpc::ego_idm_accel(&state, &cfg);
            state = step_world(&state, &ControlInput::new(a, cmd), state.dt);
            prop_assert_eq!(&state.ego, ego);
            prop_assert!(state.collision.is_none());
            for o in state.traffic.iter().filter(|o| o.occupies_lane(target, &state.lanes)) {
                if o.s >= ego.s {
                    prop_assert!(bumper_gap(ego, o) >= cfg.min_gap);
                } else if d.maneuver != Maneuver::KeepLane {
                    prop_assert!(bumper_gap(o, ego) >= cfg.min_gap);
                }
            }
        }
    }

    #[test]
    fn autopilot_commits_to_started_maneuvers(seed in any::<u64>()) {
        let spec = random_scenario(seed, 15.0);
        let config = SessionConfig::new(Mode::AutopilotObserve, spec.clone());
        let records = run_headless(&config, None).unwrap();
        let mut world = spec.initial_world().unwrap();
        for r in &records {
            let d = plan(&world, &spec.autopilot);
            if let Some(active) = Maneuver::active(&world.ego) {
                prop_assert_eq!(d.maneuver, active);
            }
            world = step_world(&world, &r.control, spec.dt);
        }
    }

    #[test]
    fn predictor_horizon_monotone(seed in any::<u64>(), extra in 1u32..30) {
        let spec = random_scenario(seed, 10.0);
        let world = spec.initial_world().unwrap();
        let short = PredictionConfig { horizon: 3.0, ..Default::default() };
        let long = PredictionConfig { horizon: 3.0 + extra as f64 * 0.1, ..Default::default() };
        let a = estimate_collision(&predict_future(&world, Maneuver::KeepLane, 1.0, &short), &short);
        let b = estimate_collision(&predict_future(&world, Maneuver::KeepLane, 1.0, &long), &long);
        if let Some(a) = a {
            prop_assert_eq!(Some(a), b);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn weighted_l1_properties(
        rows in prop::collection::vec((0.0..5.0f64, 0.0..5.0f64, 0.0..1.0f64), 1..10),
        scale in 0.01..100.0f64,
    ) {
        let truths: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let answers: Vec<TimedAnswer> = rows.iter().map(|r| TimedAnswer { t_hat: r.1, confidence: r.2 }).collect();
        let score = weighted_l1(&answers, &truths).unwrap();
        prop_assert!(score >= 0.0);
        let scaled: Vec<TimedAnswer> = answers.iter().map(|a| TimedAnswer { confidence: a.confidence * scale, ..*a }).collect();
        prop_assert!((weighted_l1(&scaled, &truths).unwrap() - score).abs() <= 1e-9 * (1.0 + score));
        let exact: Vec<TimedAnswer> = truths.iter().zip(&answers).map(|(t, a)| TimedAnswer { t_hat: *t, ..*a }).collect();
        prop_assert_eq!(weighted_l1(&exact, &truths).unwrap(), 0.0);
    }

    #[test]
    fn student_t_antisymmetric_and_shift_invariant(
        a in prop::collection::vec(-10.0..10.0f64, 2..8),
        b in prop::collection::vec(-10.0..10.0f64, 2..8),
        shift in -50.0..50.0f64,
    ) {
        let ab = student_t(&a, &b).unwrap();
        let ba = student_t(&b, &a).unwrap();
        prop_assert_eq!(ab.t, -ba.t);
        prop_assert_eq!(ab.df, ba.df);
        let a2: Vec<f64> = a.iter().map(|x| x + shift).collect();
        let b2: Vec<f64> = b.iter().map(|x| x + shift).collect();
        let shifted = student_t(&a2, &b2).unwrap();
        prop_assert!((shifted.t.abs() - ab.t.abs()).abs() <= 1e-6 * (1.0 + ab.t.abs()));
    }

    #[test]
    fn mann_whitney_u_sums_to_pair_count(
        a in prop::collection::vec(0u8..6, 1..9),
        b in prop::collection::vec(0u8..6, 1..9),
    ) {
        let a: Vec<f64> = a.into_iter().map(f64::from).collect();
        let b: Vec<f64> = b.into_iter().map(f64::from).collect();
        let r = mann_whitney_u(&a, &b).unwrap();
        prop_assert_eq!(r.u_a + r.u_b, (a.len() * b.len()) as f64);
        prop_assert!(r.one_tailed_p > 0.0 && r.one_tailed_p <= 1.0);
    }
}

#[test]
fn delegate_never_changes_the_world() {
    for seed in 0..5 {
        let mut with = manual_config(seed, 15.0);
        let log = random_control_log(seed, 150);
        with.attach_delegate = true;
        let mut without = with.clone();
        without.attach_delegate = false;
        let a = run_headless(&with, Some(&log)).unwrap();
        let b = run_headless(&without, Some(&log)).unwrap();
        assert!(a.iter().any(|r| r.preview_event.is_some()));
        assert!(b.iter().all(|r| r.preview_event.is_none()));
        for (x, y) in a.iter().zip(&b) {
            assert_eq!((x.tick, &x.ego, &x.traffic, x.control), (y.tick, &y.ego, &y.traffic, y.control));
        }
    }
}
