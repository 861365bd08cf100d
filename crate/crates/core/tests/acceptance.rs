//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use shadowdrive_core::harness::{generate_test_suite, lane_change_initiations, SWITCH_WINDOW, TEST_DURATION};
use shadowdrive_core::mpc::{Maneuver, MpcConfig};
use shadowdrive_core::predict::{estimate_collision, predict_future, PredictionConfig};
use shadowdrive_core::scenario::{random_control_log, random_scenario};
use shadowdrive_core::session::{
    replay_trace, run_headless, write_trace, ControlLog, ControlLogEntry, Mode, SessionConfig, TraceRecord,
};
use shadowdrive_core::sim::{
    footprints_overlap, world_from_parts, Behavior, LaneConfig, ScenarioSpec, TrafficInit, VehicleState,
};
use shadowdrive_core::stats::{
    effect_sizes_from_summary, hedges_correction, mann_whitney_u, student_t_from_summary, weighted_l1, Summary,
    TimedAnswer,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

const REPLAY_SCENARIOS: u64 = 20;
const REPLAY_TICKS: u64 = 300;

fn replay_config(seed: u64) -> SessionConfig {
    let duration = REPLAY_TICKS as f64 * 0.1;
    SessionConfig::new(Mode::ManualPreview, random_scenario(1_000 + seed, duration))
}

fn determinism_replay() -> Outcome {
    let start = Instant::now();
    for seed in 0..REPLAY_SCENARIOS {
        let config = replay_config(seed);
        let log = random_control_log(1_000 + seed, REPLAY_TICKS);
        let records = run_headless(&config, Some(&log)).map_err(|e| e.to_string())?;
        ensure(records.len() as u64 == REPLAY_TICKS, || format!("seed {seed}: {} records", records.len()))?;
        let text = write_trace(&config, &records);
        let outcome = replay_trace(&text, "trace").map_err(|e| e.to_string())?;
        ensure(outcome.identical, || format!("seed {seed}: replay diverged at line {:?}", outcome.first_mismatch_line))?;
    }
    // Autonomous run of scenario seed 7, twice.
    let observe = SessionConfig::new(Mode::AutopilotObserve, random_scenario(7, REPLAY_TICKS as f64 * 0.1));
    let a = run_headless(&observe, None).map_err(|e| e.to_string())?;
    let b = run_headless(&observe, None).map_err(|e| e.to_string())?;
    ensure(a == b, || "seed 7 autopilot runs differ".into())?;
    let elapsed = start.elapsed().as_secs_f64();
    ensure(elapsed < 10.0, || format!("took {elapsed:.2} s (limit 10 s)"))?;
    Ok(format!("{REPLAY_SCENARIOS} traces x {REPLAY_TICKS} ticks byte-identical on replay in {elapsed:.2} s"))
}

fn world_fields(r: &TraceRecord) -> impl PartialEq + '_ {
    (r.tick, r.time.to_bits(), &r.ego, &r.traffic, r.control, r.executed_maneuver_start, r.collision)
}

fn no_actuation() -> Outcome {
    let mut events = 0;
    for seed in 0..REPLAY_SCENARIOS {
        let with = replay_config(seed);
        let mut without = with.clone();
        without.attach_delegate = false;
        let log = random_control_log(1_000 + seed, REPLAY_TICKS);
        let a = run_headless(&with, Some(&log)).map_err(|e| e.to_string())?;
        let b = run_headless(&without, Some(&log)).map_err(|e| e.to_string())?;
        ensure(a.len() == b.len(), || format!("seed {seed}: lengths differ"))?;
        for (x, y) in a.iter().zip(&b) {
            ensure(world_fields(x) == world_fields(y), || format!("seed {seed}: tick {} differs", x.tick))?;
        }
        events += a.iter().filter(|r| r.preview_event.is_some()).count();
    }
    Ok(format!("{REPLAY_SCENARIOS} scenarios identical with/without delegate ({events} preview events emitted)"))
}

fn preview_equals_execution() -> Outcome {
    let suite = generate_test_suite(50, 50).map_err(|e| e.to_string())?;
    let mut compared = 0;
    for s in &suite {
        let config = SessionConfig::new(Mode::AutopilotObserve, s.spec.clone());
        let records = run_headless(&config, None).map_err(|e| e.to_string())?;
        let announced: Vec<(u64, Maneuver)> = records
            .iter()
            .filter_map(|r| r.preview_event.as_ref())
            .filter(|e| e.announces_lane_change())
            .map(|e| (e.tick, e.proposed_maneuver))
            .collect();
        let executed: Vec<(u64, Maneuver)> = records
            .iter()
            .filter_map(|r| r.executed_maneuver_start.map(|m| (r.tick, m)))
            .collect();
        ensure(!executed.is_empty(), || format!("{}: no lane change executed", s.id))?;
        ensure(announced == executed, || format!("{}: announced {announced:?} vs executed {executed:?}", s.id))?;
        compared += executed.len();
    }
    Ok(format!("{} scenarios, {compared} maneuver starts matched tick for tick", suite.len()))
}

/// Random constant-acceleration world with no initial overlap, as a scenario spec.
fn constant_accel_case(rng: &mut ChaCha8Rng, seed: u64) -> (ScenarioSpec, Maneuver, f64) {
    let lane_count = rng.random_range(2..=3u32);
    let lanes = LaneConfig::new(lane_count, 20_000.0);
    let ego = VehicleState::new(0, rng.random_range(0..lane_count), 500.0, rng.random_range(10.0..32.0))
        .with_accel(rng.random_range(-3.0..2.0));
    let mut traffic: Vec<TrafficInit> = Vec::new();
    let n = rng.random_range(1..=5);
    while traffic.len() < n {
        let candidate = VehicleState::new(
            traffic.len() as u32 + 1,
            rng.random_range(0..lane_count),
            ego.s + rng.random_range(-40.0..90.0),
            rng.random_range(0.0..30.0),
        )
        .with_accel(rng.random_range(-4.0..2.0));
        let clash = footprints_overlap(&ego, &candidate, &lanes)
            || traffic.iter().any(|t| footprints_overlap(&t.state, &candidate, &lanes));
        if !clash {
            traffic.push(TrafficInit { state: candidate, behavior: Behavior::ConstantAccel });
        }
    }
    let maneuver = Maneuver::ALL[rng.random_range(0..3)];
    let a_lon = rng.random_range(-8.0..2.0);
    let spec = ScenarioSpec {
        seed,
        duration: 5.1,
        lanes,
        ego_init: ego,
        traffic_init: traffic,
        dt: 0.1,
        autopilot: MpcConfig::default(),
    };
    (spec, maneuver, a_lon)
}

fn predictor_oracle() -> Outcome {
    let cfg = PredictionConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0xacce55);
    let (mut agree, mut collisions) = (0, 0);
    const CASES: usize = 200;
    for case in 0..CASES {
        let (spec, maneuver, a_lon) = constant_accel_case(&mut rng, case as u64);
        let world = spec.initial_world().map_err(|e| e.to_string())?;
        let predicted = estimate_collision(&predict_future(&world, maneuver, a_lon, &cfg), &cfg);

        // Ground truth: the simulator driven open-loop through a manual session.
        let mut config = SessionConfig::new(Mode::ManualPreview, spec);
        config.attach_delegate = false;
        let log = ControlLog {
            entries: vec![ControlLogEntry { tick: 0, a_lon_cmd: a_lon, lane_change_cmd: maneuver.lane_change_cmd() }],
        };
        let records = run_headless(&config, Some(&log)).map_err(|e| e.to_string())?;
        let truth = records
            .iter()
            .skip(1)
            .find_map(|r| r.collision.map(|c| (r.tick as f64 * 0.1, c.actor_id)));
        let predicted = predicted.map(|p| (p.ttc, p.actor_id));
        ensure(predicted == truth, || format!("case {case}: predicted {predicted:?} vs simulated {truth:?}"))?;
        agree += 1;
        collisions += truth.is_some() as usize;
    }

    let fixture = world_from_parts(
        LaneConfig::new(2, 10_000.0),
        VehicleState::new(0, 0, 0.0, 30.0),
        vec![(VehicleState::new(3, 0, 25.0, 20.0), Behavior::ConstantAccel)],
    );
    let hit = estimate_collision(&predict_future(&fixture, Maneuver::KeepLane, 0.0, &cfg), &cfg)
        .ok_or("closing-gap fixture predicted no collision")?;
    ensure((hit.ttc - 2.1).abs() < 1e-12, || format!("closing-gap fixture ttc {}", hit.ttc))?;
    ensure(collisions >= CASES / 10, || format!("only {collisions} colliding cases; oracle too weak"))?;
    Ok(format!("{agree}/{CASES} exact matches ({collisions} with collisions); closing-gap ttc = {:.1} s", hit.ttc))
}

fn mpc_ground_truth() -> Outcome {
    let suite = generate_test_suite(1, 8).map_err(|e| e.to_string())?;
    ensure(suite.len() == 8, || format!("{} scenarios", suite.len()))?;
    let mut times = Vec::new();
    for s in &suite {
        ensure(s.spec.duration == TEST_DURATION, || format!("{}: duration {}", s.id, s.spec.duration))?;
        let starts = lane_change_initiations(&s.spec).map_err(|e| e.to_string())?;
        ensure(starts.len() == 1, || format!("{}: {} initiations", s.id, starts.len()))?;
        let t = starts[0] as f64 * s.spec.dt;
        ensure(t > SWITCH_WINDOW.0 && t < SWITCH_WINDOW.1, || format!("{}: switch at {t}", s.id))?;
        ensure(t.to_bits() == s.ground_truth_t.to_bits(), || format!("{}: {t} vs stored {}", s.id, s.ground_truth_t))?;
        times.push(format!("{t:.1}"));
    }
    let again = generate_test_suite(1, 8).map_err(|e| e.to_string())?;
    ensure(again == suite, || "suite generation is not deterministic".into())?;
    Ok(format!("8 scenarios, switch times [{}] s reproduced exactly", times.join(", ")))
}

fn statistics_vs_summaries() -> Outcome {
    let comparison = Summary::from_moments(5, 1.09, 0.35);
    let treatment = Summary::from_moments(5, 0.67, 0.27);
    let t = student_t_from_summary(&comparison, &treatment).map_err(|e| e.to_string())?;
    let e = effect_sizes_from_summary(&comparison, &treatment).map_err(|e| e.to_string())?;
    let j = hedges_correction(t.df);
    ensure((e.cohens_d - 1.34).abs() <= 0.01, || format!("d = {}", e.cohens_d))?;
    ensure((t.t - 2.12).abs() <= 0.01, || format!("t = {}", t.t))?;
    ensure(t.df == 8.0, || format!("df = {}", t.df))?;
    ensure((j - 0.9032).abs() <= 0.0001, || format!("J = {j}"))?;
    ensure((e.correction - j).abs() < 1e-15, || "correction mismatch".into())?;
    Ok(format!(
        "d = {:.4}, t({}) = {:.4}, J = {:.4}, g = {:.4}",
        e.cohens_d, t.df, t.t, j, e.hedges_g
    ))
}

/// Brute-force Mann-Whitney via mid-ranks over every subset bitmask.
fn brute_force_mwu(a: &[f64], b: &[f64]) -> (f64, f64, f64) {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let n = pooled.len();
    let rank = |i: usize| {
        let below = pooled.iter().filter(|&&y| y < pooled[i]).count() as f64;
        let equal = pooled.iter().filter(|&&y| y == pooled[i]).count() as f64;
        below + (equal + 1.0) / 2.0
    };
    let ranks: Vec<f64> = (0..n).map(rank).collect();
    let n1 = a.len();
    let u_of = |mask: u32| {
        let r: f64 = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| ranks[i]).sum();
        r - (n1 * (n1 + 1)) as f64 / 2.0
    };
    let observed = u_of((1u32 << n1) - 1);
    let (mut ge, mut le, mut total) = (0u32, 0u32, 0u32);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != n1 {
            continue;
        }
        let u = u_of(mask);
        total += 1;
        ge += (u >= observed - 1e-9) as u32;
        le += (u <= observed + 1e-9) as u32;
    }
    (observed, ge as f64 / total as f64, le as f64 / total as f64)
}

fn mann_whitney_exactness() -> Outcome {
    let fixtures: [[f64; 8]; 6] = [
        [0.3, 0.5, 0.5, 0.7, 0.9, 1.1, 1.1, 1.4],
        [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0],
        [8.0, 7.0, 6.0, 5.0, 4.0, 3.0, 2.0, 1.0],
        [0.55, 0.78, 0.55, 0.61, 0.9, 0.42, 0.78, 0.66],
        [2.0, 2.0, 2.0, 2.0, 2.0, 2.0, 2.0, 2.0],
        [1.0, 3.0, 1.0, 3.0, 2.0, 2.0, 5.0, 0.0],
    ];
    let mut pairs = 0;
    for f in &fixtures {
        for n1 in 1..8 {
            for n2 in 1..=(8 - n1) {
                let (a, b) = (&f[..n1], &f[n1..n1 + n2]);
                let r = mann_whitney_u(a, b).map_err(|e| e.to_string())?;
                let (u, pg, pl) = brute_force_mwu(a, b);
                ensure(r.exact, || "expected exact enumeration".into())?;
                ensure((r.u_a - u).abs() < 1e-9, || format!("{a:?} {b:?}: U {} vs {u}", r.u_a))?;
                ensure((r.p_greater - pg).abs() < 1e-12 && (r.p_less - pl).abs() < 1e-12, || {
                    format!("{a:?} {b:?}: p ({}, {}) vs ({pg}, {pl})", r.p_greater, r.p_less)
                })?;
                ensure((r.one_tailed_p - pg.min(pl)).abs() < 1e-12, || "one-tailed p mismatch".into())?;
                pairs += 1;
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x0417);
    for _ in 0..1000 {
        let n1 = rng.random_range(1..12);
        let n2 = rng.random_range(1..12);
        let a: Vec<f64> = (0..n1).map(|_| rng.random_range(0..6) as f64 * 0.5).collect();
        let b: Vec<f64> = (0..n2).map(|_| rng.random_range(0..6) as f64 * 0.5).collect();
        let r = mann_whitney_u(&a, &b).map_err(|e| e.to_string())?;
        ensure(r.u_a + r.u_b == (n1 * n2) as f64, || format!("U_A + U_B != n1 n2 for {a:?} {b:?}"))?;
    }
    let sep = mann_whitney_u(&[6.0, 7.0, 8.0, 9.0, 10.0], &[1.0, 2.0, 3.0, 4.0, 5.0]).map_err(|e| e.to_string())?;
    ensure(sep.u_a == 25.0 && (sep.one_tailed_p - 1.0 / 252.0).abs() < 1e-15, || {
        format!("separated case U = {}, p = {}", sep.u_a, sep.one_tailed_p)
    })?;
    Ok(format!("{pairs} fixture pairs match brute force; 1000 random U_A + U_B checks; separated p = 1/252"))
}

fn metric_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x11);
    for case in 0..1000 {
        let n = rng.random_range(1..=8);
        let truths: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..4.5)).collect();
        let answers: Vec<TimedAnswer> = (0..n)
            .map(|_| TimedAnswer { t_hat: rng.random_range(0.0..5.0), confidence: rng.random_range(0.0..1.0) })
            .collect();
        let score = weighted_l1(&answers, &truths).map_err(|e| e.to_string())?;
        ensure(score >= 0.0, || format!("case {case}: negative score"))?;
        let k = rng.random_range(0.1..10.0);
        let scaled: Vec<TimedAnswer> =
            answers.iter().map(|a| TimedAnswer { confidence: a.confidence * k, ..*a }).collect();
        let rescored = weighted_l1(&scaled, &truths).map_err(|e| e.to_string())?;
        ensure((rescored - score).abs() <= 1e-9, || format!("case {case}: {score} vs {rescored} after x{k}"))?;
        let perfect: Vec<TimedAnswer> =
            truths.iter().zip(&answers).map(|(t, a)| TimedAnswer { t_hat: *t, ..*a }).collect();
        ensure(weighted_l1(&perfect, &truths).map_err(|e| e.to_string())? == 0.0, || format!("case {case}: perfect != 0"))?;
    }
    let fixture = weighted_l1(
        &[TimedAnswer { t_hat: 2.5, confidence: 1.0 }, TimedAnswer { t_hat: 2.0, confidence: 0.5 }],
        &[2.0, 3.0],
    )
    .map_err(|e| e.to_string())?;
    ensure((fixture - 2.0 / 3.0).abs() <= 1e-9, || format!("fixture score {fixture}"))?;
    Ok(format!("1000 random cases; fixture = {fixture:.4}"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("determinism/replay", determinism_replay),
        ("no-actuation", no_actuation),
        ("preview-equals-execution", preview_equals_execution),
        ("predictor oracle", predictor_oracle),
        ("MPC ground truth", mpc_ground_truth),
        ("statistics vs group summaries", statistics_vs_summaries),
        ("Mann-Whitney exactness", mann_whitney_exactness),
        ("metric properties", metric_properties),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

