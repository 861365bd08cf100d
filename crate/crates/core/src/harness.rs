//! Lane-switch timing study: test-suite generation, response ingestion and reporting.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::scenario::timing_candidate;
use crate::session::{run_headless, Mode, SessionConfig};
use crate::sim::ScenarioSpec;
use crate::stats::{self, EffectSizes, MannWhitney, Summary, TTest, TimedAnswer};

/// Consecutive rejected candidates after which suite generation gives up.
pub const MAX_REJECTIONS: u32 = 10_000;
/// Length of every test scenario, seconds.
pub const TEST_DURATION: f64 = 5.0;
/// The lane-change initiation must fall strictly inside this window, seconds.
pub const SWITCH_WINDOW: (f64, f64) = (0.5, 4.5);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestScenario {
    pub id: String,
    pub spec: ScenarioSpec,
    /// Time at which the autopilot initiates its lane change.
    pub ground_truth_t: f64,
}

/// Ticks at which the autopilot starts a lane change when driving `spec`.
pub fn lane_change_initiations(spec: &ScenarioSpec) -> Result<Vec<u64>> {
    let mut config = SessionConfig::new(Mode::AutopilotObserve, spec.clone());
    config.attach_delegate = false;
    Ok(run_headless(&config, None)?
        .iter()
        .filter(|r| r.executed_maneuver_start.is_some())
        .map(|r| r.tick)
        .collect())
}

fn accept(spec: &ScenarioSpec) -> Result<Option<f64>> {
    let starts = lane_change_initiations(spec)?;
    let [tick] = starts[..] else { return Ok(None) };
    let t = tick as f64 * spec.dt;
    Ok((t > SWITCH_WINDOW.0 && t < SWITCH_WINDOW.1).then_some(t))
}

/// Rejection-samples `n` scenarios in which the autopilot switches lanes exactly once.
pub fn generate_test_suite(seed: u64, n: usize) -> Result<Vec<TestScenario>> {
    if n == 0 {
        return Err(Error::contract("a test suite needs at least one scenario"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut suite = Vec::with_capacity(n);
    let mut rejections = 0;
    while suite.len() < n {
        let spec = timing_candidate(rng.next_u64());
        match accept(&spec)? {
            Some(ground_truth_t) => {
                rejections = 0;
                suite.push(TestScenario {
                    id: format!("S{}", suite.len() + 1),
                    spec,
                    ground_truth_t,
                });
            }
            None => {
                rejections += 1;
                if rejections >= MAX_REJECTIONS {
                    return Err(Error::GenerationFailed { rejections });
                }
            }
        }
    }
    Ok(suite)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Treatment,
    Comparison,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioAnswer {
    pub scenario_id: String,
    pub t_hat: f64,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticipantResponse {
    pub participant_id: String,
    pub condition: Condition,
    pub answers: Vec<ScenarioAnswer>,
}

/// Parses a responses file, clamping confidences to `[0, 1]`.
pub fn ingest_responses(text: &str, source_name: &str) -> Result<Vec<ParticipantResponse>> {
    let mut responses: Vec<ParticipantResponse> =
        serde_json::from_str(text).map_err(|e| Error::parse(source_name, &e, 0))?;
    if responses.is_empty() {
        return Err(Error::Ingestion(format!("{source_name} contains no responses")));
    }
    for r in &mut responses {
        for a in &mut r.answers {
            if !a.t_hat.is_finite() || a.confidence.is_nan() {
                return Err(Error::Ingestion(format!(
                    "participant {} scenario {}: non-numeric answer",
                    r.participant_id, a.scenario_id
                )));
            }
            a.confidence = a.confidence.clamp(0.0, 1.0);
        }
    }
    Ok(responses)
}

pub fn load_suite(text: &str, source_name: &str) -> Result<Vec<TestScenario>> {
    let suite: Vec<TestScenario> = serde_json::from_str(text).map_err(|e| Error::parse(source_name, &e, 0))?;
    if suite.is_empty() {
        return Err(Error::Ingestion(format!("{source_name} contains no scenarios")));
    }
    for s in &suite {
        s.spec.validate()?;
    }
    Ok(suite)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantScore {
    pub participant_id: String,
    pub condition: Condition,
    pub weighted_l1: f64,
    pub mean_confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub condition: Condition,
    pub weighted_l1: Summary,
    pub confidence: Summary,
}

/// Two-group comparison. Group A is the comparison condition, group B the treatment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupComparison {
    pub timing_t_test: Option<TTest>,
    pub timing_effect_sizes: Option<EffectSizes>,
    pub timing_mann_whitney: MannWhitney,
    pub confidence_mann_whitney: MannWhitney,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub participants: Vec<ParticipantScore>,
    pub groups: Vec<GroupReport>,
    pub comparison: Option<GroupComparison>,
    /// SHA-256 of the canonical JSON of the inputs.
    pub inputs_hash: String,
}

fn inputs_hash(responses: &[ParticipantResponse], suite: &[TestScenario]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(serde_json::to_vec(responses).expect("responses serialize"));
    hasher.update(b"\n");
    hasher.update(serde_json::to_vec(suite).expect("suite serializes"));
    hex::encode(hasher.finalize())
}

fn score_participant(r: &ParticipantResponse, suite: &[TestScenario]) -> Result<ParticipantScore> {
    let mut by_id: BTreeMap<&str, &ScenarioAnswer> = BTreeMap::new();
    for a in &r.answers {
        if !suite.iter().any(|s| s.id == a.scenario_id) {
            return Err(Error::UnknownScenario {
                participant: r.participant_id.clone(),
                scenario: a.scenario_id.clone(),
            });
        }
        if by_id.insert(&a.scenario_id, a).is_some() {
            return Err(Error::Ingestion(format!(
                "participant {} answered scenario {} twice",
                r.participant_id, a.scenario_id
            )));
        }
    }
    let mut answers = Vec::with_capacity(suite.len());
    let mut truths = Vec::with_capacity(suite.len());
    for s in suite {
        let a = by_id.get(s.id.as_str()).ok_or_else(|| Error::MissingAnswer {
            participant: r.participant_id.clone(),
            scenario: s.id.clone(),
        })?;
        answers.push(TimedAnswer {
            t_hat: a.t_hat,
            confidence: a.confidence,
        });
        truths.push(s.ground_truth_t);
    }
    Ok(ParticipantScore {
        participant_id: r.participant_id.clone(),
        condition: r.condition,
        weighted_l1: stats::weighted_l1(&answers, &truths)?,
        mean_confidence: answers.iter().map(|a| a.confidence).sum::<f64>() / answers.len() as f64,
    })
}

pub fn build_report(responses: &[ParticipantResponse], suite: &[TestScenario]) -> Result<MetricsReport> {
    if responses.is_empty() {
        return Err(Error::Ingestion("no participant responses".into()));
    }
    if suite.is_empty() {
        return Err(Error::Ingestion("empty test suite".into()));
    }
    let participants = responses
        .iter()
        .map(|r| score_participant(r, suite))
        .collect::<Result<Vec<_>>>()?;

    let column = |cond: Condition, f: fn(&ParticipantScore) -> f64| -> Vec<f64> {
        participants.iter().filter(|p| p.condition == cond).map(f).collect()
    };
    let mut groups = Vec::new();
    for cond in [Condition::Treatment, Condition::Comparison] {
        let l1 = column(cond, |p| p.weighted_l1);
        if l1.is_empty() {
            continue;
        }
        groups.push(GroupReport {
            condition: cond,
            weighted_l1: Summary::of(&l1)?,
            confidence: Summary::of(&column(cond, |p| p.mean_confidence))?,
        });
    }

    let (a_l1, b_l1) = (column(Condition::Comparison, |p| p.weighted_l1), column(Condition::Treatment, |p| p.weighted_l1));
    let comparison = if a_l1.is_empty() || b_l1.is_empty() {
        None
    } else {
        let (a_conf, b_conf) = (
            column(Condition::Comparison, |p| p.mean_confidence),
            column(Condition::Treatment, |p| p.mean_confidence),
        );
        Some(GroupComparison {
            timing_t_test: stats::student_t(&a_l1, &b_l1).ok(),
            timing_effect_sizes: stats::effect_sizes(&a_l1, &b_l1).ok(),
            timing_mann_whitney: stats::mann_whitney_u(&a_l1, &b_l1)?,
            confidence_mann_whitney: stats::mann_whitney_u(&a_conf, &b_conf)?,
        })
    };

    Ok(MetricsReport {
        participants,
        groups,
        comparison,
        inputs_hash: inputs_hash(responses, suite),
    })
}

fn condition_name(c: Condition) -> &'static str {
    match c {
        Condition::Treatment => "treatment",
        Condition::Comparison => "comparison",
    }
}

/// Aligned plain-text rendering of a report.
pub fn render_table(report: &MetricsReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<12} {:>3} {:>8} {:>8} {:>8} {:>8} {:>10} {:>8}",
        "group", "n", "mean", "sd", "min", "max", "conf_mean", "conf_sd"
    );
    for g in &report.groups {
        let s = &g.weighted_l1;
        let _ = writeln!(
            out,
            "{:<12} {:>3} {:>8.2} {:>8.2} {:>8.2} {:>8.2} {:>10.2} {:>8.2}",
            condition_name(g.condition),
            s.n,
            s.mean,
            s.sd,
            s.min,
            s.max,
            g.confidence.mean,
            g.confidence.sd
        );
    }
    if let Some(c) = &report.comparison {
        if let Some(t) = &c.timing_t_test {
            let _ = writeln!(
                out,
                "timing error t({}) = {:.2}, p two-tailed = {:.4}, p one-tailed = {:.4}",
                t.df, t.t, t.p_two_tailed, t.p_one_tailed
            );
        }
        if let Some(e) = &c.timing_effect_sizes {
            let _ = writeln!(out, "Cohen's d = {:.2}, Hedges' g = {:.2}", e.cohens_d, e.hedges_g);
        }
        for (label, m) in [("timing error", &c.timing_mann_whitney), ("confidence", &c.confidence_mann_whitney)] {
            let _ = writeln!(
                out,
                "{label} Mann-Whitney U = {:.1}, one-tailed p = {:.4} ({})",
                m.u_a,
                m.one_tailed_p,
                if m.exact { "exact" } else { "normal approx." }
            );
        }
    }
    let _ = writeln!(out, "inputs sha256 {}", report.inputs_hash);
    out
}
