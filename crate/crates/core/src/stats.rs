//! Scoring and small-sample two-group statistics for the timing study.

use itertools::Itertools;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};

/// Largest pooled sample size for which the Mann-Whitney p-value is enumerated exactly.
pub const MWU_EXACT_MAX: usize = 12;

/// One predicted timestamp with the participant's confidence in it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedAnswer {
    pub t_hat: f64,
    pub confidence: f64,
}

/// Confidence-weighted mean absolute timing error, in seconds.
///
/// Falls back to the unweighted mean when every confidence is zero.
pub fn weighted_l1(answers: &[TimedAnswer], truths: &[f64]) -> Result<f64> {
    if answers.len() != truths.len() {
        return Err(Error::contract(format!(
            "{} answers for {} ground truths",
            answers.len(),
            truths.len()
        )));
    }
    if answers.is_empty() {
        return Err(Error::contract("weighted_l1 needs at least one answer"));
    }
    if answers.iter().any(|a| !(a.confidence >= 0.0) || !a.confidence.is_finite()) {
        return Err(Error::contract("confidences must be finite and nonnegative"));
    }
    let errors = answers.iter().zip(truths).map(|(a, t)| (a.t_hat - t).abs());
    let total_weight: f64 = answers.iter().map(|a| a.confidence).sum();
    if total_weight == 0.0 {
        return Ok(errors.sum::<f64>() / answers.len() as f64);
    }
    let weighted: f64 = errors.zip(answers).map(|(e, a)| a.confidence * e).sum();
    Ok(weighted / total_weight)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator); 0 for a single value.
    pub sd: f64,
    pub min: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::contract("cannot summarize an empty sample"));
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(Summary { n, mean, sd, min, max })
    }

    /// Summary known only through its moments (e.g. read off a results table).
    pub fn from_moments(n: usize, mean: f64, sd: f64) -> Self {
        Summary {
            n,
            mean,
            sd,
            min: f64::NAN,
            max: f64::NAN,
        }
    }
}

fn pooled_sd(a: &Summary, b: &Summary) -> Result<(f64, f64)> {
    if a.n < 2 || b.n < 2 {
        return Err(Error::contract("each group needs at least two samples"));
    }
    let df = (a.n + b.n - 2) as f64;
    let var = ((a.n - 1) as f64 * a.sd * a.sd + (b.n - 1) as f64 * b.sd * b.sd) / df;
    Ok((var.sqrt(), df))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    /// Positive when mean(A) > mean(B).
    pub t: f64,
    pub df: f64,
    pub p_two_tailed: f64,
    /// Against the alternative mean(A) > mean(B).
    pub p_one_tailed: f64,
}

/// Pooled-variance two-sample t test.
pub fn student_t(a: &[f64], b: &[f64]) -> Result<TTest> {
    student_t_from_summary(&Summary::of(a)?, &Summary::of(b)?)
}

pub fn student_t_from_summary(a: &Summary, b: &Summary) -> Result<TTest> {
    let (sp, df) = pooled_sd(a, b)?;
    let diff = a.mean - b.mean;
    let t = if diff == 0.0 {
        0.0
    } else {
        diff / (sp * (1.0 / a.n as f64 + 1.0 / b.n as f64).sqrt())
    };
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::contract(e.to_string()))?;
    let upper = |x: f64| {
        if x.is_infinite() {
            if x > 0.0 { 0.0 } else { 1.0 }
        } else {
            dist.sf(x)
        }
    };
    Ok(TTest {
        t,
        df,
        p_two_tailed: (2.0 * upper(t.abs())).min(1.0),
        p_one_tailed: upper(t),
    })
}

/// Small-sample correction factor turning Cohen's d into Hedges' g.
pub fn hedges_correction(df: f64) -> f64 {
    1.0 - 3.0 / (4.0 * df - 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectSizes {
    pub cohens_d: f64,
    pub hedges_g: f64,
    pub correction: f64,
}

pub fn effect_sizes(a: &[f64], b: &[f64]) -> Result<EffectSizes> {
    effect_sizes_from_summary(&Summary::of(a)?, &Summary::of(b)?)
}

pub fn effect_sizes_from_summary(a: &Summary, b: &Summary) -> Result<EffectSizes> {
    let (sp, df) = pooled_sd(a, b)?;
    if sp == 0.0 {
        return Err(Error::UndefinedEffect);
    }
    let cohens_d = (a.mean - b.mean).abs() / sp;
    let correction = hedges_correction(df);
    Ok(EffectSizes {
        cohens_d,
        hedges_g: correction * cohens_d,
        correction,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    /// Pairs with a > b, ties counted as one half.
    pub u_a: f64,
    pub u_b: f64,
    /// P(U_A >= observed) under the null.
    pub p_greater: f64,
    /// P(U_A <= observed) under the null.
    pub p_less: f64,
    /// Tail probability in the direction of the observed effect.
    pub one_tailed_p: f64,
    pub exact: bool,
}

/// Doubled U statistic (integral) of the group selected by `in_a`.
fn doubled_u(pair_score: &[Vec<u32>], members: &[usize], in_a: &[bool]) -> u32 {
    members
        .iter()
        .map(|&i| {
            pair_score[i]
                .iter()
                .enumerate()
                .filter(|(j, _)| !in_a[*j])
                .map(|(_, s)| s)
                .sum::<u32>()
        })
        .sum()
}

/// Mann-Whitney U test of A against B.
///
/// The p-values are exact (full enumeration of group assignments) when
/// `n1 + n2 <= 12`, and use the tie-corrected normal approximation with
/// continuity correction otherwise.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<MannWhitney> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::contract("Mann-Whitney U needs two nonempty groups"));
    }
    if a.iter().chain(b).any(|x| x.is_nan()) {
        return Err(Error::contract("Mann-Whitney U inputs must not be NaN"));
    }
    let (n1, n2) = (a.len(), b.len());
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let n = pooled.len();
    // pair_score[i][j] = 2 if x_i > x_j, 1 if equal, 0 otherwise.
    let pair_score: Vec<Vec<u32>> = pooled
        .iter()
        .map(|x| pooled.iter().map(|y| if x > y { 2 } else if x == y { 1 } else { 0 }).collect())
        .collect();

    let observed_in_a: Vec<bool> = (0..n).map(|i| i < n1).collect();
    let observed = doubled_u(&pair_score, &(0..n1).collect::<Vec<_>>(), &observed_in_a);
    let u_a = observed as f64 / 2.0;
    let u_b = (n1 * n2) as f64 - u_a;

    let (p_greater, p_less, exact) = if n <= MWU_EXACT_MAX {
        let (mut ge, mut le, mut total) = (0u64, 0u64, 0u64);
        for members in (0..n).combinations(n1) {
            let mut in_a = vec![false; n];
            members.iter().for_each(|&i| in_a[i] = true);
            let u = doubled_u(&pair_score, &members, &in_a);
            total += 1;
            ge += (u >= observed) as u64;
            le += (u <= observed) as u64;
        }
        (ge as f64 / total as f64, le as f64 / total as f64, true)
    } else {
        let (pg, pl) = normal_tails(&pooled, n1, n2, u_a);
        (pg, pl, false)
    };
    Ok(MannWhitney {
        u_a,
        u_b,
        p_greater,
        p_less,
        one_tailed_p: p_greater.min(p_less),
        exact,
    })
}

fn normal_tails(pooled: &[f64], n1: usize, n2: usize, u: f64) -> (f64, f64) {
    let n = pooled.len() as f64;
    let mut sorted = pooled.to_vec();
    sorted.sort_by(f64::total_cmp);
    let tie_term: f64 = sorted
        .chunk_by(|x, y| x == y)
        .map(|g| {
            let t = g.len() as f64;
            t * t * t - t
        })
        .sum();
    let nn = (n1 * n2) as f64;
    let mean = nn / 2.0;
    let var = nn / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if !(var > 0.0) {
        return (1.0, 1.0);
    }
    let normal = Normal::standard();
    let sd = var.sqrt();
    let p_greater = normal.sf((u - mean - 0.5) / sd).min(1.0);
    let p_less = normal.cdf((u - mean + 0.5) / sd).min(1.0);
    (p_greater, p_less)
}
