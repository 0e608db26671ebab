//! Evaluation metrics, closed-form bounds and run aggregation.
//!
//! All functions here are pure. Per-round series have one value per round of
//! the trace.

use std::f64::consts::PI;

use serde::Serialize;

use crate::elimination::log_bar;
use crate::env::ArmSet;
use crate::error::{Error, Result};
use crate::seq::{Action, BaiResult, Trace};

/// Stable metric identifiers, used as CSV column names.
pub const METRIC_NAMES: [&str; 7] = [
    "pseudo_regret",
    "npr",
    "opt_star",
    "opti_star",
    "delta_hat",
    "psi_rounds",
    "psi_pulls",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricSeries {
    pub name: &'static str,
    pub run: Option<usize>,
    pub values: Vec<f64>,
}

impl MetricSeries {
    fn new(name: &'static str, values: Vec<f64>) -> Self {
        Self {
            name,
            run: None,
            values,
        }
    }

    pub fn with_run(mut self, run: usize) -> Self {
        self.run = Some(run);
        self
    }

    pub fn last(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }
}

fn check_k(trace: &Trace, arms: &ArmSet) -> Result<()> {
    if trace.k != arms.k() {
        return Err(Error::InvalidParameter(format!(
            "trace has K = {}, arm set has K = {}",
            trace.k,
            arms.k()
        )));
    }
    Ok(())
}

fn rounds(trace: &Trace) -> impl Iterator<Item = &[crate::seq::Step]> {
    trace.steps.chunks(trace.k)
}

/// Cumulative pseudo-regret per round.
///
/// A round costs `mu*` unless the optimal arm was pulled in it, and every pull
/// of a suboptimal arm `i` adds its gap. Pulling only the optimal arm once per
/// round is free; skipping a whole round costs `mu*`.
pub fn pseudo_regret(trace: &Trace, arms: &ArmSet) -> Result<MetricSeries> {
    check_k(trace, arms)?;
    let best = arms.best();
    let mu_star = arms.best_mean();
    let gaps = arms.gaps();
    let mut total = 0.0;
    let values = rounds(trace)
        .map(|round| {
            let mut optimal_pulled = false;
            let mut inc = 0.0;
            for s in round.iter().filter(|s| s.action == Action::Pull) {
                if s.offered == best {
                    optimal_pulled = true;
                } else {
                    inc += gaps[s.offered];
                }
            }
            if !optimal_pulled {
                inc += mu_star;
            }
            total += inc;
            total
        })
        .collect();
    Ok(MetricSeries::new("pseudo_regret", values))
}

/// Pulls per round.
pub fn npr(trace: &Trace) -> MetricSeries {
    let values = rounds(trace)
        .map(|r| r.iter().filter(|s| s.action == Action::Pull).count() as f64)
        .collect();
    MetricSeries::new("npr", values)
}

/// Pulls of the optimal arm per round (0 or 1).
pub fn optimal_pulls_per_round(trace: &Trace, arms: &ArmSet) -> Result<Vec<u8>> {
    check_k(trace, arms)?;
    let best = arms.best();
    Ok(rounds(trace)
        .map(|r| u8::from(r[best].action == Action::Pull))
        .collect())
}

fn optimal_pulls(trace: &Trace, arms: &ArmSet) -> Result<u64> {
    check_k(trace, arms)?;
    Ok(trace.pulls().filter(|&(arm, _)| arm == arms.best()).count() as u64)
}

/// Share of all pulls that went to the optimal arm (0 when nothing was pulled).
pub fn opt_star(trace: &Trace, arms: &ArmSet) -> Result<f64> {
    let total = trace.total_pulls();
    if total == 0 {
        return Ok(0.0);
    }
    Ok(optimal_pulls(trace, arms)? as f64 / total as f64)
}

/// Fraction of rounds in which the optimal arm was pulled.
pub fn opti_star(trace: &Trace, arms: &ArmSet) -> Result<f64> {
    let rounds = trace.rounds();
    if rounds == 0 {
        return Ok(0.0);
    }
    Ok(optimal_pulls(trace, arms)? as f64 / rounds as f64)
}

/// Misidentification rate of a set of BAI results.
pub fn delta_hat(results: &[BaiResult], arms: &ArmSet) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::InvalidParameter("delta_hat of no results".into()));
    }
    let wrong = results.iter().filter(|r| r.guess != arms.best()).count();
    Ok(wrong as f64 / results.len() as f64)
}

/// Relative change in rounds against a reference algorithm.
pub fn psi_rounds(theta_alg: f64, theta_ref: f64) -> f64 {
    (theta_alg - theta_ref) / theta_ref
}

/// Relative extra pulls over the `tau` pulls of a one-pull-per-round run.
pub fn psi_pulls(pulls: f64, tau: f64) -> f64 {
    (pulls - tau) / tau
}

/// Gap-derived instance constants.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundParams {
    pub k: usize,
    pub mu_star: f64,
    /// Gaps of the suboptimal arms, in slot order.
    pub gaps: Vec<f64>,
    /// Suboptimal means, matching `gaps`.
    pub means: Vec<f64>,
    pub h1: f64,
    pub h2: f64,
}

impl BoundParams {
    /// Fails when a suboptimal arm has zero gap.
    pub fn new(arms: &ArmSet) -> Result<Self> {
        let best = arms.best();
        let mu_star = arms.best_mean();
        let (mut gaps, mut means) = (Vec::new(), Vec::new());
        for (i, &m) in arms.means().iter().enumerate() {
            if i == best {
                continue;
            }
            let d = mu_star - m;
            if !(d > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "arm {i} ties the optimum; gap-based constants are undefined"
                )));
            }
            gaps.push(d);
            means.push(m);
        }
        let (h1, h2) = hardness(&gaps);
        Ok(Self {
            k: arms.k(),
            mu_star,
            gaps,
            means,
            h1,
            h2,
        })
    }
}

/// `(H1, H2)` from the suboptimal gaps; the optimal arm's gap is taken equal
/// to the smallest suboptimal one.
fn hardness(gaps: &[f64]) -> (f64, f64) {
    let mut sorted = gaps.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.insert(0, sorted[0]);
    let h1 = sorted.iter().map(|d| d.powi(-2)).sum();
    let h2 = sorted
        .iter()
        .enumerate()
        .map(|(i, d)| (i + 1) as f64 / (d * d))
        .fold(f64::NEG_INFINITY, f64::max);
    (h1, h2)
}

/// `H1` of an arm set.
pub fn h1(arms: &ArmSet) -> Result<f64> {
    Ok(BoundParams::new(arms)?.h1)
}

/// Regret bound of UCB1 run one pull per round over `tau` rounds.
///
/// The `-8K/gap^2` term makes this negative when `K > ln(tau)`.
pub fn ucb1_regret_bound(p: &BoundParams, tau: usize) -> f64 {
    let k = p.k as f64;
    let ln_tau = (tau as f64).ln();
    p.gaps
        .iter()
        .map(|&d| {
            let loss = p.mu_star + d;
            8.0 * loss / (d * d) * ln_tau + (1.0 + PI * PI / 3.0 - 8.0 * k / (d * d)) * loss
        })
        .sum()
}

/// Bernoulli Kullback-Leibler divergence `KL(p, q)`.
pub fn kl_bernoulli(p: f64, q: f64) -> f64 {
    let term = |a: f64, b: f64| if a == 0.0 { 0.0 } else { a * (a / b).ln() };
    term(p, q) + term(1.0 - p, 1.0 - q)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KlForm {
    Exact,
    /// Pinsker's inequality: `1/KL <= 1/(2 gap^2)`.
    Pinsker,
}

/// Leading `ln(tau)` term of the Bayes-UCB / Thompson regret bounds.
pub fn kl_regret_bound(p: &BoundParams, tau: usize, epsilon: f64, form: KlForm) -> f64 {
    let ln_tau = (tau as f64).ln();
    p.gaps
        .iter()
        .zip(&p.means)
        .map(|(&d, &m)| {
            let inv_kl = match form {
                KlForm::Exact => 1.0 / kl_bernoulli(m, p.mu_star),
                KlForm::Pinsker => 1.0 / (2.0 * d * d),
            };
            (1.0 + epsilon) * (p.mu_star + d) * inv_kl * ln_tau
        })
        .sum()
}

/// Misidentification bound of SR+ with `t` time steps.
pub fn sr_plus_confidence_bound(p: &BoundParams, t: usize) -> f64 {
    let k = p.k as f64;
    k * (k - 1.0) / 2.0 * (-(2.0 * t as f64 - 1.0) / (2.0 * p.h2)).exp()
}

/// Misidentification bound of SR run one pull per round with `t` time steps.
pub fn sr_confidence_bound(p: &BoundParams, t: usize) -> Result<f64> {
    let k = p.k as f64;
    let lb = log_bar(p.k)?;
    Ok(k * (k - 1.0) / 2.0 * (-(t as f64 - k * k) / (k * lb * p.h2)).exp())
}

/// Mean and 95% normal-approximation half-width; the half-width is `None`
/// with fewer than two samples.
pub fn aggregate_ci(samples: &[f64]) -> Result<(f64, Option<f64>)> {
    if samples.is_empty() {
        return Err(Error::InvalidParameter("aggregate of no samples".into()));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return Ok((mean, None));
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, Some(1.96 * var.sqrt() / n.sqrt())))
}
