//! Classical index policies behind one interface.
//!
//! A policy is a set of per-arm sufficient statistics plus a selection rule.
//! Every rule assumes each arm has been pulled at least once; the adapters in
//! [`crate::seq`] perform that initialisation sweep and count it in `n`.

use std::fmt;
use std::str::FromStr;

use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::beta::beta_quantile;
use crate::env::RngStream;
use crate::error::{Error, Result};

/// Anything the SPNB adapters can drive.
pub trait Policy {
    fn num_arms(&self) -> usize;

    /// Total pulls `n` observed so far.
    fn total_pulls(&self) -> u64;

    /// Next arm to pull.
    fn select(&self, rng: &mut RngStream) -> Result<usize>;

    fn update(&mut self, arm: usize, reward: u8) -> Result<()>;

    /// Final guess for the best arm.
    fn recommend(&self) -> usize;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    Ucb1,
    BayesUcb,
    Thompson,
    Ucbe,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [Self::Ucb1, Self::BayesUcb, Self::Thompson, Self::Ucbe];

    pub fn id(self) -> &'static str {
        match self {
            Self::Ucb1 => "ucb1",
            Self::BayesUcb => "bayes-ucb",
            Self::Thompson => "thompson",
            Self::Ucbe => "ucbe",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.id() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown policy {s:?}")))
    }
}

/// Tuning constants. `ucbe_a` is only read by UCB-E.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub ucbe_c: f64,
    pub ucbe_a: f64,
    pub bayes_quantile_c: f64,
    pub horizon_pulls: u64,
}

impl PolicyParams {
    pub fn new(horizon_pulls: u64) -> Self {
        Self {
            ucbe_c: 2.0,
            ucbe_a: 1.0,
            bayes_quantile_c: 0.0,
            horizon_pulls,
        }
    }

    /// UCB-E constants for a pull budget: `a = c (budget - K) / h1`.
    pub fn ucbe(c: f64, budget: u64, k: usize, h1: f64) -> Result<Self> {
        let a = ucbe_exploration(c, budget, k, h1)?;
        Ok(Self {
            ucbe_c: c,
            ucbe_a: a,
            ..Self::new(budget)
        })
    }
}

/// Exploration constant of UCB-E, `c (budget - K) / h1`.
pub fn ucbe_exploration(c: f64, budget: u64, k: usize, h1: f64) -> Result<f64> {
    if !(c > 0.0) || !(h1 > 0.0 && h1.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "UCB-E needs c > 0 and finite h1 > 0, got c = {c}, h1 = {h1}"
        )));
    }
    if budget <= k as u64 {
        return Err(Error::InvalidParameter(format!(
            "UCB-E budget {budget} must exceed K = {k}"
        )));
    }
    Ok(c * (budget - k as u64) as f64 / h1)
}

/// Per-arm counters plus the selection rule they feed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyState {
    kind: PolicyKind,
    pulls: Vec<u64>,
    successes: Vec<u64>,
    n: u64,
    params: PolicyParams,
}

impl PolicyState {
    pub fn new(kind: PolicyKind, k: usize, params: PolicyParams) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidParameter(format!("need K >= 2, got {k}")));
        }
        if kind == PolicyKind::Ucbe && !(params.ucbe_a > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "UCB-E needs a > 0, got {}",
                params.ucbe_a
            )));
        }
        Ok(Self {
            kind,
            pulls: vec![0; k],
            successes: vec![0; k],
            n: 0,
            params,
        })
    }

    /// Builds a state from explicit counters, e.g. to inspect a frozen posterior.
    pub fn from_counts(
        kind: PolicyKind,
        successes: Vec<u64>,
        pulls: Vec<u64>,
        params: PolicyParams,
    ) -> Result<Self> {
        if successes.len() != pulls.len() {
            return Err(Error::InvalidParameter(
                "successes and pulls differ in length".into(),
            ));
        }
        if successes.iter().zip(&pulls).any(|(s, t)| s > t) {
            return Err(Error::InvalidParameter("successes exceed pulls".into()));
        }
        let mut state = Self::new(kind, pulls.len(), params)?;
        state.n = pulls.iter().sum();
        state.pulls = pulls;
        state.successes = successes;
        Ok(state)
    }

    pub fn kind(&self) -> PolicyKind {
        self.kind
    }

    pub fn params(&self) -> &PolicyParams {
        &self.params
    }

    pub fn pulls(&self) -> &[u64] {
        &self.pulls
    }

    pub fn successes(&self) -> &[u64] {
        &self.successes
    }

    /// Posterior `(alpha, beta)` of arm `i` under the uniform prior.
    pub fn posterior(&self, i: usize) -> (f64, f64) {
        let s = self.successes[i] as f64;
        let t = self.pulls[i] as f64;
        (1.0 + s, 1.0 + t - s)
    }

    fn empirical_mean(&self, i: usize) -> f64 {
        self.successes[i] as f64 / self.pulls[i] as f64
    }

    /// Quantile level used by Bayes-UCB at the current pull count.
    pub fn bayes_level(&self) -> f64 {
        let log_h = (self.params.horizon_pulls.max(1) as f64).ln().max(1.0);
        1.0 - 1.0 / (self.n as f64 * log_h.powf(self.params.bayes_quantile_c))
    }

    fn ensure_initialised(&self) -> Result<()> {
        let pulled = self.pulls.iter().filter(|&&t| t > 0).count();
        if pulled < self.pulls.len() {
            return Err(Error::NotInitialized {
                pulled,
                k: self.pulls.len(),
            });
        }
        Ok(())
    }

    fn check_arm(&self, arm: usize) -> Result<()> {
        if arm >= self.pulls.len() {
            return Err(Error::InvalidArm {
                arm,
                k: self.pulls.len(),
            });
        }
        Ok(())
    }

    /// Index of every arm under a deterministic rule; `None` for Thompson.
    pub fn indices(&self) -> Result<Option<Vec<f64>>> {
        self.ensure_initialised()?;
        let k = self.pulls.len();
        let n = self.n as f64;
        let idx = match self.kind {
            PolicyKind::Ucb1 => (0..k)
                .map(|i| self.empirical_mean(i) + (2.0 * n.ln() / self.pulls[i] as f64).sqrt())
                .collect(),
            PolicyKind::Ucbe => (0..k)
                .map(|i| self.empirical_mean(i) + (self.params.ucbe_a / self.pulls[i] as f64).sqrt())
                .collect(),
            PolicyKind::BayesUcb => {
                let level = self.bayes_level();
                if !(level > 0.0 && level < 1.0) {
                    return Err(Error::InvalidParameter(format!(
                        "Bayes-UCB level {level} outside (0, 1) at n = {}",
                        self.n
                    )));
                }
                (0..k)
                    .map(|i| {
                        let (a, b) = self.posterior(i);
                        beta_quantile(a, b, level)
                    })
                    .collect::<Result<Vec<_>>>()?
            }
            PolicyKind::Thompson => return Ok(None),
        };
        Ok(Some(idx))
    }
}

/// First index attaining the maximum.
pub(crate) fn argmax(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (i, v) in values.into_iter().enumerate() {
        if v > best_val {
            best = i;
            best_val = v;
        }
    }
    best
}

impl Policy for PolicyState {
    fn num_arms(&self) -> usize {
        self.pulls.len()
    }

    fn total_pulls(&self) -> u64 {
        self.n
    }

    fn select(&self, rng: &mut RngStream) -> Result<usize> {
        match self.indices()? {
            Some(idx) => Ok(argmax(idx)),
            None => {
                let mut samples = Vec::with_capacity(self.pulls.len());
                for i in 0..self.pulls.len() {
                    let (a, b) = self.posterior(i);
                    let dist = Beta::new(a, b)
                        .map_err(|e| Error::InvalidParameter(format!("posterior of arm {i}: {e}")))?;
                    samples.push(dist.sample(rng));
                }
                Ok(argmax(samples))
            }
        }
    }

    fn update(&mut self, arm: usize, reward: u8) -> Result<()> {
        self.check_arm(arm)?;
        if reward > 1 {
            return Err(Error::InvalidParameter(format!(
                "feedback must be 0 or 1, got {reward}"
            )));
        }
        self.pulls[arm] += 1;
        self.successes[arm] += u64::from(reward);
        self.n += 1;
        Ok(())
    }

    fn recommend(&self) -> usize {
        recommend_best(&self.successes, &self.pulls)
    }
}

/// Highest empirical mean; ties go to more pulls, then to the lower index.
pub fn recommend_best(successes: &[u64], pulls: &[u64]) -> usize {
    let mean = |i: usize| {
        if pulls[i] == 0 {
            f64::NEG_INFINITY
        } else {
            successes[i] as f64 / pulls[i] as f64
        }
    };
    let mut best = 0;
    for i in 1..pulls.len() {
        let (m, mb) = (mean(i), mean(best));
        if m > mb || (m == mb && pulls[i] > pulls[best]) {
            best = i;
        }
    }
    best
}
