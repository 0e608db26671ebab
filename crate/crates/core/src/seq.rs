//! Running a policy against the SPNB clock.
//!
//! * [`run_naive`]: one decision per round, pulled when its slot comes up.
//! * [`run_seq`]: the Seq meta-algorithm. The policy's current recommendation
//!   is pulled whenever it is the offered arm, and refreshed only after a pull.
//! * [`run_seq_ucbe_lp`] / [`run_seq_ucbe_lr`]: Seq(UCB-E) stopped at an equal
//!   pull budget or an equal number of rounds.
//!
//! Both adapters start with an initialisation sweep that pulls every arm once
//! and counts those pulls in `n`. For Seq the sweep fills the first round; for
//! the naive adapter it takes the first `K` rounds.

use serde::{Deserialize, Serialize};

use crate::env::{offered_arm, Environment, FeedbackSource, RngStream};
use crate::error::{Error, Result};
use crate::policy::Policy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Pull,
    Skip,
}

/// One time step of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Step {
    pub t: usize,
    pub round: usize,
    pub offered: usize,
    pub action: Action,
    pub feedback: Option<u8>,
    /// Pulls performed up to and including this step.
    pub n_after: u64,
}

/// Full decision log of one run, one [`Step`] per time step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Trace {
    pub k: usize,
    pub steps: Vec<Step>,
    pub seed: u64,
    pub config_fingerprint: Option<String>,
}

impl Trace {
    pub fn new(k: usize, seed: u64, capacity: usize) -> Self {
        Self {
            k,
            steps: Vec::with_capacity(capacity),
            seed,
            config_fingerprint: None,
        }
    }

    pub fn rounds(&self) -> usize {
        self.steps.len() / self.k
    }

    pub fn total_pulls(&self) -> u64 {
        self.steps.last().map_or(0, |s| s.n_after)
    }

    /// `(arm, feedback)` of every pull, in time order.
    pub fn pulls(&self) -> impl Iterator<Item = (usize, u8)> + '_ {
        self.steps
            .iter()
            .filter_map(|s| s.feedback.map(|x| (s.offered, x)))
    }

    pub(crate) fn record(&mut self, offered: usize, feedback: Option<u8>) {
        let t = self.steps.len();
        let n_after = self.total_pulls() + u64::from(feedback.is_some());
        self.steps.push(Step {
            t,
            round: t / self.k,
            offered,
            action: if feedback.is_some() {
                Action::Pull
            } else {
                Action::Skip
            },
            feedback,
            n_after,
        });
    }

    /// Fills the remaining steps of the horizon with skips.
    fn pad_to(&mut self, horizon: usize) {
        while self.steps.len() < horizon {
            let t = self.steps.len();
            self.record(offered_arm(t, self.k), None);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopMode {
    Naive,
    Lp,
    Lr,
    SrPlus,
}

/// Outcome of a best-arm-identification run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BaiResult {
    pub guess: usize,
    pub rounds_used: usize,
    pub pulls_used: u64,
    pub mode: StopMode,
    /// LP only: the horizon ended before the pull budget was spent.
    pub truncated: bool,
}

/// A BAI result with the trace that produced it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BaiOutcome {
    pub result: BaiResult,
    pub trace: Trace,
}

fn check_fresh<P: Policy>(policy: &P, env: &Environment) -> Result<()> {
    if policy.num_arms() != env.k() {
        return Err(Error::InvalidParameter(format!(
            "policy has {} arms, environment has {}",
            policy.num_arms(),
            env.k()
        )));
    }
    if policy.total_pulls() != 0 {
        return Err(Error::InvalidParameter(
            "adapters expect a fresh policy with no pulls".into(),
        ));
    }
    Ok(())
}

/// One pull per round: the policy's choice is pulled at its slot.
pub fn run_naive<P, F>(
    policy: &mut P,
    env: &Environment,
    feedback: &mut F,
    rng: &mut RngStream,
) -> Result<Trace>
where
    P: Policy,
    F: FeedbackSource,
{
    check_fresh(policy, env)?;
    let k = env.k();
    if env.rounds() < k {
        return Err(Error::InvalidParameter(format!(
            "naive adapter needs at least K = {k} rounds to initialise, got {}",
            env.rounds()
        )));
    }
    let mut trace = Trace::new(k, rng.seed(), env.clock.horizon());
    for round in 0..env.rounds() {
        let chosen = if round < k { round } else { policy.select(rng)? };
        for slot in 0..k {
            if slot == chosen {
                let x = feedback.draw(&env.arms, slot)?;
                policy.update(slot, x)?;
                trace.record(slot, Some(x));
            } else {
                trace.record(slot, None);
            }
        }
    }
    Ok(trace)
}

/// Seq core loop. Stops pulling once `budget` pulls are spent; returns the
/// trace padded to the full horizon.
fn seq_loop<P, F>(
    policy: &mut P,
    env: &Environment,
    feedback: &mut F,
    rng: &mut RngStream,
    budget: Option<u64>,
) -> Result<Trace>
where
    P: Policy,
    F: FeedbackSource,
{
    check_fresh(policy, env)?;
    let k = env.k();
    let horizon = env.clock.horizon();
    let mut trace = Trace::new(k, rng.seed(), horizon);
    let mut recommendation: Option<usize> = None;

    for t in 0..horizon {
        if budget.is_some_and(|b| policy.total_pulls() >= b) {
            break;
        }
        let offered = offered_arm(t, k);
        let pull = t < k || recommendation == Some(offered);
        if !pull {
            trace.record(offered, None);
            continue;
        }
        let x = feedback.draw(&env.arms, offered)?;
        policy.update(offered, x)?;
        trace.record(offered, Some(x));
        if t + 1 >= k {
            recommendation = Some(policy.select(rng)?);
        }
    }
    trace.pad_to(horizon);
    Ok(trace)
}

/// The Seq meta-algorithm over the whole horizon.
pub fn run_seq<P, F>(
    policy: &mut P,
    env: &Environment,
    feedback: &mut F,
    rng: &mut RngStream,
) -> Result<Trace>
where
    P: Policy,
    F: FeedbackSource,
{
    seq_loop(policy, env, feedback, rng, None)
}

/// Round index of the last pull plus one (0 when nothing was pulled).
fn rounds_until_last_pull(trace: &Trace) -> usize {
    trace
        .steps
        .iter()
        .rev()
        .find(|s| s.action == Action::Pull)
        .map_or(0, |s| s.round + 1)
}

/// Seq(UCB-E) halted as soon as `budget` pulls are spent (LP stopping).
pub fn run_seq_ucbe_lp<P, F>(
    policy: &mut P,
    env: &Environment,
    budget: u64,
    feedback: &mut F,
    rng: &mut RngStream,
) -> Result<BaiOutcome>
where
    P: Policy,
    F: FeedbackSource,
{
    if budget < env.k() as u64 {
        return Err(Error::InvalidParameter(format!(
            "pull budget {budget} is below K = {}",
            env.k()
        )));
    }
    let trace = seq_loop(policy, env, feedback, rng, Some(budget))?;
    let pulls_used = trace.total_pulls();
    let result = BaiResult {
        guess: policy.recommend(),
        rounds_used: rounds_until_last_pull(&trace),
        pulls_used,
        mode: StopMode::Lp,
        truncated: pulls_used < budget,
    };
    Ok(BaiOutcome { result, trace })
}

/// Seq(UCB-E) run for exactly the environment's rounds (LR stopping).
pub fn run_seq_ucbe_lr<P, F>(
    policy: &mut P,
    env: &Environment,
    feedback: &mut F,
    rng: &mut RngStream,
) -> Result<BaiOutcome>
where
    P: Policy,
    F: FeedbackSource,
{
    let trace = seq_loop(policy, env, feedback, rng, None)?;
    let result = BaiResult {
        guess: policy.recommend(),
        rounds_used: env.rounds(),
        pulls_used: trace.total_pulls(),
        mode: StopMode::Lr,
        truncated: false,
    };
    Ok(BaiOutcome { result, trace })
}

/// The naive adapter read as a BAI procedure: guess after all rounds.
pub fn run_naive_bai<P, F>(
    policy: &mut P,
    env: &Environment,
    feedback: &mut F,
    rng: &mut RngStream,
) -> Result<BaiOutcome>
where
    P: Policy,
    F: FeedbackSource,
{
    let trace = run_naive(policy, env, feedback, rng)?;
    let result = BaiResult {
        guess: policy.recommend(),
        rounds_used: env.rounds(),
        pulls_used: trace.total_pulls(),
        mode: StopMode::Naive,
        truncated: false,
    };
    Ok(BaiOutcome { result, trace })
}
