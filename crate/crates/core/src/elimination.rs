//! Round-aware elimination: every surviving arm is pulled once per round.
//!
//! UCBrev+ drops arms whose upper confidence bound falls below the best lower
//! bound at phase checkpoints; SR+ drops the empirically worst arm at each of
//! the `K - 1` successive-rejects checkpoints.

use crate::env::{Environment, FeedbackSource};
use crate::error::{Error, Result};
use crate::policy::recommend_best;
use crate::seq::{BaiOutcome, BaiResult, StopMode, Trace};

/// `1/2 + sum_{i=2..K} 1/i`.
pub fn log_bar(k: usize) -> Result<f64> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!("log_bar needs K >= 2, got {k}")));
    }
    Ok(0.5 + (2..=k).map(|i| 1.0 / i as f64).sum::<f64>())
}

/// SR+ elimination rounds `n_1 <= ... <= n_{K-1}` (1-based).
pub fn sr_checkpoints(k: usize, tau: usize) -> Result<Vec<usize>> {
    let lb = log_bar(k)?;
    if tau <= k {
        return Err(Error::InvalidParameter(format!(
            "SR+ needs more rounds than arms (tau = {tau}, K = {k})"
        )));
    }
    let budget = (tau - k) as f64;
    Ok((1..k)
        .map(|phase| (budget / (lb * (k + 1 - phase) as f64)).ceil() as usize)
        .collect())
}

/// Surviving arms and per-arm statistics of an elimination run.
#[derive(Debug, Clone, PartialEq)]
pub struct EliminationState {
    /// Surviving arms in slot order.
    pub surviving: Vec<usize>,
    pub phase: usize,
    /// Current UCBrev+ gap estimate; unused by SR+.
    pub delta_tilde: f64,
    /// SR+: the scheduled checkpoints. UCBrev+: the rounds at which phases ended.
    pub checkpoints: Vec<usize>,
    pub pulls: Vec<u64>,
    pub successes: Vec<u64>,
}

impl EliminationState {
    fn new(k: usize) -> Self {
        Self {
            surviving: (0..k).collect(),
            phase: 0,
            delta_tilde: 1.0,
            checkpoints: Vec::new(),
            pulls: vec![0; k],
            successes: vec![0; k],
        }
    }

    pub fn empirical_mean(&self, arm: usize) -> f64 {
        match self.pulls[arm] {
            0 => 0.0,
            n => self.successes[arm] as f64 / n as f64,
        }
    }

    fn pull_round<F: FeedbackSource>(
        &mut self,
        env: &Environment,
        feedback: &mut F,
        trace: &mut Trace,
    ) -> Result<()> {
        let mut next = self.surviving.iter().copied().peekable();
        for slot in 0..env.k() {
            if next.peek() == Some(&slot) {
                next.next();
                let x = feedback.draw(&env.arms, slot)?;
                self.pulls[slot] += 1;
                self.successes[slot] += u64::from(x);
                trace.record(slot, Some(x));
            } else {
                trace.record(slot, None);
            }
        }
        Ok(())
    }
}

/// An elimination run: its trace, final state and best-arm result.
#[derive(Debug, Clone, PartialEq)]
pub struct EliminationOutcome {
    pub trace: Trace,
    pub state: EliminationState,
    pub result: BaiResult,
}

impl From<EliminationOutcome> for BaiOutcome {
    fn from(o: EliminationOutcome) -> Self {
        BaiOutcome {
            result: o.result,
            trace: o.trace,
        }
    }
}

/// Successive Rejects pulling all surviving arms each round.
pub fn run_sr_plus<F: FeedbackSource>(
    env: &Environment,
    feedback: &mut F,
    seed: u64,
) -> Result<EliminationOutcome> {
    let (k, tau) = (env.k(), env.rounds());
    let checkpoints = sr_checkpoints(k, tau)?;
    let mut state = EliminationState::new(k);
    state.checkpoints = checkpoints.clone();
    let mut trace = Trace::new(k, seed, env.clock.horizon());

    for t in 1..=tau {
        state.pull_round(env, feedback, &mut trace)?;
        // equal checkpoints eliminate one arm each
        while state.phase < checkpoints.len() && t >= checkpoints[state.phase] {
            let worst = state
                .surviving
                .iter()
                .copied()
                .fold(None::<usize>, |acc, i| match acc {
                    Some(w) if state.empirical_mean(w) <= state.empirical_mean(i) => Some(w),
                    _ => Some(i),
                })
                .expect("surviving set is never empty");
            state.surviving.retain(|&i| i != worst);
            state.phase += 1;
        }
    }

    let result = BaiResult {
        guess: state.surviving[0],
        rounds_used: tau,
        pulls_used: trace.total_pulls(),
        mode: StopMode::SrPlus,
        truncated: false,
    };
    Ok(EliminationOutcome {
        trace,
        state,
        result,
    })
}

/// Round at which the UCBrev+ phase with gap estimate `delta` ends:
/// `ceil(2 ln(tau delta^2) / delta^2)`, or 1 when the logarithm is not positive.
pub fn ucbrev_checkpoint(tau: usize, delta: f64) -> f64 {
    let d2 = delta * delta;
    let l = (tau as f64 * d2).ln();
    if l > 0.0 {
        (2.0 * l / d2).ceil()
    } else {
        1.0
    }
}

/// Elimination radius at round `t` for gap estimate `delta`.
pub fn ucbrev_radius(t: usize, delta: f64) -> f64 {
    let l = (t as f64 * delta * delta).ln();
    (l.max(0.0) / (2.0 * t as f64)).sqrt()
}

/// Improved-UCB with phase checkpoints counted in rounds.
pub fn run_ucbrev_plus<F: FeedbackSource>(
    env: &Environment,
    feedback: &mut F,
    seed: u64,
) -> Result<EliminationOutcome> {
    let (k, tau) = (env.k(), env.rounds());
    let mut state = EliminationState::new(k);
    let mut trace = Trace::new(k, seed, env.clock.horizon());

    for t in 1..=tau {
        if state.surviving.len() > 1 && t as f64 >= ucbrev_checkpoint(tau, state.delta_tilde) {
            let rad = ucbrev_radius(t, state.delta_tilde);
            let best_lower = state
                .surviving
                .iter()
                .map(|&i| state.empirical_mean(i) - rad)
                .fold(f64::NEG_INFINITY, f64::max);
            let means: Vec<f64> = (0..k).map(|i| state.empirical_mean(i)).collect();
            state.surviving.retain(|&i| means[i] + rad >= best_lower);
            state.phase += 1;
            state.delta_tilde /= 2.0;
            state.checkpoints.push(t);
        }
        state.pull_round(env, feedback, &mut trace)?;
    }

    let guess = if state.surviving.len() == 1 {
        state.surviving[0]
    } else {
        let mut pulls = vec![0; k];
        let mut successes = vec![0; k];
        for &i in &state.surviving {
            pulls[i] = state.pulls[i];
            successes[i] = state.successes[i];
        }
        recommend_best(&successes, &pulls)
    };
    let result = BaiResult {
        guess,
        rounds_used: tau,
        pulls_used: trace.total_pulls(),
        mode: StopMode::Lr,
        truncated: false,
    };
    Ok(EliminationOutcome {
        trace,
        state,
        result,
    })
}
