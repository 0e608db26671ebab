//! Arms, the round clock, and seeded Bernoulli feedback.
//!
//! Time steps and arm indices are 0-based: at step `t` the offered arm is
//! `t mod K`, so every round offers arms `0..K` in slot order.
//!
//! # Random streams
//!
//! All randomness comes from [`RngStream`], a ChaCha8 generator (the
//! `rand_chacha` implementation) keyed by a 64-bit seed and a 64-bit stream
//! id. The key is expanded from the seed with `SeedableRng::seed_from_u64`;
//! uniforms in `[0, 1)` take the top 53 bits of one `u64` output. A run with
//! seed `s` uses stream [`POLICY_STREAM`] for the policy's own draws and
//! stream `FEEDBACK_STREAM_BASE + i` for the feedback of arm `i`, so the
//! `j`-th pull of an arm observes the same realisation whatever the order in
//! which arms are pulled.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};

/// Stream id used for randomised policy decisions (Thompson sampling).
pub const POLICY_STREAM: u64 = 0;
/// Stream id used when drawing synthetic instances.
pub const INSTANCE_STREAM: u64 = u64::MAX;
/// Feedback for arm `i` is drawn from stream `FEEDBACK_STREAM_BASE + i`.
pub const FEEDBACK_STREAM_BASE: u64 = 1;

/// Bernoulli arm means in slot order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArmSet {
    means: Vec<f64>,
    best: usize,
    tied_max: bool,
}

impl ArmSet {
    /// Builds an arm set with a unique maximum.
    pub fn new(means: Vec<f64>) -> Result<Self> {
        let set = Self::with_tie_break(means)?;
        if set.tied_max {
            return Err(Error::InvalidArmSet(format!(
                "maximum mean {} is attained by more than one arm",
                set.best_mean()
            )));
        }
        Ok(set)
    }

    /// Like [`ArmSet::new`] but tolerates ties for the maximum, resolving
    /// them toward the lowest index and flagging the set.
    pub fn with_tie_break(means: Vec<f64>) -> Result<Self> {
        if means.len() < 2 {
            return Err(Error::InvalidArmSet(format!(
                "need at least 2 arms, got {}",
                means.len()
            )));
        }
        if let Some((i, m)) = means
            .iter()
            .enumerate()
            .find(|(_, m)| !(0.0..=1.0).contains(*m))
        {
            return Err(Error::InvalidArmSet(format!(
                "mean of arm {i} is {m}, outside [0, 1]"
            )));
        }
        let mut best = 0;
        for (i, &m) in means.iter().enumerate().skip(1) {
            if m > means[best] {
                best = i;
            }
        }
        let tied_max = means
            .iter()
            .enumerate()
            .any(|(i, &m)| i != best && m == means[best]);
        Ok(Self {
            means,
            best,
            tied_max,
        })
    }

    pub fn k(&self) -> usize {
        self.means.len()
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn mean(&self, arm: usize) -> Result<f64> {
        self.means.get(arm).copied().ok_or(Error::InvalidArm {
            arm,
            k: self.k(),
        })
    }

    /// Index of the optimal arm.
    pub fn best(&self) -> usize {
        self.best
    }

    pub fn best_mean(&self) -> f64 {
        self.means[self.best]
    }

    /// True when the maximum was tied and broken toward the lowest index.
    pub fn tied_max(&self) -> bool {
        self.tied_max
    }

    /// Gap `mu* - mu_i` of every arm (zero for the optimal one).
    pub fn gaps(&self) -> Vec<f64> {
        let best = self.best_mean();
        self.means.iter().map(|m| best - m).collect()
    }
}

/// The SPNB clock: `K` slots per round, `tau` rounds, `T = tau * K` steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RoundClock {
    k: usize,
    rounds: usize,
}

impl RoundClock {
    pub fn new(k: usize, rounds: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidClock(format!("need K >= 2, got {k}")));
        }
        if rounds == 0 {
            return Err(Error::InvalidClock("need at least one round".into()));
        }
        Ok(Self { k, rounds })
    }

    /// Builds a clock from a horizon in time steps, which must be a multiple of `k`.
    pub fn from_horizon(k: usize, horizon: usize) -> Result<Self> {
        if k == 0 || horizon % k != 0 {
            return Err(Error::InvalidClock(format!(
                "horizon {horizon} is not a multiple of K = {k}"
            )));
        }
        Self::new(k, horizon / k)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn rounds(&self) -> usize {
        self.rounds
    }

    pub fn horizon(&self) -> usize {
        self.k * self.rounds
    }

    pub fn round(&self, t: usize) -> usize {
        t / self.k
    }

    pub fn slot(&self, t: usize) -> usize {
        t % self.k
    }
}

/// Arm offered at step `t` when there are `k` arms.
#[inline]
pub fn offered_arm(t: usize, k: usize) -> usize {
    t % k
}

/// An arm set together with the clock it is played on.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Environment {
    pub arms: ArmSet,
    pub clock: RoundClock,
}

impl Environment {
    pub fn new(arms: ArmSet, rounds: usize) -> Result<Self> {
        let clock = RoundClock::new(arms.k(), rounds)?;
        Ok(Self { arms, clock })
    }

    pub fn k(&self) -> usize {
        self.clock.k()
    }

    pub fn rounds(&self) -> usize {
        self.clock.rounds()
    }
}

/// Seeded ChaCha8 stream. See the module docs for the derivation rules.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self {
            seed,
            stream,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// One uniform draw in `[0, 1)`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Draws one Bernoulli feedback for `arm`, consuming exactly one uniform.
pub fn sample_feedback(arms: &ArmSet, arm: usize, rng: &mut RngStream) -> Result<u8> {
    let mean = arms.mean(arm)?;
    Ok(u8::from(rng.uniform() < mean))
}

/// Where pulled arms get their realisations from.
pub trait FeedbackSource {
    fn draw(&mut self, arms: &ArmSet, arm: usize) -> Result<u8>;
}

/// Feedback drawn at pull time from one stream per arm.
#[derive(Debug, Clone)]
pub struct LazyFeedback {
    streams: Vec<RngStream>,
}

impl LazyFeedback {
    pub fn new(seed: u64, k: usize) -> Self {
        let streams = (0..k as u64)
            .map(|i| RngStream::with_stream(seed, FEEDBACK_STREAM_BASE + i))
            .collect();
        Self { streams }
    }
}

impl FeedbackSource for LazyFeedback {
    fn draw(&mut self, arms: &ArmSet, arm: usize) -> Result<u8> {
        let k = self.streams.len();
        let rng = self
            .streams
            .get_mut(arm)
            .ok_or(Error::InvalidArm { arm, k })?;
        sample_feedback(arms, arm, rng)
    }
}

/// Pre-drawn realisations indexed by `(arm, per-arm pull count)`.
///
/// Two executions reading from clones of the same table observe identical
/// feedback for the `j`-th pull of every arm.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeedbackTable {
    rows: Vec<Vec<u8>>,
    cursor: Vec<usize>,
}

impl FeedbackTable {
    pub fn from_rows(rows: Vec<Vec<u8>>) -> Self {
        let cursor = vec![0; rows.len()];
        Self { rows, cursor }
    }

    /// Pre-draws `per_arm` realisations per arm from the same streams that
    /// [`LazyFeedback`] would use for `seed`.
    pub fn draw(arms: &ArmSet, seed: u64, per_arm: usize) -> Result<Self> {
        let mut lazy = LazyFeedback::new(seed, arms.k());
        let rows = (0..arms.k())
            .map(|i| (0..per_arm).map(|_| lazy.draw(arms, i)).collect())
            .collect::<Result<Vec<Vec<u8>>>>()?;
        Ok(Self::from_rows(rows))
    }

    pub fn rewind(&mut self) {
        self.cursor.iter_mut().for_each(|c| *c = 0);
    }
}

impl FeedbackSource for FeedbackTable {
    fn draw(&mut self, _arms: &ArmSet, arm: usize) -> Result<u8> {
        let k = self.rows.len();
        let row = self.rows.get(arm).ok_or(Error::InvalidArm { arm, k })?;
        let pos = self.cursor[arm];
        let x = *row.get(pos).ok_or(Error::FeedbackExhausted {
            arm,
            len: row.len(),
        })?;
        self.cursor[arm] += 1;
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offered_arm_examples() {
        assert_eq!(offered_arm(0, 10), 0);
        assert_eq!(offered_arm(10, 10), 0);
        assert_eq!(offered_arm(7, 4), 3);
    }

    #[test]
    fn offered_arm_is_periodic_and_covers_each_round() {
        for k in 2..12 {
            for t in 0..5 * k {
                assert_eq!(offered_arm(t + k, k), offered_arm(t, k));
            }
            for r in 0..4 {
                let mut seen: Vec<usize> = (0..k).map(|s| offered_arm(r * k + s, k)).collect();
                seen.sort_unstable();
                assert_eq!(seen, (0..k).collect::<Vec<_>>());
            }
        }
    }

    #[test]
    fn clock_rejects_non_multiple_horizon() {
        assert!(RoundClock::from_horizon(4, 10).is_err());
        let c = RoundClock::from_horizon(4, 12).unwrap();
        assert_eq!(c.rounds(), 3);
        assert_eq!(c.round(7), 1);
        assert_eq!(c.slot(7), 3);
        assert!(RoundClock::new(1, 10).is_err());
        assert!(RoundClock::new(3, 0).is_err());
    }

    #[test]
    fn arm_set_validation() {
        assert!(ArmSet::new(vec![0.5]).is_err());
        assert!(ArmSet::new(vec![0.5, 1.2]).is_err());
        assert!(ArmSet::new(vec![0.5, -0.1]).is_err());
        assert!(ArmSet::new(vec![0.5, 0.5, 0.1]).is_err());

        let tied = ArmSet::with_tie_break(vec![0.2, 0.7, 0.7]).unwrap();
        assert_eq!(tied.best(), 1);
        assert!(tied.tied_max());

        let arms = ArmSet::new(vec![0.2, 0.9, 0.4]).unwrap();
        assert_eq!(arms.best(), 1);
        assert_eq!(arms.gaps(), vec![0.9 - 0.2, 0.0, 0.9 - 0.4]);
    }

    #[test]
    fn degenerate_arms() {
        let arms = ArmSet::new(vec![1.0, 0.0]).unwrap();
        let mut rng = RngStream::new(7);
        for _ in 0..1000 {
            assert_eq!(sample_feedback(&arms, 0, &mut rng).unwrap(), 1);
            assert_eq!(sample_feedback(&arms, 1, &mut rng).unwrap(), 0);
        }
        assert!(matches!(
            sample_feedback(&arms, 2, &mut rng),
            Err(Error::InvalidArm { arm: 2, k: 2 })
        ));
    }

    #[test]
    fn fair_coin_empirical_mean() {
        // 99.9% binomial interval for n = 1e5, p = 0.5 is about +/- 0.0052.
        let arms = ArmSet::new(vec![0.5, 0.1]).unwrap();
        let mut rng = RngStream::new(2024);
        let n = 100_000;
        let ones: u32 = (0..n)
            .map(|_| u32::from(sample_feedback(&arms, 0, &mut rng).unwrap()))
            .sum();
        let mean = f64::from(ones) / f64::from(n);
        assert!((0.49..=0.51).contains(&mean), "{mean}");
    }

    #[test]
    fn empirical_mean_within_four_sigma() {
        let means = vec![0.05, 0.3, 0.5, 0.77, 0.95];
        let arms = ArmSet::new(means.clone()).unwrap();
        let n = 100_000;
        for (i, &mu) in means.iter().enumerate() {
            let mut rng = RngStream::with_stream(99, i as u64);
            let ones: u32 = (0..n)
                .map(|_| u32::from(sample_feedback(&arms, i, &mut rng).unwrap()))
                .sum();
            let mean = f64::from(ones) / f64::from(n);
            let bound = 4.0 * (mu * (1.0 - mu) / f64::from(n)).sqrt();
            assert!((mean - mu).abs() <= bound, "arm {i}: {mean} vs {mu}");
        }
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let mut a = RngStream::with_stream(5, 3);
        let mut b = RngStream::with_stream(5, 3);
        let mut c = RngStream::with_stream(5, 4);
        let xa: Vec<u64> = (0..64).map(|_| a.next_u64()).collect();
        let xb: Vec<u64> = (0..64).map(|_| b.next_u64()).collect();
        let xc: Vec<u64> = (0..64).map(|_| c.next_u64()).collect();
        assert_eq!(xa, xb);
        assert_ne!(xa, xc);
    }

    #[test]
    fn table_matches_lazy_draws() {
        let arms = ArmSet::new(vec![0.3, 0.6, 0.45]).unwrap();
        let mut table = FeedbackTable::draw(&arms, 11, 50).unwrap();
        let mut lazy = LazyFeedback::new(11, 3);
        // interleave arms in an arbitrary order; per-arm sequences must agree
        for arm in [2, 0, 0, 1, 2, 2, 1, 0, 1, 1] {
            assert_eq!(
                table.draw(&arms, arm).unwrap(),
                lazy.draw(&arms, arm).unwrap()
            );
        }
        let mut short = FeedbackTable::draw(&arms, 11, 1).unwrap();
        short.draw(&arms, 0).unwrap();
        assert!(matches!(
            short.draw(&arms, 0),
            Err(Error::FeedbackExhausted { arm: 0, len: 1 })
        ));
    }
}
