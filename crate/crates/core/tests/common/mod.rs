#![allow(dead_code)]

use std::path::PathBuf;

use spnb_core::env::{ArmSet, FeedbackSource, FeedbackTable, RngStream, POLICY_STREAM};
use spnb_core::metrics::BoundParams;
use spnb_core::policy::{Policy, PolicyKind, PolicyParams, PolicyState};
use spnb_core::ExperimentConfig;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

pub fn config(scenario: &str, policies: &[&str], tau: usize, runs: usize, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        scenario: scenario.into(),
        policies: policies.iter().map(|s| s.to_string()).collect(),
        k: None,
        tau,
        runs,
        seed,
        data_path: None,
        gamma: None,
        min_gap: None,
        ucbe_c: None,
        bayes_c: None,
        h1: None,
    }
}

pub fn fresh_policy(kind: PolicyKind, arms: &ArmSet, tau: usize) -> PolicyState {
    let params = match kind {
        PolicyKind::Ucbe => {
            let h1 = BoundParams::new(arms).unwrap().h1;
            PolicyParams::ucbe(2.0, tau as u64, arms.k(), h1).unwrap()
        }
        _ => PolicyParams::new(tau as u64),
    };
    PolicyState::new(kind, arms.k(), params).unwrap()
}

/// Ordinary bandit loop: pull each arm once, then follow the policy for the
/// remaining pulls. Returns the `(arm, feedback)` sequence.
pub fn plain_bandit_loop(
    policy: &mut PolicyState,
    arms: &ArmSet,
    table: &mut FeedbackTable,
    seed: u64,
    pulls: u64,
) -> Vec<(usize, u8)> {
    let mut rng = RngStream::with_stream(seed, POLICY_STREAM);
    let mut seq = Vec::new();
    for n in 0..pulls {
        let arm = if (n as usize) < arms.k() {
            n as usize
        } else {
            policy.select(&mut rng).unwrap()
        };
        let x = table.draw(arms, arm).unwrap();
        policy.update(arm, x).unwrap();
        seq.push((arm, x));
    }
    seq
}
