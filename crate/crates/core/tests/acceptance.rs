//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.
//!
//! Run alone with `cargo test -p spnb-core --test acceptance`.

mod common;

use std::fs;
use std::process::ExitCode;
use std::time::Instant;

use spnb_core::beta::{beta_cdf, beta_quantile};
use spnb_core::elimination::{log_bar, run_sr_plus, sr_checkpoints};
use spnb_core::env::{ArmSet, Environment, FeedbackTable, LazyFeedback, RngStream, POLICY_STREAM};
use spnb_core::experiments::{audibert_budget, audibert_experiment, gen_synthetic_rm};
use spnb_core::metrics::{
    aggregate_ci, psi_pulls, psi_rounds, sr_confidence_bound, sr_plus_confidence_bound,
    ucb1_regret_bound, BoundParams,
};
use spnb_core::policy::PolicyKind;
use spnb_core::runner::{run_single, write_results_csv, Algorithm, RunSetup};
use spnb_core::seq::run_seq;
use spnb_core::{run_batch, run_batch_with, BatchOutput, Execution};

use common::{config, fixture, fresh_policy, plain_bandit_loop};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn ci(out: &BatchOutput, alg: &str, f: impl Fn(&spnb_core::RunResult) -> f64) -> (f64, f64) {
    let v: Vec<f64> = out.of(alg).map(f).collect();
    let (m, h) = aggregate_ci(&v).unwrap();
    (m, h.unwrap_or(0.0))
}

fn pull_sequence_equivalence() -> Outcome {
    let start = Instant::now();
    let tau = 300;
    let (mut cases, mut mismatches) = (0, 0);
    for kind in PolicyKind::ALL {
        for k in [2, 10] {
            for seed in 0..20u64 {
                let arms = gen_synthetic_rm(k, 0.05, &mut RngStream::with_stream(seed, 99)).unwrap();
                let env = Environment::new(arms.clone(), tau).unwrap();
                let table = FeedbackTable::draw(&arms, seed, tau).unwrap();
                let mut policy = fresh_policy(kind, &arms, tau);
                let mut rng = RngStream::with_stream(seed, POLICY_STREAM);
                let trace = run_seq(&mut policy, &env, &mut table.clone(), &mut rng).unwrap();
                let got: Vec<_> = trace.pulls().collect();
                let mut plain = fresh_policy(kind, &arms, tau);
                let want = plain_bandit_loop(&mut plain, &arms, &mut table.clone(), seed, got.len() as u64);
                cases += 1;
                mismatches += usize::from(got != want);
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        mismatches == 0 && secs < 60.0,
        format!("{mismatches} mismatches in {cases} runs, {secs:.1}s"),
    )
}

const RM_ALGS: [&str; 5] = ["thompson", "seq-thompson", "bayes-ucb", "seq-bayes-ucb", "ucbrev-plus"];

fn synthetic_rm() -> BatchOutput {
    let mut cfg = config("synthetic-rm-25", &RM_ALGS, 1000, 100, 20);
    cfg.min_gap = Some(0.1);
    let out = run_batch(&cfg).unwrap();
    assert!(out.failures.is_empty(), "{:?}", out.failures);
    out
}

fn rm_regret(out: &BatchOutput) -> Outcome {
    let r = |a| ci(out, a, |r| r.final_regret());
    let (ts, sts, bu, sbu, rev) = (r("thompson"), r("seq-thompson"), r("bayes-ucb"), r("seq-bayes-ucb"), r("ucbrev-plus"));
    let separated = |seq: (f64, f64), base: (f64, f64)| seq.0 + seq.1 < base.0 - base.1;
    let pass = separated(sts, ts) && separated(sbu, bu) && rev.0 > sts.0 && rev.0 > sbu.0;
    outcome(
        pass,
        format!(
            "R(1000): TS {:.1}±{:.1}, Seq(TS) {:.1}±{:.1}, bUCB {:.1}±{:.1}, Seq(bUCB) {:.1}±{:.1}, UCBrev+ {:.1}±{:.1}",
            ts.0, ts.1, sts.0, sts.1, bu.0, bu.1, sbu.0, sbu.1, rev.0, rev.1
        ),
    )
}

fn npr_shape(out: &BatchOutput) -> Outcome {
    let k = 25;
    let mut pass = true;
    let mut parts = Vec::new();
    for alg in ["seq-thompson", "seq-bayes-ucb"] {
        let first = out.of(alg).all(|r| r.npr[0] > 1);
        let last = mean(&out.of(alg).map(|r| f64::from(*r.npr.last().unwrap())).collect::<Vec<_>>());
        pass &= first && last <= 1.1;
        parts.push(format!("{alg} first>1 {first}, last {last:.3}"));
    }
    let rev_ok = out
        .of("ucbrev-plus")
        .all(|r| r.npr[0] == k && r.npr.windows(2).all(|w| w[1] <= w[0]));
    pass &= rev_ok;
    parts.push(format!("ucbrev-plus starts at K and nonincreasing {rev_ok}"));
    outcome(pass, parts.join("; "))
}

fn opti_ordering(out: &BatchOutput) -> Outcome {
    let o = |a| ci(out, a, |r| r.opti_star()).0;
    let (ts, sts, bu, sbu, rev) = (o("thompson"), o("seq-thompson"), o("bayes-ucb"), o("seq-bayes-ucb"), o("ucbrev-plus"));
    outcome(
        sts > ts && sbu > bu && rev >= 0.95,
        format!("Opti*: TS {ts:.3} < Seq(TS) {sts:.3}; bUCB {bu:.3} < Seq(bUCB) {sbu:.3}; UCBrev+ {rev:.3}"),
    )
}

fn bai_suite() -> Outcome {
    let runs = 1000;
    let (mut lp_psi, mut lr_psi) = (Vec::new(), Vec::new());
    let (mut a_ok, mut b_ok, mut c_ok) = (true, true, true);
    let mut rows = Vec::new();
    for id in 1..=7u8 {
        let tau = audibert_budget(id).unwrap();
        let cfg = config(&format!("audibert-{id}"), &["ucbe", "seq-ucbe-lp", "seq-ucbe-lr"], tau, runs, 7);
        let out = run_batch(&cfg).unwrap();
        assert!(out.failures.is_empty(), "{:?}", out.failures);
        let t = tau as f64;
        let lp = ci(&out, "seq-ucbe-lp", |r| psi_rounds(r.bai.rounds_used as f64, t)).0;
        let lr = ci(&out, "seq-ucbe-lr", |r| psi_pulls(r.bai.pulls_used as f64, t)).0;
        let d_ucbe = ci(&out, "ucbe", |r| f64::from(u8::from(!r.correct))).0;
        let d_lr = ci(&out, "seq-ucbe-lr", |r| f64::from(u8::from(!r.correct))).0;
        a_ok &= (-0.25..=0.0).contains(&lp);
        b_ok &= (0.0..=0.25).contains(&lr);
        c_ok &= d_lr <= d_ucbe;
        lp_psi.push(lp);
        lr_psi.push(lr);
        rows.push(format!("e{id}: Ψr {lp:+.3} Ψp {lr:+.3} δ {d_lr:.3}/{d_ucbe:.3}"));
    }
    let range = |v: &[f64]| {
        (
            v.iter().cloned().fold(f64::INFINITY, f64::min),
            v.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        )
    };
    let (lp_lo, lp_hi) = range(&lp_psi);
    let (lr_lo, lr_hi) = range(&lr_psi);
    a_ok &= lp_lo <= -0.03 && lp_hi >= -0.18;
    b_ok &= lr_lo <= 0.19 && lr_hi >= 0.03;
    outcome(
        a_ok && b_ok && c_ok,
        format!(
            "(a) {a_ok} LP Ψ_rounds [{lp_lo:+.3}, {lp_hi:+.3}]; (b) {b_ok} LR Ψ_pulls [{lr_lo:+.3}, {lr_hi:+.3}]; (c) {c_ok} δ(LR) ≤ δ(UCBE); {}",
            rows.join(", ")
        ),
    )
}

fn sr_plus_errors(arms: &ArmSet, tau: usize, runs: u64) -> f64 {
    let env = Environment::new(arms.clone(), tau).unwrap();
    let wrong = (0..runs)
        .filter(|&s| run_sr_plus(&env, &mut LazyFeedback::new(s, arms.k()), s).unwrap().result.guess != arms.best())
        .count();
    wrong as f64 / runs as f64
}

fn bound_conformance() -> (Outcome, String) {
    let mut pass = true;
    let mut parts = Vec::new();
    let family = [
        vec![0.9, 0.5],
        vec![0.8, 0.5, 0.2],
        vec![0.35, 0.95, 0.65],
        vec![0.95, 0.65, 0.35, 0.05],
    ];
    let mut checked = 0;
    for means in &family {
        let arms = ArmSet::new(means.clone()).unwrap();
        let p = BoundParams::new(&arms).unwrap();
        for tau in [100, 200, 500] {
            let bound = sr_plus_confidence_bound(&p, tau * arms.k());
            if bound >= 0.5 {
                continue;
            }
            checked += 1;
            let err = sr_plus_errors(&arms, tau, 100);
            if err > bound {
                pass = false;
                parts.push(format!("SR+ K={} tau={tau}: {err} > {bound:.2e}", arms.k()));
            }
        }
    }
    parts.push(format!("SR+ within bound on {checked} instance/horizon pairs with gaps >= 0.3"));

    for means in [vec![0.9, 0.5], vec![0.7, 0.2], vec![0.9, 0.6, 0.4]] {
        let arms = ArmSet::new(means).unwrap();
        let p = BoundParams::new(&arms).unwrap();
        let bound = ucb1_regret_bound(&p, 1000);
        let env = Environment::new(arms.clone(), 1000).unwrap();
        let setup = RunSetup { ucbe_c: 2.0, bayes_c: 0.0, h1: None };
        let regrets: Vec<f64> = (0..100)
            .map(|s| {
                let (trace, _) = run_single(Algorithm::Naive(PolicyKind::Ucb1), &env, &setup, s).unwrap();
                spnb_core::metrics::pseudo_regret(&trace, &arms).unwrap().last()
            })
            .collect();
        let m = mean(&regrets);
        pass &= m < bound;
        parts.push(format!("UCB1 K={} regret {m:.1} < {bound:.1}", arms.k()));
    }

    // gaps of 0.1 lie outside the checked family; reported only
    let mut info = Vec::new();
    for id in [1u8, 4] {
        let arms = audibert_experiment(id).unwrap();
        let tau = audibert_budget(id).unwrap();
        let p = BoundParams::new(&arms).unwrap();
        let bound = sr_plus_confidence_bound(&p, tau * arms.k());
        let err = sr_plus_errors(&arms, tau, 100);
        let rel = if err > bound { "exceeds" } else { "within" };
        info.push(format!("audibert-{id}: SR+ error {err:.2} {rel} bound {bound:.2e}"));
    }
    (outcome(pass, parts.join("; ")), info.join("; "))
}

fn determinism() -> Outcome {
    let algs = ["ucb1", "seq-thompson", "seq-bayes-ucb", "seq-ucbe-lp", "ucbrev-plus", "sr-plus"];
    let cfg = config("synthetic-rm-10", &algs, 200, 12, 99);
    let csv = |exec| {
        let out = run_batch_with(&cfg, exec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_results_csv(&out, dir.path())
            .unwrap()
            .iter()
            .map(|p| fs::read(p).unwrap())
            .collect::<Vec<_>>()
    };
    let reference = csv(Execution::Sequential);
    #[cfg_attr(not(feature = "parallel"), allow(unused_mut))]
    let mut variants = vec![("sequential again", csv(Execution::Sequential))];
    #[cfg(feature = "parallel")]
    for (name, threads) in [("1 thread", Some(1)), ("2 threads", Some(2)), ("8 threads", Some(8)), ("global pool", None)] {
        variants.push((name, csv(Execution::Parallel { threads })));
    }
    let differing: Vec<&str> = variants
        .iter()
        .filter(|(_, v)| *v != reference)
        .map(|(n, _)| *n)
        .collect();
    outcome(
        differing.is_empty(),
        format!("{} schedules compared, differing: {differing:?}", variants.len()),
    )
}

fn formula_oracles() -> Outcome {
    let close = |a: f64, b: f64, tol: f64| (a - b).abs() <= tol;
    let mut failures = Vec::new();
    let mut check = |name: &str, ok: bool| {
        if !ok {
            failures.push(name.to_owned());
        }
    };
    check("log_bar(2)", close(log_bar(2).unwrap(), 1.0, 1e-6));
    check("log_bar(4)", close(log_bar(4).unwrap(), 1.583_333_333_333_333_3, 1e-6));
    check("log_bar(20)", close(log_bar(20).unwrap(), 3.097_739_657_143_682, 1e-6));
    check("sr_checkpoints(4,100)", sr_checkpoints(4, 100).unwrap() == [16, 21, 31]);
    check("sr_checkpoints(2,10)", sr_checkpoints(2, 10).unwrap() == [4]);
    check(
        "sr_checkpoints(20,2000)",
        sr_checkpoints(20, 2000).unwrap()
            == [32, 34, 36, 38, 40, 43, 46, 50, 54, 59, 64, 72, 80, 92, 107, 128, 160, 214, 320],
    );
    let p = BoundParams::new(&ArmSet::new(vec![0.9, 0.5]).unwrap()).unwrap();
    check("H2", close(p.h2, 12.5, 1e-9));
    check("ucb1 bound", close(ucb1_regret_bound(&p, 1000), 324.580_921_707_644_3, 1e-6));
    let p3 = BoundParams::new(&ArmSet::new(vec![0.9, 0.6, 0.4]).unwrap()).unwrap();
    check("ucb1 bound K=3", close(ucb1_regret_bound(&p3, 1000), 603.048_323_404_105_1, 1e-6));
    check("sr+ bound", close(sr_plus_confidence_bound(&p, 100), 3.491_531_174_598_264e-4, 1e-6));
    check("sr bound", close(sr_confidence_bound(&p, 100).unwrap(), 0.021_493_601_345_089_92, 1e-6));
    let quantiles = [
        (1.0, 1.0, 0.3, 0.3),
        (2.0, 1.0, 0.25, 0.5),
        (5.0, 5.0, 0.5, 0.5),
        (2.0, 3.0, 0.9, 0.679_539_416_278_181_7),
        (30.0, 70.0, 0.99, 0.411_251_780_705_162_7),
        (0.5, 0.5, 0.2, 0.095_491_502_812_526_29),
    ];
    for (a, b, p, want) in quantiles {
        let q = beta_quantile(a, b, p).unwrap();
        check(
            &format!("beta_quantile({a},{b},{p})"),
            close(q, want, 1e-9) && (beta_cdf(a, b, q) - p).abs() <= 1e-9,
        );
    }
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            "log_bar, sr_checkpoints, bounds and beta_quantile match reference values".to_owned()
        } else {
            format!("mismatches: {failures:?}")
        },
    )
}

/// Seq-to-classical regret ratios on the CTR-like slot fixture.
fn ctr_regret_ratio() -> String {
    let mut cfg = config(
        "yahoo-slots",
        &["thompson", "seq-thompson", "bayes-ucb", "seq-bayes-ucb"],
        730,
        100,
        3,
    );
    cfg.data_path = Some(fixture("ctr_slots.csv"));
    let out = run_batch(&cfg).unwrap();
    let r = |a| ci(&out, a, |r| r.final_regret());
    let fmt = |(m, h): (f64, f64)| format!("{m:.1}±{h:.1}");
    format!(
        "Seq(TS)/TS {:.3} ({} vs {}), Seq(bUCB)/bUCB {:.3} ({} vs {})",
        r("seq-thompson").0 / r("thompson").0,
        fmt(r("seq-thompson")),
        fmt(r("thompson")),
        r("seq-bayes-ucb").0 / r("bayes-ucb").0,
        fmt(r("seq-bayes-ucb")),
        fmt(r("bayes-ucb")),
    )
}

fn main() -> ExitCode {
    let mut all_pass = true;
    let mut report = |name: &str, o: Outcome| {
        all_pass &= o.pass;
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    };

    report("pull-sequence equivalence", pull_sequence_equivalence());
    let rm = synthetic_rm();
    report("synthetic RM regret ordering", rm_regret(&rm));
    report("NPR shape", npr_shape(&rm));
    report("Opti* ordering", opti_ordering(&rm));
    report("BAI suite", bai_suite());
    let (bounds, info) = bound_conformance();
    report("bound conformance", bounds);
    report("determinism", determinism());
    report("formula oracles", formula_oracles());
    println!("INFO SR+ bound outside the checked family: {info}");
    println!("INFO CTR fixture regret ratio at tau = 730: {}", ctr_regret_ratio());

    if all_pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
