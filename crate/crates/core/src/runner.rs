//! Batch execution of experiments and CSV persistence.
//!
//! Every run owns its environment copy, policy state and random streams, so
//! runs can execute in any order or in parallel; results are sorted by
//! `(scenario, algorithm, run)` before they are returned.

use std::fmt;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::elimination::{run_sr_plus, run_ucbrev_plus};
use crate::env::{Environment, LazyFeedback, RngStream, POLICY_STREAM};
use crate::error::{Error, Result};
use crate::experiments::{ExperimentConfig, Scenario};
use crate::metrics::{self, BoundParams};
use crate::policy::{PolicyKind, PolicyParams, PolicyState};
use crate::seq::{self, BaiResult, Trace};

/// Everything the runner can execute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    /// One pull per round.
    Naive(PolicyKind),
    Seq(PolicyKind),
    SeqUcbeLp,
    SeqUcbeLr,
    UcbrevPlus,
    SrPlus,
}

impl Algorithm {
    pub fn all() -> Vec<Algorithm> {
        let mut v: Vec<_> = PolicyKind::ALL.into_iter().map(Algorithm::Naive).collect();
        v.extend(PolicyKind::ALL.into_iter().map(Algorithm::Seq));
        v.extend([
            Algorithm::SeqUcbeLp,
            Algorithm::SeqUcbeLr,
            Algorithm::UcbrevPlus,
            Algorithm::SrPlus,
        ]);
        v
    }

    pub fn id(&self) -> String {
        match self {
            Algorithm::Naive(p) => p.id().to_owned(),
            Algorithm::Seq(p) => format!("seq-{}", p.id()),
            Algorithm::SeqUcbeLp => "seq-ucbe-lp".into(),
            Algorithm::SeqUcbeLr => "seq-ucbe-lr".into(),
            Algorithm::UcbrevPlus => "ucbrev-plus".into(),
            Algorithm::SrPlus => "sr-plus".into(),
        }
    }

    fn uses_ucbe(&self) -> bool {
        matches!(
            self,
            Algorithm::Naive(PolicyKind::Ucbe)
                | Algorithm::Seq(PolicyKind::Ucbe)
                | Algorithm::SeqUcbeLp
                | Algorithm::SeqUcbeLr
        )
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::all()
            .into_iter()
            .find(|a| a.id() == s)
            .ok_or_else(|| Error::Config(format!("unknown algorithm {s:?}")))
    }
}

/// Policy constants shared by every run of a batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSetup {
    pub ucbe_c: f64,
    pub bayes_c: f64,
    /// Required by UCB-E variants.
    pub h1: Option<f64>,
}

impl RunSetup {
    fn params(&self, alg: Algorithm, env: &Environment) -> Result<PolicyParams> {
        let tau = env.rounds() as u64;
        if alg.uses_ucbe() {
            let h1 = self.h1.ok_or_else(|| {
                Error::Config(format!("{alg} needs h1 (set it in the config for data files)"))
            })?;
            PolicyParams::ucbe(self.ucbe_c, tau, env.k(), h1)
        } else {
            Ok(PolicyParams {
                bayes_quantile_c: self.bayes_c,
                ..PolicyParams::new(tau)
            })
        }
    }
}

/// Runs one algorithm once. The run's streams derive from `seed`.
pub fn run_single(alg: Algorithm, env: &Environment, setup: &RunSetup, seed: u64) -> Result<(Trace, BaiResult)> {
    let k = env.k();
    let mut feedback = LazyFeedback::new(seed, k);
    let mut rng = RngStream::with_stream(seed, POLICY_STREAM);
    let policy = |kind| -> Result<PolicyState> { PolicyState::new(kind, k, setup.params(alg, env)?) };
    let out = match alg {
        Algorithm::Naive(kind) => seq::run_naive_bai(&mut policy(kind)?, env, &mut feedback, &mut rng)?,
        Algorithm::Seq(kind) => {
            let mut p = policy(kind)?;
            let trace = seq::run_seq(&mut p, env, &mut feedback, &mut rng)?;
            let result = BaiResult {
                guess: crate::policy::Policy::recommend(&p),
                rounds_used: env.rounds(),
                pulls_used: trace.total_pulls(),
                mode: seq::StopMode::Lr,
                truncated: false,
            };
            seq::BaiOutcome { result, trace }
        }
        Algorithm::SeqUcbeLp => {
            let budget = env.rounds() as u64;
            seq::run_seq_ucbe_lp(&mut policy(PolicyKind::Ucbe)?, env, budget, &mut feedback, &mut rng)?
        }
        Algorithm::SeqUcbeLr => {
            seq::run_seq_ucbe_lr(&mut policy(PolicyKind::Ucbe)?, env, &mut feedback, &mut rng)?
        }
        Algorithm::UcbrevPlus => run_ucbrev_plus(env, &mut feedback, seed)?.into(),
        Algorithm::SrPlus => run_sr_plus(env, &mut feedback, seed)?.into(),
    };
    Ok((out.trace, out.result))
}

/// Per-run output: per-round series and the final BAI result.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunResult {
    pub scenario: String,
    pub algorithm: String,
    pub run: usize,
    pub seed: u64,
    pub pseudo_regret: Vec<f64>,
    pub npr: Vec<u32>,
    pub pulls_of_opt: Vec<u8>,
    pub bai: BaiResult,
    pub correct: bool,
    #[serde(skip)]
    pub duration: Duration,
}

impl RunResult {
    pub fn final_regret(&self) -> f64 {
        self.pseudo_regret.last().copied().unwrap_or(0.0)
    }

    pub fn total_pulls(&self) -> u64 {
        self.npr.iter().map(|&n| u64::from(n)).sum()
    }

    pub fn opt_star(&self) -> f64 {
        let total = self.total_pulls();
        if total == 0 {
            return 0.0;
        }
        self.optimal_pulls() as f64 / total as f64
    }

    pub fn opti_star(&self) -> f64 {
        self.optimal_pulls() as f64 / self.npr.len().max(1) as f64
    }

    fn optimal_pulls(&self) -> u64 {
        self.pulls_of_opt.iter().map(|&x| u64::from(x)).sum()
    }
}

/// A run that returned an error or panicked.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RunFailure {
    pub algorithm: String,
    pub run: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutput {
    pub scenario: String,
    pub fingerprint: String,
    pub means: Vec<f64>,
    pub notes: Vec<String>,
    pub results: Vec<RunResult>,
    pub failures: Vec<RunFailure>,
}

impl BatchOutput {
    pub fn of(&self, algorithm: &str) -> impl Iterator<Item = &RunResult> + '_ {
        let algorithm = algorithm.to_owned();
        self.results.iter().filter(move |r| r.algorithm == algorithm)
    }
}

/// How the runs of a batch are scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Rayon pool; `None` uses the global pool.
    #[cfg(feature = "parallel")]
    Parallel { threads: Option<usize> },
}

impl Default for Execution {
    fn default() -> Self {
        #[cfg(feature = "parallel")]
        {
            Execution::Parallel { threads: None }
        }
        #[cfg(not(feature = "parallel"))]
        {
            Execution::Sequential
        }
    }
}

/// Hex SHA-256 of the config's canonical JSON.
pub fn config_fingerprint(config: &ExperimentConfig) -> String {
    let json = serde_json::to_string(config).expect("config serializes");
    let digest = Sha256::digest(json.as_bytes());
    hex::encode(digest)
}

pub fn run_batch(config: &ExperimentConfig) -> Result<BatchOutput> {
    run_batch_with(config, Execution::default())
}

pub fn run_batch_with(config: &ExperimentConfig, exec: Execution) -> Result<BatchOutput> {
    config.validate()?;
    let scenario: Scenario = config.scenario.parse()?;
    let instance = scenario.instance(config)?;
    let env = Environment::new(instance.arms.clone(), config.tau)?;
    let algorithms = config
        .policies
        .iter()
        .map(|p| p.parse())
        .collect::<Result<Vec<Algorithm>>>()?;

    let h1 = match config.h1 {
        Some(h) => Some(h),
        None if scenario.uses_data_file() => None,
        None => Some(BoundParams::new(&env.arms)?.h1),
    };
    let setup = RunSetup {
        ucbe_c: config.ucbe_c(),
        bayes_c: config.bayes_c(),
        h1,
    };
    // surface configuration errors once rather than in every run
    for &alg in &algorithms {
        setup.params(alg, &env)?;
    }

    let fingerprint = config_fingerprint(config);
    let jobs: Vec<(Algorithm, usize)> = algorithms
        .iter()
        .flat_map(|&a| (0..config.runs).map(move |r| (a, r)))
        .collect();
    let job = |&(alg, run): &(Algorithm, usize)| {
        execute(&config.scenario, alg, run, config.seed, &env, &setup, &fingerprint)
    };

    let outcomes: Vec<std::result::Result<RunResult, RunFailure>> = match exec {
        Execution::Sequential => jobs.iter().map(job).collect(),
        #[cfg(feature = "parallel")]
        Execution::Parallel { threads } => {
            use rayon::prelude::*;
            match threads {
                None => jobs.par_iter().map(job).collect(),
                Some(n) => rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| Error::Config(format!("thread pool: {e}")))?
                    .install(|| jobs.par_iter().map(job).collect()),
            }
        }
    };

    let (mut results, mut failures) = (Vec::new(), Vec::new());
    for o in outcomes {
        match o {
            Ok(r) => results.push(r),
            Err(f) => failures.push(f),
        }
    }
    results.sort_by(|a, b| (&a.algorithm, a.run).cmp(&(&b.algorithm, b.run)));
    failures.sort_by(|a, b| (&a.algorithm, a.run).cmp(&(&b.algorithm, b.run)));
    for f in &failures {
        log::error!("{} run {} failed: {}", f.algorithm, f.run, f.message);
    }

    Ok(BatchOutput {
        scenario: config.scenario.clone(),
        fingerprint,
        means: env.arms.means().to_vec(),
        notes: instance.notes,
        results,
        failures,
    })
}

fn execute(
    scenario: &str,
    alg: Algorithm,
    run: usize,
    base_seed: u64,
    env: &Environment,
    setup: &RunSetup,
    fingerprint: &str,
) -> std::result::Result<RunResult, RunFailure> {
    let seed = base_seed.wrapping_add(run as u64);
    let start = Instant::now();
    let fail = |message: String| RunFailure {
        algorithm: alg.id(),
        run,
        message,
    };
    let outcome = catch_unwind(AssertUnwindSafe(|| -> Result<RunResult> {
        let (mut trace, bai) = run_single(alg, env, setup, seed)?;
        trace.config_fingerprint = Some(fingerprint.to_owned());
        let pseudo_regret = metrics::pseudo_regret(&trace, &env.arms)?.values;
        let npr = metrics::npr(&trace).values.iter().map(|&x| x as u32).collect();
        let pulls_of_opt = metrics::optimal_pulls_per_round(&trace, &env.arms)?;
        Ok(RunResult {
            scenario: scenario.to_owned(),
            algorithm: alg.id(),
            run,
            seed,
            pseudo_regret,
            npr,
            pulls_of_opt,
            correct: bai.guess == env.arms.best(),
            bai,
            duration: start.elapsed(),
        })
    }));
    match outcome {
        Ok(Ok(r)) => Ok(r),
        Ok(Err(e)) => Err(fail(e.to_string())),
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            Err(fail(format!("panicked: {msg}")))
        }
    }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `<scenario>_rounds.csv` and `<scenario>_bai.csv`; rounds are 1-based.
pub fn write_results_csv(output: &BatchOutput, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|source| Error::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let rounds_path = out_dir.join(format!("{}_rounds.csv", output.scenario));
    let bai_path = out_dir.join(format!("{}_bai.csv", output.scenario));

    let mut w = csv::Writer::from_path(&rounds_path).map_err(csv_err(&rounds_path))?;
    w.write_record([
        "scenario",
        "algorithm",
        "run",
        "round",
        "pseudo_regret",
        "npr",
        "pulls_of_opt",
    ])
    .map_err(csv_err(&rounds_path))?;
    for r in &output.results {
        let run = r.run.to_string();
        for (i, ((reg, npr), opt)) in r
            .pseudo_regret
            .iter()
            .zip(&r.npr)
            .zip(&r.pulls_of_opt)
            .enumerate()
        {
            w.write_record([
                r.scenario.as_str(),
                r.algorithm.as_str(),
                run.as_str(),
                &(i + 1).to_string(),
                &reg.to_string(),
                &npr.to_string(),
                &opt.to_string(),
            ])
            .map_err(csv_err(&rounds_path))?;
        }
    }
    w.flush().map_err(|source| Error::Io {
        path: rounds_path.clone(),
        source,
    })?;

    let mut w = csv::Writer::from_path(&bai_path).map_err(csv_err(&bai_path))?;
    w.write_record([
        "scenario",
        "algorithm",
        "run",
        "guess",
        "correct",
        "rounds_used",
        "pulls_used",
    ])
    .map_err(csv_err(&bai_path))?;
    for r in &output.results {
        w.write_record([
            r.scenario.clone(),
            r.algorithm.clone(),
            r.run.to_string(),
            r.bai.guess.to_string(),
            u8::from(r.correct).to_string(),
            r.bai.rounds_used.to_string(),
            r.bai.pulls_used.to_string(),
        ])
        .map_err(csv_err(&bai_path))?;
    }
    w.flush().map_err(|source| Error::Io {
        path: bai_path.clone(),
        source,
    })?;

    Ok(vec![rounds_path, bai_path])
}

#[derive(Serialize)]
struct Manifest<'a> {
    config: &'a ExperimentConfig,
    fingerprint: &'a str,
    seeds: Vec<u64>,
    seed_rule: &'static str,
    means: &'a [f64],
    notes: &'a [String],
    failures: &'a [RunFailure],
}

/// Writes `manifest.json`: config, fingerprint, per-run seeds and notes.
pub fn write_manifest(output: &BatchOutput, config: &ExperimentConfig, out_dir: &Path) -> Result<PathBuf> {
    let path = out_dir.join("manifest.json");
    let manifest = Manifest {
        config,
        fingerprint: &output.fingerprint,
        seeds: (0..config.runs as u64).map(|r| config.seed.wrapping_add(r)).collect(),
        seed_rule: "seed of run r = base seed + r",
        means: &output.means,
        notes: &output.notes,
        failures: &output.failures,
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, json + "\n").map_err(|source| Error::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}
