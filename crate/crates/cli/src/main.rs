use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use spnb_core::elimination::log_bar;
use spnb_core::experiments::{audibert_budget, ExperimentConfig, Scenario, DEFAULT_GAMMA};
use spnb_core::metrics::{
    aggregate_ci, kl_regret_bound, sr_confidence_bound, sr_plus_confidence_bound, ucb1_regret_bound,
    BoundParams, KlForm,
};
use spnb_core::policy::ucbe_exploration;
use spnb_core::runner::{write_manifest, write_results_csv};
use spnb_core::{run_batch_with, Execution};

#[derive(Parser)]
#[command(name = "spnb", version, about = "Sequential pull/no-pull bandit experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured algorithm and write CSV results.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads; 0 runs sequentially. Defaults to all cores.
        #[arg(long, env = "SPNB_THREADS")]
        threads: Option<usize>,
        /// Overrides the base seed in the config.
        #[arg(long, env = "SPNB_SEED")]
        seed: Option<u64>,
    },
    /// List the built-in scenario ids.
    ListScenarios,
    /// Print the closed-form bounds for a scenario.
    Bound {
        #[arg(long)]
        scenario: String,
        /// ucb1, bayes-ucb, thompson, ucbe, sr, sr-plus or ucbrev-plus.
        #[arg(long)]
        policy: String,
        /// Rounds; defaults to the scenario's usual horizon.
        #[arg(long)]
        tau: Option<usize>,
        /// Seed of the synthetic instance.
        #[arg(long, env = "SPNB_SEED", default_value_t = 0)]
        seed: u64,
        /// Data file for yahoo-slots and exceedance.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_GAMMA)]
        gamma: f64,
        /// UCB-E constant c.
        #[arg(long, default_value_t = 2.0)]
        c: f64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command.execute() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

impl Command {
    fn execute(self) -> Result<ExitCode> {
        match self {
            Command::Run {
                config,
                out,
                threads,
                seed,
            } => run(config, out, threads, seed),
            Command::ListScenarios => {
                for (s, desc) in Scenario::registry() {
                    println!("{:<18} {desc}", s.to_string());
                }
                Ok(ExitCode::SUCCESS)
            }
            Command::Bound {
                scenario,
                policy,
                tau,
                seed,
                data,
                gamma,
                c,
            } => bound(&scenario, &policy, tau, seed, data, gamma, c),
        }
    }
}

fn run(config: PathBuf, out: PathBuf, threads: Option<usize>, seed: Option<u64>) -> Result<ExitCode> {
    let mut cfg = ExperimentConfig::from_path(&config)
        .with_context(|| format!("reading {}", config.display()))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let exec = match threads {
        Some(0) => Execution::Sequential,
        n => Execution::Parallel { threads: n },
    };
    let output = run_batch_with(&cfg, exec)?;
    let mut paths = write_results_csv(&output, &out)?;
    paths.push(write_manifest(&output, &cfg, &out)?);

    println!("scenario {} (K = {}, tau = {}, runs = {})", cfg.scenario, output.means.len(), cfg.tau, cfg.runs);
    for note in &output.notes {
        println!("note: {note}");
    }
    println!("{:<16} {:>20} {:>10} {:>10}", "algorithm", "regret (95% CI)", "opti*", "delta");
    for alg in &cfg.policies {
        let runs: Vec<_> = output.of(alg).collect();
        if runs.is_empty() {
            continue;
        }
        let regret: Vec<f64> = runs.iter().map(|r| r.final_regret()).collect();
        let (m, h) = aggregate_ci(&regret)?;
        let opti = runs.iter().map(|r| r.opti_star()).sum::<f64>() / runs.len() as f64;
        let wrong = runs.iter().filter(|r| !r.correct).count() as f64 / runs.len() as f64;
        let ci = h.map_or_else(|| format!("{m:.2}"), |h| format!("{m:.2} ± {h:.2}"));
        println!("{alg:<16} {ci:>20} {opti:>10.3} {wrong:>10.3}");
    }
    for p in &paths {
        println!("wrote {}", p.display());
    }
    if !output.failures.is_empty() {
        for f in &output.failures {
            eprintln!("run {} of {} failed: {}", f.run, f.algorithm, f.message);
        }
        eprintln!("{} run(s) failed", output.failures.len());
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

fn default_tau(s: &Scenario) -> usize {
    match *s {
        Scenario::Audibert(id) => audibert_budget(id).unwrap_or(1000),
        Scenario::Exceedance => 494,
        Scenario::YahooSlots => 730,
        Scenario::SyntheticRm { .. } => 1000,
    }
}

fn bound(
    scenario: &str,
    policy: &str,
    tau: Option<usize>,
    seed: u64,
    data: Option<PathBuf>,
    gamma: f64,
    c: f64,
) -> Result<ExitCode> {
    let s: Scenario = scenario.parse()?;
    let tau = tau.unwrap_or_else(|| default_tau(&s));
    let cfg = ExperimentConfig {
        scenario: scenario.to_owned(),
        policies: vec![policy.to_owned()],
        k: None,
        tau,
        runs: 1,
        seed,
        data_path: data,
        gamma: Some(gamma),
        min_gap: None,
        ucbe_c: Some(c),
        bayes_c: None,
        h1: None,
    };
    let arms = s.instance(&cfg)?.arms;
    let k = arms.k();
    let p = BoundParams::new(&arms)?;
    let t = tau * k;
    println!("scenario {scenario}: K = {k}, tau = {tau}, T = {t}, mu* = {}", p.mu_star);
    println!("H1 = {:.6}", p.h1);
    println!("H2 = {:.6}", p.h2);
    println!("log_bar(K) = {:.6}", log_bar(k)?);

    let base = policy.strip_prefix("seq-").unwrap_or(policy);
    match base {
        "ucb1" => {
            let b = ucb1_regret_bound(&p, tau);
            println!("ucb1 regret bound = {b:.6}");
            if b < 0.0 {
                println!("(negative: the -8K/gap^2 term dominates when K exceeds ln tau)");
            }
        }
        "bayes-ucb" | "thompson" => {
            println!("{base} regret bound, leading term, KL = {:.6}", kl_regret_bound(&p, tau, 0.0, KlForm::Exact));
            println!("{base} regret bound, leading term, Pinsker = {:.6}", kl_regret_bound(&p, tau, 0.0, KlForm::Pinsker));
        }
        "ucbe" | "ucbe-lp" | "ucbe-lr" => {
            let a = ucbe_exploration(c, tau as u64, k, p.h1)?;
            println!("ucbe exploration a = c (tau - K) / H1 = {a:.6}");
            println!("no closed-form misidentification bound is evaluated for ucbe");
        }
        "sr" => println!("sr misidentification bound = {:.6e}", sr_confidence_bound(&p, t)?),
        "sr-plus" => {
            println!("sr-plus misidentification bound = {:.6e}", sr_plus_confidence_bound(&p, t));
            println!("sr misidentification bound = {:.6e}", sr_confidence_bound(&p, t)?);
        }
        "ucbrev-plus" => println!("no closed-form bound is evaluated for ucbrev-plus"),
        other => bail!("unknown policy {other:?}"),
    }
    Ok(ExitCode::SUCCESS)
}
