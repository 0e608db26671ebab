//! Problem instances: synthetic generators, the Audibert BAI suite, CSV
//! loaders for user data, and the scenario registry used by the runner.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::env::{ArmSet, FeedbackTable, RngStream, INSTANCE_STREAM};
use crate::error::{Error, Result};

/// Default exceedance threshold, cells/uL.
pub const DEFAULT_GAMMA: f64 = 60.0;
pub const DEFAULT_MIN_GAP: f64 = 0.1;
const GENERATOR_ATTEMPTS: usize = 100_000;

/// Declarative description of one experiment, read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: String,
    pub policies: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    pub tau: usize,
    pub runs: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_gap: Option<f64>,
    /// UCB-E `c`; 2 when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ucbe_c: Option<f64>,
    /// Bayes-UCB quantile exponent; 0 when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bayes_c: Option<f64>,
    /// Hardness `H1` for UCB-E on data without known gaps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h1: Option<f64>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.runs == 0 {
            return fail("runs must be at least 1".into());
        }
        if self.tau == 0 {
            return fail("tau must be at least 1".into());
        }
        if self.policies.is_empty() {
            return fail("policies must not be empty".into());
        }
        if let Some(g) = self.min_gap {
            if !(g > 0.0 && g < 1.0) {
                return fail(format!("min_gap must lie in (0, 1), got {g}"));
            }
        }
        self.scenario.parse::<Scenario>()?;
        Ok(())
    }

    pub fn ucbe_c(&self) -> f64 {
        self.ucbe_c.unwrap_or(2.0)
    }

    pub fn bayes_c(&self) -> f64 {
        self.bayes_c.unwrap_or(0.0)
    }
}

/// Uniform means conditioned on a best-to-second gap of exactly `min_gap`.
///
/// Draws are rejected until the gap is at least `min_gap`; the runner-up is
/// then raised to `best - min_gap`.
pub fn gen_synthetic_rm(k: usize, min_gap: f64, rng: &mut RngStream) -> Result<ArmSet> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!("need K >= 2, got {k}")));
    }
    if !(min_gap > 0.0 && min_gap < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "min_gap must lie in (0, 1), got {min_gap}"
        )));
    }
    for _ in 0..GENERATOR_ATTEMPTS {
        let mut means: Vec<f64> = (0..k).map(|_| rng.uniform()).collect();
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| means[b].total_cmp(&means[a]));
        let (best, second) = (order[0], order[1]);
        if means[best] - means[second] >= min_gap {
            means[second] = means[best] - min_gap;
            return ArmSet::new(means);
        }
    }
    Err(Error::GeneratorExhausted {
        attempts: GENERATOR_ATTEMPTS,
        k,
        min_gap,
    })
}

/// Means of the seven fixed-budget BAI benchmarks (`id` in 1..=7). Arm 0 is
/// the unique optimum with mean 0.5.
pub fn audibert_experiment(id: u8) -> Result<ArmSet> {
    let fill = |groups: &[(usize, f64)]| {
        let mut m = vec![0.5];
        for &(n, v) in groups {
            m.extend(std::iter::repeat(v).take(n));
        }
        m
    };
    let means = match id {
        1 => fill(&[(19, 0.4)]),
        2 => fill(&[(5, 0.42), (14, 0.38)]),
        3 => std::iter::once(0.5)
            .chain((2..=4).map(|i| 0.5 - 0.37f64.powi(i)))
            .collect(),
        4 => fill(&[(1, 0.42), (2, 0.4), (2, 0.35)]),
        5 => std::iter::once(0.5)
            .chain((2..=15).map(|i| 0.5 - 0.025 * i as f64))
            .collect(),
        6 => fill(&[(1, 0.48), (18, 0.37)]),
        7 => fill(&[(5, 0.45), (14, 0.43), (10, 0.38)]),
        _ => {
            return Err(Error::InvalidParameter(format!(
                "Audibert experiment id must be 1..=7, got {id}"
            )))
        }
    };
    ArmSet::new(means)
}

/// Pull budget of each Audibert experiment, used as its number of rounds.
pub fn audibert_budget(id: u8) -> Result<usize> {
    match id {
        1..=3 => Ok(2000),
        4 => Ok(600),
        5 => Ok(4000),
        6 | 7 => Ok(6000),
        _ => Err(Error::InvalidParameter(format!(
            "Audibert experiment id must be 1..=7, got {id}"
        ))),
    }
}

/// Arms read from a file, with their labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedArms {
    pub arms: ArmSet,
    pub labels: Vec<String>,
}

fn validate_loaded(path: &Path, means: Vec<f64>) -> Result<ArmSet> {
    if means.windows(2).all(|w| w[0] == w[1]) {
        return Err(Error::load(
            path,
            0,
            "all slots have the same mean, there is no best arm",
        ));
    }
    let arms = ArmSet::with_tie_break(means).map_err(|e| Error::load(path, 0, e.to_string()))?;
    if arms.tied_max() {
        log::warn!(
            "{}: maximum mean {} is shared by several slots; using slot index {}",
            path.display(),
            arms.best_mean(),
            arms.best()
        );
    }
    Ok(arms)
}

fn open_csv(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })
}

fn headers(path: &Path, rdr: &mut csv::Reader<std::fs::File>) -> Result<Vec<String>> {
    let h = rdr.headers().map_err(|source| Error::Csv {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(h.iter().map(str::to_owned).collect())
}

fn record_line(path: &Path, r: std::result::Result<csv::StringRecord, csv::Error>) -> Result<(usize, csv::StringRecord)> {
    match r {
        Ok(rec) => {
            let line = rec.position().map_or(0, |p| p.line() as usize);
            Ok((line, rec))
        }
        Err(e) => {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Err(Error::load(path, line, e.to_string()))
        }
    }
}

fn read_slot_means(path: &Path, rdr: &mut csv::Reader<std::fs::File>) -> Result<LoadedArms> {
    let mut labels = Vec::new();
    let mut means = Vec::new();
    let mut seen = HashMap::new();
    for r in rdr.records() {
        let (line, rec) = record_line(path, r)?;
        if rec.len() != 2 {
            return Err(Error::load(path, line, format!("expected 2 fields, found {}", rec.len())));
        }
        let slot = rec[0].to_owned();
        if slot.is_empty() {
            return Err(Error::load(path, line, "empty slot label"));
        }
        let mean: f64 = rec[1]
            .parse()
            .map_err(|_| Error::load(path, line, format!("mean {:?} is not a number", &rec[1])))?;
        if !(0.0..=1.0).contains(&mean) {
            return Err(Error::load(path, line, format!("mean {mean} outside [0, 1]")));
        }
        if let Some(first) = seen.insert(slot.clone(), line) {
            return Err(Error::load(
                path,
                line,
                format!("duplicate slot {slot:?} (first seen on line {first})"),
            ));
        }
        labels.push(slot);
        means.push(mean);
    }
    if means.is_empty() {
        return Err(Error::load(path, 1, "no data rows"));
    }
    let arms = validate_loaded(path, means)?;
    Ok(LoadedArms { arms, labels })
}

/// Reads a `slot,mean` file; arms keep the file's row order.
pub fn load_slot_means_csv(path: &Path) -> Result<LoadedArms> {
    let mut rdr = open_csv(path)?;
    let h = headers(path, &mut rdr)?;
    if h != ["slot", "mean"] {
        if h.is_empty() {
            return Err(Error::load(path, 1, "empty file"));
        }
        return Err(Error::load(
            path,
            1,
            format!("expected header slot,mean, found {}", h.join(",")),
        ));
    }
    read_slot_means(path, &mut rdr)
}

/// Exceedance data with, for raw input, the per-slot indicator sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct ExceedanceData {
    pub loaded: LoadedArms,
    /// Distinct days in raw input; `None` for pre-reduced files.
    pub days: Option<usize>,
    /// Per slot, `1{concentration > gamma}` for each reading in file order.
    pub indicators: Option<Vec<Vec<u8>>>,
}

impl ExceedanceData {
    /// Replays the recorded indicators, repeating the series until every
    /// slot has at least `rounds` values.
    pub fn replay_table(&self, rounds: usize) -> Result<FeedbackTable> {
        let ind = self.indicators.as_ref().ok_or_else(|| {
            Error::InvalidParameter("replay needs raw readings, not reduced means".into())
        })?;
        let rows = ind
            .iter()
            .map(|row| row.iter().copied().cycle().take(rounds.max(row.len())).collect())
            .collect();
        Ok(FeedbackTable::from_rows(rows))
    }
}

/// Reads either raw `day,slot,concentration_cells_per_uL` readings, reduced to
/// exceedance probabilities over `gamma`, or an already reduced `slot,mean`
/// file.
///
/// Raw slots are ordered numerically when every label is a number, otherwise
/// by first appearance.
pub fn load_exceedance_csv(path: &Path, gamma: f64) -> Result<ExceedanceData> {
    let mut rdr = open_csv(path)?;
    let h = headers(path, &mut rdr)?;
    if h == ["slot", "mean"] {
        return Ok(ExceedanceData {
            loaded: read_slot_means(path, &mut rdr)?,
            days: None,
            indicators: None,
        });
    }
    if h != ["day", "slot", "concentration_cells_per_uL"] {
        if h.is_empty() {
            return Err(Error::load(path, 1, "empty file"));
        }
        return Err(Error::load(
            path,
            1,
            format!(
                "expected header day,slot,concentration_cells_per_uL or slot,mean, found {}",
                h.join(",")
            ),
        ));
    }

    let mut labels: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut readings: Vec<Vec<u8>> = Vec::new();
    let mut days = std::collections::HashSet::new();
    let mut last_line = 1;
    for r in rdr.records() {
        let (line, rec) = record_line(path, r)?;
        last_line = line;
        if rec.len() != 3 {
            return Err(Error::load(path, line, format!("expected 3 fields, found {}", rec.len())));
        }
        let slot = rec[1].to_owned();
        let i = *index.entry(slot.clone()).or_insert_with(|| {
            labels.push(slot);
            readings.push(Vec::new());
            labels.len() - 1
        });
        days.insert(rec[0].to_owned());
        let field = &rec[2];
        if field.is_empty() {
            continue;
        }
        let c: f64 = field.parse().map_err(|_| {
            Error::load(path, line, format!("concentration {field:?} is not a number"))
        })?;
        if !c.is_finite() {
            return Err(Error::load(path, line, format!("concentration {c} is not finite")));
        }
        readings[i].push(u8::from(c > gamma));
    }
    if labels.is_empty() {
        return Err(Error::load(path, last_line, "no data rows"));
    }
    if let Some(i) = readings.iter().position(Vec::is_empty) {
        return Err(Error::load(
            path,
            0,
            format!("slot {:?} has no observations", labels[i]),
        ));
    }

    let mut order: Vec<usize> = (0..labels.len()).collect();
    let numeric: Option<Vec<f64>> = labels.iter().map(|l| l.parse().ok()).collect();
    if let Some(keys) = numeric {
        order.sort_by(|&a, &b| keys[a].total_cmp(&keys[b]));
    }
    let labels: Vec<String> = order.iter().map(|&i| labels[i].clone()).collect();
    let readings: Vec<Vec<u8>> = order.iter().map(|&i| readings[i].clone()).collect();
    let means = readings
        .iter()
        .map(|r| r.iter().map(|&x| f64::from(x)).sum::<f64>() / r.len() as f64)
        .collect();
    let arms = validate_loaded(path, means)?;
    Ok(ExceedanceData {
        loaded: LoadedArms { arms, labels },
        days: Some(days.len()),
        indicators: Some(readings),
    })
}

/// Named problem families understood by the runner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    SyntheticRm { k: usize },
    Audibert(u8),
    YahooSlots,
    Exceedance,
}

impl Scenario {
    /// The registered scenarios, with a one-line description each.
    pub fn registry() -> Vec<(Scenario, &'static str)> {
        let mut v = vec![
            (Scenario::SyntheticRm { k: 10 }, "uniform means, best-to-second gap 0.1, K = 10"),
            (Scenario::SyntheticRm { k: 25 }, "uniform means, best-to-second gap 0.1, K = 25"),
            (Scenario::SyntheticRm { k: 50 }, "uniform means, best-to-second gap 0.1, K = 50"),
        ];
        let desc = [
            "K = 20, mu_2..20 = 0.4",
            "K = 20, mu_2..6 = 0.42, mu_7..20 = 0.38",
            "K = 4, mu_i = 0.5 - 0.37^i",
            "K = 6, mu_2 = 0.42, mu_3..4 = 0.4, mu_5..6 = 0.35",
            "K = 15, mu_i = 0.5 - 0.025 i",
            "K = 20, mu_2 = 0.48, mu_3..20 = 0.37",
            "K = 30, mu_2..6 = 0.45, mu_7..20 = 0.43, mu_21..30 = 0.38",
        ];
        for (i, d) in desc.into_iter().enumerate() {
            v.push((Scenario::Audibert(i as u8 + 1), d));
        }
        v.push((Scenario::YahooSlots, "click-through rates per slot from a slot,mean CSV"));
        v.push((Scenario::Exceedance, "threshold exceedance per slot from raw or reduced CSV"));
        v
    }

    /// Builds the arm set; file scenarios read `config.data_path`.
    pub fn instance(&self, config: &ExperimentConfig) -> Result<Instance> {
        let mut notes = Vec::new();
        let arms = match *self {
            Scenario::SyntheticRm { k } => {
                let mut rng = RngStream::with_stream(config.seed, INSTANCE_STREAM);
                gen_synthetic_rm(k, config.min_gap.unwrap_or(DEFAULT_MIN_GAP), &mut rng)?
            }
            Scenario::Audibert(id) => audibert_experiment(id)?,
            Scenario::YahooSlots => load_slot_means_csv(data_path(config)?)?.arms,
            Scenario::Exceedance => {
                let gamma = config.gamma.unwrap_or(DEFAULT_GAMMA);
                load_exceedance_csv(data_path(config)?, gamma)?.loaded.arms
            }
        };
        if let Some(k) = config.k {
            if k != arms.k() {
                return Err(Error::Config(format!(
                    "config k = {k} but scenario {self} has {} arms",
                    arms.k()
                )));
            }
        }
        if arms.tied_max() {
            notes.push(format!(
                "tied maximum mean {}; optimum taken as arm {}",
                arms.best_mean(),
                arms.best()
            ));
        }
        Ok(Instance { arms, notes })
    }

    pub fn uses_data_file(&self) -> bool {
        matches!(self, Scenario::YahooSlots | Scenario::Exceedance)
    }
}

fn data_path(config: &ExperimentConfig) -> Result<&Path> {
    config
        .data_path
        .as_deref()
        .ok_or_else(|| Error::Config(format!("scenario {} needs data_path", config.scenario)))
}

/// An arm set plus anything worth recording about how it was built.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub arms: ArmSet,
    pub notes: Vec<String>,
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scenario::SyntheticRm { k } => write!(f, "synthetic-rm-{k}"),
            Scenario::Audibert(id) => write!(f, "audibert-{id}"),
            Scenario::YahooSlots => f.write_str("yahoo-slots"),
            Scenario::Exceedance => f.write_str("exceedance"),
        }
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let unknown = || Error::Config(format!("unknown scenario {s:?}"));
        if let Some(k) = s.strip_prefix("synthetic-rm-") {
            let k: usize = k.parse().map_err(|_| unknown())?;
            if k < 2 {
                return Err(unknown());
            }
            return Ok(Scenario::SyntheticRm { k });
        }
        if let Some(id) = s.strip_prefix("audibert-") {
            let id: u8 = id.parse().map_err(|_| unknown())?;
            if !(1..=7).contains(&id) {
                return Err(unknown());
            }
            return Ok(Scenario::Audibert(id));
        }
        match s {
            "yahoo-slots" => Ok(Scenario::YahooSlots),
            "exceedance" => Ok(Scenario::Exceedance),
            _ => Err(unknown()),
        }
    }
}
