//! End-to-end experiment helpers shared by the command line, the FFI layer
//! and the acceptance tests: run configuration, paired fair/baseline runs and
//! the λ ablation.
//!
//! Performance is scored on the held-out split. Group-fairness metrics and
//! rankings are computed over every row: with ~8 rows per district the test
//! split leaves one or two rows per group, too few for a district mean.

use std::collections::HashMap;
use std::path::PathBuf;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{generate_synthetic, load_csv, stratified_split, Dataset, SyntheticConfig};
use crate::error::{Error, Result};
use crate::fairness::{FairnessReport, PerformanceReport};
use crate::model::{FairModel, Variant};
use crate::priority::{compare_rankings_with_poverty, rank_dataset, PriorityEntry, RankShiftReport};
use crate::trainer::{evaluate, train, TrainConfig, TrainingLog};

pub const SCHEMA_VERSION: u32 = 1;

/// Everything a command needs besides its file arguments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// CSV dataset; `None` means generate synthetic data per seed.
    pub data: Option<PathBuf>,
    pub synthetic: SyntheticConfig,
    pub train: TrainConfig,
    pub train_fraction: f64,
    pub out_dir: PathBuf,
    pub seeds: Vec<u64>,
    pub lambdas: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: None,
            synthetic: SyntheticConfig::default(),
            train: TrainConfig::default(),
            train_fraction: 0.8,
            out_dir: PathBuf::from("out"),
            seeds: vec![0, 1, 2, 3, 4],
            lambdas: vec![0.0, 0.5, 1.0, 2.0],
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("`{key}`: cannot parse `{value}`: {e}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

impl RunConfig {
    /// Keys accepted by [`RunConfig::set`] and config files.
    pub const KEYS: [&'static str; 23] = [
        "data",
        "out_dir",
        "seed",
        "seeds",
        "lambdas",
        "train_fraction",
        "variant",
        "lambda",
        "epochs",
        "batch_size",
        "lr",
        "weight_decay",
        "scheduler_factor",
        "scheduler_patience",
        "min_lr",
        "init_output_bias",
        "n_upazilas",
        "n_districts",
        "haor_fraction",
        "district_bias_strength",
        "proxy_strength",
        "noise_sd",
        "synthetic_seed",
    ];

    /// Sets one key. `seed` sets the training seed, the synthetic seed and
    /// the one-element seed list together.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "data" => self.data = Some(PathBuf::from(v)),
            "out_dir" => self.out_dir = PathBuf::from(v),
            "seed" => {
                let s: u64 = parse(key, v)?;
                self.train.seed = s;
                self.synthetic.seed = s;
                self.seeds = vec![s];
            }
            "seeds" => self.seeds = parse_list(key, v)?,
            "lambdas" => self.lambdas = parse_list(key, v)?,
            "train_fraction" => self.train_fraction = parse(key, v)?,
            "variant" => self.train.variant = parse(key, v)?,
            "lambda" => self.train.lambda = parse(key, v)?,
            "epochs" => self.train.epochs = parse(key, v)?,
            "batch_size" => self.train.batch_size = parse(key, v)?,
            "lr" => self.train.lr = parse(key, v)?,
            "weight_decay" => self.train.weight_decay = parse(key, v)?,
            "scheduler_factor" => self.train.scheduler_factor = parse(key, v)?,
            "scheduler_patience" => self.train.scheduler_patience = parse(key, v)?,
            "min_lr" => self.train.min_lr = parse(key, v)?,
            "init_output_bias" => self.train.init_output_bias = parse(key, v)?,
            "n_upazilas" => self.synthetic.n_upazilas = parse(key, v)?,
            "n_districts" => self.synthetic.n_districts = parse(key, v)?,
            "haor_fraction" => self.synthetic.haor_fraction = parse(key, v)?,
            "district_bias_strength" => self.synthetic.district_bias_strength = parse(key, v)?,
            "proxy_strength" => self.synthetic.proxy_strength = parse(key, v)?,
            "noise_sd" => self.synthetic.noise_sd = parse(key, v)?,
            "synthetic_seed" => self.synthetic.seed = parse(key, v)?,
            other => {
                return Err(Error::Config(format!(
                    "unknown config key `{other}` (known: {})",
                    Self::KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Applies a flat `key = value` file: one pair per line, `#` starts a
    /// comment, blank lines are ignored, later lines win.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, got `{raw}`", i + 1)))?;
            self.set(k.trim(), v)
                .map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.lambdas.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
            return Err(Error::Config(format!("lambdas {:?} must all be >= 0", self.lambdas)));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!("train fraction {} not in (0, 1)", self.train_fraction)));
        }
        self.train.validate()?;
        if self.data.is_none() {
            self.synthetic.validate()?;
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        config_hash(self)
    }

    /// The dataset used for `seed`: the CSV file, or synthetic data
    /// generated with that seed.
    pub fn dataset_for(&self, seed: u64) -> Result<Dataset> {
        match &self.data {
            Some(path) => load_csv(path),
            None => Ok(generate_synthetic(&SyntheticConfig {
                seed,
                ..self.synthetic.clone()
            })?
            .dataset),
        }
    }
}

/// Hex SHA-256 of `value` serialized as JSON.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("config types serialize");
    Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
}

/// One trained model, scored.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunOutcome {
    pub variant: Variant,
    pub lambda: f64,
    pub seed: u64,
    /// Held-out split.
    pub test_performance: PerformanceReport,
    /// All rows.
    pub fairness: FairnessReport,
    pub predictions: Vec<f64>,
    pub log: TrainingLog,
}

/// Splits `full` with `seed`, trains on the training rows and scores.
pub fn run_once(full: &Dataset, train_fraction: f64, config: &TrainConfig) -> Result<(FairModel, RunOutcome)> {
    let (train_set, test_set) = stratified_split(full, train_fraction, config.seed)?;
    let (model, log) = train(&train_set, config)?;
    let test_performance = evaluate(&model, &test_set)?.performance;
    let fairness = evaluate(&model, full)?.fairness;
    let predictions = model.predict(full)?;
    let outcome = RunOutcome {
        variant: config.variant,
        lambda: log.lambda,
        seed: config.seed,
        test_performance,
        fairness,
        predictions,
        log,
    };
    Ok((model, outcome))
}

/// Fair and baseline models trained on the same split and seed.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Comparison {
    pub seed: u64,
    pub baseline: RunOutcome,
    pub fair: RunOutcome,
    /// `100 · (SPD_baseline − SPD_fair) / SPD_baseline`.
    pub spd_reduction_pct: f64,
    /// `R²_baseline − R²_fair` on the held-out split.
    pub r2_drop: f64,
    pub baseline_ranking: Vec<PriorityEntry>,
    pub fair_ranking: Vec<PriorityEntry>,
    /// Fair ranking relative to the baseline ranking.
    pub rank_shift: RankShiftReport,
}

pub fn poverty_by_id(data: &Dataset) -> HashMap<String, f64> {
    data.records()
        .iter()
        .map(|r| (r.upazila_id.clone(), r.poverty_rate))
        .collect()
}

/// Trains both variants with `config` (its `variant` is ignored).
pub fn compare_variants(full: &Dataset, train_fraction: f64, config: &TrainConfig) -> Result<Comparison> {
    let (_, baseline) = run_once(
        full,
        train_fraction,
        &TrainConfig {
            variant: Variant::Baseline,
            ..config.clone()
        },
    )?;
    let (_, fair) = run_once(
        full,
        train_fraction,
        &TrainConfig {
            variant: Variant::Fair,
            ..config.clone()
        },
    )?;
    let baseline_ranking = rank_dataset(full, &baseline.predictions)?;
    let fair_ranking = rank_dataset(full, &fair.predictions)?;
    let rank_shift = compare_rankings_with_poverty(&baseline_ranking, &fair_ranking, Some(&poverty_by_id(full)))?;
    Ok(Comparison {
        seed: config.seed,
        spd_reduction_pct: 100.0 * (baseline.fairness.spd - fair.fairness.spd) / baseline.fairness.spd,
        r2_drop: baseline.test_performance.r2 - fair.test_performance.r2,
        baseline,
        fair,
        baseline_ranking,
        fair_ranking,
        rank_shift,
    })
}

/// One (λ, seed) ablation run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRun {
    pub lambda: f64,
    pub seed: u64,
    pub r2: f64,
    pub mae: f64,
    pub spd: f64,
    pub regional_gap: f64,
}

/// Seed means for one λ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub lambda: f64,
    pub r2: f64,
    pub mae: f64,
    pub spd: f64,
    pub regional_gap: f64,
    pub n_seeds: usize,
}

#[derive(Debug)]
pub struct AblationResult {
    pub rows: Vec<AblationRow>,
    /// Successful runs, ordered by (λ, seed).
    pub runs: Vec<AblationRun>,
    pub failures: Vec<(f64, u64, Error)>,
}

/// Trains the fair variant for every (λ, seed) pair on a worker pool and
/// averages per λ. Results are merged by key, so they do not depend on
/// scheduling; failed runs are reported instead of aborting the rest.
pub fn ablate(config: &RunConfig) -> Result<AblationResult> {
    config.validate()?;
    if config.lambdas.is_empty() {
        return Err(Error::Config("ablation needs at least one lambda".into()));
    }
    let mut lambdas = config.lambdas.clone();
    lambdas.sort_by(f64::total_cmp);
    lambdas.dedup();
    let mut seeds = config.seeds.clone();
    seeds.sort_unstable();
    seeds.dedup();

    let datasets: Vec<(u64, Result<Dataset>)> = seeds.par_iter().map(|&s| (s, config.dataset_for(s))).collect();
    let data: HashMap<u64, &Dataset> = datasets
        .iter()
        .filter_map(|(s, d)| d.as_ref().ok().map(|d| (*s, d)))
        .collect();
    if let Some((_, Err(e))) = datasets.iter().find(|(_, d)| d.is_err()) {
        return Err(Error::invalid(format!("could not prepare ablation data: {e}")));
    }

    let jobs: Vec<(f64, u64)> = lambdas
        .iter()
        .flat_map(|&l| seeds.iter().map(move |&s| (l, s)))
        .collect();
    let results: Vec<(f64, u64, Result<AblationRun>)> = jobs
        .par_iter()
        .map(|&(lambda, seed)| {
            let tc = TrainConfig {
                lambda,
                seed,
                variant: Variant::Fair,
                ..config.train.clone()
            };
            let run = run_once(data[&seed], config.train_fraction, &tc).map(|(_, o)| AblationRun {
                lambda,
                seed,
                r2: o.test_performance.r2,
                mae: o.test_performance.mae,
                spd: o.fairness.spd,
                regional_gap: o.fairness.regional_gap,
            });
            (lambda, seed, run)
        })
        .collect();

    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for (l, s, r) in results {
        match r {
            Ok(run) => runs.push(run),
            Err(e) => failures.push((l, s, e)),
        }
    }
    let rows = lambdas
        .iter()
        .filter_map(|&l| {
            let rs: Vec<&AblationRun> = runs.iter().filter(|r| r.lambda == l).collect();
            let n = rs.len();
            (n > 0).then(|| {
                let m = |f: fn(&AblationRun) -> f64| rs.iter().map(|r| f(r)).sum::<f64>() / n as f64;
                AblationRow {
                    lambda: l,
                    r2: m(|r| r.r2),
                    mae: m(|r| r.mae),
                    spd: m(|r| r.spd),
                    regional_gap: m(|r| r.regional_gap),
                    n_seeds: n,
                }
            })
        })
        .collect();
    Ok(AblationResult { rows, runs, failures })
}

pub const ABLATION_COLUMNS: [&str; 6] = ["lambda", "r2", "mae", "spd", "regional_gap", "n_seeds"];

pub fn write_ablation_csv<W: std::io::Write>(rows: &[AblationRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(ABLATION_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.lambda.to_string(),
            r.r2.to_string(),
            r.mae.to_string(),
            r.spd.to_string(),
            r.regional_gap.to_string(),
            r.n_seeds.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}
