//! Command line front end: `generate`, `train`, `evaluate`, `rank`,
//! `compare` and `ablate`.
//!
//! Settings resolve as defaults < `--config` file < flags. Every JSON output
//! carries `schema_version`, `seed` and `config_hash`; each command also
//! writes `run_<command>.json` listing the files it produced, which covers
//! the CSV outputs whose column layout is fixed.

use std::collections::{BTreeMap, HashSet};
use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::dataset::{generate_synthetic, load_csv, stratified_split_indices, write_csv, Dataset};
use crate::error::{Error, Result};
use crate::experiment::{ablate, poverty_by_id, write_ablation_csv, RunConfig, SCHEMA_VERSION};
use crate::fairness::improvement_table;
use crate::model::{load_checkpoint, save_checkpoint};
use crate::model::{FairModel, Variant};
use crate::priority::{compare_rankings_with_poverty, load_ranking, rank_dataset, write_ranking};
use crate::trainer::{evaluate, train, EvaluationReport, TrainConfig};

#[derive(Parser, Debug)]
#[command(name = "floodaid", version, about = "Fairness-aware flood damage prediction and aid prioritization")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// Seed for every randomized step
    #[arg(long)]
    pub seed: Option<u64>,
    /// Flat `key = value` config file
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Only print errors
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a synthetic dataset CSV and its manifest
    Generate(GenerateArgs),
    /// Train fair and/or baseline models on the training split
    Train(TrainArgs),
    /// Score a checkpoint (optionally against a baseline checkpoint)
    Evaluate(EvaluateArgs),
    /// Write the priority ranking for a checkpoint
    Rank(RankArgs),
    /// Compare two ranking files
    Compare(CompareArgs),
    /// Train over a λ grid and seeds, averaging per λ
    Ablate(AblateArgs),
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub n_upazilas: Option<usize>,
    #[arg(long)]
    pub n_districts: Option<usize>,
    #[arg(long)]
    pub haor_fraction: Option<f64>,
    /// District offset scale, USD millions
    #[arg(long)]
    pub bias: Option<f64>,
    /// Damage noise SD, USD millions
    #[arg(long)]
    pub noise: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum VariantChoice {
    Fair,
    Baseline,
    Both,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    /// Dataset CSV
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "fair")]
    pub variant: VariantChoice,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitChoice {
    /// Rows the checkpoint was not trained on
    Test,
    /// Rows the checkpoint was trained on (flags leakage)
    Train,
    All,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Baseline checkpoint for improvement percentages
    #[arg(long)]
    pub baseline: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitChoice,
}

#[derive(Args, Debug)]
pub struct RankArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output file name inside the output directory
    #[arg(long, default_value = "ranking.csv")]
    pub output: String,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    #[command(flatten)]
    pub common: Common,
    /// Reference ranking CSV (e.g. baseline)
    #[arg(long)]
    pub reference: PathBuf,
    /// Candidate ranking CSV (e.g. fair)
    #[arg(long)]
    pub candidate: PathBuf,
    /// Dataset CSV, for the high-poverty subgroup
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Dataset CSV; synthetic data per seed when absent
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Comma-separated λ grid
    #[arg(long)]
    pub lambdas: Option<String>,
    /// Comma-separated seeds
    #[arg(long)]
    pub seeds: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Generate(a) => &a.common,
            Command::Train(a) => &a.common,
            Command::Evaluate(a) => &a.common,
            Command::Rank(a) => &a.common,
            Command::Compare(a) => &a.common,
            Command::Ablate(a) => &a.common,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Command::Generate(_) => "generate",
            Command::Train(_) => "train",
            Command::Evaluate(_) => "evaluate",
            Command::Rank(_) => "rank",
            Command::Compare(_) => "compare",
            Command::Ablate(_) => "ablate",
        }
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let quiet = cli.command.common().quiet;
    let _ = env_logger::Builder::new()
        .filter_level(if quiet { log::LevelFilter::Error } else { log::LevelFilter::Warn })
        .parse_default_env()
        .format_timestamp(None)
        .try_init();
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

struct Ctx {
    config: RunConfig,
    hash: String,
    quiet: bool,
    command: &'static str,
    outputs: Vec<PathBuf>,
}

impl Ctx {
    fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", msg.as_ref());
        }
    }

    fn seed(&self) -> u64 {
        self.config.train.seed
    }

    fn out(&self, name: &str) -> PathBuf {
        self.config.out_dir.join(name)
    }

    /// Writes pretty JSON with the provenance fields merged in.
    fn write_json(&mut self, name: &str, body: Value) -> Result<PathBuf> {
        let mut obj = serde_json::Map::new();
        obj.insert("schema_version".into(), json!(SCHEMA_VERSION));
        obj.insert("seed".into(), json!(self.seed()));
        obj.insert("config_hash".into(), json!(self.hash));
        match body {
            Value::Object(m) => obj.extend(m),
            other => {
                obj.insert("data".into(), other);
            }
        }
        let path = self.out(name);
        let text = serde_json::to_string_pretty(&Value::Object(obj))?;
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
        self.outputs.push(path.clone());
        Ok(path)
    }

    fn record(&mut self, path: PathBuf) {
        self.outputs.push(path);
    }

    fn finish(mut self) -> Result<()> {
        let outputs: Vec<String> = self.outputs.iter().map(|p| p.display().to_string()).collect();
        let config = serde_json::to_value(&self.config)?;
        let name = format!("run_{}.json", self.command);
        self.write_json(&name, json!({ "command": self.command, "config": config, "outputs": outputs }))?;
        Ok(())
    }
}

fn resolve(common: &Common) -> Result<RunConfig> {
    let mut config = RunConfig::default();
    if let Some(path) = &common.config {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        config.apply_text(&text)?;
    }
    if let Some(seed) = common.seed {
        config.set("seed", &seed.to_string())?;
    }
    if let Some(dir) = &common.out_dir {
        config.out_dir = dir.clone();
    }
    Ok(config)
}

fn data_path(config: &RunConfig) -> Result<PathBuf> {
    config
        .data
        .clone()
        .ok_or_else(|| Error::Config("a dataset is required: pass --data or set `data` in the config".into()))
}

fn execute(command: &Command) -> Result<()> {
    let common = command.common();
    let mut config = resolve(common)?;
    match command {
        Command::Generate(a) => {
            if let Some(v) = a.n_upazilas {
                config.synthetic.n_upazilas = v;
            }
            if let Some(v) = a.n_districts {
                config.synthetic.n_districts = v;
            }
            if let Some(v) = a.haor_fraction {
                config.synthetic.haor_fraction = v;
            }
            if let Some(v) = a.bias {
                config.synthetic.district_bias_strength = v;
            }
            if let Some(v) = a.noise {
                config.synthetic.noise_sd = v;
            }
            config.synthetic.validate()?;
        }
        Command::Train(a) => {
            if let Some(p) = &a.data {
                config.data = Some(p.clone());
            }
            if let Some(v) = a.lambda {
                if a.variant == VariantChoice::Baseline {
                    log::warn!("--lambda {v} is ignored for the baseline variant");
                }
                config.train.lambda = v;
            }
            if let Some(v) = a.epochs {
                config.train.epochs = v;
            }
            if let Some(v) = a.train_fraction {
                config.train_fraction = v;
            }
            data_path(&config)?;
            config.validate()?;
        }
        Command::Evaluate(EvaluateArgs { data, .. }) | Command::Rank(RankArgs { data, .. }) => {
            if let Some(p) = data {
                config.data = Some(p.clone());
            }
            data_path(&config)?;
        }
        Command::Compare(a) => {
            if let Some(p) = &a.data {
                config.data = Some(p.clone());
            }
        }
        Command::Ablate(a) => {
            if let Some(p) = &a.data {
                config.data = Some(p.clone());
            }
            if let Some(v) = &a.lambdas {
                config.set("lambdas", v)?;
            }
            if let Some(v) = &a.seeds {
                config.set("seeds", v)?;
            }
            if let Some(v) = a.epochs {
                config.train.epochs = v;
            }
            config.validate()?;
        }
    }
    fs::create_dir_all(&config.out_dir).map_err(|e| Error::io(&config.out_dir, e))?;
    let mut ctx = Ctx {
        hash: config.hash(),
        config,
        quiet: common.quiet,
        command: command.name(),
        outputs: Vec::new(),
    };
    match command {
        Command::Generate(_) => cmd_generate(&mut ctx)?,
        Command::Train(a) => cmd_train(&mut ctx, a.variant)?,
        Command::Evaluate(a) => cmd_evaluate(&mut ctx, a)?,
        Command::Rank(a) => cmd_rank(&mut ctx, a)?,
        Command::Compare(a) => cmd_compare(&mut ctx, a)?,
        Command::Ablate(_) => cmd_ablate(&mut ctx)?,
    }
    ctx.finish()
}

fn cmd_generate(ctx: &mut Ctx) -> Result<()> {
    let synth = generate_synthetic(&ctx.config.synthetic)?;
    let csv_path = ctx.out("dataset.csv");
    write_csv(&synth.dataset, &csv_path)?;
    ctx.record(csv_path.clone());
    ctx.write_json("manifest.json", serde_json::to_value(&synth.manifest)?)?;
    ctx.say(format!(
        "generated {} rows in {} districts -> {}",
        synth.dataset.len(),
        synth.dataset.n_districts(),
        csv_path.display()
    ));
    Ok(())
}

fn cmd_train(ctx: &mut Ctx, choice: VariantChoice) -> Result<()> {
    let path = data_path(&ctx.config)?;
    let full = load_csv(&path)?;
    let (train_idx, test_idx) = stratified_split_indices(&full, ctx.config.train_fraction, ctx.seed())?;
    let train_set = full.subset(&train_idx)?;
    let ids = |idx: &[usize]| idx.iter().map(|&i| full.records()[i].upazila_id.clone()).collect::<Vec<_>>();
    let train_ids = ids(&train_idx);
    ctx.write_json(
        "split.json",
        json!({ "data": path, "train_fraction": ctx.config.train_fraction, "train_ids": train_ids, "test_ids": ids(&test_idx) }),
    )?;

    let variants: &[Variant] = match choice {
        VariantChoice::Fair => &[Variant::Fair],
        VariantChoice::Baseline => &[Variant::Baseline],
        VariantChoice::Both => &[Variant::Baseline, Variant::Fair],
    };
    for &variant in variants {
        let tc = TrainConfig {
            variant,
            ..ctx.config.train.clone()
        };
        let start = Instant::now();
        let (model, log) = train(&train_set, &tc)?;
        let secs = start.elapsed().as_secs_f64();
        let metadata = json!({
            "config_hash": ctx.hash,
            "train_config": tc,
            "data": path,
            "schema_version": SCHEMA_VERSION,
        });
        let ckpt = ctx.out(&format!("checkpoint_{variant}.json"));
        save_checkpoint(&model, train_ids.clone(), metadata, &ckpt)?;
        ctx.record(ckpt.clone());
        let log_csv = ctx.out(&format!("training_log_{variant}.csv"));
        log.write_csv(&log_csv)?;
        ctx.record(log_csv);
        ctx.write_json(&format!("training_log_{variant}.json"), serde_json::to_value(&log)?)?;
        let last = log.epochs.last().expect("at least one epoch");
        ctx.say(format!(
            "trained {variant} model: {} parameters, {} epochs, final task loss {:.4}, {:.1} s -> {}",
            model.parameter_count(),
            log.epochs.len(),
            last.task_loss,
            secs,
            ckpt.display()
        ));
    }
    Ok(())
}

/// Rows of `data` selected by `split` relative to the checkpoint's training ids.
fn select_rows(data: &Dataset, train_ids: &HashSet<&str>, split: SplitChoice) -> Result<Dataset> {
    let idx: Vec<usize> = data
        .records()
        .iter()
        .enumerate()
        .filter(|(_, r)| match split {
            SplitChoice::All => true,
            SplitChoice::Train => train_ids.contains(r.upazila_id.as_str()),
            SplitChoice::Test => !train_ids.contains(r.upazila_id.as_str()),
        })
        .map(|(i, _)| i)
        .collect();
    if idx.is_empty() {
        return Err(Error::invalid(format!("no rows selected for the {split:?} split")));
    }
    data.subset(&idx)
}

/// Aligns the dataset's district labels with the model's, so checkpoints
/// trained on the same districts accept files listing them in another order.
fn align(model: &FairModel, data: Dataset) -> Result<Dataset> {
    if model.district_labels.as_slice() == data.district_labels() {
        return Ok(data);
    }
    let mut known: Vec<&String> = model.district_labels.iter().collect();
    known.sort();
    let mut have: Vec<&String> = data.district_labels().iter().collect();
    have.sort();
    if known != have {
        return Err(Error::invalid(format!(
            "checkpoint districts {:?} differ from dataset districts {:?}",
            model.district_labels,
            data.district_labels()
        )));
    }
    Dataset::with_labels(data.records().to_vec(), model.district_labels.clone())
}

fn district_rows(model: &str, report: &EvaluationReport, data: &Dataset) -> Vec<[String; 5]> {
    report
        .fairness
        .district_mae
        .iter()
        .map(|(d, mae)| {
            let region = data
                .district_index(d)
                .map(|i| data.district_region(i).as_str())
                .unwrap_or("");
            [
                model.to_string(),
                d.clone(),
                region.to_string(),
                mae.to_string(),
                report.fairness.district_mean_prediction[d].to_string(),
            ]
        })
        .collect()
}

fn cmd_evaluate(ctx: &mut Ctx, a: &EvaluateArgs) -> Result<()> {
    let data = load_csv(data_path(&ctx.config)?)?;
    let (model, ckpt) = load_checkpoint(&a.checkpoint)?;
    let data = align(&model, data)?;
    let train_ids: HashSet<&str> = ckpt.train_ids.iter().map(String::as_str).collect();
    let rows = select_rows(&data, &train_ids, a.split)?;
    let leakage = rows.records().iter().any(|r| train_ids.contains(r.upazila_id.as_str()));
    if leakage {
        log::warn!("evaluation rows include rows the checkpoint was trained on");
    }
    let report = evaluate(&model, &rows)?;
    let mut table = district_rows(&model.variant().to_string(), &report, &rows);
    let mut body = json!({
        "checkpoint": a.checkpoint,
        "variant": model.variant(),
        "split": a.split,
        "n_rows": rows.len(),
        "leakage_warning": leakage,
        "performance": report.performance,
        "fairness": report.fairness,
    });
    if let Some(bpath) = &a.baseline {
        let (base, _) = load_checkpoint(bpath)?;
        let rows = align(&base, rows.clone())?;
        let b = evaluate(&base, &rows)?;
        body["baseline"] = json!({ "checkpoint": bpath, "performance": b.performance, "fairness": b.fairness });
        body["improvement_pct"] = serde_json::to_value(improvement_table(&report.fairness, &b.fairness))?;
        table.extend(district_rows("baseline", &b, &rows));
    }
    ctx.write_json("evaluation.json", body)?;

    let csv_path = ctx.out("district_metrics.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    w.write_record(["model", "district", "region", "mae", "mean_prediction"])?;
    for r in &table {
        w.write_record(r)?;
    }
    w.flush().map_err(|e| Error::io(&csv_path, e))?;
    ctx.record(csv_path);
    ctx.say(format!(
        "{} rows: R² {:.4}, MAE {:.4}, SPD {:.4}, regional gap {:.4}{}",
        rows.len(),
        report.performance.r2,
        report.performance.mae,
        report.fairness.spd,
        report.fairness.regional_gap,
        if leakage { " (leakage warning)" } else { "" }
    ));
    Ok(())
}

fn cmd_rank(ctx: &mut Ctx, a: &RankArgs) -> Result<()> {
    let data = load_csv(data_path(&ctx.config)?)?;
    let (model, _) = load_checkpoint(&a.checkpoint)?;
    let data = align(&model, data)?;
    let entries = rank_dataset(&data, &model.predict(&data)?)?;
    let path = ctx.out(&a.output);
    write_ranking(&entries, &path)?;
    ctx.record(path.clone());
    let top: Vec<&str> = entries.iter().take(5).map(|e| e.upazila_id.as_str()).collect();
    ctx.say(format!("ranked {} upazilas, top 5: {} -> {}", entries.len(), top.join(", "), path.display()));
    Ok(())
}

fn cmd_compare(ctx: &mut Ctx, a: &CompareArgs) -> Result<()> {
    let reference = load_ranking(&a.reference)?;
    let candidate = load_ranking(&a.candidate)?;
    let poverty = match &ctx.config.data {
        Some(p) => Some(poverty_by_id(&load_csv(p)?)),
        None => None,
    };
    let report = compare_rankings_with_poverty(&reference, &candidate, poverty.as_ref())?;
    let mut body = serde_json::to_value(&report)?;
    body["reference"] = json!(a.reference);
    body["candidate"] = json!(a.candidate);
    ctx.write_json("rank_shift.json", body)?;
    let opt = |v: Option<f64>| v.map(|v| format!("{v:+.2}")).unwrap_or_else(|| "n/a".into());
    ctx.say(format!(
        "{:.1}% reranked ({:.1}% by 3+), Pearson {:.3}, Spearman {:.3}, mean shift haor {} / high-poverty {}",
        report.pct_reranked,
        report.pct_reranked_3plus,
        report.score_correlation,
        report.rank_correlation,
        opt(report.haor_mean_shift),
        opt(report.high_poverty_mean_shift)
    ));
    Ok(())
}

fn cmd_ablate(ctx: &mut Ctx) -> Result<()> {
    let result = ablate(&ctx.config)?;
    let path = ctx.out("ablation.csv");
    let f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    write_ablation_csv(&result.rows, f)?;
    ctx.record(path);

    let runs_path = ctx.out("ablation_runs.csv");
    let mut w = csv::Writer::from_path(&runs_path)?;
    w.write_record(["lambda", "seed", "r2", "mae", "spd", "regional_gap"])?;
    for r in &result.runs {
        w.write_record([
            r.lambda.to_string(),
            r.seed.to_string(),
            r.r2.to_string(),
            r.mae.to_string(),
            r.spd.to_string(),
            r.regional_gap.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(&runs_path, e))?;
    ctx.record(runs_path);

    let failures: Vec<BTreeMap<&str, Value>> = result
        .failures
        .iter()
        .map(|(l, s, e)| BTreeMap::from([("lambda", json!(l)), ("seed", json!(s)), ("error", json!(e.to_string()))]))
        .collect();
    ctx.write_json(
        "ablation.json",
        json!({ "rows": result.rows, "runs": result.runs, "failures": failures }),
    )?;
    for r in &result.rows {
        ctx.say(format!(
            "lambda {:<5} R² {:.4}  MAE {:.4}  SPD {:.4}  RFG {:.4}  ({} seeds)",
            r.lambda, r.r2, r.mae, r.spd, r.regional_gap, r.n_seeds
        ));
    }
    if let Some((l, s, e)) = result.failures.into_iter().next() {
        return Err(match e {
            Error::Numeric(m) => Error::Numeric(format!("ablation run lambda {l}, seed {s}: {m}")),
            other => Error::invalid(format!("ablation run lambda {l}, seed {s}: {other}")),
        });
    }
    Ok(())
}
