//! The `transmeter` command line: pretraining source classifiers, measuring
//! transferability against a target, ranking sources, generating synthetic
//! suites and replaying recorded runs.
//!
//! Exit codes: 0 on success, 1 on an internal failure, 2 on a usage or
//! input error.

pub mod manifest;
pub mod registry;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::write_csv;
use crate::error::{Error, Result};
use crate::model::{Checkpoint, SourceModel};
use crate::synthetic::suite;
use crate::train::{GridSpec, TrainConfig, DEFAULT_ALPHAS, DEFAULT_BETAS, DEFAULT_SEEDS};
use crate::transfer::{
    ablation_config, measure_pair_detailed, rank_sources, reports_from_jsonl, reports_to_jsonl, summary_csv, Protocol,
    Ranking, TransferReport, Variant,
};
use manifest::{hash_file, unix_now, InputHash, RunManifest};
use registry::{render_registry, Registry, RegistryEntry};

pub const REGISTRY_ENV: &str = "TRANSMETER_REGISTRY";

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

pub const REPORTS_FILE: &str = "reports.jsonl";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const RANKING_FILE: &str = "ranking.txt";
pub const NOTES_FILE: &str = "NOTES.txt";
pub const REGISTRY_FILE: &str = "registry.toml";

#[derive(Debug, Parser)]
#[command(name = "transmeter", version, about = "Transferability between heterogeneous tabular datasets")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Train a source classifier and save its checkpoint.
    Pretrain(PretrainArgs),
    /// Measure the transferability of source datasets to a target.
    Measure(MeasureArgs),
    /// Rank sources from measurement reports.
    Rank(RankArgs),
    /// Write a generated dataset suite with a registry and ground-truth notes.
    Synthetic(SyntheticArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

/// Split and optimization settings shared by training commands.
#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct TrainFlags {
    /// Training fraction of each train/test split.
    #[arg(long, default_value_t = 0.7)]
    pub split: f64,
    /// Seed of the data splits and fold plans.
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
    #[arg(long, default_value_t = 500)]
    pub max_epochs: usize,
    /// Consecutive validation-loss rises that end training.
    #[arg(long, default_value_t = 10)]
    pub patience: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Rows per domain in each minibatch.
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
}

impl TrainFlags {
    fn base_config(&self) -> TrainConfig {
        TrainConfig {
            lr: self.lr,
            per_domain_batch: self.batch_size,
            max_epochs: self.max_epochs,
            patience: self.patience,
            ..TrainConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct PretrainArgs {
    #[arg(long, env = REGISTRY_ENV)]
    pub registry: PathBuf,
    /// Registry name of the dataset to train on.
    #[arg(long)]
    pub dataset: String,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Checkpoint destination; defaults to the registry entry's checkpoint path.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Directory for the run manifest [default: runs/pretrain/<dataset>].
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[command(flatten)]
    pub train: TrainFlags,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct MeasureArgs {
    #[arg(long, env = REGISTRY_ENV)]
    pub registry: PathBuf,
    #[arg(long)]
    pub target: String,
    /// Source dataset names (repeatable or comma-separated).
    #[arg(long = "source", value_delimiter = ',', required_unless_present = "all")]
    pub sources: Vec<String>,
    /// Measure every registry dataset other than the target.
    #[arg(long, conflicts_with = "sources")]
    pub all: bool,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_ALPHAS)]
    pub alpha_grid: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_BETAS)]
    pub beta_grid: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_SEEDS)]
    pub seeds: Vec<u64>,
    /// Search only flip=false instead of both label orientations.
    #[arg(long)]
    pub no_flip: bool,
    #[arg(long, default_value_t = 3)]
    pub folds: usize,
    /// One α, one β and two seeds.
    #[arg(long, conflicts_with_all = ["alpha_grid", "beta_grid", "seeds"])]
    pub fast: bool,
    /// Worker threads [default: all cores]. Results do not depend on it.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long, default_value_t = Variant::Full)]
    pub ablation: Variant,
    /// Pretrain sources that have no checkpoint instead of failing.
    #[arg(long)]
    pub pretrain_missing: bool,
    /// Seed used by --pretrain-missing.
    #[arg(long, default_value_t = 1)]
    pub pretrain_seed: u64,
    /// Record per-pair wall time in reports (makes them non-reproducible).
    #[arg(long)]
    pub record_wall_time: bool,
    #[arg(long, default_value = "runs/measure")]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub train: TrainFlags,
}

impl MeasureArgs {
    pub fn protocol(&self) -> Protocol {
        let mut grid = if self.fast {
            GridSpec::fast()
        } else {
            GridSpec {
                alphas: self.alpha_grid.clone(),
                betas: self.beta_grid.clone(),
                seeds: self.seeds.clone(),
                flips: vec![false, true],
            }
        };
        if self.no_flip {
            grid.flips = vec![false];
        }
        Protocol {
            split: self.train.split,
            folds: self.folds,
            split_seed: self.train.split_seed,
            base: ablation_config(&self.train.base_config(), self.ablation),
            grid,
            record_wall_time: self.record_wall_time,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct RankArgs {
    /// Report files, or measure output directories holding reports.jsonl.
    pub reports: Vec<PathBuf>,
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    #[arg(long, default_value = "runs/rank")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SyntheticArgs {
    #[arg(long, default_value = "ordering")]
    pub suite: String,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
    /// Write outputs here instead of the recorded location.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code. Messages go to stdout, errors to stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let argv: Vec<std::ffi::OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let argv: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match execute(cli.command, argv) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Errors in the caller's inputs map to 2; broken internal invariants to 1.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::State(_) | Error::InvalidBatch(_) => EXIT_INTERNAL,
        _ => EXIT_USAGE,
    }
}

pub fn execute(command: Command, argv: Vec<String>) -> Result<()> {
    let command = command.resolved()?;
    match command {
        Command::Pretrain(a) => cmd_pretrain(a, argv),
        Command::Measure(a) => cmd_measure(a, argv),
        Command::Rank(a) => cmd_rank(a, argv),
        Command::Synthetic(a) => cmd_synthetic(a, argv),
        Command::Replay(a) => cmd_replay(a, argv),
    }
}

fn absolute(p: &Path) -> Result<PathBuf> {
    Ok(std::path::absolute(p)?)
}

impl Command {
    /// Makes every path absolute so a recorded command is independent of the
    /// working directory.
    fn resolved(self) -> Result<Self> {
        Ok(match self {
            Command::Pretrain(mut a) => {
                a.registry = absolute(&a.registry)?;
                a.checkpoint = a.checkpoint.as_deref().map(absolute).transpose()?;
                let dir = a
                    .out_dir
                    .clone()
                    .unwrap_or_else(|| Path::new("runs").join("pretrain").join(file_stem(&a.dataset)));
                a.out_dir = Some(absolute(&dir)?);
                Command::Pretrain(a)
            }
            Command::Measure(mut a) => {
                a.registry = absolute(&a.registry)?;
                a.out_dir = absolute(&a.out_dir)?;
                Command::Measure(a)
            }
            Command::Rank(mut a) => {
                a.reports = a.reports.iter().map(|p| absolute(p)).collect::<Result<_>>()?;
                a.out_dir = absolute(&a.out_dir)?;
                Command::Rank(a)
            }
            Command::Synthetic(mut a) => {
                a.out = absolute(&a.out)?;
                Command::Synthetic(a)
            }
            Command::Replay(mut a) => {
                a.manifest = absolute(&a.manifest)?;
                a.out_dir = a.out_dir.as_deref().map(absolute).transpose()?;
                Command::Replay(a)
            }
        })
    }

    /// The same command with its outputs sent to `dir`.
    fn redirected(self, dir: &Path) -> Self {
        match self {
            Command::Pretrain(mut a) => {
                a.checkpoint = Some(dir.join(format!("{}.json", file_stem(&a.dataset))));
                a.out_dir = Some(dir.to_path_buf());
                Command::Pretrain(a)
            }
            Command::Measure(mut a) => {
                a.out_dir = dir.to_path_buf();
                Command::Measure(a)
            }
            Command::Rank(mut a) => {
                a.out_dir = dir.to_path_buf();
                Command::Rank(a)
            }
            Command::Synthetic(mut a) => {
                a.out = dir.to_path_buf();
                Command::Synthetic(a)
            }
            Command::Replay(mut a) => {
                a.out_dir = Some(dir.to_path_buf());
                Command::Replay(a)
            }
        }
    }
}

/// Dataset names as file names: anything outside `[A-Za-z0-9._-]` becomes `_`.
fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "._-".contains(c) { c } else { '_' })
        .collect()
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)
        .map_err(|e| Error::invalid(format!("cannot create output directory {}: {e}", dir.display())))
}

fn write_output(path: &Path, contents: &str, outputs: &mut Vec<PathBuf>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::invalid(format!("cannot write {}: {e}", path.display())))?;
    outputs.push(path.to_path_buf());
    Ok(())
}

fn cmd_pretrain(a: PretrainArgs, argv: Vec<String>) -> Result<()> {
    let started = unix_now();
    let registry = Registry::load(&a.registry)?;
    let entry = registry.get(&a.dataset)?;
    let csv = registry.csv_path(entry);
    let raw = registry.load_dataset(&a.dataset)?;
    let protocol = Protocol {
        split: a.train.split,
        split_seed: a.train.split_seed,
        base: a.train.base_config(),
        ..Protocol::default()
    };
    let (model, acc) = protocol.pretrain(&raw, a.seed)?;
    let ckpt_path = a.checkpoint.clone().unwrap_or_else(|| registry.checkpoint_path(entry));
    Checkpoint::from_source(&model, Some(&a.dataset), a.seed).save(&ckpt_path)?;
    println!("{}: held-out accuracy {acc:.4}", a.dataset);
    println!("checkpoint: {}", ckpt_path.display());

    let out_dir = a.out_dir.clone().expect("resolved");
    create_dir(&out_dir)?;
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").into(),
        argv,
        config: serde_json::to_value(&protocol.base)?,
        registry: Some(hash_file(registry.path())?),
        inputs: vec![hash_file(&csv)?],
        seeds: vec![a.seed, a.train.split_seed],
        started_unix: started,
        finished_unix: unix_now(),
        outputs: vec![ckpt_path],
        command: Command::Pretrain(a),
    };
    manifest.write(&out_dir)?;
    Ok(())
}

/// A source ready for measurement: its data and, when a checkpoint exists,
/// its pretrained classifier.
struct PreparedSource {
    name: String,
    raw: crate::data::Dataset,
    model: Option<SourceModel>,
}

fn cmd_measure(a: MeasureArgs, argv: Vec<String>) -> Result<()> {
    let started = unix_now();
    let registry = Registry::load(&a.registry)?;
    let protocol = a.protocol();
    protocol.base.validate()?;
    if protocol.folds < 2 {
        return Err(Error::invalid("--folds must be at least 2"));
    }
    let names: Vec<String> = if a.all {
        registry
            .names()
            .into_iter()
            .filter(|n| *n != a.target)
            .map(str::to_owned)
            .collect()
    } else {
        a.sources.clone()
    };
    if names.is_empty() {
        return Err(Error::invalid("no sources to measure: pass --source NAME or --all"));
    }
    for (i, n) in names.iter().enumerate() {
        if names[..i].contains(n) {
            return Err(Error::invalid(format!("source `{n}` is listed twice")));
        }
    }

    let target_entry = registry.get(&a.target)?;
    let mut inputs = vec![hash_file(&registry.csv_path(target_entry))?];
    let target_raw = registry.load_dataset(&a.target)?;
    let mut sources = Vec::with_capacity(names.len());
    for name in &names {
        let entry = registry.get(name)?;
        inputs.push(hash_file(&registry.csv_path(entry))?);
        let ckpt = registry.checkpoint_path(entry);
        let model = if ckpt.is_file() {
            inputs.push(hash_file(&ckpt)?);
            Some(Checkpoint::load(&ckpt)?.to_source()?)
        } else if a.pretrain_missing {
            None
        } else {
            return Err(Error::invalid(format!(
                "source `{name}` has no checkpoint at {}; run `transmeter pretrain --dataset {name}` first or pass --pretrain-missing",
                ckpt.display()
            )));
        };
        sources.push(PreparedSource {
            name: name.clone(),
            raw: registry.load_dataset(name)?,
            model,
        });
    }

    let target = protocol.prepare_target(&target_raw)?;
    let baseline = protocol.baseline(&target)?;
    println!("{}: baseline accuracy {:.4} (seed {})", a.target, baseline.acc_0, baseline.seed);

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = a.jobs {
        if j == 0 {
            return Err(Error::invalid("--jobs must be at least 1"));
        }
        pool = pool.num_threads(j);
    }
    let pool = pool
        .build()
        .map_err(|e| Error::State(format!("thread pool: {e}")))?;
    let results = pool.install(|| {
        sources
            .par_iter()
            .map(|s| {
                let (model, pretrained) = match &s.model {
                    Some(m) => (m.clone(), false),
                    None => (protocol.pretrain(&s.raw, a.pretrain_seed)?.0, true),
                };
                let outcome = measure_pair_detailed(&s.raw, &model, &target_raw, &target, &baseline, &protocol)?;
                Ok((outcome, pretrained.then_some(model)))
            })
            .collect::<Result<Vec<_>>>()
    })?;

    create_dir(&a.out_dir)?;
    let mut outputs = Vec::new();
    let reports: Vec<TransferReport> = results.iter().map(|(o, _)| o.report.clone()).collect();
    write_output(&a.out_dir.join(REPORTS_FILE), &reports_to_jsonl(&reports)?, &mut outputs)?;
    write_output(&a.out_dir.join(SUMMARY_FILE), &summary_csv(&reports)?, &mut outputs)?;
    for ((o, pretrained), s) in results.iter().zip(&sources) {
        let stem = file_stem(&s.name);
        let model_path = a.out_dir.join("models").join(format!("{stem}.json"));
        Checkpoint::from_transmeter(&o.model, o.report.flip_used, o.report.chosen_config.seed).save(&model_path)?;
        outputs.push(model_path);
        let hist_dir = a.out_dir.join("histories");
        create_dir(&hist_dir)?;
        write_output(
            &hist_dir.join(format!("{stem}.json")),
            &(serde_json::to_string_pretty(&o.history)? + "\n"),
            &mut outputs,
        )?;
        if let Some(m) = pretrained {
            let p = a.out_dir.join("pretrained").join(format!("{stem}.json"));
            Checkpoint::from_source(m, Some(&s.name), a.pretrain_seed).save(&p)?;
            outputs.push(p);
        }
        let r = &o.report;
        println!(
            "{} -> {}: acc_T {:.4}  transferability {:.4}  flip {}  alpha {}  beta {}  seed {}  stopped at epoch {}",
            r.source,
            r.target,
            r.acc_t,
            r.transferability,
            r.flip_used,
            r.chosen_config.alpha,
            r.chosen_config.beta,
            r.chosen_config.seed,
            r.stopped_epoch
        );
    }
    let mut seeds = protocol.grid.seeds.clone();
    seeds.push(protocol.split_seed);
    if a.pretrain_missing {
        seeds.push(a.pretrain_seed);
    }
    let out_dir = a.out_dir.clone();
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").into(),
        argv,
        config: serde_json::to_value(&protocol)?,
        registry: Some(hash_file(registry.path())?),
        inputs,
        seeds,
        started_unix: started,
        finished_unix: unix_now(),
        outputs,
        command: Command::Measure(a),
    };
    manifest.write(&out_dir)?;
    println!("reports: {}", out_dir.join(REPORTS_FILE).display());
    Ok(())
}

fn report_file(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join(REPORTS_FILE)
    } else {
        p.to_path_buf()
    }
}

/// Plain-text ranking table.
pub fn render_ranking(r: &Ranking) -> String {
    let width = r.entries.iter().map(|e| e.source.len()).max().unwrap_or(0).max(6);
    let mut out = format!("{:>4}  {:<width$}  {:>16}  selected\n", "rank", "source", "transferability");
    for (i, e) in r.entries.iter().enumerate() {
        let mark = if r.selected.contains(&e.source) { "*" } else { "" };
        out.push_str(&format!("{:>4}  {:<width$}  {:>16.4}  {mark}\n", i + 1, e.source, e.score));
    }
    out.push_str(&format!("top {}: {}\n", r.k, r.selected.join(", ")));
    if r.expanded() {
        out.push_str(&format!(
            "note: a tie at rank {} expanded the selection to {} sources\n",
            r.k,
            r.selected.len()
        ));
    }
    out
}

fn cmd_rank(a: RankArgs, argv: Vec<String>) -> Result<()> {
    let started = unix_now();
    let mut reports = Vec::new();
    let mut inputs = Vec::new();
    for p in &a.reports {
        let file = report_file(p);
        let rec = hash_file(&file)?;
        reports.extend(reports_from_jsonl(&fs::read_to_string(&file)?)?);
        inputs.push(rec);
    }
    if reports.is_empty() {
        return Err(Error::invalid("no reports to rank"));
    }
    if let Some(other) = reports.iter().find(|r| r.target != reports[0].target) {
        return Err(Error::invalid(format!(
            "reports mix targets `{}` and `{}`; rank one target at a time",
            reports[0].target, other.target
        )));
    }
    let ranking = rank_sources(&reports, a.k)?;
    let table = render_ranking(&ranking);
    print!("{table}");
    create_dir(&a.out_dir)?;
    let mut outputs = Vec::new();
    write_output(&a.out_dir.join(RANKING_FILE), &table, &mut outputs)?;
    let out_dir = a.out_dir.clone();
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").into(),
        argv,
        config: serde_json::json!({ "k": a.k }),
        registry: None,
        inputs,
        seeds: vec![],
        started_unix: started,
        finished_unix: unix_now(),
        outputs,
        command: Command::Rank(a),
    };
    manifest.write(&out_dir)?;
    Ok(())
}

fn cmd_synthetic(a: SyntheticArgs, argv: Vec<String>) -> Result<()> {
    let started = unix_now();
    let s = suite(&a.suite, a.seed)?;
    create_dir(&a.out)?;
    let mut outputs = Vec::new();
    let mut entries = Vec::new();
    for ds in std::iter::once(&s.target).chain(&s.sources) {
        let file = format!("{}.csv", file_stem(ds.name()));
        let path = a.out.join(&file);
        write_csv(ds, &path).map_err(|e| Error::invalid(format!("cannot write {}: {e}", path.display())))?;
        outputs.push(path);
        entries.push(RegistryEntry {
            name: ds.name().to_owned(),
            csv: file.into(),
            label_column: "label".into(),
            positive_label: "1".into(),
            checkpoint: None,
        });
    }
    write_output(&a.out.join(NOTES_FILE), &s.notes, &mut outputs)?;
    write_output(&a.out.join(REGISTRY_FILE), &render_registry(&entries), &mut outputs)?;
    println!(
        "wrote suite `{}` (seed {}): target + {} sources in {}",
        s.name,
        a.seed,
        s.sources.len(),
        a.out.display()
    );
    println!("expected best source: {}", s.expected_best);
    let out = a.out.clone();
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").into(),
        argv,
        config: serde_json::json!({ "suite": a.suite }),
        registry: None,
        inputs: Vec::<InputHash>::new(),
        seeds: vec![a.seed],
        started_unix: started,
        finished_unix: unix_now(),
        outputs,
        command: Command::Synthetic(a),
    };
    manifest.write(&out)?;
    Ok(())
}

fn cmd_replay(a: ReplayArgs, argv: Vec<String>) -> Result<()> {
    let recorded = RunManifest::load(&a.manifest)?;
    if matches!(recorded.command, Command::Replay(_)) {
        return Err(Error::invalid("manifest records a replay; replay the original manifest instead"));
    }
    recorded.verify_inputs()?;
    let command = match &a.out_dir {
        Some(dir) => recorded.command.clone().redirected(dir),
        None => recorded.command.clone(),
    };
    println!("replaying {}", a.manifest.display());
    execute(command, argv)
}
