//! Subcommands of the `snapclass` binary.
//!
//! Every command is a plain function returning [`Result`]; the binary maps
//! `Ok` to exit status 0 and any error to status 1.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augment::{augment_stream, AugmentConfig};
use crate::ensemble::{evaluate, SnapshotSet};
use crate::error::{Error, Result};
use crate::image::LabeledImage;
use crate::metrics::{records_from_confusion, report, Averaging, ConfusionMatrix, MetricsReport};
use crate::optim::{lr_at, snapshot_epochs, ScheduleConfig};
use crate::pnm;
use crate::trainer::{
    derive_seed, load_image_dir, snapshot, synth_dataset, train_snapshot, train_two_phase, write_image_dir,
    MlpModel, ModelShape, Snapshot, SynthConfig, TrainConfig, TrainData, TrainMode, STREAM_DATA, STREAM_INIT,
};

#[derive(Debug, Parser)]
#[command(name = "snapclass", version, about = "Augmentation, snapshot-ensemble training and evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write augmented copies of one PGM/PPM image.
    Augment(AugmentArgs),
    /// Print the cyclic learning-rate schedule as CSV.
    LrTrace(LrTraceArgs),
    /// Train a classifier and save its snapshots.
    Train(TrainArgs),
    /// Evaluate a snapshot ensemble on an image directory.
    Evaluate(EvaluateArgs),
    /// Compute metrics from a confusion-matrix CSV.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    /// Input image (binary PGM or PPM).
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// AugmentConfig JSON; the default ranges are used when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub count: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct LrTraceArgs {
    /// ScheduleConfig JSON.
    #[arg(long)]
    pub config: PathBuf,
    /// Directory to also write `lr_trace.csv` into.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// RunConfig JSON, or a `manifest.json` from an earlier run.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the seed in the config.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Directory of `*.bin` snapshot files.
    #[arg(long)]
    pub snapshots: PathBuf,
    /// Image directory with one subdirectory per class.
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Confusion-matrix CSV.
    pub confusion: PathBuf,
    #[arg(long, default_value = "micro")]
    pub avg: Averaging,
    /// Directory to write `metrics.json` into.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl clap::builder::ValueParserFactory for Averaging {
    type Parser = clap::builder::ValueParser;

    fn value_parser() -> Self::Parser {
        clap::builder::ValueParser::new(|s: &str| s.parse::<Averaging>().map_err(|e| e.to_string()))
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let mut stdout = std::io::stdout().lock();
    let out = &mut stdout as &mut dyn std::io::Write;
    match cli.command {
        Command::Augment(a) => {
            let written = cmd_augment(&a.input, &a.out, a.config.as_deref(), a.count, a.seed)?;
            for p in written {
                writeln!(out, "{}", p.display()).ok();
            }
        }
        Command::LrTrace(a) => {
            let csv = cmd_lr_trace(&a.config, a.out.as_deref())?;
            write!(out, "{csv}").ok();
        }
        Command::Train(a) => {
            let summary = cmd_train(&a.config, a.out.as_deref(), a.seed)?;
            write!(out, "{summary}").ok();
        }
        Command::Evaluate(a) => {
            let rep = cmd_evaluate(&a.snapshots, &a.dataset, &a.out)?;
            write!(out, "{}", format_report(&rep, Averaging::Micro)).ok();
        }
        Command::Report(a) => {
            let rep = cmd_report(&a.confusion, a.out.as_deref())?;
            write!(out, "{}", format_report(&rep, a.avg)).ok();
        }
    }
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes `count` augmented copies of `input` as `<stem>_aug<k>.<ext>`,
/// `k = 0..count`. Copy `k` uses the draw for stream epoch `k`.
pub fn cmd_augment(
    input: &Path,
    out_dir: &Path,
    config: Option<&Path>,
    count: u32,
    seed: u64,
) -> Result<Vec<PathBuf>> {
    let image = pnm::read(input)?;
    let cfg = match config {
        Some(p) => read_json::<AugmentConfig>(p)?,
        None => AugmentConfig::default(),
    };
    let source = [LabeledImage { image, label: 0 }];
    let stream = augment_stream(&source, &cfg, seed)?;
    let stem = input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".into());
    create_dir(out_dir)?;
    let mut written = Vec::with_capacity(count as usize);
    for k in 0..count {
        let item = stream.item_at(u64::from(k));
        let path = out_dir.join(format!("{stem}_aug{k}.{}", pnm::extension(&item.image)));
        pnm::write(&path, &item.image)?;
        if pnm::read(&path)? != item.image {
            return Err(Error::InvalidState(format!("{} did not read back identically", path.display())));
        }
        written.push(path);
    }
    Ok(written)
}

/// `epoch,lr,snapshot` CSV for epochs `1..=T`.
pub fn lr_trace_csv(cfg: &ScheduleConfig) -> Result<String> {
    cfg.validate()?;
    let snaps = snapshot_epochs(cfg);
    let mut csv = String::from("epoch,lr,snapshot\n");
    for t in 1..=cfg.total_epochs {
        let flag = u8::from(snaps.contains(&t));
        csv.push_str(&format!("{t},{},{flag}\n", lr_at(cfg, t)?));
    }
    Ok(csv)
}

pub fn cmd_lr_trace(config: &Path, out_dir: Option<&Path>) -> Result<String> {
    let cfg: ScheduleConfig = read_json(config)?;
    let csv = lr_trace_csv(&cfg)?;
    if let Some(dir) = out_dir {
        create_dir(dir)?;
        write_file(&dir.join("lr_trace.csv"), &csv)?;
    }
    Ok(csv)
}

/// Synthetic dataset parameters; the generator seed comes from the run seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSource {
    pub classes: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub image_size: usize,
}

impl Default for SyntheticSource {
    fn default() -> Self {
        let d = SynthConfig::default();
        Self {
            classes: d.classes,
            train_per_class: d.train_per_class,
            test_per_class: d.test_per_class,
            image_size: d.image_size,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    Synthetic(SyntheticSource),
    /// Class-subdirectory image trees for each split.
    Directory { train: PathBuf, test: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Width of the ReLU hidden layer; 0 gives a linear softmax classifier.
    pub hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { hidden: 64 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunTrainConfig {
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    pub procedure: TrainMode,
}

fn default_batch_size() -> usize {
    16
}

/// Everything needed to reproduce a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub dataset: DatasetSource,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub augment: AugmentConfig,
    pub train: RunTrainConfig,
}

impl RunConfig {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.train.batch_size,
            seed: self.seed,
            procedure: self.train.procedure,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.augment.validate()?;
        self.train_config().validate()?;
        if let DatasetSource::Directory { train, test } = &self.dataset {
            for p in [train, test] {
                if !p.is_dir() {
                    return Err(Error::invalid(format!("dataset directory {} does not exist", p.display())));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactHash {
    /// Path relative to the run directory, `/`-separated.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: RunConfig,
    pub seed: u64,
    pub created_unix: u64,
    pub artifacts: Vec<ArtifactHash>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .collect();
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_files(root, &p, out)?;
        } else {
            let rel = p.strip_prefix(root).expect("walked from root");
            let parts: Vec<String> = rel.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect();
            out.push(parts.join("/"));
        }
    }
    Ok(())
}

fn hash_artifacts(run_dir: &Path, rel_paths: &[String]) -> Result<Vec<ArtifactHash>> {
    rel_paths
        .iter()
        .map(|rel| {
            Ok(ArtifactHash {
                path: rel.clone(),
                sha256: sha256_file(&run_dir.join(rel))?,
            })
        })
        .collect()
}

/// Rehashes every artifact listed in `<run_dir>/manifest.json`; returns the
/// paths whose content no longer matches (empty when the run verifies).
pub fn verify_manifest(run_dir: &Path) -> Result<Vec<String>> {
    let manifest: RunManifest = read_json(&run_dir.join(MANIFEST_FILE))?;
    let mut bad = Vec::new();
    for a in &manifest.artifacts {
        let path = run_dir.join(&a.path);
        match sha256_file(&path) {
            Ok(h) if h == a.sha256 => {}
            _ => bad.push(a.path.clone()),
        }
    }
    Ok(bad)
}

/// Accepts a bare RunConfig or a previous run's manifest.
pub fn load_run_config(path: &Path) -> Result<RunConfig> {
    let value: serde_json::Value = read_json(path)?;
    let is_manifest = value.get("artifacts").is_some() && value.get("config").is_some();
    let cfg = if is_manifest {
        serde_json::from_value::<RunManifest>(value).map(|m| m.config)
    } else {
        serde_json::from_value::<RunConfig>(value)
    };
    cfg.map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))
}

struct LoadedData {
    labels: Vec<String>,
    train: Vec<LabeledImage>,
    test: Vec<LabeledImage>,
}

fn load_dataset(cfg: &RunConfig) -> Result<LoadedData> {
    match &cfg.dataset {
        DatasetSource::Synthetic(s) => {
            let ds = synth_dataset(&SynthConfig {
                classes: s.classes,
                train_per_class: s.train_per_class,
                test_per_class: s.test_per_class,
                image_size: s.image_size,
                seed: derive_seed(cfg.seed, STREAM_DATA),
            })?;
            Ok(LoadedData {
                labels: ds.labels,
                train: ds.train,
                test: ds.test,
            })
        }
        DatasetSource::Directory { train, test } => {
            let (labels, train_items) = load_image_dir(train)?;
            let (test_labels, test_items) = load_image_dir(test)?;
            if labels != test_labels {
                return Err(Error::invalid("train and test directories have different class sets"));
            }
            Ok(LoadedData {
                labels,
                train: train_items,
                test: test_items,
            })
        }
    }
}

fn snapshot_name(epoch: u32) -> String {
    format!("snapshot_e{epoch:03}.bin")
}

/// Trains per the run config and writes, under the run directory:
/// `snapshots/*.bin`, `loss_trace.csv`, `dataset/test/` (synthetic runs
/// only) and `manifest.json`. Returns a human-readable summary.
pub fn cmd_train(config: &Path, out: Option<&Path>, seed: Option<u64>) -> Result<String> {
    let mut cfg = load_run_config(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(o) = out {
        cfg.output_dir = Some(o.to_path_buf());
    }
    let run_dir = cfg
        .output_dir
        .clone()
        .ok_or_else(|| Error::invalid("no output directory: set output_dir or pass --out"))?;
    cfg.validate()?;
    let data = load_dataset(&cfg)?;
    let first = &data
        .train
        .first()
        .ok_or_else(|| Error::invalid("training split is empty"))?
        .image;
    let inputs = first.height() * first.width() * first.channels();
    let classes = data.labels.len();
    let shape = if cfg.model.hidden == 0 {
        ModelShape::linear(inputs, classes)
    } else {
        ModelShape::one_hidden(inputs, cfg.model.hidden, classes)
    };
    let mut model = MlpModel::new(&shape, derive_seed(cfg.seed, STREAM_INIT))?;
    let train_cfg = cfg.train_config();
    let split = TrainData {
        train: &data.train,
        test: &data.test,
    };
    let (set, trace) = match train_cfg.procedure {
        TrainMode::TwoPhase(_) => {
            let trace = train_two_phase(&mut model, split, &cfg.augment, &train_cfg)?;
            let last = trace.epochs.last().expect("at least one epoch");
            let set = SnapshotSet::new(
                model.shape(),
                vec![Snapshot {
                    epoch: last.epoch,
                    params: model.params(),
                    train_loss: last.train_loss,
                }],
            )?;
            (set, trace)
        }
        TrainMode::Snapshot(_) => train_snapshot(&mut model, split, &cfg.augment, &train_cfg)?,
    };

    let snap_dir = run_dir.join("snapshots");
    if snap_dir.exists() {
        fs::remove_dir_all(&snap_dir).map_err(|e| Error::io(&snap_dir, e))?;
    }
    create_dir(&snap_dir)?;
    let mut artifacts = Vec::new();
    for s in set.snapshots() {
        let name = snapshot_name(s.epoch);
        snapshot::write(snap_dir.join(&name), set.shape(), cfg.seed, s)?;
        artifacts.push(format!("snapshots/{name}"));
    }
    write_file(&run_dir.join("loss_trace.csv"), trace.to_csv())?;
    artifacts.push("loss_trace.csv".into());
    if matches!(cfg.dataset, DatasetSource::Synthetic(_)) {
        let test_dir = run_dir.join("dataset").join("test");
        if test_dir.exists() {
            fs::remove_dir_all(&test_dir).map_err(|e| Error::io(&test_dir, e))?;
        }
        write_image_dir(&test_dir, &data.labels, &data.test)?;
        let mut files = Vec::new();
        collect_files(&run_dir, &test_dir, &mut files)?;
        artifacts.extend(files);
    }
    artifacts.sort();

    let manifest = RunManifest {
        seed: cfg.seed,
        created_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        artifacts: hash_artifacts(&run_dir, &artifacts)?,
        config: cfg,
    };
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    write_file(&run_dir.join(MANIFEST_FILE), json)?;
    let bad = verify_manifest(&run_dir)?;
    if !bad.is_empty() {
        return Err(Error::InvalidState(format!("artifacts failed verification: {}", bad.join(", "))));
    }

    let mut summary = String::new();
    for e in &trace.epochs {
        summary.push_str(&format!(
            "epoch {:>3}  lr {:.6}  train_loss {:.4}  test_loss {:.4}\n",
            e.epoch, e.lr, e.train_loss, e.test_loss
        ));
    }
    summary.push_str(&format!(
        "wrote {} snapshot(s) to {}\n",
        set.len(),
        snap_dir.display()
    ));
    Ok(summary)
}

/// Evaluates the ensemble in `snapshots_dir` on `dataset`, writing
/// `confusion.csv` and `metrics.json` into `out_dir`.
pub fn cmd_evaluate(snapshots_dir: &Path, dataset: &Path, out_dir: &Path) -> Result<MetricsReport> {
    let set = SnapshotSet::read_dir(snapshots_dir)?;
    let (labels, items) = load_image_dir(dataset)?;
    if labels.len() != set.shape().num_classes() {
        return Err(Error::invalid(format!(
            "dataset has {} classes but the snapshots predict {}",
            labels.len(),
            set.shape().num_classes()
        )));
    }
    let eval = evaluate(&set, &items)?;
    let cm = ConfusionMatrix::new(labels, eval.confusion.counts().to_vec())?;
    let rep = report(&cm, Some(&eval.records))?;
    create_dir(out_dir)?;
    let csv_path = out_dir.join("confusion.csv");
    cm.write_csv(&csv_path)?;
    let json_path = out_dir.join("metrics.json");
    write_file(&json_path, rep.to_json())?;
    if ConfusionMatrix::read_csv(&csv_path)? != cm {
        return Err(Error::InvalidState("confusion.csv did not read back identically".into()));
    }
    let text = fs::read_to_string(&json_path).map_err(|e| Error::io(&json_path, e))?;
    MetricsReport::from_json(&text)?;
    Ok(rep)
}

/// Full report for a confusion CSV. Per-sample records are rebuilt from the
/// counts, so the samples average is always present.
pub fn cmd_report(confusion: &Path, out_dir: Option<&Path>) -> Result<MetricsReport> {
    let cm = ConfusionMatrix::read_csv(confusion)?;
    let records = records_from_confusion(&cm);
    let rep = report(&cm, Some(&records))?;
    if let Some(dir) = out_dir {
        create_dir(dir)?;
        write_file(&dir.join("metrics.json"), rep.to_json())?;
    }
    Ok(rep)
}

/// Plain-text table: per-label rows, the selected average, accuracy and MCC.
pub fn format_report(rep: &MetricsReport, avg: Averaging) -> String {
    let width = rep
        .per_label
        .iter()
        .map(|m| m.label.len())
        .chain([8])
        .max()
        .unwrap_or(8);
    let mut s = format!(
        "{:<width$}  {:>9}  {:>9}  {:>9}  {:>7}\n",
        "label", "precision", "recall", "f1", "support"
    );
    for m in &rep.per_label {
        s.push_str(&format!(
            "{:<width$}  {:>9.4}  {:>9.4}  {:>9.4}  {:>7}\n",
            m.label, m.precision, m.recall, m.f1, m.support
        ));
    }
    match rep.averaged(avg) {
        Some(p) => s.push_str(&format!(
            "{:<width$}  {:>9.4}  {:>9.4}  {:>9.4}\n",
            avg.to_string(),
            p.precision,
            p.recall,
            p.f1
        )),
        None => s.push_str(&format!("{avg}: unavailable without per-sample records\n")),
    }
    s.push_str(&format!("accuracy {:.4}\n", rep.accuracy));
    if rep.flags.mcc_undefined {
        s.push_str("mcc undefined (reported as 0)\n");
    } else {
        s.push_str(&format!("mcc {:.4}\n", rep.mcc));
    }
    if !rep.flags.zero_division.is_empty() {
        s.push_str(&format!("zero division for: {}\n", rep.flags.zero_division.join(", ")));
    }
    s
}
