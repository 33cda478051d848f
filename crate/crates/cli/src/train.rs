use std::path::PathBuf;

use mfn_core::graph::{split_folds, Dataset, Graphs, Task};
use mfn_core::matfunc::Backend;
use mfn_core::model::{ModelConfig, ModelKind};
use mfn_core::train::{train, LossKind, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::data::{load_dataset, vocab, TaskKind};
use crate::manifest::{write_atomic, RunManifest};
use crate::{CliError, CliResult};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// TU dataset directory or `.xyz` file.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub task: Option<TaskKind>,
    /// JSON run configuration; flags below override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// `spectral`, `dense_resolvent` or `selected[:ordering]`.
    #[arg(long)]
    pub backend: Option<String>,
}

/// Shape of a default model when the configuration gives none.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Preset {
    pub hidden: Option<usize>,
    pub layers: Option<usize>,
    /// Leading layers carrying a matrix function.
    pub mfn_layers: Option<usize>,
    /// Operator channels (pure models; geometric models use `hidden`).
    pub channels: Option<usize>,
    pub poles: Option<usize>,
}

/// Run configuration file.
///
/// ```json
/// {
///   "model": null,
///   "preset": { "hidden": 16, "layers": 3, "mfn_layers": 2, "channels": 4, "poles": 4 },
///   "train": { "epochs": 150, "lr": 0.003, "batch_size": 32 },
///   "cutoff": 3.0,
///   "validation_folds": null
/// }
/// ```
///
/// `model` is a complete model configuration and takes precedence over
/// `preset`. `train` fields default individually. `cutoff` builds the
/// radius graphs of xyz input. With `validation_folds = k`, fold 0 of a
/// seeded k-fold split is held out for validation and best-checkpoint
/// selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: Option<ModelConfig>,
    pub preset: Preset,
    pub train: TrainConfig,
    pub cutoff: f64,
    pub validation_folds: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: None,
            preset: Preset::default(),
            train: TrainConfig::default(),
            cutoff: 3.0,
            validation_folds: None,
        }
    }
}

fn default_model(ds: &Dataset, p: &Preset, cutoff: f64) -> ModelConfig {
    match &ds.graphs {
        Graphs::Pure(_) => {
            let (nv, ev) = vocab(ds);
            let outputs = match ds.task {
                Task::Classification { classes } => classes,
                Task::Regression => 1,
            };
            ModelConfig::pure(
                nv,
                ev,
                outputs,
                p.hidden.unwrap_or(16),
                p.layers.unwrap_or(3),
                p.mfn_layers.unwrap_or(2),
                p.channels.unwrap_or(4),
                p.poles.unwrap_or(4),
            )
        }
        Graphs::Geometric(_) => {
            let layers = p.layers.unwrap_or(2);
            let mfn: Vec<bool> = (0..layers).map(|t| t < p.mfn_layers.unwrap_or(layers)).collect();
            let mut cfg = ModelConfig::geometric(
                ds.label_maps.node.len().max(1),
                cutoff,
                p.hidden.unwrap_or(16),
                &mfn,
                Backend::Spectral,
            );
            if let Some(poles) = p.poles {
                cfg.layers.iter_mut().for_each(|l| l.poles = poles);
            }
            cfg
        }
    }
}

pub fn load_config(path: Option<&PathBuf>) -> CliResult<RunConfig> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", p.display())))
        }
    }
}

/// Resolved configuration as recorded in the output directory.
#[derive(Debug, Serialize)]
struct Resolved<'a> {
    data: &'a PathBuf,
    task: Option<TaskKind>,
    model: &'a ModelConfig,
    train: &'a TrainConfig,
    validation_folds: Option<usize>,
}

pub fn run(args: Args) -> CliResult<()> {
    let mut rc = load_config(args.config.as_ref())?;
    if let Some(s) = args.seed {
        rc.train.seed = s;
    }
    if let Some(e) = args.epochs {
        rc.train.epochs = e;
    }
    if let Some(lr) = args.lr {
        rc.train.lr = lr;
    }
    if let Some(b) = args.batch_size {
        rc.train.batch_size = b;
    }
    if let Some(b) = &args.backend {
        rc.train.backend = Some(b.parse().map_err(|e| CliError::Usage(format!("{e}")))?);
    }
    let ds = load_dataset(&args.data, args.task, rc.cutoff)?;
    if ds.is_empty() {
        return Err(CliError::Usage(format!("{} holds no graphs", args.data.display())));
    }
    let model = rc.model.clone().unwrap_or_else(|| default_model(&ds, &rc.preset, rc.cutoff));
    // cross-entropy needs class logits; fall back to the regression loss
    // of the model kind
    if rc.train.loss == LossKind::CrossEntropy && (ds.task == Task::Regression || model.outputs == 1) {
        rc.train.loss = match model.kind {
            ModelKind::Pure => LossKind::Mae,
            ModelKind::Geometric => LossKind::Mse,
        };
    }
    model.validate()?;
    rc.train.validate()?;

    let (train_ds, val_ds) = match rc.validation_folds {
        None => (ds.clone(), None),
        Some(k) => {
            let plan = split_folds(&ds, k, rc.train.seed)?;
            let (tr, va) = plan.split(0);
            (ds.subset(&tr), Some(ds.subset(&va)))
        }
    };

    let resolved = Resolved {
        data: &args.data,
        task: args.task,
        model: &model,
        train: &rc.train,
        validation_folds: rc.validation_folds,
    };
    let mut manifest = RunManifest::new("train", &resolved, Some(rc.train.seed))?;
    std::fs::create_dir_all(&args.out)?;
    let checkpoint = args.out.join("checkpoint.mfn");
    let outcome = manifest.phase("train", || {
        train(&train_ds, val_ds.as_ref(), &model, &rc.train, Some(&checkpoint))
    })?;

    let metrics = args.out.join("metrics.csv");
    let config_path = args.out.join("config.json");
    manifest.phase("write", || -> CliResult<()> {
        write_atomic(&metrics, outcome.history.to_csv().as_bytes())?;
        write_atomic(&config_path, serde_json::to_string_pretty(&resolved)?.as_bytes())?;
        Ok(())
    })?;
    let last = |split: &str, metric: &str| outcome.history.series(split, metric).last().copied();
    println!(
        "trained {} graphs for {} epochs; final train loss {:.6e}{}; best epoch {}",
        train_ds.len(),
        rc.train.epochs,
        last("train", "loss").unwrap_or(f64::NAN),
        last("train", "accuracy").map_or(String::new(), |a| format!(", accuracy {a:.4}")),
        outcome.best_epoch
    );
    manifest.artifacts = vec![checkpoint, metrics, config_path];
    manifest.write(&args.out.join("manifest.json"))
}
