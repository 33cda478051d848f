use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

use super::optim::{adamw_step, clip_global_norm, global_norm, OptState, PlateauScheduler};
use crate::error::{MfnError, Result};
use crate::graph::{Dataset, Graphs, Target, Task};
use crate::linalg::RMat;
use crate::matfunc::Backend;
use crate::model::{record, save_checkpoint, GraphRef, ModelConfig, ModelParams, Prediction, PreparedGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    CrossEntropy,
    Mse,
    Mae,
}

/// Missing fields in serialized form take their [`Default`] values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub patience: usize,
    pub factor: f64,
    pub min_lr: f64,
    pub clip: f64,
    pub seed: u64,
    pub loss: LossKind,
    /// Overrides every layer's backend when set.
    #[serde(default, with = "opt_backend")]
    pub backend: Option<Backend>,
}

mod opt_backend {
    use super::Backend;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(b: &Option<Backend>, s: S) -> Result<S::Ok, S::Error> {
        match b {
            Some(b) => s.serialize_some(&b.to_string()),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Backend>, D::Error> {
        let s = Option::<String>::deserialize(d)?;
        s.map(|s| s.parse().map_err(serde::de::Error::custom)).transpose()
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 64,
            lr: 1e-3,
            weight_decay: 5e-5,
            patience: 25,
            factor: 0.5,
            min_lr: 1e-6,
            clip: 10.0,
            seed: 0,
            loss: LossKind::CrossEntropy,
            backend: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || !(self.lr >= 0.0) || !(self.clip > 0.0) {
            return Err(MfnError::Precondition(
                "epochs and batch size must be positive; lr non-negative; clip positive".into(),
            ));
        }
        if !(self.factor > 0.0 && self.factor <= 1.0) {
            return Err(MfnError::Precondition(format!("plateau factor {} outside (0, 1]", self.factor)));
        }
        Ok(())
    }
}

/// One `epoch,split,metric,value` row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub epoch: usize,
    pub split: String,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub records: Vec<MetricRecord>,
}

impl History {
    pub fn push(&mut self, epoch: usize, split: &str, metric: &str, value: f64) {
        self.records.push(MetricRecord {
            epoch,
            split: split.into(),
            metric: metric.into(),
            value,
        });
    }

    /// Values of one split/metric series in epoch order.
    pub fn series(&self, split: &str, metric: &str) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.split == split && r.metric == metric)
            .map(|r| r.value)
            .collect()
    }

    /// CSV with header `epoch,split,metric,value`; values at 17
    /// significant digits.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,split,metric,value\n");
        for r in &self.records {
            writeln!(s, "{},{},{},{}", r.epoch, r.split, r.metric, fmt17(r.value)).unwrap();
        }
        s
    }
}

/// Fixed 17-significant-digit scientific formatting.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Aggregate metrics of a model on a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub loss: f64,
    pub mae: f64,
    pub rmse: f64,
    /// RMSE of per-node errors for geometric graphs.
    pub rmse_per_atom: Option<f64>,
    pub accuracy: Option<f64>,
    pub count: usize,
}

/// Result of [`train`].
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    /// Parameters at the best monitored loss.
    pub best_params: ModelParams,
    pub best_epoch: usize,
    pub history: History,
}

pub(crate) fn graph_ref(ds: &Dataset, i: usize) -> GraphRef<'_> {
    match &ds.graphs {
        Graphs::Pure(g) => GraphRef::Pure(&g[i]),
        Graphs::Geometric(g) => GraphRef::Geometric(&g[i]),
    }
}

fn target_of(ds: &Dataset, i: usize) -> Target {
    match &ds.graphs {
        Graphs::Pure(g) => g[i].target,
        Graphs::Geometric(g) => match ds.task {
            Task::Classification { .. } => Target::Class((g[i].target > 0.0) as usize),
            Task::Regression => Target::Regression(g[i].target),
        },
    }
}

fn regression_value(ds: &Dataset, i: usize) -> f64 {
    match &ds.graphs {
        Graphs::Pure(g) => g[i].target.as_f64(),
        Graphs::Geometric(g) => g[i].target,
    }
}

/// Model config with the training backend override applied.
pub fn effective_config(model: &ModelConfig, backend: Option<Backend>) -> ModelConfig {
    let mut c = model.clone();
    if let Some(b) = backend {
        for l in &mut c.layers {
            l.backend = b;
        }
    }
    c
}

pub fn prepare_all(ds: &Dataset, config: &ModelConfig) -> Result<Vec<PreparedGraph>> {
    (0..ds.len())
        .into_par_iter()
        .map(|i| PreparedGraph::new(graph_ref(ds, i), config))
        .collect()
}

struct GraphEval {
    loss: f64,
    pred: Prediction,
    grads: Option<Vec<RMat>>,
}

fn eval_graph(
    prep: &PreparedGraph,
    ds: &Dataset,
    i: usize,
    params: &ModelParams,
    config: &ModelConfig,
    loss: LossKind,
    grad_seed: Option<f64>,
) -> Result<GraphEval> {
    let mut rec = record(prep, params, config)?;
    let l = match loss {
        LossKind::CrossEntropy => match target_of(ds, i) {
            Target::Class(c) => rec.tape.cross_entropy(rec.output, c)?,
            Target::Regression(_) => {
                return Err(MfnError::Precondition("cross-entropy needs class targets".into()))
            }
        },
        LossKind::Mse => rec.tape.squared_error(rec.output, regression_value(ds, i))?,
        LossKind::Mae => rec.tape.abs_error(rec.output, regression_value(ds, i))?,
    };
    let value = rec.tape.value(l)[(0, 0)];
    let grads = match grad_seed {
        Some(s) => Some(rec.tape.backward(l, s, &params.shapes())?),
        None => None,
    };
    Ok(GraphEval {
        loss: value,
        pred: rec.prediction(),
        grads,
    })
}

/// Loss of one graph and its gradient for every parameter.
pub fn loss_and_grad(
    graph: GraphRef<'_>,
    target: Target,
    params: &ModelParams,
    config: &ModelConfig,
    loss: LossKind,
) -> Result<(f64, Vec<RMat>)> {
    let prep = PreparedGraph::new(graph, config)?;
    let mut rec = record(&prep, params, config)?;
    let l = match (loss, target) {
        (LossKind::CrossEntropy, Target::Class(c)) => rec.tape.cross_entropy(rec.output, c)?,
        (LossKind::CrossEntropy, _) => {
            return Err(MfnError::Precondition("cross-entropy needs class targets".into()))
        }
        (LossKind::Mse, t) => rec.tape.squared_error(rec.output, t.as_f64())?,
        (LossKind::Mae, t) => rec.tape.abs_error(rec.output, t.as_f64())?,
    };
    let g = rec.tape.backward(l, 1.0, &params.shapes())?;
    Ok((rec.tape.value(l)[(0, 0)], g))
}

fn correct(pred: &Prediction, target: Target) -> Option<bool> {
    match target {
        Target::Class(c) => Some(if pred.output.len() == 1 {
            ((pred.output[0] > 0.0) as usize) == c
        } else {
            let mut best = 0;
            for (k, &v) in pred.output.iter().enumerate() {
                if v > pred.output[best] {
                    best = k;
                }
            }
            best == c
        }),
        Target::Regression(_) => None,
    }
}

fn metrics_from(ds: &Dataset, evals: &[GraphEval], nodes: &[usize]) -> Metrics {
    let n = evals.len().max(1) as f64;
    let loss = evals.iter().map(|e| e.loss).sum::<f64>() / n;
    let mut abs = 0.0;
    let mut sq = 0.0;
    let mut sq_atom = 0.0;
    let mut hits = 0usize;
    let classify = matches!(ds.task, Task::Classification { .. });
    for (i, e) in evals.iter().enumerate() {
        let d = e.pred.output[0] - regression_value(ds, i);
        abs += d.abs();
        sq += d * d;
        let per = d / nodes[i] as f64;
        sq_atom += per * per;
        if correct(&e.pred, target_of(ds, i)) == Some(true) {
            hits += 1;
        }
    }
    Metrics {
        loss,
        mae: abs / n,
        rmse: (sq / n).sqrt(),
        rmse_per_atom: matches!(ds.graphs, Graphs::Geometric(_)).then(|| (sq_atom / n).sqrt()),
        accuracy: classify.then(|| hits as f64 / n),
        count: evals.len(),
    }
}

fn evaluate_prepared(
    ds: &Dataset,
    prep: &[PreparedGraph],
    params: &ModelParams,
    config: &ModelConfig,
    loss: LossKind,
) -> Result<Metrics> {
    let evals: Vec<GraphEval> = (0..ds.len())
        .into_par_iter()
        .map(|i| eval_graph(&prep[i], ds, i, params, config, loss, None))
        .collect::<Result<_>>()?;
    let nodes: Vec<usize> = prep.iter().map(|p| p.n()).collect();
    Ok(metrics_from(ds, &evals, &nodes))
}

/// MAE, RMSE and (for classification) accuracy of `params` on `ds`.
pub fn evaluate(config: &ModelConfig, params: &ModelParams, ds: &Dataset, loss: LossKind) -> Result<Metrics> {
    let prep = prepare_all(ds, config)?;
    evaluate_prepared(ds, &prep, params, config, loss)
}

/// Per-graph predictions.
pub fn predict(config: &ModelConfig, params: &ModelParams, ds: &Dataset) -> Result<Vec<Prediction>> {
    let prep = prepare_all(ds, config)?;
    prep.par_iter()
        .map(|p| Ok(record(p, params, config)?.prediction()))
        .collect()
}

fn diagnostics(params: &ModelParams, grads: &[RMat]) -> String {
    let mut s = String::new();
    for (i, (n, p)) in params.names().iter().zip(params.values()).enumerate() {
        let g = grads.get(i).map_or(f64::NAN, |g| global_norm(std::slice::from_ref(g)));
        write!(s, "{n}: |p|={:.6e} |g|={:.6e}; ", global_norm(std::slice::from_ref(p)), g).unwrap();
    }
    s
}

/// Minibatch AdamW training. With `val` present, the plateau schedule and
/// best-parameter tracking follow validation loss; otherwise training
/// loss. `checkpoint`, when given, receives the best parameters.
pub fn train(
    ds: &Dataset,
    val: Option<&Dataset>,
    model: &ModelConfig,
    cfg: &TrainConfig,
    checkpoint: Option<&Path>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let config = effective_config(model, cfg.backend);
    config.validate()?;
    if ds.is_empty() {
        return Err(MfnError::Precondition("empty training set".into()));
    }
    let prep = prepare_all(ds, &config)?;
    let val_prep = match val {
        Some(v) => Some(prepare_all(v, &config)?),
        None => None,
    };
    let nodes: Vec<usize> = prep.iter().map(|p| p.n()).collect();
    let mut params = ModelParams::init(&config, cfg.seed)?;
    let mut state = OptState::new(&params.shapes(), cfg.lr, cfg.weight_decay);
    let mut sched = PlateauScheduler::new(cfg.factor, cfg.patience, cfg.min_lr);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x005e_ed0f_da7a);
    let mut order: Vec<usize> = (0..ds.len()).collect();
    let mut history = History::default();
    let mut best = (f64::INFINITY, params.clone(), 0usize);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut evals: Vec<Option<GraphEval>> = (0..ds.len()).map(|_| None).collect();
        for batch in order.chunks(cfg.batch_size) {
            let seed = 1.0 / batch.len() as f64;
            let results: Vec<GraphEval> = batch
                .par_iter()
                .map(|&i| eval_graph(&prep[i], ds, i, &params, &config, cfg.loss, Some(seed)))
                .collect::<Result<_>>()?;
            let mut grads: Vec<RMat> = params.shapes().iter().map(|&(r, c)| RMat::zeros(r, c)).collect();
            let mut batch_loss = 0.0;
            for r in &results {
                batch_loss += r.loss;
                for (acc, g) in grads.iter_mut().zip(r.grads.as_ref().unwrap()) {
                    for (a, b) in acc.as_mut_slice().iter_mut().zip(g.as_slice()) {
                        *a += b;
                    }
                }
            }
            let gnorm = global_norm(&grads);
            if !batch_loss.is_finite() || !gnorm.is_finite() {
                return Err(MfnError::NonFiniteLoss {
                    epoch,
                    diagnostics: diagnostics(&params, &grads),
                });
            }
            clip_global_norm(&mut grads, cfg.clip);
            adamw_step(params.values_mut(), &grads, &mut state)?;
            for (r, &i) in results.into_iter().zip(batch) {
                evals[i] = Some(GraphEval { grads: None, ..r });
            }
        }
        let evals: Vec<GraphEval> = evals.into_iter().map(|e| e.unwrap()).collect();
        let tm = metrics_from(ds, &evals, &nodes);
        history.push(epoch, "train", "loss", tm.loss);
        if let Some(a) = tm.accuracy {
            history.push(epoch, "train", "accuracy", a);
        }
        history.push(epoch, "train", "lr", state.lr);
        let monitored = match (val, &val_prep) {
            (Some(v), Some(vp)) => {
                let vm = evaluate_prepared(v, vp, &params, &config, cfg.loss)?;
                history.push(epoch, "val", "loss", vm.loss);
                history.push(epoch, "val", "mae", vm.mae);
                if let Some(a) = vm.accuracy {
                    history.push(epoch, "val", "accuracy", a);
                }
                vm.loss
            }
            _ => tm.loss,
        };
        if monitored < best.0 {
            best = (monitored, params.clone(), epoch);
            if let Some(path) = checkpoint {
                save_checkpoint(path, &config, &params)?;
            }
        }
        state.lr = sched.step(monitored, state.lr);
    }
    if let (Some(path), true) = (checkpoint, best.0 == f64::INFINITY) {
        save_checkpoint(path, &config, &params)?;
    }
    Ok(TrainOutcome {
        params,
        best_params: best.1,
        best_epoch: best.2,
        history,
    })
}
