//! Invariant suites on seeded random instances.

use std::path::PathBuf;

use clap::ValueEnum;
use mfn_core::graph::{build_radius_graph, GeometricGraph, Target};
use mfn_core::linalg::{eigh, BlockSparseMat, BlockSparsePattern, OrderingMethod, RMat};
use mfn_core::matfunc::{
    eval_resolvent_dense, eval_resolvent_selected, eval_spectral, raw_for_imag, Backend, PoleSet,
};
use mfn_core::model::{
    record, rotation_from_uniform, wigner_block, GraphRef, ModelConfig, ModelParams, PreparedGraph,
};
use mfn_core::operator::{normalize, NormMode, OperatorStack, SlotLayout};
use mfn_core::train::{loss_and_grad, LossKind};
use mfn_core::MfnError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::manifest::{write_atomic, RunManifest};
use crate::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Equivariance,
    Gradients,
    Backends,
    Normalize,
}

#[derive(Debug, clap::Args)]
pub struct Args {
    #[arg(long, value_enum)]
    pub suite: Suite,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Force every pole of the backends suite onto the real axis.
    #[arg(long)]
    pub corrupt_pole: bool,
    /// Directory for the manifest and any failing case.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

struct Measure {
    name: &'static str,
    value: f64,
    tol: f64,
}

/// Outcome of a suite: residuals, and the first offending case.
#[derive(Default)]
struct Report {
    measures: Vec<Measure>,
    case: Option<Value>,
    error: Option<String>,
}

impl Report {
    fn measure(&mut self, name: &'static str, value: f64, tol: f64, case: impl FnOnce() -> Value) {
        if !(value <= tol) && self.case.is_none() {
            self.case = Some(case());
        }
        match self.measures.iter_mut().find(|m| m.name == name) {
            Some(m) => m.value = m.value.max(value),
            None => self.measures.push(Measure { name, value, tol }),
        }
    }

    fn abort(&mut self, e: MfnError, case: Value) {
        self.error = Some(e.to_string());
        self.case = Some(case);
    }

    fn passed(&self) -> bool {
        self.error.is_none() && self.measures.iter().all(|m| m.value <= m.tol)
    }
}

fn random_cloud(rng: &mut ChaCha8Rng, n: usize, species: usize, cutoff: f64) -> GeometricGraph {
    loop {
        let scale = 0.45 * (n as f64).cbrt() * cutoff;
        let pos: Vec<[f64; 3]> = (0..n)
            .map(|_| [0, 1, 2].map(|_| rng.gen_range(-scale..scale)))
            .collect();
        let sp: Vec<usize> = (0..n).map(|_| rng.gen_range(0..species)).collect();
        if let Ok(g) = build_radius_graph(&pos, &sp, cutoff, rng.gen_range(-1.0..1.0)) {
            if !g.edges().is_empty() {
                return g;
            }
        }
    }
}

fn perturbed_params(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> ModelParams {
    let mut p = ModelParams::init(cfg, rng.gen()).expect("valid config");
    let flat: Vec<f64> = p.flatten().iter().map(|v| v + 0.05 * rng.gen_range(-1.0..1.0)).collect();
    p.set_flat(&flat).expect("same length");
    p
}

fn random_poles(rng: &mut ChaCha8Rng, pairs: usize) -> PoleSet {
    PoleSet {
        a: (0..pairs).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        b: (0..pairs).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        x: (0..pairs).map(|_| rng.gen_range(-2.0..2.0)).collect(),
        y_raw: (0..pairs).map(|_| raw_for_imag(rng.gen_range(0.2..1.5), 1e-3)).collect(),
        y_min: 1e-3,
    }
}

fn random_operator(rng: &mut ChaCha8Rng, n: usize, m: usize) -> BlockSparseMat {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if j == i + 1 || rng.gen_bool(0.2) {
                edges.push((i, j));
            }
        }
    }
    let pattern = BlockSparsePattern::from_edges(n, m, &edges).expect("in range");
    let mut h = BlockSparseMat::zeros(pattern.clone());
    for i in 0..n {
        for &j in pattern.row(i).iter().filter(|&&j| j >= i) {
            let mut b: Vec<f64> = (0..m * m).map(|_| rng.gen_range(-1.0..1.0)).collect();
            if i == j {
                for r in 0..m {
                    for c in 0..r {
                        b[r * m + c] = b[c * m + r];
                    }
                }
            }
            h.set_block(i, j, &b).expect("in pattern");
        }
    }
    h
}

fn layer_poles(params: &ModelParams, cfg: &ModelConfig, t: usize) -> PoleSet {
    let v = params.get(&format!("layer{t}.poles")).expect("matrix-function layer");
    PoleSet::from_vec(v.as_slice(), cfg.y_min).expect("pole vector")
}

/// Operators and their matrix functions commute with rotations; scalar
/// predictions are rotation and translation invariant.
fn equivariance(seed: u64) -> Report {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = Report::default();
    let cfg = ModelConfig::geometric(3, 2.0, 4, &[true, true], Backend::Spectral);
    let params = perturbed_params(&cfg, &mut rng);
    let graphs: Vec<GeometricGraph> = (0..4).map(|k| random_cloud(&mut rng, 5 + k, 3, 2.0)).collect();
    let run = |g: &GeometricGraph| -> mfn_core::Result<(f64, Vec<(OperatorStack, OperatorStack)>)> {
        let prep = PreparedGraph::new(GraphRef::Geometric(g), &cfg)?;
        let rec = record(&prep, &params, &cfg)?;
        Ok((rec.prediction().output[0], rec.operator_stacks()?))
    };
    for k in 0..20 {
        let g = &graphs[k % graphs.len()];
        let r = rotation_from_uniform(rng.gen());
        let t = [0, 1, 2].map(|_| rng.gen_range(-5.0..5.0));
        let moved = g.transformed(&r, t);
        let case = || json!({ "graph": g, "rotation": r, "translation": t });
        let ((y, ops), (yr, ops_r)) = match run(g).and_then(|a| Ok((a, run(&moved)?))) {
            Ok(v) => v,
            Err(e) => {
                rep.abort(e, case());
                return rep;
            }
        };
        rep.measure("prediction", (y - yr).abs(), 1e-9, case);
        let d = wigner_block(&r, 1).expect("rotation");
        let n = g.n();
        let rho = RMat::from_fn(4 * n, 4 * n, |a, b| if a / 4 == b / 4 { d[(a % 4, b % 4)] } else { 0.0 });
        for ((_, hn), (_, hr)) in ops.iter().zip(&ops_r) {
            let poles = layer_poles(&params, &cfg, hn.layer);
            for c in 0..hn.channels() {
                let (h0, h1) = (hn.dense(c), hr.dense(c));
                let expect = rho.matmul(&h0).matmul(&rho.transpose());
                rep.measure("operator", h1.max_abs_diff(&expect), 1e-9, case);
                let f0 = eval_spectral(&hn.channel(c), &poles).and_then(|f| {
                    let f1 = eval_spectral(&hr.channel(c), &poles)?;
                    Ok((f.full.unwrap(), f1.full.unwrap()))
                });
                match f0 {
                    Ok((f0, f1)) => {
                        let expect = rho.matmul(&f0).matmul(&rho.transpose());
                        rep.measure("matrix function", f1.max_abs_diff(&expect), 1e-9, case);
                    }
                    Err(e) => {
                        rep.abort(e, case());
                        return rep;
                    }
                }
            }
        }
    }
    rep
}

/// Central differences over every parameter of a 2-layer geometric model.
fn gradients(seed: u64) -> Report {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = Report::default();
    let cfg = ModelConfig::geometric(3, 2.0, 4, &[true, true], Backend::Spectral);
    let params = perturbed_params(&cfg, &mut rng);
    let g = random_cloud(&mut rng, 4, 3, 2.0);
    let target = Target::Regression(0.3);
    let graph = GraphRef::Geometric(&g);
    let case = |k: usize| json!({ "graph": &g, "config": &cfg, "parameters": params.flatten(), "coordinate": k });
    let grads = match loss_and_grad(graph, target, &params, &cfg, LossKind::Mse) {
        Ok((_, g)) => g,
        Err(e) => {
            rep.abort(e, case(usize::MAX));
            return rep;
        }
    };
    let analytic: Vec<f64> = grads.iter().flat_map(|g| g.as_slice().to_vec()).collect();
    let base = params.flatten();
    let mut p = params.clone();
    let h = 1e-5;
    for k in 0..base.len() {
        let mut eval = |x: f64| {
            let mut v = base.clone();
            v[k] = x;
            p.set_flat(&v).expect("same length");
            loss_and_grad(graph, target, &p, &cfg, LossKind::Mse).map(|r| r.0)
        };
        let fd = match (eval(base[k] + h), eval(base[k] - h)) {
            (Ok(a), Ok(b)) => (a - b) / (2.0 * h),
            (Err(e), _) | (_, Err(e)) => {
                rep.abort(e, case(k));
                return rep;
            }
        };
        let a = analytic[k];
        let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-3);
        rep.measure("relative gradient error", rel, 1e-6, || case(k));
    }
    rep
}

/// Spectral, dense resolvent and selected inversion evaluations agree.
fn backends(seed: u64, corrupt: bool) -> Report {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = Report::default();
    for k in 0..50 {
        let n = rng.gen_range(2..=16);
        let m = rng.gen_range(1..=4);
        let mut h = random_operator(&mut rng, n, m);
        let mut poles = random_poles(&mut rng, 8);
        if corrupt {
            // path Laplacian: eigenvalue 0 is exact, and so is the pole
            h = path_laplacian(6);
            poles = PoleSet::corrupted_real_axis(&[0.0]);
        }
        let case = || json!({ "instance": k, "operator": h.to_text(), "poles": &poles });
        let evals = eval_spectral(&h, &poles).and_then(|s| {
            let d = eval_resolvent_dense(&h, &poles)?;
            let sel = eval_resolvent_selected(&h, &poles, OrderingMethod::NestedDissection)?;
            Ok((s, d, sel))
        });
        let evals = if corrupt {
            // the dense path is the reference that must detect the singularity
            eval_resolvent_dense(&h, &poles).and(evals)
        } else {
            evals
        };
        match evals {
            Ok((s, d, sel)) => {
                rep.measure(
                    "spectral vs dense",
                    s.full.unwrap().max_abs_diff(d.full.as_ref().unwrap()),
                    1e-10,
                    case,
                );
                rep.measure(
                    "dense vs selected (in pattern)",
                    d.blocks.to_dense().max_abs_diff(&sel.blocks.to_dense()),
                    1e-9,
                    case,
                );
            }
            Err(e) => {
                let c = case();
                rep.abort(e, c);
                return rep;
            }
        }
    }
    rep
}

fn path_laplacian(n: usize) -> BlockSparseMat {
    let edges: Vec<(usize, usize)> = (1..n).map(|i| (i - 1, i)).collect();
    let mut h = BlockSparseMat::zeros(BlockSparsePattern::from_edges(n, 1, &edges).expect("in range"));
    for i in 0..n {
        let deg = if i == 0 || i == n - 1 { 1.0 } else { 2.0 };
        h.set_block(i, i, &[deg]).expect("diagonal");
    }
    for &(i, j) in &edges {
        h.set_block(i, j, &[-1.0]).expect("edge");
    }
    h
}

/// Normalized spectra have mean 0 and sample variance 1.
fn normalize_suite(seed: u64) -> Report {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = Report::default();
    for k in 0..20 {
        let n = rng.gen_range(3..=12);
        let m = if rng.gen_bool(0.5) { 1 } else { 4 };
        let h = random_operator(&mut rng, n, m);
        let edges: Vec<(usize, usize)> =
            h.pattern().upper_pairs().into_iter().filter(|(i, j)| i != j).collect();
        let layout = SlotLayout::new(n, m, &edges).expect("canonical edges");
        let mut dense = h.to_dense().scale(2.0);
        let shift = rng.gen_range(-3.0..3.0);
        for d in 0..n * m {
            dense[(d, d)] += shift;
        }
        let col = layout.gather_dense(&dense);
        let values = RMat::from_fn(col.len(), 1, |r, _| col[r]);
        let stack = OperatorStack::new(layout, 0, values).expect("rows match");
        let case = || json!({ "instance": k, "operator": h.to_text(), "scale": 2.0, "shift": shift });
        let out = match normalize(&[stack], NormMode::Layer) {
            Ok((out, _)) => out,
            Err(e) => {
                rep.abort(e, case());
                return rep;
            }
        };
        let ev = eigh(&out[0].dense(0)).expect("symmetric").values;
        let kf = ev.len() as f64;
        let mean = ev.iter().sum::<f64>() / kf;
        let var = ev.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (kf - 1.0);
        rep.measure("eigenvalue mean", mean.abs(), 1e-10, case);
        rep.measure("sample variance - 1", (var - 1.0).abs(), 2e-6, case);
    }
    rep
}

pub fn run(args: Args) -> CliResult<()> {
    if args.corrupt_pole && args.suite != Suite::Backends {
        return Err(CliError::Usage("--corrupt-pole applies to the backends suite".into()));
    }
    let config = json!({ "suite": args.suite, "seed": args.seed, "corrupt_pole": args.corrupt_pole });
    let mut manifest = RunManifest::new("check", &config, Some(args.seed))?;
    let rep = manifest.phase("suite", || match args.suite {
        Suite::Equivariance => equivariance(args.seed),
        Suite::Gradients => gradients(args.seed),
        Suite::Backends => backends(args.seed, args.corrupt_pole),
        Suite::Normalize => normalize_suite(args.seed),
    });
    for m in &rep.measures {
        let status = if m.value <= m.tol { "ok" } else { "FAIL" };
        println!("{:<32} max residual {:.3e} (tolerance {:.0e}) {status}", m.name, m.value, m.tol);
    }
    if let Some(e) = &rep.error {
        println!("error: {e}");
    }
    std::fs::create_dir_all(&args.out)?;
    let suite_name = serde_json::to_value(args.suite)?.as_str().unwrap_or("suite").to_string();
    if !rep.passed() {
        let path = args.out.join(format!("check-{suite_name}-failure.json"));
        let body = json!({ "suite": args.suite, "seed": args.seed, "error": rep.error, "case": rep.case });
        write_atomic(&path, serde_json::to_string_pretty(&body)?.as_bytes())?;
        manifest.artifacts.push(path.clone());
        manifest.write(&args.out.join(format!("check-{suite_name}.manifest.json")))?;
        return Err(CliError::Check(format!(
            "{suite_name} suite failed; case written to {}",
            path.display()
        )));
    }
    manifest.write(&args.out.join(format!("check-{suite_name}.manifest.json")))
}
