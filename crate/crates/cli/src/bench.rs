use std::path::PathBuf;
use std::time::Instant;

use clap::ValueEnum;
use mfn_core::linalg::{
    inverse_counted, ldl_factor_symbolic, order, selected_inverse, BlockSparseMat, BlockSparsePattern,
    OrderingMethod, SymbolicFactor,
};
use mfn_core::train::fmt17;
use num_complex::Complex64;
use serde::Serialize;

use crate::manifest::{sidecar, write_atomic, RunManifest};
use crate::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Pattern {
    Chain,
    /// Square grid; sizes are rounded to the nearest square.
    Grid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchBackend {
    Selected,
    Dense,
}

#[derive(Debug, Clone, clap::Args, Serialize)]
pub struct Args {
    #[arg(long, value_enum)]
    pub pattern: Pattern,
    /// Node counts, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub sizes: Vec<usize>,
    #[arg(long, value_enum, default_value = "selected")]
    pub backend: BenchBackend,
    /// Output CSV (`pattern,n,backend,ops,stored_blocks,seconds`).
    #[arg(long)]
    pub out: PathBuf,
}

fn adjacency(pattern: BlockSparsePattern) -> BlockSparseMat {
    let mut h = BlockSparseMat::zeros(pattern.clone());
    for (i, j) in pattern.upper_pairs() {
        if i != j {
            h.set_block(i, j, &[1.0]).expect("pattern edge");
        }
    }
    h
}

/// Op count, stored factor blocks and seconds of one resolvent at `z`.
fn measure(h: &BlockSparseMat, backend: BenchBackend, z: Complex64) -> CliResult<(u64, usize, f64)> {
    let t0 = Instant::now();
    match backend {
        BenchBackend::Selected => {
            let symbolic = SymbolicFactor::new(h.pattern(), order(h.pattern(), OrderingMethod::NestedDissection));
            let f = ldl_factor_symbolic(h, z, symbolic)?;
            let sel = selected_inverse(&f)?;
            let (ops, stored) = f.flops_and_peak();
            Ok((ops + sel.op_count, stored, t0.elapsed().as_secs_f64()))
        }
        BenchBackend::Dense => {
            let mut a = h.to_dense().to_complex().scale(Complex64::new(-1.0, 0.0));
            for i in 0..a.rows() {
                a[(i, i)] += z;
            }
            let (_, ops) = inverse_counted(&a)?;
            let n = h.n();
            Ok((ops, n * (n + 1) / 2, t0.elapsed().as_secs_f64()))
        }
    }
}

pub fn run(args: Args) -> CliResult<()> {
    if args.sizes.contains(&0) {
        return Err(CliError::Usage("sizes must be positive".into()));
    }
    let mut manifest = RunManifest::new("bench", &args, None)?;
    let backend_name = match args.backend {
        BenchBackend::Selected => "selected",
        BenchBackend::Dense => "dense",
    };
    let pattern_name = match args.pattern {
        Pattern::Chain => "chain",
        Pattern::Grid => "grid",
    };
    let z = Complex64::new(0.5, 1.0);
    let mut csv = String::from("pattern,n,backend,ops,stored_blocks,seconds\n");
    let mut points = Vec::new();
    for &n in &args.sizes {
        let pattern = match args.pattern {
            Pattern::Chain => BlockSparsePattern::chain(n, 1),
            Pattern::Grid => {
                let side = ((n as f64).sqrt().round() as usize).max(1);
                BlockSparsePattern::grid(side, side, 1)
            }
        };
        let h = adjacency(pattern);
        let (ops, stored, secs) = manifest.phase(&format!("n={}", h.n()), || measure(&h, args.backend, z))?;
        csv.push_str(&format!("{pattern_name},{},{backend_name},{ops},{stored},{}\n", h.n(), fmt17(secs)));
        points.push(((h.n() as f64).ln(), (ops as f64).ln()));
    }
    if points.len() >= 2 {
        let k = points.len() as f64;
        let mx = points.iter().map(|p| p.0).sum::<f64>() / k;
        let my = points.iter().map(|p| p.1).sum::<f64>() / k;
        let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
        println!("{pattern_name} {backend_name}: log-log op-count slope {:.4}", sxy / sxx);
    }
    write_atomic(&args.out, csv.as_bytes())?;
    manifest.artifacts.push(args.out.clone());
    manifest.write(&sidecar(&args.out))
}
