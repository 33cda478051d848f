use std::path::PathBuf;

use mfn_core::linalg::{BlockSparseMat, BlockSparsePattern};
use mfn_core::matfunc::{decay_profile, fit_log_slope, raw_for_imag, PoleSet};
use mfn_core::train::fmt17;
use serde::Serialize;

use crate::manifest::{sidecar, write_atomic, RunManifest};
use crate::{CliError, CliResult};

#[derive(Debug, Clone, clap::Args, Serialize)]
pub struct Args {
    /// Imaginary parts of the single pole, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub gamma: Vec<f64>,
    /// Chain length.
    #[arg(long, default_value_t = 64)]
    pub n: usize,
    /// Real part of the pole.
    #[arg(long, default_value_t = 0.5)]
    pub x: f64,
    /// Output CSV (`gamma,distance,magnitude`).
    #[arg(long)]
    pub out: PathBuf,
}

/// Adjacency matrix of a path on `n` nodes.
pub fn chain_adjacency(n: usize) -> BlockSparseMat {
    let p = BlockSparsePattern::chain(n, 1);
    let mut h = BlockSparseMat::zeros(p.clone());
    for (i, j) in p.upper_pairs() {
        if i != j {
            h.set_block(i, j, &[1.0]).expect("chain edge");
        }
    }
    h
}

pub fn run(args: Args) -> CliResult<()> {
    if args.n == 0 {
        return Err(CliError::Usage("--n must be positive".into()));
    }
    if let Some(g) = args.gamma.iter().find(|g| !(**g > 0.0)) {
        return Err(CliError::Usage(format!("gamma {g} must be positive")));
    }
    let mut manifest = RunManifest::new("decay", &args, None)?;
    let h = chain_adjacency(args.n);
    let y_min = args.gamma.iter().copied().fold(1e-3, f64::min) * 0.5;
    let mut csv = String::from("gamma,distance,magnitude\n");
    for &g in &args.gamma {
        let poles = PoleSet {
            a: vec![1.0],
            b: vec![0.0],
            x: vec![args.x],
            y_raw: vec![raw_for_imag(g, y_min)],
            y_min,
        };
        let prof = manifest.phase("profile", || decay_profile(&h, &poles, 0))?;
        for &(d, m) in &prof {
            csv.push_str(&format!("{},{d},{}\n", fmt17(g), fmt17(m)));
        }
        let tail = &prof[1.min(prof.len() - 1)..prof.len().min(33)];
        match fit_log_slope(tail, 1e-280) {
            Some(s) => println!("gamma {g}: fitted log-decay slope {s:.6}"),
            None => println!("gamma {g}: too few points for a slope"),
        }
    }
    write_atomic(&args.out, csv.as_bytes())?;
    manifest.artifacts.push(args.out.clone());
    manifest.write(&sidecar(&args.out))
}
