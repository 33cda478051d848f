use std::path::PathBuf;

use mfn_core::graph::{Dataset, Graphs};
use mfn_core::linalg::eigh;
use mfn_core::model::{load_checkpoint, record, GraphRef, PreparedGraph};
use mfn_core::train::fmt17;
use serde::Serialize;

use crate::data::{load_dataset, TaskKind};
use crate::manifest::{sidecar, write_atomic, RunManifest};
use crate::CliResult;

#[derive(Debug, Clone, clap::Args, Serialize)]
pub struct Args {
    /// TU dataset directory or `.xyz` file.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, value_enum)]
    pub task: Option<TaskKind>,
    /// Output CSV (`graph,layer,channel,stage,index,eigenvalue`).
    #[arg(long)]
    pub out: PathBuf,
}

fn graph_ref(ds: &Dataset, i: usize) -> GraphRef<'_> {
    match &ds.graphs {
        Graphs::Pure(g) => GraphRef::Pure(&g[i]),
        Graphs::Geometric(g) => GraphRef::Geometric(&g[i]),
    }
}

pub fn run(args: Args) -> CliResult<()> {
    let mut manifest = RunManifest::new("spectrum", &args, None)?;
    let (config, params) = load_checkpoint(&args.checkpoint)?;
    let ds = load_dataset(&args.data, args.task, config.cutoff)?;
    let mut csv = String::from("graph,layer,channel,stage,index,eigenvalue\n");
    manifest.phase("spectra", || -> CliResult<()> {
        for gi in 0..ds.len() {
            let prep = PreparedGraph::new(graph_ref(&ds, gi), &config)?;
            let rec = record(&prep, &params, &config)?;
            for (raw, normalized) in rec.operator_stacks()? {
                for c in 0..raw.channels() {
                    for (stage, stack) in [("raw", &raw), ("normalized", &normalized)] {
                        let ev = eigh(&stack.dense(c))?.values;
                        for (k, v) in ev.iter().enumerate() {
                            csv.push_str(&format!("{gi},{},{c},{stage},{k},{}\n", stack.layer, fmt17(*v)));
                        }
                    }
                }
            }
        }
        Ok(())
    })?;
    write_atomic(&args.out, csv.as_bytes())?;
    manifest.artifacts.push(args.out.clone());
    manifest.write(&sidecar(&args.out))
}
