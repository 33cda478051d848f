//! Dataset loading for the commands: TU directories and xyz files.

use std::collections::BTreeMap;
use std::path::Path;

use clap::ValueEnum;
use mfn_core::graph::{
    build_radius_graph, load_tu_dataset, read_xyz_frames, Dataset, Graphs, LabelMaps, Target, Task,
};
use serde::{Deserialize, Serialize};

use crate::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Classification,
    Regression,
}

/// Loads a TU directory or an xyz file. TU graphs default to
/// classification; `Regression` uses the original graph label values as
/// targets. xyz frames become radius graphs with `cutoff`; `Classification`
/// labels a frame by the sign of its energy.
pub fn load_dataset(path: &Path, task: Option<TaskKind>, cutoff: f64) -> CliResult<Dataset> {
    if path.is_dir() {
        let mut ds = load_tu_dataset(path)?;
        if task == Some(TaskKind::Regression) {
            let Graphs::Pure(graphs) = &mut ds.graphs else { unreachable!() };
            for g in graphs.iter_mut() {
                let class = match g.target {
                    Target::Class(c) => c,
                    Target::Regression(_) => continue,
                };
                g.target = Target::Regression(ds.label_maps.graph[class] as f64);
            }
            ds.task = Task::Regression;
        }
        return Ok(ds);
    }
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("xyz")) {
        let frames = read_xyz_frames(path)?;
        // atomic numbers to dense species ids
        let mut ids: BTreeMap<usize, usize> = BTreeMap::new();
        for f in &frames {
            for &z in &f.species {
                let next = ids.len();
                ids.entry(z).or_insert(next);
            }
        }
        let dense: BTreeMap<usize, usize> = ids.keys().enumerate().map(|(i, &z)| (z, i)).collect();
        let mut graphs = Vec::with_capacity(frames.len());
        for (k, f) in frames.iter().enumerate() {
            let energy = f
                .energy
                .ok_or_else(|| CliError::Usage(format!("frame {k} of {} has no energy", path.display())))?;
            let species: Vec<usize> = f.species.iter().map(|z| dense[z]).collect();
            graphs.push(build_radius_graph(&f.positions, &species, cutoff, energy)?);
        }
        let task = match task {
            Some(TaskKind::Classification) => Task::Classification { classes: 2 },
            _ => Task::Regression,
        };
        let name = path.file_stem().map_or("xyz".into(), |s| s.to_string_lossy().into_owned());
        let mut ds = Dataset::new(name, task, Graphs::Geometric(graphs))?;
        ds.label_maps = LabelMaps {
            node: dense.keys().map(|&z| z as i64).collect(),
            ..LabelMaps::default()
        };
        return Ok(ds);
    }
    if !path.exists() {
        return Err(CliError::Usage(format!("{} does not exist", path.display())));
    }
    Err(CliError::Usage(format!(
        "{} is neither a TU directory nor an .xyz file",
        path.display()
    )))
}

/// Node and edge vocabulary sizes of a pure dataset.
pub fn vocab(ds: &Dataset) -> (usize, usize) {
    let Graphs::Pure(gs) = &ds.graphs else {
        return (ds.label_maps.node.len().max(1), 0);
    };
    let nv = gs
        .iter()
        .flat_map(|g| g.node_labels().iter().copied())
        .max()
        .map_or(1, |m| m + 1)
        .max(ds.label_maps.node.len());
    let ev = gs
        .iter()
        .flat_map(|g| g.edge_labels().unwrap_or(&[]).iter().copied())
        .max()
        .map_or(1, |m| m + 1)
        .max(ds.label_maps.edge.len());
    (nv, ev)
}
