//! TU benchmark file layout (`DS_A.txt`, `DS_graph_indicator.txt`, ...).
//!
//! All ids in the files are 1-based. Values may be separated by commas,
//! whitespace or both.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{Dataset, Graph, Graphs, LabelMaps, Target, Task};
use crate::error::{MfnError, Result};

fn dataset_name(dir: &Path) -> Result<String> {
    let entries = fs::read_dir(dir)
        .map_err(|e| MfnError::Format(format!("cannot read {}: {e}", dir.display())))?;
    let mut names: Vec<String> = entries
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().into_string().ok())
        .filter_map(|f| f.strip_suffix("_A.txt").map(str::to_owned))
        .collect();
    names.sort();
    names
        .into_iter()
        .next()
        .ok_or_else(|| MfnError::Format(format!("no *_A.txt file in {}", dir.display())))
}

fn file_path(dir: &Path, name: &str, suffix: &str) -> PathBuf {
    dir.join(format!("{name}_{suffix}.txt"))
}

fn read_rows(path: &Path, mandatory: bool) -> Result<Option<Vec<Vec<f64>>>> {
    if !path.exists() {
        if mandatory {
            return Err(MfnError::Format(format!("missing file {}", path.display())));
        }
        return Ok(None);
    }
    let text = fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let vals: std::result::Result<Vec<f64>, _> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(str::parse::<f64>)
            .collect();
        let vals = vals.map_err(|e| {
            MfnError::Format(format!("{}:{}: {e}", path.display(), lineno + 1))
        })?;
        rows.push(vals);
    }
    Ok(Some(rows))
}

fn first_column(rows: Vec<Vec<f64>>, path: &str) -> Result<Vec<f64>> {
    rows.into_iter()
        .map(|r| {
            r.first()
                .copied()
                .ok_or_else(|| MfnError::Format(format!("empty row in {path}")))
        })
        .collect()
}

fn as_int(v: f64, what: &str) -> Result<i64> {
    if v.fract() != 0.0 || !v.is_finite() {
        return Err(MfnError::Format(format!("{what}: expected an integer, got {v}")));
    }
    Ok(v as i64)
}

/// Sorted alphabet of distinct values and the dense id of each input.
fn dense_remap(values: &[i64]) -> (Vec<i64>, Vec<usize>) {
    let alphabet: Vec<i64> = values.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let ids = values
        .iter()
        .map(|v| alphabet.binary_search(v).expect("value in alphabet"))
        .collect();
    (alphabet, ids)
}

/// Loads a TU-format dataset from `dir`.
///
/// Nodes are reindexed per graph from 0 in file order, undirected edges
/// are deduplicated, and categorical labels are remapped to a dense
/// ascending `[0, K)` alphabet recorded in [`Dataset::label_maps`].
/// Integer graph labels yield a classification task; anything else is
/// treated as regression.
pub fn load_tu_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let name = dataset_name(dir)?;
    let a_path = file_path(dir, &name, "A");
    let ind_path = file_path(dir, &name, "graph_indicator");
    let gl_path = file_path(dir, &name, "graph_labels");
    let adjacency = read_rows(&a_path, true)?.unwrap_or_default();
    let indicator = first_column(read_rows(&ind_path, true)?.unwrap_or_default(), "graph_indicator")?;
    let graph_labels = first_column(read_rows(&gl_path, true)?.unwrap_or_default(), "graph_labels")?;
    let node_labels = read_rows(&file_path(dir, &name, "node_labels"), false)?
        .map(|r| first_column(r, "node_labels"))
        .transpose()?;
    let edge_labels = read_rows(&file_path(dir, &name, "edge_labels"), false)?
        .map(|r| first_column(r, "edge_labels"))
        .transpose()?;

    let n_graphs = graph_labels.len();
    let total_nodes = indicator.len();
    let mut graph_of = Vec::with_capacity(total_nodes);
    for &g in &indicator {
        let g = as_int(g, "graph_indicator")?;
        if g < 1 || g as usize > n_graphs {
            return Err(MfnError::Consistency(format!(
                "graph id {g} outside 1..={n_graphs}"
            )));
        }
        graph_of.push(g as usize - 1);
    }
    // local index of each global node within its graph
    let mut local = vec![0usize; total_nodes];
    let mut sizes = vec![0usize; n_graphs];
    for (v, &g) in graph_of.iter().enumerate() {
        local[v] = sizes[g];
        sizes[g] += 1;
    }

    let node_ints: Vec<i64> = match &node_labels {
        Some(l) => {
            if l.len() != total_nodes {
                return Err(MfnError::Consistency(format!(
                    "{} node labels for {total_nodes} nodes",
                    l.len()
                )));
            }
            l.iter().map(|&v| as_int(v, "node_labels")).collect::<Result<_>>()?
        }
        None => vec![0; total_nodes],
    };
    let (node_alphabet, node_ids) = dense_remap(&node_ints);

    let edge_ints: Option<Vec<i64>> = match &edge_labels {
        Some(l) => {
            if l.len() != adjacency.len() {
                return Err(MfnError::Consistency(format!(
                    "{} edge labels for {} adjacency rows",
                    l.len(),
                    adjacency.len()
                )));
            }
            Some(l.iter().map(|&v| as_int(v, "edge_labels")).collect::<Result<_>>()?)
        }
        None => None,
    };
    let (edge_alphabet, edge_ids) = match &edge_ints {
        Some(e) => {
            let (a, ids) = dense_remap(e);
            (a, Some(ids))
        }
        None => (Vec::new(), None),
    };

    let mut per_graph_edges: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n_graphs];
    let mut per_graph_edge_labels: Vec<Vec<usize>> = vec![Vec::new(); n_graphs];
    for (row_idx, row) in adjacency.iter().enumerate() {
        if row.len() < 2 {
            return Err(MfnError::Format(format!("adjacency row {} malformed", row_idx + 1)));
        }
        let u = as_int(row[0], "A")?;
        let v = as_int(row[1], "A")?;
        if u < 1 || v < 1 || u as usize > total_nodes || v as usize > total_nodes {
            return Err(MfnError::Consistency(format!(
                "adjacency row {} references node outside 1..={total_nodes}",
                row_idx + 1
            )));
        }
        let (u, v) = (u as usize - 1, v as usize - 1);
        if graph_of[u] != graph_of[v] {
            return Err(MfnError::Consistency(format!(
                "edge ({}, {}) joins graphs {} and {}",
                u + 1,
                v + 1,
                graph_of[u] + 1,
                graph_of[v] + 1
            )));
        }
        if u == v {
            log::warn!("dropping self-loop on node {}", u + 1);
            continue;
        }
        let g = graph_of[u];
        per_graph_edges[g].push((local[u], local[v]));
        if let Some(ids) = &edge_ids {
            per_graph_edge_labels[g].push(ids[row_idx]);
        }
    }

    let integral = graph_labels.iter().all(|v| v.fract() == 0.0);
    let (task, targets, graph_alphabet) = if integral {
        let ints: Vec<i64> = graph_labels.iter().map(|&v| v as i64).collect();
        let (alphabet, ids) = dense_remap(&ints);
        (
            Task::Classification {
                classes: alphabet.len(),
            },
            ids.into_iter().map(Target::Class).collect::<Vec<_>>(),
            alphabet,
        )
    } else {
        (
            Task::Regression,
            graph_labels.iter().map(|&v| Target::Regression(v)).collect(),
            Vec::new(),
        )
    };

    let mut node_labels_per_graph: Vec<Vec<usize>> =
        sizes.iter().map(|&s| Vec::with_capacity(s)).collect();
    for v in 0..total_nodes {
        node_labels_per_graph[graph_of[v]].push(node_ids[v]);
    }

    let mut graphs = Vec::with_capacity(n_graphs);
    for g in 0..n_graphs {
        let labels = edge_ids.as_ref().map(|_| std::mem::take(&mut per_graph_edge_labels[g]));
        graphs.push(Graph::new(
            sizes[g],
            &per_graph_edges[g],
            std::mem::take(&mut node_labels_per_graph[g]),
            labels,
            targets[g],
        )?);
    }
    let mut ds = Dataset::new(name, task, Graphs::Pure(graphs))?;
    ds.label_maps = LabelMaps {
        graph: graph_alphabet,
        node: if node_labels.is_some() { node_alphabet } else { Vec::new() },
        edge: edge_alphabet,
    };
    Ok(ds)
}

/// Writes a pure-graph dataset in TU layout, mapping dense ids back
/// through the recorded label maps. Each undirected edge is written in
/// both directions.
pub fn write_tu_dataset(ds: &Dataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    let Graphs::Pure(graphs) = &ds.graphs else {
        return Err(MfnError::Unsupported("TU export of geometric datasets".into()));
    };
    fs::create_dir_all(dir)?;
    let name = &ds.name;
    let open = |suffix: &str| -> Result<std::io::BufWriter<fs::File>> {
        Ok(std::io::BufWriter::new(fs::File::create(file_path(dir, name, suffix))?))
    };
    let mut a = open("A")?;
    let mut ind = open("graph_indicator")?;
    let mut gl = open("graph_labels")?;
    let mut nl = open("node_labels")?;
    let has_edge_labels = graphs.iter().any(|g| g.edge_labels().is_some());
    let mut el = if has_edge_labels { Some(open("edge_labels")?) } else { None };
    let map = |table: &[i64], id: usize| -> i64 { table.get(id).copied().unwrap_or(id as i64) };

    let mut offset = 0usize;
    for (gi, g) in graphs.iter().enumerate() {
        for v in 0..g.n() {
            writeln!(ind, "{}", gi + 1)?;
            writeln!(nl, "{}", map(&ds.label_maps.node, g.node_labels()[v]))?;
        }
        for (k, &(i, j)) in g.edges().iter().enumerate() {
            for (u, v) in [(i, j), (j, i)] {
                writeln!(a, "{}, {}", offset + u + 1, offset + v + 1)?;
                if let Some(el) = el.as_mut() {
                    let lab = g.edge_labels().map_or(0, |l| l[k]);
                    writeln!(el, "{}", map(&ds.label_maps.edge, lab))?;
                }
            }
        }
        match g.target {
            Target::Class(c) => writeln!(gl, "{}", map(&ds.label_maps.graph, c))?,
            Target::Regression(v) => writeln!(gl, "{v:.17e}")?,
        }
        offset += g.n();
    }
    for w in [&mut a, &mut ind, &mut gl, &mut nl] {
        w.flush()?;
    }
    if let Some(mut el) = el {
        el.flush()?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, suffix: &str, body: &str) {
        fs::write(file_path(dir, name, suffix), body).unwrap();
    }

    fn fixture(dir: &Path) {
        write(dir, "FX", "A", "1,2\n2,1\n3,4\n4,3\n4, 5\n5 4\n");
        write(dir, "FX", "graph_indicator", "1\n1\n2\n2\n2\n");
        write(dir, "FX", "graph_labels", "1\n-1\n");
    }

    #[test]
    fn two_graph_fixture() {
        let tmp = tempfile::tempdir().unwrap();
        fixture(tmp.path());
        let ds = load_tu_dataset(tmp.path()).unwrap();
        let Graphs::Pure(g) = &ds.graphs else { panic!() };
        assert_eq!(g.len(), 2);
        assert_eq!((g[0].n(), g[0].edges().len()), (2, 1));
        assert_eq!((g[1].n(), g[1].edges().len()), (3, 2));
        assert_eq!(g[1].edges(), &[(0, 1), (1, 2)]);
        // dense remap: -1 -> 0, 1 -> 1
        assert_eq!(g[0].target, Target::Class(1));
        assert_eq!(g[1].target, Target::Class(0));
        assert_eq!(ds.label_maps.graph, vec![-1, 1]);
        assert_eq!(ds.task, Task::Classification { classes: 2 });
    }

    #[test]
    fn missing_mandatory_file() {
        let tmp = tempfile::tempdir().unwrap();
        write(tmp.path(), "FX", "A", "1,2\n");
        write(tmp.path(), "FX", "graph_indicator", "1\n1\n");
        assert!(matches!(load_tu_dataset(tmp.path()), Err(MfnError::Format(_))));
    }

    #[test]
    fn cross_graph_edge() {
        let tmp = tempfile::tempdir().unwrap();
        write(tmp.path(), "FX", "A", "1,3\n");
        write(tmp.path(), "FX", "graph_indicator", "1\n1\n2\n");
        write(tmp.path(), "FX", "graph_labels", "0\n1\n");
        assert!(matches!(load_tu_dataset(tmp.path()), Err(MfnError::Consistency(_))));
    }

    #[test]
    fn round_trip() {
        let tmp = tempfile::tempdir().unwrap();
        fixture(tmp.path());
        write(tmp.path(), "FX", "node_labels", "3\n7\n3\n3\n9\n");
        write(tmp.path(), "FX", "edge_labels", "0\n0\n2\n2\n1\n1\n");
        let ds = load_tu_dataset(tmp.path()).unwrap();
        let out = tempfile::tempdir().unwrap();
        write_tu_dataset(&ds, out.path()).unwrap();
        let back = load_tu_dataset(out.path()).unwrap();
        assert_eq!(ds, back);
    }
}
