use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{MfnError, Result};

/// Assignment of every graph in a dataset to one of `k` folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub assignments: Vec<usize>,
    /// False when stratification was requested but a class was too small.
    pub stratified: bool,
}

impl FoldPlan {
    /// `(train, test)` indices for fold `f`, both ascending.
    pub fn split(&self, f: usize) -> (Vec<usize>, Vec<usize>) {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (i, &a) in self.assignments.iter().enumerate() {
            if a == f {
                test.push(i);
            } else {
                train.push(i);
            }
        }
        (train, test)
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }
}

/// Deterministic k-fold split. Classification datasets are stratified
/// by class; if any class has fewer than `k` members a warning is logged
/// and the split falls back to an unstratified shuffle.
pub fn split_folds(ds: &Dataset, k: usize, seed: u64) -> Result<FoldPlan> {
    let n = ds.len();
    if k < 2 || n < k {
        return Err(MfnError::Precondition(format!(
            "cannot split {n} graphs into {k} folds"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = Vec::with_capacity(n);
    let mut stratified = false;
    if let Some(labels) = ds.class_labels() {
        let classes = labels.iter().copied().max().map_or(0, |m| m + 1);
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); classes];
        for (i, &c) in labels.iter().enumerate() {
            members[c].push(i);
        }
        if members.iter().any(|m| !m.is_empty() && m.len() < k) {
            log::warn!("a class has fewer than {k} members; folds are not stratified");
        } else {
            stratified = true;
            for m in &mut members {
                m.shuffle(&mut rng);
                order.extend_from_slice(m);
            }
        }
    }
    if !stratified {
        order = (0..n).collect();
        order.shuffle(&mut rng);
    }
    let mut assignments = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        assignments[i] = pos % k;
    }
    Ok(FoldPlan {
        k,
        seed,
        assignments,
        stratified,
    })
}
