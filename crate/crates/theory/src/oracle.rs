//! Exhaustive search over set partitions: the independent optimum for small
//! K-finite instances. Kept deliberately separate from the iterative solver
//! so the two can cross-check each other.

use bae_core::linalg::{self, Matrix, Vector};

use crate::error::TheoryError;
use crate::solver::PartitionPolicy;
use crate::utility::{FeatureSet, UtilityFunction};

const MAX_ORACLE_SAMPLES: usize = 10;
const MAX_ORACLE_CELLS: usize = 4;

/// Exact maximizer of sum_k p_k W(mean of block k) over all partitions of
/// the sample rows into at most K non-empty blocks. Enforced limits:
/// n <= 10, K <= 4.
pub fn brute_force_oracle(
    w: &UtilityFunction,
    sample: &Matrix,
    k: usize,
) -> Result<PartitionPolicy, TheoryError> {
    let n = sample.rows();
    if n == 0 {
        return Err(TheoryError::EmptySample);
    }
    if n > MAX_ORACLE_SAMPLES || k == 0 || k > MAX_ORACLE_CELLS {
        return Err(TheoryError::Invalid(format!(
            "oracle limits are n <= {MAX_ORACLE_SAMPLES} and 1 <= K <= {MAX_ORACLE_CELLS}, got n = {n}, K = {k}"
        )));
    }
    if sample.cols() != w.dim() {
        return Err(TheoryError::DimensionMismatch {
            expected: w.dim(),
            got: sample.cols(),
        });
    }

    let mut best_obj = f64::NEG_INFINITY;
    let mut best_labels: Vec<usize> = vec![0; n];
    let mut tied = false;
    let mut best_actions: Vec<Vector> = Vec::new();

    // Restricted growth strings enumerate every partition exactly once:
    // labels[0] = 0 and labels[i] <= max(labels[..i]) + 1, capped at K - 1.
    let mut labels = vec![0usize; n];
    loop {
        let blocks = labels.iter().copied().max().unwrap_or(0) + 1;
        let (obj, actions) = partition_objective(w, sample, &labels, blocks);
        if obj > best_obj + 1e-12 {
            best_obj = obj;
            best_labels.copy_from_slice(&labels);
            best_actions = actions;
            tied = false;
        } else if (obj - best_obj).abs() <= 1e-12
            && !actions_equal(&actions, &best_actions)
        {
            tied = true;
        }

        // Advance to the next restricted growth string.
        let mut i = n;
        loop {
            if i == 1 {
                i = 0;
                break;
            }
            i -= 1;
            let prefix_max = labels[..i].iter().copied().max().unwrap_or(0);
            if labels[i] <= prefix_max && labels[i] + 1 < k {
                labels[i] += 1;
                for l in labels[i + 1..].iter_mut() {
                    *l = 0;
                }
                break;
            }
            labels[i] = 0;
        }
        if i == 0 {
            break;
        }
    }

    let blocks = best_labels.iter().copied().max().unwrap_or(0) + 1;
    let mut cell_sizes = vec![0usize; blocks];
    for &l in &best_labels {
        cell_sizes[l] += 1;
    }
    let actions = FeatureSet::dedup(best_actions)?;
    let consistent = actions.len() == blocks
        && crate::solver::assign_cells(w, &actions, sample)? == best_labels;
    Ok(PartitionPolicy {
        actions,
        objective: best_obj,
        labels: best_labels,
        cell_sizes,
        k_reduced: false,
        tied_optimum: tied,
        bregman_consistent: consistent,
    })
}

fn partition_objective(
    w: &UtilityFunction,
    sample: &Matrix,
    labels: &[usize],
    blocks: usize,
) -> (f64, Vec<Vector>) {
    let n = sample.rows();
    let dim = sample.cols();
    let mut sums: Vec<Vector> = vec![vec![0.0; dim]; blocks];
    let mut counts = vec![0usize; blocks];
    for (i, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        for (s, &x) in sums[l].iter_mut().zip(sample.row(i)) {
            *s += x;
        }
    }
    let mut obj = 0.0;
    let mut actions = Vec::with_capacity(blocks);
    for (sum, &c) in sums.iter().zip(&counts) {
        if c == 0 {
            continue;
        }
        let mean = linalg::scale(sum, 1.0 / c as f64);
        obj += (c as f64 / n as f64) * w.eval(&mean);
        actions.push(mean);
    }
    (obj, actions)
}

fn actions_equal(a: &[Vector], b: &[Vector]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let mut used = vec![false; b.len()];
    for p in a {
        let mut found = false;
        for (j, q) in b.iter().enumerate() {
            if !used[j] && linalg::dist(p, q) <= 1e-9 {
                used[j] = true;
                found = true;
                break;
            }
        }
        if !found {
            return false;
        }
    }
    true
}
