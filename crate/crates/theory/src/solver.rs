//! Optimal K-finite deterministic autoencoders over empirical samples.
//!
//! The solver alternates the first-order assignment rule (each row goes to
//! the action with the lowest Bregman divergence) with the conditional-mean
//! action update, across several restarts. Only fixed points of that
//! alternation are returned, so every returned policy is unbiased and its
//! cells are exact Bregman cells of its own action set. A full-pooling
//! candidate (K = 1) always competes, and a greedy exact-objective polish
//! runs between Lloyd phases; acceptance of any step requires a
//! non-decreasing objective.

use bae_core::linalg::{self, Matrix, Vector};
use bae_core::Rng;

use crate::bregman::bregman_project;
use crate::error::TheoryError;
use crate::utility::{FeatureSet, UtilityFunction};

#[derive(Debug, Clone, PartialEq)]
pub enum InitStrategy {
    /// K distinct sample rows, drawn in canonical (sorted-row) order.
    RandomRows,
    /// k-means++-style seeding by squared Euclidean distance. Euclidean
    /// rather than Bregman weights: c(a, b) may be negative for non-convex W.
    KppStyle,
    /// Caller-supplied initial actions.
    Provided(Vec<Vector>),
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub k: usize,
    pub restarts: usize,
    pub max_iters: usize,
    pub objective_tol: f64,
    pub action_tol: f64,
    pub init: InitStrategy,
}

impl SolveOptions {
    pub fn new(k: usize) -> Self {
        SolveOptions {
            k,
            restarts: 50,
            max_iters: 200,
            objective_tol: 1e-12,
            action_tol: 1e-12,
            init: InitStrategy::RandomRows,
        }
    }
}

/// A deterministic K-finite policy: actions plus the Bregman assignment
/// rule. `labels` is the assignment of the training sample.
#[derive(Debug, Clone)]
pub struct PartitionPolicy {
    pub actions: FeatureSet,
    pub objective: f64,
    pub labels: Vec<usize>,
    pub cell_sizes: Vec<usize>,
    /// Requested K exceeded the sample size or cells emptied out.
    pub k_reduced: bool,
    /// Another candidate tied the best objective with different actions.
    pub tied_optimum: bool,
    /// Whether `labels` coincide with the Bregman assignment of `actions`.
    /// True in the continuum limit; on tiny samples the exact partition
    /// optimum can violate the first-order rule by an O(1/cell) margin.
    pub bregman_consistent: bool,
}

impl PartitionPolicy {
    /// Cell index for a point, by Bregman projection onto the actions.
    pub fn assign(&self, w: &UtilityFunction, x: &[f64]) -> Result<usize, TheoryError> {
        Ok(bregman_project(w, &self.actions, x)?.0)
    }

    /// The action representing a point.
    pub fn apply(&self, w: &UtilityFunction, x: &[f64]) -> Result<Vector, TheoryError> {
        let k = self.assign(w, x)?;
        Ok(self.actions.point(k).to_vec())
    }
}

/// First-order assignment: row i goes to argmax_k of
/// W(a_k) - D_aW(a_k) . (a_k - X_i), ties to the lowest k. This equals the
/// Bregman projection argmin_k c(a_k, X_i) because the two scores differ by
/// the k-independent term W(X_i).
pub fn assign_cells(
    w: &UtilityFunction,
    actions: &FeatureSet,
    sample: &Matrix,
) -> Result<Vec<usize>, TheoryError> {
    if actions.is_empty() {
        return Err(TheoryError::EmptyFeatureSet);
    }
    if sample.cols() != w.dim() {
        return Err(TheoryError::DimensionMismatch {
            expected: w.dim(),
            got: sample.cols(),
        });
    }
    // Precompute W(a_k), D_aW(a_k), and D_aW(a_k) . a_k once per action.
    let vals: Vec<f64> = (0..actions.len()).map(|k| w.eval(actions.point(k))).collect();
    let grads: Vec<Vector> = (0..actions.len()).map(|k| w.grad(actions.point(k))).collect();
    let ga: Vec<f64> = (0..actions.len())
        .map(|k| linalg::dot(&grads[k], actions.point(k)))
        .collect();

    let mut labels = Vec::with_capacity(sample.rows());
    for r in 0..sample.rows() {
        let x = sample.row(r);
        let mut best_k = 0usize;
        let mut best_score = f64::NEG_INFINITY;
        for k in 0..actions.len() {
            let score = vals[k] - ga[k] + linalg::dot(&grads[k], x);
            if score > best_score {
                best_score = score;
                best_k = k;
            }
        }
        labels.push(best_k);
    }
    Ok(labels)
}

/// Conditional-mean update: action k becomes the mean of the rows labelled
/// k; empty cells are dropped and the remaining labels renumbered.
pub fn update_actions(
    labels: &[usize],
    sample: &Matrix,
    k: usize,
) -> Result<FeatureSet, TheoryError> {
    let order: Vec<usize> = (0..sample.rows()).collect();
    let cells = accumulate_cells(labels, sample, k, &order, None);
    let points: Vec<Vector> = cells.into_iter().filter_map(|c| c.map(|(m, _)| m)).collect();
    FeatureSet::dedup(points)
}

/// Mean and weight per cell, accumulated in the given canonical row order so
/// the result is invariant under sample-row permutations.
fn accumulate_cells(
    labels: &[usize],
    sample: &Matrix,
    k: usize,
    order: &[usize],
    weights: Option<&[f64]>,
) -> Vec<Option<(Vector, f64)>> {
    let dim = sample.cols();
    let mut sums: Vec<Vector> = vec![vec![0.0; dim]; k];
    let mut mass = vec![0.0_f64; k];
    for &i in order {
        let wgt = weights.map_or(1.0, |w| w[i]);
        let cell = labels[i];
        mass[cell] += wgt;
        for (s, &x) in sums[cell].iter_mut().zip(sample.row(i)) {
            *s += wgt * x;
        }
    }
    sums.into_iter()
        .zip(mass)
        .map(|(s, m)| {
            if m > 0.0 {
                Some((linalg::scale(&s, 1.0 / m), m))
            } else {
                None
            }
        })
        .collect()
}

struct Candidate {
    actions: Vec<Vector>,
    labels: Vec<usize>,
    objective: f64,
    cell_sizes: Vec<usize>,
    consistent: bool,
}

struct Instance<'a> {
    w: &'a UtilityFunction,
    sample: &'a Matrix,
    weights: Option<&'a [f64]>,
    order: Vec<usize>,
    total_mass: f64,
}

impl<'a> Instance<'a> {
    fn new(w: &'a UtilityFunction, sample: &'a Matrix, weights: Option<&'a [f64]>) -> Self {
        let mut order: Vec<usize> = (0..sample.rows()).collect();
        order.sort_by(|&i, &j| {
            sample
                .row(i)
                .partial_cmp(sample.row(j))
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let total_mass = weights.map_or(sample.rows() as f64, |ws| ws.iter().sum());
        Instance {
            w,
            sample,
            weights,
            order,
            total_mass,
        }
    }

    /// Means + masses per cell in canonical order; drops empty cells and
    /// renumbers labels.
    fn consolidate(&self, labels: &mut Vec<usize>, k: usize) -> (Vec<Vector>, Vec<f64>) {
        let cells = accumulate_cells(labels, self.sample, k, &self.order, self.weights);
        let mut remap = vec![usize::MAX; k];
        let mut actions = Vec::new();
        let mut masses = Vec::new();
        for (idx, cell) in cells.into_iter().enumerate() {
            if let Some((mean, mass)) = cell {
                remap[idx] = actions.len();
                actions.push(mean);
                masses.push(mass);
            }
        }
        for l in labels.iter_mut() {
            *l = remap[*l];
        }
        (actions, masses)
    }

    fn objective(&self, actions: &[Vector], masses: &[f64]) -> f64 {
        actions
            .iter()
            .zip(masses)
            .map(|(a, m)| m * self.w.eval(a))
            .sum::<f64>()
            / self.total_mass
    }

    fn candidate(
        &self,
        actions: Vec<Vector>,
        labels: Vec<usize>,
        masses: &[f64],
        consistent: bool,
    ) -> Candidate {
        let objective = self.objective(&actions, masses);
        let mut cell_sizes = vec![0usize; actions.len()];
        for &l in &labels {
            cell_sizes[l] += 1;
        }
        Candidate {
            actions,
            labels,
            objective,
            cell_sizes,
            consistent,
        }
    }

    fn pooled_candidate(&self) -> Candidate {
        let mut labels = vec![0usize; self.sample.rows()];
        let (actions, masses) = self.consolidate(&mut labels, 1);
        self.candidate(actions, labels, &masses, true)
    }

    /// Do the labels coincide with the Bregman assignment of the actions?
    fn self_consistent(&self, actions: &[Vector], labels: &[usize]) -> Result<bool, TheoryError> {
        let xi = FeatureSet::dedup(actions.to_vec())?;
        if xi.len() != actions.len() {
            return Ok(false);
        }
        Ok(assign_cells(self.w, &xi, self.sample)? == labels)
    }
}

/// Best-of-restarts K-finite partition policy.
///
/// Within a restart the assignment/mean alternation runs until the
/// objective improvement falls below `objective_tol`, the largest action
/// move falls below `action_tol`, or `max_iters` is hit; a step that would
/// decrease the objective is rejected instead of applied, so the objective
/// is non-decreasing across every accepted iteration.
pub fn solve(
    w: &UtilityFunction,
    sample: &Matrix,
    opts: &SolveOptions,
    rng: &mut Rng,
) -> Result<PartitionPolicy, TheoryError> {
    solve_weighted(w, sample, None, opts, rng)
}

/// `solve` that also returns, per restart, the sequence of accepted
/// objective values (ascent audit).
pub fn solve_traced(
    w: &UtilityFunction,
    sample: &Matrix,
    opts: &SolveOptions,
    rng: &mut Rng,
) -> Result<(PartitionPolicy, Vec<Vec<f64>>), TheoryError> {
    let mut traces = Vec::new();
    let policy = solve_impl(w, sample, None, opts, rng, Some(&mut traces))?;
    Ok((policy, traces))
}

/// `solve` with optional non-negative row weights (empirical density).
pub fn solve_weighted(
    w: &UtilityFunction,
    sample: &Matrix,
    weights: Option<&[f64]>,
    opts: &SolveOptions,
    rng: &mut Rng,
) -> Result<PartitionPolicy, TheoryError> {
    solve_impl(w, sample, weights, opts, rng, None)
}

fn solve_impl(
    w: &UtilityFunction,
    sample: &Matrix,
    weights: Option<&[f64]>,
    opts: &SolveOptions,
    rng: &mut Rng,
    mut traces: Option<&mut Vec<Vec<f64>>>,
) -> Result<PartitionPolicy, TheoryError> {
    if sample.rows() == 0 {
        return Err(TheoryError::EmptySample);
    }
    if sample.cols() != w.dim() {
        return Err(TheoryError::DimensionMismatch {
            expected: w.dim(),
            got: sample.cols(),
        });
    }
    if opts.k < 1 || opts.restarts < 1 {
        return Err(TheoryError::Invalid(
            "need k >= 1 and restarts >= 1".into(),
        ));
    }
    if let Some(ws) = weights {
        if ws.len() != sample.rows() {
            return Err(TheoryError::DimensionMismatch {
                expected: sample.rows(),
                got: ws.len(),
            });
        }
        if ws.iter().any(|&x| !(x >= 0.0)) || ws.iter().sum::<f64>() <= 0.0 {
            return Err(TheoryError::Invalid("weights must be non-negative with positive sum".into()));
        }
    }

    let inst = Instance::new(w, sample, weights);
    let mut k_reduced = opts.k > sample.rows();
    let k_eff = opts.k.min(sample.rows());

    // Restart sub-seeds fixed up front: the schedule is deterministic and
    // restarts could run in parallel without changing the result.
    let restart_seeds: Vec<u64> = (0..opts.restarts).map(|_| rng.next_u64()).collect();

    let mut best: Option<Candidate> = None;
    let mut tied = false;
    for seed in restart_seeds {
        let mut r_rng = Rng::new(seed);
        let init = initial_actions(&inst, k_eff, &opts.init, &mut r_rng)?;
        let mut trace = Vec::new();
        for cand in run_restart(&inst, init, k_eff, opts, &mut trace)? {
            consider(&mut best, cand, &mut tied);
        }
        if let Some(ts) = traces.as_deref_mut() {
            ts.push(trace);
        }
    }
    // Full pooling is always a valid fixed point and is exactly optimal for
    // concave W; it competes last so restart results win exact ties.
    let pooled = inst.pooled_candidate();
    consider(&mut best, pooled, &mut tied);

    let bestc = best.expect("pooled candidate always present");
    if bestc.actions.len() < k_eff {
        k_reduced = true;
    }
    Ok(PartitionPolicy {
        actions: FeatureSet::new(bestc.actions.clone())
            .or_else(|_| FeatureSet::dedup(bestc.actions))?,
        objective: bestc.objective,
        labels: bestc.labels,
        cell_sizes: bestc.cell_sizes,
        k_reduced,
        tied_optimum: tied,
        bregman_consistent: bestc.consistent,
    })
}

fn consider(best: &mut Option<Candidate>, cand: Candidate, tied: &mut bool) {
    match best {
        None => *best = Some(cand),
        Some(b) => {
            let tie = (cand.objective - b.objective).abs() <= 1e-12;
            if tie && !same_action_multiset(&cand.actions, &b.actions) {
                *tied = true;
            }
            if cand.objective > b.objective + 1e-12 {
                *best = Some(cand);
                *tied = false;
            } else if tie && cand.consistent && !b.consistent {
                // Same value; prefer the policy that satisfies the
                // first-order assignment rule exactly.
                *best = Some(cand);
            }
        }
    }
}

fn same_action_multiset(a: &[Vector], b: &[Vector]) -> bool {
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

fn initial_actions(
    inst: &Instance,
    k: usize,
    init: &InitStrategy,
    rng: &mut Rng,
) -> Result<Vec<Vector>, TheoryError> {
    let rows_sorted: Vec<&[f64]> = inst.order.iter().map(|&i| inst.sample.row(i)).collect();
    let n = rows_sorted.len();
    let picked: Vec<Vector> = match init {
        InitStrategy::RandomRows => rng
            .distinct_indices(n, k)
            .into_iter()
            .map(|i| rows_sorted[i].to_vec())
            .collect(),
        InitStrategy::KppStyle => {
            let mut centers: Vec<Vector> = vec![rows_sorted[rng.below(n)].to_vec()];
            while centers.len() < k {
                let d2: Vec<f64> = rows_sorted
                    .iter()
                    .map(|x| {
                        centers
                            .iter()
                            .map(|c| {
                                let d = linalg::dist(x, c);
                                d * d
                            })
                            .fold(f64::INFINITY, f64::min)
                    })
                    .collect();
                let total: f64 = d2.iter().sum();
                if total <= 0.0 {
                    break;
                }
                let mut t = rng.uniform(0.0, total);
                let mut pick = n - 1;
                for (i, &x) in d2.iter().enumerate() {
                    t -= x;
                    if t <= 0.0 {
                        pick = i;
                        break;
                    }
                }
                centers.push(rows_sorted[pick].to_vec());
            }
            centers
        }
        InitStrategy::Provided(points) => points.clone(),
    };
    let mut dedup: Vec<Vector> = Vec::new();
    for p in picked {
        if !dedup.iter().any(|q| linalg::dist(&p, q) <= 1e-12) {
            dedup.push(p);
        }
    }
    if dedup.is_empty() {
        return Err(TheoryError::Invalid("empty initial action set".into()));
    }
    Ok(dedup)
}

struct RestartState {
    labels: Vec<usize>,
    actions: Vec<Vector>,
    masses: Vec<f64>,
    obj: f64,
}

/// Guarded Lloyd alternation from the current state: assignment then mean
/// update, until a fixed point, a stall, or a step that would decrease the
/// objective (rejected, state kept). Fixed points become candidates.
fn lloyd_phase(
    inst: &Instance,
    state: &mut RestartState,
    opts: &SolveOptions,
    trace: &mut Vec<f64>,
    found: &mut Vec<Candidate>,
) -> Result<(), TheoryError> {
    for _ in 0..opts.max_iters {
        let xi = FeatureSet::dedup(state.actions.clone())?;
        let new_raw = assign_cells(inst.w, &xi, inst.sample)?;
        if new_raw == state.labels && xi.len() == state.actions.len() {
            found.push(inst.candidate(
                state.actions.clone(),
                state.labels.clone(),
                &state.masses,
                true,
            ));
            return Ok(());
        }
        let mut new_labels = new_raw;
        let (new_actions, new_masses) = inst.consolidate(&mut new_labels, xi.len());
        let new_obj = inst.objective(&new_actions, &new_masses);
        if new_obj < state.obj - 1e-12 {
            return Ok(());
        }
        let moved = max_move(&state.actions, &new_actions);
        let improved = new_obj - state.obj;
        state.labels = new_labels;
        state.actions = new_actions;
        state.masses = new_masses;
        state.obj = new_obj;
        trace.push(state.obj);
        if improved.abs() < opts.objective_tol || moved < opts.action_tol {
            let cons = inst.self_consistent(&state.actions, &state.labels)?;
            found.push(inst.candidate(
                state.actions.clone(),
                state.labels.clone(),
                &state.masses,
                cons,
            ));
            return Ok(());
        }
    }
    Ok(())
}

/// Cell growth after pruning: while the effective K is below capacity,
/// split one cell by a threshold along the most convex direction of W at
/// the cell mean (largest-eigenvalue eigenvector of the Hessian), picking
/// the cell and threshold with the exactly computed best objective gain.
/// Under concave W no split gains, so pooling is left alone.
fn split_to_capacity(
    inst: &Instance,
    state: &mut RestartState,
    k_eff: usize,
    trace: &mut Vec<f64>,
) -> Result<(), TheoryError> {
    let dim = inst.sample.cols();
    let margin = 1e-13 * (1.0 + state.obj.abs());
    while state.actions.len() < k_eff {
        let k = state.actions.len();
        // Cell membership in canonical order.
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
        for &i in &inst.order {
            members[state.labels[i]].push(i);
        }
        let cell_term = |sum: &[f64], m: f64| -> f64 {
            if m <= 0.0 {
                0.0
            } else {
                m * inst.w.eval(&linalg::scale(sum, 1.0 / m))
            }
        };

        let mut best: Option<(f64, usize, usize)> = None; // (gain, cell, cut)
        let mut best_order: Vec<usize> = Vec::new();
        for (cell, idxs) in members.iter().enumerate() {
            if idxs.len() < 2 {
                continue;
            }
            let mean = &state.actions[cell];
            let hess = inst.w.hess(mean);
            let eig = match bae_core::sym_eigen(&hess) {
                Ok(e) => e,
                Err(_) => continue,
            };
            let top = *eig.eigenvalues.last().expect("non-empty spectrum");
            if top <= 0.0 {
                continue;
            }
            let direction = eig.eigenvectors.col(dim - 1);

            // Sort members along the direction (stable in canonical order).
            let mut ordered = idxs.clone();
            ordered.sort_by(|&a, &b| {
                let pa = linalg::dot(inst.sample.row(a), &direction);
                let pb = linalg::dot(inst.sample.row(b), &direction);
                pa.partial_cmp(&pb).unwrap_or(std::cmp::Ordering::Equal)
            });

            // Prefix sums make every threshold split exact in O(dim).
            let mut total_sum = vec![0.0; dim];
            let mut total_mass = 0.0;
            for &i in &ordered {
                let wgt = inst.weights.map_or(1.0, |w| w[i]);
                total_mass += wgt;
                for (s, &x) in total_sum.iter_mut().zip(inst.sample.row(i)) {
                    *s += wgt * x;
                }
            }
            let whole = cell_term(&total_sum, total_mass);
            let mut left_sum = vec![0.0; dim];
            let mut left_mass = 0.0;
            for cut in 1..ordered.len() {
                let i = ordered[cut - 1];
                let wgt = inst.weights.map_or(1.0, |w| w[i]);
                left_mass += wgt;
                for (s, &x) in left_sum.iter_mut().zip(inst.sample.row(i)) {
                    *s += wgt * x;
                }
                let right_sum = linalg::sub(&total_sum, &left_sum);
                let gain = (cell_term(&left_sum, left_mass)
                    + cell_term(&right_sum, total_mass - left_mass)
                    - whole)
                    / inst.total_mass;
                if gain > best.map_or(margin, |(g, _, _)| g) {
                    best = Some((gain, cell, cut));
                    best_order = ordered.clone();
                }
            }
        }
        let Some((_, _cell, cut)) = best else { break };
        for &i in &best_order[cut..] {
            state.labels[i] = k;
        }
        let (acts, ms) = inst.consolidate(&mut state.labels, k + 1);
        state.actions = acts;
        state.masses = ms;
        state.obj = inst.objective(&state.actions, &state.masses);
        trace.push(state.obj);
    }
    Ok(())
}

const POLISH_ROUNDS: usize = 20;

/// One restart: guarded Lloyd alternation interleaved with empty-cell
/// reseeding and greedy exact-objective polish rounds until none of them
/// improves. Returns the candidates worth keeping; every accepted
/// objective value goes into `trace` in order.
fn run_restart(
    inst: &Instance,
    init: Vec<Vector>,
    k_eff: usize,
    opts: &SolveOptions,
    trace: &mut Vec<f64>,
) -> Result<Vec<Candidate>, TheoryError> {
    let xi = FeatureSet::dedup(init)?;
    let mut labels = assign_cells(inst.w, &xi, inst.sample)?;
    let k0 = xi.len();
    let (actions, masses) = inst.consolidate(&mut labels, k0);
    let obj = inst.objective(&actions, &masses);
    let mut state = RestartState {
        labels,
        actions,
        masses,
        obj,
    };
    trace.push(state.obj);

    let mut found: Vec<Candidate> = Vec::new();
    lloyd_phase(inst, &mut state, opts, trace, &mut found)?;

    // Splitting re-grows pruned cells along convex directions, polish
    // escapes oscillation plateaus of the plain alternation (e.g. under
    // concave W, or scrambled cells under indefinite W), and another Lloyd
    // phase re-converges toward a fixed point. Every part only accepts
    // ascent steps, so the rounds terminate.
    for _ in 0..POLISH_ROUNDS {
        let before = state.obj;
        split_to_capacity(inst, &mut state, k_eff, trace)?;
        lloyd_phase(inst, &mut state, opts, trace, &mut found)?;
        polish(
            inst,
            &mut state.labels,
            &mut state.actions,
            &mut state.masses,
            &mut state.obj,
        );
        trace.push(state.obj);
        let cons = inst.self_consistent(&state.actions, &state.labels)?;
        found.push(inst.candidate(
            state.actions.clone(),
            state.labels.clone(),
            &state.masses,
            cons,
        ));
        lloyd_phase(inst, &mut state, opts, trace, &mut found)?;
        if state.obj - before <= 1e-12 {
            break;
        }
    }
    Ok(found)
}

fn max_move(a: &[Vector], b: &[Vector]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter()
        .zip(b)
        .map(|(x, y)| linalg::dist(x, y))
        .fold(0.0, f64::max)
}

const POLISH_SWEEP_CAP: usize = 200;

/// Greedy exact-objective ascent over partitions: repeated sweeps in
/// canonical row order, moving each point to its best cell when that
/// strictly improves the objective, plus pairwise cell merges once per
/// sweep. Every accepted change increases the objective by a fixed margin,
/// so the procedure terminates.
fn polish(
    inst: &Instance,
    labels: &mut Vec<usize>,
    actions: &mut Vec<Vector>,
    masses: &mut Vec<f64>,
    obj: &mut f64,
) {
    let dim = inst.sample.cols();
    let scale = 1.0 + obj.abs();
    let margin = 1e-13 * scale;
    let k = actions.len();
    if k == 0 {
        return;
    }

    // Cell sums let every tentative move be scored exactly in O(dim).
    let mut sums: Vec<Vector> = vec![vec![0.0; dim]; k];
    let mut mass: Vec<f64> = vec![0.0; k];
    for &i in &inst.order {
        let wgt = inst.weights.map_or(1.0, |w| w[i]);
        mass[labels[i]] += wgt;
        for (s, &x) in sums[labels[i]].iter_mut().zip(inst.sample.row(i)) {
            *s += wgt * x;
        }
    }
    let cell_term = |sum: &[f64], m: f64| -> f64 {
        if m <= 0.0 {
            0.0
        } else {
            m * inst.w.eval(&linalg::scale(sum, 1.0 / m))
        }
    };

    for _sweep in 0..POLISH_SWEEP_CAP {
        let mut moved_any = false;
        for &i in &inst.order {
            let from = labels[i];
            let wgt = inst.weights.map_or(1.0, |w| w[i]);
            if wgt == 0.0 {
                continue;
            }
            let x = inst.sample.row(i);
            let from_now = cell_term(&sums[from], mass[from]);
            let from_without: Vector =
                sums[from].iter().zip(x).map(|(s, xi)| s - wgt * xi).collect();
            let from_after = cell_term(&from_without, mass[from] - wgt);
            let mut best_delta = margin;
            let mut best_to: Option<usize> = None;
            for to in 0..k {
                if to == from || mass[to] <= 0.0 {
                    continue;
                }
                let to_now = cell_term(&sums[to], mass[to]);
                let to_with: Vector =
                    sums[to].iter().zip(x).map(|(s, xi)| s + wgt * xi).collect();
                let to_after = cell_term(&to_with, mass[to] + wgt);
                let delta = (from_after + to_after - from_now - to_now) / inst.total_mass;
                if delta > best_delta {
                    best_delta = delta;
                    best_to = Some(to);
                }
            }
            if let Some(to) = best_to {
                for (s, &xi) in sums[from].iter_mut().zip(x) {
                    *s -= wgt * xi;
                }
                for (s, &xi) in sums[to].iter_mut().zip(x) {
                    *s += wgt * xi;
                }
                mass[from] -= wgt;
                mass[to] += wgt;
                labels[i] = to;
                moved_any = true;
            }
        }
        // Pairwise merges (these let concave directions pool fully).
        for a_idx in 0..k {
            for b_idx in (a_idx + 1)..k {
                if mass[a_idx] <= 0.0 || mass[b_idx] <= 0.0 {
                    continue;
                }
                let merged_sum = linalg::add(&sums[a_idx], &sums[b_idx]);
                let merged_mass = mass[a_idx] + mass[b_idx];
                let delta = (cell_term(&merged_sum, merged_mass)
                    - cell_term(&sums[a_idx], mass[a_idx])
                    - cell_term(&sums[b_idx], mass[b_idx]))
                    / inst.total_mass;
                if delta > margin {
                    for l in labels.iter_mut() {
                        if *l == b_idx {
                            *l = a_idx;
                        }
                    }
                    sums[a_idx] = merged_sum;
                    mass[a_idx] = merged_mass;
                    sums[b_idx] = vec![0.0; dim];
                    mass[b_idx] = 0.0;
                    moved_any = true;
                }
            }
        }
        if !moved_any {
            break;
        }
    }
    // Rebuild the consolidated state (prunes emptied cells, renumbers).
    let k_now = actions.len();
    let (acts, ms) = inst.consolidate(labels, k_now);
    *actions = acts;
    *masses = ms;
    *obj = inst.objective(actions, masses);
}

/// Objectives across a grid of K values; under convex W the curve is
/// non-decreasing, under concave W it is flat at W(sample mean).
pub fn jensen_direction_probe(
    w: &UtilityFunction,
    sample: &Matrix,
    k_grid: &[usize],
    opts: &SolveOptions,
    rng: &mut Rng,
) -> Result<Vec<(usize, f64)>, TheoryError> {
    let mut out = Vec::with_capacity(k_grid.len());
    for &k in k_grid {
        let mut o = opts.clone();
        o.k = k;
        let policy = solve(w, sample, &o, rng)?;
        out.push((k, policy.objective));
    }
    Ok(out)
}
