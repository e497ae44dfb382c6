//! Bregman divergence, projection onto finite feature sets, and the
//! structural checks that certify a candidate policy: unbiasedness,
//! idempotency, gradient monotonicity, W-monotonicity, maximality,
//! compressibility dimension, and ray concavity.

use std::collections::HashMap;

use bae_core::linalg::{self, Matrix, Vector};
use bae_core::{inertia, Rng};

use crate::error::TheoryError;
use crate::utility::{FeatureSet, UtilityFunction};

/// A deterministic feature map X -> a.
pub trait Policy {
    fn apply(&self, x: &[f64]) -> Vector;
}

impl<F: Fn(&[f64]) -> Vector> Policy for F {
    fn apply(&self, x: &[f64]) -> Vector {
        self(x)
    }
}

/// c(a, b) = W(b) - W(a) + D_aW(a) . (a - b): the excess utility of
/// representing b by a's tangent plane.
pub fn bregman_divergence(
    w: &UtilityFunction,
    a: &[f64],
    b: &[f64],
) -> Result<f64, TheoryError> {
    if a.len() != w.dim() {
        return Err(TheoryError::DimensionMismatch {
            expected: w.dim(),
            got: a.len(),
        });
    }
    if b.len() != w.dim() {
        return Err(TheoryError::DimensionMismatch {
            expected: w.dim(),
            got: b.len(),
        });
    }
    let g = w.grad(a);
    let amb = linalg::sub(a, b);
    Ok(w.eval(b) - w.eval(a) + linalg::dot(&g, &amb))
}

/// Index and value of the divergence-minimizing point of `xi` for `b`.
/// Ties break to the lowest index.
pub fn bregman_project(
    w: &UtilityFunction,
    xi: &FeatureSet,
    b: &[f64],
) -> Result<(usize, f64), TheoryError> {
    if xi.is_empty() {
        return Err(TheoryError::EmptyFeatureSet);
    }
    let mut best = (0usize, f64::INFINITY);
    for k in 0..xi.len() {
        let c = bregman_divergence(w, xi.point(k), b)?;
        if c < best.1 {
            best = (k, c);
        }
    }
    Ok(best)
}

#[derive(Debug, Clone)]
pub struct MonotoneReport {
    pub ok: bool,
    /// Ordered pair (i, j) attaining the smallest c(a_i, a_j).
    pub worst_pair: (usize, usize),
    pub worst_value: f64,
}

/// W-monotonicity of a feature set: c(a_i, a_j) >= -tol over all ordered
/// pairs.
pub fn check_w_monotone(
    w: &UtilityFunction,
    xi: &FeatureSet,
    tol: f64,
) -> Result<MonotoneReport, TheoryError> {
    let mut worst = (0usize, 0usize);
    let mut worst_value = f64::INFINITY;
    for i in 0..xi.len() {
        for j in 0..xi.len() {
            if i == j {
                continue;
            }
            let c = bregman_divergence(w, xi.point(i), xi.point(j))?;
            if c < worst_value {
                worst_value = c;
                worst = (i, j);
            }
        }
    }
    if xi.len() == 1 {
        worst_value = 0.0;
    }
    Ok(MonotoneReport {
        ok: worst_value >= -tol,
        worst_pair: worst,
        worst_value,
    })
}

#[derive(Debug, Clone)]
pub struct MaximalReport {
    pub ok: bool,
    /// Probe row index attaining the largest min_a c(a, b).
    pub worst_probe: usize,
    pub worst_value: f64,
}

/// Maximality of a feature set against probe points: for every probe b,
/// min over the set of c(a, b) must not exceed tol.
pub fn check_maximal(
    w: &UtilityFunction,
    xi: &FeatureSet,
    probes: &Matrix,
    tol: f64,
) -> Result<MaximalReport, TheoryError> {
    if probes.rows() == 0 {
        return Err(TheoryError::EmptySample);
    }
    let mut worst_probe = 0;
    let mut worst_value = f64::NEG_INFINITY;
    for r in 0..probes.rows() {
        let (_, c) = bregman_project(w, xi, probes.row(r))?;
        if c > worst_value {
            worst_value = c;
            worst_probe = r;
        }
    }
    Ok(MaximalReport {
        ok: worst_value <= tol,
        worst_probe,
        worst_value,
    })
}

#[derive(Debug, Clone)]
pub struct UnbiasedReport {
    pub ok: bool,
    pub groups: usize,
    pub worst_deviation: f64,
}

/// Unbiasedness of a policy over a sample: rows are grouped by their exact
/// action bytes, and each action must equal its group's input mean within
/// tol * (1 + |mean|).
pub fn check_unbiased(
    policy: &dyn Policy,
    sample: &Matrix,
    tol: f64,
) -> Result<UnbiasedReport, TheoryError> {
    if sample.rows() == 0 {
        return Err(TheoryError::EmptySample);
    }
    struct Group {
        action: Vector,
        sum: Vector,
        count: usize,
    }
    let mut groups: HashMap<Vec<u64>, Group> = HashMap::new();
    for r in 0..sample.rows() {
        let x = sample.row(r);
        let a = policy.apply(x);
        // v + 0.0 collapses -0.0 and +0.0 to one key.
        let key: Vec<u64> = a.iter().map(|v| (v + 0.0).to_bits()).collect();
        let g = groups.entry(key).or_insert_with(|| Group {
            action: a.clone(),
            sum: vec![0.0; x.len()],
            count: 0,
        });
        for (s, &xi) in g.sum.iter_mut().zip(x) {
            *s += xi;
        }
        g.count += 1;
    }
    let mut worst = 0.0_f64;
    for g in groups.values() {
        let mean = linalg::scale(&g.sum, 1.0 / g.count as f64);
        let dev = linalg::dist(&g.action, &mean) / (1.0 + linalg::norm(&mean));
        worst = worst.max(dev);
    }
    Ok(UnbiasedReport {
        ok: worst <= tol,
        groups: groups.len(),
        worst_deviation: worst,
    })
}

#[derive(Debug, Clone)]
pub struct IdempotentReport {
    pub ok: bool,
    pub worst_row: usize,
    pub worst_deviation: f64,
}

/// Projection property: applying the policy twice must reproduce the single
/// application on every sample row.
pub fn check_projection_idempotent(
    policy: &dyn Policy,
    sample: &Matrix,
    tol: f64,
) -> Result<IdempotentReport, TheoryError> {
    if sample.rows() == 0 {
        return Err(TheoryError::EmptySample);
    }
    let mut worst = 0.0_f64;
    let mut worst_row = 0;
    for r in 0..sample.rows() {
        let once = policy.apply(sample.row(r));
        let twice = policy.apply(&once);
        let dev = linalg::dist(&once, &twice);
        if dev > worst {
            worst = dev;
            worst_row = r;
        }
    }
    Ok(IdempotentReport {
        ok: worst <= tol,
        worst_row,
        worst_deviation: worst,
    })
}

#[derive(Debug, Clone)]
pub struct GradientMonotoneReport {
    pub ok: bool,
    pub worst_pair: (usize, usize),
    pub worst_value: f64,
    pub pairs_checked: usize,
}

/// Pairs examined by `check_gradient_monotone`: all (i, j) with i < j up to
/// this budget, then a deterministic strided subsample.
const MAX_MONOTONE_PAIRS: usize = 2_000_000;

/// Monotonicity of x -> D_aW(policy(x)): for sampled row pairs (x, y) the
/// product (D_aW(A(x)) - D_aW(A(y))) . (x - y) must be >= -tol.
pub fn check_gradient_monotone(
    w: &UtilityFunction,
    policy: &dyn Policy,
    sample: &Matrix,
    tol: f64,
) -> Result<GradientMonotoneReport, TheoryError> {
    let n = sample.rows();
    if n == 0 {
        return Err(TheoryError::EmptySample);
    }
    let grads: Vec<Vector> = (0..n).map(|r| w.grad(&policy.apply(sample.row(r)))).collect();

    let total_pairs = n * (n.saturating_sub(1)) / 2;
    let stride = (total_pairs / MAX_MONOTONE_PAIRS).max(1);

    let mut worst = f64::INFINITY;
    let mut worst_pair = (0usize, 0usize);
    let mut checked = 0usize;
    let mut counter = 0usize;
    for i in 0..n {
        for j in (i + 1)..n {
            counter += 1;
            if counter % stride != 0 {
                continue;
            }
            let diff_g = linalg::sub(&grads[i], &grads[j]);
            let diff_x = linalg::sub(sample.row(i), sample.row(j));
            let v = linalg::dot(&diff_g, &diff_x);
            checked += 1;
            if v < worst {
                worst = v;
                worst_pair = (i, j);
            }
        }
    }
    if checked == 0 {
        worst = 0.0;
    }
    Ok(GradientMonotoneReport {
        ok: worst >= -tol,
        worst_pair,
        worst_value: worst,
        pairs_checked: checked,
    })
}

#[derive(Debug, Clone)]
pub struct CompressibilityReport {
    /// Upper bound on the dimension of the optimal feature manifold over the
    /// probed region: max over probes of the non-negative eigenvalue count.
    pub nu_plus_max: usize,
    pub per_probe: Vec<(usize, usize)>,
    /// Probes whose Hessian has eigenvalues within tol of zero; there the
    /// bound need not be attained.
    pub degenerate_probes: Vec<usize>,
}

/// Hessian inertia per probe and the resulting compressibility bound.
pub fn compressibility_dimension(
    w: &UtilityFunction,
    probes: &Matrix,
    tol: f64,
) -> Result<CompressibilityReport, TheoryError> {
    if probes.rows() == 0 {
        return Err(TheoryError::EmptySample);
    }
    let mut per_probe = Vec::with_capacity(probes.rows());
    let mut degenerate = Vec::new();
    let mut nu_plus_max = 0;
    for r in 0..probes.rows() {
        let h = w.hess(probes.row(r));
        let (np, nm) = inertia(&h, tol)?;
        if np + nm > w.dim() {
            degenerate.push(r);
        }
        nu_plus_max = nu_plus_max.max(np);
        per_probe.push((np, nm));
    }
    Ok(CompressibilityReport {
        nu_plus_max,
        per_probe,
        degenerate_probes: degenerate,
    })
}

#[derive(Debug, Clone)]
pub struct RayConcavityReport {
    pub concave_along_rays: bool,
    /// (a, b, b'Hess(a)b) for the first non-negative quadratic form found.
    pub witness: Option<(Vector, Vector, f64)>,
}

/// Samples far-out directions a with |a| in [k_radius, 4 k_radius] and cone
/// vectors b with cos(angle(a, b)) > 1 - eps, and tests b'D_aaW(a)b < 0.
pub fn check_ray_concavity(
    w: &UtilityFunction,
    k_radius: f64,
    eps: f64,
    direction_samples: usize,
    rng: &mut Rng,
) -> Result<RayConcavityReport, TheoryError> {
    if k_radius <= 0.0 || eps <= 0.0 || eps >= 1.0 {
        return Err(TheoryError::Invalid(format!(
            "need k_radius > 0 and eps in (0,1), got {k_radius}, {eps}"
        )));
    }
    let dim = w.dim();
    let max_angle = (1.0 - eps).acos();
    for _ in 0..direction_samples {
        let u = rng.unit_vector(dim);
        let radius = rng.uniform(k_radius, 4.0 * k_radius);
        let a = linalg::scale(&u, radius);
        let hess = w.hess(&a);

        // The ray itself plus random vectors inside the cone around it.
        let mut cone = vec![u.clone()];
        for _ in 0..4 {
            if dim == 1 {
                break;
            }
            let v = rng.unit_vector(dim);
            // Component of v orthogonal to u.
            let proj = linalg::dot(&v, &u);
            let mut orth = linalg::sub(&v, &linalg::scale(&u, proj));
            let on = linalg::norm(&orth);
            if on < 1e-12 {
                continue;
            }
            orth = linalg::scale(&orth, 1.0 / on);
            let angle = rng.uniform(0.0, max_angle);
            let b: Vector = u
                .iter()
                .zip(&orth)
                .map(|(ux, ox)| angle.cos() * ux + angle.sin() * ox)
                .collect();
            cone.push(b);
        }
        for b in cone {
            let hb = hess.matvec(&b)?;
            let form = linalg::dot(&b, &hb);
            if form >= 0.0 {
                return Ok(RayConcavityReport {
                    concave_along_rays: false,
                    witness: Some((a, b, form)),
                });
            }
        }
    }
    Ok(RayConcavityReport {
        concave_along_rays: true,
        witness: None,
    })
}
