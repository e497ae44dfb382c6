//! The two analytically optimal policies and their verifiers: the linear
//! spectral projection for quadratic utilities over elliptical data, and
//! the sphere map for radial utilities, plus the composite policy check.

use bae_core::linalg::{self, Matrix, Vector};
use bae_core::sym_eigen;

use crate::bregman::{
    check_gradient_monotone, check_maximal, check_projection_idempotent, check_unbiased,
    check_w_monotone, GradientMonotoneReport, IdempotentReport, MaximalReport, MonotoneReport,
    Policy, UnbiasedReport,
};
use crate::error::TheoryError;
use crate::utility::{FeatureSet, UtilityFunction};

/// Linear policy A = S^{1/2} P+ S^{-1/2} where S is the sample second
/// moment (after centering) and P+ projects onto the eigenvectors of
/// S^{1/2} H S^{1/2} with strictly positive eigenvalues. Actions live in
/// centered coordinates.
#[derive(Debug, Clone)]
pub struct QuadraticPolicy {
    pub h: Matrix,
    pub sigma: Matrix,
    pub projection: Matrix,
    pub mean: Vector,
    pub rank: usize,
}

impl QuadraticPolicy {
    /// A x for an already-centered point.
    pub fn apply_centered(&self, x: &[f64]) -> Vector {
        self.projection.matvec(x).expect("dimension fixed at build")
    }

    /// A (x - mean) for a raw point.
    pub fn apply(&self, x: &[f64]) -> Vector {
        let centered = linalg::sub(x, &self.mean);
        self.apply_centered(&centered)
    }

    /// The sample expressed in centered coordinates.
    pub fn center_sample(&self, sample: &Matrix) -> Matrix {
        let rows: Vec<Vector> = (0..sample.rows())
            .map(|r| linalg::sub(sample.row(r), &self.mean))
            .collect();
        Matrix::from_rows(&rows).expect("consistent rows")
    }
}

/// `quadratic_policy` with the second moment and mean supplied instead of
/// estimated, for data whose distribution is known exactly.
pub fn quadratic_policy_known_moments(
    h: &Matrix,
    sigma: &Matrix,
    mean: Vector,
) -> Result<QuadraticPolicy, TheoryError> {
    if h.rows() != h.cols() || sigma.rows() != sigma.cols() || h.rows() != sigma.rows() {
        return Err(TheoryError::Invalid(
            "H and Sigma must be square with matching dimension".into(),
        ));
    }
    if mean.len() != h.rows() {
        return Err(TheoryError::DimensionMismatch {
            expected: h.rows(),
            got: mean.len(),
        });
    }
    build_policy(h, sigma.clone(), mean)
}

/// Builds the spectral projection policy for W(a) = a'Ha from an empirical
/// sample. The second moment must be positive definite.
pub fn quadratic_policy(h: &Matrix, sample: &Matrix) -> Result<QuadraticPolicy, TheoryError> {
    if h.rows() != h.cols() {
        return Err(TheoryError::Invalid(format!(
            "H must be square, got {}x{}",
            h.rows(),
            h.cols()
        )));
    }
    if sample.rows() == 0 {
        return Err(TheoryError::EmptySample);
    }
    if sample.cols() != h.rows() {
        return Err(TheoryError::DimensionMismatch {
            expected: h.rows(),
            got: sample.cols(),
        });
    }
    let dim = h.rows();
    let mean = sample.mean_row();
    let mut sigma = Matrix::zeros(dim, dim);
    for r in 0..sample.rows() {
        let xc = linalg::sub(sample.row(r), &mean);
        for i in 0..dim {
            for j in 0..dim {
                let v = sigma.get(i, j) + xc[i] * xc[j];
                sigma.set(i, j, v);
            }
        }
    }
    sigma = sigma.scaled(1.0 / sample.rows() as f64);
    build_policy(h, sigma, mean)
}

fn build_policy(h: &Matrix, sigma: Matrix, mean: Vector) -> Result<QuadraticPolicy, TheoryError> {
    let dim = h.rows();
    let eig = sym_eigen(&sigma)?;
    let lam_max = eig.spectral_norm().max(1.0);
    let lam_min = eig.eigenvalues.first().copied().unwrap_or(0.0);
    if lam_min <= 1e-10 * lam_max {
        return Err(TheoryError::SingularSecondMoment { min_eig: lam_min });
    }
    let sqrt_sigma = eig.apply_spectral(f64::sqrt);
    let inv_sqrt_sigma = eig.apply_spectral(|l| 1.0 / l.sqrt());

    let v = sqrt_sigma.matmul(h)?.matmul(&sqrt_sigma)?;
    let mut v_sym = v.clone();
    for i in 0..dim {
        for j in 0..dim {
            v_sym.set(i, j, 0.5 * (v.get(i, j) + v.get(j, i)));
        }
    }
    let v_eig = sym_eigen(&v_sym)?;
    let pos_tol = 1e-9 * v_eig.spectral_norm().max(1.0);
    let rank = v_eig.eigenvalues.iter().filter(|&&l| l > pos_tol).count();
    let p_plus = v_eig.apply_spectral(|l| if l > pos_tol { 1.0 } else { 0.0 });

    let projection = sqrt_sigma.matmul(&p_plus)?.matmul(&inv_sqrt_sigma)?;
    Ok(QuadraticPolicy {
        h: h.clone(),
        sigma,
        projection,
        mean,
        rank,
    })
}

/// Sphere map A(x) = beta x / |x| with beta the mean sample norm. Rows with
/// near-zero norm map to the first canonical direction and are counted.
#[derive(Debug, Clone)]
pub struct SpherePolicy {
    pub beta: f64,
    pub dim: usize,
    pub zero_rows: usize,
}

impl SpherePolicy {
    pub fn apply(&self, x: &[f64]) -> Vector {
        let n = linalg::norm(x);
        if n < 1e-12 {
            let mut out = vec![0.0; self.dim];
            out[0] = self.beta;
            return out;
        }
        linalg::scale(x, self.beta / n)
    }
}

pub fn sphere_policy(sample: &Matrix) -> Result<SpherePolicy, TheoryError> {
    if sample.rows() == 0 {
        return Err(TheoryError::EmptySample);
    }
    let mut beta = 0.0;
    let mut zero_rows = 0;
    for r in 0..sample.rows() {
        let n = linalg::norm(sample.row(r));
        if n < 1e-12 {
            zero_rows += 1;
        }
        beta += n;
    }
    beta /= sample.rows() as f64;
    if beta <= 0.0 {
        return Err(TheoryError::Invalid("sample has zero mean norm".into()));
    }
    Ok(SpherePolicy {
        beta,
        dim: sample.cols(),
        zero_rows,
    })
}

#[derive(Debug, Clone)]
pub struct SphereConditionReport {
    pub ok: bool,
    pub worst_radius: f64,
    pub worst_value: f64,
}

/// Grid certificate for the sphere policy's optimality condition: for
/// W(a) = phi(|a|^2), max over |b| in [0, radius_bound] of
/// phi(|b|^2) - phi(beta^2) + 2 phi'(beta^2) beta (beta - |b|) must be <= 0.
pub fn check_sphere_condition(
    phi: &dyn Fn(f64) -> f64,
    dphi: &dyn Fn(f64) -> f64,
    beta: f64,
    radius_bound: f64,
    grid: usize,
) -> Result<SphereConditionReport, TheoryError> {
    if beta <= 0.0 || radius_bound <= 0.0 || grid < 2 {
        return Err(TheoryError::Invalid(
            "need beta > 0, radius_bound > 0, grid >= 2".into(),
        ));
    }
    let slope = 2.0 * dphi(beta * beta) * beta;
    let base = phi(beta * beta);
    let mut worst_value = f64::NEG_INFINITY;
    let mut worst_radius = 0.0;
    for i in 0..=grid {
        let r = radius_bound * i as f64 / grid as f64;
        let v = phi(r * r) - base + slope * (beta - r);
        if v > worst_value {
            worst_value = v;
            worst_radius = r;
        }
    }
    Ok(SphereConditionReport {
        ok: worst_value <= 1e-9,
        worst_radius,
        worst_value,
    })
}

/// Maximum number of image points retained for the W-monotonicity part of
/// `verify_policy`; beyond that a deterministic stride subsamples them.
const MAX_IMAGE_POINTS: usize = 500;

#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub unbiased: UnbiasedReport,
    pub idempotent: IdempotentReport,
    pub w_monotone: MonotoneReport,
    pub maximal: MaximalReport,
    /// Mean utility of the policy's actions over the sample.
    pub policy_value: f64,
    /// Mean utility of the raw sample (the no-compression value).
    pub raw_value: f64,
    /// Utility of the sample mean (the full-pooling value).
    pub pooled_value: f64,
    pub all_ok: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct VerifyTolerances {
    pub unbiased: f64,
    pub idempotent: f64,
    pub w_monotone: f64,
    pub maximal: f64,
}

impl Default for VerifyTolerances {
    fn default() -> Self {
        VerifyTolerances {
            unbiased: 1e-9,
            idempotent: 1e-9,
            w_monotone: 1e-7,
            maximal: 1e-6,
        }
    }
}

/// Composite optimality check for a candidate policy: unbiasedness,
/// idempotency, W-monotonicity of the image, maximality against probes, and
/// the utility comparison against no compression and full pooling.
pub fn verify_policy(
    w: &UtilityFunction,
    policy: &dyn Policy,
    sample: &Matrix,
    probes: &Matrix,
    tol: VerifyTolerances,
) -> Result<VerifyReport, TheoryError> {
    let unbiased = check_unbiased(policy, sample, tol.unbiased)?;
    let idempotent = check_projection_idempotent(policy, sample, tol.idempotent)?;

    // Maximality runs against the full image so no tail coverage is lost;
    // the quadratic pair check subsamples, it is the only O(K^2) part.
    let full_image: Vec<Vector> = (0..sample.rows())
        .map(|r| policy.apply(sample.row(r)))
        .collect();
    let stride = (sample.rows() / MAX_IMAGE_POINTS).max(1);
    let thin_image: Vec<Vector> = full_image.iter().step_by(stride).cloned().collect();
    let xi_full = FeatureSet::dedup(full_image)?;
    let xi_thin = FeatureSet::dedup(thin_image)?;
    let w_monotone = check_w_monotone(w, &xi_thin, tol.w_monotone)?;
    let maximal = check_maximal(w, &xi_full, probes, tol.maximal)?;

    let mut policy_value = 0.0;
    let mut raw_value = 0.0;
    for r in 0..sample.rows() {
        policy_value += w.eval(&policy.apply(sample.row(r)));
        raw_value += w.eval(sample.row(r));
    }
    policy_value /= sample.rows() as f64;
    raw_value /= sample.rows() as f64;
    let pooled_value = w.eval(&sample.mean_row());

    let all_ok = unbiased.ok && idempotent.ok && w_monotone.ok && maximal.ok;
    Ok(VerifyReport {
        unbiased,
        idempotent,
        w_monotone,
        maximal,
        policy_value,
        raw_value,
        pooled_value,
        all_ok,
    })
}

/// Gradient monotonicity, exposed alongside `verify_policy` for callers
/// that want the full certificate.
pub fn verify_gradient_monotone(
    w: &UtilityFunction,
    policy: &dyn Policy,
    sample: &Matrix,
    tol: f64,
) -> Result<GradientMonotoneReport, TheoryError> {
    check_gradient_monotone(w, policy, sample, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use bae_core::{Rng, Stream};

    /// Gaussian sample with x2 reflected so unbiasedness holds exactly by
    /// pairing.
    fn symmetrized_gaussian(n_pairs: usize, seed: u64) -> Matrix {
        let mut rng = Rng::with_stream(seed, Stream::DataGen);
        let mut rows = Vec::with_capacity(2 * n_pairs);
        for _ in 0..n_pairs {
            let x = rng.normal_vec(2);
            rows.push(vec![x[0], x[1]]);
            rows.push(vec![x[0], -x[1]]);
        }
        Matrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn quadratic_policy_on_indefinite_diagonal_form() {
        let h = Matrix::diag(&[1.0, -1.0]);
        let sample = symmetrized_gaussian(2000, 42);
        let policy = quadratic_policy(&h, &sample).unwrap();
        assert_eq!(policy.rank, 1);
        // A approx diag(1, 0); sample second moment is near the identity.
        assert!((policy.projection.get(0, 0) - 1.0).abs() < 1e-6);
        assert!(policy.projection.get(1, 1).abs() < 1e-6);
        let aa = policy.projection.matmul(&policy.projection).unwrap();
        assert!(aa.sub(&policy.projection).unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn quadratic_policy_degenerate_cases() {
        let sample = symmetrized_gaussian(500, 7);
        let pd = quadratic_policy(&Matrix::diag(&[2.0, 0.5]), &sample).unwrap();
        assert!(pd
            .projection
            .sub(&Matrix::identity(2))
            .unwrap()
            .max_abs()
            < 1e-9);
        let nd = quadratic_policy(&Matrix::diag(&[-1.0, -3.0]), &sample).unwrap();
        assert!(nd.projection.max_abs() < 1e-9);
        assert_eq!(nd.rank, 0);
    }

    #[test]
    fn quadratic_policy_rejects_singular_second_moment() {
        // Rank-one sample.
        let rows: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        let sample = Matrix::from_rows(&rows).unwrap();
        let err = quadratic_policy(&Matrix::identity(2), &sample);
        assert!(matches!(err, Err(TheoryError::SingularSecondMoment { .. })));
    }

    #[test]
    fn sphere_policy_unit_circle_and_projection() {
        let rows: Vec<Vec<f64>> = (0..8)
            .map(|i| {
                let t = i as f64 * std::f64::consts::PI / 4.0;
                vec![t.cos(), t.sin()]
            })
            .collect();
        let sample = Matrix::from_rows(&rows).unwrap();
        let policy = sphere_policy(&sample).unwrap();
        assert!((policy.beta - 1.0).abs() < 1e-12);
        for r in 0..sample.rows() {
            let a = policy.apply(sample.row(r));
            assert!(linalg::dist(&a, sample.row(r)) < 1e-12);
            let twice = policy.apply(&a);
            assert!(linalg::dist(&a, &twice) < 1e-12);
        }
    }

    #[test]
    fn sphere_policy_flags_zero_rows() {
        let sample = Matrix::from_rows(&[vec![0.0, 0.0], vec![3.0, 4.0]]).unwrap();
        let policy = sphere_policy(&sample).unwrap();
        assert_eq!(policy.zero_rows, 1);
        assert!((policy.beta - 2.5).abs() < 1e-12);
        let a = policy.apply(&[0.0, 0.0]);
        assert_eq!(a, vec![2.5, 0.0]);
    }

    #[test]
    fn sphere_condition_sqrt_profile_is_exactly_zero() {
        let phi = |x: f64| x.sqrt();
        let dphi = |x: f64| 0.5 / x.sqrt();
        let rep = check_sphere_condition(&phi, &dphi, 1.3, 5.0, 1000).unwrap();
        assert!(rep.ok);
        assert!(rep.worst_value.abs() <= 1e-9);
    }

    #[test]
    fn sphere_condition_convex_profile_fails() {
        let phi = |x: f64| x;
        let dphi = |_x: f64| 1.0;
        let rep = check_sphere_condition(&phi, &dphi, 1.0, 3.0, 300).unwrap();
        assert!(!rep.ok);
        // (r - beta)^2 peaks at the far end of the grid.
        assert!((rep.worst_value - 4.0).abs() < 1e-9);
        assert!((rep.worst_radius - 3.0).abs() < 1e-9);
    }

    #[test]
    fn sphere_condition_concave_profile_near_beta_holds() {
        // phi(x) = log(1 + x): concave with positive slope; restrict the grid
        // to radii near beta where the expression stays non-positive.
        let phi = |x: f64| (1.0 + x).ln();
        let dphi = |x: f64| 1.0 / (1.0 + x);
        let beta = 2.0;
        let rep = check_sphere_condition(&phi, &dphi, beta, beta, 400).unwrap();
        assert!(rep.ok, "worst {} at {}", rep.worst_value, rep.worst_radius);
    }

    #[test]
    fn verify_identity_policy_under_convex_utility() {
        let w = UtilityFunction::norm_squared(2);
        let mut rng = Rng::with_stream(9, Stream::DataGen);
        let sample = rng.normal_matrix(300, 2);
        // Probes from the data domain itself: each probe's own image point
        // certifies inf c <= 0 exactly.
        let probes = sample.clone();
        let identity = |x: &[f64]| x.to_vec();
        let rep = verify_policy(&w, &identity, &sample, &probes, VerifyTolerances::default())
            .unwrap();
        assert!(rep.all_ok, "{rep:?}");
        assert!((rep.policy_value - rep.raw_value).abs() < 1e-12);
    }

    #[test]
    fn verify_pooling_policy_under_concave_utility() {
        let w = UtilityFunction::neg_norm_squared(2);
        let mut rng = Rng::with_stream(10, Stream::DataGen);
        let sample = rng.normal_matrix(300, 2);
        let probes = sample.clone();
        let mean = sample.mean_row();
        let pool = move |_x: &[f64]| mean.clone();
        let rep =
            verify_policy(&w, &pool, &sample, &probes, VerifyTolerances::default()).unwrap();
        assert!(rep.all_ok, "{rep:?}");
        // Jensen: pooling beats no compression under concavity.
        assert!(rep.policy_value >= rep.raw_value);
        assert!((rep.policy_value - rep.pooled_value).abs() < 1e-12);
    }

    #[test]
    fn verify_sphere_policy_on_spherical_sample() {
        // Data already on a sphere: beta equals the radius, the policy is
        // the identity up to rounding, and every certificate is exact. For
        // generic radial data the exact-byte grouping of check_unbiased
        // degenerates to singletons, so this is the meaningful sample for
        // the composite check.
        let mut rng = Rng::with_stream(14, Stream::DataGen);
        let rows: Vec<Vec<f64>> = (0..256).map(|_| rng.unit_vector(2)).collect();
        let sample = Matrix::from_rows(&rows).unwrap();
        let policy = sphere_policy(&sample).unwrap();
        assert!((policy.beta - 1.0).abs() < 1e-12);

        // W(a) = |a|: the profile whose boundary condition is identically
        // zero, so the sphere is optimal.
        let w = UtilityFunction::radial(
            |x: f64| x.sqrt(),
            |x: f64| 0.5 / x.sqrt(),
            |x: f64| -0.25 / (x * x.sqrt()),
            Matrix::identity(2),
        )
        .unwrap();
        let probes = sample.clone();
        let sp = policy.clone();
        let as_policy = move |x: &[f64]| sp.apply(x);
        let mut tol = VerifyTolerances::default();
        // Finite angular resolution of the image bounds the maximality gap.
        tol.maximal = 1e-3;
        let rep = verify_policy(&w, &as_policy, &sample, &probes, tol).unwrap();
        assert!(rep.all_ok, "{rep:?}");

        let cond = check_sphere_condition(
            &|x: f64| x.sqrt(),
            &|x: f64| 0.5 / x.sqrt(),
            policy.beta,
            3.0,
            500,
        )
        .unwrap();
        assert!(cond.ok);
    }

    #[test]
    fn verify_quadratic_closed_form_end_to_end() {
        let h = Matrix::diag(&[1.0, -1.0]);
        let w = UtilityFunction::quadratic(h.clone(), None).unwrap();
        let sample = symmetrized_gaussian(1500, 11);
        let policy = quadratic_policy(&h, &sample).unwrap();
        let centered = policy.center_sample(&sample);
        let proj = policy.projection.clone();
        let as_policy = move |x: &[f64]| proj.matvec(x).unwrap();

        // Probes from the centered data domain: probe b's own image (b1, 0)
        // gives c = -b2^2 <= 0, so maximality holds exactly.
        let probes = centered.clone();
        let rep = verify_policy(&w, &as_policy, &centered, &probes, VerifyTolerances::default())
            .unwrap();
        assert!(rep.all_ok, "{rep:?}");
        // Encoding only the convex direction strictly beats both extremes.
        assert!(rep.policy_value > rep.raw_value);
        assert!(rep.policy_value > rep.pooled_value);

        let grad_rep = verify_gradient_monotone(&w, &as_policy, &centered, 1e-9).unwrap();
        assert!(grad_rep.ok);
    }
}
