//! Smooth scalar utility surfaces W(a) with gradient and Hessian evaluators,
//! and finite candidate feature sets.

use std::fmt;
use std::sync::Arc;

use bae_core::linalg::{self, Matrix, Vector};

use crate::error::TheoryError;

type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type GradFn = Arc<dyn Fn(&[f64]) -> Vector + Send + Sync>;
type HessFn = Arc<dyn Fn(&[f64]) -> Matrix + Send + Sync>;

/// A smooth scalar function W(a) on R^L with exact gradient and Hessian
/// closures. Cloning shares the underlying closures.
#[derive(Clone)]
pub struct UtilityFunction {
    dim: usize,
    eval: ScalarFn,
    grad: GradFn,
    hess: HessFn,
}

impl fmt::Debug for UtilityFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("UtilityFunction")
            .field("dim", &self.dim)
            .finish()
    }
}

impl UtilityFunction {
    pub fn custom(
        dim: usize,
        eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        grad: impl Fn(&[f64]) -> Vector + Send + Sync + 'static,
        hess: impl Fn(&[f64]) -> Matrix + Send + Sync + 'static,
    ) -> Self {
        UtilityFunction {
            dim,
            eval: Arc::new(eval),
            grad: Arc::new(grad),
            hess: Arc::new(hess),
        }
    }

    /// W(a) = a'Ha + h'a for a symmetric H. Gradient 2Ha + h, Hessian 2H.
    pub fn quadratic(h: Matrix, lin: Option<Vector>) -> Result<Self, TheoryError> {
        if h.rows() != h.cols() {
            return Err(TheoryError::Invalid(format!(
                "quadratic form matrix must be square, got {}x{}",
                h.rows(),
                h.cols()
            )));
        }
        let dim = h.rows();
        let lin = lin.unwrap_or_else(|| vec![0.0; dim]);
        if lin.len() != dim {
            return Err(TheoryError::DimensionMismatch {
                expected: dim,
                got: lin.len(),
            });
        }
        // Symmetrize once so gradient/Hessian formulas below are exact.
        let mut hs = h.clone();
        for r in 0..dim {
            for c in 0..dim {
                hs.set(r, c, 0.5 * (h.get(r, c) + h.get(c, r)));
            }
        }
        let h_eval = hs.clone();
        let h_grad = hs.clone();
        let h_hess = hs.scaled(2.0);
        let lin_eval = lin.clone();
        Ok(UtilityFunction {
            dim,
            eval: Arc::new(move |a| {
                let ha = h_eval.matvec(a).expect("dim checked");
                linalg::dot(a, &ha) + linalg::dot(&lin_eval, a)
            }),
            grad: Arc::new(move |a| {
                let ha = h_grad.matvec(a).expect("dim checked");
                ha.iter().zip(&lin).map(|(x, l)| 2.0 * x + l).collect()
            }),
            hess: Arc::new(move |_| h_hess.clone()),
        })
    }

    /// W(a) = phi(a'Ha) for a symmetric H and a scalar profile phi given with
    /// its first two derivatives. Gradient 2 phi'(q) Ha; Hessian
    /// 4 phi''(q) (Ha)(Ha)' + 2 phi'(q) H with q = a'Ha.
    pub fn radial(
        phi: impl Fn(f64) -> f64 + Send + Sync + 'static,
        dphi: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d2phi: impl Fn(f64) -> f64 + Send + Sync + 'static,
        h: Matrix,
    ) -> Result<Self, TheoryError> {
        if h.rows() != h.cols() {
            return Err(TheoryError::Invalid(format!(
                "radial form matrix must be square, got {}x{}",
                h.rows(),
                h.cols()
            )));
        }
        let dim = h.rows();
        let h_eval = h.clone();
        let h_grad = h.clone();
        let h_hess = h;
        let phi = Arc::new(phi);
        let dphi = Arc::new(dphi);
        let dphi2 = dphi.clone();
        let d2phi = Arc::new(d2phi);
        Ok(UtilityFunction {
            dim,
            eval: Arc::new(move |a| {
                let ha = h_eval.matvec(a).expect("dim checked");
                phi(linalg::dot(a, &ha))
            }),
            grad: Arc::new(move |a| {
                let ha = h_grad.matvec(a).expect("dim checked");
                let q = linalg::dot(a, &ha);
                linalg::scale(&ha, 2.0 * dphi(q))
            }),
            hess: Arc::new(move |a| {
                let ha = h_hess.matvec(a).expect("dim checked");
                let q = linalg::dot(a, &ha);
                let c1 = 4.0 * d2phi(q);
                let c2 = 2.0 * dphi2(q);
                let n = ha.len();
                let mut out = Matrix::zeros(n, n);
                for i in 0..n {
                    for j in 0..n {
                        out.set(i, j, c1 * ha[i] * ha[j] + c2 * h_hess.get(i, j));
                    }
                }
                out
            }),
        })
    }

    /// W(a) = -|a|^2 (globally concave; full pooling is optimal).
    pub fn neg_norm_squared(dim: usize) -> Self {
        Self::quadratic(Matrix::identity(dim).scaled(-1.0), None).expect("square by construction")
    }

    /// W(a) = |a|^2 (strictly convex; the identity policy is optimal).
    pub fn norm_squared(dim: usize) -> Self {
        Self::quadratic(Matrix::identity(dim), None).expect("square by construction")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, a: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), self.dim);
        (self.eval)(a)
    }

    pub fn grad(&self, a: &[f64]) -> Vector {
        debug_assert_eq!(a.len(), self.dim);
        (self.grad)(a)
    }

    pub fn hess(&self, a: &[f64]) -> Matrix {
        debug_assert_eq!(a.len(), self.dim);
        (self.hess)(a)
    }
}

/// Finite candidate feature manifold: a list of distinct points in R^L.
#[derive(Debug, Clone)]
pub struct FeatureSet {
    points: Vec<Vector>,
    dim: usize,
}

impl FeatureSet {
    /// Points must be non-empty, finite, same dimension, and pairwise
    /// distinct beyond 1e-12 in sup norm.
    pub fn new(points: Vec<Vector>) -> Result<Self, TheoryError> {
        if points.is_empty() {
            return Err(TheoryError::EmptyFeatureSet);
        }
        let dim = points[0].len();
        for (i, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(TheoryError::DimensionMismatch {
                    expected: dim,
                    got: p.len(),
                });
            }
            if !p.iter().all(|x| x.is_finite()) {
                return Err(TheoryError::Invalid(format!("point {i} is not finite")));
            }
        }
        for i in 0..points.len() {
            for j in (i + 1)..points.len() {
                let gap = points[i]
                    .iter()
                    .zip(&points[j])
                    .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
                if gap <= 1e-12 {
                    return Err(TheoryError::DuplicateFeature(i, j));
                }
            }
        }
        Ok(FeatureSet { points, dim })
    }

    /// Like `new` but silently drops later duplicates instead of failing.
    pub fn dedup(points: Vec<Vector>) -> Result<Self, TheoryError> {
        let mut kept: Vec<Vector> = Vec::new();
        for p in points {
            let dup = kept.iter().any(|q| {
                p.iter()
                    .zip(q)
                    .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
                    <= 1e-12
            });
            if !dup {
                kept.push(p);
            }
        }
        FeatureSet::new(kept)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.points[k]
    }

    pub fn points(&self) -> &[Vector] {
        &self.points
    }
}
