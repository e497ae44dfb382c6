//! Dense row-major matrices over f64 and a cyclic-Jacobi symmetric
//! eigendecomposition. Vectors are plain `Vec<f64>` with free helper
//! functions; everything here is shape-checked at the boundaries.

use crate::error::CoreError;

/// Column vector; row slices of a [`Matrix`] deref to `&[f64]`.
pub type Vector = Vec<f64>;

/// Dense row-major matrix of 64-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn diag(entries: &[f64]) -> Self {
        let n = entries.len();
        let mut m = Matrix::zeros(n, n);
        for (i, &e) in entries.iter().enumerate() {
            m.data[i * n + i] = e;
        }
        m
    }

    /// Builds from a flat row-major buffer. Length must equal rows*cols.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, CoreError> {
        if data.len() != rows * cols {
            return Err(CoreError::ShapeMismatch {
                expected: format!("{} entries", rows * cols),
                got: format!("{}", data.len()),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, CoreError> {
        if rows.is_empty() {
            return Ok(Matrix::zeros(0, 0));
        }
        let cols = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(CoreError::ShapeMismatch {
                    expected: format!("row of length {cols}"),
                    got: format!("{}", r.len()),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn col(&self, c: usize) -> Vector {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        t
    }

    /// `self * other`, shape-checked.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix, CoreError> {
        if self.cols != other.rows {
            return Err(CoreError::ShapeMismatch {
                expected: format!("lhs cols == rhs rows ({})", self.cols),
                got: format!("{}", other.rows),
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        // i-k-j loop order keeps both operands in row-major streaming access.
        for i in 0..self.rows {
            let a_row = self.row(i);
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &aik) in a_row.iter().enumerate() {
                if aik == 0.0 {
                    continue;
                }
                let b_row = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, &b) in out_row.iter_mut().zip(b_row.iter()) {
                    *o += aik * b;
                }
            }
        }
        Ok(out)
    }

    /// `self * v` for a column vector.
    pub fn matvec(&self, v: &[f64]) -> Result<Vector, CoreError> {
        if self.cols != v.len() {
            return Err(CoreError::ShapeMismatch {
                expected: format!("vector of length {}", self.cols),
                got: format!("{}", v.len()),
            });
        }
        Ok((0..self.rows).map(|r| dot(self.row(r), v)).collect())
    }

    pub fn scaled(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x * s).collect(),
        }
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix, CoreError> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix, CoreError> {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Result<Matrix, CoreError> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(CoreError::ShapeMismatch {
                expected: format!("{}x{}", self.rows, self.cols),
                got: format!("{}x{}", other.rows, other.cols),
            });
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(other.data.iter())
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Mean of the rows.
    pub fn mean_row(&self) -> Vector {
        let mut mean = vec![0.0; self.cols];
        for r in 0..self.rows {
            for (m, &x) in mean.iter_mut().zip(self.row(r)) {
                *m += x;
            }
        }
        let inv = 1.0 / self.rows as f64;
        for m in &mut mean {
            *m *= inv;
        }
        mean
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vector {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vector {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn scale(a: &[f64], s: f64) -> Vector {
    a.iter().map(|x| x * s).collect()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Spectrum of a symmetric matrix: eigenvalues ascending, eigenvectors as
/// orthonormal columns in matching order.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub eigenvalues: Vector,
    pub eigenvectors: Matrix,
}

impl EigenDecomposition {
    /// Spectral norm of the decomposed matrix (largest |eigenvalue|).
    pub fn spectral_norm(&self) -> f64 {
        self.eigenvalues.iter().fold(0.0_f64, |m, l| m.max(l.abs()))
    }

    /// Rebuilds V diag(f(lambda)) V' — used for matrix square roots and
    /// spectral projections.
    pub fn apply_spectral(&self, f: impl Fn(f64) -> f64) -> Matrix {
        let n = self.eigenvalues.len();
        let v = &self.eigenvectors;
        let mut out = Matrix::zeros(n, n);
        for k in 0..n {
            let fl = f(self.eigenvalues[k]);
            if fl == 0.0 {
                continue;
            }
            for i in 0..n {
                let vik = v.get(i, k);
                if vik == 0.0 {
                    continue;
                }
                for j in 0..n {
                    let x = out.get(i, j) + fl * vik * v.get(j, k);
                    out.set(i, j, x);
                }
            }
        }
        out
    }
}

const MAX_JACOBI_SWEEPS: usize = 64;

/// Eigendecomposition of a symmetric matrix by the cyclic Jacobi method.
///
/// Requires a square matrix, finite entries, and symmetry within 1e-12
/// relative asymmetry. Eigenvalues come back ascending; the eigenvector
/// matrix is orthonormal to machine precision.
pub fn sym_eigen(a: &Matrix) -> Result<EigenDecomposition, CoreError> {
    if a.rows != a.cols {
        return Err(CoreError::NotSquare {
            rows: a.rows,
            cols: a.cols,
        });
    }
    for r in 0..a.rows {
        for c in 0..a.cols {
            if !a.get(r, c).is_finite() {
                return Err(CoreError::NonFinite { row: r, col: c });
            }
        }
    }
    let scale_abs = a.max_abs().max(1.0);
    let mut asym = 0.0_f64;
    for r in 0..a.rows {
        for c in (r + 1)..a.cols {
            asym = asym.max((a.get(r, c) - a.get(c, r)).abs());
        }
    }
    if asym > 1e-12 * scale_abs {
        return Err(CoreError::NotSymmetric { asymmetry: asym });
    }

    let n = a.rows;
    let mut m = a.clone();
    // Symmetrize exactly so rotations preserve symmetry bit-for-bit.
    for r in 0..n {
        for c in (r + 1)..n {
            let avg = 0.5 * (m.get(r, c) + m.get(c, r));
            m.set(r, c, avg);
            m.set(c, r, avg);
        }
    }
    let mut v = Matrix::identity(n);

    for _sweep in 0..MAX_JACOBI_SWEEPS {
        let mut off = 0.0_f64;
        for r in 0..n {
            for c in (r + 1)..n {
                off += m.get(r, c) * m.get(r, c);
            }
        }
        if off.sqrt() <= 1e-15 * scale_abs * n as f64 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m.get(p, q);
                if apq.abs() <= 1e-18 * scale_abs {
                    continue;
                }
                let app = m.get(p, p);
                let aqq = m.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                // A <- J' A J with J the (p,q) Givens rotation.
                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let akp = m.get(k, p);
                    let akq = m.get(k, q);
                    let new_kp = c * akp - s * akq;
                    let new_kq = s * akp + c * akq;
                    m.set(k, p, new_kp);
                    m.set(p, k, new_kp);
                    m.set(k, q, new_kq);
                    m.set(q, k, new_kq);
                }
                m.set(p, p, app - t * apq);
                m.set(q, q, aqq + t * apq);
                m.set(p, q, 0.0);
                m.set(q, p, 0.0);

                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m.get(i, i).partial_cmp(&m.get(j, j)).unwrap());
    let eigenvalues: Vector = order.iter().map(|&i| m.get(i, i)).collect();
    let mut eigenvectors = Matrix::zeros(n, n);
    for (new_col, &old_col) in order.iter().enumerate() {
        for r in 0..n {
            eigenvectors.set(r, new_col, v.get(r, old_col));
        }
    }
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// Counts of non-negative and non-positive eigenvalues of a symmetric matrix.
///
/// Both counts use the non-strict convention: eigenvalues within `tol` of
/// zero contribute to both, so `nu_plus + nu_minus` can exceed the dimension.
pub fn inertia(a: &Matrix, tol: f64) -> Result<(usize, usize), CoreError> {
    if tol < 0.0 {
        return Err(CoreError::Invalid(format!("negative tolerance {tol}")));
    }
    let eig = sym_eigen(a)?;
    let nu_plus = eig.eigenvalues.iter().filter(|&&l| l >= -tol).count();
    let nu_minus = eig.eigenvalues.iter().filter(|&&l| l <= tol).count();
    Ok((nu_plus, nu_minus))
}

/// Default eigenvalue tolerance for a given symmetric matrix: 1e-9 * max(1, ''A''_2).
pub fn default_eigen_tol(eig: &EigenDecomposition) -> f64 {
    1e-9 * eig.spectral_norm().max(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Rng, Stream};

    fn random_symmetric(n: usize, rng: &mut Rng) -> Matrix {
        let mut m = Matrix::zeros(n, n);
        for r in 0..n {
            for c in r..n {
                let x = rng.normal();
                m.set(r, c, x);
                m.set(c, r, x);
            }
        }
        m
    }

    #[test]
    fn eigen_diagonal_matrix() {
        let a = Matrix::diag(&[2.0, -3.0, 0.0]);
        let eig = sym_eigen(&a).unwrap();
        assert_eq!(eig.eigenvalues, vec![-3.0, 0.0, 2.0]);
    }

    #[test]
    fn eigen_identity() {
        let eig = sym_eigen(&Matrix::identity(3)).unwrap();
        assert_eq!(eig.eigenvalues, vec![1.0, 1.0, 1.0]);
        let v = &eig.eigenvectors;
        let gram = v.transpose().matmul(v).unwrap();
        let err = gram.sub(&Matrix::identity(3)).unwrap().max_abs();
        assert!(err <= 1e-10);
    }

    #[test]
    fn eigen_reconstructs_random_symmetric() {
        let mut rng = Rng::with_stream(42, Stream::Probes);
        for _ in 0..20 {
            let a = random_symmetric(5, &mut rng);
            let eig = sym_eigen(&a).unwrap();
            let rebuilt = eig.apply_spectral(|l| l);
            let err = rebuilt.sub(&a).unwrap().frobenius_norm();
            assert!(
                err <= 1e-9 * a.frobenius_norm().max(1.0),
                "reconstruction error {err:e}"
            );
            let v = &eig.eigenvectors;
            let gram = v.transpose().matmul(v).unwrap();
            let orth = gram.sub(&Matrix::identity(5)).unwrap().max_abs();
            assert!(orth <= 1e-10, "orthonormality error {orth:e}");
            for w in eig.eigenvalues.windows(2) {
                assert!(w[0] <= w[1]);
            }
        }
    }

    #[test]
    fn eigen_rejects_bad_input() {
        let rect = Matrix::zeros(2, 3);
        assert!(matches!(
            sym_eigen(&rect),
            Err(CoreError::NotSquare { .. })
        ));
        let mut nan = Matrix::identity(2);
        nan.set(0, 1, f64::NAN);
        assert!(matches!(sym_eigen(&nan), Err(CoreError::NonFinite { .. })));
        let skew = Matrix::from_vec(2, 2, vec![0.0, 1.0, -1.0, 0.0]).unwrap();
        assert!(matches!(
            sym_eigen(&skew),
            Err(CoreError::NotSymmetric { .. })
        ));
    }

    #[test]
    fn inertia_counting_convention() {
        let a = Matrix::diag(&[2.0, -3.0, 0.0]);
        assert_eq!(inertia(&a, 1e-10).unwrap(), (2, 2));
        let b = Matrix::diag(&[1.0, 1.0]);
        assert_eq!(inertia(&b, 1e-10).unwrap(), (2, 0));
    }

    #[test]
    fn inertia_counts_sum_to_dim_plus_near_zeros() {
        let mut rng = Rng::with_stream(7, Stream::Probes);
        for _ in 0..10 {
            let a = random_symmetric(4, &mut rng);
            let tol = 1e-10;
            let (np, nm) = inertia(&a, tol).unwrap();
            let eig = sym_eigen(&a).unwrap();
            let near_zero = eig.eigenvalues.iter().filter(|l| l.abs() <= tol).count();
            assert_eq!(np + nm, 4 + near_zero);
        }
    }

    #[test]
    fn matmul_and_transpose_agree_with_hand_example() {
        let a = Matrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let b = Matrix::from_vec(3, 2, vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.data(), &[58.0, 64.0, 139.0, 154.0]);
        let t = a.transpose();
        assert_eq!(t.get(2, 1), 6.0);
        assert!(a.matmul(&a).is_err());
    }
}
