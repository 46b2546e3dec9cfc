//! Dense complex linear algebra for small Hermitian positive-definite matrices.
//!
//! Matrices here are tiny (one row per receive antenna), so everything is
//! row-major `Vec` storage and straightforward loops. The eigensolver is
//! cyclic Jacobi, which is slow for big inputs but accurate to a few ulps on
//! the sizes we care about.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use num_complex::Complex64;
// Supplies float math when nothing in the build links `std`.
#[allow(unused_imports)]
use num_traits::Float;
use thiserror::Error;

/// Relative tolerance used when checking `A == A^H`.
pub const HERMITIAN_TOLERANCE: f64 = 1e-12;

/// Maximum number of Jacobi sweeps before giving up.
pub const JACOBI_MAX_SWEEPS: usize = 30;

/// Off-diagonal Frobenius norm, relative to `‖A‖_F`, at which Jacobi stops.
pub const JACOBI_TOLERANCE: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix is {rows}x{cols}, expected a square matrix")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is empty")]
    Empty,
    #[error("entry count {len} does not match {rows}x{cols}")]
    BadShape {
        rows: usize,
        cols: usize,
        len: usize,
    },
    #[error("matrix is not Hermitian (|A[{row}][{col}] - conj(A[{col}][{row}])| too large)")]
    NotHermitian { row: usize, col: usize },
    #[error("matrix is not positive definite (pivot {pivot} is {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("Jacobi iteration did not converge in {sweeps} sweeps")]
    NoConvergence { sweeps: usize },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
}

/// Row-major dense complex matrix.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(try_from = "MatrixRepr", into = "MatrixRepr")
)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from row-major entries.
    pub fn from_row_major(
        rows: usize,
        cols: usize,
        data: Vec<Complex64>,
    ) -> Result<Self, LinalgError> {
        if data.len() != rows * cols {
            return Err(LinalgError::BadShape {
                rows,
                cols,
                len: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Real diagonal matrix.
    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = Complex64::new(d, 0.0);
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Row-major entries.
    #[inline]
    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * factor).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self, LinalgError> {
        self.same_shape(other)?;
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self, LinalgError> {
        self.same_shape(other)?;
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    pub fn matmul(&self, other: &Self) -> Result<Self, LinalgError> {
        if self.cols != other.rows {
            return Err(LinalgError::DimensionMismatch {
                left: self.cols,
                right: other.rows,
            });
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    /// `A x`.
    pub fn mul_vec(&self, x: &[Complex64]) -> Result<Vec<Complex64>, LinalgError> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.rows];
        self.mul_vec_into(x, &mut out)?;
        Ok(out)
    }

    /// `out = A x` without allocating.
    pub fn mul_vec_into(&self, x: &[Complex64], out: &mut [Complex64]) -> Result<(), LinalgError> {
        if x.len() != self.cols {
            return Err(LinalgError::DimensionMismatch {
                left: self.cols,
                right: x.len(),
            });
        }
        if out.len() != self.rows {
            return Err(LinalgError::DimensionMismatch {
                left: self.rows,
                right: out.len(),
            });
        }
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.row(i).iter().zip(x).map(|(a, b)| a * b).sum();
        }
        Ok(())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Checks `|A_ij - conj(A_ji)| <= tol * max|A|` for all entries.
    pub fn check_hermitian(&self, tol: f64) -> Result<(), LinalgError> {
        self.check_square()?;
        let bound = tol * self.max_abs();
        for i in 0..self.rows {
            for j in i..self.cols {
                if (self[(i, j)] - self[(j, i)].conj()).norm() > bound {
                    return Err(LinalgError::NotHermitian { row: i, col: j });
                }
            }
        }
        Ok(())
    }

    pub fn is_hermitian(&self) -> bool {
        self.check_hermitian(HERMITIAN_TOLERANCE).is_ok()
    }

    fn check_square(&self) -> Result<(), LinalgError> {
        if !self.is_square() {
            return Err(LinalgError::NotSquare {
                rows: self.rows,
                cols: self.cols,
            });
        }
        if self.rows == 0 {
            return Err(LinalgError::Empty);
        }
        Ok(())
    }

    fn same_shape(&self, other: &Self) -> Result<(), LinalgError> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(LinalgError::DimensionMismatch {
                left: self.rows * self.cols,
                right: other.rows * other.cols,
            });
        }
        Ok(())
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Serialized form: shape plus `[re, im]` pairs in row-major order.
#[cfg(feature = "serde")]
#[derive(serde::Serialize, serde::Deserialize)]
struct MatrixRepr {
    rows: usize,
    cols: usize,
    entries: Vec<[f64; 2]>,
}

#[cfg(feature = "serde")]
impl From<ComplexMatrix> for MatrixRepr {
    fn from(m: ComplexMatrix) -> Self {
        MatrixRepr {
            rows: m.rows,
            cols: m.cols,
            entries: m.data.iter().map(|z| [z.re, z.im]).collect(),
        }
    }
}

#[cfg(feature = "serde")]
impl TryFrom<MatrixRepr> for ComplexMatrix {
    type Error = LinalgError;

    fn try_from(r: MatrixRepr) -> Result<Self, LinalgError> {
        let data = r
            .entries
            .iter()
            .map(|&[re, im]| Complex64::new(re, im))
            .collect();
        ComplexMatrix::from_row_major(r.rows, r.cols, data)
    }
}

/// Eigendecomposition `A = V diag(λ) V^H` of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Unitary; column `i` belongs to `eigenvalues[i]`.
    pub eigenvectors: ComplexMatrix,
}

impl HermitianEigen {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `V diag(f(λ)) V^H`.
    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> ComplexMatrix {
        let n = self.dim();
        let v = &self.eigenvectors;
        let weights: Vec<f64> = self.eigenvalues.iter().map(|&l| f(l)).collect();
        ComplexMatrix::from_fn(n, n, |i, j| {
            (0..n)
                .map(|k| v[(i, k)] * v[(j, k)].conj() * weights[k])
                .sum()
        })
    }

    pub fn reconstruct(&self) -> ComplexMatrix {
        self.map(|l| l)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues[0]
    }

    fn require_positive(&self) -> Result<(), LinalgError> {
        match self.eigenvalues.iter().position(|&l| !(l > 0.0)) {
            Some(pivot) => Err(LinalgError::NotPositiveDefinite {
                pivot,
                value: self.eigenvalues[pivot],
            }),
            None => Ok(()),
        }
    }

    /// Principal square root.
    pub fn sqrt(&self) -> Result<ComplexMatrix, LinalgError> {
        self.require_positive()?;
        Ok(self.map(f64::sqrt))
    }

    /// Inverse of the principal square root.
    pub fn inv_sqrt(&self) -> Result<ComplexMatrix, LinalgError> {
        self.require_positive()?;
        Ok(self.map(|l| 1.0 / l.sqrt()))
    }

    pub fn inverse(&self) -> Result<ComplexMatrix, LinalgError> {
        self.require_positive()?;
        Ok(self.map(|l| 1.0 / l))
    }

    pub fn determinant(&self) -> f64 {
        self.eigenvalues.iter().product()
    }
}

/// Eigendecomposition of a Hermitian matrix by cyclic complex Jacobi
/// rotations.
pub fn eig_hermitian(a: &ComplexMatrix) -> Result<HermitianEigen, LinalgError> {
    a.check_hermitian(HERMITIAN_TOLERANCE)?;
    let n = a.rows();

    // Work on the exactly Hermitian part.
    let mut m = ComplexMatrix::from_fn(n, n, |i, j| {
        if i == j {
            Complex64::new(a[(i, i)].re, 0.0)
        } else {
            (a[(i, j)] + a[(j, i)].conj()) * 0.5
        }
    });
    let mut v = ComplexMatrix::identity(n);
    let threshold = JACOBI_TOLERANCE * m.frobenius_norm();

    let mut sweeps = 0;
    while off_diagonal_norm(&m) > threshold {
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(LinalgError::NoConvergence { sweeps });
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                rotate(&mut m, &mut v, p, q);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| m[(x, x)].re.total_cmp(&m[(y, y)].re));
    let eigenvalues = order.iter().map(|&k| m[(k, k)].re).collect();
    let eigenvectors = ComplexMatrix::from_fn(n, n, |i, j| v[(i, order[j])]);
    Ok(HermitianEigen {
        eigenvalues,
        eigenvectors,
    })
}

fn off_diagonal_norm(m: &ComplexMatrix) -> f64 {
    let n = m.rows();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                acc += m[(i, j)].norm_sqr();
            }
        }
    }
    acc.sqrt()
}

/// One rotation `M <- J^H M J`, `V <- V J` annihilating `M[p][q]`.
///
/// `J` is a phase fix `diag(1, conj(e))` on `(p, q)` (making the pivot real)
/// followed by the classic real symmetric Jacobi rotation.
fn rotate(m: &mut ComplexMatrix, v: &mut ComplexMatrix, p: usize, q: usize) {
    let apq = m[(p, q)];
    let mag = apq.norm();
    if mag == 0.0 {
        return;
    }
    let phase = apq / mag;
    let app = m[(p, p)].re;
    let aqq = m[(q, q)].re;

    let theta = (aqq - app) / (2.0 * mag);
    let t = if theta >= 0.0 {
        1.0 / (theta + (theta * theta + 1.0).sqrt())
    } else {
        -1.0 / (-theta + (theta * theta + 1.0).sqrt())
    };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;

    let j_pp = Complex64::new(c, 0.0);
    let j_pq = Complex64::new(s, 0.0);
    let j_qp = -phase.conj() * s;
    let j_qq = phase.conj() * c;

    let n = m.rows();
    // Columns: M <- M J.
    for k in 0..n {
        let mkp = m[(k, p)];
        let mkq = m[(k, q)];
        m[(k, p)] = mkp * j_pp + mkq * j_qp;
        m[(k, q)] = mkp * j_pq + mkq * j_qq;
    }
    // Rows: M <- J^H M.
    for k in 0..n {
        let mpk = m[(p, k)];
        let mqk = m[(q, k)];
        m[(p, k)] = j_pp.conj() * mpk + j_qp.conj() * mqk;
        m[(q, k)] = j_pq.conj() * mpk + j_qq.conj() * mqk;
    }
    m[(p, q)] = Complex64::new(0.0, 0.0);
    m[(q, p)] = Complex64::new(0.0, 0.0);
    m[(p, p)] = Complex64::new(app - t * mag, 0.0);
    m[(q, q)] = Complex64::new(aqq + t * mag, 0.0);

    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = vkp * j_pp + vkq * j_qp;
        v[(k, q)] = vkp * j_pq + vkq * j_qq;
    }
}

/// Lower-triangular `L` with `L L^H = A` and a real positive diagonal.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    pub l: ComplexMatrix,
}

impl CholeskyFactor {
    /// Product of the squared diagonal entries.
    pub fn determinant(&self) -> f64 {
        (0..self.l.rows())
            .map(|i| self.l[(i, i)].re * self.l[(i, i)].re)
            .product()
    }

    pub fn reconstruct(&self) -> ComplexMatrix {
        self.l.matmul(&self.l.adjoint()).expect("square factor")
    }

    /// `out = L w`, exploiting the triangular structure.
    #[inline]
    pub fn mul_vec_into(&self, w: &[Complex64], out: &mut [Complex64]) {
        let n = self.l.rows();
        for i in 0..n {
            let row = self.l.row(i);
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..=i {
                acc += row[k] * w[k];
            }
            out[i] = acc;
        }
    }
}

/// Cholesky factorization of a Hermitian positive-definite matrix.
///
/// Positive definiteness is decided by the pivots: any pivot that is not
/// strictly positive is reported as [`LinalgError::NotPositiveDefinite`].
pub fn cholesky(a: &ComplexMatrix) -> Result<CholeskyFactor, LinalgError> {
    a.check_hermitian(HERMITIAN_TOLERANCE)?;
    let n = a.rows();
    let mut l = ComplexMatrix::zeros(n, n);
    for j in 0..n {
        let mut pivot = a[(j, j)].re;
        for k in 0..j {
            pivot -= l[(j, k)].norm_sqr();
        }
        if !(pivot > 0.0) {
            return Err(LinalgError::NotPositiveDefinite {
                pivot: j,
                value: pivot,
            });
        }
        let d = pivot.sqrt();
        l[(j, j)] = Complex64::new(d, 0.0);
        for i in (j + 1)..n {
            let mut acc = a[(i, j)];
            for k in 0..j {
                acc -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = acc / d;
        }
    }
    Ok(CholeskyFactor { l })
}

/// Determinant of a Hermitian positive-definite matrix via Cholesky.
pub fn det_hermitian_pd(a: &ComplexMatrix) -> Result<f64, LinalgError> {
    Ok(cholesky(a)?.determinant())
}

/// `W = C^{1/2} K^{-1/2}` with `C = ρK + I`.
///
/// `C` and `K` share an eigenbasis, so `W = V diag(sqrt((ρλ + 1)/λ)) V^H`
/// needs one eigendecomposition of `K` instead of two matrix square roots.
pub fn amrc_weight_matrix(k: &ComplexMatrix, rho: f64) -> Result<ComplexMatrix, LinalgError> {
    amrc_weight_matrix_from_eigen(&eig_hermitian(k)?, rho)
}

/// [`amrc_weight_matrix`] from a cached eigendecomposition of `K`.
pub fn amrc_weight_matrix_from_eigen(
    eig: &HermitianEigen,
    rho: f64,
) -> Result<ComplexMatrix, LinalgError> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(LinalgError::InvalidParameter(
            "rho must be positive and finite",
        ));
    }
    eig.require_positive()?;
    Ok(eig.map(|l| (rho * l + 1.0).sqrt() / l.sqrt()))
}
