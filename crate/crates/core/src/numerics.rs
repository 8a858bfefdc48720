//! Dense complex linear algebra used by the signal model and the optimizer.
//!
//! Matrices are `nalgebra` dense matrices over `Complex64`. Everything here is a
//! pure function of its inputs.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Default bound on the 1-norm condition number accepted by [`inverse`].
pub const DEFAULT_CONDITION_LIMIT: f64 = 1e12;
/// Relative Hermitian-asymmetry tolerance accepted by [`psd_factor`].
pub const HERMITIAN_TOL: f64 = 1e-10;
const POWER_ITER_TOL: f64 = 1e-12;
const POWER_ITER_MAX: usize = 2000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericsError {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    DimensionMismatch {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("{op} requires a square matrix, got {rows}x{cols}")]
    NotSquare {
        op: &'static str,
        rows: usize,
        cols: usize,
    },
    #[error("matrix is singular or ill-conditioned (condition estimate {condition:e})")]
    SingularMatrix { condition: f64 },
    #[error("matrix is not Hermitian (relative asymmetry {asymmetry:e})")]
    NotHermitian { asymmetry: f64 },
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("matrix must have strictly positive dimensions, got {rows}x{cols}")]
    Empty { rows: usize, cols: usize },
    #[error("eigenvalue iteration did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },
}

pub type Result<T> = std::result::Result<T, NumericsError>;

#[inline]
pub fn c64(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Rejects empty or non-finite matrices.
pub fn check_matrix(a: &CMatrix) -> Result<()> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Err(NumericsError::Empty {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(NumericsError::NonFinite);
    }
    Ok(())
}

pub fn check_vector(v: &CVector) -> Result<()> {
    if v.is_empty() {
        return Err(NumericsError::Empty { rows: 0, cols: 1 });
    }
    if v.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(NumericsError::NonFinite);
    }
    Ok(())
}

pub fn matmul(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    if a.ncols() != b.nrows() {
        return Err(NumericsError::DimensionMismatch {
            op: "matmul",
            lhs: a.shape(),
            rhs: b.shape(),
        });
    }
    Ok(a * b)
}

fn one_norm(a: &CMatrix) -> f64 {
    (0..a.ncols())
        .map(|j| a.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Inverse with a 1-norm condition guard of [`DEFAULT_CONDITION_LIMIT`].
pub fn inverse(a: &CMatrix) -> Result<CMatrix> {
    inverse_with_limit(a, DEFAULT_CONDITION_LIMIT)
}

pub fn inverse_with_limit(a: &CMatrix, condition_limit: f64) -> Result<CMatrix> {
    if !a.is_square() {
        return Err(NumericsError::NotSquare {
            op: "inverse",
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    let inv = a
        .clone()
        .lu()
        .try_inverse()
        .ok_or(NumericsError::SingularMatrix {
            condition: f64::INFINITY,
        })?;
    let condition = one_norm(a) * one_norm(&inv);
    if !condition.is_finite() || condition > condition_limit {
        return Err(NumericsError::SingularMatrix { condition });
    }
    Ok(inv)
}

/// Hermitian eigendecomposition `a = Q diag(w) Q^H`, eigenvalues ascending.
pub fn hermitian_eigen(a: &CMatrix) -> (Vec<f64>, CMatrix) {
    let h = hermitian_part(a);
    let eig = h.symmetric_eigen();
    let n = a.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// `(a + a^H) / 2`.
pub fn hermitian_part(a: &CMatrix) -> CMatrix {
    (a + a.adjoint()) * c64(0.5, 0.0)
}

/// Largest singular value.
pub fn spectral_norm(a: &CMatrix) -> f64 {
    let gram = a.adjoint() * a;
    let (w, _) = hermitian_eigen(&gram);
    w.last().copied().unwrap_or(0.0).max(0.0).sqrt()
}

/// Returns `K` with `K K^H = a` for Hermitian PSD `a`.
///
/// `K = Q diag(sqrt(w))`, so `K^H K` is diagonal. Eigenvalues below
/// `-1e-10 * ||a||_2` are an error-free roundoff artifact and are clipped to
/// zero along with every other negative eigenvalue.
pub fn psd_factor(a: &CMatrix) -> Result<CMatrix> {
    if !a.is_square() {
        return Err(NumericsError::NotSquare {
            op: "psd_factor",
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    let scale = a.norm();
    let asymmetry = (a - a.adjoint()).norm();
    if asymmetry > HERMITIAN_TOL * scale.max(f64::MIN_POSITIVE) && asymmetry > 0.0 {
        return Err(NumericsError::NotHermitian {
            asymmetry: asymmetry / scale.max(f64::MIN_POSITIVE),
        });
    }
    if scale == 0.0 {
        return Ok(CMatrix::zeros(a.nrows(), a.ncols()));
    }
    let (w, q) = hermitian_eigen(a);
    let mut k = q;
    for (j, &lambda) in w.iter().enumerate() {
        let s = lambda.max(0.0).sqrt();
        k.column_mut(j).scale_mut(s);
    }
    Ok(k)
}

pub fn hadamard(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    if a.shape() != b.shape() {
        return Err(NumericsError::DimensionMismatch {
            op: "hadamard",
            lhs: a.shape(),
            rhs: b.shape(),
        });
    }
    Ok(a.component_mul(b))
}

/// Kronecker product with block `(i, j)` equal to `a[i, j] * b`.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// Column-stacking vectorization.
pub fn vec(a: &CMatrix) -> CVector {
    CVector::from_column_slice(a.as_slice())
}

/// Inverse of [`vec`].
pub fn unvec(v: &CVector, rows: usize, cols: usize) -> Result<CMatrix> {
    if v.len() != rows * cols {
        return Err(NumericsError::DimensionMismatch {
            op: "unvec",
            lhs: (v.len(), 1),
            rhs: (rows, cols),
        });
    }
    Ok(CMatrix::from_column_slice(rows, cols, v.as_slice()))
}

/// Main diagonal as stored.
pub fn diag_of(a: &CMatrix) -> Result<CVector> {
    if !a.is_square() {
        return Err(NumericsError::NotSquare {
            op: "diag_of",
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    Ok(a.diagonal())
}

/// `diag(a^H)`: the conjugated main diagonal.
pub fn diag_of_conj(a: &CMatrix) -> Result<CVector> {
    diag_of(a).map(|d| d.conjugate())
}

pub fn diag_from(v: &CVector) -> CMatrix {
    CMatrix::from_diagonal(v)
}

/// `Diag(v) * m` without forming the diagonal matrix.
pub fn diag_mul_left(v: &CVector, m: &CMatrix) -> CMatrix {
    let mut out = m.clone();
    for (i, mut row) in out.row_iter_mut().enumerate() {
        row *= v[i];
    }
    out
}

/// `m * Diag(v)` without forming the diagonal matrix.
pub fn diag_mul_right(m: &CMatrix, v: &CVector) -> CMatrix {
    let mut out = m.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col *= v[j];
    }
    out
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

/// Largest entry modulus.
pub fn max_abs(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn max_abs_vec(v: &CVector) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Real part of the trace.
pub fn re_trace(a: &CMatrix) -> f64 {
    a.diagonal().iter().map(|z| z.re).sum()
}

/// All eigenvalues of a general complex square matrix via the Schur form.
pub fn eigenvalues(a: &CMatrix) -> Result<Vec<C64>> {
    if !a.is_square() {
        return Err(NumericsError::NotSquare {
            op: "eigenvalues",
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    let n = a.nrows();
    if n == 1 {
        return Ok(vec![a[(0, 0)]]);
    }
    let schur = nalgebra::Schur::try_new(a.clone(), f64::EPSILON, 10_000)
        .ok_or(NumericsError::NoConvergence { iterations: 10_000 })?;
    let (_, t) = schur.unpack();
    Ok((0..n).map(|i| t[(i, i)]).collect())
}

/// Spectral radius by power iteration from a fixed start vector.
///
/// Falls back to the full Schur eigenvalues when the norm ratio stagnates
/// (e.g. several eigenvalues share the top modulus).
pub fn spectral_radius(a: &CMatrix) -> Result<f64> {
    if !a.is_square() {
        return Err(NumericsError::NotSquare {
            op: "spectral_radius",
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    let n = a.nrows();
    if max_abs(a) == 0.0 {
        return Ok(0.0);
    }
    // Irregular start so it is not orthogonal to a structured eigenvector.
    let mut v = CVector::from_fn(n, |i, _| {
        let t = i as f64 + 1.0;
        c64(1.0 + 0.37 * t.sin(), 0.21 * (1.7 * t).cos())
    });
    v /= c64(v.norm(), 0.0);
    let mut prev = f64::NAN;
    let mut stable = 0;
    for _ in 0..POWER_ITER_MAX {
        let w = a * &v;
        let ratio = w.norm();
        if ratio == 0.0 {
            return Ok(0.0);
        }
        v = w / c64(ratio, 0.0);
        if prev.is_finite() && (ratio - prev).abs() <= POWER_ITER_TOL * ratio {
            stable += 1;
            if stable >= 3 {
                return Ok(ratio);
            }
        } else {
            stable = 0;
        }
        prev = ratio;
    }
    let ev = eigenvalues(a)?;
    Ok(ev.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// Solves `m x = rhs` for Hermitian PSD `m`, via Cholesky when possible and
/// a pseudo-inverse otherwise.
pub fn solve_hermitian(m: &CMatrix, rhs: &CMatrix) -> CMatrix {
    let h = hermitian_part(m);
    if let Some(ch) = h.clone().cholesky() {
        let x = ch.solve(rhs);
        if x.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return x;
        }
    }
    let (w, q) = hermitian_eigen(&h);
    let wmax = w.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    let cutoff = wmax * 1e-14 * (w.len() as f64);
    let mut proj = q.adjoint() * rhs;
    for (i, &lambda) in w.iter().enumerate() {
        let s = if lambda > cutoff { 1.0 / lambda } else { 0.0 };
        proj.row_mut(i).scale_mut(s);
    }
    q * proj
}
