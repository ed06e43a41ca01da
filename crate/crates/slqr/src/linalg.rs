//! Dense matrix utilities: half-vectorizations of symmetric matrices,
//! Kronecker products, spectral radius and linear solves.
//!
//! The vech/vecs pair is fixed to lower-triangular column-major order,
//! `(s11, s21, .., sn1, s22, s32, .., snn)`, so that
//! `dot(vech(z z^T), vecs(H)) = z^T H z` holds positionally.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SlqrError};

/// Relative tolerance used when validating symmetry of inputs.
pub const SYM_TOL: f64 = 1e-12;

/// A symmetric matrix. Construction validates symmetry to a relative
/// tolerance and stores the exactly symmetrized average.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    mat: DMatrix<f64>,
}

impl SymMatrix {
    /// Validates that `mat` is square, finite and symmetric to within
    /// `SYM_TOL` relative tolerance, then stores `(M + M^T)/2`.
    pub fn new(mat: DMatrix<f64>) -> Result<Self> {
        if !mat.is_square() {
            return Err(SlqrError::DimensionMismatch(format!(
                "symmetric matrix must be square, got {}x{}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        if mat.iter().any(|x| !x.is_finite()) {
            return Err(SlqrError::NonFinite("SymMatrix"));
        }
        let scale = mat.amax().max(1.0);
        let asym = (&mat - mat.transpose()).amax();
        if asym > SYM_TOL * scale {
            return Err(SlqrError::NotSymmetric(asym / scale));
        }
        Ok(Self::symmetrize(&mat))
    }

    /// Stores `(M + M^T)/2` without a symmetry check. Used where the
    /// caller has just computed a symmetric expression and only wants
    /// roundoff cleaned up.
    pub fn symmetrize(mat: &DMatrix<f64>) -> Self {
        let sym = (mat + mat.transpose()) * 0.5;
        Self { mat: sym }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            mat: DMatrix::zeros(dim, dim),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            mat: DMatrix::identity(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.mat
    }

    /// Eigenvalues of the symmetric matrix, ascending.
    pub fn eigenvalues(&self) -> DVector<f64> {
        let mut ev: Vec<f64> = self
            .mat
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        DVector::from_vec(ev)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    pub fn trace(&self) -> f64 {
        self.mat.trace()
    }
}

/// Half-vectorization: stacks the lower triangle column by column.
/// Distinct off-diagonal entries appear once.
pub fn vech(s: &SymMatrix) -> DVector<f64> {
    let n = s.dim();
    let m = s.as_matrix();
    let mut v = DVector::zeros(n * (n + 1) / 2);
    let mut idx = 0;
    for j in 0..n {
        for i in j..n {
            v[idx] = m[(i, j)];
            idx += 1;
        }
    }
    v
}

/// Like [`vech`] but off-diagonal positions carry the sum
/// `s_ij + s_ji = 2 s_ij`. Satisfies `dot(vech(z z^T), vecs(H)) = z^T H z`.
pub fn vecs(s: &SymMatrix) -> DVector<f64> {
    let n = s.dim();
    let m = s.as_matrix();
    let mut v = DVector::zeros(n * (n + 1) / 2);
    let mut idx = 0;
    for j in 0..n {
        for i in j..n {
            v[idx] = if i == j { m[(i, j)] } else { 2.0 * m[(i, j)] };
            idx += 1;
        }
    }
    v
}

/// Inverse of [`vecs`]: `unvecs(vecs(S), n) == S` exactly.
pub fn unvecs(v: &DVector<f64>, n: usize) -> Result<SymMatrix> {
    let expected = n * (n + 1) / 2;
    if v.len() != expected {
        return Err(SlqrError::DimensionMismatch(format!(
            "unvecs: expected length {expected} for dim {n}, got {}",
            v.len()
        )));
    }
    let mut m = DMatrix::zeros(n, n);
    let mut idx = 0;
    for j in 0..n {
        for i in j..n {
            if i == j {
                m[(i, j)] = v[idx];
            } else {
                m[(i, j)] = v[idx] * 0.5;
                m[(j, i)] = v[idx] * 0.5;
            }
            idx += 1;
        }
    }
    Ok(SymMatrix { mat: m })
}

/// Standard Kronecker product, dimensions `(ra*rb) x (ca*cb)`.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// Largest absolute value over all (possibly complex) eigenvalues,
/// computed by a dense general eigensolver.
pub fn spectral_radius(m: &DMatrix<f64>) -> Result<f64> {
    if !m.is_square() {
        return Err(SlqrError::DimensionMismatch(format!(
            "spectral_radius needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.nrows() == 0 {
        return Ok(0.0);
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(SlqrError::NonFinite("spectral_radius input"));
    }
    // The unbounded Schur iteration can livelock on defective matrices
    // (e.g. the zero matrix), so bound it and fall back to a norm-based
    // estimate when it fails to converge.
    if let Some(schur) = m.clone().try_schur(1e-13, 20_000) {
        let rho = schur
            .complex_eigenvalues()
            .iter()
            .map(|c| c.norm())
            .fold(0.0, f64::max);
        if rho.is_finite() {
            return Ok(rho);
        }
    }
    Ok(radius_by_squaring(m))
}

/// Spectral radius via Gelfand's formula `rho = lim ||M^k||^(1/k)` with
/// `k = 2^60` reached by normalized repeated squaring. The polynomial
/// gap between the norm and the radius vanishes as the `2^60`-th root,
/// leaving full double precision.
fn radius_by_squaring(m: &DMatrix<f64>) -> f64 {
    let mut s = m.clone();
    let mut log_rho = 0.0_f64;
    let mut weight = 1.0_f64;
    for _ in 0..60 {
        let norm = s.norm();
        if norm == 0.0 {
            return 0.0;
        }
        log_rho += weight * norm.ln();
        s = (&s / norm) * (&s / norm);
        weight *= 0.5;
    }
    log_rho += weight * s.norm().max(f64::MIN_POSITIVE).ln();
    log_rho.exp()
}

/// Solves `A x = b` by partial-pivoting LU. Rejects matrices that are
/// singular to tolerance via a residual check against `1e-10 * (1 + |b|)`.
pub fn solve_linear(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if !a.is_square() || a.nrows() != b.len() {
        return Err(SlqrError::DimensionMismatch(format!(
            "solve_linear: A is {}x{}, b has length {}",
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    let lu = a.clone().lu();
    let x = lu.solve(b).ok_or(SlqrError::Singular)?;
    let residual = (a * &x - b).norm();
    if !x.iter().all(|v| v.is_finite()) || residual > 1e-10 * (1.0 + b.norm()) {
        return Err(SlqrError::Singular);
    }
    Ok(x)
}
