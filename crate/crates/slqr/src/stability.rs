//! Mean-square stability tests, the stochastic Lyapunov equation (SLE)
//! solver, and exact discounted-cost evaluation for a fixed gain.
//!
//! A gain `L` is *admissible* when the closed loop is asymptotically
//! square stationary, which holds exactly when the `n^2 x n^2` moment
//! matrix `M = (A+BL)⊗(A+BL) + (C+DL)⊗(C+DL)` has spectral radius
//! below one.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SlqrError};
use crate::linalg::{self, SymMatrix};
use crate::sysmodel::{CostSpec, Gain, SystemModel};

/// Margin used when testing strict inequalities on spectral radii.
pub const ADMISSIBILITY_MARGIN: f64 = 1e-9;

/// Quadratic cost kernel `P` of a fixed policy: the discounted value is
/// `V(x) = E(x^T P x) + gamma/(1-gamma) tr(P W)`.
#[derive(Debug, Clone)]
pub struct CostKernel {
    pub p: SymMatrix,
}

fn closed_loop_pair(model: &SystemModel, gain: &Gain) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = model.state_dim();
    let m = model.input_dim();
    if gain.l.nrows() != m || gain.l.ncols() != n {
        return Err(SlqrError::DimensionMismatch(format!(
            "gain must be {m} x {n}, got {} x {}",
            gain.l.nrows(),
            gain.l.ncols()
        )));
    }
    Ok((&model.a + &model.b * &gain.l, &model.c + &model.d * &gain.l))
}

/// The closed-loop second-moment matrix
/// `M = (A+BL)⊗(A+BL) + (C+DL)⊗(C+DL)`.
pub fn closed_loop_matrix(model: &SystemModel, gain: &Gain) -> Result<DMatrix<f64>> {
    let (acl, ccl) = closed_loop_pair(model, gain)?;
    Ok(linalg::kron(&acl, &acl) + linalg::kron(&ccl, &ccl))
}

/// True iff the closed loop is mean-square stable: `rho(M) < 1` with a
/// small strictness margin.
pub fn is_admissible(model: &SystemModel, gain: &Gain) -> Result<bool> {
    let m = closed_loop_matrix(model, gain)?;
    Ok(linalg::spectral_radius(&m)? < 1.0 - ADMISSIBILITY_MARGIN)
}

/// Solves the SLE
/// `P = gamma (A+BL)^T P (A+BL) + gamma (C+DL)^T P (C+DL) + L^T R L + Q`
/// by vectorization: using `vec(A^T P A) = (A ⊗ A)^T vec(P)`, the fixed
/// point satisfies `(I - gamma M^T) vec(P) = vec(Q + L^T R L)`.
pub fn solve_sle(model: &SystemModel, cost: &CostSpec, gain: &Gain) -> Result<CostKernel> {
    let n = model.state_dim();
    let m = closed_loop_matrix(model, gain)?;
    let grho = cost.gamma * linalg::spectral_radius(&m)?;
    if grho >= 1.0 - ADMISSIBILITY_MARGIN {
        return Err(SlqrError::NoUniqueSolution(grho));
    }
    let rhs_mat = cost.q.as_matrix() + gain.l.transpose() * cost.r.as_matrix() * &gain.l;
    let sys = DMatrix::identity(n * n, n * n) - m.transpose() * cost.gamma;
    let rhs = DVector::from_column_slice(rhs_mat.as_slice());
    let sol = linalg::solve_linear(&sys, &rhs)?;
    let p = SymMatrix::symmetrize(&DMatrix::from_column_slice(n, n, sol.as_slice()));

    // residual check against the defining equation
    let (acl, ccl) = closed_loop_pair(model, gain)?;
    let recon = acl.transpose() * p.as_matrix() * &acl * cost.gamma
        + ccl.transpose() * p.as_matrix() * &ccl * cost.gamma
        + rhs_mat;
    let resid = (p.as_matrix() - recon).amax();
    if resid > 1e-9 * (1.0 + p.as_matrix().amax()) {
        return Err(SlqrError::Numeric(format!(
            "SLE residual {resid:.3e} exceeds tolerance"
        )));
    }
    Ok(CostKernel { p })
}

/// Lemma 4's sufficient admissibility condition: true iff
/// `(Q + L^T R L)/(1 - gamma) - P` is positive definite to tolerance.
/// The condition is only sufficient — a `false` here does not imply the
/// gain is inadmissible (callers should report it as inconclusive and
/// fall back to the spectral test).
pub fn lemma4_check(cost: &CostSpec, gain: &Gain, kernel: &CostKernel) -> bool {
    let lhs = (cost.q.as_matrix() + gain.l.transpose() * cost.r.as_matrix() * &gain.l)
        / (1.0 - cost.gamma)
        - kernel.p.as_matrix();
    SymMatrix::symmetrize(&lhs).min_eigenvalue() > 1e-10
}

/// Smallest discount factor (to within `tol`) at which `lemma4_check`
/// passes for this gain, found by bisection on gamma upward. Returns
/// `None` when the condition fails across the whole scanned range.
pub fn min_gamma_lemma4(
    model: &SystemModel,
    cost: &CostSpec,
    gain: &Gain,
    tol: f64,
) -> Result<Option<f64>> {
    let passes = |g: f64| -> bool {
        let c = CostSpec {
            q: cost.q.clone(),
            r: cost.r.clone(),
            gamma: g,
        };
        match solve_sle(model, &c, gain) {
            Ok(k) => lemma4_check(&c, gain, &k),
            Err(_) => false,
        }
    };
    let mut hi = 0.999;
    if !passes(hi) {
        // scan downward for any passing gamma before giving up
        let found = (1..100).map(|i| i as f64 * 0.01).find(|&g| passes(g));
        match found {
            Some(g) => hi = g,
            None => return Ok(None),
        }
    }
    let mut lo = 0.0;
    if passes(lo) {
        return Ok(Some(0.0));
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if passes(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(hi))
}

/// Exact discounted cost of a fixed admissible gain over the random
/// initial state: `tr(P X0) + gamma/(1-gamma) tr(P W)`.
pub fn exact_cost(model: &SystemModel, cost: &CostSpec, gain: &Gain) -> Result<f64> {
    if !is_admissible(model, gain)? {
        let m = closed_loop_matrix(model, gain)?;
        return Err(SlqrError::NotAdmissible {
            rho: linalg::spectral_radius(&m)?,
        });
    }
    let kernel = solve_sle(model, cost, gain)?;
    let p = kernel.p.as_matrix();
    let discount = cost.gamma / (1.0 - cost.gamma);
    Ok((p * model.x0.as_matrix()).trace() + discount * (p * model.w.as_matrix()).trace())
}
