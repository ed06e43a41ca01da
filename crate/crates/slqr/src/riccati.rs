//! Model-based offline policy iteration for the stochastic algebraic
//! Riccati equation (SARE), plus an independent value-iteration oracle.

use nalgebra::DMatrix;

use crate::error::{Result, SlqrError};
use crate::linalg::SymMatrix;
use crate::qkernel;
use crate::stability::{self, CostKernel};
use crate::sysmodel::{CostSpec, Gain, SystemModel};

/// One recorded policy-iteration step: the gain that was evaluated, its
/// cost kernel, and the Frobenius norm of the subsequent gain update.
#[derive(Debug, Clone)]
pub struct PiIteration {
    pub index: usize,
    pub gain: Gain,
    pub kernel: CostKernel,
    pub gain_change: f64,
}

/// Full policy-iteration trace shared by the model-based solver and the
/// model-free learner.
#[derive(Debug, Clone)]
pub struct PiTrace {
    pub iterations: Vec<PiIteration>,
    pub converged: bool,
    pub final_gain: Gain,
    pub final_kernel: CostKernel,
}

/// Policy improvement:
/// `L = -(R + gamma B^T P B + gamma D^T P D)^{-1} (gamma B^T P A + gamma C^T P D)`.
/// The inverted block is `H_uu`, positive definite whenever `P` is PSD.
pub fn policy_improve(model: &SystemModel, cost: &CostSpec, kernel: &CostKernel) -> Result<Gain> {
    let h = qkernel::h_from_p(model, cost, kernel)?;
    qkernel::gain_from_h(&h)
}

/// Offline policy iteration: alternate SLE policy evaluation and policy
/// improvement from an admissible initial gain, stopping when the gain
/// update falls below `eps` or after `i_max` improvement steps.
pub fn offline_pi(
    model: &SystemModel,
    cost: &CostSpec,
    l0: &Gain,
    i_max: usize,
    eps: f64,
) -> Result<PiTrace> {
    if eps <= 0.0 {
        return Err(SlqrError::InvalidConfig("eps must be positive".into()));
    }
    if !stability::is_admissible(model, l0)? {
        let m = stability::closed_loop_matrix(model, l0)?;
        return Err(SlqrError::NotAdmissible {
            rho: crate::linalg::spectral_radius(&m)?,
        });
    }
    let mut gain = l0.clone();
    let mut iterations = Vec::new();
    let mut converged = false;
    for i in 0..i_max {
        let kernel =
            stability::solve_sle(model, cost, &gain).map_err(|e| SlqrError::EvaluationFailure {
                iteration: i,
                reason: e.to_string(),
            })?;
        let next = policy_improve(model, cost, &kernel)?;
        let change = (&next.l - &gain.l).norm();
        iterations.push(PiIteration {
            index: i,
            gain: gain.clone(),
            kernel,
            gain_change: change,
        });
        gain = next;
        if change < eps {
            converged = true;
            break;
        }
    }
    let final_kernel = stability::solve_sle(model, cost, &gain)?;
    Ok(PiTrace {
        iterations,
        converged,
        final_gain: gain,
        final_kernel,
    })
}

/// Right-hand side of the SARE at `P`:
/// `Q + gamma A^T P A + gamma C^T P C - H_xu H_uu^{-1} H_ux`.
fn sare_rhs(model: &SystemModel, cost: &CostSpec, kernel: &CostKernel) -> Result<DMatrix<f64>> {
    let h = qkernel::h_from_p(model, cost, kernel)?;
    let h_uu = SymMatrix::symmetrize(&h.h_uu());
    let chol = h_uu
        .into_matrix()
        .cholesky()
        .ok_or_else(|| SlqrError::Numeric("H_uu is not positive definite".into()))?;
    Ok(h.h_xx() - h.h_xu() * chol.solve(&h.h_ux()))
}

/// SARE defect `RHS(P) - P`; the zero matrix iff `P` solves the SARE.
pub fn sare_residual(
    model: &SystemModel,
    cost: &CostSpec,
    kernel: &CostKernel,
) -> Result<SymMatrix> {
    let rhs = sare_rhs(model, cost, kernel)?;
    Ok(SymMatrix::symmetrize(&(rhs - kernel.p.as_matrix())))
}

/// Brute-force value iteration `P <- RHS(P)` from `P0 = Q`; independent
/// oracle for the optimal kernel.
pub fn value_iteration_sare(
    model: &SystemModel,
    cost: &CostSpec,
    iters: usize,
) -> Result<CostKernel> {
    if iters == 0 {
        return Err(SlqrError::InvalidConfig(
            "value iteration needs at least one step".into(),
        ));
    }
    let mut kernel = CostKernel {
        p: cost.q.clone(),
    };
    for _ in 0..iters {
        let rhs = sare_rhs(model, cost, &kernel)?;
        if rhs.amax() > 1e12 {
            return Err(SlqrError::Numeric("value iteration diverged".into()));
        }
        kernel = CostKernel {
            p: SymMatrix::symmetrize(&rhs),
        };
    }
    Ok(kernel)
}
