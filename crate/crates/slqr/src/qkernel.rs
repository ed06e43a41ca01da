//! Q-function kernel algebra: the `(n+m) x (n+m)` symmetric matrix `H`
//! whose quadratic form (plus an additive-noise trace term) is the
//! state-action value of a fixed policy, and its exact links to the
//! cost kernel `P`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SlqrError};
use crate::linalg::SymMatrix;
use crate::stability::{self, CostKernel};
use crate::sysmodel::{CostSpec, Gain, SystemModel};

/// Q-function kernel with its named blocks.
#[derive(Debug, Clone)]
pub struct QKernel {
    pub h: SymMatrix,
    pub state_dim: usize,
    pub input_dim: usize,
}

impl QKernel {
    pub fn new(h: SymMatrix, state_dim: usize, input_dim: usize) -> Result<Self> {
        if h.dim() != state_dim + input_dim {
            return Err(SlqrError::DimensionMismatch(format!(
                "H must be {0} x {0}",
                state_dim + input_dim
            )));
        }
        Ok(Self {
            h,
            state_dim,
            input_dim,
        })
    }

    pub fn h_xx(&self) -> DMatrix<f64> {
        let n = self.state_dim;
        self.h.as_matrix().view((0, 0), (n, n)).into_owned()
    }

    pub fn h_xu(&self) -> DMatrix<f64> {
        let (n, m) = (self.state_dim, self.input_dim);
        self.h.as_matrix().view((0, n), (n, m)).into_owned()
    }

    pub fn h_ux(&self) -> DMatrix<f64> {
        let (n, m) = (self.state_dim, self.input_dim);
        self.h.as_matrix().view((n, 0), (m, n)).into_owned()
    }

    pub fn h_uu(&self) -> DMatrix<f64> {
        let (n, m) = (self.state_dim, self.input_dim);
        self.h.as_matrix().view((n, n), (m, m)).into_owned()
    }
}

/// Builds `H` from the cost kernel `P`:
/// `H_xx = Q + gamma A^T P A + gamma C^T P C`,
/// `H_xu = gamma A^T P B + gamma C^T P D`,
/// `H_uu = R + gamma B^T P B + gamma D^T P D`.
pub fn h_from_p(model: &SystemModel, cost: &CostSpec, kernel: &CostKernel) -> Result<QKernel> {
    let n = model.state_dim();
    let m = model.input_dim();
    if kernel.p.dim() != n {
        return Err(SlqrError::DimensionMismatch(
            "P must match the state dimension".into(),
        ));
    }
    let g = cost.gamma;
    let p = kernel.p.as_matrix();
    let h_xx = cost.q.as_matrix() + (model.a.transpose() * p * &model.a) * g
        + (model.c.transpose() * p * &model.c) * g;
    let h_xu =
        (model.a.transpose() * p * &model.b) * g + (model.c.transpose() * p * &model.d) * g;
    let h_uu = cost.r.as_matrix() + (model.b.transpose() * p * &model.b) * g
        + (model.d.transpose() * p * &model.d) * g;
    let mut h = DMatrix::zeros(n + m, n + m);
    h.view_mut((0, 0), (n, n)).copy_from(&h_xx);
    h.view_mut((0, n), (n, m)).copy_from(&h_xu);
    h.view_mut((n, 0), (m, n)).copy_from(&h_xu.transpose());
    h.view_mut((n, n), (m, m)).copy_from(&h_uu);
    QKernel::new(SymMatrix::symmetrize(&h), n, m)
}

/// Stacks `[I; L]` for the policy `u = L x`.
fn policy_stack(gain: &Gain) -> DMatrix<f64> {
    let n = gain.l.ncols();
    let m = gain.l.nrows();
    let mut s = DMatrix::zeros(n + m, n);
    s.view_mut((0, 0), (n, n)).copy_from(&DMatrix::identity(n, n));
    s.view_mut((n, 0), (m, n)).copy_from(&gain.l);
    s
}

/// Recovers the cost kernel of policy `L` from `H`: `P = [I;L]^T H [I;L]`.
pub fn p_from_h(kernel: &QKernel, gain: &Gain) -> Result<CostKernel> {
    if gain.l.nrows() != kernel.input_dim || gain.l.ncols() != kernel.state_dim {
        return Err(SlqrError::DimensionMismatch(format!(
            "gain must be {} x {}",
            kernel.input_dim, kernel.state_dim
        )));
    }
    let s = policy_stack(gain);
    let p = s.transpose() * kernel.h.as_matrix() * &s;
    Ok(CostKernel {
        p: SymMatrix::symmetrize(&p),
    })
}

/// Greedy gain `L = -H_uu^{-1} H_ux`.
pub fn gain_from_h(kernel: &QKernel) -> Result<Gain> {
    let h_uu = SymMatrix::symmetrize(&kernel.h_uu());
    if h_uu.min_eigenvalue() <= 1e-12 {
        return Err(SlqrError::Numeric(format!(
            "H_uu is not positive definite (min eigenvalue {:.3e})",
            h_uu.min_eigenvalue()
        )));
    }
    let chol = h_uu
        .into_matrix()
        .cholesky()
        .ok_or_else(|| SlqrError::Numeric("Cholesky of H_uu failed".into()))?;
    Ok(Gain::new(-chol.solve(&kernel.h_ux())))
}

/// Pointwise state-action value
/// `z^T H z + gamma/(1-gamma) tr(H [I;L] W [I;L]^T)` for `z = [x; u]`.
pub fn q_value(
    kernel: &QKernel,
    gain: &Gain,
    w: &SymMatrix,
    gamma: f64,
    x: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<f64> {
    if x.len() != kernel.state_dim || u.len() != kernel.input_dim {
        return Err(SlqrError::DimensionMismatch(
            "q_value: x, u must match the kernel dimensions".into(),
        ));
    }
    let z = DVector::from_iterator(x.len() + u.len(), x.iter().chain(u.iter()).copied());
    let s = policy_stack(gain);
    let sigma = &s * w.as_matrix() * s.transpose();
    let quad = (z.transpose() * kernel.h.as_matrix() * &z)[(0, 0)];
    Ok(quad + gamma / (1.0 - gamma) * (kernel.h.as_matrix() * sigma).trace())
}

/// Exact-expectation policy evaluation in `H`-space: the unique `H`
/// satisfying the Q-Bellman equation of policy `L`, computed through
/// the SLE (the two evaluations are equivalent).
pub fn exact_q_policy_evaluation(
    model: &SystemModel,
    cost: &CostSpec,
    gain: &Gain,
) -> Result<QKernel> {
    let p = stability::solve_sle(model, cost, gain)?;
    h_from_p(model, cost, &p)
}
