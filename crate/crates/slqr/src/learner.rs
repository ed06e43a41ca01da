//! Model-free policy iteration via batch least squares (BLS): collect
//! probed rollouts under the current gain, stack the Bellman regression
//! rows, solve for the Q-kernel `H`, improve the gain, repeat.
//!
//! The learner never touches the plant matrices `A, B, C, D`: it sees
//! the system only through the [`RolloutSampler`] interface. The
//! additive-noise covariance `W` is a declared input (it enters the
//! trace-correction rows), as is the probing-noise magnitude.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SlqrError};
use crate::linalg::{self, SymMatrix};
use crate::qkernel::{self, QKernel};
use crate::riccati::{PiIteration, PiTrace};
use crate::stability::CostKernel;
use crate::sysmodel::{self, CostSpec, Gain, Rollout, SystemModel};

/// Relative rank tolerance on the regression matrix: smallest singular
/// value of `Phi` must be at least this fraction of the largest.
pub const RANK_TOL: f64 = 1e-8;

/// Black-box rollout source. In-process it wraps a [`SystemModel`]; the
/// interface is the seam where a physical plant or remote simulator
/// could attach instead.
pub trait RolloutSampler {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    /// One trajectory of `n_steps` transitions under `u = L x + e` with
    /// probing noise of the given standard deviation. `substream_id`
    /// selects a deterministic random substream; equal ids replay the
    /// same noise realization (common random numbers).
    fn next_rollout(
        &self,
        gain: &Gain,
        probe_std: f64,
        n_steps: usize,
        substream_id: u64,
    ) -> Result<Rollout>;
}

/// Sampler backed by a simulated plant.
pub struct ModelSampler {
    model: SystemModel,
    master_seed: u64,
}

impl ModelSampler {
    pub fn new(model: SystemModel, master_seed: u64) -> Self {
        Self { model, master_seed }
    }
}

impl RolloutSampler for ModelSampler {
    fn state_dim(&self) -> usize {
        self.model.state_dim()
    }

    fn input_dim(&self) -> usize {
        self.model.input_dim()
    }

    fn next_rollout(
        &self,
        gain: &Gain,
        probe_std: f64,
        n_steps: usize,
        substream_id: u64,
    ) -> Result<Rollout> {
        let mut rng = sysmodel::substream(self.master_seed, substream_id);
        sysmodel::rollout(&self.model, gain, probe_std, n_steps, &mut rng)
    }
}

/// Learner configuration. `gamma` must agree with the discount of the
/// `CostSpec` passed alongside it.
#[derive(Debug, Clone)]
pub struct LearnerConfig {
    pub l0: Gain,
    pub gamma: f64,
    /// Rollout length `N` (transitions per rollout).
    pub n_steps: usize,
    /// Number of rollouts pooled per policy-iteration step.
    pub num_mean: usize,
    pub i_max: usize,
    pub eps: f64,
    pub probe_std: f64,
    pub master_seed: u64,
    /// Ablation switch: `false` drops the trace-correction rows entirely.
    pub trace_correction: bool,
}

impl LearnerConfig {
    pub fn validate(&self, state_dim: usize, input_dim: usize) -> Result<()> {
        let p = state_dim + input_dim;
        if self.l0.l.nrows() != input_dim || self.l0.l.ncols() != state_dim {
            return Err(SlqrError::InvalidConfig(format!(
                "L0 must be {input_dim} x {state_dim}"
            )));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(SlqrError::InvalidConfig(format!(
                "discount factor must be in [0, 1), got {}",
                self.gamma
            )));
        }
        if self.n_steps == 0 || self.num_mean == 0 {
            return Err(SlqrError::InvalidConfig(
                "n_steps and num_mean must be positive".into(),
            ));
        }
        if self.n_steps * self.num_mean < p * (p + 1) / 2 {
            return Err(SlqrError::InvalidConfig(format!(
                "N * num_mean = {} is below the rank requirement p(p+1)/2 = {}",
                self.n_steps * self.num_mean,
                p * (p + 1) / 2
            )));
        }
        if self.eps <= 0.0 {
            return Err(SlqrError::InvalidConfig("eps must be positive".into()));
        }
        if self.probe_std <= 0.0 {
            return Err(SlqrError::InvalidConfig(
                "probe_std must be positive (the regression matrix is rank-deficient without probing)"
                    .into(),
            ));
        }
        Ok(())
    }
}

/// Regression data for one policy: row `k` of `phi` is `vech(z_k z_k^T)`,
/// row `k` of `psi` is `vech(z_{k+1} z_{k+1}^T)`, `ups[k]` is the
/// one-step cost `c(z_k)`, and every row of `gam` is the trace-correction
/// vector `vech(sigma)`.
#[derive(Debug, Clone)]
pub struct DataMatrices {
    pub phi: DMatrix<f64>,
    pub psi: DMatrix<f64>,
    pub ups: DVector<f64>,
    pub gam: DMatrix<f64>,
    pub state_dim: usize,
    pub input_dim: usize,
}

fn phi_row(z: &DVector<f64>) -> DVector<f64> {
    linalg::vech(&SymMatrix::symmetrize(&(z * z.transpose())))
}

fn stack_z(x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(x.len() + u.len(), x.iter().chain(u.iter()).copied())
}

/// The correction matrix `sigma = [I;L] W [I;L]^T + probe_std^2 * blkdiag(0, I_m)`.
///
/// The first term removes the additive-noise bias from the Bellman rows;
/// the second removes the bias introduced by recording probed inputs in
/// the successor feature `phi(z_{k+1})` (the probe contributes
/// `probe_std^2 * tr(H_uu)` to its expectation). Both are known to the
/// learner without any model knowledge.
pub fn correction_matrix(gain: &Gain, w: &SymMatrix, probe_std: f64) -> SymMatrix {
    let n = gain.l.ncols();
    let m = gain.l.nrows();
    let mut s = DMatrix::zeros(n + m, n);
    s.view_mut((0, 0), (n, n)).copy_from(&DMatrix::identity(n, n));
    s.view_mut((n, 0), (m, n)).copy_from(&gain.l);
    let mut sigma = &s * w.as_matrix() * s.transpose();
    for i in 0..m {
        sigma[(n + i, n + i)] += probe_std * probe_std;
    }
    SymMatrix::symmetrize(&sigma)
}

/// Builds the regression rows for one rollout.
pub fn build_data_matrices(
    roll: &Rollout,
    gain: &Gain,
    cost: &CostSpec,
    w: &SymMatrix,
    probe_std: f64,
    trace_correction: bool,
) -> Result<DataMatrices> {
    let n = roll.states[0].len();
    let m = roll.inputs[0].len();
    if gain.l.nrows() != m || gain.l.ncols() != n {
        return Err(SlqrError::DimensionMismatch(format!(
            "gain must be {m} x {n}"
        )));
    }
    let big_n = roll.len();
    let p = n + m;
    let cols = p * (p + 1) / 2;
    let mut phi = DMatrix::zeros(big_n, cols);
    let mut psi = DMatrix::zeros(big_n, cols);
    let mut ups = DVector::zeros(big_n);
    let gam_row = if trace_correction {
        linalg::vech(&correction_matrix(gain, w, probe_std))
    } else {
        DVector::zeros(cols)
    };
    let mut gam = DMatrix::zeros(big_n, cols);
    for k in 0..big_n {
        let zk = stack_z(&roll.states[k], &roll.inputs[k]);
        let zk1 = stack_z(&roll.states[k + 1], &roll.inputs[k + 1]);
        phi.row_mut(k).copy_from(&phi_row(&zk).transpose());
        psi.row_mut(k).copy_from(&phi_row(&zk1).transpose());
        ups[k] = sysmodel::one_step_cost(cost, &roll.states[k], &roll.inputs[k]);
        gam.row_mut(k).copy_from(&gam_row.transpose());
    }
    Ok(DataMatrices {
        phi,
        psi,
        ups,
        gam,
        state_dim: n,
        input_dim: m,
    })
}

/// Vertically concatenates batches of data matrices.
pub fn pool_data_matrices(batches: &[DataMatrices]) -> Result<DataMatrices> {
    let first = batches
        .first()
        .ok_or_else(|| SlqrError::InvalidConfig("no data batches".into()))?;
    let cols = first.phi.ncols();
    let rows: usize = batches.iter().map(|b| b.phi.nrows()).sum();
    let mut phi = DMatrix::zeros(rows, cols);
    let mut psi = DMatrix::zeros(rows, cols);
    let mut ups = DVector::zeros(rows);
    let mut gam = DMatrix::zeros(rows, cols);
    let mut at = 0;
    for b in batches {
        if b.phi.ncols() != cols || b.state_dim != first.state_dim {
            return Err(SlqrError::DimensionMismatch(
                "inconsistent batch dimensions".into(),
            ));
        }
        let r = b.phi.nrows();
        phi.rows_mut(at, r).copy_from(&b.phi);
        psi.rows_mut(at, r).copy_from(&b.psi);
        ups.rows_mut(at, r).copy_from(&b.ups);
        gam.rows_mut(at, r).copy_from(&b.gam);
        at += r;
    }
    Ok(DataMatrices {
        phi,
        psi,
        ups,
        gam,
        state_dim: first.state_dim,
        input_dim: first.input_dim,
    })
}

/// BLS estimator: solves
/// `Phi^T (Phi + gamma Gam - gamma Psi) vecs(H) = Phi^T Ups`
/// after verifying `Phi` has full column rank to tolerance.
pub fn bls_estimate(data: &DataMatrices, gamma: f64) -> Result<QKernel> {
    let p = data.state_dim + data.input_dim;
    let cols = p * (p + 1) / 2;
    let svd = data.phi.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let ratio = if smax > 0.0 { smin / smax } else { 0.0 };
    if data.phi.nrows() < cols || ratio < RANK_TOL {
        return Err(SlqrError::Excitation {
            required: cols,
            ratio,
        });
    }
    let rhs_mat = &data.phi + (&data.gam - &data.psi) * gamma;
    let normal = data.phi.transpose() * rhs_mat;
    let target = data.phi.transpose() * &data.ups;
    let vecs_h = linalg::solve_linear(&normal, &target)?;
    let h = linalg::unvecs(&vecs_h, p)?;
    let kernel = QKernel::new(h, data.state_dim, data.input_dim)?;
    let h_uu = SymMatrix::symmetrize(&kernel.h_uu());
    if h_uu.min_eigenvalue() <= 1e-12 {
        return Err(SlqrError::Numeric(format!(
            "estimated H_uu is not positive definite (min eigenvalue {:.3e}); \
             the data volume may be too small",
            h_uu.min_eigenvalue()
        )));
    }
    Ok(kernel)
}

/// Model-free policy iteration (batch Q-learning). Each iteration pools
/// `num_mean` rollouts sampled under the current gain with probing
/// noise, estimates `H` by BLS, and takes the greedy gain. Rollout
/// substreams are keyed by batch index only, so successive iterations
/// reuse the same noise realizations (common random numbers); this makes
/// the iteration a deterministic fixed-point map and removes the
/// per-iteration resampling jitter that otherwise dominates near
/// convergence.
pub fn model_free_pi<S: RolloutSampler>(
    sampler: &S,
    cost: &CostSpec,
    w: &SymMatrix,
    config: &LearnerConfig,
) -> Result<PiTrace> {
    let n = sampler.state_dim();
    let m = sampler.input_dim();
    config.validate(n, m)?;
    if (config.gamma - cost.gamma).abs() > 1e-12 {
        return Err(SlqrError::InvalidConfig(format!(
            "config gamma {} disagrees with cost gamma {}",
            config.gamma, cost.gamma
        )));
    }
    if w.dim() != n {
        return Err(SlqrError::DimensionMismatch("W must be n x n".into()));
    }
    let mut gain = config.l0.clone();
    let mut iterations = Vec::new();
    let mut converged = false;
    let mut last_h: Option<QKernel> = None;
    for i in 0..config.i_max {
        let mut batches = Vec::with_capacity(config.num_mean);
        for q in 0..config.num_mean {
            let roll = sampler.next_rollout(&gain, config.probe_std, config.n_steps, q as u64)?;
            batches.push(build_data_matrices(
                &roll,
                &gain,
                cost,
                w,
                config.probe_std,
                config.trace_correction,
            )?);
        }
        let data = pool_data_matrices(&batches)?;
        let h = bls_estimate(&data, cost.gamma).map_err(|e| match e {
            err @ SlqrError::Excitation { .. } => err,
            other => SlqrError::EvaluationFailure {
                iteration: i,
                reason: other.to_string(),
            },
        })?;
        let kernel = qkernel::p_from_h(&h, &gain)?;
        let next = qkernel::gain_from_h(&h).map_err(|e| SlqrError::EvaluationFailure {
            iteration: i,
            reason: e.to_string(),
        })?;
        let change = (&next.l - &gain.l).norm();
        iterations.push(PiIteration {
            index: i,
            gain: gain.clone(),
            kernel,
            gain_change: change,
        });
        gain = next;
        last_h = Some(h);
        if change < config.eps {
            converged = true;
            break;
        }
    }
    let final_kernel = match &last_h {
        Some(h) => qkernel::p_from_h(h, &gain)?,
        None => CostKernel {
            p: SymMatrix::zeros(n),
        },
    };
    Ok(PiTrace {
        iterations,
        converged,
        final_gain: gain,
        final_kernel,
    })
}
