//! The plant `x' = A x + B u + (C x + D u) d + w` with scalar
//! multiplicative noise `d ~ N(0,1)` and additive noise `w ~ N(0,W)`,
//! plus seeded trajectory sampling and exact second-moment recursions.
//!
//! Sampling contract: all Gaussian draws come from a caller-supplied
//! seeded stream. `step` consumes exactly `1 + n` standard normals in a
//! fixed order (the scalar `d` first, then the `n` components mapped
//! through a fixed symmetric square root of `W`). `rollout` consumes
//! `n` normals for the initial state, then `m` probing normals before
//! each recorded input and `1 + n` per transition. Identical seeds give
//! bit-identical trajectories.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_distr::StandardNormal;

use crate::error::{Result, SlqrError};
use crate::linalg::SymMatrix;

/// Tolerance on the smallest eigenvalue when accepting a covariance as PSD.
pub const PSD_TOL: f64 = 1e-10;

/// The plant of the stochastic linear system, with noise covariances.
#[derive(Debug, Clone)]
pub struct SystemModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub w: SymMatrix,
    pub x0: SymMatrix,
    sqrt_w: DMatrix<f64>,
    sqrt_x0: DMatrix<f64>,
}

/// Symmetric PSD square root via eigendecomposition, with small negative
/// eigenvalues (within `PSD_TOL`) clamped to zero.
fn psd_sqrt(s: &SymMatrix, name: &'static str) -> Result<DMatrix<f64>> {
    let eig = s.as_matrix().clone().symmetric_eigen();
    let scale = s.as_matrix().amax().max(1.0);
    let mut vals = eig.eigenvalues;
    for v in vals.iter_mut() {
        if *v < -PSD_TOL * scale {
            return Err(SlqrError::Numeric(format!(
                "{name} is not positive semidefinite (eigenvalue {v:.3e})"
            )));
        }
        *v = v.max(0.0).sqrt();
    }
    let q = eig.eigenvectors;
    Ok(&q * DMatrix::from_diagonal(&vals) * q.transpose())
}

impl SystemModel {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
        w: SymMatrix,
        x0: SymMatrix,
    ) -> Result<Self> {
        let n = a.nrows();
        let m = b.ncols();
        if a.ncols() != n || c.nrows() != n || c.ncols() != n {
            return Err(SlqrError::DimensionMismatch(
                "A and C must be square with equal dimension".into(),
            ));
        }
        if b.nrows() != n || d.nrows() != n || d.ncols() != m {
            return Err(SlqrError::DimensionMismatch(
                "B and D must be n x m".into(),
            ));
        }
        if w.dim() != n || x0.dim() != n {
            return Err(SlqrError::DimensionMismatch(
                "W and X0 must be n x n".into(),
            ));
        }
        let sqrt_w = psd_sqrt(&w, "W")?;
        let sqrt_x0 = psd_sqrt(&x0, "X0")?;
        Ok(Self {
            a,
            b,
            c,
            d,
            w,
            x0,
            sqrt_w,
            sqrt_x0,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }
}

/// Quadratic cost weights and discount factor.
#[derive(Debug, Clone)]
pub struct CostSpec {
    pub q: SymMatrix,
    pub r: SymMatrix,
    pub gamma: f64,
}

impl CostSpec {
    pub fn new(q: SymMatrix, r: SymMatrix, gamma: f64) -> Result<Self> {
        if q.min_eigenvalue() <= 0.0 {
            return Err(SlqrError::InvalidConfig("Q must be positive definite".into()));
        }
        if r.min_eigenvalue() <= 0.0 {
            return Err(SlqrError::InvalidConfig("R must be positive definite".into()));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(SlqrError::InvalidConfig(format!(
                "discount factor must be in [0, 1), got {gamma}"
            )));
        }
        Ok(Self { q, r, gamma })
    }
}

/// A linear feedback policy `u = L x`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gain {
    pub l: DMatrix<f64>,
}

impl Gain {
    pub fn new(l: DMatrix<f64>) -> Self {
        Self { l }
    }

    pub fn zeros(input_dim: usize, state_dim: usize) -> Self {
        Self {
            l: DMatrix::zeros(input_dim, state_dim),
        }
    }
}

/// A sampled trajectory of `N + 1` (state, input) pairs. The final input
/// `u_N = L x_N + e_N` is recorded as well so the learner can form the
/// regression target at the last transition.
#[derive(Debug, Clone)]
pub struct Rollout {
    pub states: Vec<DVector<f64>>,
    pub inputs: Vec<DVector<f64>>,
}

impl Rollout {
    /// Number of transitions `N` (one less than the number of recorded pairs).
    pub fn len(&self) -> usize {
        self.states.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn draw_normals<R: Rng>(rng: &mut R, count: usize) -> DVector<f64> {
    DVector::from_fn(count, |_, _| rng.sample(StandardNormal))
}

/// One transition of the plant. Draws `d` first, then the `n` additive
/// noise normals.
pub fn step<R: Rng>(
    model: &SystemModel,
    x: &DVector<f64>,
    u: &DVector<f64>,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let n = model.state_dim();
    let m = model.input_dim();
    if x.len() != n || u.len() != m {
        return Err(SlqrError::DimensionMismatch(format!(
            "step: expected state dim {n} and input dim {m}, got {} and {}",
            x.len(),
            u.len()
        )));
    }
    let d: f64 = rng.sample(StandardNormal);
    let w = &model.sqrt_w * draw_normals(rng, n);
    Ok(&model.a * x + &model.b * u + (&model.c * x + &model.d * u) * d + w)
}

/// Samples a closed-loop trajectory under `u = L x + e` with probing
/// noise `e ~ N(0, probe_std^2 I)`. Records `n_steps + 1` pairs.
pub fn rollout<R: Rng>(
    model: &SystemModel,
    gain: &Gain,
    probe_std: f64,
    n_steps: usize,
    rng: &mut R,
) -> Result<Rollout> {
    let n = model.state_dim();
    let m = model.input_dim();
    if gain.l.nrows() != m || gain.l.ncols() != n {
        return Err(SlqrError::DimensionMismatch(format!(
            "rollout: gain must be {m} x {n}, got {} x {}",
            gain.l.nrows(),
            gain.l.ncols()
        )));
    }
    let mut states = Vec::with_capacity(n_steps + 1);
    let mut inputs = Vec::with_capacity(n_steps + 1);
    let mut x = &model.sqrt_x0 * draw_normals(rng, n);
    for k in 0..=n_steps {
        let probe = draw_normals(rng, m) * probe_std;
        let u = &gain.l * &x + probe;
        states.push(x.clone());
        inputs.push(u.clone());
        if k < n_steps {
            x = step(model, &x, &u, rng)?;
        }
    }
    Ok(Rollout { states, inputs })
}

/// One application of the closed-loop second-moment recursion:
/// `X' = (A+BL) X (A+BL)^T + (C+DL) X (C+DL)^T + W`.
pub fn covariance_step(model: &SystemModel, gain: &Gain, x: &SymMatrix) -> Result<SymMatrix> {
    if x.dim() != model.state_dim() {
        return Err(SlqrError::DimensionMismatch(
            "covariance_step: X must match the state dimension".into(),
        ));
    }
    let acl = &model.a + &model.b * &gain.l;
    let ccl = &model.c + &model.d * &gain.l;
    let next = &acl * x.as_matrix() * acl.transpose()
        + &ccl * x.as_matrix() * ccl.transpose()
        + model.w.as_matrix();
    Ok(SymMatrix::symmetrize(&next))
}

/// The unique stationary second moment of the closed loop, from the
/// `n^2 x n^2` linear system `(I - M) vec(X) = vec(W)`.
pub fn stationary_covariance(model: &SystemModel, gain: &Gain) -> Result<SymMatrix> {
    let m = crate::stability::closed_loop_matrix(model, gain)?;
    let rho = crate::linalg::spectral_radius(&m)?;
    if rho >= 1.0 - crate::stability::ADMISSIBILITY_MARGIN {
        return Err(SlqrError::NotAdmissible { rho });
    }
    let n = model.state_dim();
    let sys = DMatrix::identity(n * n, n * n) - m;
    let rhs = DVector::from_column_slice(model.w.as_matrix().as_slice());
    let sol = crate::linalg::solve_linear(&sys, &rhs)?;
    let x = DMatrix::from_column_slice(n, n, sol.as_slice());
    let sym = SymMatrix::symmetrize(&x);
    let scale = sym.as_matrix().amax().max(1.0);
    if sym.min_eigenvalue() < -PSD_TOL * scale {
        return Err(SlqrError::Numeric(
            "stationary covariance is not positive semidefinite".into(),
        ));
    }
    Ok(sym)
}

/// One-step cost `x^T Q x + u^T R u`.
pub fn one_step_cost(cost: &CostSpec, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
    (x.transpose() * cost.q.as_matrix() * x)[(0, 0)]
        + (u.transpose() * cost.r.as_matrix() * u)[(0, 0)]
}

/// SplitMix64 finalizer, used to spread structured substream ids over u64.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7785);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Deterministic substream for `(master_seed, index)`. Distinct indices
/// give statistically independent streams.
pub fn substream(master_seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(master_seed ^ splitmix64(index)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    pub fn paper_model() -> SystemModel {
        SystemModel::new(
            dmatrix![0.8, 1.0; 1.1, 2.0],
            dmatrix![0.2; 1.4],
            dmatrix![0.7, 0.0; -1.0, -0.5],
            dmatrix![-1.0; 0.8],
            SymMatrix::identity(2),
            SymMatrix::identity(2),
        )
        .unwrap()
    }

    fn noise_free_model() -> SystemModel {
        SystemModel::new(
            dmatrix![0.8, 1.0; 1.1, 2.0],
            dmatrix![0.2; 1.4],
            DMatrix::zeros(2, 2),
            DMatrix::zeros(2, 1),
            SymMatrix::zeros(2),
            SymMatrix::zeros(2),
        )
        .unwrap()
    }

    #[test]
    fn step_noise_free_is_linear() {
        let model = noise_free_model();
        let mut rng = substream(0, 0);
        let x = step(&model, &dvector![1.0, 0.0], &dvector![0.0], &mut rng).unwrap();
        assert!((x - dvector![0.8, 1.1]).amax() < 1e-15);
    }

    #[test]
    fn step_pure_additive_noise() {
        let model = SystemModel::new(
            DMatrix::zeros(2, 2),
            DMatrix::zeros(2, 1),
            DMatrix::zeros(2, 2),
            DMatrix::zeros(2, 1),
            SymMatrix::identity(2),
            SymMatrix::zeros(2),
        )
        .unwrap();
        // output equals the drawn w exactly: replay the stream by hand
        let mut rng = substream(7, 0);
        let x = step(&model, &dvector![0.0, 0.0], &dvector![0.0], &mut rng).unwrap();
        let mut replay = substream(7, 0);
        let _d: f64 = replay.sample(StandardNormal);
        let w = draw_normals(&mut replay, 2);
        assert_eq!(x, w);
    }

    #[test]
    fn step_is_deterministic_for_fixed_seed() {
        let model = paper_model();
        let run = || {
            let mut rng = substream(42, 0);
            step(&model, &dvector![1.0, 0.0], &dvector![0.0], &mut rng).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn rollout_shape_and_zero_case() {
        let model = noise_free_model();
        let gain = Gain::new(dmatrix![-1.4, -2.1]);
        let mut rng = substream(3, 0);
        let roll = rollout(&model, &gain, 0.0, 5, &mut rng).unwrap();
        assert_eq!(roll.states.len(), 6);
        assert_eq!(roll.inputs.len(), 6);
        // all noise sources zeroed: states stay identically zero
        for x in &roll.states {
            assert_eq!(x.amax(), 0.0);
        }
    }

    #[test]
    fn rollout_reproducible() {
        let model = paper_model();
        let gain = Gain::new(dmatrix![-1.4, -2.1]);
        let a = rollout(&model, &gain, 1.0, 50, &mut substream(9, 4)).unwrap();
        let b = rollout(&model, &gain, 1.0, 50, &mut substream(9, 4)).unwrap();
        assert_eq!(a.states, b.states);
        assert_eq!(a.inputs, b.inputs);
    }

    #[test]
    fn covariance_step_cases() {
        let model = paper_model();
        let gain = Gain::new(dmatrix![-1.4, -2.1]);
        let from_zero = covariance_step(&model, &gain, &SymMatrix::zeros(2)).unwrap();
        assert_eq!(from_zero.as_matrix(), model.w.as_matrix());

        // A+BL = I, C+DL = 0, W = 0 leaves X unchanged
        let model = SystemModel::new(
            DMatrix::identity(2, 2),
            DMatrix::zeros(2, 1),
            DMatrix::zeros(2, 2),
            DMatrix::zeros(2, 1),
            SymMatrix::zeros(2),
            SymMatrix::zeros(2),
        )
        .unwrap();
        let x = SymMatrix::new(dmatrix![2.0, 0.5; 0.5, 1.0]).unwrap();
        let next = covariance_step(&model, &Gain::zeros(1, 2), &x).unwrap();
        assert!((next.as_matrix() - x.as_matrix()).amax() < 1e-15);
    }

    #[test]
    fn covariance_step_preserves_psd() {
        let model = paper_model();
        let gain = Gain::new(dmatrix![-0.9319, -1.5784]);
        let mut x = SymMatrix::identity(2);
        for _ in 0..50 {
            x = covariance_step(&model, &gain, &x).unwrap();
            assert!(x.min_eigenvalue() >= -PSD_TOL);
        }
    }

    #[test]
    fn stationary_covariance_cases() {
        // A=B=C=D=0, W=I: stationary covariance is W
        let model = SystemModel::new(
            DMatrix::zeros(2, 2),
            DMatrix::zeros(2, 1),
            DMatrix::zeros(2, 2),
            DMatrix::zeros(2, 1),
            SymMatrix::identity(2),
            SymMatrix::zeros(2),
        )
        .unwrap();
        let x = stationary_covariance(&model, &Gain::zeros(1, 2)).unwrap();
        assert!((x.as_matrix() - DMatrix::identity(2, 2)).amax() < 1e-12);

        // scalar geometric series: A+BL = 0.5 I, W = I -> X = (4/3) I
        let model = SystemModel::new(
            DMatrix::identity(2, 2) * 0.5,
            DMatrix::zeros(2, 1),
            DMatrix::zeros(2, 2),
            DMatrix::zeros(2, 1),
            SymMatrix::identity(2),
            SymMatrix::zeros(2),
        )
        .unwrap();
        let x = stationary_covariance(&model, &Gain::zeros(1, 2)).unwrap();
        assert!((x.as_matrix() - DMatrix::identity(2, 2) * (4.0 / 3.0)).amax() < 1e-12);
    }

    #[test]
    fn stationary_matches_iteration_fixed_point() {
        let model = paper_model();
        let gain = Gain::new(dmatrix![-0.9319, -1.5784]);
        let direct = stationary_covariance(&model, &gain).unwrap();
        let mut x = model.x0.clone();
        for _ in 0..200 {
            x = covariance_step(&model, &gain, &x).unwrap();
        }
        assert!((direct.as_matrix() - x.as_matrix()).amax() < 1e-8);
    }

    #[test]
    fn one_step_cost_cases() {
        let cost = CostSpec::new(SymMatrix::identity(2), SymMatrix::identity(1), 0.7).unwrap();
        assert_eq!(one_step_cost(&cost, &dvector![0.0, 0.0], &dvector![0.0]), 0.0);
        assert_eq!(one_step_cost(&cost, &dvector![1.0, 2.0], &dvector![3.0]), 14.0);
        let mut rng = substream(11, 0);
        for _ in 0..20 {
            let x = draw_normals(&mut rng, 2);
            let u = draw_normals(&mut rng, 1);
            assert!(one_step_cost(&cost, &x, &u) >= 0.0);
        }
    }

    #[test]
    fn monte_carlo_second_moment_matches_stationary() {
        let model = paper_model();
        let gain = Gain::new(dmatrix![-0.9319, -1.5784]);
        let stat = stationary_covariance(&model, &gain).unwrap();
        let k = 40;
        let runs = 10_000;
        let mut acc = DMatrix::<f64>::zeros(2, 2);
        for i in 0..runs {
            let mut rng = substream(123, i);
            let roll = rollout(&model, &gain, 0.0, k, &mut rng).unwrap();
            let x = &roll.states[k];
            acc += x * x.transpose();
        }
        acc /= runs as f64;
        for i in 0..2 {
            for j in 0..2 {
                let want = stat.as_matrix()[(i, j)];
                assert!(
                    (acc[(i, j)] - want).abs() <= 0.05 * want.abs(),
                    "entry ({i},{j}): {} vs {}",
                    acc[(i, j)],
                    want
                );
            }
        }
    }
}
