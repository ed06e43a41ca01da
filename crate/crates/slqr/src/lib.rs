//! Discounted stochastic LQR for discrete-time linear systems with
//! multiplicative and additive noise.
//!
//! The plant is `x_{k+1} = A x_k + B u_k + (C x_k + D u_k) d_k + w_k`
//! with scalar multiplicative noise `d_k ~ N(0,1)` and additive noise
//! `w_k ~ N(0, W)`; the objective is the discounted quadratic cost
//! `E(sum gamma^i (x_i^T Q x_i + u_i^T R u_i))` over a random initial
//! state `x_0 ~ N(0, X0)`.
//!
//! Two solution paths are provided:
//! - [`riccati::offline_pi`]: model-based policy iteration alternating a
//!   stochastic Lyapunov equation solve and a Riccati-style gain update.
//! - [`learner::model_free_pi`]: batch least-squares Q-learning policy
//!   iteration that sees the plant only through sampled rollouts.

pub mod error;
pub mod learner;
pub mod linalg;
pub mod qkernel;
pub mod riccati;
pub mod stability;
pub mod sysmodel;

pub use error::{Result, SlqrError};
