//! Constrained dynamics for nonlinear nonholonomic constraints.
//!
//! * [`expr`]: closed expression language in `q1..qn`, `v1..vn`, `t` with
//!   exact dual-number gradients.
//! * [`engine`]: Lagrange-d'Alembert multipliers and accelerations.
//! * [`hamiltonian`]: the `4n+2`-dimensional extended phase space, its
//!   Hamiltonian, vector field, Poisson bracket and gauge transformation.
//! * [`action`]: discrete action functionals with stationarity and gauge
//!   invariance checks.
//! * [`integrate`]: RK4/RKF45 integration with drift monitoring and events.
//! * [`scenarios`]: Chaplygin sleigh models and the damped oscillator.
//!
//! All math is generic over [`Scalar`]; the aliases below fix the
//! common `f64` instantiations.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod action;
pub mod dual;
pub mod engine;
mod error;
pub mod expr;
pub mod hamiltonian;
pub mod integrate;
pub mod path;
pub mod scalar;
pub mod scenarios;

pub use dual::Dual;
pub use engine::{BaseForce, ConstraintSet, Diagnostics, MultiplierResult, SystemSpec};
pub use error::{Error, Result};
pub use expr::{EvalPoint, Expr, Gradient};
pub use hamiltonian::ExtendedPhasePoint;
pub use scalar::Scalar;

pub type Dual64 = Dual<f64>;
pub type Point = EvalPoint<f64>;
pub type PhasePoint = ExtendedPhasePoint<f64>;
pub type Multipliers = MultiplierResult<f64>;

/// How the multiplier formula is assembled; written into output metadata.
pub const MULTIPLIER_CONVENTION: &str = "h solves M h = b with M_ab = sum_i dD_a/dv_i dD_b/dv_i / m_i and \
b_a = -sum_i dD_a/dq_i v_i - dD_a/dt - sum_i dD_a/dv_i F0_i / m_i (from dD/dt = 0); \
single-constraint unit-mass form h = (dD/dv . grad U - dD/dq . v) / |dD/dv|^2";
