//! Adaptive boundary control of the reaction-diffusion equation
//! `u_t = u_xx + lam(x) u` on (0, 1) with `u(0) = 0`, `u(1) = U(t)` and unknown
//! `lam`, using backstepping gain kernels from exact solvers or a DeepONet
//! surrogate.

pub mod adaptive;
pub mod bench;
pub mod dataset;
pub mod error;
pub mod grid;
pub mod kernel;
pub mod noperator;
pub mod plant;

pub use error::{Error, Result};
