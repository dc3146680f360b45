//! Exact solvers for the backstepping gain kernel `k(x, y)`:
//!
//! ```text
//! k_xx - k_yy = lam(y) k   on T,     k(x, 0) = 0,     k(x, x) = -1/2 int_0^x lam
//! ```
//!
//! Two independent routes solve the same discretised integral equation (see
//! [`lattice`]): global successive approximation ([`solve_kernel_picard`])
//! and a single causal sweep ([`solve_kernel_march`]). The inverse kernel,
//! the kernel's time derivative and the certificate constants live here too.

mod bounds;
mod inverse;
pub(crate) mod lattice;
mod march;
mod picard;
mod time_derivative;

use rayon::prelude::*;

use crate::grid::{ScalarField1D, TriField};

pub use bounds::{certificate_constants, solve_eps_star, BoundsReport};
pub use inverse::solve_inverse_kernel;
pub use march::solve_kernel_march;
pub use picard::solve_kernel_picard;
pub use time_derivative::solve_kernel_time_derivative;

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 200;

#[derive(Debug, Clone)]
pub struct KernelSolution {
    pub k: TriField,
    pub iterations: usize,
    /// Sup-norm of the last successive-approximation increment (0 for the sweep).
    pub residual: f64,
    /// Wall-clock seconds.
    pub solve_time: f64,
    /// Solution on the full characteristic lattice, half-grid nodes included.
    pub(crate) characteristic: lattice::Lattice,
}

impl KernelSolution {
    /// `max_i |k(x_i, x_i) + 1/2 int_0^{x_i} lam|`.
    pub fn diagonal_defect(&self, lambda_hat: &ScalarField1D) -> f64 {
        let integral =
            crate::grid::cumulative_trapezoid(lambda_hat.values(), lambda_hat.grid().dx());
        (0..integral.len())
            .map(|i| (self.k.get(i, i) + 0.5 * integral[i]).abs())
            .fold(0.0, f64::max)
    }

    /// Largest violation of `|k(x, y)| <= lam_bar e^{2 lam_bar x}` (negative when it holds).
    pub fn growth_bound_violation(&self, lambda_bar: f64) -> f64 {
        let tri = self.k.tri();
        let grid = tri.grid();
        let mut worst = f64::NEG_INFINITY;
        for i in 0..tri.n_points() {
            let bound = lambda_bar * (2.0 * lambda_bar * grid.node(i)).exp();
            for &v in self.k.row(i) {
                worst = worst.max(v.abs() - bound);
            }
        }
        worst
    }
}

/// Solves many kernels with the sweep solver in parallel. Results keep input order.
pub fn solve_batch(lambdas: &[ScalarField1D]) -> Vec<KernelSolution> {
    lambdas.par_iter().map(solve_kernel_march).collect()
}

pub(crate) fn check_lambda(lambda_hat: &ScalarField1D) -> crate::Result<()> {
    if lambda_hat.grid().n_points() < 2 || !lambda_hat.is_finite() {
        return Err(crate::Error::InvalidInput(
            "lambda_hat must be finite on a grid with at least 2 points".into(),
        ));
    }
    Ok(())
}
