use super::lattice::{boundary_term, half_grid_samples, volterra_apply};
use super::picard::fixed_point;
use super::KernelSolution;
use crate::error::{Error, Result};
use crate::grid::{ScalarField1D, TriField};

/// `k_t` for a time-varying estimate, from the differentiated integral equation
///
/// ```text
/// G_t = -1/4 int lam_t(s/2) ds + 1/4 int int [lam_t G + lam G_t]
/// ```
///
/// solved by successive approximation given the kernel `g` of `lambda_hat`.
pub fn solve_kernel_time_derivative(
    lambda_hat: &ScalarField1D,
    lambda_hat_t: &ScalarField1D,
    g: &KernelSolution,
    tol: f64,
    max_iter: usize,
) -> Result<TriField> {
    let grid = lambda_hat.grid();
    if lambda_hat_t.grid() != grid || g.k.tri() != grid.tri() {
        return Err(Error::ShapeMismatch(
            "lambda_hat, lambda_hat_t and kernel grids differ".into(),
        ));
    }
    if !lambda_hat_t.is_finite() {
        return Err(Error::InvalidInput("lambda_hat_t is not finite".into()));
    }
    let defect = g.diagonal_defect(lambda_hat);
    if defect > 1e-8 * (1.0 + lambda_hat.sup_norm()) {
        return Err(Error::InvalidInput(format!(
            "kernel was not solved for this lambda_hat (diagonal defect {defect:e})"
        )));
    }
    let cells = grid.n_points() - 1;
    let rate = half_grid_samples(lambda_hat_t);
    let mut source = boundary_term(lambda_hat_t, cells);
    let forcing = volterra_apply(&rate, &g.characteristic);
    for (s, f) in source.values.iter_mut().zip(&forcing.values) {
        *s += f;
    }
    let (gt, _, _) = fixed_point(&half_grid_samples(lambda_hat), &source, tol, max_iter)?;
    Ok(gt.to_tri(grid.tri()))
}
