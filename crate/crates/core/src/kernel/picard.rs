use std::time::Instant;

use super::lattice::{boundary_term, half_grid_samples, volterra_apply, Lattice};
use super::{check_lambda, KernelSolution};
use crate::error::{Error, Result};
use crate::grid::ScalarField1D;

/// Successive approximation `G <- B + Q_coef(G)` on the characteristic lattice.
pub(crate) fn fixed_point(
    half_coef: &[f64],
    source: &Lattice,
    tol: f64,
    max_iter: usize,
) -> Result<(Lattice, usize, f64)> {
    let mut current = source.clone();
    let mut residual = f64::INFINITY;
    for iter in 1..=max_iter {
        let mut next = volterra_apply(half_coef, &current);
        for (n, s) in next.values.iter_mut().zip(&source.values) {
            *n += s;
        }
        residual = next.sup_diff(&current);
        current = next;
        if !residual.is_finite() {
            break;
        }
        if residual < tol {
            return Ok((current, iter, residual));
        }
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        residual,
    })
}

/// Kernel by successive approximation of the integral equation.
pub fn solve_kernel_picard(
    lambda_hat: &ScalarField1D,
    tol: f64,
    max_iter: usize,
) -> Result<KernelSolution> {
    check_lambda(lambda_hat)?;
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!(
            "tol must be positive, got {tol}"
        )));
    }
    let start = Instant::now();
    let cells = lambda_hat.grid().n_points() - 1;
    let half = half_grid_samples(lambda_hat);
    let source = boundary_term(lambda_hat, cells);
    let (g, iterations, residual) = fixed_point(&half, &source, tol, max_iter)?;
    Ok(KernelSolution {
        k: g.to_tri(lambda_hat.grid().tri()),
        iterations,
        residual,
        solve_time: start.elapsed().as_secs_f64(),
        characteristic: g,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid1D;

    #[test]
    fn zero_data_gives_zero_kernel() {
        let g = Grid1D::new(21).unwrap();
        let sol = solve_kernel_picard(&ScalarField1D::zeros(g), 1e-10, 200).unwrap();
        assert_eq!(sol.k.sup_norm(), 0.0);
    }

    #[test]
    fn diagonal_forced_for_linear_lambda() {
        let g = Grid1D::new(51).unwrap();
        let lam = ScalarField1D::from_fn(g, |x| x);
        let sol = solve_kernel_picard(&lam, 1e-12, 200).unwrap();
        for (i, x) in g.nodes().enumerate() {
            assert!((sol.k.get(i, i) + x * x / 4.0).abs() < 1e-10);
            assert_eq!(sol.k.get(i, 0), 0.0);
        }
    }

    #[test]
    fn reports_non_convergence() {
        let g = Grid1D::new(21).unwrap();
        let lam = ScalarField1D::from_fn(g, |_| 40.0);
        let err = solve_kernel_picard(&lam, 1e-12, 3).unwrap_err();
        assert!(matches!(err, Error::NonConvergence { iterations: 3, residual } if residual > 0.0));
    }

    #[test]
    fn rejects_bad_tolerance() {
        let g = Grid1D::new(5).unwrap();
        assert!(solve_kernel_picard(&ScalarField1D::zeros(g), 0.0, 10).is_err());
    }
}
