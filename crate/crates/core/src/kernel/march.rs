use std::time::Instant;

use super::lattice::{boundary_term, half_grid_samples, Lattice};
use super::KernelSolution;
use crate::grid::ScalarField1D;

/// Kernel by a single sweep over the characteristic lattice in increasing `xi`.
///
/// The double integral at `(a, b)` only touches nodes with `sig <= a` and
/// `s <= b`, so each node follows from already-computed values plus its own
/// trapezoid corner weight, which is solved for directly. Every node evaluates
/// its outer `sig` quadrature explicitly (O(a - b) work per node) from stored
/// column partial sums, giving O(N^3) total. Solves the same discrete system
/// as [`super::solve_kernel_picard`].
pub fn solve_kernel_march(lambda_hat: &ScalarField1D) -> KernelSolution {
    let start = Instant::now();
    let cells = lambda_hat.grid().n_points() - 1;
    let h = 1.0 / cells as f64;
    let h2 = h * h;
    let coef = half_grid_samples(lambda_hat);
    let source = boundary_term(lambda_hat, cells);

    let mut g = Lattice::zeros(cells);
    // f(sig, s) = coef(sig - s) G(sig, s) / 4 and its running sum over s.
    let mut f = Lattice::zeros(cells);
    let mut prefix = Lattice::zeros(cells);

    for a in 0..=2 * cells {
        let base = g.idx(a, 0);
        let g0 = source.values[base];
        g.values[base] = g0;
        let f0 = 0.25 * coef[a] * g0;
        f.values[base] = f0;
        prefix.values[base] = f0;

        for b in 1..=g.b_max(a) {
            let idx = base + b;
            let value = if a == b {
                0.0
            } else {
                // Outer trapezoid over sig in [b, a]; the sig = a term is split off.
                let col = |sig: usize| {
                    let i = prefix.idx(sig, b);
                    prefix.values[i] - 0.5 * (f.values[i - b] + f.values[i])
                };
                let mut outer = 0.5 * col(b);
                for sig in (b + 1)..a {
                    outer += col(sig);
                }
                let known_edge = 0.5 * (prefix.values[idx - 1] - 0.5 * f0);
                let self_weight = h2 * coef[a - b] / 16.0;
                (source.values[idx] + h2 * (outer + known_edge)) / (1.0 - self_weight)
            };
            g.values[idx] = value;
            let fv = 0.25 * coef[a - b] * value;
            f.values[idx] = fv;
            prefix.values[idx] = prefix.values[idx - 1] + fv;
        }
    }

    KernelSolution {
        k: g.to_tri(lambda_hat.grid().tri()),
        iterations: 1,
        residual: 0.0,
        solve_time: start.elapsed().as_secs_f64(),
        characteristic: g,
    }
}
