//! Certainty-equivalence adaptive backstepping: the Volterra transformation
//! and its inverse, the boundary feedback, the projected update law for the
//! reaction estimate, and the closed-loop driver with its diagnostics.

mod closed_loop;
mod diagnostics;

pub use closed_loop::{
    run_closed_loop, run_closed_loop_from, ClosedLoopConfig, DiagnosticsRow, KernelProvider,
    KernelSlice, LoopFailure, MarchKernel, PicardKernel, Snapshot, Trajectory, ZeroKernel,
};
pub use diagnostics::{diagnostics, target_residuals, LoopDiagnostics, TargetResiduals};

use crate::error::{Error, Result};
use crate::grid::{trapz, ScalarField1D, TriField};

/// Band around `|b| = lambda_bar` treated as "on the boundary".
pub const PROJECTION_BAND: f64 = 1e-12;

fn check_shapes(field: &ScalarField1D, kernel: &TriField) -> Result<()> {
    if field.grid().tri() != kernel.tri() {
        return Err(Error::ShapeMismatch(format!(
            "field has {} points, kernel triangle has {} per side",
            field.grid().n_points(),
            kernel.tri().n_points()
        )));
    }
    Ok(())
}

/// `w(x) = u(x) - int_0^x k(x, y) u(y) dy`.
pub fn backstep_transform(u: &ScalarField1D, k_hat: &TriField) -> Result<ScalarField1D> {
    check_shapes(u, k_hat)?;
    let h = u.grid().dx();
    let uv = u.values();
    let mut prod = Vec::with_capacity(uv.len());
    let w = (0..uv.len())
        .map(|i| {
            prod.clear();
            prod.extend(k_hat.row(i).iter().zip(uv).map(|(k, u)| k * u));
            uv[i] - trapz(&prod, h)
        })
        .collect();
    ScalarField1D::new(u.grid(), w)
}

/// `u(x) = w(x) + int_0^x l(x, y) w(y) dy`.
pub fn inverse_transform(w_hat: &ScalarField1D, l_hat: &TriField) -> Result<ScalarField1D> {
    check_shapes(w_hat, l_hat)?;
    let h = w_hat.grid().dx();
    let wv = w_hat.values();
    let mut prod = Vec::with_capacity(wv.len());
    let u = (0..wv.len())
        .map(|i| {
            prod.clear();
            prod.extend(l_hat.row(i).iter().zip(wv).map(|(l, w)| l * w));
            wv[i] + trapz(&prod, h)
        })
        .collect();
    ScalarField1D::new(w_hat.grid(), u)
}

/// Boundary feedback `U = int_0^1 k(1, y) u(y) dy`.
pub fn controller(u: &ScalarField1D, k_hat: &TriField) -> Result<f64> {
    check_shapes(u, k_hat)?;
    let n = u.grid().n_points();
    let prod: Vec<f64> = k_hat
        .row(n - 1)
        .iter()
        .zip(u.values())
        .map(|(k, u)| k * u)
        .collect();
    Ok(trapz(&prod, u.grid().dx()))
}

/// Freezes an update that would push `b` past `|b| = lambda_bar`.
pub fn project(a: f64, b: f64, lambda_bar: f64) -> f64 {
    if b.abs() >= lambda_bar - PROJECTION_BAND && a * b > 0.0 {
        0.0
    } else {
        a
    }
}

/// `int_x^1 k(y, x) w(y) dy` at every node: a column scan of the triangle.
pub fn transposed_integral(w_hat: &ScalarField1D, k_hat: &TriField) -> Result<Vec<f64>> {
    check_shapes(w_hat, k_hat)?;
    let n = w_hat.grid().n_points();
    let h = w_hat.grid().dx();
    let w = w_hat.values();
    let mut col = Vec::with_capacity(n);
    Ok((0..n)
        .map(|i| {
            col.clear();
            col.extend((i..n).map(|m| k_hat.get(m, i) * w[m]));
            trapz(&col, h)
        })
        .collect())
}

/// Unprojected update direction
/// `phi(x) = gamma u(x) / (1 + |w|^2) * (w(x) - int_x^1 k(y, x) w(y) dy)`.
pub fn adaptation_rate(
    u: &ScalarField1D,
    w_hat: &ScalarField1D,
    k_hat: &TriField,
    gamma: f64,
) -> Result<ScalarField1D> {
    check_shapes(u, k_hat)?;
    let tail = transposed_integral(w_hat, k_hat)?;
    let scale = gamma / (1.0 + w_hat.l2_norm_sq());
    let phi = u
        .values()
        .iter()
        .zip(w_hat.values())
        .zip(&tail)
        .map(|((u, w), t)| scale * u * (w - t))
        .collect();
    ScalarField1D::new(u.grid(), phi)
}

#[derive(Debug, Clone)]
pub struct EstimatorState {
    pub lambda_hat: ScalarField1D,
    pub gamma: f64,
    pub lambda_bar: f64,
    /// Projected rate applied by the most recent update.
    pub last_rate: ScalarField1D,
}

impl EstimatorState {
    pub fn new(lambda_hat: ScalarField1D, gamma: f64, lambda_bar: f64) -> Result<Self> {
        if !(gamma > 0.0) || !(lambda_bar > 0.0) {
            return Err(Error::InvalidInput(format!(
                "gamma and lambda_bar must be positive (got {gamma}, {lambda_bar})"
            )));
        }
        if lambda_hat.sup_norm() > lambda_bar {
            return Err(Error::InvalidInput(format!(
                "initial estimate exceeds the projection bound {lambda_bar}"
            )));
        }
        let last_rate = ScalarField1D::zeros(lambda_hat.grid());
        Ok(Self {
            lambda_hat,
            gamma,
            lambda_bar,
            last_rate,
        })
    }

    /// One Euler step of `lam_hat_t = Proj(phi, lam_hat)`, clamped to `[-lam_bar, lam_bar]`.
    pub fn update(
        &mut self,
        u: &ScalarField1D,
        w_hat: &ScalarField1D,
        k_hat: &TriField,
        dt: f64,
    ) -> Result<()> {
        let phi = adaptation_rate(u, w_hat, k_hat, self.gamma)?;
        let bar = self.lambda_bar;
        let rates = self.last_rate.values_mut();
        let lam = self.lambda_hat.values_mut();
        for ((l, r), p) in lam.iter_mut().zip(rates.iter_mut()).zip(phi.values()) {
            *r = project(*p, *l, bar);
            *l = (*l + dt * *r).clamp(-bar, bar);
        }
        Ok(())
    }
}

/// Functional form of [`EstimatorState::update`].
pub fn update_law(
    u: &ScalarField1D,
    w_hat: &ScalarField1D,
    k_hat: &TriField,
    est: &EstimatorState,
    dt: f64,
) -> Result<EstimatorState> {
    let mut next = est.clone();
    next.update(u, w_hat, k_hat, dt)?;
    Ok(next)
}
