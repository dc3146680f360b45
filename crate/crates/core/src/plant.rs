//! Explicit finite-difference simulator for `u_t = u_xx + lam(x) u` with
//! `u(0, t) = 0` and boundary actuation `u(1, t) = U(t)`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::{Grid1D, ScalarField1D};

/// Largest stable explicit Euler step: `dx^2 / (2 + |lam|_inf dx^2)`.
pub fn max_stable_dt(grid: Grid1D, lambda_sup: f64) -> f64 {
    let dx2 = grid.dx() * grid.dx();
    dx2 / (2.0 + lambda_sup * dx2)
}

#[derive(Debug, Clone)]
pub struct PlantState {
    u: ScalarField1D,
    t: f64,
    lambda: ScalarField1D,
    dt: f64,
    scratch: Vec<f64>,
}

impl PlantState {
    /// `u0(0)` is forced to zero; `u0(1)` is taken as the initial actuation.
    pub fn new(u0: ScalarField1D, lambda: ScalarField1D, dt: f64) -> Result<Self> {
        let grid = u0.grid();
        if lambda.grid() != grid {
            return Err(Error::ShapeMismatch(
                "u0 and lambda live on different grids".into(),
            ));
        }
        if grid.n_points() < 3 {
            return Err(Error::InvalidInput(
                "plant grid needs at least 3 points".into(),
            ));
        }
        if !u0.is_finite() || !lambda.is_finite() {
            return Err(Error::InvalidInput(
                "initial state and lambda must be finite".into(),
            ));
        }
        let limit = max_stable_dt(grid, lambda.sup_norm());
        if !(dt > 0.0 && dt <= limit) {
            return Err(Error::InvalidInput(format!(
                "dt = {dt:e} violates the explicit stability limit {limit:e}"
            )));
        }
        let mut u = u0;
        u.values_mut()[0] = 0.0;
        Ok(Self {
            scratch: vec![0.0; grid.n_points()],
            u,
            t: 0.0,
            lambda,
            dt,
        })
    }

    pub fn u(&self) -> &ScalarField1D {
        &self.u
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn lambda(&self) -> &ScalarField1D {
        &self.lambda
    }

    /// One explicit Euler step of the interior, then `u(0) = 0`, `u(1) = control_u`.
    pub fn step(&mut self, control_u: f64) -> Result<()> {
        let h = self.u.grid().dx();
        let r = self.dt / (h * h);
        let n = self.scratch.len();
        {
            let u = self.u.values();
            let lam = self.lambda.values();
            for i in 1..n - 1 {
                self.scratch[i] =
                    u[i] + r * (u[i - 1] - 2.0 * u[i] + u[i + 1]) + self.dt * lam[i] * u[i];
            }
        }
        let u = self.u.values_mut();
        u[1..n - 1].copy_from_slice(&self.scratch[1..n - 1]);
        u[0] = 0.0;
        u[n - 1] = control_u;
        self.t += self.dt;
        if !u.iter().all(|v| v.is_finite()) {
            return Err(Error::Diverged { t: self.t });
        }
        Ok(())
    }
}

/// `amplitude * cos(gamma_cheb * arccos x) + offset`.
pub fn chebyshev_lambda(
    grid: Grid1D,
    gamma_cheb: f64,
    amplitude: f64,
    offset: f64,
) -> ScalarField1D {
    ScalarField1D::from_fn(grid, |x| amplitude * (gamma_cheb * x.acos()).cos() + offset)
}

/// The reaction coefficient family `25 cos(gamma arccos x) + 25`.
pub fn chebyshev_lambda_default(grid: Grid1D, gamma_cheb: f64) -> ScalarField1D {
    chebyshev_lambda(grid, gamma_cheb, 25.0, 25.0)
}

/// `amplitude * sin(pi x)`, zero at both ends.
pub fn sine_initial_condition(grid: Grid1D, amplitude: f64) -> ScalarField1D {
    let mut u = ScalarField1D::from_fn(grid, |x| amplitude * (PI * x).sin());
    let n = grid.n_points();
    u.values_mut()[0] = 0.0;
    u.values_mut()[n - 1] = 0.0;
    u
}
