use serde::{Deserialize, Serialize};

use super::diagnostics::diagnostics;
use super::{backstep_transform, controller, EstimatorState};
use crate::error::{Error, Result};
use crate::grid::{Grid1D, ScalarField1D, TriField};
use crate::kernel::{solve_kernel_march, solve_kernel_picard};
use crate::plant::{sine_initial_condition, PlantState};

/// Source of the gain kernel `k_hat` for the current estimate.
pub trait KernelProvider {
    fn kernel(&mut self, lambda_hat: &ScalarField1D) -> Result<TriField>;
    fn name(&self) -> &'static str;
}

/// Open loop: `k_hat = 0`, hence `U = 0`.
#[derive(Debug, Default, Clone, Copy)]
pub struct ZeroKernel;

impl KernelProvider for ZeroKernel {
    fn kernel(&mut self, lambda_hat: &ScalarField1D) -> Result<TriField> {
        Ok(TriField::zeros(lambda_hat.grid().tri()))
    }
    fn name(&self) -> &'static str {
        "zero"
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct MarchKernel;

impl KernelProvider for MarchKernel {
    fn kernel(&mut self, lambda_hat: &ScalarField1D) -> Result<TriField> {
        Ok(solve_kernel_march(lambda_hat).k)
    }
    fn name(&self) -> &'static str {
        "exact-march"
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PicardKernel {
    pub tol: f64,
    pub max_iter: usize,
}

impl KernelProvider for PicardKernel {
    fn kernel(&mut self, lambda_hat: &ScalarField1D) -> Result<TriField> {
        Ok(solve_kernel_picard(lambda_hat, self.tol, self.max_iter)?.k)
    }
    fn name(&self) -> &'static str {
        "exact-picard"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedLoopConfig {
    pub n_points: usize,
    pub dt: f64,
    pub horizon: f64,
    /// Adaptation gain.
    pub gamma: f64,
    pub lambda_bar: f64,
    pub u0_amplitude: f64,
    /// Recompute `k_hat` every this many steps.
    pub kernel_stride: usize,
    /// Store a state snapshot every this many steps.
    pub sample_stride: usize,
    /// Evaluate diagnostics (with a Picard reference kernel) every this many
    /// steps; 0 disables them.
    pub diagnostics_stride: usize,
    /// Declare divergence once `sup|u| > divergence_factor * sup|u0|`.
    pub divergence_factor: f64,
    pub picard_tol: f64,
    pub picard_max_iter: usize,
    /// Actuate with the kernel of the true coefficient and run the estimator
    /// alongside without feeding it back into the control.
    #[serde(default)]
    pub estimator_only: bool,
}

impl Default for ClosedLoopConfig {
    fn default() -> Self {
        Self {
            n_points: 51,
            dt: 1e-4,
            horizon: 1.0,
            gamma: 100.0,
            lambda_bar: 50.0,
            u0_amplitude: 1.0,
            kernel_stride: 1,
            sample_stride: 100,
            diagnostics_stride: 100,
            divergence_factor: 1e6,
            picard_tol: 1e-10,
            picard_max_iter: 500,
            estimator_only: false,
        }
    }
}

impl ClosedLoopConfig {
    pub fn grid(&self) -> Result<Grid1D> {
        Grid1D::new(self.n_points)
    }

    pub fn n_steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    fn validate(&self) -> Result<()> {
        if self.kernel_stride == 0 || self.sample_stride == 0 {
            return Err(Error::InvalidInput(
                "kernel and sample strides must be >= 1".into(),
            ));
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "horizon must be >= 0, got {}",
                self.horizon
            )));
        }
        if !(self.divergence_factor > 1.0) {
            return Err(Error::InvalidInput(
                "divergence_factor must exceed 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub t: f64,
    pub u: ScalarField1D,
    pub lambda_hat: ScalarField1D,
    pub w_hat: ScalarField1D,
    pub control: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticsRow {
    pub t: f64,
    #[serde(rename = "V")]
    pub v: f64,
    #[serde(rename = "Gamma")]
    pub gamma_norm: f64,
    pub norm_u: f64,
    pub norm_w: f64,
    #[serde(rename = "control_U")]
    pub control: f64,
    pub eps_measured: f64,
    pub delta_k0_sup: f64,
    pub delta_k1_sup: f64,
    pub kappa1_sup: f64,
    pub kappa2_sup: f64,
    /// Largest nodal slope of `lambda_hat`.
    pub lambda_hat_lipschitz: f64,
}

/// `k_hat(1, y)` against the reference kernel at one diagnostic instant.
#[derive(Debug, Clone)]
pub struct KernelSlice {
    pub t: f64,
    pub k_hat: Vec<f64>,
    pub k_exact: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub kernel_source: &'static str,
    pub grid: Grid1D,
    pub snapshots: Vec<Snapshot>,
    pub diagnostics: Vec<DiagnosticsRow>,
    pub kernel_slices: Vec<KernelSlice>,
    /// `max_t |lambda_hat(., t)|_inf` over every step.
    pub max_lambda_hat_sup: f64,
    pub u0_sup: f64,
}

impl Trajectory {
    pub fn final_snapshot(&self) -> Option<&Snapshot> {
        self.snapshots.last()
    }
}

/// A run that stopped early, with everything recorded up to the failure.
#[derive(Debug)]
pub struct LoopFailure {
    pub error: Error,
    pub partial: Box<Trajectory>,
}

impl std::fmt::Display for LoopFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.error.fmt(f)
    }
}

impl std::error::Error for LoopFailure {}

impl From<LoopFailure> for Error {
    fn from(f: LoopFailure) -> Self {
        f.error
    }
}

fn lipschitz(lambda_hat: &ScalarField1D) -> f64 {
    let h = lambda_hat.grid().dx();
    lambda_hat
        .values()
        .windows(2)
        .map(|w| (w[1] - w[0]).abs() / h)
        .fold(0.0, f64::max)
}

/// Closed loop from the default initial data: `u0 = A sin(pi x)`, `lambda_hat(0) = 0`.
pub fn run_closed_loop(
    config: &ClosedLoopConfig,
    lambda_true: &ScalarField1D,
    provider: &mut dyn KernelProvider,
) -> std::result::Result<Trajectory, LoopFailure> {
    let grid = lambda_true.grid();
    let u0 = sine_initial_condition(grid, config.u0_amplitude);
    run_closed_loop_from(
        config,
        lambda_true,
        u0,
        ScalarField1D::zeros(grid),
        provider,
    )
}

/// Certainty-equivalence loop. Each step recomputes `k_hat` (per the stride),
/// forms `w_hat` and `U`, advances the plant, then advances the estimate with
/// the update law evaluated at the start of the step.
pub fn run_closed_loop_from(
    config: &ClosedLoopConfig,
    lambda_true: &ScalarField1D,
    u0: ScalarField1D,
    lambda_hat0: ScalarField1D,
    provider: &mut dyn KernelProvider,
) -> std::result::Result<Trajectory, LoopFailure> {
    let grid = lambda_true.grid();
    let mut traj = Trajectory {
        kernel_source: provider.name(),
        grid,
        snapshots: Vec::new(),
        diagnostics: Vec::new(),
        kernel_slices: Vec::new(),
        max_lambda_hat_sup: lambda_hat0.sup_norm(),
        u0_sup: u0.sup_norm(),
    };
    macro_rules! attempt {
        ($e:expr) => {
            match $e {
                Ok(v) => v,
                Err(error) => {
                    return Err(LoopFailure {
                        error,
                        partial: Box::new(traj),
                    })
                }
            }
        };
    }

    attempt!(config.validate());
    if config.n_points != grid.n_points() || u0.grid() != grid || lambda_hat0.grid() != grid {
        attempt!(Err(Error::ShapeMismatch(format!(
            "config asks for {} points; lambda, u0 and lambda_hat0 must share one grid",
            config.n_points
        ))));
    }
    let mut plant = attempt!(PlantState::new(u0, lambda_true.clone(), config.dt));
    let mut est = attempt!(EstimatorState::new(
        lambda_hat0,
        config.gamma,
        config.lambda_bar
    ));
    let limit = config.divergence_factor * traj.u0_sup.max(f64::MIN_POSITIVE);
    let n_steps = config.n_steps();
    let mut k_hat = TriField::zeros(grid.tri());
    let k_true = config
        .estimator_only
        .then(|| solve_kernel_march(lambda_true).k);

    for step in 0..=n_steps {
        if step % config.kernel_stride == 0 {
            k_hat = attempt!(provider.kernel(&est.lambda_hat));
        }
        let u = plant.u();
        let w_hat = attempt!(backstep_transform(u, &k_hat));
        let control = attempt!(controller(u, k_true.as_ref().unwrap_or(&k_hat)));

        if step % config.sample_stride == 0 || step == n_steps {
            traj.snapshots.push(Snapshot {
                t: plant.t(),
                u: u.clone(),
                lambda_hat: est.lambda_hat.clone(),
                w_hat: w_hat.clone(),
                control,
            });
        }
        if config.diagnostics_stride > 0
            && (step % config.diagnostics_stride == 0 || step == n_steps)
        {
            let reference = attempt!(solve_kernel_picard(
                &est.lambda_hat,
                config.picard_tol,
                config.picard_max_iter
            ));
            let d = attempt!(diagnostics(u, &est, lambda_true, &k_hat, &reference.k));
            traj.diagnostics.push(DiagnosticsRow {
                t: plant.t(),
                v: d.v,
                gamma_norm: d.gamma_norm,
                norm_u: d.norm_u,
                norm_w: d.norm_w_hat,
                control: d.control,
                eps_measured: d.residuals.eps_measured,
                delta_k0_sup: d.residuals.delta_k0.sup_norm(),
                delta_k1_sup: d.residuals.delta_k1.sup_norm(),
                kappa1_sup: d.residuals.kappa1.sup_norm(),
                kappa2_sup: d.residuals.kappa2.sup_norm(),
                lambda_hat_lipschitz: lipschitz(&est.lambda_hat),
            });
            let last = grid.n_points() - 1;
            traj.kernel_slices.push(KernelSlice {
                t: plant.t(),
                k_hat: k_hat.row(last).to_vec(),
                k_exact: reference.k.row(last).to_vec(),
            });
        }
        if step == n_steps {
            break;
        }

        let u_start = u.clone();
        attempt!(plant.step(control));
        if plant.u().sup_norm() > limit {
            attempt!(Err(Error::Diverged { t: plant.t() }));
        }
        attempt!(est.update(&u_start, &w_hat, &k_hat, config.dt));
        traj.max_lambda_hat_sup = traj.max_lambda_hat_sup.max(est.lambda_hat.sup_norm());
    }
    Ok(traj)
}
