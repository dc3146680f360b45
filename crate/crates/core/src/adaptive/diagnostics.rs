use super::{backstep_transform, controller, EstimatorState};
use crate::error::{Error, Result};
use crate::grid::{diff_diagonal, tri_laplace_diff, ScalarField1D, TriField};

/// Residuals of the perturbed target system for an approximate kernel.
#[derive(Debug, Clone)]
pub struct TargetResiduals {
    /// `lam_tilde(x) - 2 d/dx k_tilde(x, x)`
    pub delta_k0: ScalarField1D,
    /// `k_tilde_xx - k_tilde_yy - lam_hat(y) k_tilde`
    pub delta_k1: TriField,
    /// `2 d/dx k_hat(x, x) + lam_hat`
    pub kappa1: ScalarField1D,
    /// `k_hat_xx - k_hat_yy - lam_hat(y) k_hat`
    pub kappa2: TriField,
    /// Largest of `|k_tilde|`, `|2 d/dx k_tilde(x, x)|` and `|delta_k1|`:
    /// the measured operator accuracy.
    pub eps_measured: f64,
}

#[derive(Debug, Clone)]
pub struct LoopDiagnostics {
    pub v: f64,
    pub gamma_norm: f64,
    pub norm_u: f64,
    pub norm_w_hat: f64,
    pub control: f64,
    pub residuals: TargetResiduals,
}

fn wave_residual(k: &TriField, lambda_hat: &ScalarField1D) -> Result<TriField> {
    let mut out = tri_laplace_diff(k)?;
    let lam = lambda_hat.values();
    let tri = k.tri();
    for i in 0..tri.n_points() {
        for j in 0..=i {
            let v = out.get(i, j) - lam[j] * k.get(i, j);
            out.set(i, j, v);
        }
    }
    Ok(out)
}

/// Target-system residuals of `k_hat` against the exact kernel `k_exact` of `lambda_hat`.
pub fn target_residuals(
    lambda_true: &ScalarField1D,
    lambda_hat: &ScalarField1D,
    k_hat: &TriField,
    k_exact: &TriField,
) -> Result<TargetResiduals> {
    let tri = k_hat.tri();
    if k_exact.tri() != tri
        || lambda_hat.grid().tri() != tri
        || lambda_true.grid() != lambda_hat.grid()
    {
        return Err(Error::ShapeMismatch(
            "residual inputs live on different grids".into(),
        ));
    }
    let k_tilde = k_exact.sub(k_hat)?;
    let dk_tilde = diff_diagonal(&k_tilde)?;
    let delta_k0: Vec<f64> = lambda_true
        .values()
        .iter()
        .zip(lambda_hat.values())
        .zip(dk_tilde.values())
        .map(|((l, lh), d)| (l - lh) - 2.0 * d)
        .collect();
    let delta_k1 = wave_residual(&k_tilde, lambda_hat)?;

    let dk_hat = diff_diagonal(k_hat)?;
    let kappa1: Vec<f64> = dk_hat
        .values()
        .iter()
        .zip(lambda_hat.values())
        .map(|(d, l)| 2.0 * d + l)
        .collect();
    let kappa2 = wave_residual(k_hat, lambda_hat)?;

    let eps_measured = k_tilde
        .sup_norm()
        .max(2.0 * dk_tilde.sup_norm())
        .max(delta_k1.sup_norm());
    let grid = lambda_hat.grid();
    Ok(TargetResiduals {
        delta_k0: ScalarField1D::new(grid, delta_k0)?,
        delta_k1,
        kappa1: ScalarField1D::new(grid, kappa1)?,
        kappa2,
        eps_measured,
    })
}

/// Lyapunov value, stability norm and residuals at one instant.
pub fn diagnostics(
    u: &ScalarField1D,
    est: &EstimatorState,
    lambda_true: &ScalarField1D,
    k_hat: &TriField,
    k_exact: &TriField,
) -> Result<LoopDiagnostics> {
    let w = backstep_transform(u, k_hat)?;
    let lam_tilde = ScalarField1D::new(
        u.grid(),
        lambda_true
            .values()
            .iter()
            .zip(est.lambda_hat.values())
            .map(|(a, b)| a - b)
            .collect(),
    )?;
    let tilde_sq = lam_tilde.l2_norm_sq();
    let w_sq = w.l2_norm_sq();
    Ok(LoopDiagnostics {
        v: 0.5 * w_sq.ln_1p() + tilde_sq / (2.0 * est.gamma),
        gamma_norm: u.l2_norm_sq() + tilde_sq,
        norm_u: u.l2_norm(),
        norm_w_hat: w_sq.sqrt(),
        control: controller(u, k_hat)?,
        residuals: target_residuals(lambda_true, &est.lambda_hat, k_hat, k_exact)?,
    })
}
