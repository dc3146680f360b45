use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Upper bound on the argument of `exp` before f64 overflow.
const LN_MAX: f64 = 709.78;

/// Constants of the closed-loop stability certificate.
///
/// Quantities that overflow f64 are reported as `+inf`. `gamma_star` is
/// `None` when it underflows (the admissible gain interval is numerically
/// empty even though the hypothesis holds); `ln_gamma_star` is always given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub lambda_bar: f64,
    pub epsilon: f64,
    /// `lam_bar e^{2 lam_bar} + eps`
    pub k_bar: f64,
    /// `k_bar e^{k_bar}`
    pub l_bar: f64,
    /// `e^{2 lam_bar} (1 + lam_bar e^{2 lam_bar})`
    pub big_m: f64,
    pub eps_star: f64,
    pub gamma_star: Option<f64>,
    pub ln_gamma_star: f64,
    pub gamma: Option<f64>,
    pub rho: Option<f64>,
    pub big_r: Option<f64>,
}

fn exp_saturating(ln: f64) -> f64 {
    if ln > LN_MAX {
        f64::INFINITY
    } else {
        ln.exp()
    }
}

/// `eps (1 + (eps + c) e^{eps + c})` with `c = lam_bar e^{2 lam_bar}`.
fn eps_star_lhs(eps: f64, c: f64) -> f64 {
    eps * (1.0 + (eps + c) * exp_saturating(eps + c))
}

/// Unique root of `eps (1 + (eps + c) e^{eps + c}) = 1/12` by bisection.
pub fn solve_eps_star(lambda_bar: f64) -> f64 {
    let c = lambda_bar * exp_saturating(2.0 * lambda_bar);
    let target = 1.0 / 12.0;
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while eps_star_lhs(hi, c) < target {
        hi *= 2.0;
    }
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if eps_star_lhs(mid, c) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if (eps_star_lhs(lo, c) - target).abs() <= (eps_star_lhs(hi, c) - target).abs() {
        lo
    } else {
        hi
    }
}

/// Certificate constants for projection bound `lambda_bar`, operator accuracy
/// `epsilon` and (optionally) the adaptation gain in use.
///
/// Fails with [`Error::GammaStarNonpositive`] when `3 (1 + l_bar) eps >= 1/4`.
pub fn certificate_constants(
    lambda_bar: f64,
    epsilon: f64,
    gamma: Option<f64>,
) -> Result<BoundsReport> {
    if !(lambda_bar >= 0.0 && lambda_bar.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "lambda_bar must be >= 0, got {lambda_bar}"
        )));
    }
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "epsilon must be >= 0, got {epsilon}"
        )));
    }
    if let Some(g) = gamma {
        if !(g > 0.0 && g.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "gamma must be positive, got {g}"
            )));
        }
    }

    let c = lambda_bar * exp_saturating(2.0 * lambda_bar);
    let k_bar = c + epsilon;
    let ln_l_bar = if k_bar > 0.0 {
        k_bar.ln() + k_bar
    } else {
        f64::NEG_INFINITY
    };
    let l_bar = exp_saturating(ln_l_bar);
    let big_m = exp_saturating(2.0 * lambda_bar + c.ln_1p());
    let eps_star = solve_eps_star(lambda_bar);

    let margin = if epsilon == 0.0 {
        0.0
    } else {
        3.0 * (1.0 + l_bar) * epsilon
    };
    if margin >= 0.25 {
        return Err(Error::GammaStarNonpositive { margin });
    }
    // ln(1 + l_bar) with l_bar possibly saturated: fall back to ln l_bar.
    let ln_1p_l = if l_bar.is_finite() {
        l_bar.ln_1p()
    } else {
        ln_l_bar
    };
    let ln_1p_k = if k_bar.is_finite() {
        k_bar.ln_1p()
    } else {
        f64::INFINITY
    };
    let ln_gamma_star = (0.25 - margin).ln() - 2.0 * ln_1p_l - 2.0 * ln_1p_k;
    let gamma_star = {
        let v = ln_gamma_star.exp();
        (v > 0.0 && v.is_normal()).then_some(v)
    };

    let (rho, big_r) = match gamma {
        Some(g) => {
            let sq = |v: f64| {
                if v.is_finite() {
                    (1.0 + v) * (1.0 + v)
                } else {
                    f64::INFINITY
                }
            };
            (Some((1.0 / g).max(sq(k_bar))), Some(g.max(sq(l_bar))))
        }
        None => (None, None),
    };

    Ok(BoundsReport {
        lambda_bar,
        epsilon,
        k_bar,
        l_bar,
        big_m,
        eps_star,
        gamma_star,
        ln_gamma_star,
        gamma,
        rho,
        big_r,
    })
}
