use backstep::grid::{diff_diagonal, Grid1D, ScalarField1D};
use backstep::kernel::*;
use backstep::plant::chebyshev_lambda_default;
use proptest::prelude::*;

/// `I_1(z) / z` from its power series `sum (z^2/4)^m / (2 m! (m+1)!)`.
fn i1_over_z(z: f64) -> f64 {
    let q = z * z / 4.0;
    let mut term = 0.5;
    let mut sum = term;
    for m in 1..60 {
        term *= q / (m as f64 * (m + 1) as f64);
        sum += term;
        if term < 1e-18 * sum {
            break;
        }
    }
    sum
}

/// Closed form for constant `lam`: `k(x, y) = -lam y I_1(z) / z`, `z = sqrt(lam (x^2 - y^2))`.
fn bessel_kernel(lam: f64, x: f64, y: f64) -> f64 {
    -lam * y * i1_over_z((lam * (x * x - y * y)).max(0.0).sqrt())
}

fn bessel_error(n: usize) -> f64 {
    let g = Grid1D::new(n).unwrap();
    let sol = solve_kernel_march(&ScalarField1D::from_fn(g, |_| 1.0));
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in 0..=i {
            worst = worst.max((sol.k.get(i, j) - bessel_kernel(1.0, g.node(i), g.node(j))).abs());
        }
    }
    worst
}

#[test]
fn series_oracle_sanity() {
    assert_eq!(i1_over_z(0.0), 0.5);
    // I_1(1) = 0.565159103992485...
    assert!((i1_over_z(1.0) - 0.565_159_103_992_485).abs() < 1e-14);
    assert!((bessel_kernel(1.0, 1.0, 0.5) + 0.2742).abs() < 1e-4);
}

#[test]
fn constant_lambda_matches_bessel_closed_form() {
    let g = Grid1D::with_spacing(0.005).unwrap();
    let lam = ScalarField1D::from_fn(g, |_| 1.0);
    let march = solve_kernel_march(&lam);
    let picard = solve_kernel_picard(&lam, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
    let err = bessel_error(g.n_points());
    assert!(err <= 1e-3, "max error {err:e}");
    let (i, j) = (g.n_points() - 1, (g.n_points() - 1) / 2);
    assert!((march.k.get(i, j) + 0.2742).abs() <= 1e-3);
    assert!(march.k.sub(&picard.k).unwrap().sup_norm() <= 10.0 * DEFAULT_TOL);
}

#[test]
fn bessel_error_converges_at_second_order() {
    let coarse = bessel_error(26);
    let fine = bessel_error(51);
    assert!(coarse / fine >= 3.5, "ratio {}", coarse / fine);
}

#[test]
fn chebyshev_lambda_solvers_agree() {
    let g = Grid1D::new(51).unwrap();
    let lam = chebyshev_lambda_default(g, 9.0);
    let march = solve_kernel_march(&lam);
    let picard = solve_kernel_picard(&lam, DEFAULT_TOL, 500).unwrap();
    assert!(march.k.sub(&picard.k).unwrap().sup_norm() <= 10.0 * DEFAULT_TOL);
}

#[test]
fn batch_solve_preserves_order() {
    let g = Grid1D::new(21).unwrap();
    let lams: Vec<_> = (0..6)
        .map(|s| ScalarField1D::from_fn(g, |x| s as f64 * x))
        .collect();
    let batch = solve_batch(&lams);
    for (lam, sol) in lams.iter().zip(&batch) {
        assert_eq!(sol.k, solve_kernel_march(lam).k);
    }
}

#[test]
fn certificate_reference_values() {
    let r = certificate_constants(0.1, 0.0, None).unwrap();
    assert!((r.k_bar - 0.12214).abs() < 1e-5);
    assert!((r.l_bar - 0.13801).abs() < 1e-5);
    assert!((r.gamma_star.unwrap() - 0.1533).abs() < 1e-4);
    assert!((r.eps_star - 0.0678).abs() < 1e-4);
    let with_gain = certificate_constants(0.1, 0.0, Some(0.05)).unwrap();
    assert_eq!(with_gain.big_r, Some((1.0 + r.l_bar).powi(2).max(0.05)));
    assert_eq!(with_gain.rho, Some((1.0 + r.k_bar).powi(2).max(20.0)));
}

/// Smooth random field `amp * (a sin(b x + c) + (1 - |a|) cos(d x))` with sup-norm at most `amp`.
fn smooth_lambda(g: Grid1D, amp: f64, a: f64, b: f64, c: f64, d: f64) -> ScalarField1D {
    ScalarField1D::from_fn(g, |x| {
        amp * (a * (b * x + c).sin() + (1.0 - a.abs()) * (d * x).cos())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn boundary_identities_hold_for_both_solvers(
        amp in 0.0..50.0f64, a in -1.0..1.0f64, b in 0.0..12.0f64, c in 0.0..6.3f64, d in 0.0..12.0f64,
    ) {
        let g = Grid1D::new(31).unwrap();
        let lam = smooth_lambda(g, amp, a, b, c, d);
        let march = solve_kernel_march(&lam);
        let picard = solve_kernel_picard(&lam, DEFAULT_TOL, 500).unwrap();
        for sol in [&march, &picard] {
            prop_assert!((0..g.n_points()).all(|i| sol.k.get(i, 0) == 0.0));
            prop_assert!(sol.diagonal_defect(&lam) <= 1e-10);
        }
        prop_assert!(march.k.sub(&picard.k).unwrap().sup_norm() <= 10.0 * DEFAULT_TOL);
    }

    #[test]
    fn small_bound_kernel_estimates_hold(
        lambda_bar in 0.05..1.0f64, a in -1.0..1.0f64, b in 0.0..8.0f64, c in 0.0..6.3f64,
        d in 0.0..8.0f64, rate in -1.0..1.0f64, e in 0.0..8.0f64,
    ) {
        let g = Grid1D::new(41).unwrap();
        let lam = smooth_lambda(g, lambda_bar, a, b, c, d);
        let sol = solve_kernel_picard(&lam, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();

        prop_assert!(sol.growth_bound_violation(lambda_bar) <= 10.0 * DEFAULT_TOL);

        // Stencil truncation is bounded by |lam''| dx^2 <= lambda_bar max(b, d)^2 dx^2.
        let truncation = lambda_bar * b.max(d).powi(2) * g.dx().powi(2);
        let slope = diff_diagonal(&sol.k).unwrap().sup_norm();
        prop_assert!(slope <= lambda_bar / 2.0 + truncation + 1e-12, "diagonal slope {} vs {}", slope, lambda_bar / 2.0);

        let lam_t = ScalarField1D::from_fn(g, |x| rate * (e * x).cos());
        let k_t = solve_kernel_time_derivative(&lam, &lam_t, &sol, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let growth = (2.0 * lambda_bar).exp();
        let bound = lam_t.sup_norm() * (1.0 + lambda_bar * growth) * growth + DEFAULT_TOL;
        prop_assert!(k_t.sup_norm() <= bound, "k_t {} > {}", k_t.sup_norm(), bound);
    }

    #[test]
    fn eps_star_lies_in_unit_bracket(lambda_bar in 1e-3..2.0f64) {
        let eps = solve_eps_star(lambda_bar);
        prop_assert!(eps > 0.0 && eps < 1.0);
        let c = lambda_bar * (2.0 * lambda_bar).exp();
        let lhs = eps * (1.0 + (eps + c) * (eps + c).exp());
        prop_assert!((lhs - 1.0 / 12.0).abs() <= 1e-12);
    }
}
