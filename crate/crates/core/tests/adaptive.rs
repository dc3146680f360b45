use backstep::adaptive::*;
use backstep::grid::{Grid1D, ScalarField1D};
use backstep::kernel::{solve_inverse_kernel, solve_kernel_march, DEFAULT_MAX_ITER, DEFAULT_TOL};
use backstep::plant::chebyshev_lambda_default;
use proptest::prelude::*;

#[test]
fn exact_kernel_regulates_unstable_plant() {
    let cfg = ClosedLoopConfig {
        diagnostics_stride: 0,
        ..ClosedLoopConfig::default()
    };
    let grid = cfg.grid().unwrap();
    let lam = chebyshev_lambda_default(grid, 9.0);
    let traj = run_closed_loop(&cfg, &lam, &mut MarchKernel).unwrap();
    let last = traj.final_snapshot().unwrap();
    assert!(last.u.sup_norm() <= 1e-2 * traj.u0_sup);
    assert!(traj.max_lambda_hat_sup <= cfg.lambda_bar);
    assert_eq!(traj.kernel_source, "exact-march");
}

#[test]
fn divergence_carries_partial_trajectory() {
    let cfg = ClosedLoopConfig {
        n_points: 21,
        dt: 1e-3,
        horizon: 2.0,
        ..ClosedLoopConfig::default()
    };
    let lam = chebyshev_lambda_default(cfg.grid().unwrap(), 9.0);
    let failure = run_closed_loop(&cfg, &lam, &mut ZeroKernel).unwrap_err();
    assert!(matches!(failure.error, backstep::Error::Diverged { t } if t > 0.0 && t < 2.0));
    assert!(!failure.partial.snapshots.is_empty());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn inverse_transform_undoes_forward_transform(
        lambda_bar in 0.05..1.0f64, f in 0.5..6.0f64, p in 0.0..6.3f64, a in 1.0..4.0f64, b in -2.0..2.0f64,
    ) {
        let g = Grid1D::new(61).unwrap();
        let lam = ScalarField1D::from_fn(g, |x| lambda_bar * (f * x + p).sin());
        let k = solve_kernel_march(&lam).k;
        let l = solve_inverse_kernel(&k, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let u = ScalarField1D::from_fn(g, |x| (a * x).sin() + b * x * x);
        let w = backstep_transform(&u, &k).unwrap();
        let back = inverse_transform(&w, &l).unwrap();
        let err = u.values().iter().zip(back.values()).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        prop_assert!(err <= 1e-4, "round trip error {:e}", err);
    }

    #[test]
    fn update_rate_bounded_by_certificate_constants(
        lambda_bar in 0.05..1.0f64, gamma in 0.01..2.0f64, f in 0.5..6.0f64, a in -3.0..3.0f64,
    ) {
        let g = Grid1D::new(41).unwrap();
        let lam = ScalarField1D::from_fn(g, |x| lambda_bar * (f * x).cos());
        let k = solve_kernel_march(&lam).k;
        let u = ScalarField1D::from_fn(g, |x| a * (3.0 * x).sin());
        let w = backstep_transform(&u, &k).unwrap();
        let phi = adaptation_rate(&u, &w, &k, gamma).unwrap();
        let bounds = backstep::kernel::certificate_constants(lambda_bar, 0.0, None).unwrap();
        let limit = gamma * (1.0 + bounds.l_bar) * (1.0 + bounds.k_bar);
        prop_assert!(phi.l2_norm() <= limit, "|phi| = {} > {}", phi.l2_norm(), limit);
    }
}
