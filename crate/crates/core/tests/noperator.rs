use backstep::adaptive::KernelProvider;
use backstep::dataset::{Dataset, DatasetManifest, GENERATOR_VERSION};
use backstep::grid::{Grid1D, ScalarField1D};
use backstep::noperator::*;
use backstep::Error;
use ndarray::{arr1, arr2, Array2};
use proptest::prelude::*;

fn small_model_with(seed: u64, m: usize, activation: Activation) -> DeepONetModel {
    let cfg = DeepONetConfig {
        m,
        p: 4,
        branch_hidden: vec![6],
        trunk_hidden: vec![5],
        activation,
    };
    DeepONetModel::new(&cfg, seed).unwrap()
}

fn small_model(seed: u64, m: usize) -> DeepONetModel {
    small_model_with(seed, m, Activation::Tanh)
}

fn random_batch(m: usize, b: usize, q: usize) -> Batch {
    Batch {
        sensors: Array2::from_shape_fn((b, m), |(i, j)| ((i * 7 + j * 3) as f64 * 0.37).sin()),
        points: Array2::from_shape_fn((q, 2), |(i, c)| {
            let x = (i as f64 + 0.5) / q as f64;
            if c == 0 {
                x
            } else {
                x * ((i * 5 % 7) as f64 / 7.0)
            }
        }),
        targets: Array2::from_shape_fn((b, q), |(i, j)| ((i + 2 * j) as f64 * 0.21).cos()),
        weights: None,
    }
}

/// Largest per-tensor `max|analytic - numeric| / max|analytic|`, and the
/// largest per-entry relative error over entries with |analytic| > floor.
fn gradient_errors(model: &DeepONetModel, batch: &Batch, h: f64, floor: f64) -> (f64, f64) {
    let (_, grads) = model.backprop(batch).unwrap();
    let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|t| t.to_vec()).collect();
    let mut worst_tensor = 0.0_f64;
    let mut worst_entry = 0.0_f64;
    for (ti, a) in analytic.iter().enumerate() {
        let mut max_diff = 0.0_f64;
        let mut max_a = 0.0_f64;
        for k in 0..a.len() {
            let mut plus = model.clone();
            plus.tensors_mut()[ti][k] += h;
            let mut minus = model.clone();
            minus.tensors_mut()[ti][k] -= h;
            let num =
                (plus.backprop(batch).unwrap().0 - minus.backprop(batch).unwrap().0) / (2.0 * h);
            max_diff = max_diff.max((a[k] - num).abs());
            max_a = max_a.max(a[k].abs());
            if a[k].abs() > floor {
                worst_entry = worst_entry.max((a[k] - num).abs() / a[k].abs());
            }
        }
        worst_tensor = worst_tensor.max(max_diff / max_a.max(f64::MIN_POSITIVE));
    }
    (worst_tensor, worst_entry)
}

#[test]
fn zero_branch_output_predicts_zero() {
    let mut model = small_model(1, 5);
    let last = model.branch.layers.last_mut().unwrap();
    last.weights.fill(0.0);
    last.bias.fill(0.0);
    let g = Grid1D::new(5).unwrap();
    let k = model
        .forward(&ScalarField1D::from_fn(g, |x| 3.0 * x), g.tri())
        .unwrap();
    assert_eq!(k.sup_norm(), 0.0);
}

#[test]
fn constant_branch_and_trunk_give_their_product() {
    let cfg = DeepONetConfig {
        p: 1,
        branch_hidden: vec![2],
        trunk_hidden: vec![2],
        ..DeepONetConfig::new(3)
    };
    let mut model = DeepONetModel::new(&cfg, 0).unwrap();
    let b = model.branch.layers.last_mut().unwrap();
    b.weights.fill(0.0);
    b.bias.fill(2.0);
    let t = model.trunk.layers.last_mut().unwrap();
    t.weights.fill(0.0);
    t.bias.fill(3.0);
    let g = Grid1D::new(3).unwrap();
    let k = model
        .forward(&ScalarField1D::from_fn(g, |x| x), g.tri())
        .unwrap();
    assert!(k.values().iter().all(|v| *v == 6.0));
}

#[test]
fn prediction_is_the_branch_trunk_inner_product() {
    let model = small_model(5, 9);
    let g = Grid1D::new(9).unwrap();
    let lam = ScalarField1D::from_fn(g, |x| (4.0 * x).sin());
    let k = model.forward(&lam, g.tri()).unwrap();
    let coeffs = model.branch_coefficients(&lam);
    let basis = model.trunk_basis(g.tri());
    for (q, v) in k.values().iter().enumerate() {
        let dot: f64 = basis
            .row(q)
            .iter()
            .zip(coeffs.iter())
            .map(|(a, b)| a * b)
            .sum();
        assert_eq!(*v, dot * model.norm.output_scale);
    }
    let mut prepared = model.prepare(g.tri()).unwrap();
    assert_eq!(prepared.kernel(&lam).unwrap(), k);
}

#[test]
fn forward_resamples_mismatched_grids() {
    let model = small_model(2, 11);
    let fine = Grid1D::new(21).unwrap();
    let lam = ScalarField1D::from_fn(fine, |x| x * x);
    let k = model.forward(&lam, fine.tri()).unwrap();
    assert_eq!(k.tri(), fine.tri());
    let coarse = lam.resample(Grid1D::new(11).unwrap());
    assert_eq!(
        model.branch_coefficients(&lam),
        model.branch_coefficients(&coarse)
    );
}

#[test]
fn non_finite_parameters_are_reported() {
    let mut model = small_model(1, 4);
    model.trunk.layers[0].weights[[0, 0]] = f64::NAN;
    let g = Grid1D::new(4).unwrap();
    let res = model.forward(&ScalarField1D::zeros(g), g.tri());
    assert!(matches!(res, Err(Error::ModelCorrupt(_))));
}

#[test]
fn zero_residual_batch_has_zero_gradients() {
    let model = small_model(3, 4);
    let mut batch = random_batch(4, 3, 7);
    // Targets equal to the model's own prediction in physical units.
    let basis = model.trunk.forward(&{
        let mut p = batch.points.clone();
        for mut r in p.rows_mut() {
            let [a, b] = model.norm.normalize_point(r[0], r[1]);
            r[0] = a;
            r[1] = b;
        }
        p
    });
    batch.targets = model.branch.forward(&batch.sensors).dot(&basis.t()) * model.norm.output_scale;
    let (loss, grads) = model.backprop(&batch).unwrap();
    assert!(loss < 1e-30);
    assert!(grads
        .tensors()
        .iter()
        .all(|t| t.iter().all(|g| g.abs() < 1e-15)));
}

#[test]
fn single_sample_gradient_matches_hand_calculation() {
    // branch: b = wb s + cb, trunk: tau = wt . (2x - 1, 2y - 1) + ct, k = b tau.
    let cfg = DeepONetConfig {
        p: 1,
        branch_hidden: vec![],
        trunk_hidden: vec![],
        ..DeepONetConfig::new(2)
    };
    let mut model = DeepONetModel::new(&cfg, 0).unwrap();
    model.branch.layers[0].weights = arr2(&[[0.5, -1.0]]);
    model.branch.layers[0].bias = arr1(&[0.25]);
    model.trunk.layers[0].weights = arr2(&[[2.0, 1.0]]);
    model.trunk.layers[0].bias = arr1(&[-0.5]);
    let batch = Batch {
        sensors: arr2(&[[1.0, 0.5]]),
        points: arr2(&[[0.75, 0.25]]),
        targets: arr2(&[[1.0]]),
        weights: None,
    };
    // b = 0.5 - 0.5 + 0.25 = 0.25; trunk input (0.5, -0.5); tau = 1 - 0.5 - 0.5 = 0
    // pred = 0, r = -1, loss = 1, dL/dpred = -2
    // dL/db = -2 tau = 0; dL/dtau = -2 b = -0.5
    let (loss, g) = model.backprop(&batch).unwrap();
    assert_eq!(loss, 1.0);
    assert_eq!(g.branch[0].weights, arr2(&[[0.0, 0.0]]));
    assert_eq!(g.branch[0].bias, arr1(&[0.0]));
    assert_eq!(g.trunk[0].weights, arr2(&[[-0.25, 0.25]]));
    assert_eq!(g.trunk[0].bias, arr1(&[-0.5]));
}

#[test]
fn backprop_matches_central_differences() {
    for activation in [Activation::Tanh, Activation::Logistic] {
        let mut model = small_model_with(11, 5, activation);
        model.norm.output_scale = 1.7;
        model.norm.sensor_mean = vec![0.1, -0.2, 0.0, 0.3, 0.05];
        model.norm.sensor_std = vec![1.0, 0.5, 2.0, 1.5, 0.8];
        let mut batch = random_batch(5, 4, 9);
        let (tensor_err, _) = gradient_errors(&model, &batch, 1e-6, 1e-3);
        assert!(
            tensor_err <= 1e-6,
            "{activation:?}: relative gradient error {tensor_err:e}"
        );
        batch.weights = Some(arr1(&[0.5, 2.0, 1.0, 0.25]));
        let (tensor_err, _) = gradient_errors(&model, &batch, 1e-6, 1e-3);
        assert!(
            tensor_err <= 1e-6,
            "{activation:?} weighted: gradient error {tensor_err:e}"
        );
    }
}

#[test]
fn normalization_round_trip() {
    let n = Normalization::fit(
        3,
        [[1.0, 2.0, 3.0].as_slice(), [3.0, 2.0, -1.0].as_slice()].into_iter(),
        4.0,
    );
    assert_eq!(n.sensor_std[1], 1.0);
    let raw = [0.3, -7.0, 1e3];
    let back = n.denormalize_sensors(&n.normalize_sensors(&raw));
    for (a, b) in raw.iter().zip(&back) {
        assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }
}

fn toy_dataset(n_traj: usize, per: usize, n: usize) -> Dataset {
    let g = Grid1D::new(n).unwrap();
    let mut lambdas = Vec::new();
    let mut kernels = Vec::new();
    for s in 0..n_traj * per {
        let a = 0.2 + 0.8 * s as f64 / (n_traj * per) as f64;
        let lam = ScalarField1D::from_fn(g, |x| a * (1.0 + x));
        lambdas.extend_from_slice(lam.values());
        kernels.extend(backstep::kernel::solve_kernel_march(&lam).k.into_values());
    }
    let manifest = DatasetManifest {
        generator_version: GENERATOR_VERSION,
        n_trajectories: n_traj,
        samples_per_trajectory: per,
        n_points: n,
        dx: g.dx(),
        dt: 1e-3,
        horizon: 1.0,
        lambda_bar: 2.0,
        cheb_gamma_range: [0.0, 0.0],
        adaptation_gain: 1.0,
        seed: 0,
        estimator_only: false,
        cheb_gammas: vec![0.0; n_traj],
        retries: vec![0; n_traj],
        payload_bytes: 0,
        sha256: String::new(),
    };
    Dataset::from_samples(manifest, lambdas, kernels).unwrap()
}

#[test]
fn zero_epochs_leave_weights_and_echo_initial_loss() {
    let data = toy_dataset(4, 3, 6);
    let mut model = small_model(0, 6);
    let before = model.clone();
    let cfg = TrainConfig {
        epochs: 0,
        ..TrainConfig::default()
    };
    let report = train(&mut model, &data, &cfg).unwrap();
    assert_eq!(model.branch, before.branch);
    assert_eq!(model.trunk, before.trunk);
    assert_eq!(report.train_mse, report.initial_train_mse);
    assert!(report.epoch_losses.is_empty());
}

#[test]
fn split_keeps_trajectories_whole_and_training_is_deterministic() {
    let data = toy_dataset(10, 4, 6);
    let cfg = TrainConfig {
        epochs: 5,
        batch_size: 4,
        seed: 9,
        ..TrainConfig::default()
    };
    let mut a = small_model(0, 6);
    let mut b = small_model(0, 6);
    let ra = train(&mut a, &data, &cfg).unwrap();
    let rb = train(&mut b, &data, &cfg).unwrap();
    assert_eq!(ra.n_test, 4);
    assert_eq!(ra.test_trajectories.len(), 1);
    assert_eq!(ra.epoch_losses, rb.epoch_losses);
    assert_eq!(ra.test_rel_l2, rb.test_rel_l2);
    assert_eq!(a, b);
}

#[test]
fn overfits_a_small_dataset() {
    let data = toy_dataset(10, 1, 6);
    let mut model = DeepONetModel::new(&DeepONetConfig::new(6), 4).unwrap();
    let cfg = TrainConfig {
        epochs: 2000,
        batch_size: 10,
        test_fraction: 0.0,
        lr_decay: 1.0,
        ..TrainConfig::default()
    };
    let report = train(&mut model, &data, &cfg).unwrap();
    assert_eq!(report.n_train, 10);
    assert!(report.train_mse <= 1e-5, "train mse {:e}", report.train_mse);
}

#[test]
fn save_load_round_trip_is_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.bin");
    let mut model = small_model_with(8, 7, Activation::Logistic);
    model.norm.output_scale = 123.5;
    save_model(&model, &path).unwrap();
    let loaded = load_model(&path).unwrap();
    assert_eq!(loaded, model);
    let g = Grid1D::new(7).unwrap();
    let probe = ScalarField1D::from_fn(g, |x| (9.0 * x).cos());
    let a = model.forward(&probe, g.tri()).unwrap();
    let b = loaded.forward(&probe, g.tri()).unwrap();
    assert!(a
        .values()
        .iter()
        .zip(b.values())
        .all(|(p, q)| p.to_bits() == q.to_bits()));
}

#[test]
fn truncated_model_file_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.bin");
    save_model(&small_model(1, 4), &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
    match load_model(&path) {
        Err(Error::Parse { offset, .. }) => assert_eq!(offset, bytes.len() - 8),
        other => panic!("unexpected {other:?}"),
    }
    std::fs::write(&path, b"{\"format\": \"deeponet\", oops}\n").unwrap();
    assert!(matches!(load_model(&path), Err(Error::Parse { offset, .. }) if offset > 0));
}

#[test]
fn version_mismatch_is_explicit() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.bin");
    save_model(&small_model(1, 4), &path).unwrap();
    let text = std::fs::read(&path).unwrap();
    let pos = text
        .windows(18)
        .position(|w| w == b"\"format_version\":1")
        .unwrap();
    let mut patched = text.clone();
    patched[pos + 17] = b'7';
    std::fs::write(&path, patched).unwrap();
    assert!(matches!(
        load_model(&path),
        Err(Error::UnsupportedVersion {
            found: 7,
            expected: 1
        })
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]
    #[test]
    fn gradients_agree_with_differences_for_random_models(seed in 0u64..1000, logistic: bool) {
        let activation = if logistic { Activation::Logistic } else { Activation::Tanh };
        let model = small_model_with(seed, 4, activation);
        let batch = random_batch(4, 2, 5);
        let (tensor_err, _) = gradient_errors(&model, &batch, 1e-6, 1e-3);
        prop_assert!(tensor_err <= 1e-6, "relative gradient error {:e}", tensor_err);
    }
}
