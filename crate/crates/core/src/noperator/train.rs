use std::time::Instant;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{Batch, DeepONetModel, Gradients, Normalization};
use crate::dataset::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Fraction of trajectories held out for testing.
    pub test_fraction: f64,
    /// Query nodes drawn per minibatch; 0 uses every node.
    pub points_per_batch: usize,
    /// Learning rate multiplier applied after every epoch.
    pub lr_decay: f64,
    /// When set, sample `i` is weighted by `1 / (rms(k_i / s)^2 + floor^2)`
    /// (normalised to unit mean), so near-zero kernels are fitted in relative
    /// rather than absolute terms.
    #[serde(default)]
    pub relative_weight_floor: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            batch_size: 16,
            epochs: 300,
            seed: 0,
            test_fraction: 0.1,
            points_per_batch: 128,
            lr_decay: 0.99,
            relative_weight_floor: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: usize,
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub test_trajectories: Vec<usize>,
    pub initial_train_mse: f64,
    pub train_mse: f64,
    pub test_mse: Option<f64>,
    /// Mean over test samples of `|k_hat - k|_2 / |k|_2`.
    pub test_rel_l2: Option<f64>,
    /// Test samples skipped by the relative metric because `k = 0`.
    pub test_rel_l2_skipped: usize,
    pub epoch_losses: Vec<f64>,
    pub wall_time_s: f64,
}

/// Adaptive-moment optimizer state.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(model: &DeepONetModel, config: &TrainConfig) -> Self {
        let mut model = model.clone();
        let shapes: Vec<usize> = model.tensors_mut().iter().map(|t| t.len()).collect();
        Self {
            learning_rate: config.learning_rate,
            beta1: config.beta1,
            beta2: config.beta2,
            eps: config.adam_eps,
            t: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn step(&mut self, model: &mut DeepONetModel, grads: &Gradients) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.learning_rate, self.eps);
        for (((p, g), m), v) in model
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
            }
        }
    }
}

/// `|a - b|_2 / |b|_2`, or `None` when `b = 0`.
pub fn relative_l2(prediction: &[f64], target: &[f64]) -> Option<f64> {
    let num: f64 = prediction
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    let den: f64 = target.iter().map(|t| t * t).sum();
    (den > 0.0).then(|| (num / den).sqrt())
}

struct Prepared {
    sensors: Array2<f64>,
    points: Array2<f64>,
    targets: Array2<f64>,
}

fn prepare(model: &DeepONetModel, data: &Dataset) -> Prepared {
    let n = data.n_samples();
    let m = model.m();
    let tri = data.grid().tri();
    let q = tri.len();
    let sensor_grid = model.sensor_grid();
    let mut sensors = Array2::zeros((n, m));
    let mut targets = Array2::zeros((n, q));
    for i in 0..n {
        let lam = data.lambda_field(i);
        let raw = if lam.grid() == sensor_grid {
            lam
        } else {
            lam.resample(sensor_grid)
        };
        sensors
            .row_mut(i)
            .assign(&ndarray::ArrayView1::from(raw.values()));
        targets
            .row_mut(i)
            .assign(&ndarray::ArrayView1::from(data.kernel(i)));
    }
    let pts = tri.points();
    let points = Array2::from_shape_fn((q, 2), |(i, c)| if c == 0 { pts[i].0 } else { pts[i].1 });
    Prepared {
        sensors,
        points,
        targets,
    }
}

/// Normalised-unit MSE and per-sample predictions (physical units) for `rows`.
fn evaluate(model: &DeepONetModel, prep: &Prepared, rows: &[usize]) -> (f64, Array2<f64>) {
    let basis = model.trunk.forward(&model.trunk_input(&prep.points));
    let mut sensors = prep.sensors.select(Axis(0), rows);
    for mut row in sensors.rows_mut() {
        let normed = model
            .norm
            .normalize_sensors(row.as_slice().expect("row-major"));
        row.assign(&ndarray::Array1::from(normed));
    }
    let pred = model.branch.forward(&sensors).dot(&basis.t()) * model.norm.output_scale;
    let targets = prep.targets.select(Axis(0), rows);
    let s = model.norm.output_scale;
    let mse = pred
        .iter()
        .zip(targets.iter())
        .map(|(p, t)| ((p - t) / s).powi(2))
        .sum::<f64>()
        / pred.len().max(1) as f64;
    (mse, pred)
}

/// Trains `model` on `data`, holding out whole trajectories for testing.
/// Normalisation statistics are refitted on the training split.
pub fn train(
    model: &mut DeepONetModel,
    data: &Dataset,
    config: &TrainConfig,
) -> Result<TrainReport> {
    let start = Instant::now();
    if config.relative_weight_floor.is_some_and(|f| !(f > 0.0)) {
        return Err(Error::InvalidInput(
            "relative_weight_floor must be positive".into(),
        ));
    }
    if config.batch_size == 0 {
        return Err(Error::InvalidInput("batch_size must be >= 1".into()));
    }
    if !(0.0..1.0).contains(&config.test_fraction) {
        return Err(Error::InvalidInput(
            "test_fraction must lie in [0, 1)".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n_traj = data.manifest.n_trajectories;
    let mut order: Vec<usize> = (0..n_traj).collect();
    order.shuffle(&mut rng);
    let n_test = if n_traj >= 2 {
        ((n_traj as f64 * config.test_fraction).round() as usize)
            .clamp(usize::from(config.test_fraction > 0.0), n_traj - 1)
    } else {
        0
    };
    let mut test_trajectories = order[..n_test].to_vec();
    test_trajectories.sort_unstable();
    let (test_rows, train_rows): (Vec<usize>, Vec<usize>) =
        (0..data.n_samples()).partition(|&i| test_trajectories.contains(&data.trajectory_of(i)));
    if train_rows.is_empty() {
        return Err(Error::InvalidInput("no training samples".into()));
    }

    let prep = prepare(model, data);
    let kernel_max = train_rows
        .iter()
        .flat_map(|&i| prep.targets.row(i).to_vec())
        .fold(0.0_f64, |a, v| a.max(v.abs()));
    model.norm = Normalization::fit(
        model.m(),
        train_rows
            .iter()
            .map(|&i| prep.sensors.row(i).to_slice().expect("row-major")),
        kernel_max,
    );

    let weights: Option<Vec<f64>> = config.relative_weight_floor.map(|floor| {
        let s = model.norm.output_scale;
        let raw: Vec<f64> = (0..data.n_samples())
            .map(|i| {
                let row = prep.targets.row(i);
                let ms = row.iter().map(|v| (v / s).powi(2)).sum::<f64>() / row.len() as f64;
                1.0 / (ms + floor * floor)
            })
            .collect();
        let mean = train_rows.iter().map(|&i| raw[i]).sum::<f64>() / train_rows.len() as f64;
        raw.iter().map(|w| w / mean).collect()
    });

    let (initial_train_mse, _) = evaluate(model, &prep, &train_rows);
    let q = prep.points.nrows();
    let mut adam = Adam::new(model, config);
    let mut shuffled = train_rows.clone();
    let mut node_ids: Vec<usize> = (0..q).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        shuffled.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in shuffled.chunks(config.batch_size) {
            let cols: &[usize] = if config.points_per_batch > 0 && config.points_per_batch < q {
                node_ids
                    .partial_shuffle(&mut rng, config.points_per_batch)
                    .0
            } else {
                &node_ids
            };
            let batch = Batch {
                sensors: prep.sensors.select(Axis(0), chunk),
                points: prep.points.select(Axis(0), cols),
                targets: prep.targets.select(Axis(0), chunk).select(Axis(1), cols),
                weights: weights
                    .as_ref()
                    .map(|w| chunk.iter().map(|&i| w[i]).collect()),
            };
            let (loss, grads) = model.backprop(&batch)?;
            if !loss.is_finite() {
                return Err(Error::TrainingFailure { epoch });
            }
            adam.step(model, &grads);
            total += loss;
            batches += 1;
        }
        if model.check_finite().is_err() {
            return Err(Error::TrainingFailure { epoch });
        }
        epoch_losses.push(total / batches as f64);
        adam.learning_rate *= config.lr_decay;
    }

    let (train_mse, _) = evaluate(model, &prep, &train_rows);
    let (test_mse, test_rel_l2, skipped) = if test_rows.is_empty() {
        (None, None, 0)
    } else {
        let (mse, pred) = evaluate(model, &prep, &test_rows);
        let rels: Vec<Option<f64>> = test_rows
            .iter()
            .enumerate()
            .map(|(r, &i)| {
                relative_l2(
                    pred.row(r).as_slice().expect("row-major"),
                    prep.targets.row(i).as_slice().expect("row-major"),
                )
            })
            .collect();
        let used: Vec<f64> = rels.iter().flatten().copied().collect();
        let mean = (!used.is_empty()).then(|| used.iter().sum::<f64>() / used.len() as f64);
        (Some(mse), mean, rels.len() - used.len())
    };

    Ok(TrainReport {
        epochs: config.epochs,
        seed: config.seed,
        n_train: train_rows.len(),
        n_test: test_rows.len(),
        test_trajectories,
        initial_train_mse,
        train_mse,
        test_mse,
        test_rel_l2,
        test_rel_l2_skipped: skipped,
        epoch_losses,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}
