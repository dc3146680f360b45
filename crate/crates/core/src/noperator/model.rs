use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{Activation, DenseGrad, Mlp};
use crate::adaptive::KernelProvider;
use crate::error::{Error, Result};
use crate::grid::{Grid1D, ScalarField1D, TriField, TriGrid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeepONetConfig {
    /// Number of sensor nodes (branch input width).
    pub m: usize,
    /// Latent dimension shared by branch and trunk outputs.
    pub p: usize,
    pub branch_hidden: Vec<usize>,
    pub trunk_hidden: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
}

impl DeepONetConfig {
    pub fn new(m: usize) -> Self {
        Self {
            m,
            p: 64,
            branch_hidden: vec![128, 128],
            trunk_hidden: vec![128, 128],
            activation: Activation::default(),
        }
    }

    fn branch_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.m];
        s.extend(&self.branch_hidden);
        s.push(self.p);
        s
    }

    fn trunk_sizes(&self) -> Vec<usize> {
        let mut s = vec![2];
        s.extend(&self.trunk_hidden);
        s.push(self.p);
        s
    }
}

/// Affine maps applied to branch inputs, trunk inputs and the prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub sensor_mean: Vec<f64>,
    pub sensor_std: Vec<f64>,
    pub trunk_shift: [f64; 2],
    pub trunk_scale: [f64; 2],
    pub output_scale: f64,
}

impl Normalization {
    pub fn identity(m: usize) -> Self {
        Self {
            sensor_mean: vec![0.0; m],
            sensor_std: vec![1.0; m],
            trunk_shift: [0.5, 0.5],
            trunk_scale: [2.0, 2.0],
            output_scale: 1.0,
        }
    }

    /// Per-sensor standardisation and `max |k|` output scale from training rows.
    pub fn fit<'a>(m: usize, sensors: impl Iterator<Item = &'a [f64]>, kernel_max: f64) -> Self {
        let mut sum = vec![0.0; m];
        let mut sq = vec![0.0; m];
        let mut count = 0usize;
        for row in sensors {
            for ((s, q), v) in sum.iter_mut().zip(sq.iter_mut()).zip(row) {
                *s += v;
                *q += v * v;
            }
            count += 1;
        }
        let n = count.max(1) as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| {
                let var = (q / n - m * m).max(0.0);
                if var.sqrt() > 1e-12 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Self {
            sensor_mean: mean,
            sensor_std: std,
            output_scale: if kernel_max > 0.0 { kernel_max } else { 1.0 },
            ..Self::identity(m)
        }
    }

    pub fn normalize_sensors(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .zip(&self.sensor_mean)
            .zip(&self.sensor_std)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    pub fn denormalize_sensors(&self, normed: &[f64]) -> Vec<f64> {
        normed
            .iter()
            .zip(&self.sensor_mean)
            .zip(&self.sensor_std)
            .map(|((v, m), s)| v * s + m)
            .collect()
    }

    pub fn normalize_point(&self, x: f64, y: f64) -> [f64; 2] {
        [
            (x - self.trunk_shift[0]) * self.trunk_scale[0],
            (y - self.trunk_shift[1]) * self.trunk_scale[1],
        ]
    }
}

/// DeepONet `k(x, y) = s * sum_j b_j(lam_hat) t_j(x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeepONetModel {
    pub branch: Mlp,
    pub trunk: Mlp,
    pub norm: Normalization,
}

/// Gradients of the training loss, one entry per layer of each network.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub branch: Vec<DenseGrad>,
    pub trunk: Vec<DenseGrad>,
}

impl Gradients {
    /// Flat views in parameter order: branch then trunk, weights then bias per layer.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for g in self.branch.iter().chain(&self.trunk) {
            out.push(g.weights.as_slice().expect("standard layout"));
            out.push(g.bias.as_slice().expect("standard layout"));
        }
        out
    }
}

/// One training minibatch in physical units.
#[derive(Debug, Clone)]
pub struct Batch {
    /// `(B, m)` raw sensor values.
    pub sensors: Array2<f64>,
    /// `(Q, 2)` query coordinates in `T`.
    pub points: Array2<f64>,
    /// `(B, Q)` kernel values.
    pub targets: Array2<f64>,
    /// Optional per-sample loss weights (length `B`); uniform when absent.
    pub weights: Option<Array1<f64>>,
}

impl DeepONetModel {
    pub fn new(config: &DeepONetConfig, seed: u64) -> Result<Self> {
        if config.m < 2 || config.p == 0 {
            return Err(Error::InvalidInput(format!(
                "need m >= 2 sensors and p >= 1 (got m = {}, p = {})",
                config.m, config.p
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let branch = Mlp::init(&config.branch_sizes(), config.activation, &mut rng);
        let trunk = Mlp::init(&config.trunk_sizes(), config.activation, &mut rng);
        Ok(Self {
            branch,
            trunk,
            norm: Normalization::identity(config.m),
        })
    }

    pub fn m(&self) -> usize {
        self.branch.sizes()[0]
    }

    pub fn p(&self) -> usize {
        *self.branch.sizes().last().expect("non-empty")
    }

    pub fn n_params(&self) -> usize {
        self.branch.n_params() + self.trunk.n_params()
    }

    pub fn sensor_grid(&self) -> Grid1D {
        Grid1D::new(self.m()).expect("m >= 2 by construction")
    }

    pub fn check_finite(&self) -> Result<()> {
        if self.branch.is_finite() && self.trunk.is_finite() && self.norm.output_scale.is_finite() {
            Ok(())
        } else {
            Err(Error::ModelCorrupt("non-finite parameters".into()))
        }
    }

    /// Mutable flat views in the same order as [`Gradients::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for l in self
            .branch
            .layers
            .iter_mut()
            .chain(self.trunk.layers.iter_mut())
        {
            out.push(l.weights.as_slice_mut().expect("standard layout"));
            out.push(l.bias.as_slice_mut().expect("standard layout"));
        }
        out
    }

    /// Normalised sensor row for `lambda_hat`, resampled to the sensor grid if needed.
    pub fn sensor_input(&self, lambda_hat: &ScalarField1D) -> Vec<f64> {
        let sensors = self.sensor_grid();
        if lambda_hat.grid() == sensors {
            self.norm.normalize_sensors(lambda_hat.values())
        } else {
            self.norm
                .normalize_sensors(lambda_hat.resample(sensors).values())
        }
    }

    pub(crate) fn trunk_input(&self, points: &Array2<f64>) -> Array2<f64> {
        let mut x = points.clone();
        for mut row in x.rows_mut() {
            let [a, b] = self.norm.normalize_point(row[0], row[1]);
            row[0] = a;
            row[1] = b;
        }
        x
    }

    /// `(Q, p)` trunk outputs at every node of `tri`.
    pub fn trunk_basis(&self, tri: TriGrid) -> Array2<f64> {
        let pts = tri.points();
        let raw = Array2::from_shape_fn(
            (pts.len(), 2),
            |(i, c)| if c == 0 { pts[i].0 } else { pts[i].1 },
        );
        self.trunk.forward(&self.trunk_input(&raw))
    }

    /// Branch coefficients for one estimate.
    pub fn branch_coefficients(&self, lambda_hat: &ScalarField1D) -> Array1<f64> {
        let row = Array2::from_shape_vec((1, self.m()), self.sensor_input(lambda_hat))
            .expect("sensor row has m entries");
        self.branch.forward(&row).row(0).to_owned()
    }

    fn assemble(
        &self,
        tri: TriGrid,
        coeffs: &Array1<f64>,
        basis: &Array2<f64>,
    ) -> Result<TriField> {
        let values = (basis.dot(coeffs) * self.norm.output_scale).to_vec();
        TriField::new(tri, values)
    }

    pub fn forward(&self, lambda_hat: &ScalarField1D, tri: TriGrid) -> Result<TriField> {
        self.check_finite()?;
        let coeffs = self.branch_coefficients(lambda_hat);
        self.assemble(tri, &coeffs, &self.trunk_basis(tri))
    }

    /// Fixes the query grid so repeated evaluations only run the branch network.
    pub fn prepare(&self, tri: TriGrid) -> Result<PreparedOperator> {
        self.check_finite()?;
        Ok(PreparedOperator {
            basis: self.trunk_basis(tri),
            model: self.clone(),
            tri,
        })
    }

    /// Mean-squared error in normalised output units (weighted per sample when
    /// the batch carries weights) and its exact gradient.
    pub fn backprop(&self, batch: &Batch) -> Result<(f64, Gradients)> {
        let (b, q) = batch.targets.dim();
        if b == 0 || q == 0 {
            return Err(Error::InvalidInput("empty batch".into()));
        }
        if batch.sensors.dim() != (b, self.m())
            || batch.points.dim() != (q, 2)
            || batch.weights.as_ref().is_some_and(|w| w.len() != b)
        {
            return Err(Error::ShapeMismatch(format!(
                "batch shapes sensors {:?}, points {:?}, targets {:?}",
                batch.sensors.dim(),
                batch.points.dim(),
                batch.targets.dim()
            )));
        }
        let mut sensors = batch.sensors.clone();
        for mut row in sensors.rows_mut() {
            let normed = self
                .norm
                .normalize_sensors(row.as_slice().expect("row-major"));
            row.assign(&Array1::from(normed));
        }
        let branch_cache = self.branch.forward_cached(&sensors);
        let trunk_cache = self.trunk.forward_cached(&self.trunk_input(&batch.points));
        let coeffs = branch_cache.output();
        let basis = trunk_cache.output();

        let mut resid = coeffs.dot(&basis.t());
        let inv_scale = 1.0 / self.norm.output_scale;
        resid.zip_mut_with(&batch.targets, |p, t| *p -= t * inv_scale);
        let count = (b * q) as f64;
        let mut weighted = resid.clone();
        if let Some(w) = &batch.weights {
            for (mut row, wi) in weighted.rows_mut().into_iter().zip(w) {
                row *= *wi;
            }
        }
        let loss = weighted
            .iter()
            .zip(resid.iter())
            .map(|(a, r)| a * r)
            .sum::<f64>()
            / count;

        let d_pred = weighted * (2.0 / count);
        let d_coeffs = d_pred.dot(basis);
        let d_basis = d_pred.t().dot(coeffs);
        Ok((
            loss,
            Gradients {
                branch: self.branch.backward(&branch_cache, d_coeffs),
                trunk: self.trunk.backward(&trunk_cache, d_basis),
            },
        ))
    }
}

/// A model bound to one triangle grid with its trunk outputs precomputed.
#[derive(Debug, Clone)]
pub struct PreparedOperator {
    model: DeepONetModel,
    tri: TriGrid,
    basis: Array2<f64>,
}

impl PreparedOperator {
    pub fn tri(&self) -> TriGrid {
        self.tri
    }

    pub fn model(&self) -> &DeepONetModel {
        &self.model
    }

    pub fn evaluate(&self, lambda_hat: &ScalarField1D) -> Result<TriField> {
        let coeffs = self.model.branch_coefficients(lambda_hat);
        self.model.assemble(self.tri, &coeffs, &self.basis)
    }
}

impl KernelProvider for PreparedOperator {
    fn kernel(&mut self, lambda_hat: &ScalarField1D) -> Result<TriField> {
        if lambda_hat.grid().tri() != self.tri {
            return Err(Error::ShapeMismatch(
                "estimate grid differs from the prepared grid".into(),
            ));
        }
        self.evaluate(lambda_hat)
    }

    fn name(&self) -> &'static str {
        "neural-operator"
    }
}
