use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Hidden-layer nonlinearity. Both are smooth and sigmoidal;
/// `tanh(z) = 2 logistic(2 z) - 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Logistic,
    #[default]
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Logistic => 1.0 / (1.0 + (-z).exp()),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activation value `a`.
    #[inline]
    fn slope(self, a: f64) -> f64 {
        match self {
            Activation::Logistic => a * (1.0 - a),
            Activation::Tanh => 1.0 - a * a,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Logistic => "logistic",
            Activation::Tanh => "tanh",
        }
    }
}

/// Dense layer `y = x W^T + b` with `W` stored `(out, in)` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Feed-forward network with sigmoidal hidden layers and a linear output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub activation: Activation,
}

/// Layer activations kept for the backward pass. `acts[0]` is the input.
pub(crate) struct MlpCache {
    pub acts: Vec<Array2<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &Array2<f64> {
        self.acts.last().expect("cache holds at least the input")
    }
}

/// Gradient of one layer, same shapes as [`Dense`].
#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrad {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Mlp {
    /// Glorot-uniform weights, zero biases.
    pub fn init(sizes: &[usize], activation: Activation, rng: &mut impl Rng) -> Self {
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
                Dense {
                    weights: Array2::from_shape_fn((fan_out, fan_in), |_| rng.gen_range(-a..a)),
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Self { layers, activation }
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].weights.ncols()];
        s.extend(self.layers.iter().map(|l| l.weights.nrows()));
        s
    }

    pub fn n_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    pub fn forward(&self, input: &Array2<f64>) -> Array2<f64> {
        let last = self.layers.len() - 1;
        let mut x = input.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            x = x.dot(&layer.weights.t()) + &layer.bias;
            if i < last {
                x.mapv_inplace(|v| self.activation.apply(v));
            }
        }
        x
    }

    pub(crate) fn forward_cached(&self, input: &Array2<f64>) -> MlpCache {
        let last = self.layers.len() - 1;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input.to_owned());
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = acts[i].dot(&layer.weights.t()) + &layer.bias;
            if i < last {
                z.mapv_inplace(|v| self.activation.apply(v));
            }
            acts.push(z);
        }
        MlpCache { acts }
    }

    /// Reverse pass given `d loss / d output`.
    pub(crate) fn backward(&self, cache: &MlpCache, d_out: Array2<f64>) -> Vec<DenseGrad> {
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut dz = d_out;
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let a_prev = &cache.acts[i];
            grads.push(DenseGrad {
                weights: dz.t().dot(a_prev),
                bias: dz.sum_axis(Axis(0)),
            });
            if i > 0 {
                let mut da = dz.dot(&layer.weights);
                da.zip_mut_with(a_prev, |d, a| *d *= self.activation.slope(*a));
                dz = da;
            }
        }
        grads.reverse();
        grads
    }
}
