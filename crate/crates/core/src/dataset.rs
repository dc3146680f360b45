//! Training pairs `(lambda_hat, k)` sampled from exact-kernel closed-loop runs
//! on randomly drawn Chebyshev plants.
//!
//! On disk a dataset is a directory with a JSON `manifest` and a little-endian
//! `data.bin` payload holding, per sample, the `n` estimate values followed by
//! the `n (n + 1) / 2` kernel values in triangle row order.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adaptive::{run_closed_loop, ClosedLoopConfig, MarchKernel};
use crate::error::{Error, Result};
use crate::grid::{Grid1D, ScalarField1D, TriField};
use crate::kernel::solve_kernel_march;
use crate::plant::chebyshev_lambda_default;

pub const GENERATOR_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest";
pub const PAYLOAD_FILE: &str = "data.bin";
const MAX_RETRIES: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub n_trajectories: usize,
    pub samples_per_trajectory: usize,
    pub n_points: usize,
    pub dt: f64,
    pub horizon: f64,
    pub lambda_bar: f64,
    pub cheb_gamma_range: [f64; 2],
    pub adaptation_gain: f64,
    pub u0_amplitude: f64,
    pub seed: u64,
    /// Drive the plant with the true-parameter controller and only run the
    /// estimator adaptively.
    pub estimator_only: bool,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        let lp = ClosedLoopConfig::default();
        Self {
            n_trajectories: 10,
            samples_per_trajectory: 500,
            n_points: 51,
            dt: 1e-4,
            horizon: 1.0,
            lambda_bar: 50.0,
            cheb_gamma_range: [8.5, 9.5],
            adaptation_gain: lp.gamma,
            u0_amplitude: 1.0,
            seed: 0,
            estimator_only: false,
        }
    }
}

impl DatasetConfig {
    /// Full-resolution settings: `dx = 0.01`, `dt = 1e-5`.
    pub fn fine() -> Self {
        Self {
            n_points: 101,
            dt: 1e-5,
            ..Self::default()
        }
    }

    fn loop_config(&self) -> ClosedLoopConfig {
        let n_steps = (self.horizon / self.dt).round() as usize;
        ClosedLoopConfig {
            n_points: self.n_points,
            dt: self.dt,
            horizon: self.horizon,
            gamma: self.adaptation_gain,
            lambda_bar: self.lambda_bar,
            u0_amplitude: self.u0_amplitude,
            sample_stride: (n_steps / self.samples_per_trajectory.max(1)).max(1),
            diagnostics_stride: 0,
            estimator_only: self.estimator_only,
            ..ClosedLoopConfig::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_trajectories == 0 || self.samples_per_trajectory == 0 {
            return Err(Error::InvalidInput(
                "need at least one trajectory and one sample".into(),
            ));
        }
        let n_steps = (self.horizon / self.dt).round() as usize;
        if n_steps == 0 || !n_steps.is_multiple_of(self.samples_per_trajectory) {
            return Err(Error::InvalidInput(format!(
                "{n_steps} steps cannot be split into {} uniform samples",
                self.samples_per_trajectory
            )));
        }
        let [lo, hi] = self.cheb_gamma_range;
        if !(lo <= hi && lo.is_finite() && hi.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "bad Chebyshev range [{lo}, {hi}]"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub generator_version: u32,
    pub n_trajectories: usize,
    pub samples_per_trajectory: usize,
    pub n_points: usize,
    pub dx: f64,
    pub dt: f64,
    pub horizon: f64,
    pub lambda_bar: f64,
    pub cheb_gamma_range: [f64; 2],
    pub adaptation_gain: f64,
    pub seed: u64,
    pub estimator_only: bool,
    /// Chebyshev parameter finally used by each trajectory.
    pub cheb_gammas: Vec<f64>,
    /// Divergence retries spent per trajectory.
    pub retries: Vec<usize>,
    pub payload_bytes: usize,
    pub sha256: String,
}

impl DatasetManifest {
    pub fn n_samples(&self) -> usize {
        self.n_trajectories * self.samples_per_trajectory
    }

    pub fn tri_len(&self) -> usize {
        self.n_points * (self.n_points + 1) / 2
    }

    pub fn sample_len(&self) -> usize {
        self.n_points + self.tri_len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    lambdas: Vec<f64>,
    kernels: Vec<f64>,
}

struct TrajectoryData {
    cheb_gamma: f64,
    retries: usize,
    lambdas: Vec<f64>,
    kernels: Vec<f64>,
}

fn generate_trajectory(config: &DatasetConfig, index: usize) -> Result<TrajectoryData> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index as u64);
    let grid = Grid1D::new(config.n_points)?;
    let loop_cfg = config.loop_config();
    let [lo, hi] = config.cheb_gamma_range;
    let mut last_error = None;
    for attempt in 0..=MAX_RETRIES {
        let cheb_gamma = if lo < hi { rng.gen_range(lo..hi) } else { lo };
        let lambda = chebyshev_lambda_default(grid, cheb_gamma);
        match run_closed_loop(&loop_cfg, &lambda, &mut MarchKernel) {
            Ok(traj) => {
                let mut lambdas = Vec::new();
                let mut kernels = Vec::new();
                for snap in traj
                    .snapshots
                    .iter()
                    .skip(1)
                    .take(config.samples_per_trajectory)
                {
                    lambdas.extend_from_slice(snap.lambda_hat.values());
                    kernels.extend(solve_kernel_march(&snap.lambda_hat).k.into_values());
                }
                return Ok(TrajectoryData {
                    cheb_gamma,
                    retries: attempt,
                    lambdas,
                    kernels,
                });
            }
            Err(failure) => {
                if attempt < MAX_RETRIES {
                    eprintln!(
                        "trajectory {index}: {} with cheb_gamma = {cheb_gamma:.4}; redrawing",
                        failure.error
                    );
                }
                last_error = Some(failure.error);
            }
        }
    }
    Err(last_error.expect("at least one attempt ran"))
}

/// Runs every trajectory (in parallel) and assembles the dataset in index order.
pub fn generate(config: &DatasetConfig) -> Result<Dataset> {
    config.validate()?;
    let parts: Vec<Result<TrajectoryData>> = (0..config.n_trajectories)
        .into_par_iter()
        .map(|i| generate_trajectory(config, i))
        .collect();
    let mut lambdas = Vec::new();
    let mut kernels = Vec::new();
    let mut cheb_gammas = Vec::new();
    let mut retries = Vec::new();
    for part in parts {
        let part = part?;
        lambdas.extend(part.lambdas);
        kernels.extend(part.kernels);
        cheb_gammas.push(part.cheb_gamma);
        retries.push(part.retries);
    }
    let mut manifest = DatasetManifest {
        generator_version: GENERATOR_VERSION,
        n_trajectories: config.n_trajectories,
        samples_per_trajectory: config.samples_per_trajectory,
        n_points: config.n_points,
        dx: 1.0 / (config.n_points - 1) as f64,
        dt: config.dt,
        horizon: config.horizon,
        lambda_bar: config.lambda_bar,
        cheb_gamma_range: config.cheb_gamma_range,
        adaptation_gain: config.adaptation_gain,
        seed: config.seed,
        estimator_only: config.estimator_only,
        cheb_gammas,
        retries,
        payload_bytes: 0,
        sha256: String::new(),
    };
    let mut ds = Dataset {
        manifest: manifest.clone(),
        lambdas,
        kernels,
    };
    let payload = ds.payload();
    manifest.payload_bytes = payload.len();
    manifest.sha256 = hex::encode(Sha256::digest(&payload));
    ds.manifest = manifest;
    Ok(ds)
}

impl Dataset {
    /// Builds a dataset from in-memory samples (one trajectory per `samples_per_trajectory` rows).
    pub fn from_samples(
        mut manifest: DatasetManifest,
        lambdas: Vec<f64>,
        kernels: Vec<f64>,
    ) -> Result<Self> {
        if lambdas.len() != manifest.n_samples() * manifest.n_points
            || kernels.len() != manifest.n_samples() * manifest.tri_len()
        {
            return Err(Error::ShapeMismatch(
                "sample arrays disagree with the manifest".into(),
            ));
        }
        let mut ds = Self {
            manifest: manifest.clone(),
            lambdas,
            kernels,
        };
        let payload = ds.payload();
        manifest.payload_bytes = payload.len();
        manifest.sha256 = hex::encode(Sha256::digest(&payload));
        ds.manifest = manifest;
        Ok(ds)
    }

    pub fn n_samples(&self) -> usize {
        self.manifest.n_samples()
    }

    pub fn grid(&self) -> Grid1D {
        Grid1D::new(self.manifest.n_points).expect("validated manifest")
    }

    pub fn lambda(&self, i: usize) -> &[f64] {
        let n = self.manifest.n_points;
        &self.lambdas[i * n..(i + 1) * n]
    }

    pub fn kernel(&self, i: usize) -> &[f64] {
        let t = self.manifest.tri_len();
        &self.kernels[i * t..(i + 1) * t]
    }

    pub fn lambda_field(&self, i: usize) -> ScalarField1D {
        ScalarField1D::new(self.grid(), self.lambda(i).to_vec()).expect("validated sizes")
    }

    pub fn kernel_field(&self, i: usize) -> TriField {
        TriField::new(self.grid().tri(), self.kernel(i).to_vec()).expect("validated sizes")
    }

    pub fn trajectory_of(&self, i: usize) -> usize {
        i / self.manifest.samples_per_trajectory
    }

    pub fn payload(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 * (self.lambdas.len() + self.kernels.len()));
        for i in 0..self.n_samples() {
            for v in self.lambda(i).iter().chain(self.kernel(i)) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(
            dir.join(MANIFEST_FILE),
            serde_json::to_string_pretty(&self.manifest)?,
        )?;
        fs::write(dir.join(PAYLOAD_FILE), self.payload())?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: DatasetManifest =
            serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
        if manifest.generator_version != GENERATOR_VERSION {
            return Err(Error::UnsupportedVersion {
                found: manifest.generator_version,
                expected: GENERATOR_VERSION,
            });
        }
        if manifest.n_points < 2 {
            return Err(Error::CorruptDataset(format!(
                "n_points = {}",
                manifest.n_points
            )));
        }
        let bytes = fs::read(dir.join(PAYLOAD_FILE))?;
        let sample_bytes = 8 * manifest.sample_len();
        let expected = manifest.n_samples() * sample_bytes;
        if bytes.len() != expected || manifest.payload_bytes != expected {
            return Err(Error::CorruptDataset(format!(
                "payload is {} bytes, manifest describes {expected}",
                bytes.len()
            )));
        }
        let n = manifest.n_points;
        let mut lambdas = Vec::with_capacity(manifest.n_samples() * n);
        let mut kernels = Vec::with_capacity(manifest.n_samples() * manifest.tri_len());
        for (s, chunk) in bytes.chunks_exact(sample_bytes).enumerate() {
            for (j, b) in chunk.chunks_exact(8).enumerate() {
                let v = f64::from_le_bytes(b.try_into().expect("8-byte chunk"));
                if !v.is_finite() {
                    return Err(Error::CorruptDataset(format!(
                        "sample {s} holds a non-finite value"
                    )));
                }
                if j < n {
                    if v.abs() > manifest.lambda_bar {
                        return Err(Error::CorruptDataset(format!(
                            "sample {s} estimate exceeds the projection bound"
                        )));
                    }
                    lambdas.push(v);
                } else {
                    kernels.push(v);
                }
            }
        }
        if hex::encode(Sha256::digest(&bytes)) != manifest.sha256 {
            return Err(Error::CorruptDataset("checksum mismatch".into()));
        }
        Ok(Self {
            manifest,
            lambdas,
            kernels,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> DatasetConfig {
        DatasetConfig {
            n_trajectories: 2,
            samples_per_trajectory: 5,
            n_points: 11,
            dt: 1e-3,
            horizon: 0.05,
            ..DatasetConfig::default()
        }
    }

    #[test]
    fn payload_length_matches_format() {
        let cfg = DatasetConfig {
            n_trajectories: 1,
            ..tiny()
        };
        let ds = generate(&cfg).unwrap();
        assert_eq!(ds.payload().len(), 8 * 5 * (11 + 66));
        assert_eq!(ds.manifest.payload_bytes, ds.payload().len());
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate(&tiny()).unwrap();
        let b = generate(&tiny()).unwrap();
        assert_eq!(a.payload(), b.payload());
        assert_eq!(a.manifest, b.manifest);
        let c = generate(&DatasetConfig { seed: 1, ..tiny() }).unwrap();
        assert_ne!(a.manifest.cheb_gammas, c.manifest.cheb_gammas);
    }

    #[test]
    fn rejects_uneven_sampling() {
        let cfg = DatasetConfig {
            samples_per_trajectory: 7,
            ..tiny()
        };
        assert!(matches!(generate(&cfg), Err(Error::InvalidInput(_))));
    }
}
