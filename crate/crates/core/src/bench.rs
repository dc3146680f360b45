//! Wall-clock comparison of exact kernel solves against neural-operator
//! inference on a range of grid spacings.
//!
//! Every measurement runs on the calling thread, one call at a time, in a
//! fixed order. The neural operator is timed through a [`PreparedOperator`]
//! whose trunk basis for the target triangle is built once before timing
//! starts; an optional extra row times the full uncached forward pass.

use std::fmt::Write as _;
use std::hint::black_box;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid1D, ScalarField1D};
use crate::kernel::solve_kernel_march;
use crate::noperator::{DeepONetModel, PreparedOperator};

pub const METHOD_EXACT: &str = "exact-march";
pub const METHOD_NO: &str = "neural-operator";
pub const METHOD_NO_UNCACHED: &str = "neural-operator-uncached";

/// Reference timings on the finest grid from other hardware, kept for display only.
pub const REFERENCE_DX: f64 = 0.005;
pub const REFERENCE_EXACT_MS: f64 = 39.88;
pub const REFERENCE_NO_MS: f64 = 0.86;
pub const REFERENCE_SPEEDUP: f64 = 45.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub dx: Vec<f64>,
    pub repetitions: usize,
    pub warmup: usize,
    /// Also time `DeepONetModel::forward`, which rebuilds the trunk basis per call.
    pub include_uncached: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            dx: vec![0.05, 0.01, 0.005],
            repetitions: 100,
            warmup: 5,
            include_uncached: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchCell {
    pub dx: f64,
    pub n_points: usize,
    pub method: String,
    pub repetitions: usize,
    pub mean_ms: f64,
    pub median_ms: f64,
    pub std_ms: f64,
    /// `mean(exact) / mean(this method)` at the same `dx`.
    pub speedup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub cpu_model: String,
    pub threads: usize,
    pub os: String,
    pub arch: String,
}

impl Environment {
    pub fn detect() -> Self {
        let cpu_model = std::fs::read_to_string("/proc/cpuinfo")
            .ok()
            .and_then(|text| {
                text.lines()
                    .find(|l| l.starts_with("model name"))
                    .and_then(|l| l.split_once(':'))
                    .map(|(_, v)| v.trim().to_string())
            })
            .unwrap_or_else(|| "unknown".into());
        Self {
            cpu_model,
            threads: 1,
            os: std::env::consts::OS.into(),
            arch: std::env::consts::ARCH.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub environment: Environment,
    pub cells: Vec<BenchCell>,
}

impl BenchReport {
    pub fn cell(&self, dx: f64, method: &str) -> Option<&BenchCell> {
        self.cells
            .iter()
            .find(|c| c.method == method && (c.dx - dx).abs() < 1e-12)
    }

    /// `median(exact) / median(neural operator)` at `dx`.
    pub fn median_speedup(&self, dx: f64) -> Option<f64> {
        let exact = self.cell(dx, METHOD_EXACT)?;
        let no = self.cell(dx, METHOD_NO)?;
        Some(exact.median_ms / no.median_ms)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("dx,method,mean_ms,median_ms,std_ms,speedup\n");
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{},{},{:.6},{:.6},{:.6},{:.4}",
                c.dx, c.method, c.mean_ms, c.median_ms, c.std_ms, c.speedup
            );
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "cpu: {} | threads: {} | {}-{} | repetitions: {}",
            self.environment.cpu_model,
            self.environment.threads,
            self.environment.os,
            self.environment.arch,
            self.config.repetitions
        );
        let _ = writeln!(
            out,
            "{:>7} {:>5} {:<26} {:>11} {:>11} {:>10} {:>9}",
            "dx", "n", "method", "mean ms", "median ms", "std ms", "speedup"
        );
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{:>7} {:>5} {:<26} {:>11.4} {:>11.4} {:>10.4} {:>8.1}x",
                c.dx, c.n_points, c.method, c.mean_ms, c.median_ms, c.std_ms, c.speedup
            );
        }
        let _ = writeln!(
            out,
            "reference row (other hardware), dx={REFERENCE_DX}: exact {REFERENCE_EXACT_MS} ms, \
             neural operator {REFERENCE_NO_MS} ms, {REFERENCE_SPEEDUP}x"
        );
        out
    }
}

fn summarize(samples_ms: &mut [f64]) -> (f64, f64, f64) {
    let n = samples_ms.len() as f64;
    let mean = samples_ms.iter().sum::<f64>() / n;
    let var = samples_ms.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    samples_ms.sort_by(f64::total_cmp);
    let mid = samples_ms.len() / 2;
    let median = if samples_ms.len().is_multiple_of(2) {
        0.5 * (samples_ms[mid - 1] + samples_ms[mid])
    } else {
        samples_ms[mid]
    };
    (mean, median, var.sqrt())
}

fn time_calls(
    inputs: &[ScalarField1D],
    warmup: usize,
    repetitions: usize,
    mut call: impl FnMut(&ScalarField1D) -> Result<f64>,
) -> Result<Vec<f64>> {
    for i in 0..warmup {
        black_box(call(&inputs[i % inputs.len()])?);
    }
    let mut out = Vec::with_capacity(repetitions);
    for i in 0..repetitions {
        let input = &inputs[i % inputs.len()];
        let start = Instant::now();
        let checksum = call(input)?;
        out.push(start.elapsed().as_secs_f64() * 1e3);
        black_box(checksum);
    }
    Ok(out)
}

/// Times one kernel production per repetition for each `dx` and method.
/// `lambda_samples` are resampled onto each benchmark grid and cycled.
pub fn run_bench(
    model: &DeepONetModel,
    lambda_samples: &[ScalarField1D],
    config: &BenchConfig,
) -> Result<BenchReport> {
    if lambda_samples.is_empty() {
        return Err(Error::InvalidInput(
            "at least one lambda sample is required".into(),
        ));
    }
    if config.repetitions < 100 {
        return Err(Error::InvalidInput(
            "repetitions must be at least 100".into(),
        ));
    }
    let mut cells = Vec::new();
    for &dx in &config.dx {
        let grid = Grid1D::with_spacing(dx)?;
        let inputs: Vec<ScalarField1D> = lambda_samples.iter().map(|l| l.resample(grid)).collect();

        let mut exact = time_calls(&inputs, config.warmup, config.repetitions, |l| {
            Ok(solve_kernel_march(l).k.get(grid.n_points() - 1, 0))
        })?;
        let prepared: PreparedOperator = model.prepare(grid.tri())?;
        let mut no = time_calls(&inputs, config.warmup, config.repetitions, |l| {
            Ok(prepared.evaluate(l)?.get(grid.n_points() - 1, 0))
        })?;
        let mut rows = vec![
            (METHOD_EXACT, summarize(&mut exact)),
            (METHOD_NO, summarize(&mut no)),
        ];
        if config.include_uncached {
            let mut raw = time_calls(&inputs, config.warmup, config.repetitions, |l| {
                Ok(model.forward(l, grid.tri())?.get(grid.n_points() - 1, 0))
            })?;
            rows.push((METHOD_NO_UNCACHED, summarize(&mut raw)));
        }
        let exact_mean = rows[0].1 .0;
        for (method, (mean, median, std)) in rows {
            cells.push(BenchCell {
                dx,
                n_points: grid.n_points(),
                method: method.into(),
                repetitions: config.repetitions,
                mean_ms: mean,
                median_ms: median,
                std_ms: std,
                speedup: exact_mean / mean,
            });
        }
    }
    Ok(BenchReport {
        config: config.clone(),
        environment: Environment::detect(),
        cells,
    })
}
