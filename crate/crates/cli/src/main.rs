//! `backstep` command-line tool: dataset generation, operator training,
//! closed-loop simulation, kernel benchmarking and certificate constants.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

/// Environment variable naming the default root for run directories.
pub const OUT_ROOT_ENV: &str = "BACKSTEP_OUT_ROOT";

#[derive(Debug, Parser, Serialize)]
#[command(
    name = "backstep",
    version,
    about = "Adaptive backstepping with exact or neural-operator gain kernels"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "subcommand", rename_all = "kebab-case")]
enum Command {
    /// Generate (lambda_hat, k) training pairs from exact-kernel closed-loop runs.
    GenData(GenDataArgs),
    /// Train a DeepONet on a generated dataset.
    Train(TrainArgs),
    /// Run the adaptive closed loop and export trajectory, diagnostics and kernel slices.
    Simulate(SimulateArgs),
    /// Time exact kernel solves against neural-operator inference.
    Bench(BenchArgs),
    /// Compute the certificate constants for a bound and accuracy level.
    Certify(CertifyArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct OutputArgs {
    /// Output directory. Defaults to a timestamped directory under $BACKSTEP_OUT_ROOT (or ./runs).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct GenDataArgs {
    #[arg(long, default_value_t = 10)]
    pub trajectories: usize,
    #[arg(long, default_value_t = 500)]
    pub samples: usize,
    #[arg(long, default_value_t = 0.02)]
    pub dx: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub dt: f64,
    #[arg(long = "T", default_value_t = 1.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 50.0)]
    pub lambda_bar: f64,
    /// Adaptation gain of the update law.
    #[arg(long, default_value_t = 100.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 8.5)]
    pub cheb_min: f64,
    #[arg(long, default_value_t = 9.5)]
    pub cheb_max: f64,
    #[arg(long, default_value_t = 1.0)]
    pub u0_amplitude: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Control with the true-parameter kernel and run only the estimator adaptively.
    #[arg(long)]
    pub estimator_only: bool,
    /// Use dx = 0.01 and dt = 1e-5, overriding --dx and --dt.
    #[arg(long)]
    pub fine: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationArg {
    Tanh,
    Logistic,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    /// Dataset directory written by gen-data.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 300)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.99)]
    pub lr_decay: f64,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    /// Triangle nodes sampled per minibatch (0 uses all).
    #[arg(long, default_value_t = 128)]
    pub points_per_batch: usize,
    #[arg(long, default_value_t = 0.1)]
    pub test_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Latent dimension.
    #[arg(long, default_value_t = 64)]
    pub p: usize,
    /// Hidden width of both networks.
    #[arg(long, default_value_t = 128)]
    pub width: usize,
    /// Hidden layers in each network.
    #[arg(long, default_value_t = 2)]
    pub depth: usize,
    #[arg(long, value_enum, default_value_t = ActivationArg::Tanh)]
    pub activation: ActivationArg,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelArg {
    Zero,
    ExactMarch,
    ExactPicard,
    NeuralOperator,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value_t = KernelArg::ExactMarch)]
    pub kernel: KernelArg,
    /// Model file, required with --kernel neural-operator.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Order of the Chebyshev reaction coefficient lam(x) = a cos(g arccos x) + b.
    #[arg(long, default_value_t = 9.0)]
    pub cheb_gamma: f64,
    #[arg(long, default_value_t = 25.0)]
    pub cheb_amplitude: f64,
    #[arg(long, default_value_t = 25.0)]
    pub cheb_offset: f64,
    #[arg(long, default_value_t = 0.02)]
    pub dx: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub dt: f64,
    #[arg(long = "T", default_value_t = 1.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 100.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 50.0)]
    pub lambda_bar: f64,
    #[arg(long, default_value_t = 1.0)]
    pub u0_amplitude: f64,
    #[arg(long, default_value_t = 1)]
    pub kernel_stride: usize,
    #[arg(long, default_value_t = 100)]
    pub sample_stride: usize,
    /// Steps between diagnostic evaluations (0 disables them).
    #[arg(long, default_value_t = 100)]
    pub diagnostics_stride: usize,
    #[arg(long)]
    pub estimator_only: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct BenchArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Dataset whose estimates are used as inputs; Chebyshev coefficients otherwise.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.05, 0.01, 0.005])]
    pub dx: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    pub repetitions: usize,
    #[arg(long, default_value_t = 5)]
    pub warmup: usize,
    /// Add a row timing the forward pass without the cached trunk basis.
    #[arg(long)]
    pub uncached: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct CertifyArgs {
    #[arg(long)]
    pub lambda_bar: f64,
    #[arg(long, default_value_t = 0.0)]
    pub epsilon: f64,
    /// Adaptation gain; enables R and rho.
    #[arg(long)]
    pub gamma: Option<f64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let first = e
                .to_string()
                .lines()
                .next()
                .unwrap_or_default()
                .trim_start_matches("error: ")
                .to_string();
            return commands::CliError::Usage(first).report();
        }
    };
    let config = serde_json::json!({
        "version": env!("CARGO_PKG_VERSION"),
        "argv": std::env::args().collect::<Vec<_>>(),
        "command": &cli.command,
    });
    let result = match &cli.command {
        Command::GenData(a) => commands::gen_data(a, &config),
        Command::Train(a) => commands::train(a, &config),
        Command::Simulate(a) => commands::simulate(a, &config),
        Command::Bench(a) => commands::bench(a, &config),
        Command::Certify(a) => commands::certify(a, &config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => e.report(),
    }
}
