use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use backstep::adaptive::{
    run_closed_loop, ClosedLoopConfig, KernelProvider, MarchKernel, PicardKernel, Trajectory,
    ZeroKernel,
};
use backstep::bench::{run_bench, BenchConfig};
use backstep::dataset::{generate, Dataset, DatasetConfig};
use backstep::grid::{Grid1D, ScalarField1D};
use backstep::kernel::certificate_constants;
use backstep::noperator::{
    load_model, save_model, Activation, DeepONetConfig, DeepONetModel, TrainConfig,
};
use backstep::plant::chebyshev_lambda;

use crate::output::{number, prepare, write_json};
use crate::{
    ActivationArg, BenchArgs, CertifyArgs, GenDataArgs, KernelArg, SimulateArgs, TrainArgs,
};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(backstep::Error),
}

impl From<backstep::Error> for CliError {
    fn from(e: backstep::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Core(backstep::Error::Io(std::io::Error::other(e)))
    }
}

impl CliError {
    /// Prints a single `error: kind=<tag> message=<text>` line to stderr.
    pub fn report(&self) -> ExitCode {
        let (kind, message, code) = match self {
            CliError::Usage(m) => ("usage", m.clone(), 2),
            CliError::Core(e) => (e.kind(), e.to_string(), 1),
        };
        let message = message.replace(['\n', '\r'], " ");
        eprintln!("error: kind={kind} message={message}");
        ExitCode::from(code)
    }
}

type CmdResult = Result<(), CliError>;

fn grid_for(dx: f64) -> Result<Grid1D, CliError> {
    Ok(Grid1D::with_spacing(dx)?)
}

pub fn gen_data(args: &GenDataArgs, config: &serde_json::Value) -> CmdResult {
    if args.cheb_min > args.cheb_max {
        return Err(CliError::Usage(
            "--cheb-min must not exceed --cheb-max".into(),
        ));
    }
    let (dx, dt) = if args.fine {
        (0.01, 1e-5)
    } else {
        (args.dx, args.dt)
    };
    let cfg = DatasetConfig {
        n_trajectories: args.trajectories,
        samples_per_trajectory: args.samples,
        n_points: grid_for(dx)?.n_points(),
        dt,
        horizon: args.horizon,
        lambda_bar: args.lambda_bar,
        cheb_gamma_range: [args.cheb_min, args.cheb_max],
        adaptation_gain: args.gamma,
        u0_amplitude: args.u0_amplitude,
        seed: args.seed,
        estimator_only: args.estimator_only,
    };
    let dir = prepare(args.output.out.as_deref(), "gen-data", config)?;
    let start = Instant::now();
    let data = generate(&cfg)?;
    data.save(&dir)?;
    println!(
        "ok: dir={} samples={} retries={} seconds={:.1}",
        dir.display(),
        data.n_samples(),
        data.manifest.retries.iter().sum::<usize>(),
        start.elapsed().as_secs_f64()
    );
    Ok(())
}

pub fn train(args: &TrainArgs, config: &serde_json::Value) -> CmdResult {
    let data = Dataset::load(&args.data)?;
    let dir = prepare(args.output.out.as_deref(), "train", config)?;
    let hidden = vec![args.width; args.depth];
    let model_cfg = DeepONetConfig {
        m: data.grid().n_points(),
        p: args.p,
        branch_hidden: hidden.clone(),
        trunk_hidden: hidden,
        activation: match args.activation {
            ActivationArg::Tanh => Activation::Tanh,
            ActivationArg::Logistic => Activation::Logistic,
        },
    };
    let train_cfg = TrainConfig {
        learning_rate: args.lr,
        batch_size: args.batch_size,
        epochs: args.epochs,
        seed: args.seed,
        test_fraction: args.test_fraction,
        points_per_batch: args.points_per_batch,
        lr_decay: args.lr_decay,
        ..TrainConfig::default()
    };
    let mut model = DeepONetModel::new(&model_cfg, args.seed)?;
    let report = backstep::noperator::train(&mut model, &data, &train_cfg)?;
    save_model(&model, &dir.join("model.bin"))?;
    write_json(
        &dir.join("report.json"),
        &serde_json::to_value(&report).map_err(backstep::Error::from)?,
    )?;
    println!(
        "ok: dir={} train_mse={:.3e} test_mse={} test_rel_l2={} seconds={:.1}",
        dir.display(),
        report.train_mse,
        report
            .test_mse
            .map_or("none".into(), |v| format!("{v:.3e}")),
        report
            .test_rel_l2
            .map_or("none".into(), |v| format!("{v:.4}")),
        report.wall_time_s
    );
    Ok(())
}

fn write_trajectory(dir: &Path, traj: &Trajectory) -> CmdResult {
    let mut w = csv::Writer::from_path(dir.join("trajectory.csv"))?;
    w.write_record(["t", "x", "u", "lambda_hat", "w_hat"])?;
    for s in &traj.snapshots {
        for (i, x) in traj.grid.nodes().enumerate() {
            w.serialize((
                s.t,
                x,
                s.u.values()[i],
                s.lambda_hat.values()[i],
                s.w_hat.values()[i],
            ))?;
        }
    }
    w.flush().map_err(backstep::Error::from)?;

    let mut w = csv::Writer::from_path(dir.join("diagnostics.csv"))?;
    for row in &traj.diagnostics {
        w.serialize(row)?;
    }
    if traj.diagnostics.is_empty() {
        w.write_record([
            "t",
            "V",
            "Gamma",
            "norm_u",
            "norm_w",
            "control_U",
            "eps_measured",
            "delta_k0_sup",
            "delta_k1_sup",
            "kappa1_sup",
            "kappa2_sup",
            "lambda_hat_lipschitz",
        ])?;
    }
    w.flush().map_err(backstep::Error::from)?;

    let mut w = csv::Writer::from_path(dir.join("kernel_slice.csv"))?;
    w.write_record(["t", "y", "k_hat_1y", "k_exact_1y"])?;
    for slice in &traj.kernel_slices {
        for (j, y) in traj.grid.nodes().enumerate() {
            w.serialize((slice.t, y, slice.k_hat[j], slice.k_exact[j]))?;
        }
    }
    w.flush().map_err(backstep::Error::from)?;
    Ok(())
}

fn summary(traj: &Trajectory, status: &str, seconds: f64) -> serde_json::Value {
    let last = traj.final_snapshot();
    let final_sup = last.map_or(f64::NAN, |s| s.u.sup_norm());
    serde_json::json!({
        "status": status,
        "kernel_source": traj.kernel_source,
        "n_points": traj.grid.n_points(),
        "final_t": last.map_or(0.0, |s| s.t),
        "u0_sup": number(traj.u0_sup),
        "final_u_sup": number(final_sup),
        "final_ratio": number(final_sup / traj.u0_sup),
        "max_lambda_hat_sup": number(traj.max_lambda_hat_sup),
        "wall_time_s": seconds,
    })
}

pub fn simulate(args: &SimulateArgs, config: &serde_json::Value) -> CmdResult {
    let mut provider: Box<dyn KernelProvider> = match (args.kernel, &args.model) {
        (KernelArg::NeuralOperator, None) => {
            return Err(CliError::Usage(
                "--kernel neural-operator requires --model".into(),
            ))
        }
        (KernelArg::NeuralOperator, Some(path)) => {
            Box::new(load_model(path)?.prepare(grid_for(args.dx)?.tri())?)
        }
        (_, Some(_)) => {
            return Err(CliError::Usage(
                "--model is only used with --kernel neural-operator".into(),
            ))
        }
        (KernelArg::Zero, None) => Box::new(ZeroKernel),
        (KernelArg::ExactMarch, None) => Box::new(MarchKernel),
        (KernelArg::ExactPicard, None) => Box::new(PicardKernel {
            tol: ClosedLoopConfig::default().picard_tol,
            max_iter: ClosedLoopConfig::default().picard_max_iter,
        }),
    };
    let grid = grid_for(args.dx)?;
    let cfg = ClosedLoopConfig {
        n_points: grid.n_points(),
        dt: args.dt,
        horizon: args.horizon,
        gamma: args.gamma,
        lambda_bar: args.lambda_bar,
        u0_amplitude: args.u0_amplitude,
        kernel_stride: args.kernel_stride,
        sample_stride: args.sample_stride,
        diagnostics_stride: args.diagnostics_stride,
        estimator_only: args.estimator_only,
        ..ClosedLoopConfig::default()
    };
    let lambda: ScalarField1D =
        chebyshev_lambda(grid, args.cheb_gamma, args.cheb_amplitude, args.cheb_offset);
    let dir = prepare(args.output.out.as_deref(), "simulate", config)?;
    let start = Instant::now();
    match run_closed_loop(&cfg, &lambda, provider.as_mut()) {
        Ok(traj) => {
            write_trajectory(&dir, &traj)?;
            let s = summary(&traj, "ok", start.elapsed().as_secs_f64());
            write_json(&dir.join("summary.json"), &s)?;
            println!(
                "ok: dir={} kernel={} final_u_sup={} ratio={}",
                dir.display(),
                traj.kernel_source,
                s["final_u_sup"],
                s["final_ratio"]
            );
            Ok(())
        }
        Err(failure) => {
            write_trajectory(&dir, &failure.partial)?;
            let s = summary(
                &failure.partial,
                failure.error.kind(),
                start.elapsed().as_secs_f64(),
            );
            write_json(&dir.join("summary.json"), &s)?;
            Err(failure.error.into())
        }
    }
}

pub fn bench(args: &BenchArgs, config: &serde_json::Value) -> CmdResult {
    let model = load_model(&args.model)?;
    let samples: Vec<ScalarField1D> = match &args.data {
        Some(path) => {
            let data = Dataset::load(path)?;
            let per = data.manifest.samples_per_trajectory;
            (0..data.manifest.n_trajectories)
                .map(|t| data.lambda_field(t * per + per / 2))
                .collect()
        }
        None => {
            let g = grid_for(0.005)?;
            (0..10)
                .map(|i| chebyshev_lambda(g, 8.5 + (i as f64 + 0.5) / 10.0, 25.0, 25.0))
                .collect()
        }
    };
    let cfg = BenchConfig {
        dx: args.dx.clone(),
        repetitions: args.repetitions,
        warmup: args.warmup,
        include_uncached: args.uncached,
    };
    if cfg.repetitions < 100 {
        return Err(CliError::Usage("--repetitions must be at least 100".into()));
    }
    let dir = prepare(args.output.out.as_deref(), "bench", config)?;
    let report = run_bench(&model, &samples, &cfg)?;
    std::fs::write(dir.join("bench.csv"), report.to_csv()).map_err(backstep::Error::from)?;
    let table = report.to_table();
    std::fs::write(dir.join("bench.txt"), &table).map_err(backstep::Error::from)?;
    write_json(
        &dir.join("bench.json"),
        &serde_json::to_value(&report).map_err(backstep::Error::from)?,
    )?;
    print!("{table}");
    println!("ok: dir={}", dir.display());
    Ok(())
}

pub fn certify(args: &CertifyArgs, config: &serde_json::Value) -> CmdResult {
    let dir = prepare(args.output.out.as_deref(), "certify", config)?;
    let r = certificate_constants(args.lambda_bar, args.epsilon, args.gamma)?;
    let opt = |v: Option<f64>| v.map_or(serde_json::Value::Null, number);
    let value = serde_json::json!({
        "lambda_bar": number(r.lambda_bar),
        "epsilon": number(r.epsilon),
        "k_bar": number(r.k_bar),
        "l_bar": number(r.l_bar),
        "big_m": number(r.big_m),
        "eps_star": number(r.eps_star),
        "gamma_star": opt(r.gamma_star),
        "ln_gamma_star": number(r.ln_gamma_star),
        "gamma": opt(r.gamma),
        "rho": opt(r.rho),
        "big_r": opt(r.big_r),
    });
    write_json(&dir.join("bounds.json"), &value)?;
    let show = |v: Option<f64>| v.map_or("none".to_string(), |x| format!("{x:e}"));
    println!("lambda_bar  = {}", r.lambda_bar);
    println!("epsilon     = {}", r.epsilon);
    println!("k_bar       = {:e}", r.k_bar);
    println!("l_bar       = {:e}", r.l_bar);
    println!("M           = {:e}", r.big_m);
    println!("eps_star    = {:e}", r.eps_star);
    println!(
        "gamma_star  = {} (ln = {:e})",
        show(r.gamma_star),
        r.ln_gamma_star
    );
    if r.gamma.is_some() {
        println!("R           = {}", show(r.big_r));
        println!("rho         = {}", show(r.rho));
    }
    println!("ok: dir={}", dir.display());
    Ok(())
}
