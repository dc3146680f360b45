use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn backstep(args: &[&str], out_root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_backstep"))
        .args(args)
        .env("BACKSTEP_OUT_ROOT", out_root)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn header(path: &Path) -> String {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string()
}

#[test]
fn certify_reports_gamma_star() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("c");
    let o = backstep(
        &[
            "certify",
            "--lambda-bar",
            "0.1",
            "--epsilon",
            "0",
            "--out",
            out.to_str().unwrap(),
        ],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let bounds = read_json(&out.join("bounds.json"));
    assert!((bounds["gamma_star"].as_f64().unwrap() - 0.1533).abs() < 1e-4);
    let config = read_json(&out.join("config"));
    assert_eq!(config["command"]["subcommand"], "certify");
    assert_eq!(config["command"]["lambda_bar"], 0.1);
}

#[test]
fn certify_reports_infinities_honestly() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("c");
    let o = backstep(
        &[
            "certify",
            "--lambda-bar",
            "50",
            "--gamma",
            "1",
            "--out",
            out.to_str().unwrap(),
        ],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let bounds = read_json(&out.join("bounds.json"));
    assert_eq!(bounds["l_bar"], "inf");
    assert_eq!(bounds["big_r"], "inf");
}

#[test]
fn certify_hypothesis_violation_is_one_line_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = backstep(
        &["certify", "--lambda-bar", "0.1", "--epsilon", "1"],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert_eq!(err.lines().count(), 1);
    assert!(
        err.starts_with("error: kind=gamma-star-nonpositive "),
        "{err}"
    );
}

#[test]
fn open_loop_simulation_reports_divergence() {
    let tmp = tempfile::tempdir().unwrap();
    let o = backstep(
        &[
            "simulate",
            "--kernel",
            "zero",
            "--cheb-gamma",
            "9",
            "--dx",
            "0.05",
            "--dt",
            "1e-3",
            "--T",
            "3",
        ],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(
        stderr(&o).starts_with("error: kind=plant-diverged "),
        "{}",
        stderr(&o)
    );
    // Partial results land in a timestamped directory under the output root.
    let runs: Vec<_> = fs::read_dir(tmp.path())
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    assert_eq!(runs.len(), 1);
    assert!(runs[0]
        .file_name()
        .unwrap()
        .to_str()
        .unwrap()
        .starts_with("simulate-"));
    assert_eq!(
        read_json(&runs[0].join("summary.json"))["status"],
        "plant-diverged"
    );
}

#[test]
fn neural_operator_without_model_is_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = backstep(&["simulate", "--kernel", "neural-operator"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error: kind=usage "));
    assert_eq!(fs::read_dir(tmp.path()).unwrap().count(), 0);
    let o = backstep(&["no-such-command"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr(&o).lines().count(), 1);
}

#[test]
fn exact_kernel_simulation_writes_regulated_trajectory() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sim");
    let o = backstep(
        &[
            "simulate",
            "--kernel",
            "exact-march",
            "--cheb-gamma",
            "9",
            "--T",
            "1",
            "--out",
            out.to_str().unwrap(),
        ],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        header(&out.join("trajectory.csv")),
        "t,x,u,lambda_hat,w_hat"
    );
    assert!(header(&out.join("diagnostics.csv"))
        .starts_with("t,V,Gamma,norm_u,norm_w,control_U,eps_measured,delta_k0_sup,delta_k1_sup"));
    assert_eq!(
        header(&out.join("kernel_slice.csv")),
        "t,y,k_hat_1y,k_exact_1y"
    );
    let summary = read_json(&out.join("summary.json"));
    assert!(summary["final_ratio"].as_f64().unwrap() <= 1e-2);
    assert!(summary["max_lambda_hat_sup"].as_f64().unwrap() <= 50.0);
    // 101 snapshots of 51 nodes plus the header.
    assert_eq!(
        fs::read_to_string(out.join("trajectory.csv"))
            .unwrap()
            .lines()
            .count(),
        101 * 51 + 1
    );
}

#[test]
fn data_train_bench_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let model = tmp.path().join("model");
    let bench = tmp.path().join("bench");
    let o = backstep(
        &[
            "gen-data",
            "--trajectories",
            "2",
            "--samples",
            "4",
            "--dx",
            "0.1",
            "--dt",
            "1e-3",
            "--T",
            "0.04",
            "--out",
            data.to_str().unwrap(),
        ],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(
        data.join("manifest").exists()
            && data.join("data.bin").exists()
            && data.join("config").exists()
    );

    let o = backstep(
        &[
            "train",
            "--data",
            data.to_str().unwrap(),
            "--epochs",
            "3",
            "--width",
            "8",
            "--p",
            "4",
            "--out",
            model.to_str().unwrap(),
        ],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let report = read_json(&model.join("report.json"));
    assert_eq!(report["epochs"], 3);
    assert_eq!(report["n_test"], 4);

    let o = backstep(
        &[
            "bench",
            "--model",
            model.join("model.bin").to_str().unwrap(),
            "--data",
            data.to_str().unwrap(),
            "--dx",
            "0.1,0.05",
            "--warmup",
            "1",
            "--out",
            bench.to_str().unwrap(),
        ],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(bench.join("bench.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("dx,method,mean_ms,median_ms,std_ms,speedup")
    );
    assert_eq!(lines.count(), 4);
    assert_eq!(
        read_json(&bench.join("bench.json"))["environment"]["threads"],
        1
    );
}

#[test]
fn missing_dataset_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let o = backstep(
        &[
            "train",
            "--data",
            tmp.path().join("absent").to_str().unwrap(),
        ],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error: kind=io "), "{}", stderr(&o));
}
