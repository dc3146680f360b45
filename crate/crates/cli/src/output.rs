use std::fs;
use std::path::{Path, PathBuf};

use crate::commands::CliError;
use crate::OUT_ROOT_ENV;

/// Resolves and creates the run directory, then writes the echoed `config`.
///
/// An explicit directory is used as given. Otherwise a fresh
/// `<command>-<timestamp>` directory is created under the output root.
pub fn prepare(
    explicit: Option<&Path>,
    command: &str,
    config: &serde_json::Value,
) -> Result<PathBuf, CliError> {
    let dir = match explicit {
        Some(d) => d.to_path_buf(),
        None => {
            let root =
                std::env::var_os(OUT_ROOT_ENV).map_or_else(|| PathBuf::from("runs"), PathBuf::from);
            let stamp = chrono::Local::now().format("%Y%m%dT%H%M%S%.3f");
            let base = root.join(format!("{command}-{stamp}"));
            let mut candidate = base.clone();
            let mut n = 1;
            while candidate.exists() {
                candidate = PathBuf::from(format!("{}-{n}", base.display()));
                n += 1;
            }
            candidate
        }
    };
    fs::create_dir_all(&dir).map_err(backstep::Error::from)?;
    let text = serde_json::to_string_pretty(config).map_err(backstep::Error::from)?;
    fs::write(dir.join("config"), text + "\n").map_err(backstep::Error::from)?;
    Ok(dir)
}

/// JSON number, or the string `"inf"` / `"nan"` for values JSON cannot hold.
pub fn number(v: f64) -> serde_json::Value {
    if v.is_finite() {
        serde_json::json!(v)
    } else if v.is_nan() {
        serde_json::json!("nan")
    } else if v > 0.0 {
        serde_json::json!("inf")
    } else {
        serde_json::json!("-inf")
    }
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(backstep::Error::from)?;
    fs::write(path, text + "\n").map_err(backstep::Error::from)?;
    Ok(())
}
