use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("no convergence after {iterations} iterations (last increment {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("gamma_star nonpositive: 3(1+l_bar)*epsilon = {margin} >= 1/4")]
    GammaStarNonpositive { margin: f64 },

    #[error("plant diverged at t = {t}")]
    Diverged { t: f64 },

    #[error("model corrupt: {0}")]
    ModelCorrupt(String),

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("unsupported format version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },

    #[error("training failed at epoch {epoch}: loss is not finite")]
    TrainingFailure { epoch: usize },

    #[error("corrupt dataset: {0}")]
    CorruptDataset(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short stable tag used in machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid-input",
            Error::ShapeMismatch(_) => "shape-mismatch",
            Error::NonConvergence { .. } => "non-convergence",
            Error::GammaStarNonpositive { .. } => "gamma-star-nonpositive",
            Error::Diverged { .. } => "plant-diverged",
            Error::ModelCorrupt(_) => "model-corrupt",
            Error::Parse { .. } => "parse-error",
            Error::UnsupportedVersion { .. } => "unsupported-version",
            Error::TrainingFailure { .. } => "training-failure",
            Error::CorruptDataset(_) => "corrupt-dataset",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
