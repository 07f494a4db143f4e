use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("overpotential overflow: |F*eta/(R*T)| = {0:.1} exceeds guard")]
    OverpotentialOverflow(f64),

    #[error("newton solver did not converge after {iterations} iterations (residual norm {residual:.3e})")]
    NewtonDivergence { iterations: usize, residual: f64 },

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("degenerate parameters: {0}")]
    DegenerateParameters(String),

    #[error("command out of range: {0}")]
    CommandRange(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid parameters: {0}")]
    InvalidParameters(String),

    #[error("parameter corruption: {0}")]
    ParameterCorruption(String),

    #[error("training diverged: {0}")]
    TrainingDivergence(String),

    #[error("empty replay buffer")]
    EmptyBuffer,

    #[error("episode is not active; call reset first")]
    EpisodeInactive,

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("toml parse error: {0}")]
    Toml(#[from] toml::de::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
