use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("alignment: {0}")]
    Alignment(String),
    #[error("domain: {0}")]
    Domain(String),
    #[error("point {index} lies outside every partition cell")]
    Coverage { index: usize },
    #[error("resource limit: {0}")]
    Resource(String),
    #[error("syntax error at {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("synthesis failed: {0}")]
    Synthesis(String),
    #[error("no fixpoint after {iterations} iterations (facet gap {gap:.3e})")]
    Nonconvergence { iterations: usize, gap: f64 },
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("speed {speed:.4} below guard {v_min:.4}")]
    Guard { speed: f64, v_min: f64 },
    #[error("integration fault: {0}")]
    Integration(String),
    #[error("validation: {0}")]
    Validation(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
