use thiserror::Error;

/// Errors produced across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix must have n_tasks >= 1")]
    NoTasks,
    #[error("expected {expected} entries, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("entry ({row}, {col}) = {value} is outside [0, 1]")]
    OutOfRange { row: usize, col: usize, value: f64 },
    #[error("entry ({row}, {col}) is not finite")]
    NonFinite { row: usize, col: usize },
    #[error("matrix is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },
    #[error("off-diagonal ({row}, {col}) = {value} lies outside its feasible band [{lo}, {hi}]")]
    Infeasible {
        row: usize,
        col: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("mask entry at channel {channel}, task {task} must be 0 or 1")]
    NonBinary { channel: usize, task: usize },
    #[error("task index {index} out of range for {n_tasks} tasks")]
    TaskIndex { index: usize, n_tasks: usize },
    #[error("task count mismatch: {left} vs {right}")]
    TaskMismatch { left: usize, right: usize },
    #[error("subset synthesis supports at most {max} tasks, got {got}")]
    TooManyTasks { max: usize, got: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("evaluator failed: {0}")]
    Evaluator(String),
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("config file: {0}")]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
