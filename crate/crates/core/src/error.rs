use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("point {point:?} lies outside the chart box")]
    Domain { point: Vec<f64> },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("trajectory left the chart at t = {time}")]
    Escape { time: f64 },

    #[error("no feasible minimizer found for target {target:?} ({starts} starts)")]
    UnresolvedTarget { target: Vec<f64>, starts: usize },

    #[error("target {target:?} is not reachable in the graph (spacing too coarse?)")]
    Connectivity { target: Vec<f64> },

    #[error("feedback undefined at {point:?}: {reason}")]
    FeedbackHole { point: Vec<f64>, reason: String },

    #[error("closed loop stagnated near t = {time}: V ratio {ratio:.3e} over a unit window")]
    Stagnation { time: f64, ratio: f64 },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
