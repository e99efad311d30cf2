use crate::simloop::SteadyStateResult;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("degenerate quadrature sample: sine and cosine channels are both zero")]
    DegenerateSignal,

    #[error("operation requires {expected} mode, controller is configured for {actual}")]
    WrongMode {
        expected: &'static str,
        actual: &'static str,
    },

    #[error("operation requires a non-salient machine (Ld = {ld}, Lq = {lq})")]
    Salient { ld: f64, lq: f64 },

    #[error("insufficient excitation: magnitude {magnitude} below floor {floor}")]
    InsufficientExcitation { magnitude: f64, floor: f64 },

    #[error("under-determined fit: {distinct} distinct speed(s), need at least 2")]
    UnderDetermined { distinct: usize },

    #[error("simulation did not converge within {elapsed} s")]
    NonConvergence {
        elapsed: f64,
        partial: Box<SteadyStateResult>,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
