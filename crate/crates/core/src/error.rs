use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("infeasible generation after {attempts} attempts: {reason}")]
    Infeasible { attempts: usize, reason: String },

    #[error("solver did not converge after {iterations} sweeps (kkt gap {kkt_gap:.3e})")]
    NonConvergence { iterations: usize, kkt_gap: f64 },

    #[error("closed-form debiasing infeasible: mu3 = {mu3:.6} >= 1")]
    InfeasibleRegime { mu3: f64 },

    #[error("row {0} of the centered matrix is zero")]
    DegenerateRow(usize),

    #[error("column {0} of the centered matrix is zero")]
    DegenerateColumn(usize),

    #[error("zero standard deviation at index {0}")]
    DegenerateVariance(usize),

    #[error("detection loop exceeded {0} iterations")]
    DetectionLoopLimit(usize),

    #[error("metric undefined: {0}")]
    UndefinedMetric(&'static str),

    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn param<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parameter(msg.into()))
}
