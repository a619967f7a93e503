use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A physical quantity that must be positive was not.
    #[error("{quantity} must be positive, got {value}")]
    Domain { quantity: &'static str, value: f64 },

    /// Density square root too close to zero; the ratio entries phi4/phi1 blow up.
    #[error("vacuum state: |phi1| = {phi1:e}{}", node.map(|n| format!(" at node {n}")).unwrap_or_default())]
    Vacuum { phi1: f64, node: Option<usize> },

    #[error("invalid gas model: {0}")]
    Model(String),

    #[error("order-{order} operator needs at least {min} nodes, got {n}")]
    Size { order: usize, n: usize, min: usize },

    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    Shape {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("normal ({nx}, {ny}) is not a unit vector")]
    NonUnitNormal { nx: f64, ny: f64 },

    #[error("solution diverged at t = {t}")]
    Divergence { t: f64 },

    #[error("time step {dt:e} exceeds the CFL limit {limit:e} at t = {t}")]
    Cfl { dt: f64, limit: f64, t: f64 },

    #[error("{}{msg}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    Config { line: Option<usize>, msg: String },

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(line: Option<usize>, msg: impl Into<String>) -> Self {
        Error::Config {
            line,
            msg: msg.into(),
        }
    }
}
