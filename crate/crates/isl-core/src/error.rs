use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("packet width {width} below resolution floor {floor}")]
    Resolution { width: f64, floor: f64 },
    #[error("Nyquist violation: {0}")]
    Nyquist(String),
    #[error("tail mass {mass:e} at the domain boundary exceeds {limit:e}")]
    TailMass { mass: f64, limit: f64 },
    #[error("wrap-around mass {mass:e} exceeds {limit:e}")]
    WrapAround { mass: f64, limit: f64 },
    #[error("time step violates dt*max|V| <= 0.5 (got {0})")]
    Cfl(f64),
    #[error("linear solver did not converge: residual {residual:e} after {iterations} iterations")]
    SolverDiverged { residual: f64, iterations: usize },
    #[error("dense oracle limited to {limit} nodes, got {nodes}")]
    GridTooLarge { nodes: usize, limit: usize },
    #[error("time window too small: doubling T changed the result by {change:e}")]
    WindowTooSmall { change: f64 },
    #[error("mass {mass:e} on the obstacle exceeds {limit:e}")]
    ObstacleContact { mass: f64, limit: f64 },
    #[error("amplitude blow-up at t = {time}: sup|u| = {sup}")]
    BlowUp { time: f64, sup: f64 },
    #[error("iteration diverged: {0}")]
    Divergence(String),
    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("coverage gap: {0}")]
    Coverage(String),
    #[error("calibration residual {0:.3e} exceeds 5%")]
    Calibration(f64),
    #[error("masked input: {0}")]
    Masked(String),
    #[error("truncation not reached: {0}")]
    Truncation(String),
    #[error("inconsistent sides: residual {0:.3e}")]
    InconsistentSides(f64),
    #[error("unwrap ambiguity at offset {0}")]
    UnwrapAmbiguity(f64),
    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
