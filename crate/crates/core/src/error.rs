use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("degenerate region: zero area")]
    DegenerateRegion,
    #[error("grid mismatch: expected {expected} values, got {got}")]
    GridMismatch { expected: usize, got: usize },
    #[error("no convergence after {iterations} iterations, worst residual {worst_residual:.3e}")]
    NonConvergence { worst_residual: f64, iterations: usize },
    #[error("grid too small: turning radius {turning_radius:.4} exceeds limit {limit:.4}")]
    GridTooSmall { turning_radius: f64, limit: f64 },
    #[error("problem too large for dense solve: {size} unknowns (limit {limit})")]
    ProblemTooLarge { size: usize, limit: usize },
    #[error("grid too coarse: oscillator length {length:.4} below 4 grid spacings ({spacing:.4})")]
    GridTooCoarse { length: f64, spacing: f64 },
    #[error("domain error: {0}")]
    DomainError(String),
    #[error("unfolding fit failed: {reason} (condition {condition:.3e})")]
    FitFailure { reason: String, condition: f64 },
    #[error("window too short: need {needed:.2}, have {available:.2}")]
    WindowTooShort { needed: f64, available: f64 },
    #[error("degenerate data: all spacings equal")]
    DegenerateData,
    #[error("series too short: {len} values, need {needed}")]
    SeriesTooShort { len: usize, needed: usize },
    #[error("degenerate series: zero fluctuation")]
    SeriesDegenerate,
    #[error("basis not orthonormal: max deviation {deviation:.3e}")]
    BasisNotOrthonormal { deviation: f64 },
    #[error("incomplete expansion: completeness {completeness:.4}")]
    IncompleteExpansion { completeness: f64 },
    #[error("unsupported potential: {0}")]
    UnsupportedPotential(String),
    #[error("linear algebra failure: {0}")]
    Linalg(String),
}

pub type Result<T> = std::result::Result<T, Error>;
