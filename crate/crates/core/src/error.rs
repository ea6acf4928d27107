use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("shooting failed: {0}")]
    ShootingFailure(String),

    #[error("embedded support radius {radius:.3} exceeds the box half-width {half_width:.3}")]
    Truncation { radius: f64, half_width: f64 },

    #[error("field and kernel table live on different grids")]
    KernelMismatch,

    #[error("degenerate field: {0}")]
    DegenerateField(String),

    #[error("mass {rho} is at or above the critical mass {rho_star}; no minimizer exists")]
    SupercriticalMass { rho: f64, rho_star: f64 },

    #[error("under-resolved: {0}")]
    Resolution(String),

    #[error("centering failed: {0}")]
    Centering(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("positivity lost at iteration {iteration}: min {min:e} vs max {max:e}")]
    PositivityLost { iteration: usize, min: f64, max: f64 },

    #[error("malformed field dump: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
