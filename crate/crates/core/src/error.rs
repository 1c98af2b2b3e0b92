use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("precondition `{check}` failed: {detail}")]
    Precondition { check: &'static str, detail: String },

    #[error("transformed coefficient d~ at k={k} is {value:e}, not positive")]
    NonPositiveDtilde { k: usize, value: f64 },

    #[error("index order violated: need k <= n, got k={k}, n={n}")]
    IndexOrder { k: usize, n: usize },

    #[error("continued fraction tail at k={k} did not converge by depth {depth}")]
    NoConvergence { k: usize, depth: usize },

    #[error("difference sequence vanished at k={k}")]
    ZeroDelta { k: usize },

    #[error("non-positive denominator at n={n}")]
    DivisionGuard { n: usize },

    #[error("fit window [{lo}, {hi}] spans less than two decades")]
    InsufficientRange { lo: usize, hi: usize },

    #[error("population exceeded cap in run {run} at generation {generation}")]
    PopulationOverflow { run: u64, generation: usize },

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    /// True for errors raised by numerical breakdown rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonPositiveDtilde { .. }
                | Error::NoConvergence { .. }
                | Error::ZeroDelta { .. }
                | Error::DivisionGuard { .. }
                | Error::PopulationOverflow { .. }
        )
    }
}
