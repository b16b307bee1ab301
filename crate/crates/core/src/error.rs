use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("ill-conditioned system: condition estimate {cond:.3e} exceeds cap {cap:.3e}")]
    IllConditioned { cond: f64, cap: f64 },

    #[error("collinear difference vectors between points {first} and {second}")]
    Collinear { first: usize, second: usize },

    #[error("insufficient iterates: need {needed}, have {have}")]
    InsufficientIterates { needed: usize, have: usize },

    #[error("attack not applicable: {0}")]
    AttackInapplicable(String),

    #[error("mitigation impossible: {0}")]
    MitigationImpossible(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
