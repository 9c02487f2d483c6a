use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("quadrature failed: {0}")]
    Quadrature(String),

    #[error("Keller-Osserman condition fails: {0}")]
    DivergentTail(String),

    #[error("root bracketing failed: {0}")]
    Bracket(String),

    #[error("inadmissible parameters: {0}")]
    Inadmissible(String),

    #[error("degenerate formula: {0}")]
    Degenerate(String),

    #[error("Newton iteration diverged: {0}")]
    NewtonDivergence(String),

    #[error("mesh too coarse: {0}")]
    MeshTooCoarse(String),

    #[error("mesh mismatch: {0}")]
    MeshMismatch(String),

    #[error("continuation did not stabilise: {0}")]
    NonConvergence(String),

    #[error("too few nodes in fit window: {0}")]
    FitWindow(String),

    #[error("expression error: {0}")]
    Expr(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
