use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid chain length N={0} (need N >= 6)")]
    InvalidLength(usize),
    #[error("{name} has {got} entries, expected {expected}")]
    LengthMismatch {
        name: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("invalid parameter {name}: {reason}")]
    Parameter { name: &'static str, reason: String },
    #[error("eigensolver did not converge at index {index} (residual {residual:e})")]
    NoConvergence { index: usize, residual: f64 },
    #[error("site pairs must be ordered and distinct: ({0},{1}) -> ({2},{3})")]
    UnorderedPair(usize, usize, usize, usize),
    #[error("amplitudes violate |f11|^2 + |f1N|^2 <= 1 (got {0})")]
    Constraint(f64),
    #[error("operation requires the {expected} regime, chain is {found}")]
    RegimeMismatch {
        expected: &'static str,
        found: &'static str,
    },
    #[error("no transfer-time candidate in window [{lo}, {hi}]")]
    NoCandidate { lo: f64, hi: f64 },
    #[error("cubic has complex roots for h={0}")]
    ComplexRoots(f64),
}

pub type Result<T> = std::result::Result<T, Error>;
