use num_complex::Complex64;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("syntax error at position {pos}: {message}")]
    Syntax { pos: usize, message: String },

    #[error("unknown identifier `{name}` at position {pos}")]
    UnknownIdentifier { pos: usize, name: String },

    #[error("malformed number `{text}` at position {pos}")]
    MalformedNumber { pos: usize, text: String },

    #[error("evaluation point {point} lies within tolerance of singularity {singularity}")]
    Singularity {
        point: Complex64,
        singularity: Complex64,
    },

    #[error("value overflow at {point}")]
    Overflow { point: Complex64 },

    #[error("|h'| vanishes at {point}; dilatation undefined")]
    DegenerateDenominator { point: Complex64 },

    #[error("co-analytic part not normalized: |g(z0)| = {value:e} at z0 = {z0}")]
    NotNormalized { z0: Complex64, value: f64 },

    #[error("weight domain error: {0}")]
    Domain(String),

    #[error("invalid weight: {0}")]
    InvalidWeight(String),

    #[error("f - a comes within clearance of zero on the cell boundary at {point}")]
    BoundaryZero { point: Complex64 },

    #[error("winding number did not stabilize after {doublings} sample doublings")]
    NonConvergence { doublings: u32 },

    #[error("rescaling argument |zeta| = {modulus} is not below R_n = {limit}")]
    OutOfRange { modulus: f64, limit: f64 },

    #[error("degenerate map: {0}")]
    Degenerate(String),

    #[error("hypothesis violated: {0}")]
    HypothesisViolation(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("map is not sense-preserving: J_f = {jacobian:e} at {witness}")]
    NotSensePreserving { witness: Complex64, jacobian: f64 },

    #[error("map file: {0}")]
    MapFile(String),
}
