use thiserror::Error;

/// Errors raised by the numerical kernels.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("ODE integration failed near x = {last_x}: {reason}")]
    IntegrationFailure { last_x: f64, reason: String },

    #[error("model violation at x = {x}: {what}")]
    ModelViolation { x: f64, what: String },

    #[error("argument {value} outside tabulated range [0, {max}]")]
    Range { value: f64, max: f64 },

    #[error("supercritical mass m = {m} >= critical mass M = {critical}")]
    Supercritical { m: f64, critical: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("singular weight diverges: h(0) = {h0} must vanish")]
    DivergentWeight { h0: f64 },

    #[error("initial datum not admissible ({clause}): {detail}")]
    Membership { clause: MembershipClause, detail: String },

    #[error("linear algebra failure: {0}")]
    LinearAlgebra(String),

    #[error("numerical instability at t = {t} (min u = {min}, max u = {max})")]
    Instability { t: f64, min: f64, max: f64 },

    #[error("eigensolver did not converge after {iterations} iterations (last quotient {last})")]
    Spectral { iterations: usize, last: f64 },

    #[error("functional not defined for N = {n}")]
    WrongFunctional { n: u32 },

    #[error("nonpositive slope {slope} in cell {cell}")]
    NonpositiveSlope { cell: usize, slope: f64 },

    #[error("need at least {needed} samples above the noise floor in the window, found {found}")]
    InsufficientSamples { needed: usize, found: usize },

    #[error("all samples are below the noise floor")]
    AllBelowFloor,

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Which clause of the admissible-data definition failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MembershipClause {
    LeftBoundary,
    RightBoundary,
    Monotone,
    Finite,
    GridMismatch,
}

impl std::fmt::Display for MembershipClause {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            MembershipClause::LeftBoundary => "u(0)=0",
            MembershipClause::RightBoundary => "u(1)=m",
            MembershipClause::Monotone => "nondecreasing",
            MembershipClause::Finite => "finite",
            MembershipClause::GridMismatch => "grid",
        };
        f.write_str(s)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
