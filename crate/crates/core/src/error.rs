//! Shared error type. Each failure names the operation that refused, so a
//! window problem surfaces as a window problem and not as a wrong answer.

use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("division by zero in ℚ(λ)")]
    DivisionByZero,

    #[error("scalar parse error: {0}")]
    ScalarParse(String),

    #[error("series window for `{var}` does not cover exponent {exponent}; widen the window")]
    WindowTooSmall { var: String, exponent: String },

    #[error("exponent offsets differ for `{var}` ({left} vs {right}); cannot add")]
    OffsetMismatch {
        var: String,
        left: String,
        right: String,
    },

    #[error("composition requires zero constant term in the inner series")]
    NonzeroConstantTerm,

    #[error("series inversion requires a nonzero lowest coefficient")]
    NotInvertible,

    #[error("compositional inverse requires leading coefficient 1 at order 1")]
    NotNormalized,

    #[error("input series order {have} is below the required order {need}")]
    InsufficientOrder { have: i64, need: i64 },

    #[error("{op}: variable `{var}` not present in the series")]
    UnknownVariable { op: &'static str, var: String },

    #[error("mode action left the built grade range (grade {grade}, cutoff {cutoff}); raise the cutoff")]
    CutoffExceeded { grade: i64, cutoff: i64 },

    #[error("vectors belong to different modules ({left} vs {right})")]
    ModuleMismatch { left: String, right: String },

    #[error("exact layer cannot represent λ^({0}); geometric modification needs integer weights")]
    FractionalWeight(String),

    #[error("reduction produced a nonzero residual at the verified orders; window too small")]
    ResidualNonzero,

    #[error("numeric tail estimate {estimate:.3e} exceeds tolerance {tolerance:.3e}; raise the order or move the sample point")]
    TailTooLarge { estimate: f64, tolerance: f64 },

    #[error("requested precision {requested} digits exceeds what double evaluation guarantees ({available})")]
    PrecisionExhausted { requested: u32, available: u32 },

    #[error("{op}: {detail}")]
    Unsupported { op: &'static str, detail: String },

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
