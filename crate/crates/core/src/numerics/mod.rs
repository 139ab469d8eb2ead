//! Self-contained numerical kernel.
//!
//! Everything here is a pure function over value types: same inputs give
//! bit-identical outputs, and nothing touches shared mutable state, so all
//! operations are safe to call concurrently.

mod lsq;
mod poly;
mod quad;
mod roots;
mod special;

pub use lsq::{nlls_fit, FitProblem, FitResult};
pub use poly::{polyfit, polyval};
pub use quad::{integrate, Quadrature, QuadratureSpec, SqrtEndpoint, UpperLimit};
pub use roots::find_root;
pub use special::{bessel_k0, digamma};
pub(crate) use special::bessel_k0_scaled;

use num_complex::Complex64;

/// Errors from the numerical kernel.
#[derive(Debug, thiserror::Error)]
pub enum NumericsError {
    #[error("invalid quadrature spec: {0}")]
    InvalidSpec(String),
    /// The subdivision budget ran out before the tolerance was met. Carries
    /// the best estimate so callers can decide whether it is usable.
    #[error(
        "quadrature did not converge after {subdivisions} subdivisions \
         (best estimate {value:e} with error {error:e})"
    )]
    QuadratureNonConvergence {
        value: f64,
        error: f64,
        subdivisions: usize,
    },
    #[error("integrand returned a non-finite value at x = {abscissa:e}")]
    IntegrandNan { abscissa: f64 },
    #[error("digamma pole at z = {0}")]
    DigammaPole(Complex64),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("no sign change over bracket [{a:e}, {b:e}]: f(a) = {fa:e}, f(b) = {fb:e}")]
    NoSignChange { a: f64, b: f64, fa: f64, fb: f64 },
    #[error("degenerate linear system while {context}")]
    DegenerateSystem { context: &'static str },
    #[error("invalid fit problem: {0}")]
    InvalidFit(String),
}

pub type Result<T> = std::result::Result<T, NumericsError>;
