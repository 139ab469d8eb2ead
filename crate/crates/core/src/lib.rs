//! Forward model and inverse analyses for two-level-system (TLS) dielectric
//! loss and frequency shift in superconducting microwave resonators.
//!
//! The crate is organised around the measurement chain:
//!
//! * [`numerics`] — self-contained numerical kernel: adaptive quadrature
//!   (semi-infinite domains, square-root endpoint singularities), complex
//!   digamma, modified Bessel K₀, bracketed root finding, damped least
//!   squares, polynomial fitting.
//! * [`response`] — the resonator measurement layer: S21 line shape, its
//!   inverse fit, off-resonance normalization, intracavity photon-number
//!   calibration, synthetic sweep generation.
//! * [`tlsmodel`] — the physics forward model: resonant and relaxation TLS
//!   loss (power law and full double integral), quasiparticle loss, total
//!   loss with optional drive self-heating, TLS frequency shifts.
//! * [`inference`] — inverse analyses: joint TLS parameter extraction from
//!   power/temperature sweeps, effective-temperature thermometry,
//!   self-heating power-law fit, iterative drive-detuning convergence.
//! * [`ftir`] — infrared spectrum post-processing: baseline removal,
//!   Gaussian peak fits of the N-H and Si-H stretch modes, atomic %H via
//!   the Lanford–Rand method.
//! * [`files`] — the CSV/JSON schemas consumed and emitted by the CLI.
//! * [`scenario`] — deterministic synthetic-experiment generation used for
//!   round-trip validation.

// negated float comparisons like !(x > 0.0) are deliberate: they reject
// NaN along with the out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// quadrature node tables carry their full published precision
#![allow(clippy::excessive_precision)]

pub mod constants;
pub mod files;
pub mod ftir;
pub mod inference;
pub mod numerics;
pub mod response;
pub mod scenario;
pub mod tlsmodel;

pub use ftir::{HydrogenResult, IrSpectrum, PeakModel};
pub use inference::{LossDataset, LossPoint, SelfHeatingCurve, SweepKind};
pub use numerics::{FitProblem, FitResult, Quadrature, QuadratureSpec};
pub use response::{FrequencySweep, NoiseSpec, ResonatorParams};
pub use tlsmodel::{LossModel, QpParams, RelaxKernelParams, SelfHeatingLaw, TlsParams};
