//! Numerical laboratory for matrix-weighted dyadic harmonic analysis.
//!
//! The crate is organized around a few concrete objects:
//!
//! * [`dyadic`] — exact dyadic cube lattices on `R^n` (`n <= 3`), finite cube
//!   windows, and shifted-system covers.
//! * [`linalg`] — small dense complex-Hermitian matrix algebra (`m <= 8`) with
//!   a deterministic cyclic-Jacobi eigensolver and spectral matrix powers.
//! * [`weights`] — matrix weights `W : R^n -> HermitianPD(m)`, singular-aware
//!   tensor quadrature, and per-cube reducing operators with certificates.
//! * [`diagnostics`] — Muckenhoupt-type constants, Fujii-Wilson constants,
//!   reverse Holder checks, bad-set fractions, dimension estimates, critical
//!   integrability indices, and doubling checks for matrix weights.
//! * [`seqspaces`] — finitely supported cube-indexed sequence fields and the
//!   scale-of-spaces norms (Besov-type and Triebel-Lizorkin-type) in pointwise,
//!   averaged, and unweighted weightings.
//! * [`adop`] — almost-diagonal kernels, boundedness thresholds, and
//!   divergence probes for the associated extremal sums.
//! * [`phitransform`] — a discrete Littlewood-Paley transform on the torus
//!   grid: analysis/synthesis with exact inversion on the resolved band,
//!   lattice sampling, and perturbed-sampling reconstruction.
//!
//! All floating-point kernels are generic over the [`Real`] scalar; `f64` is
//! the type every pinned tolerance in the test suite assumes. Type aliases at
//! the crate root fix the `f64` instantiations.

pub mod adop;
pub mod diagnostics;
pub mod dyadic;
pub mod linalg;
pub mod phitransform;
pub mod scalar;
pub mod seqspaces;
pub mod weights;

pub use scalar::Real;
pub use weights::Quadrature;

/// Complex scalar over the working real type.
pub type Cplx<T> = num_complex::Complex<T>;

/// `f64` matrix instantiation.
pub type Matrix = linalg::CMatrix<f64>;
/// `f64` Hermitian positive-definite matrix.
pub type HermitianPd = linalg::HermitianPd<f64>;
/// `f64` matrix weight.
pub type MatrixWeight = weights::MatrixWeight<f64>;
/// `f64` reducing-operator family.
pub type ReducingFamily = weights::ReducingFamily<f64>;
/// `f64` sparse dyadic coefficient field.
pub type SequenceField = seqspaces::SequenceField<f64>;
/// `f64` torus grid function.
pub type GridFunction = phitransform::GridFunction<f64>;
/// `f64` Littlewood-Paley window family.
pub type LpFamily = phitransform::LpFamily<f64>;
/// `f64` smoothness-space parameter bundle.
pub type SpaceParams = seqspaces::SpaceParams<f64>;
