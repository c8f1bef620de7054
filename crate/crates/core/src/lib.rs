//! Fusion of two registered source images by minimizing a convex cost in the
//! wavelet domain, regularized with a generalized minimax concave (GMC)
//! sparsity penalty, with optional joint deconvolution when point spread
//! functions are supplied.
//!
//! The crate is organized around the pieces of that variational problem:
//!
//! * [`image`] - image containers, color conversion, boundary padding, I/O
//!   lives in [`io`].
//! * [`wavelet`] - orthonormal multilevel 2-D Haar transform and its inverse.
//! * [`operators`] - convolution, per-pixel sensor gains, the composed
//!   forward operator and its exact adjoint, operator-norm estimation.
//! * [`sensorgain`] - PCA estimation of per-patch sensor gains.
//! * [`solver`] - the GMC penalty machinery and the forward-backward
//!   splitting saddle-point iteration.
//! * [`metrics`] - fusion quality measures (edge preservation, universal
//!   quality index, saliency-weighted quality).
//! * [`pipeline`] - end-to-end jobs, the wavelet-averaging baseline, the
//!   synthetic pair generator and CSV reporting.
//!
//! All numeric code is generic over the scalar type via the [`Real`] trait;
//! `f64` is the type the CLI and the test suites use.

pub mod error;
pub mod image;
pub mod io;
pub mod metrics;
pub mod operators;
pub mod pipeline;
pub mod sensorgain;
pub mod solver;
pub mod wavelet;

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign};

/// Floating-point scalar used by all image and solver math: `f32` or `f64`.
pub trait Real:
    Float + FromPrimitive + NumAssign + Sum + Debug + Display + Send + Sync + 'static
{
}

impl<T> Real for T where
    T: Float + FromPrimitive + NumAssign + Sum + Debug + Display + Send + Sync + 'static
{
}

pub use error::{Error, Result};
pub use image::{ColorImage, Image};
pub use metrics::MetricsReport;
pub use operators::{ForwardOp, GainMap, Psf};
pub use pipeline::{FusionJob, Method};
pub use solver::{FusionResult, SolverConfig};
pub use wavelet::{DetailBand, WaveletPyramid};

/// Concrete aliases for the common scalar choices.
pub type ImageF32 = Image<f32>;
pub type ImageF64 = Image<f64>;
pub type PyramidF32 = WaveletPyramid<f32>;
pub type PyramidF64 = WaveletPyramid<f64>;
pub type SolverConfigF64 = SolverConfig<f64>;
