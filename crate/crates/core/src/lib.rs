//! Greedy subsampling of scattered frequency-domain measurements, kernel
//! interpolation onto a uniform grid, and regularized Fourier inversion.
//!
//! The library targets imaging problems where the data are sparse samples of
//! the 2-D Fourier transform of a nonnegative flux image (visibilities, as
//! produced by Fourier imagers such as STIX). The building blocks are:
//!
//! - [`kernel`] — positive-definite radial kernels, interpolation systems,
//!   cardinal basis, Lebesgue function, power function and native norms;
//! - [`greedy`] — residual-based and power-function (P-greedy) selection of
//!   measurement subsets;
//! - [`fourier`] — the forward visibility operator at scattered frequencies
//!   and on a masked uniform grid, with its adjoint;
//! - [`landweber`] — projected Landweber iteration and operator-norm
//!   estimation for the resulting linear inversion;
//! - [`simulate`] — synthetic flare sources, Fibonacci frequency nodes and
//!   noisy visibility generation;
//! - [`pipeline`] — the end-to-end select → interpolate → invert scheme with
//!   data-fitting metrics;
//! - [`io`] — CSV/JSON/PGM/TOML readers and writers for every artifact the
//!   pipeline emits.

pub mod error;
pub mod fourier;
pub mod geometry;
pub mod greedy;
pub mod io;
pub mod kernel;
pub mod landweber;
pub mod metrics;
pub mod pipeline;
pub mod simulate;

pub use error::{Error, ErrorKind, Result};
pub use geometry::Point2;
pub use kernel::{KernelConfig, KernelFamily, NodeSet};
