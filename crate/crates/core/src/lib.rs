//! Off-the-grid sparse spike recovery on the d-dimensional torus.
//!
//! A measure `mu_0 = sum_k a_k delta_{x_k}` is observed through a linear operator
//! whose kernel is approximated by its Fourier coefficients on `[-fc, fc]^d`. The
//! recovery problem (the Beurling LASSO) is lifted to a Toeplitz-penalized
//! semidefinite program over moment matrices, solved with a low-rank Frank-Wolfe
//! scheme whose heavy operations are all FFTs, and the spikes are finally read off
//! the low-rank factor with the eigenvalue method.
//!
//! Module map:
//! - [`measures`]: discrete measures, trigonometric moments, synthetic instances.
//! - [`operators`]: the spectral approximation matrix in diagonal, subsampled-FFT and
//!   dense form.
//! - [`toeplitz`]: multilevel Toeplitz projection and products via FFT.
//! - [`solver`]: the penalized objective, its gradient, and the FFW iteration.
//! - [`extraction`]: support and amplitude recovery from the factor.
//! - [`metrics`]: Jaccard index and flat norm.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod extraction;
pub mod fft;
pub mod index;
pub mod io;
pub mod linalg;
pub mod measures;
pub mod metrics;
pub mod operators;
pub mod pipeline;
pub mod rng;
pub mod solver;
pub mod toeplitz;

pub use error::{Error, Result};
pub use index::IndexSet;
pub use measures::DiscreteMeasure;
pub use num_complex::Complex64;
pub use operators::{HilbertNorm, SpectralOperator};

/// Complex column vector used throughout.
pub type CVector = nalgebra::DVector<Complex64>;
/// Complex dense matrix used throughout.
pub type CMatrix = nalgebra::DMatrix<Complex64>;
