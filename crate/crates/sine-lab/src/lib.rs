//! A numerical laboratory for the sine determinantal point process.
//!
//! The sine process has kernel `K(x, y) = sin(x − y) / (π(x − y))` and
//! intensity `1/π`. This crate computes and checks the quantities behind its
//! linear-statistic limit theorems:
//!
//! * [`spectral`]: variances and covariances from exact Fourier transforms,
//!   the `H^{1/2}` pairing, and the covariance of the limiting bridge.
//! * [`kernels`]: Nyström discretizations of the kernel on a window, and
//!   trace functionals of them.
//! * [`cumulants`]: cumulants from traces and from Fredholm determinants,
//!   plus the exact combinatorial identities that make them vanish.
//! * [`sampler`]: exact sampling of the process on a window, and a GUE
//!   surrogate.
//! * [`statistics`]: the counting process `ξ`, its `(η, z)` decomposition,
//!   and ergodic weights.
//! * [`mc`]: seeded, reproducible Monte Carlo experiments with pass/fail
//!   checks.
//! * [`identities`]: identity suites with measured defects.
//! * [`oracles`]: slow, independent reference implementations.
//!
//! ```
//! use sine_lab::spectral::{variance_sine_fourier, TestFunction};
//!
//! let h = TestFunction::piecewise_linear(vec![0.0, 5.0, 10.0], vec![0.0, 1.0, 0.0])?;
//! let var = variance_sine_fourier(&h)?;
//! assert!(var > 0.0 && var < 1.0);
//! # Ok::<(), sine_lab::Error>(())
//! ```
//!
//! The guide in `book/` explains the concepts. Its code blocks are compiled
//! and run as doctests of this crate.

pub mod cumulants;
pub mod error;
pub mod identities;
pub mod kernels;
pub mod mc;
pub mod oracles;
pub mod quadrature;
pub mod rng;
pub mod sampler;
pub mod spectral;
pub mod statistics;
pub mod stats;

pub use error::{Error, Result};

// The guide's chapters, so `cargo test` runs their code blocks.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/kernels.md")]
    mod kernels {}
    #[doc = include_str!("../../../book/src/variance.md")]
    mod variance {}
    #[doc = include_str!("../../../book/src/cumulants.md")]
    mod cumulants {}
    #[doc = include_str!("../../../book/src/sampling.md")]
    mod sampling {}
    #[doc = include_str!("../../../book/src/statistics.md")]
    mod statistics {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
