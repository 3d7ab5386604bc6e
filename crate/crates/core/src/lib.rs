//! Gradient-flow dynamics of deep linear networks.
//!
//! `linflow-core` is a `no_std` (alloc-only) library that simulates gradient
//! flow on the factors `(W_1, …, W_N)` of a linear network and on its
//! end-to-end product `W = W_N ⋯ W_1`, and provides checkers for the
//! landscape, stable-set and convergence-rate statements that govern those
//! flows in the single-neuron bottleneck (rank one) regime.
//!
//! Module map:
//!
//! - [`matrix`]: dense row-major `f64` matrices.
//! - [`spectral`]: SVD, best rank-r truncation, fractional powers, projectors.
//! - [`network`]: layered factorizations, loss, gradients, balancedness.
//! - [`dataset`]: training data, whitening, seeded instance generation.
//! - [`induced`]: the operator `A_W` and the induced end-to-end flow.
//! - [`flows`]: explicit Euler / RK4 integration and ODE identity checkers.
//! - [`landscape`]: stationarity probes and the global-minimum oracle.
//! - [`stability`]: stable-set membership and trajectory monitors.
//! - [`rates`]: convergence-rate envelopes and domination checks.

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod dataset;
mod error;
pub mod flows;
pub mod induced;
pub mod landscape;
pub mod matrix;
pub mod network;
pub mod rates;
pub mod spectral;
pub mod stability;

pub use error::{Error, Result};
pub use matrix::Matrix;

pub(crate) mod math {
    //! Thin wrappers over `libm` so call sites read like `std` float methods.

    #[inline]
    pub fn sqrt(x: f64) -> f64 {
        libm::sqrt(x)
    }

    #[inline]
    pub fn powf(x: f64, p: f64) -> f64 {
        libm::pow(x, p)
    }

    #[inline]
    pub fn exp(x: f64) -> f64 {
        libm::exp(x)
    }

    #[inline]
    pub fn ln(x: f64) -> f64 {
        libm::log(x)
    }

    #[inline]
    pub fn cos(x: f64) -> f64 {
        libm::cos(x)
    }

    #[inline]
    pub fn sin(x: f64) -> f64 {
        libm::sin(x)
    }

    #[inline]
    pub fn acos(x: f64) -> f64 {
        libm::acos(x)
    }

    /// `x^p` for `x ≥ 0` with the convention `0^0 = 1`.
    #[inline]
    pub fn pow_nonneg(x: f64, p: f64) -> f64 {
        if p == 0.0 {
            1.0
        } else if x <= 0.0 {
            0.0
        } else {
            libm::pow(x, p)
        }
    }
}
