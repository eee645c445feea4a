//! Adaptive Bayesian inference in the sequence-space white noise model
//! with p-exponential priors.
//!
//! The library covers the full pipeline: sequence representations and
//! weighted norms ([`seq`]), the univariate p-exponential family
//! ([`pexp`]), white-noise observations and their exact log-likelihood
//! ([`wn`]), scaled product priors with hyper-priors and the whitening
//! reparametrization ([`prior`]), marginal-likelihood quadrature and MMLE
//! grid search ([`ebayes`]), a whitened preconditioned Crank-Nicolson
//! within Gibbs sampler with credible bands ([`hbayes`]), and closed-form
//! rate calculators with Monte-Carlo small-ball verifiers ([`rates`]).

// Validation guards are written as !(x > 0.0) on purpose: the negation
// rejects NaN, which x <= 0.0 would silently accept.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ebayes;
mod error;
pub mod hbayes;
pub mod pexp;
pub mod prior;
pub mod rates;
pub mod seq;
pub mod special;
mod util;
pub mod wn;

pub use error::{Error, Result};
