//! Stochastic nonlinear model updating from backbone curves.
//!
//! The pipeline: simulate free decays of a single-degree-of-freedom oscillator
//! ([`dynamics`]), extract backbone curves by peak picking ([`backbone`]),
//! build an ensemble of measured curves ([`ensemble`]), slice the ensemble at
//! fixed amplitudes into a product-of-densities likelihood ([`likelihood`]),
//! sample the posterior with random-walk Metropolis-Hastings ([`sampler`]) and
//! summarize the chains ([`diagnostics`]).

pub mod backbone;
pub mod density;
pub mod diagnostics;
pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod io;
pub mod likelihood;
pub mod params;
pub mod sampler;

pub use error::{Error, Result};
