//! Causal effects of a binary treatment on distribution-valued outcomes.
//!
//! Each subject contributes a univariate distribution, stored as its quantile
//! function on a shared level grid. Potential-outcome distributions are
//! averaged in 2-Wasserstein space, where averaging is pointwise on quantile
//! curves, and the causal effect is the displacement between the treated and
//! control barycentres.
//!
//! - [`ot`]: quantile curves, W2 distance, barycentres, transport maps.
//! - [`nuisance`]: outcome regression and propensity models.
//! - [`effects`]: OR, IPW, DR and cross-fitted estimators.
//! - [`inference`]: influence-function covariance and confidence bands.
//! - [`simlab`]: the simulation design and Monte Carlo harness.
//! - [`io`]: dataset parsing, result documents and CLI commands.

pub mod effects;
pub mod error;
pub mod inference;
pub mod io;
pub mod nuisance;
pub mod ot;
pub mod rng;
pub mod simlab;

pub use error::{Error, Result};
