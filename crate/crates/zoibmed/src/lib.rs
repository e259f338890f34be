//! Causal mediation analysis for bounded outcomes with boundary inflation.
//!
//! Outcomes and mediators measured on a bounded scale (rescaled to `[0,1]`)
//! frequently pile up at the endpoints. This crate models both variables with
//! zero/one-inflated beta (ZOIB) regressions and estimates natural direct,
//! indirect, and total treatment effects by integrating those regressions
//! through a Monte Carlo g-formula. Inference is by maximum likelihood with a
//! nonparametric bootstrap, and two sensitivity analyses quantify how the
//! effect estimates move when the ignorability assumptions fail.
//!
//! Organization:
//!
//! - [`zoib`]: the ZOIB distribution itself (density, CDF, quantile, sampling).
//! - [`model`]: datasets, design matrices, coefficient banks, prediction.
//! - [`fit`]: maximum-likelihood fitting, the bootstrap, and the sensitivity
//!   pilot regressions.
//! - [`gformula`]: average and quantile effect estimation.
//! - [`sensitivity`]: logit-scale (Gaussian copula) and linear-scale
//!   sensitivity estimators and grids.
//! - [`simharness`]: scenario-based simulation studies against known truths.
//! - [`cli`]: dataset ingestion, configuration, and the command pipelines
//!   behind the `zoibmed` binary.
//! - [`special`]: the special functions and quadrature the above rest on.
//! - [`check`]: the runtime invariant suite behind `zoibmed check`.

pub mod check;
pub mod cli;
pub mod error;
pub mod fit;
pub mod gformula;
pub mod model;
pub mod rngutil;
pub mod sensitivity;
pub mod simharness;
pub mod special;
#[cfg(test)]
pub(crate) mod testutil;
pub mod zoib;

pub use error::{Error, Result};
