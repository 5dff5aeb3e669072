//! Variance-based sensitivity analysis on Bayesian sum-of-trees posteriors.
//!
//! The crate fits a sum-of-trees regression model by Markov-chain Monte Carlo
//! ([`sampler`]), then post-processes every posterior draw in closed form
//! ([`sensitivity`]): main- and total-effect Sobol' indices and Shapley
//! effects, exact or through random coalition subsets, summarized as point
//! estimates with credible intervals. Because every draw is a piecewise
//! constant function over axis-aligned boxes, all integrals under the uniform
//! input measure on `[0,1]^p` reduce to sums over pairs of leaf boxes.
//!
//! [`oracle`] holds Monte-Carlo ground-truth estimators for arbitrary black
//! boxes and [`testbed`] the four reference test functions with their
//! published index values. [`cli`] wires everything into the `shapfor`
//! binary; the `examples/` directory shows each capability on its own.

pub mod benchmark;
pub mod cli;
pub mod data;
pub mod error;
pub mod forest;
pub mod oracle;
pub mod rng;
pub mod sampler;
pub mod sensitivity;
pub mod stats;
pub mod testbed;

pub use error::{Error, Result};
pub use forest::{Forest, Interval, LeafBox, PosteriorEnsemble, Tree, TreeNode};
pub use sampler::{fit, Dataset, SamplerConfig};
pub use sensitivity::{SensitivityReport, SubsetMask};
