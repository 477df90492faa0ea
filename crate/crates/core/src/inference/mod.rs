//! Posterior sampling.

pub mod conjugate;
pub mod gvs;
pub mod likelihood;
pub mod prior;
pub mod sampler;

pub use prior::{PriorConfig, PseudoPrior};
pub use sampler::{mcmc_run, ChainOutput, SamplerControls};
