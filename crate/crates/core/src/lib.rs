//! Bayesian spatio-temporal SIR models for areal case counts.

pub mod data;
pub mod design;
pub mod diagnostics;
pub mod error;
pub mod graph;
pub mod inference;
pub mod model;
pub mod simulator;
pub mod state;

pub use error::{Error, Result};
pub use graph::AdjacencyGraph;
pub use model::{catalog, DataBundle, ModelPreset};
pub use state::{ParameterState, StateLayout};
