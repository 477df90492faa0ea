//! Conjugate Gamma updates for precisions and the ICAR full conditional.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::AdjacencyGraph;

/// Gamma prior in shape/rate form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaPrior {
    pub shape: f64,
    pub rate: f64,
}

impl GammaPrior {
    pub const fn new(shape: f64, rate: f64) -> Self {
        Self { shape, rate }
    }

    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }

    /// Posterior after observing `n` zero-mean Normal effects with sum of
    /// squares `ss`.
    pub fn posterior(&self, n: f64, ss: f64) -> GammaPrior {
        GammaPrior { shape: self.shape + 0.5 * n, rate: self.rate + 0.5 * ss }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        Gamma::new(self.shape, 1.0 / self.rate)
            .expect("gamma parameters are positive")
            .sample(rng)
    }
}

/// Draws a precision from `Ga(a + n/2, b + ½Σe²)` for zero-mean Normal effects.
pub fn gibbs_precision_update<R: Rng + ?Sized>(effects: &[f64], prior: GammaPrior, rng: &mut R) -> f64 {
    let ss: f64 = effects.iter().map(|e| e * e).sum();
    prior.posterior(effects.len() as f64, ss).sample(rng)
}

/// Mean and precision of `u_i` given its neighbors under the ICAR prior.
pub fn icar_conditional(u: &[f64], graph: &AdjacencyGraph, i: usize, tau_u: f64) -> Result<(f64, f64)> {
    if i >= graph.n_areas() {
        return Err(Error::IndexOutOfRange { index: i, len: graph.n_areas() });
    }
    let nb = graph.neighbors(i);
    if nb.is_empty() {
        return Err(Error::IslandArea(graph.area_ids()[i].clone()));
    }
    let mean = nb.iter().map(|&k| u[k]).sum::<f64>() / nb.len() as f64;
    Ok((mean, tau_u * nb.len() as f64))
}

/// `Σ_{i~k} (u_i - u_k)²` over undirected edges.
pub fn icar_pairwise_ss(u: &[f64], graph: &AdjacencyGraph) -> f64 {
    graph.edges().map(|(i, k)| (u[i] - u[k]).powi(2)).sum()
}

/// Unnormalized ICAR log-density `-(τ/2) Σ_{i~k} (u_i - u_k)²`.
pub fn icar_log_density(u: &[f64], graph: &AdjacencyGraph, tau_u: f64) -> f64 {
    -0.5 * tau_u * icar_pairwise_ss(u, graph)
}

/// Gibbs draw for the ICAR precision; the prior rank is `n - components`.
pub fn icar_precision_update<R: Rng + ?Sized>(u: &[f64], graph: &AdjacencyGraph, prior: GammaPrior, rng: &mut R) -> f64 {
    let rank = (graph.n_areas() - graph.n_components()) as f64;
    prior.posterior(rank, icar_pairwise_ss(u, graph)).sample(rng)
}
