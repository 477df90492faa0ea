//! Gibbs variable selection for the area-level predictors.
//!
//! Each predictor enters as `γ_k θ_k x_ik`. While `γ_k = 0` the coefficient is
//! drawn from a pseudo-prior close to its conditional posterior so that the
//! indicator can switch back on.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::likelihood::log_likelihood_pointwise;
use super::prior::{PriorConfig, PseudoPrior};
use crate::design::ModelData;
use crate::error::{Error, Result};
use crate::inference::likelihood::normal_log_density;
use crate::state::ParameterState;

/// Log posterior odds of `γ_k = 1` against `γ_k = 0`, given the log-likelihood
/// difference `ll_on - ll_off` at the current `θ_k`.
pub fn gvs_log_odds(ll_diff: f64, theta: f64, prior: &PriorConfig, pseudo: PseudoPrior) -> f64 {
    let slab = normal_log_density(theta, 0.0, 1.0 / (prior.coef_sd * prior.coef_sd));
    let pseudo_ld = normal_log_density(theta, pseudo.mean, 1.0 / (pseudo.sd * pseudo.sd));
    let p = prior.inclusion_prob;
    ll_diff + slab - pseudo_ld + (p / (1.0 - p)).ln()
}

/// `P(γ = 1)` from log odds, stable at both tails.
pub fn inclusion_probability_from_log_odds(log_odds: f64) -> f64 {
    if log_odds.is_nan() {
        return 0.0;
    }
    if log_odds >= 0.0 {
        1.0 / (1.0 + (-log_odds).exp())
    } else {
        let e = log_odds.exp();
        e / (1.0 + e)
    }
}

pub fn draw_pseudo<R: Rng + ?Sized>(pseudo: PseudoPrior, rng: &mut R) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    pseudo.mean + pseudo.sd * z
}

/// Draws `γ_k` from its full conditional. Returns the new indicator and the
/// coefficient (redrawn from the pseudo-prior when the indicator is off).
pub fn gvs_indicator_update<R: Rng + ?Sized>(
    k: usize,
    state: &ParameterState,
    model: &ModelData,
    prior: &PriorConfig,
    rng: &mut R,
) -> Result<(bool, f64)> {
    if !model.layout.gvs {
        return Err(Error::InvalidSpec("indicator update requires a GVS model".into()));
    }
    let pseudo = prior
        .pseudo_priors
        .as_ref()
        .and_then(|p| p.get(k).copied())
        .ok_or(Error::PseudoPriorUnset(k))?;
    let mut on = state.clone();
    on.gamma[k] = true;
    let mut off = state.clone();
    off.gamma[k] = false;
    let ll_on: f64 = log_likelihood_pointwise(&on, model)?.iter().sum();
    let ll_off: f64 = log_likelihood_pointwise(&off, model)?.iter().sum();
    let odds = gvs_log_odds(ll_on - ll_off, state.theta[k], prior, pseudo);
    let include = rng.random::<f64>() < inclusion_probability_from_log_odds(odds);
    let theta = if include { state.theta[k] } else { draw_pseudo(pseudo, rng) };
    Ok((include, theta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn odds_reduce_to_prior_odds() {
        let prior = PriorConfig { inclusion_prob: 0.3, ..PriorConfig::default() };
        let pseudo = PseudoPrior { mean: 0.0, sd: prior.coef_sd };
        let odds = gvs_log_odds(0.0, 0.0, &prior, pseudo);
        assert!((inclusion_probability_from_log_odds(odds) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn logistic_tails() {
        assert_eq!(inclusion_probability_from_log_odds(f64::INFINITY), 1.0);
        assert_eq!(inclusion_probability_from_log_odds(f64::NEG_INFINITY), 0.0);
        assert!((inclusion_probability_from_log_odds(0.0) - 0.5).abs() < 1e-15);
    }
}
