//! Pointwise data log-likelihood.

use std::f64::consts::PI;

use crate::design::ModelData;
use crate::error::{Error, Result};
use crate::state::ParameterState;

/// `y log μ - μ - ln(y!)` given `log μ` and a precomputed `ln(y!)`.
#[inline]
pub fn poisson_log_density(y: f64, log_mu: f64, log_factorial: f64) -> f64 {
    y * log_mu - log_mu.exp() - log_factorial
}

/// Normal log-density parameterized by precision.
#[inline]
pub fn normal_log_density(x: f64, mean: f64, precision: f64) -> f64 {
    let d = x - mean;
    0.5 * (precision.ln() - (2.0 * PI).ln()) - 0.5 * precision * d * d
}

/// Log-likelihood of cell `c` at log-mean `eta`.
#[inline]
pub fn cell_log_likelihood(model: &ModelData, state: &ParameterState, c: usize, eta: f64) -> f64 {
    if model.is_lognormal() {
        normal_log_density(model.response[c], eta, model.obs_precision(state, c))
    } else {
        poisson_log_density(model.response[c], eta, model.log_factorial[c])
    }
}

/// One log-likelihood value per modeled cell, in cell order.
pub fn log_likelihood_pointwise(state: &ParameterState, model: &ModelData) -> Result<Vec<f64>> {
    let eta = model.linear_predictor(state);
    eta.iter()
        .enumerate()
        .map(|(c, &e)| {
            if !e.is_finite() {
                let cell = model.cells[c];
                return Err(Error::NonFiniteLogMean { area: cell.area, day: cell.day });
            }
            Ok(cell_log_likelihood(model, state, c, e))
        })
        .collect()
}

/// Total log-likelihood, summed in cell order.
pub fn total_log_likelihood(state: &ParameterState, model: &ModelData) -> Result<f64> {
    Ok(log_likelihood_pointwise(state, model)?.iter().sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::function::gamma::ln_gamma;

    #[test]
    fn poisson_at_zero() {
        assert!((poisson_log_density(0.0, 0.0, 0.0) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn poisson_three() {
        // 3 ln 3 - 3 - ln 6 = -1.4959226032237259266...
        let v = poisson_log_density(3.0, 3f64.ln(), ln_gamma(4.0));
        assert!((v - (-1.495_922_603_223_725_9)).abs() < 1e-12, "{v}");
    }

    #[test]
    fn normal_at_mean() {
        let v = normal_log_density(1.7, 1.7, 1.0);
        assert!((v + 0.918_938_533_204_672_7).abs() < 1e-15);
    }
}
