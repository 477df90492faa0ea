use serde::{Deserialize, Serialize};

use super::conjugate::GammaPrior;
use crate::error::{Error, Result};

/// Normal distribution a GVS coefficient is drawn from while excluded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PseudoPrior {
    pub mean: f64,
    pub sd: f64,
}

/// Hyperparameters. Only the per-day effect precision prior `Ga(0.5, 0.1)`
/// comes from the model literature; the rest are vague defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriorConfig {
    /// Standard deviation of the Normal(0, sd²) prior on α, θ and η.
    pub coef_sd: f64,
    pub tau_v: GammaPrior,
    /// Prior for the per-day precisions of space-time effects.
    pub tau_v_day: GammaPrior,
    pub tau_u: GammaPrior,
    pub tau_y: GammaPrior,
    pub inclusion_prob: f64,
    /// Set to skip the pilot run that tunes pseudo-priors.
    pub pseudo_priors: Option<Vec<PseudoPrior>>,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            coef_sd: 10.0,
            tau_v: GammaPrior::new(0.5, 0.0005),
            tau_v_day: GammaPrior::new(0.5, 0.1),
            tau_u: GammaPrior::new(0.5, 0.0005),
            tau_y: GammaPrior::new(0.5, 0.0005),
            inclusion_prob: 0.5,
            pseudo_priors: None,
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        let gammas = [self.tau_v, self.tau_v_day, self.tau_u, self.tau_y];
        if gammas.iter().any(|g| !(g.shape > 0.0 && g.rate > 0.0)) {
            return Err(Error::InvalidControls("gamma prior shapes and rates must be positive".into()));
        }
        if !(self.coef_sd > 0.0) {
            return Err(Error::InvalidControls("coefficient prior sd must be positive".into()));
        }
        if !(self.inclusion_prob > 0.0 && self.inclusion_prob < 1.0) {
            return Err(Error::InvalidControls("inclusion prior must lie strictly between 0 and 1".into()));
        }
        if let Some(pp) = &self.pseudo_priors {
            if pp.iter().any(|p| !(p.sd > 0.0) || !p.mean.is_finite()) {
                return Err(Error::InvalidControls("pseudo-prior sds must be positive".into()));
            }
        }
        Ok(())
    }

    /// Log-density of the coefficient prior, up to a constant.
    #[inline]
    pub fn coef_log_prior(&self, x: f64) -> f64 {
        -0.5 * x * x / (self.coef_sd * self.coef_sd)
    }
}
