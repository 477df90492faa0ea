//! One MCMC state and its flat, named representation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelPreset, PredictorMode, UhMode};

/// Every sampled quantity. Fields a model does not use are left empty.
///
/// Space-time effects `v` are stored area-major over modeled days
/// `j = 1..J-1`: index `i * (J - 1) + (j - 1)`. Per-day precisions use the
/// same `j - 1` offset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterState {
    pub alpha: [f64; 3],
    pub theta: Vec<f64>,
    pub gamma: Vec<bool>,
    pub v: Vec<f64>,
    pub u: Vec<f64>,
    pub tau_v: Vec<f64>,
    pub tau_u: Option<f64>,
    pub tau_y: Vec<f64>,
    pub eta: Vec<f64>,
}

impl ParameterState {
    /// All-zero effects with unit precisions, shaped for `layout`.
    pub fn zeros(layout: &StateLayout) -> Self {
        Self {
            alpha: [0.0; 3],
            theta: vec![0.0; layout.n_predictors],
            gamma: vec![true; if layout.gvs { layout.n_predictors } else { 0 }],
            v: vec![0.0; layout.n_v],
            u: vec![0.0; if layout.icar { layout.n_areas } else { 0 }],
            tau_v: vec![1.0; layout.n_tau_v],
            tau_u: layout.icar.then_some(1.0),
            tau_y: vec![1.0; layout.n_tau_y],
            eta: vec![0.0; layout.n_periods],
        }
    }

    /// Effective regression coefficient for predictor `k`.
    pub fn beta(&self, k: usize, mode: PredictorMode) -> f64 {
        match mode {
            PredictorMode::None => 0.0,
            PredictorMode::Fixed => self.theta[k],
            PredictorMode::Gvs => {
                if self.gamma[k] {
                    self.theta[k]
                } else {
                    0.0
                }
            }
        }
    }

    pub fn check_shape(&self, layout: &StateLayout) -> Result<()> {
        let expected = ParameterState::zeros(layout);
        let ok = self.theta.len() == expected.theta.len()
            && self.gamma.len() == expected.gamma.len()
            && self.v.len() == expected.v.len()
            && self.u.len() == expected.u.len()
            && self.tau_v.len() == expected.tau_v.len()
            && self.tau_u.is_some() == expected.tau_u.is_some()
            && self.tau_y.len() == expected.tau_y.len()
            && self.eta.len() == expected.eta.len();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidSpec("parameter state does not match the model layout".into()))
        }
    }
}

/// Which blocks a model carries and how they flatten to named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct StateLayout {
    pub n_areas: usize,
    pub n_days: usize,
    pub n_predictors: usize,
    pub n_periods: usize,
    pub self_lag: bool,
    pub neighbor_lag: bool,
    pub gvs: bool,
    pub icar: bool,
    pub uh_mode: UhMode,
    pub n_v: usize,
    pub n_tau_v: usize,
    pub n_tau_y: usize,
    area_ids: Vec<String>,
}

impl StateLayout {
    pub fn new(preset: &ModelPreset, area_ids: &[String], n_days: usize, n_predictors: usize, n_periods: usize) -> Self {
        let spec = &preset.spec;
        let n_areas = area_ids.len();
        let modeled_days = n_days.saturating_sub(1);
        let n_predictors = if spec.predictor_mode == PredictorMode::None { 0 } else { n_predictors };
        let n_v = match spec.uh_mode {
            UhMode::None => 0,
            UhMode::Spatial => n_areas,
            UhMode::Spacetime | UhMode::SpacetimeTvprec => n_areas * modeled_days,
        };
        let n_tau_v = match spec.uh_mode {
            UhMode::None => 0,
            UhMode::Spatial | UhMode::Spacetime => 1,
            UhMode::SpacetimeTvprec => modeled_days,
        };
        let n_tau_y = match (preset.data_model.is_lognormal(), preset.data_model.tv_obs_precision) {
            (false, _) => 0,
            (true, false) => 1,
            (true, true) => modeled_days,
        };
        Self {
            n_areas,
            n_days,
            n_predictors,
            n_periods: if spec.mobility { n_periods } else { 0 },
            self_lag: spec.include_self_lag,
            neighbor_lag: spec.include_neighbor_lag,
            gvs: spec.predictor_mode == PredictorMode::Gvs,
            icar: spec.icar,
            uh_mode: spec.uh_mode,
            n_v,
            n_tau_v,
            n_tau_y,
            area_ids: area_ids.to_vec(),
        }
    }

    /// Column names in flattening order.
    pub fn names(&self) -> Vec<String> {
        let mut names = vec!["alpha0".to_string()];
        if self.self_lag {
            names.push("alpha1".into());
        }
        if self.neighbor_lag {
            names.push("alpha2".into());
        }
        names.extend((1..=self.n_predictors).map(|k| format!("theta{k}")));
        if self.gvs {
            names.extend((1..=self.n_predictors).map(|k| format!("gamma{k}")));
        }
        match self.uh_mode {
            UhMode::None => {}
            UhMode::Spatial => names.extend(self.area_ids.iter().map(|a| format!("v_{a}"))),
            UhMode::Spacetime | UhMode::SpacetimeTvprec => {
                for a in &self.area_ids {
                    names.extend((1..self.n_days).map(|j| format!("v_{a}_{j}")));
                }
            }
        }
        if self.icar {
            names.extend(self.area_ids.iter().map(|a| format!("u_{a}")));
        }
        match self.n_tau_v {
            0 => {}
            1 => names.push("tau_v".into()),
            _ => names.extend((1..self.n_days).map(|j| format!("tau_v_{j}"))),
        }
        if self.icar {
            names.push("tau_u".into());
        }
        match self.n_tau_y {
            0 => {}
            1 => names.push("tau_y".into()),
            _ => names.extend((1..self.n_days).map(|j| format!("tau_y_{j}"))),
        }
        names.extend((1..=self.n_periods).map(|p| format!("eta_{p}")));
        names
    }

    pub fn flatten(&self, s: &ParameterState) -> Vec<f64> {
        let mut out = vec![s.alpha[0]];
        if self.self_lag {
            out.push(s.alpha[1]);
        }
        if self.neighbor_lag {
            out.push(s.alpha[2]);
        }
        out.extend(&s.theta);
        out.extend(s.gamma.iter().map(|&g| if g { 1.0 } else { 0.0 }));
        out.extend(&s.v);
        out.extend(&s.u);
        out.extend(&s.tau_v);
        out.extend(s.tau_u);
        out.extend(&s.tau_y);
        out.extend(&s.eta);
        out
    }

    pub fn unflatten(&self, values: &[f64]) -> Result<ParameterState> {
        let mut s = ParameterState::zeros(self);
        let expected = self.names().len();
        if values.len() != expected {
            return Err(Error::InvalidData(format!("expected {expected} parameter values, got {}", values.len())));
        }
        let mut it = values.iter().copied();
        let mut next = || it.next().expect("length checked");
        s.alpha[0] = next();
        if self.self_lag {
            s.alpha[1] = next();
        }
        if self.neighbor_lag {
            s.alpha[2] = next();
        }
        s.theta.iter_mut().for_each(|x| *x = next());
        s.gamma.iter_mut().for_each(|g| *g = next() != 0.0);
        s.v.iter_mut().for_each(|x| *x = next());
        s.u.iter_mut().for_each(|x| *x = next());
        s.tau_v.iter_mut().for_each(|x| *x = next());
        if let Some(t) = s.tau_u.as_mut() {
            *t = next();
        }
        s.tau_y.iter_mut().for_each(|x| *x = next());
        s.eta.iter_mut().for_each(|x| *x = next());
        Ok(s)
    }

    /// Names of the scalar parameters monitored for convergence and reported
    /// in summaries (coefficients and precisions, not per-area effects).
    pub fn is_monitored(name: &str) -> bool {
        name.starts_with("alpha")
            || name.starts_with("theta")
            || name == "tau_v"
            || name == "tau_u"
            || name == "tau_y"
            || name.starts_with("eta_")
    }
}
