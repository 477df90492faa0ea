//! Model fit and convergence summaries computed from stored chains.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::design::ModelData;
use crate::error::{Error, Result};
use crate::inference::sampler::ChainOutput;
use crate::model::PredictorMode;
use crate::state::ParameterState;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waic {
    pub waic: f64,
    pub lppd: f64,
    pub p_waic: f64,
}

/// WAIC from a row-major `n_draws × n_cells` log-likelihood matrix, using the
/// variance form of the effective number of parameters.
pub fn waic(pointwise: &[f64], n_draws: usize, n_cells: usize) -> Result<Waic> {
    if n_draws < 2 {
        return Err(Error::TooFewDraws { needed: 2, got: n_draws });
    }
    if n_cells == 0 || pointwise.len() != n_draws * n_cells {
        return Err(Error::InvalidData("log-likelihood matrix has the wrong shape".into()));
    }
    let mut lppd = 0.0;
    let mut p_waic = 0.0;
    let mut column = vec![0.0; n_draws];
    for c in 0..n_cells {
        for (d, x) in column.iter_mut().enumerate() {
            *x = pointwise[d * n_cells + c];
        }
        let max = column.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = column.iter().map(|l| (l - max).exp()).sum();
        lppd += max + (sum_exp / n_draws as f64).ln();
        let mean = column.iter().sum::<f64>() / n_draws as f64;
        p_waic += column.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (n_draws - 1) as f64;
    }
    Ok(Waic { waic: -2.0 * lppd + 2.0 * p_waic, lppd, p_waic })
}

/// Posterior mean of `-2 × total log-likelihood`.
pub fn mean_deviance(pointwise: &[f64], n_draws: usize, n_cells: usize) -> Result<f64> {
    if n_draws == 0 {
        return Err(Error::TooFewDraws { needed: 1, got: 0 });
    }
    if pointwise.len() != n_draws * n_cells {
        return Err(Error::InvalidData("log-likelihood matrix has the wrong shape".into()));
    }
    let total: f64 = (0..n_draws)
        .map(|d| -2.0 * pointwise[d * n_cells..(d + 1) * n_cells].iter().sum::<f64>())
        .sum();
    Ok(total / n_draws as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Geweke {
    pub z: f64,
    /// Both windows had zero estimated variance; `z` is reported as 0.
    pub degenerate: bool,
}

/// Geweke z-score comparing the first `frac_a` and last `frac_b` of a chain.
///
/// Each window's spectral density at zero is estimated by non-overlapping
/// batch means with `floor(sqrt(n))` batches.
pub fn geweke(chain: &[f64], frac_a: f64, frac_b: f64) -> Result<Geweke> {
    if chain.len() < 100 {
        return Err(Error::ChainTooShort(chain.len()));
    }
    let n = chain.len();
    let n_a = ((frac_a * n as f64).floor() as usize).max(2);
    let n_b = ((frac_b * n as f64).floor() as usize).max(2);
    let a = &chain[..n_a];
    let b = &chain[n - n_b..];
    let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
    let flat = |x: &[f64]| x.iter().all(|&v| v == x[0]);
    if flat(a) && flat(b) {
        return Ok(Geweke { z: 0.0, degenerate: true });
    }
    let var_a = spectral_zero(a) / n_a as f64;
    let var_b = spectral_zero(b) / n_b as f64;
    let denom = (var_a + var_b).sqrt();
    if !(denom > 0.0) {
        return Ok(Geweke { z: 0.0, degenerate: true });
    }
    Ok(Geweke { z: (mean(a) - mean(b)) / denom, degenerate: false })
}

/// Batch-means estimate of the spectral density at frequency zero.
pub fn spectral_zero(x: &[f64]) -> f64 {
    let n = x.len();
    let batches = ((n as f64).sqrt().floor() as usize).max(2);
    let size = n / batches;
    if size == 0 {
        return 0.0;
    }
    let means: Vec<f64> = (0..batches)
        .map(|b| x[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let grand = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (batches - 1) as f64;
    size as f64 * var
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Inclusion {
    pub probability: f64,
    /// `probability >= 0.5`; a tie counts as included.
    pub included: bool,
}

pub fn inclusion_probability(draws: &[bool]) -> Result<Inclusion> {
    if draws.is_empty() {
        return Err(Error::TooFewDraws { needed: 1, got: 0 });
    }
    let probability = draws.iter().filter(|&&g| g).count() as f64 / draws.len() as f64;
    Ok(Inclusion { probability, included: probability >= 0.5 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q975: f64,
}

/// Mean, sample sd and 2.5%/97.5% quantiles (linear interpolation between
/// order statistics).
pub fn posterior_summary(draws: &[f64]) -> Result<PosteriorSummary> {
    if draws.len() < 2 {
        return Err(Error::TooFewDraws { needed: 2, got: draws.len() });
    }
    let n = draws.len() as f64;
    let mean = draws.iter().sum::<f64>() / n;
    let sd = (draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(PosteriorSummary { mean, sd, q025: quantile_sorted(&sorted, 0.025), q975: quantile_sorted(&sorted, 0.975) })
}

/// Type-7 quantile of already sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedSummary {
    pub name: String,
    #[serde(flatten)]
    pub summary: PosteriorSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedGeweke {
    pub name: String,
    /// One z-score per chain.
    pub z: Vec<f64>,
    pub degenerate: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedInclusion {
    pub name: String,
    #[serde(flatten)]
    pub inclusion: Inclusion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub model: String,
    pub waic: f64,
    pub p_waic: f64,
    pub lppd: f64,
    pub mean_deviance: f64,
    pub n_draws: usize,
    pub n_cells: usize,
    pub n_dropped_cells: usize,
    pub geweke_z: Vec<NamedGeweke>,
    pub inclusion_probs: Vec<NamedInclusion>,
    pub summaries: Vec<NamedSummary>,
    pub acceptance_rates: Vec<Vec<(String, f64)>>,
}

/// Scalar series reported in summaries, in table order: α's, β's (effective
/// coefficients), η's, then scalar precisions.
pub fn reported_scalars(model: &ModelData, state: &ParameterState) -> Vec<(String, f64)> {
    let layout = &model.layout;
    let mut out = vec![("alpha0".to_string(), state.alpha[0])];
    if layout.self_lag {
        out.push(("alpha1".into(), state.alpha[1]));
    }
    if layout.neighbor_lag {
        out.push(("alpha2".into(), state.alpha[2]));
    }
    let mode = model.preset.spec.predictor_mode;
    if mode != PredictorMode::None {
        for k in 0..layout.n_predictors {
            out.push((format!("beta{}", k + 1), state.beta(k, mode)));
        }
    }
    for (p, e) in state.eta.iter().enumerate() {
        out.push((format!("eta_{}", p + 1), *e));
    }
    if state.tau_v.len() == 1 {
        out.push(("tau_v".into(), state.tau_v[0]));
    }
    if let Some(t) = state.tau_u {
        out.push(("tau_u".into(), t));
    }
    if state.tau_y.len() == 1 {
        out.push(("tau_y".into(), state.tau_y[0]));
    }
    out
}

/// Pools all chains into one report.
pub fn fit_report(model: &ModelData, chains: &[ChainOutput]) -> Result<FitReport> {
    let n_cells = model.n_cells();
    let n_draws: usize = chains.iter().map(ChainOutput::n_retained).sum();
    let pooled: Vec<f64> = chains.iter().flat_map(|c| c.pointwise_loglik.iter().copied()).collect();
    let w = if n_cells > 0 {
        waic(&pooled, n_draws, n_cells)?
    } else {
        Waic { waic: 0.0, lppd: 0.0, p_waic: 0.0 }
    };
    let deviance = mean_deviance(&pooled, n_draws, n_cells)?;

    let first = chains
        .first()
        .and_then(|c| c.draws.first())
        .ok_or(Error::TooFewDraws { needed: 2, got: 0 })?;
    let names: Vec<String> = reported_scalars(model, first).into_iter().map(|(n, _)| n).collect();
    let per_chain: Vec<Vec<Vec<f64>>> = chains
        .iter()
        .map(|c| {
            let mut series = vec![Vec::with_capacity(c.draws.len()); names.len()];
            for d in &c.draws {
                for (s, (_, v)) in series.iter_mut().zip(reported_scalars(model, d)) {
                    s.push(v);
                }
            }
            series
        })
        .collect();

    let mut summaries = Vec::with_capacity(names.len());
    let mut geweke_z = Vec::with_capacity(names.len());
    for (p, name) in names.iter().enumerate() {
        let pooled: Vec<f64> = per_chain.iter().flat_map(|c| c[p].iter().copied()).collect();
        summaries.push(NamedSummary { name: name.clone(), summary: posterior_summary(&pooled)? });
        let mut z = Vec::new();
        let mut degenerate = Vec::new();
        for c in &per_chain {
            match geweke(&c[p], 0.1, 0.5) {
                Ok(g) => {
                    z.push(g.z);
                    degenerate.push(g.degenerate);
                }
                Err(Error::ChainTooShort(_)) => {}
                Err(e) => return Err(e),
            }
        }
        geweke_z.push(NamedGeweke { name: name.clone(), z, degenerate });
    }

    let mut inclusion_probs = Vec::new();
    if model.layout.gvs {
        for k in 0..model.layout.n_predictors {
            let draws: Vec<bool> = chains.iter().flat_map(|c| c.draws.iter().map(move |d| d.gamma[k])).collect();
            inclusion_probs.push(NamedInclusion { name: format!("gamma{}", k + 1), inclusion: inclusion_probability(&draws)? });
        }
    }

    Ok(FitReport {
        model: model.preset.name.clone(),
        waic: w.waic,
        p_waic: w.p_waic,
        lppd: w.lppd,
        mean_deviance: deviance,
        n_draws,
        n_cells,
        n_dropped_cells: model.dropped.len(),
        geweke_z,
        inclusion_probs,
        summaries,
        acceptance_rates: chains.iter().map(|c| c.acceptance_rates.clone()).collect(),
    })
}

impl FitReport {
    pub fn summary(&self, name: &str) -> Option<&PosteriorSummary> {
        self.summaries.iter().find(|s| s.name == name).map(|s| &s.summary)
    }

    pub fn geweke(&self, name: &str) -> Option<&NamedGeweke> {
        self.geweke_z.iter().find(|g| g.name == name)
    }

    /// Parameter table with posterior mean, sd and 2.5/97.5 percentiles.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "Model {}: mean deviance {:.1}, WAIC {:.1} (pWAIC {:.1})", self.model, self.mean_deviance, self.waic, self.p_waic);
        let _ = writeln!(out, "{:<10} {:>14} {:>12} {:>14} {:>14} {:>9}", "Parameter", "Mean", "SD", "2.5 %tile", "97.5 %tile", "Geweke");
        for s in &self.summaries {
            let z = self
                .geweke(&s.name)
                .and_then(|g| g.z.iter().copied().map(f64::abs).reduce(f64::max))
                .map_or("-".to_string(), |z| format!("{z:.2}"));
            let p = &s.summary;
            let _ = writeln!(
                out,
                "{:<10} {:>14.6} {:>12.6} {:>14.6} {:>14.6} {:>9}",
                s.name, p.mean, p.sd, p.q025, p.q975, z
            );
        }
        for inc in &self.inclusion_probs {
            let _ = writeln!(
                out,
                "{:<10} inclusion probability {:.3} ({})",
                inc.name,
                inc.inclusion.probability,
                if inc.inclusion.included { "in" } else { "out" }
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn waic_two_draws() {
        let m = [0.5f64.ln(), 0.25f64.ln()];
        let w = waic(&m, 2, 1).unwrap();
        assert!((w.lppd - (-0.980_829_253_011_726_2)).abs() < 1e-12);
        assert!((w.p_waic - 0.240_226_506_959_100_7).abs() < 1e-12);
        assert!((w.waic - 2.442_111_519_941_653_9).abs() < 1e-12);
    }

    #[test]
    fn waic_constant_draws() {
        let m = [-1.0, -2.0, -1.0, -2.0, -1.0, -2.0];
        let w = waic(&m, 3, 2).unwrap();
        assert_eq!(w.p_waic, 0.0);
        assert!((w.waic - 6.0).abs() < 1e-12);
        assert!(matches!(waic(&m[..2], 1, 2), Err(Error::TooFewDraws { .. })));
    }

    #[test]
    fn waic_shift() {
        let m = [-1.0, -2.5, -0.3, -1.7, -0.9, -2.2];
        let shifted: Vec<f64> = m.iter().map(|x| x + 3.0).collect();
        let a = waic(&m, 3, 2).unwrap();
        let b = waic(&shifted, 3, 2).unwrap();
        assert!((b.lppd - a.lppd - 6.0).abs() < 1e-12);
        assert!((b.p_waic - a.p_waic).abs() < 1e-12);
    }

    #[test]
    fn deviance() {
        assert_eq!(mean_deviance(&[-60.0, -40.0], 1, 2).unwrap(), 200.0);
        assert_eq!(mean_deviance(&[-100.0, -110.0], 2, 1).unwrap(), 210.0);
        assert_eq!(mean_deviance(&[-100.0, 0.0, -110.0, 0.0], 2, 2).unwrap(), 210.0);
    }

    #[test]
    fn geweke_constant_and_trend() {
        let g = geweke(&[4.2; 500], 0.1, 0.5).unwrap();
        assert!(g.degenerate && g.z == 0.0);
        let n = 10_000;
        let trend: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        assert!(geweke(&trend, 0.1, 0.5).unwrap().z.abs() > 10.0);
        assert!(matches!(geweke(&[0.0; 99], 0.1, 0.5), Err(Error::ChainTooShort(99))));
    }

    #[test]
    fn inclusion() {
        assert_eq!(inclusion_probability(&[true; 4]).unwrap(), Inclusion { probability: 1.0, included: true });
        let alt: Vec<bool> = (0..10).map(|i| i % 2 == 0).collect();
        assert_eq!(inclusion_probability(&alt).unwrap(), Inclusion { probability: 0.5, included: true });
        let low: Vec<bool> = (0..10).map(|i| i < 3).collect();
        assert!(!inclusion_probability(&low).unwrap().included);
    }

    #[test]
    fn summary_quantiles() {
        let s = posterior_summary(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(s.mean, 3.0);
        assert!((s.q025 - 1.1).abs() < 1e-12);
        assert!((s.q975 - 4.9).abs() < 1e-12);
        let c = posterior_summary(&[2.5; 7]).unwrap();
        assert_eq!((c.mean, c.sd, c.q025, c.q975), (2.5, 0.0, 2.5, 2.5));
        assert!(posterior_summary(&[1.0]).is_err());
    }
}
