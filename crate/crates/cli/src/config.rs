//! Run configuration files.
//!
//! Relative paths inside a config resolve against the config file's directory.
//! Everything is checked before any data is read or sampled.

use std::fs;
use std::path::{Path, PathBuf};

use areal_sir::data::asymptomatic_lambda;
use areal_sir::inference::{PriorConfig, SamplerControls};
use areal_sir::model::{PredictorMode, UhMode};
use areal_sir::{catalog, ModelPreset};
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::output::resolve;

fn default_rate() -> f64 {
    20.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataFiles {
    pub cases: PathBuf,
    pub population: PathBuf,
    pub adjacency: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predictors: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mobility: Option<PathBuf>,
    /// First and last panel dates; default to the span of the cases file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<NaiveDate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end: Option<NaiveDate>,
    #[serde(default = "default_rate")]
    pub asymptomatic_rate_percent: f64,
    /// Change-point segment lengths for the mobility term.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub changepoints: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub chains: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        let c = SamplerControls::default();
        Self { n_iter: c.n_iter, burn_in: c.burn_in, thin: c.thin, chains: c.n_chains, seed: c.seed }
    }
}

impl SamplerConfig {
    pub fn controls(&self) -> SamplerControls {
        SamplerControls {
            n_iter: self.n_iter,
            burn_in: self.burn_in,
            thin: self.thin,
            seed: self.seed,
            n_chains: self.chains,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub model: String,
    /// Optional cross-check: `poisson_daily` or `lognormal_3d`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_model: Option<String>,
    pub data: DataFiles,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub priors: PriorConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub preset: Option<String>,
}

pub fn data_model_name(preset: &ModelPreset) -> &'static str {
    if preset.data_model.is_lognormal() {
        "lognormal_3d"
    } else {
        "poisson_daily"
    }
}

fn read_json(path: &Path) -> CliResult<serde_json::Value> {
    let text = fs::read_to_string(path).map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

/// Parses a config file, or the `config` section of a run manifest.
fn config_section<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let value = read_json(path)?;
    let value = match value.get("config") {
        Some(inner) if value.get("command").is_some() => inner.clone(),
        _ => value,
    };
    serde_json::from_value(value).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().filter(|d| !d.as_os_str().is_empty()).map_or_else(|| PathBuf::from("."), Path::to_path_buf)
}

fn absolute(p: &Path) -> CliResult<PathBuf> {
    std::path::absolute(p)
        .map(|a| path_clean::clean(a))
        .map_err(|e| CliError::config(format!("{}: {e}", p.display())))
}

fn existing(p: &Path, what: &str) -> CliResult<()> {
    if p.is_file() {
        Ok(())
    } else {
        Err(CliError::config(format!("{what} file {} does not exist", p.display())))
    }
}

impl FitConfig {
    /// Reads a fit config, or the `config` section of a run manifest.
    pub fn load(path: &Path, overrides: &Overrides) -> CliResult<Self> {
        let mut cfg: FitConfig = config_section(path)?;
        cfg.resolve_paths(&base_dir(path))?;
        if let Some(seed) = overrides.seed {
            cfg.sampler.seed = seed;
        }
        if let Some(out) = &overrides.out {
            cfg.out = Some(absolute(out)?);
        }
        if let Some(p) = &overrides.preset {
            cfg.model = p.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) -> CliResult<()> {
        self.map_paths(|p| absolute(&resolve(base, p)))
    }

    /// Applies `f` to every path in the config.
    pub fn map_paths<F: FnMut(&Path) -> CliResult<PathBuf>>(&mut self, mut f: F) -> CliResult<()> {
        let d = &mut self.data;
        for p in [&mut d.cases, &mut d.population, &mut d.adjacency] {
            *p = f(p)?;
        }
        for p in [&mut d.predictors, &mut d.mobility, &mut self.out].into_iter().flatten() {
            *p = f(p)?;
        }
        Ok(())
    }

    pub fn preset(&self) -> CliResult<ModelPreset> {
        catalog(&self.model).map_err(|e| CliError::config(e.to_string()))
    }

    pub fn out_dir(&self) -> CliResult<&Path> {
        self.out.as_deref().ok_or_else(|| CliError::config("no output directory: set `out` or pass --out"))
    }

    pub fn validate(&self) -> CliResult<()> {
        let preset = self.preset()?;
        if let Some(dm) = &self.data_model {
            if dm != data_model_name(&preset) {
                return Err(CliError::config(format!(
                    "data_model `{dm}` does not match preset {} ({})",
                    preset.name,
                    data_model_name(&preset)
                )));
            }
        }
        let d = &self.data;
        existing(&d.cases, "cases")?;
        existing(&d.population, "population")?;
        existing(&d.adjacency, "adjacency")?;
        if let Some(p) = &d.predictors {
            existing(p, "predictors")?;
        }
        if let Some(p) = &d.mobility {
            existing(p, "mobility")?;
        }
        if preset.spec.predictor_mode != PredictorMode::None && d.predictors.is_none() {
            return Err(CliError::config(format!("preset {} needs a predictors file", preset.name)));
        }
        if preset.spec.mobility {
            if d.mobility.is_none() {
                return Err(CliError::config(format!("preset {} needs a mobility file", preset.name)));
            }
            if d.changepoints.is_empty() || d.changepoints.contains(&0) {
                return Err(CliError::config("mobility models need positive change-point lengths"));
            }
        }
        if let (Some(s), Some(e)) = (d.start, d.end) {
            if e < s {
                return Err(CliError::config("end date precedes start date"));
            }
        }
        asymptomatic_lambda(d.asymptomatic_rate_percent).map_err(|e| CliError::config(e.to_string()))?;
        self.sampler.controls().validate().map_err(|e| CliError::config(e.to_string()))?;
        self.priors.validate().map_err(|e| CliError::config(e.to_string()))?;
        if let Some(pp) = &self.priors.pseudo_priors {
            if preset.spec.predictor_mode == PredictorMode::Gvs && pp.len() != 3 {
                return Err(CliError::config("pseudo_priors needs one entry per predictor"));
            }
        }
        self.out_dir()?;
        Ok(())
    }
}

/// A scalar or a list, for values that may be given once or per element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    /// Expands to `n` values; a single value is repeated.
    pub fn expand(&self, n: usize, what: &str) -> CliResult<Vec<T>> {
        match self {
            OneOrMany::One(v) => Ok(vec![v.clone(); n]),
            OneOrMany::Many(v) if v.len() == n => Ok(v.clone()),
            OneOrMany::Many(v) => Err(CliError::config(format!("{what} needs {n} values, got {}", v.len()))),
        }
    }
}

/// Known parameter values for simulation. Random effects left out are drawn
/// from their priors given the precisions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthConfig {
    pub alpha: [f64; 3],
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub theta: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub gamma: Vec<bool>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub eta: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_v: Option<OneOrMany<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_u: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_y: Option<OneOrMany<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub v: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub u: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub model: String,
    pub adjacency: PathBuf,
    pub population: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predictors: Option<PathBuf>,
    /// Work-index file covering the simulated dates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mobility: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub changepoints: Vec<usize>,
    pub start: NaiveDate,
    pub n_days: usize,
    #[serde(default = "default_rate")]
    pub asymptomatic_rate_percent: f64,
    #[serde(default)]
    pub death_rate: f64,
    #[serde(default)]
    pub death_lag: usize,
    pub seed_cases: OneOrMany<u64>,
    pub truth: TruthConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

impl SimConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> CliResult<Self> {
        let mut cfg: SimConfig = config_section(path)?;
        cfg.map_paths(|p| absolute(&resolve(&base_dir(path), p)))?;
        if let Some(seed) = overrides.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &overrides.out {
            cfg.out = Some(absolute(out)?);
        }
        if let Some(p) = &overrides.preset {
            cfg.model = p.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn map_paths<F: FnMut(&Path) -> CliResult<PathBuf>>(&mut self, mut f: F) -> CliResult<()> {
        for p in [&mut self.adjacency, &mut self.population] {
            *p = f(p)?;
        }
        for p in [&mut self.predictors, &mut self.mobility, &mut self.out].into_iter().flatten() {
            *p = f(p)?;
        }
        Ok(())
    }

    pub fn preset(&self) -> CliResult<ModelPreset> {
        catalog(&self.model).map_err(|e| CliError::config(e.to_string()))
    }

    pub fn out_dir(&self) -> CliResult<&Path> {
        self.out.as_deref().ok_or_else(|| CliError::config("no output directory: set `out` or pass --out"))
    }

    pub fn validate(&self) -> CliResult<()> {
        let preset = self.preset()?;
        existing(&self.adjacency, "adjacency")?;
        existing(&self.population, "population")?;
        if let Some(p) = &self.predictors {
            existing(p, "predictors")?;
        }
        if let Some(p) = &self.mobility {
            existing(p, "mobility")?;
        }
        if self.n_days < 3 {
            return Err(CliError::config("n_days must be at least 3"));
        }
        let spec = &preset.spec;
        if spec.predictor_mode != PredictorMode::None {
            if self.predictors.is_none() {
                return Err(CliError::config(format!("preset {} needs a predictors file", preset.name)));
            }
            if self.truth.theta.len() != 3 {
                return Err(CliError::config("truth.theta needs one value per predictor"));
            }
        }
        if spec.predictor_mode == PredictorMode::Gvs && !self.truth.gamma.is_empty() && self.truth.gamma.len() != 3 {
            return Err(CliError::config("truth.gamma needs one value per predictor"));
        }
        if spec.mobility {
            if self.mobility.is_none() {
                return Err(CliError::config(format!("preset {} needs a mobility file", preset.name)));
            }
            if self.changepoints.iter().sum::<usize>() != self.n_days || self.changepoints.contains(&0) {
                return Err(CliError::config("change-point lengths must be positive and sum to n_days"));
            }
            if self.truth.eta.len() != self.changepoints.len() {
                return Err(CliError::config("truth.eta needs one value per change-point period"));
            }
        }
        if spec.uh_mode != UhMode::None && self.truth.v.is_empty() && self.truth.tau_v.is_none() {
            return Err(CliError::config("give truth.v or truth.tau_v"));
        }
        if spec.icar && self.truth.u.is_empty() && self.truth.tau_u.is_none() {
            return Err(CliError::config("give truth.u or truth.tau_u"));
        }
        if preset.data_model.is_lognormal() && self.truth.tau_y.is_none() {
            return Err(CliError::config("log-normal presets need truth.tau_y"));
        }
        if !(0.0..=1.0).contains(&self.death_rate) {
            return Err(CliError::config("death_rate must lie in [0, 1]"));
        }
        asymptomatic_lambda(self.asymptomatic_rate_percent).map_err(|e| CliError::config(e.to_string()))?;
        self.out_dir()?;
        Ok(())
    }
}
