//! Model catalog and log-mean evaluation.
//!
//! Every model shares the form `log μ_ij = log S_ij + p_{i,j-1}` where the
//! propagator `p` is a sum of optional terms. [`PropagatorSpec`] records which
//! terms are present; [`catalog`] maps preset names to specs.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::{
    susceptible_step, susceptible_trajectory, three_day_average, CaseSeriesPanel, MobilityPanel, PredictorTable, SmoothedPanel,
    SusceptibleTrajectory,
};
use crate::error::{Error, Result};
use crate::graph::AdjacencyGraph;
use crate::state::ParameterState;

/// Uncorrelated heterogeneity term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UhMode {
    None,
    /// One effect per area with a common precision.
    Spatial,
    /// One effect per area and day with a common precision.
    Spacetime,
    /// One effect per area and day with a per-day precision.
    SpacetimeTvprec,
}

impl UhMode {
    pub fn is_spacetime(self) -> bool {
        matches!(self, UhMode::Spacetime | UhMode::SpacetimeTvprec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorMode {
    None,
    Fixed,
    Gvs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropagatorSpec {
    pub include_self_lag: bool,
    pub include_neighbor_lag: bool,
    pub uh_mode: UhMode,
    pub icar: bool,
    pub predictor_mode: PredictorMode,
    pub mobility: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataModel {
    PoissonDaily,
    Lognormal3d,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataModelKind {
    pub kind: DataModel,
    /// Per-day observation precision (log-normal only).
    pub tv_obs_precision: bool,
}

impl DataModelKind {
    pub const POISSON: Self = Self { kind: DataModel::PoissonDaily, tv_obs_precision: false };
    pub const LOGNORMAL: Self = Self { kind: DataModel::Lognormal3d, tv_obs_precision: false };

    pub fn is_lognormal(self) -> bool {
        self.kind == DataModel::Lognormal3d
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelPreset {
    pub name: String,
    pub spec: PropagatorSpec,
    pub data_model: DataModelKind,
}

impl ModelPreset {
    pub fn new(name: impl Into<String>, spec: PropagatorSpec, data_model: DataModelKind) -> Result<Self> {
        let preset = Self { name: name.into(), spec, data_model };
        preset.validate()?;
        Ok(preset)
    }

    fn validate(&self) -> Result<()> {
        if self.data_model.tv_obs_precision && !self.data_model.is_lognormal() {
            return Err(Error::InvalidSpec("time-varying observation precision requires the log-normal data model".into()));
        }
        Ok(())
    }

    /// Checks that the bundle carries what the spec needs.
    pub fn check_data(&self, data: &DataBundle) -> Result<()> {
        if self.spec.predictor_mode != PredictorMode::None && data.predictors.is_none() {
            return Err(Error::InvalidSpec(format!("preset `{}` requires a predictor table", self.name)));
        }
        if self.spec.mobility && data.mobility.is_none() {
            return Err(Error::InvalidSpec(format!("preset `{}` requires a mobility panel", self.name)));
        }
        if self.data_model.is_lognormal() && data.smoothed.is_none() {
            return Err(Error::InvalidSpec(format!("preset `{}` requires at least 3 days of data", self.name)));
        }
        Ok(())
    }

    /// The same preset with a different predictor treatment.
    pub fn with_predictor_mode(&self, mode: PredictorMode) -> Self {
        let mut p = self.clone();
        p.spec.predictor_mode = mode;
        p
    }
}

impl fmt::Display for ModelPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name)
    }
}

const DAILY: [&str; 12] = ["1", "2A", "2B", "3A", "3B", "4A", "4B", "4C", "5A", "5B", "6A", "6B"];
const SMOOTHED: [&str; 6] = ["3D-1", "3D-2", "3D-3", "3D-4", "3D-5", "3D-6"];
const MOBILITY: [&str; 3] = ["mobility-1", "mobility-2", "mobility-3"];

/// Canonical preset names in catalog order.
pub fn catalog_names() -> Vec<&'static str> {
    DAILY.iter().chain(&SMOOTHED).chain(&MOBILITY).copied().collect()
}

fn canonical(name: &str) -> Option<String> {
    let upper = name.trim().to_ascii_uppercase();
    let stripped = ["SC-", "NJ-", "DAILY-"]
        .iter()
        .find_map(|p| upper.strip_prefix(p))
        .unwrap_or(&upper);
    if DAILY.contains(&stripped) {
        return Some(stripped.to_string());
    }
    let rest = stripped.strip_prefix("3D-").or_else(|| stripped.strip_prefix("3D"))?;
    let candidate = format!("3D-{}", rest.trim_start_matches('-'));
    if SMOOTHED.contains(&candidate.as_str()) {
        return Some(candidate);
    }
    None
}

fn canonical_any(name: &str) -> Option<String> {
    let lower = name.trim().to_ascii_lowercase();
    for prefix in ["mobility-", "sc-mobility-", "nj-mobility-"] {
        if let Some(rest) = lower.strip_prefix(prefix) {
            let c = format!("mobility-{rest}");
            if MOBILITY.contains(&c.as_str()) {
                return Some(c);
            }
        }
    }
    canonical(name)
}

/// Looks up a preset by name. Accepts `SC-`/`NJ-` prefixes on the daily models.
pub fn catalog(name: &str) -> Result<ModelPreset> {
    use PredictorMode as P;
    use UhMode as U;
    let key = canonical_any(name).ok_or_else(|| Error::UnknownPreset(name.to_string()))?;
    let spec = |nb: bool, uh: UhMode, icar: bool, pred: PredictorMode, mob: bool| PropagatorSpec {
        include_self_lag: true,
        include_neighbor_lag: nb,
        uh_mode: uh,
        icar,
        predictor_mode: pred,
        mobility: mob,
    };
    let lognormal_tv = DataModelKind { kind: DataModel::Lognormal3d, tv_obs_precision: true };
    let (s, dm) = match key.as_str() {
        "1" => (spec(false, U::Spatial, true, P::None, false), DataModelKind::POISSON),
        "2A" => (spec(false, U::Spatial, false, P::None, false), DataModelKind::POISSON),
        "2B" => (spec(false, U::Spatial, false, P::Fixed, false), DataModelKind::POISSON),
        "3A" => (spec(false, U::Spatial, false, P::Gvs, false), DataModelKind::POISSON),
        "3B" => (spec(false, U::Spatial, true, P::Gvs, false), DataModelKind::POISSON),
        "4A" => (spec(true, U::Spatial, true, P::Gvs, false), DataModelKind::POISSON),
        "4B" => (spec(true, U::Spatial, false, P::Gvs, false), DataModelKind::POISSON),
        "4C" => (spec(true, U::Spatial, false, P::None, false), DataModelKind::POISSON),
        "5A" => (spec(true, U::Spatial, false, P::Fixed, false), DataModelKind::POISSON),
        "5B" => (spec(true, U::Spatial, true, P::Fixed, false), DataModelKind::POISSON),
        "6A" => (spec(true, U::Spacetime, true, P::Fixed, false), DataModelKind::POISSON),
        "6B" => (spec(true, U::SpacetimeTvprec, true, P::Fixed, false), DataModelKind::POISSON),
        "3D-1" => (spec(false, U::None, true, P::None, false), DataModelKind::LOGNORMAL),
        "3D-2" => (spec(false, U::Spatial, true, P::None, false), DataModelKind::LOGNORMAL),
        "3D-3" => (spec(false, U::Spacetime, true, P::None, false), DataModelKind::LOGNORMAL),
        "3D-4" => (spec(false, U::Spatial, true, P::None, false), lognormal_tv),
        "3D-5" => (spec(false, U::Spatial, false, P::Fixed, false), DataModelKind::LOGNORMAL),
        "3D-6" => (spec(true, U::Spatial, false, P::Fixed, false), DataModelKind::LOGNORMAL),
        "mobility-1" => (spec(true, U::Spatial, false, P::Fixed, true), DataModelKind::POISSON),
        "mobility-2" => (spec(true, U::Spatial, false, P::Fixed, false), DataModelKind::POISSON),
        "mobility-3" => (spec(false, U::Spatial, false, P::Fixed, true), DataModelKind::POISSON),
        _ => unreachable!("canonical names are exhaustive"),
    };
    ModelPreset::new(key, s, dm)
}

/// Human-readable term table for one preset.
pub fn describe(preset: &ModelPreset) -> String {
    let s = &preset.spec;
    let mut terms = vec!["alpha0".to_string()];
    if s.include_self_lag {
        terms.push("alpha1*log(y[i,j-1]+1)".into());
    }
    if s.include_neighbor_lag {
        terms.push("alpha2*log(sum_nb y[k,j-1]+1)".into());
    }
    match s.uh_mode {
        UhMode::None => {}
        UhMode::Spatial => terms.push("v[i]".into()),
        UhMode::Spacetime => terms.push("v[i,j]".into()),
        UhMode::SpacetimeTvprec => terms.push("v[i,j] (tau_v[j])".into()),
    }
    if s.icar {
        terms.push("u[i] (ICAR)".into());
    }
    match s.predictor_mode {
        PredictorMode::None => {}
        PredictorMode::Fixed => terms.push("x[i]'beta".into()),
        PredictorMode::Gvs => terms.push("x[i]'(gamma*theta) (GVS)".into()),
    }
    if s.mobility {
        terms.push("eta[tch[j]]*w[i,j]".into());
    }
    let dm = match (preset.data_model.kind, preset.data_model.tv_obs_precision) {
        (DataModel::PoissonDaily, _) => "poisson_daily",
        (DataModel::Lognormal3d, false) => "lognormal_3d",
        (DataModel::Lognormal3d, true) => "lognormal_3d (tau_y[j])",
    };
    format!("{:<11} {:<26} {}", preset.name, dm, terms.join(" + "))
}

/// All data a model may condition on, in one consistent area/day ordering.
#[derive(Debug, Clone)]
pub struct DataBundle {
    pub graph: AdjacencyGraph,
    pub panel: CaseSeriesPanel,
    pub susceptible: SusceptibleTrajectory,
    pub smoothed: Option<SmoothedPanel>,
    pub predictors: Option<PredictorTable>,
    pub mobility: Option<MobilityPanel>,
    daily: Vec<Vec<f64>>,
}

impl DataBundle {
    pub fn new(graph: AdjacencyGraph, panel: CaseSeriesPanel, lambda: f64) -> Result<Self> {
        if graph.area_ids() != panel.area_ids.as_slice() {
            return Err(Error::InvalidData("graph and panel area orderings differ".into()));
        }
        panel.validate()?;
        let susceptible = susceptible_trajectory(&panel, lambda)?;
        let smoothed = three_day_average(&panel).ok();
        let daily = panel.cases.iter().map(|r| r.iter().map(|&y| y as f64).collect()).collect();
        Ok(Self { graph, panel, susceptible, smoothed, predictors: None, mobility: None, daily })
    }

    pub fn with_predictors(mut self, predictors: PredictorTable) -> Result<Self> {
        if predictors.raw.len() != self.n_areas() {
            return Err(Error::InvalidData("predictor table does not match area count".into()));
        }
        self.predictors = Some(predictors);
        Ok(self)
    }

    pub fn with_mobility(mut self, mobility: MobilityPanel) -> Result<Self> {
        if mobility.work.len() != self.n_areas() || mobility.period_index.len() != self.n_days() {
            return Err(Error::LengthMismatch { sum: mobility.period_index.len(), expected: self.n_days() });
        }
        self.mobility = Some(mobility);
        Ok(self)
    }

    pub fn n_areas(&self) -> usize {
        self.panel.n_areas()
    }

    pub fn n_days(&self) -> usize {
        self.panel.n_days()
    }

    /// Counts driving the lag terms: daily counts, or 3-day averages for the
    /// log-normal model.
    pub fn lag_series(&self, data_model: DataModelKind) -> &[Vec<f64>] {
        match (data_model.kind, &self.smoothed) {
            (DataModel::Lognormal3d, Some(s)) => &s.values,
            _ => &self.daily,
        }
    }

    pub fn daily_counts(&self) -> &[Vec<f64>] {
        &self.daily
    }

    /// Overwrites day `j` for every area and rolls the derived series forward:
    /// the trailing averages at `j..j+2` and susceptibles from `j + 1` on.
    pub(crate) fn record_day(&mut self, j: usize, cases: &[u64], deaths: &[u64]) {
        let n_days = self.n_days();
        for i in 0..self.n_areas() {
            self.panel.cases[i][j] = cases[i];
            self.panel.deaths[i][j] = deaths[i];
            self.daily[i][j] = cases[i] as f64;
            if let Some(sm) = self.smoothed.as_mut() {
                for t in j..(j + 3).min(n_days) {
                    let lo = t.saturating_sub(2);
                    sm.values[i][t] = self.daily[i][lo..=t].iter().sum::<f64>() / (t - lo + 1) as f64;
                }
            }
            let lambda = self.susceptible.lambda;
            for t in j + 1..n_days {
                let prev = self.susceptible.s[i][t - 1];
                self.susceptible.s[i][t] =
                    susceptible_step(prev, self.daily[i][t - 1], self.panel.deaths[i][t - 1] as f64, lambda);
            }
        }
    }
}

/// Log of the expected count for area `i` on day `j >= 1`.
pub fn log_mean(preset: &ModelPreset, state: &ParameterState, data: &DataBundle, i: usize, j: usize) -> Result<f64> {
    if i >= data.n_areas() {
        return Err(Error::IndexOutOfRange { index: i, len: data.n_areas() });
    }
    if j == 0 || j >= data.n_days() {
        return Err(Error::IndexOutOfRange { index: j, len: data.n_days() });
    }
    let s = data.susceptible.s[i][j];
    if s <= 0.0 {
        return Err(Error::DepletedSusceptibles { area: i, day: j });
    }
    Ok(s.ln() + propagator(preset, state, data, i, j)?)
}

/// The propagator `p_{i,j-1}` alone (everything but `log S`).
pub fn propagator(preset: &ModelPreset, state: &ParameterState, data: &DataBundle, i: usize, j: usize) -> Result<f64> {
    let spec = &preset.spec;
    let lag = data.lag_series(preset.data_model);
    let mut p = state.alpha[0];
    if spec.include_self_lag {
        p += state.alpha[1] * (lag[i][j - 1] + 1.0).ln();
    }
    if spec.include_neighbor_lag {
        let prev: Vec<f64> = lag.iter().map(|row| row[j - 1]).collect();
        p += state.alpha[2] * (data.graph.neighbor_lag_sum(&prev, i)? + 1.0).ln();
    }
    if spec.predictor_mode != PredictorMode::None {
        let x = &data
            .predictors
            .as_ref()
            .ok_or_else(|| Error::InvalidSpec("predictor table missing".into()))?
            .standardized[i];
        p += x.iter().enumerate().map(|(k, xk)| xk * state.beta(k, spec.predictor_mode)).sum::<f64>();
    }
    match spec.uh_mode {
        UhMode::None => {}
        UhMode::Spatial => p += state.v[i],
        UhMode::Spacetime | UhMode::SpacetimeTvprec => p += state.v[i * (data.n_days() - 1) + (j - 1)],
    }
    if spec.icar {
        p += state.u[i];
    }
    if spec.mobility {
        let m = data.mobility.as_ref().ok_or_else(|| Error::InvalidSpec("mobility panel missing".into()))?;
        p += state.eta[m.period_index[j] - 1] * m.work[i][j];
    }
    Ok(p)
}
