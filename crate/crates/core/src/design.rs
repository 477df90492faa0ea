//! Modeled cells and cached covariates for one preset on one data bundle.
//!
//! A cell is an (area, day) pair with `day >= 1` and positive susceptibles.
//! Cells are stored area-major so each area owns a contiguous range.

use std::ops::Range;

use statrs::function::gamma::ln_gamma;

use crate::error::Result;
use crate::graph::AdjacencyGraph;
use crate::model::{DataBundle, ModelPreset, PredictorMode, UhMode};
use crate::state::{ParameterState, StateLayout};

/// A regression coefficient other than the intercept.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coef {
    SelfLag,
    NeighborLag,
    Predictor(usize),
    Mobility(usize),
}

impl Coef {
    pub fn get(self, s: &ParameterState) -> f64 {
        match self {
            Coef::SelfLag => s.alpha[1],
            Coef::NeighborLag => s.alpha[2],
            Coef::Predictor(k) => s.theta[k],
            Coef::Mobility(p) => s.eta[p],
        }
    }

    pub fn set(self, s: &mut ParameterState, value: f64) {
        match self {
            Coef::SelfLag => s.alpha[1] = value,
            Coef::NeighborLag => s.alpha[2] = value,
            Coef::Predictor(k) => s.theta[k] = value,
            Coef::Mobility(p) => s.eta[p] = value,
        }
    }

    pub fn label(self) -> String {
        match self {
            Coef::SelfLag => "alpha1".into(),
            Coef::NeighborLag => "alpha2".into(),
            Coef::Predictor(k) => format!("theta{}", k + 1),
            Coef::Mobility(p) => format!("eta_{}", p + 1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cell {
    pub area: usize,
    pub day: usize,
}

#[derive(Debug, Clone)]
pub struct ModelData {
    pub preset: ModelPreset,
    pub layout: StateLayout,
    pub graph: AdjacencyGraph,
    pub n_areas: usize,
    pub n_days: usize,
    pub cells: Vec<Cell>,
    pub area_ranges: Vec<Range<usize>>,
    /// Cell indices per modeled day, offset `day - 1`.
    pub day_cells: Vec<Vec<usize>>,
    /// Cell for each space-time effect slot, if that slot is modeled.
    pub slot_cell: Vec<Option<usize>>,
    pub log_s: Vec<f64>,
    /// Poisson: the count. Log-normal: `log(y3D + 1)`.
    pub response: Vec<f64>,
    /// `ln(y!)` for the Poisson model, zero otherwise.
    pub log_factorial: Vec<f64>,
    pub coefs: Vec<Coef>,
    /// Covariate value of each coefficient at each cell.
    pub features: Vec<Vec<f64>>,
    /// Standardized predictors per area.
    pub predictors: Vec<Vec<f64>>,
    /// Cells excluded because susceptibles were depleted.
    pub dropped: Vec<Cell>,
}

impl ModelData {
    pub fn new(preset: &ModelPreset, data: &DataBundle) -> Result<Self> {
        preset.check_data(data)?;
        let spec = &preset.spec;
        let n_areas = data.n_areas();
        let n_days = data.n_days();
        let modeled_days = n_days.saturating_sub(1);
        let lag = data.lag_series(preset.data_model);
        let lognormal = preset.data_model.is_lognormal();
        let predictors: Vec<Vec<f64>> = match (&data.predictors, spec.predictor_mode) {
            (Some(t), m) if m != PredictorMode::None => t.standardized.clone(),
            _ => vec![Vec::new(); n_areas],
        };
        let n_predictors = predictors.first().map_or(0, Vec::len);
        let n_periods = data.mobility.as_ref().map_or(0, |m| m.n_periods());
        let layout = StateLayout::new(preset, data.graph.area_ids(), n_days, n_predictors, n_periods);

        let mut coefs = Vec::new();
        if spec.include_self_lag {
            coefs.push(Coef::SelfLag);
        }
        if spec.include_neighbor_lag {
            coefs.push(Coef::NeighborLag);
        }
        coefs.extend((0..layout.n_predictors).map(Coef::Predictor));
        coefs.extend((0..layout.n_periods).map(Coef::Mobility));

        let mut cells = Vec::new();
        let mut dropped = Vec::new();
        let mut area_ranges = Vec::with_capacity(n_areas);
        let mut day_cells = vec![Vec::new(); modeled_days];
        let mut slot_cell = vec![None; if spec.uh_mode.is_spacetime() { n_areas * modeled_days } else { 0 }];
        let mut log_s = Vec::new();
        let mut response = Vec::new();
        let mut log_factorial = Vec::new();
        let mut features = vec![Vec::new(); coefs.len()];

        for i in 0..n_areas {
            let start = cells.len();
            for j in 1..n_days {
                let s = data.susceptible.s[i][j];
                if s <= 0.0 {
                    log::warn!("area {} day {j}: susceptibles depleted, cell dropped", data.graph.area_ids()[i]);
                    dropped.push(Cell { area: i, day: j });
                    continue;
                }
                let c = cells.len();
                cells.push(Cell { area: i, day: j });
                day_cells[j - 1].push(c);
                if !slot_cell.is_empty() {
                    slot_cell[i * modeled_days + j - 1] = Some(c);
                }
                log_s.push(s.ln());
                if lognormal {
                    response.push((lag[i][j] + 1.0).ln());
                    log_factorial.push(0.0);
                } else {
                    let y = data.daily_counts()[i][j];
                    response.push(y);
                    log_factorial.push(ln_gamma(y + 1.0));
                }
                for (coef, f) in coefs.iter().zip(features.iter_mut()) {
                    let x = match *coef {
                        Coef::SelfLag => (lag[i][j - 1] + 1.0).ln(),
                        Coef::NeighborLag => {
                            let sum: f64 = data.graph.neighbors(i).iter().map(|&k| lag[k][j - 1]).sum();
                            (sum + 1.0).ln()
                        }
                        Coef::Predictor(k) => predictors[i][k],
                        Coef::Mobility(p) => {
                            let m = data.mobility.as_ref().expect("checked by preset");
                            if m.period_index[j] == p + 1 {
                                m.work[i][j]
                            } else {
                                0.0
                            }
                        }
                    };
                    f.push(x);
                }
            }
            area_ranges.push(start..cells.len());
        }

        Ok(Self {
            preset: preset.clone(),
            layout,
            graph: data.graph.clone(),
            n_areas,
            n_days,
            cells,
            area_ranges,
            day_cells,
            slot_cell,
            log_s,
            response,
            log_factorial,
            coefs,
            features,
            predictors,
            dropped,
        })
    }

    /// The same data under a different predictor treatment (used for GVS pilots).
    pub fn with_predictor_mode(&self, mode: PredictorMode) -> Self {
        let mut out = self.clone();
        out.preset = self.preset.with_predictor_mode(mode);
        let n_pred = self.predictors.first().map_or(0, Vec::len);
        out.layout = StateLayout::new(
            &out.preset,
            self.graph.area_ids(),
            self.n_days,
            n_pred,
            self.layout.n_periods,
        );
        out
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn is_lognormal(&self) -> bool {
        self.preset.data_model.is_lognormal()
    }

    /// Index into `v` for a space-time slot.
    pub fn slot(&self, area: usize, day: usize) -> usize {
        area * (self.n_days - 1) + day - 1
    }

    /// Observation precision applying to cell `c` (log-normal only).
    pub fn obs_precision(&self, state: &ParameterState, c: usize) -> f64 {
        if state.tau_y.len() == 1 {
            state.tau_y[0]
        } else {
            state.tau_y[self.cells[c].day - 1]
        }
    }

    /// Log-mean of every modeled cell, evaluated from the cached covariates.
    pub fn linear_predictor(&self, state: &ParameterState) -> Vec<f64> {
        let spec = &self.preset.spec;
        let mut eta: Vec<f64> = self.log_s.iter().map(|ls| ls + state.alpha[0]).collect();
        for (coef, f) in self.coefs.iter().zip(&self.features) {
            let b = match *coef {
                Coef::Predictor(k) => state.beta(k, spec.predictor_mode),
                other => other.get(state),
            };
            if b != 0.0 {
                eta.iter_mut().zip(f).for_each(|(e, x)| *e += b * x);
            }
        }
        for (i, range) in self.area_ranges.iter().enumerate() {
            let mut area_term = 0.0;
            if spec.uh_mode == UhMode::Spatial {
                area_term += state.v[i];
            }
            if spec.icar {
                area_term += state.u[i];
            }
            for c in range.clone() {
                eta[c] += area_term;
                if spec.uh_mode.is_spacetime() {
                    eta[c] += state.v[self.slot(i, self.cells[c].day)];
                }
            }
        }
        eta
    }
}
