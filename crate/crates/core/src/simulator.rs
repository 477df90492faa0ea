//! Forward simulation of case panels from a model preset and known parameters.

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Normal, Poisson, StandardNormal};

use crate::data::{CaseSeriesPanel, MobilityPanel, PredictorTable};
use crate::error::{Error, Result};
use crate::graph::AdjacencyGraph;
use crate::model::{log_mean, DataBundle, ModelPreset};
use crate::state::{ParameterState, StateLayout};

/// Everything needed to generate a panel. Random effects left empty in
/// `truth` (`v`, `u`, `gamma`) are drawn once from their priors.
#[derive(Debug, Clone)]
pub struct SimScenario {
    pub graph: AdjacencyGraph,
    pub start_date: NaiveDate,
    pub n_days: usize,
    pub population: Vec<u64>,
    pub preset: ModelPreset,
    pub truth: ParameterState,
    /// Day-0 case counts per area.
    pub seed_cases: Vec<u64>,
    pub lambda: f64,
    /// Probability that a case is removed as a death `death_lag` days later.
    pub death_rate: f64,
    pub death_lag: usize,
    pub predictors: Option<PredictorTable>,
    pub mobility: Option<MobilityPanel>,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub data: DataBundle,
    /// The parameters actually used, including any drawn random effects.
    pub truth: ParameterState,
    /// Every area ran out of susceptibles before the midpoint of the series.
    pub depleted_everywhere: bool,
}

impl SimScenario {
    fn validate(&self) -> Result<()> {
        let n = self.graph.n_areas();
        let bad = |m: &str| Err(Error::InvalidScenario(m.into()));
        if self.n_days < 3 {
            return Err(Error::TooShortSeries(self.n_days));
        }
        if self.population.len() != n || self.seed_cases.len() != n {
            return bad("population and seed cases need one entry per area");
        }
        if self.seed_cases.iter().zip(&self.population).any(|(s, p)| s > p) {
            return bad("seed cases exceed population");
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::NegativeLambda(self.lambda));
        }
        if !(0.0..=1.0).contains(&self.death_rate) {
            return bad("death rate must lie in [0, 1]");
        }
        if self.preset.spec.predictor_mode != crate::model::PredictorMode::None && self.predictors.is_none() {
            return bad("preset uses predictors but none were supplied");
        }
        if self.preset.spec.mobility && self.mobility.is_none() {
            return bad("preset uses mobility but none was supplied");
        }
        Ok(())
    }
}

/// Draws one vector from the intrinsic CAR prior with precision `tau`. The
/// draw lies in the space orthogonal to each connected component's constant
/// vector, so it sums to zero within every component.
pub fn sample_icar<R: Rng + ?Sized>(graph: &AdjacencyGraph, tau: f64, rng: &mut R) -> Vec<f64> {
    let n = graph.n_areas();
    let mut q = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        q[(i, i)] = graph.n_neighbors(i) as f64;
        for &k in graph.neighbors(i) {
            q[(i, k)] = -1.0;
        }
    }
    let eig = SymmetricEigen::new(q);
    let max = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let mut u = DVector::<f64>::zeros(n);
    for (m, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam > 1e-9 * max {
            let z: f64 = rng.sample(StandardNormal);
            u += eig.eigenvectors.column(m) * (z / (tau * lam).sqrt());
        }
    }
    u.iter().copied().collect()
}

fn complete_truth<R: Rng + ?Sized>(sc: &SimScenario, layout: &StateLayout, rng: &mut R) -> Result<ParameterState> {
    let mut truth = sc.truth.clone();
    if layout.gvs && truth.gamma.is_empty() {
        truth.gamma = vec![true; layout.n_predictors];
    }
    if layout.n_v > 0 && truth.v.is_empty() {
        if truth.tau_v.len() != layout.n_tau_v {
            return Err(Error::InvalidScenario("tau_v is needed to draw v".into()));
        }
        let per_area = layout.n_v / layout.n_areas;
        truth.v = (0..layout.n_v)
            .map(|idx| {
                let tau = if truth.tau_v.len() == 1 { truth.tau_v[0] } else { truth.tau_v[idx % per_area] };
                rng.sample::<f64, _>(StandardNormal) / tau.sqrt()
            })
            .collect();
    }
    if layout.icar && truth.u.is_empty() {
        let tau = truth.tau_u.ok_or_else(|| Error::InvalidScenario("tau_u is needed to draw u".into()))?;
        truth.u = sample_icar(&sc.graph, tau, rng);
    }
    truth.check_shape(layout)?;
    Ok(truth)
}

pub fn simulate(sc: &SimScenario, seed: u64) -> Result<Simulation> {
    sc.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = sc.graph.n_areas();
    let n_days = sc.n_days;
    let panel = CaseSeriesPanel {
        area_ids: sc.graph.area_ids().to_vec(),
        dates: (0..n_days).map(|d| sc.start_date + chrono::Days::new(d as u64)).collect(),
        cases: vec![vec![0; n_days]; n],
        deaths: vec![vec![0; n_days]; n],
        population: sc.population.clone(),
        clamped: 0,
    };
    let mut data = DataBundle::new(sc.graph.clone(), panel, sc.lambda)?;
    if let Some(p) = &sc.predictors {
        data = data.with_predictors(p.clone())?;
    }
    if let Some(m) = &sc.mobility {
        data = data.with_mobility(m.clone())?;
    }
    let n_pred = sc.predictors.as_ref().map_or(0, PredictorTable::n_predictors);
    let n_periods = sc.mobility.as_ref().map_or(0, MobilityPanel::n_periods);
    let layout = StateLayout::new(&sc.preset, sc.graph.area_ids(), n_days, n_pred, n_periods);
    let truth = complete_truth(sc, &layout, &mut rng)?;
    let lognormal = sc.preset.data_model.is_lognormal();

    data.record_day(0, &sc.seed_cases, &vec![0; n]);
    let mut cases = vec![0u64; n];
    let mut deaths = vec![0u64; n];
    let mut depleted_everywhere = false;
    for j in 1..n_days {
        for i in 0..n {
            let s = data.susceptible.s[i][j];
            cases[i] = if s <= 0.0 {
                0
            } else {
                let log_mu = log_mean(&sc.preset, &truth, &data, i, j)?;
                let mu = log_mu.exp();
                if !mu.is_finite() || mu > 10.0 * s {
                    return Err(Error::ExplosiveTrajectory { area: i, day: j });
                }
                if lognormal {
                    let tau = if truth.tau_y.len() == 1 { truth.tau_y[0] } else { truth.tau_y[j - 1] };
                    let ystar = Normal::new(log_mu, 1.0 / tau.sqrt())
                        .map_err(|e| Error::InvalidScenario(e.to_string()))?
                        .sample(&mut rng);
                    // Choose today's count so the trailing average matches the draw.
                    let y3d = (ystar.exp() - 1.0).max(0.0);
                    let lo = j.saturating_sub(2);
                    let earlier: f64 = data.daily_counts()[i][lo..j].iter().sum();
                    ((j - lo + 1) as f64 * y3d - earlier).round().max(0.0) as u64
                } else if mu > 0.0 {
                    Poisson::new(mu).map_err(|e| Error::InvalidScenario(e.to_string()))?.sample(&mut rng) as u64
                } else {
                    0
                }
            };
            deaths[i] = if sc.death_rate > 0.0 && j >= sc.death_lag {
                let source = if sc.death_lag == 0 { cases[i] } else { data.panel.cases[i][j - sc.death_lag] };
                Binomial::new(source, sc.death_rate)
                    .map_err(|e| Error::InvalidScenario(e.to_string()))?
                    .sample(&mut rng)
            } else {
                0
            };
        }
        data.record_day(j, &cases, &deaths);
        if j == n_days / 2 && (0..n).all(|i| data.susceptible.s[i][j] <= 0.0) {
            log::warn!("every area exhausted its susceptibles by day {j}");
            depleted_everywhere = true;
        }
    }
    Ok(Simulation { data, truth, depleted_everywhere })
}
