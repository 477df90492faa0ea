//! Adaptive Metropolis-within-Gibbs sampler.
//!
//! Coefficients and random effects move by scalar random-walk Metropolis steps
//! whose log step sizes are tuned by Robbins-Monro toward 44% acceptance
//! during burn-in only. Precisions and GVS indicators are Gibbs updates.
//!
//! Several proposals move along fixed linear directions rather than single
//! coordinates: a coefficient step is paired with an offsetting intercept
//! step so the covariate enters centered, and when area-level effects are
//! present a second step also offsets them by the area means of the covariate.
//! Means are weighted by each cell's Fisher information at the current state
//! and are recomputed only during burn-in, so after burn-in the directions are
//! constant and symmetric and the usual Metropolis ratio applies unchanged.
//!
//! The intercept and all regression coefficients also move jointly, with a
//! proposal covariance learned from the burn-in draws and frozen afterwards.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::conjugate::{gibbs_precision_update, icar_conditional, icar_pairwise_ss, icar_precision_update, GammaPrior};
use super::gvs::{draw_pseudo, gvs_log_odds, inclusion_probability_from_log_odds};
use super::likelihood::{normal_log_density, poisson_log_density};
use super::prior::{PriorConfig, PseudoPrior};
use crate::design::{Coef, ModelData};
use crate::error::{Error, Result};
use crate::model::{PredictorMode, UhMode};
use crate::state::ParameterState;

const TARGET_ACCEPTANCE: f64 = 0.44;
const MAX_LOG_STEP: f64 = 25.0;
const PILOT_ITERATIONS: usize = 2000;
const JOINT_TARGET: f64 = 0.234;
/// Burn-in sweeps collected before the joint proposal switches on.
const JOINT_WARMUP: usize = 200;
const JOINT_REFRESH: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerControls {
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub n_chains: usize,
}

impl Default for SamplerControls {
    fn default() -> Self {
        Self { n_iter: 20_000, burn_in: 10_000, thin: 10, seed: 1, n_chains: 2 }
    }
}

impl SamplerControls {
    pub fn validate(&self) -> Result<()> {
        if self.n_iter == 0 || self.thin == 0 || self.n_chains == 0 {
            return Err(Error::InvalidControls("n_iter, thin and n_chains must be positive".into()));
        }
        if self.burn_in >= self.n_iter {
            return Err(Error::InvalidControls("burn_in must be smaller than n_iter".into()));
        }
        Ok(())
    }

    pub fn n_retained(&self) -> usize {
        (self.n_iter - self.burn_in) / self.thin
    }
}

/// Retained draws and their pointwise log-likelihoods for one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainOutput {
    pub chain: usize,
    pub seed: u64,
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub draws: Vec<ParameterState>,
    /// Row-major `draws.len() × n_cells`.
    pub pointwise_loglik: Vec<f64>,
    pub n_cells: usize,
    /// Post-burn-in acceptance rate per proposal family.
    pub acceptance_rates: Vec<(String, f64)>,
    pub pseudo_priors: Vec<PseudoPrior>,
}

impl ChainOutput {
    pub fn n_retained(&self) -> usize {
        self.draws.len()
    }

    pub fn loglik_row(&self, draw: usize) -> &[f64] {
        &self.pointwise_loglik[draw * self.n_cells..(draw + 1) * self.n_cells]
    }
}

/// Runs `controls.n_chains` independent chains in parallel.
pub fn mcmc_run(model: &ModelData, prior: &PriorConfig, controls: &SamplerControls) -> Result<Vec<ChainOutput>> {
    controls.validate()?;
    prior.validate()?;
    let pseudo = if model.layout.gvs {
        match &prior.pseudo_priors {
            Some(p) if p.len() == model.layout.n_predictors => p.clone(),
            Some(_) => return Err(Error::PseudoPriorUnset(model.layout.n_predictors)),
            None => pilot_pseudo_priors(model, prior, controls.seed)?,
        }
    } else {
        Vec::new()
    };
    (0..controls.n_chains)
        .into_par_iter()
        .map(|chain| {
            let mut rng = ChaCha8Rng::seed_from_u64(controls.seed);
            rng.set_stream(chain as u64 + 1);
            run_chain(model, prior, &pseudo, controls, chain, rng)
        })
        .collect()
}

/// Tunes GVS pseudo-priors from a short fixed-predictor fit.
pub fn pilot_pseudo_priors(model: &ModelData, prior: &PriorConfig, seed: u64) -> Result<Vec<PseudoPrior>> {
    let fixed = model.with_predictor_mode(PredictorMode::Fixed);
    let controls = SamplerControls {
        n_iter: PILOT_ITERATIONS,
        burn_in: PILOT_ITERATIONS / 2,
        thin: 1,
        seed,
        n_chains: 1,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    let out = run_chain(&fixed, prior, &[], &controls, 0, rng)?;
    let n = out.draws.len() as f64;
    Ok((0..fixed.layout.n_predictors)
        .map(|k| {
            let mean = out.draws.iter().map(|d| d.theta[k]).sum::<f64>() / n;
            let var = out.draws.iter().map(|d| (d.theta[k] - mean).powi(2)).sum::<f64>() / (n - 1.0);
            PseudoPrior { mean, sd: var.sqrt().max(1e-6) }
        })
        .collect())
}

/// Runs a single chain with an explicit RNG.
pub fn run_chain(
    model: &ModelData,
    prior: &PriorConfig,
    pseudo: &[PseudoPrior],
    controls: &SamplerControls,
    chain: usize,
    rng: ChaCha8Rng,
) -> Result<ChainOutput> {
    controls.validate()?;
    let mut sampler = Sampler::new(model, prior, pseudo.to_vec(), rng)?;
    let mut draws = Vec::with_capacity(controls.n_retained());
    let mut pointwise = Vec::with_capacity(controls.n_retained() * model.n_cells());
    for t in 0..controls.n_iter {
        if t == controls.burn_in {
            sampler.adapting = false;
            sampler.reset_counts();
        }
        // Early burn-in is dominated by the transient from the starting point.
        if t > 0 && (t == controls.burn_in / 4 || t == controls.burn_in / 2) {
            sampler.recenter();
            sampler.joint.restart();
        }
        sampler.sweep(t)?;
        if t >= controls.burn_in && (t - controls.burn_in + 1) % controls.thin == 0 {
            draws.push(sampler.state.clone());
            pointwise.extend_from_slice(&sampler.cache.ll);
        }
    }
    Ok(ChainOutput {
        chain,
        seed: controls.seed,
        n_iter: controls.n_iter,
        burn_in: controls.burn_in,
        thin: controls.thin,
        draws,
        pointwise_loglik: pointwise,
        n_cells: model.n_cells(),
        acceptance_rates: sampler.acceptance_rates(),
        pseudo_priors: pseudo.to_vec(),
    })
}

#[derive(Debug, Clone, Copy)]
struct Block {
    log_step: f64,
    accepted: u64,
    proposed: u64,
}

impl Block {
    fn new(curvature: f64) -> Self {
        Self { log_step: (2.4 / curvature.max(1e-12).sqrt()).ln(), accepted: 0, proposed: 0 }
    }

    fn step(&self) -> f64 {
        self.log_step.exp()
    }
}

/// Direction of a coefficient proposal in linear-predictor space.
struct Direction {
    per_cell: Vec<f64>,
    moves_likelihood: bool,
}

struct CoefMoves {
    coef: Coef,
    mean: f64,
    /// Per-area mean of the covariate over modeled cells.
    area_mean: Vec<f64>,
    axis: Direction,
    within: Direction,
    axis_block: Block,
    within_block: Block,
}

/// Running moments of the centered coefficient vector and the Cholesky factor
/// of the current joint proposal covariance.
struct JointBlock {
    n: usize,
    mean: DVector<f64>,
    m2: DMatrix<f64>,
    chol: Option<DMatrix<f64>>,
    block: Block,
    /// Same proposal with area effects compensating, as in the within moves.
    within_block: Block,
    /// Same proposal with space-time effects absorbing the whole change.
    absorb_block: Block,
}

impl JointBlock {
    fn new(dim: usize) -> Self {
        Self {
            n: 0,
            mean: DVector::zeros(dim),
            m2: DMatrix::zeros(dim, dim),
            chol: None,
            block: Block { log_step: (2.38 / (dim as f64).sqrt()).ln(), accepted: 0, proposed: 0 },
            within_block: Block { log_step: (2.38 / (dim as f64).sqrt()).ln(), accepted: 0, proposed: 0 },
            absorb_block: Block { log_step: (2.38 / (dim as f64).sqrt()).ln(), accepted: 0, proposed: 0 },
        }
    }

    fn observe(&mut self, z: &DVector<f64>) {
        self.n += 1;
        let d = z - &self.mean;
        self.mean += &d / self.n as f64;
        let d2 = z - &self.mean;
        self.m2 += &d * d2.transpose();
    }

    /// Forgets collected moments; the current proposal stays in use until
    /// enough new sweeps arrive.
    fn restart(&mut self) {
        self.n = 0;
        self.mean.fill(0.0);
        self.m2.fill(0.0);
    }

    fn refactor(&mut self) {
        let dim = self.mean.len();
        let cov = &self.m2 / (self.n.max(2) - 1) as f64;
        let jitter = 1e-10 * (1.0 + cov.diagonal().amax());
        let cov = cov + DMatrix::identity(dim, dim) * jitter;
        self.chol = cov.cholesky().map(|c| c.l());
    }
}

struct Sampler<'a> {
    m: &'a ModelData,
    prior: &'a PriorConfig,
    pseudo: Vec<PseudoPrior>,
    state: ParameterState,
    cache: Cache,
    alpha0: Block,
    coefs: Vec<CoefMoves>,
    shift: Block,
    v_blocks: Vec<Block>,
    u_blocks: Vec<Block>,
    uv_blocks: Vec<Block>,
    joint: JointBlock,
    /// Joint rescaling of an effect vector and its precision: `[v, u]`.
    scale_blocks: [Block; 2],
    adapting: bool,
    gain: f64,
    rng: ChaCha8Rng,
}

/// Per-cell log-means and log-likelihoods, plus scratch space for proposals.
struct Cache {
    eta: Vec<f64>,
    ll: Vec<f64>,
    prop_eta: Vec<f64>,
    prop_ll: Vec<f64>,
}

impl Cache {
    /// Fills the scratch buffers with `eta + delta * dir(c)` for every cell and
    /// returns the total log-likelihood change.
    fn propose(&mut self, m: &ModelData, tau_y: &[f64], delta: f64, dir: impl Fn(usize) -> f64) -> f64 {
        let mut diff = 0.0;
        for c in 0..self.eta.len() {
            let e = self.eta[c] + delta * dir(c);
            let l = cell_ll(m, tau_y, c, e);
            self.prop_eta[c] = e;
            self.prop_ll[c] = l;
            diff += l - self.ll[c];
        }
        diff
    }

    fn commit(&mut self) {
        std::mem::swap(&mut self.eta, &mut self.prop_eta);
        std::mem::swap(&mut self.ll, &mut self.prop_ll);
    }
}

/// Fisher information of each cell's log-mean.
fn cell_weights(m: &ModelData, state: &ParameterState, eta: &[f64]) -> Vec<f64> {
    (0..eta.len()).map(|c| if m.is_lognormal() { m.obs_precision(state, c) } else { eta[c].exp() }).collect()
}

fn coef_moves(m: &ModelData, weights: &[f64], coef_prec: f64, tau_v: f64) -> Vec<CoefMoves> {
    let area_effects = m.preset.spec.uh_mode != UhMode::None;
    let weighted_mean = |f: &[f64], r: std::ops::Range<usize>| {
        let w: f64 = weights[r.clone()].iter().sum();
        let fw: f64 = f[r.clone()].iter().zip(&weights[r]).map(|(x, w)| x * w).sum();
        if w > 0.0 {
            Some(fw / w)
        } else {
            None
        }
    };
    m.coefs
        .iter()
        .zip(&m.features)
        .map(|(&coef, f)| {
            let mean = weighted_mean(f, 0..f.len()).unwrap_or(0.0);
            let area_mean: Vec<f64> =
                m.area_ranges.iter().map(|r| weighted_mean(f, r.clone()).unwrap_or(mean)).collect();
            let axis: Vec<f64> = f.iter().map(|x| x - mean).collect();
            let within: Vec<f64> = m
                .cells
                .iter()
                .zip(f)
                .map(|(cell, x)| if area_effects { x - area_mean[cell.area] } else { x - mean })
                .collect();
            let curvature = |d: &[f64]| d.iter().zip(weights).map(|(d, w)| w * d * d).sum::<f64>();
            let axis_curv = curvature(&axis) + coef_prec * (1.0 + mean * mean);
            let spread: f64 = area_mean.iter().map(|a| (a - mean).powi(2)).sum();
            let within_curv = curvature(&within) + coef_prec + tau_v * spread;
            let moves = |d: &[f64]| d.iter().any(|x| x.abs() > 1e-12);
            CoefMoves {
                coef,
                mean,
                axis_block: Block::new(axis_curv),
                within_block: Block::new(within_curv),
                axis: Direction { moves_likelihood: moves(&axis), per_cell: axis },
                within: Direction { moves_likelihood: moves(&within), per_cell: within },
                area_mean,
            }
        })
        .collect()
}

#[inline]
fn cell_ll(m: &ModelData, tau_y: &[f64], c: usize, eta: f64) -> f64 {
    if m.is_lognormal() {
        let tau = if tau_y.len() == 1 { tau_y[0] } else { tau_y[m.cells[c].day - 1] };
        normal_log_density(m.response[c], eta, tau)
    } else {
        poisson_log_density(m.response[c], eta, m.log_factorial[c])
    }
}

impl<'a> Sampler<'a> {
    fn new(m: &'a ModelData, prior: &'a PriorConfig, pseudo: Vec<PseudoPrior>, rng: ChaCha8Rng) -> Result<Self> {
        let state = initial_state(m, prior, &pseudo);
        let eta = m.linear_predictor(&state);
        let ll: Vec<f64> = eta.iter().enumerate().map(|(c, &e)| cell_ll(m, &state.tau_y, c, e)).collect();
        if ll.iter().any(|l| !l.is_finite()) {
            return Err(Error::NonFiniteLikelihoodAtInit);
        }
        let spatial_uh = m.preset.spec.uh_mode == UhMode::Spatial;
        let weights = cell_weights(m, &state, &eta);
        let coef_prec = 1.0 / (prior.coef_sd * prior.coef_sd);
        let tau_v0 = state.tau_v.first().copied().unwrap_or(0.0);

        let coefs = coef_moves(m, &weights, coef_prec, tau_v0);

        let area_weight: Vec<f64> = m.area_ranges.iter().map(|r| weights[r.clone()].iter().sum()).collect();
        let tau_u0 = state.tau_u.unwrap_or(0.0);
        let v_blocks = match m.preset.spec.uh_mode {
            UhMode::None => Vec::new(),
            UhMode::Spatial => area_weight.iter().map(|w| Block::new(w + tau_v0)).collect(),
            UhMode::Spacetime | UhMode::SpacetimeTvprec => m
                .slot_cell
                .iter()
                .enumerate()
                .map(|(slot, c)| {
                    let tau = state.tau_v[if state.tau_v.len() == 1 { 0 } else { slot % (m.n_days - 1) }];
                    Block::new(c.map_or(0.0, |c| weights[c]) + tau)
                })
                .collect(),
        };
        let (u_blocks, uv_blocks) = if m.preset.spec.icar {
            let u: Vec<Block> = (0..m.n_areas)
                .map(|i| Block::new(area_weight[i] + tau_u0 * m.graph.n_neighbors(i) as f64))
                .collect();
            let uv = if spatial_uh {
                (0..m.n_areas).map(|i| Block::new(tau_v0 + tau_u0 * m.graph.n_neighbors(i) as f64)).collect()
            } else {
                Vec::new()
            };
            (u, uv)
        } else {
            (Vec::new(), Vec::new())
        };

        Ok(Self {
            m,
            prior,
            pseudo,
            alpha0: Block::new(weights.iter().sum::<f64>() + coef_prec),
            shift: Block::new(m.layout.n_v as f64 * tau_v0 + coef_prec),
            coefs,
            v_blocks,
            u_blocks,
            uv_blocks,
            joint: JointBlock::new(m.coefs.len() + 1),
            scale_blocks: [Block::new(2.0 * m.n_areas as f64), Block::new(2.0 * m.n_areas as f64)],
            cache: Cache { prop_eta: eta.clone(), prop_ll: ll.clone(), eta, ll },
            state,
            adapting: true,
            gain: 1.0,
            rng,
        })
    }

    /// Recomputes the centering of coefficient moves at the current state,
    /// keeping the tuned step sizes.
    fn recenter(&mut self) {
        let weights = cell_weights(self.m, &self.state, &self.cache.eta);
        let coef_prec = 1.0 / (self.prior.coef_sd * self.prior.coef_sd);
        let tau_v = self.state.tau_v.first().copied().unwrap_or(0.0);
        let fresh = coef_moves(self.m, &weights, coef_prec, tau_v);
        for (old, new) in self.coefs.iter_mut().zip(fresh) {
            *old = CoefMoves { axis_block: old.axis_block, within_block: old.within_block, ..new };
        }
    }

    fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    fn accept(&mut self, log_ratio: f64) -> (bool, f64) {
        let prob = if log_ratio.is_nan() { 0.0 } else { log_ratio.min(0.0).exp() };
        let u: f64 = self.rng.random();
        (u < prob, prob)
    }

    fn record(block: &mut Block, accepted: bool, prob: f64, adapting: bool, gain: f64, name: &str) -> Result<()> {
        if adapting {
            block.log_step += gain * (prob - TARGET_ACCEPTANCE);
            if !block.log_step.is_finite() || block.log_step > MAX_LOG_STEP {
                return Err(Error::AdaptationDiverged(name.to_string()));
            }
        } else {
            block.proposed += 1;
            block.accepted += u64::from(accepted);
        }
        Ok(())
    }

    fn reset_counts(&mut self) {
        let all = std::iter::once(&mut self.alpha0)
            .chain(std::iter::once(&mut self.shift))
            .chain(std::iter::once(&mut self.joint.block))
            .chain(std::iter::once(&mut self.joint.within_block))
            .chain(std::iter::once(&mut self.joint.absorb_block))
            .chain(self.scale_blocks.iter_mut())
            .chain(self.coefs.iter_mut().flat_map(|c| [&mut c.axis_block, &mut c.within_block]))
            .chain(self.v_blocks.iter_mut())
            .chain(self.u_blocks.iter_mut())
            .chain(self.uv_blocks.iter_mut());
        for b in all {
            b.accepted = 0;
            b.proposed = 0;
        }
    }

    fn acceptance_rates(&self) -> Vec<(String, f64)> {
        fn rate<'b>(blocks: impl IntoIterator<Item = &'b Block>) -> Option<f64> {
            let (a, p) = blocks.into_iter().fold((0, 0), |(a, p), b| (a + b.accepted, p + b.proposed));
            (p > 0).then(|| a as f64 / p as f64)
        }
        let mut out = Vec::new();
        let mut push = |name: String, r: Option<f64>| {
            if let Some(r) = r {
                out.push((name, r));
            }
        };
        push("alpha0".into(), rate([&self.alpha0]));
        for c in &self.coefs {
            push(c.coef.label(), rate([&c.axis_block]));
            push(format!("{}/within", c.coef.label()), rate([&c.within_block]));
        }
        push("coefficients (joint)".into(), rate([&self.joint.block]));
        push("coefficients (joint, within)".into(), rate([&self.joint.within_block]));
        push("coefficients (joint, absorbed)".into(), rate([&self.joint.absorb_block]));
        push("alpha0-v shift".into(), rate([&self.shift]));
        push("v scale".into(), rate([&self.scale_blocks[0]]));
        push("u scale".into(), rate([&self.scale_blocks[1]]));
        push("v".into(), rate(&self.v_blocks));
        push("u".into(), rate(&self.u_blocks));
        push("u-v swap".into(), rate(&self.uv_blocks));
        out
    }

    fn sweep(&mut self, t: usize) -> Result<()> {
        self.gain = (t as f64 + 1.0).powf(-0.6);
        self.update_alpha0()?;
        for k in 0..self.coefs.len() {
            if let Coef::Predictor(p) = self.coefs[k].coef {
                if self.m.layout.gvs && !self.state.gamma[p] {
                    continue;
                }
            }
            self.update_coef(k, false)?;
            if self.has_area_effects() {
                self.update_coef(k, true)?;
            }
        }
        if !self.coefs.is_empty() {
            self.update_joint(t, false)?;
            if self.has_area_effects() {
                self.update_joint(t, true)?;
            }
            if self.m.preset.spec.uh_mode.is_spacetime() {
                self.update_joint_absorbed()?;
            }
        }
        match self.m.preset.spec.uh_mode {
            UhMode::None => {}
            UhMode::Spatial => {
                self.update_shift()?;
                for i in 0..self.m.n_areas {
                    self.update_area_effect(i, false)?;
                }
            }
            UhMode::Spacetime | UhMode::SpacetimeTvprec => {
                self.update_shift()?;
                self.update_spacetime()?;
            }
        }
        if self.m.preset.spec.icar {
            for i in 0..self.m.n_areas {
                self.update_area_effect(i, true)?;
            }
            if !self.uv_blocks.is_empty() {
                for i in 0..self.m.n_areas {
                    self.update_uv_swap(i)?;
                }
            }
        }
        if self.m.preset.spec.uh_mode == UhMode::Spatial {
            self.update_scale(false)?;
        }
        if self.m.preset.spec.icar && self.m.n_areas > 2 {
            self.update_scale(true)?;
        }
        self.update_precisions();
        if self.m.layout.gvs {
            for k in 0..self.m.layout.n_predictors {
                self.update_indicator(k);
            }
        }
        if self.m.preset.spec.icar {
            let mean = self.state.u.iter().sum::<f64>() / self.state.u.len() as f64;
            self.state.u.iter_mut().for_each(|u| *u -= mean);
            self.state.alpha[0] += mean;
        }
        self.refresh();
        if self.adapting && !self.coefs.is_empty() {
            let z = self.centered_coefs();
            self.joint.observe(&z);
        }
        Ok(())
    }

    /// Intercept at the covariate means followed by each coefficient.
    fn centered_coefs(&self) -> DVector<f64> {
        let mut z = DVector::zeros(self.coefs.len() + 1);
        z[0] = self.state.alpha[0];
        for (k, cm) in self.coefs.iter().enumerate() {
            let b = cm.coef.get(&self.state);
            z[0] += b * cm.mean;
            z[k + 1] = b;
        }
        z
    }

    fn excluded(&self, coef: Coef) -> bool {
        matches!(coef, Coef::Predictor(p) if self.m.layout.gvs && !self.state.gamma[p])
    }

    /// Joint coefficient step with each modeled cell's space-time effect taking
    /// up the change in its log-mean, so only the priors move.
    fn update_joint_absorbed(&mut self) -> Result<()> {
        let Some(chol) = self.joint.chol.as_ref() else {
            return Ok(());
        };
        let dim = self.coefs.len() + 1;
        let z = DVector::from_fn(dim, |_, _| StandardNormal.sample(&mut self.rng));
        let mut delta = chol * z * self.joint.absorb_block.step();
        for (k, cm) in self.coefs.iter().enumerate() {
            if self.excluded(cm.coef) {
                delta[k + 1] = 0.0;
            }
        }
        let a0 = self.state.alpha[0];
        let new_a0 = a0 + delta[0] - self.coefs.iter().enumerate().map(|(k, cm)| delta[k + 1] * cm.mean).sum::<f64>();
        let mut lp = self.prior.coef_log_prior(new_a0) - self.prior.coef_log_prior(a0);
        for (k, cm) in self.coefs.iter().enumerate() {
            let b = cm.coef.get(&self.state);
            lp += self.prior.coef_log_prior(b + delta[k + 1]) - self.prior.coef_log_prior(b);
        }
        let shift: Vec<f64> = (0..self.m.n_cells())
            .map(|c| {
                -(delta[0]
                    + self.coefs.iter().enumerate().map(|(k, cm)| delta[k + 1] * cm.axis.per_cell[c]).sum::<f64>())
            })
            .collect();
        for (c, cell) in self.m.cells.iter().enumerate() {
            let slot = self.m.slot(cell.area, cell.day);
            let v = self.state.v[slot];
            lp += self.v_log_prior(slot, v + shift[c]) - self.v_log_prior(slot, v);
        }
        let (ok, prob) = self.accept(lp);
        if ok {
            self.state.alpha[0] = new_a0;
            for (k, cm) in self.coefs.iter().enumerate() {
                let b = cm.coef.get(&self.state);
                cm.coef.set(&mut self.state, b + delta[k + 1]);
            }
            for (c, cell) in self.m.cells.iter().enumerate() {
                let slot = self.m.slot(cell.area, cell.day);
                self.state.v[slot] += shift[c];
            }
        }
        let (adapting, gain) = (self.adapting, self.gain);
        let block = &mut self.joint.absorb_block;
        if adapting {
            block.log_step += gain * (prob - JOINT_TARGET);
            if !block.log_step.is_finite() || block.log_step > MAX_LOG_STEP {
                return Err(Error::AdaptationDiverged("coefficients (joint, absorbed)".into()));
            }
        } else {
            block.proposed += 1;
            block.accepted += u64::from(ok);
        }
        Ok(())
    }

    fn update_joint(&mut self, t: usize, within: bool) -> Result<()> {
        if self.adapting && !within {
            if self.joint.n >= JOINT_WARMUP && (self.joint.chol.is_none() || t % JOINT_REFRESH == 0) {
                self.joint.refactor();
            }
        }
        let Some(chol) = self.joint.chol.as_ref() else {
            return Ok(());
        };
        let dim = self.coefs.len() + 1;
        let z = DVector::from_fn(dim, |_, _| StandardNormal.sample(&mut self.rng));
        let step = if within { self.joint.within_block.step() } else { self.joint.block.step() };
        let mut delta = chol * z * step;
        for (k, cm) in self.coefs.iter().enumerate() {
            if self.excluded(cm.coef) {
                delta[k + 1] = 0.0;
            }
        }
        let a0 = self.state.alpha[0];
        let new_a0 = a0 + delta[0] - self.coefs.iter().enumerate().map(|(k, cm)| delta[k + 1] * cm.mean).sum::<f64>();
        let mut lp = self.prior.coef_log_prior(new_a0) - self.prior.coef_log_prior(a0);
        for (k, cm) in self.coefs.iter().enumerate() {
            let b = cm.coef.get(&self.state);
            lp += self.prior.coef_log_prior(b + delta[k + 1]) - self.prior.coef_log_prior(b);
        }
        let v_shift: Vec<f64> = if within {
            (0..self.m.n_areas)
                .map(|i| {
                    -self.coefs.iter().enumerate().map(|(k, cm)| delta[k + 1] * (cm.area_mean[i] - cm.mean)).sum::<f64>()
                })
                .collect()
        } else {
            Vec::new()
        };
        for (i, &dv) in v_shift.iter().enumerate() {
            lp += self.area_shift_log_prior(i, dv);
        }
        let coefs = &self.coefs;
        let d0 = delta[0];
        let diff = self.cache.propose(self.m, &self.state.tau_y, 1.0, |c| {
            d0 + coefs
                .iter()
                .enumerate()
                .map(|(k, cm)| delta[k + 1] * if within { cm.within.per_cell[c] } else { cm.axis.per_cell[c] })
                .sum::<f64>()
        });
        let (ok, prob) = self.accept(diff + lp);
        if ok {
            self.cache.commit();
            self.state.alpha[0] = new_a0;
            for (k, cm) in self.coefs.iter().enumerate() {
                let b = cm.coef.get(&self.state);
                cm.coef.set(&mut self.state, b + delta[k + 1]);
            }
            for (i, &dv) in v_shift.iter().enumerate() {
                self.shift_area(i, dv);
            }
        }
        let block = if within { &mut self.joint.within_block } else { &mut self.joint.block };
        if self.adapting {
            block.log_step += self.gain * (prob - JOINT_TARGET);
            if !block.log_step.is_finite() || block.log_step > MAX_LOG_STEP {
                return Err(Error::AdaptationDiverged("coefficients (joint)".into()));
            }
        } else {
            block.proposed += 1;
            block.accepted += u64::from(ok);
        }
        Ok(())
    }

    fn refresh(&mut self) {
        self.cache.eta = self.m.linear_predictor(&self.state);
        let cache = &mut self.cache;
        for c in 0..cache.eta.len() {
            cache.ll[c] = cell_ll(self.m, &self.state.tau_y, c, cache.eta[c]);
        }
    }

    fn has_area_effects(&self) -> bool {
        self.m.preset.spec.uh_mode != UhMode::None
    }

    /// Slots of `v` belonging to area `i`.
    fn area_slots(&self, i: usize) -> std::ops::Range<usize> {
        match self.m.preset.spec.uh_mode {
            UhMode::None => 0..0,
            UhMode::Spatial => i..i + 1,
            UhMode::Spacetime | UhMode::SpacetimeTvprec => {
                let d = self.m.n_days - 1;
                i * d..(i + 1) * d
            }
        }
    }

    fn v_log_prior(&self, slot: usize, v: f64) -> f64 {
        -0.5 * self.spacetime_tau(slot) * v * v
    }

    /// Prior log-ratio for adding `dv` to every effect of area `i`.
    fn area_shift_log_prior(&self, i: usize, dv: f64) -> f64 {
        self.area_slots(i)
            .map(|s| {
                let v = self.state.v[s];
                self.v_log_prior(s, v + dv) - self.v_log_prior(s, v)
            })
            .sum()
    }

    fn shift_area(&mut self, i: usize, dv: f64) {
        for s in self.area_slots(i) {
            self.state.v[s] += dv;
        }
    }

    fn update_alpha0(&mut self) -> Result<()> {
        let delta = self.alpha0.step() * self.normal();
        let a0 = self.state.alpha[0];
        let diff = self.cache.propose(self.m, &self.state.tau_y, delta, |_| 1.0);
        let lp = self.prior.coef_log_prior(a0 + delta) - self.prior.coef_log_prior(a0);
        let (ok, prob) = self.accept(diff + lp);
        if ok {
            self.cache.commit();
            self.state.alpha[0] = a0 + delta;
        }
        Self::record(&mut self.alpha0, ok, prob, self.adapting, self.gain, "alpha0")
    }

    fn update_coef(&mut self, k: usize, within: bool) -> Result<()> {
        let (step, coef, mean) = {
            let cm = &self.coefs[k];
            let b = if within { cm.within_block } else { cm.axis_block };
            (b.step(), cm.coef, cm.mean)
        };
        let delta = step * self.normal();
        let old = coef.get(&self.state);
        let a0 = self.state.alpha[0];
        let new_a0 = a0 - delta * mean;
        let mut lp = self.prior.coef_log_prior(old + delta) - self.prior.coef_log_prior(old)
            + self.prior.coef_log_prior(new_a0)
            - self.prior.coef_log_prior(a0);
        if within {
            for i in 0..self.m.n_areas {
                lp += self.area_shift_log_prior(i, -delta * (self.coefs[k].area_mean[i] - mean));
            }
        }
        let dir = if within { &self.coefs[k].within } else { &self.coefs[k].axis };
        let moves = dir.moves_likelihood;
        let diff = if moves {
            let per_cell = &dir.per_cell;
            self.cache.propose(self.m, &self.state.tau_y, delta, |c| per_cell[c])
        } else {
            0.0
        };
        let (ok, prob) = self.accept(diff + lp);
        if ok {
            if moves {
                self.cache.commit();
            }
            coef.set(&mut self.state, old + delta);
            self.state.alpha[0] = new_a0;
            if within {
                for i in 0..self.m.n_areas {
                    let dv = -delta * (self.coefs[k].area_mean[i] - mean);
                    self.shift_area(i, dv);
                }
            }
        }
        let adapting = self.adapting;
        let gain = self.gain;
        let cm = &mut self.coefs[k];
        let block = if within { &mut cm.within_block } else { &mut cm.axis_block };
        Self::record(block, ok, prob, adapting, gain, &coef.label())
    }

    /// Intercept up, every area effect down: leaves the likelihood unchanged.
    fn update_shift(&mut self) -> Result<()> {
        let delta = self.shift.step() * self.normal();
        let a0 = self.state.alpha[0];
        let mut lp = self.prior.coef_log_prior(a0 + delta) - self.prior.coef_log_prior(a0);
        for i in 0..self.m.n_areas {
            lp += self.area_shift_log_prior(i, -delta);
        }
        let (ok, prob) = self.accept(lp);
        if ok {
            self.state.alpha[0] += delta;
            self.state.v.iter_mut().for_each(|v| *v -= delta);
        }
        Self::record(&mut self.shift, ok, prob, self.adapting, self.gain, "alpha0-v shift")
    }

    /// Scalar update of `v_i` (`icar = false`) or `u_i` (`icar = true`).
    fn update_area_effect(&mut self, i: usize, icar: bool) -> Result<()> {
        let step = if icar { self.u_blocks[i].step() } else { self.v_blocks[i].step() };
        let delta = step * self.normal();
        let lp = if icar {
            let tau_u = self.state.tau_u.expect("icar model carries tau_u");
            let (mean, prec) = icar_conditional(&self.state.u, &self.m.graph, i, tau_u)?;
            let u = self.state.u[i];
            -0.5 * prec * ((u + delta - mean).powi(2) - (u - mean).powi(2))
        } else {
            let v = self.state.v[i];
            self.v_log_prior(i, v + delta) - self.v_log_prior(i, v)
        };
        let range = self.m.area_ranges[i].clone();
        let cache = &mut self.cache;
        let mut diff = 0.0;
        for c in range.clone() {
            let e = cache.eta[c] + delta;
            let l = cell_ll(self.m, &self.state.tau_y, c, e);
            cache.prop_eta[c] = e;
            cache.prop_ll[c] = l;
            diff += l - cache.ll[c];
        }
        let (ok, prob) = self.accept(diff + lp);
        if ok {
            let cache = &mut self.cache;
            cache.eta[range.clone()].copy_from_slice(&cache.prop_eta[range.clone()]);
            cache.ll[range.clone()].copy_from_slice(&cache.prop_ll[range]);
            if icar {
                self.state.u[i] += delta;
            } else {
                self.state.v[i] += delta;
            }
        }
        let (adapting, gain) = (self.adapting, self.gain);
        if icar {
            Self::record(&mut self.u_blocks[i], ok, prob, adapting, gain, "u")
        } else {
            Self::record(&mut self.v_blocks[i], ok, prob, adapting, gain, "v")
        }
    }

    /// `u_i` up, `v_i` down: leaves the likelihood unchanged.
    fn update_uv_swap(&mut self, i: usize) -> Result<()> {
        let delta = self.uv_blocks[i].step() * self.normal();
        let tau_u = self.state.tau_u.expect("icar model carries tau_u");
        let (mean, prec) = icar_conditional(&self.state.u, &self.m.graph, i, tau_u)?;
        let (u, v) = (self.state.u[i], self.state.v[i]);
        let lp = -0.5 * prec * ((u + delta - mean).powi(2) - (u - mean).powi(2)) + self.v_log_prior(i, v - delta)
            - self.v_log_prior(i, v);
        let (ok, prob) = self.accept(lp);
        if ok {
            self.state.u[i] += delta;
            self.state.v[i] -= delta;
        }
        Self::record(&mut self.uv_blocks[i], ok, prob, self.adapting, self.gain, "u-v swap")
    }

    fn spacetime_tau(&self, slot: usize) -> f64 {
        if self.state.tau_v.len() == 1 {
            self.state.tau_v[0]
        } else {
            self.state.tau_v[slot % (self.m.n_days - 1)]
        }
    }

    fn update_spacetime(&mut self) -> Result<()> {
        for slot in 0..self.state.v.len() {
            let tau_v = self.spacetime_tau(slot);
            let v = self.state.v[slot];
            let Some(c) = self.m.slot_cell[slot] else {
                self.state.v[slot] = self.normal() / tau_v.sqrt();
                continue;
            };
            if self.m.is_lognormal() {
                let tau_y = self.m.obs_precision(&self.state, c);
                let resid = self.m.response[c] - (self.cache.eta[c] - v);
                let prec = tau_y + tau_v;
                let new = tau_y * resid / prec + self.normal() / prec.sqrt();
                self.state.v[slot] = new;
                self.cache.eta[c] += new - v;
                self.cache.ll[c] = cell_ll(self.m, &self.state.tau_y, c, self.cache.eta[c]);
                continue;
            }
            let delta = self.v_blocks[slot].step() * self.normal();
            let e = self.cache.eta[c] + delta;
            let l = cell_ll(self.m, &self.state.tau_y, c, e);
            let lp = -0.5 * tau_v * ((v + delta).powi(2) - v * v);
            let (ok, prob) = self.accept(l - self.cache.ll[c] + lp);
            if ok {
                self.cache.eta[c] = e;
                self.cache.ll[c] = l;
                self.state.v[slot] = v + delta;
            }
            Self::record(&mut self.v_blocks[slot], ok, prob, self.adapting, self.gain, "v")?;
        }
        Ok(())
    }

    /// Multiplies the spatial effects (`v`, or `u` when `icar`) by `c` and
    /// divides their precision by `c^2`. Moves along the ridge between small
    /// effects and large precisions that single-coordinate updates cross slowly.
    fn update_scale(&mut self, icar: bool) -> Result<()> {
        let m = self.m;
        let idx = usize::from(icar);
        let log_c = self.scale_blocks[idx].step() * self.normal();
        let c = log_c.exp();
        let (effects, tau, prior, dim, rank, quad) = if icar {
            let u = &self.state.u;
            let rank = (m.n_areas - m.graph.n_components()) as f64;
            let tau = self.state.tau_u.expect("icar model carries tau_u");
            (u, tau, self.prior.tau_u, (m.n_areas - 1) as f64, rank, icar_pairwise_ss(u, &m.graph))
        } else {
            let v = &self.state.v;
            let n = v.len() as f64;
            (v, self.state.tau_v[0], self.prior.tau_v, n, n, v.iter().map(|x| x * x).sum::<f64>())
        };
        let new_tau = tau / (c * c);
        let log_gamma = |t: f64| (prior.shape - 1.0) * t.ln() - prior.rate * t;
        let log_effects = |t: f64, q: f64| 0.5 * rank * t.ln() - 0.5 * t * q;
        let lp = log_gamma(new_tau) - log_gamma(tau) + log_effects(new_tau, c * c * quad) - log_effects(tau, quad)
            + (dim - 2.0) * log_c;
        let area_delta: Vec<f64> = effects.iter().map(|e| (c - 1.0) * e).collect();
        let cells = &m.cells;
        let diff = self.cache.propose(m, &self.state.tau_y, 1.0, |k| area_delta[cells[k].area]);
        let (ok, prob) = self.accept(diff + lp);
        if ok {
            self.cache.commit();
            if icar {
                self.state.u.iter_mut().for_each(|u| *u *= c);
                self.state.tau_u = Some(new_tau);
            } else {
                self.state.v.iter_mut().for_each(|v| *v *= c);
                self.state.tau_v[0] = new_tau;
            }
        }
        let name = if icar { "u scale" } else { "v scale" };
        Self::record(&mut self.scale_blocks[idx], ok, prob, self.adapting, self.gain, name)
    }

    fn update_precisions(&mut self) {
        let m = self.m;
        let prior = self.prior;
        match m.preset.spec.uh_mode {
            UhMode::None => {}
            UhMode::Spatial | UhMode::Spacetime => {
                self.state.tau_v[0] = gibbs_precision_update(&self.state.v, prior.tau_v, &mut self.rng);
            }
            UhMode::SpacetimeTvprec => {
                let days = m.n_days - 1;
                let mut effects = vec![0.0; m.n_areas];
                for d in 0..days {
                    for (i, e) in effects.iter_mut().enumerate() {
                        *e = self.state.v[i * days + d];
                    }
                    self.state.tau_v[d] = gibbs_precision_update(&effects, prior.tau_v_day, &mut self.rng);
                }
            }
        }
        if m.preset.spec.icar {
            self.state.tau_u = Some(icar_precision_update(&self.state.u, &m.graph, prior.tau_u, &mut self.rng));
        }
        if m.is_lognormal() {
            let eta = &self.cache.eta;
            let sq = |c: usize| (m.response[c] - eta[c]).powi(2);
            if self.state.tau_y.len() == 1 {
                let ss: f64 = (0..m.n_cells()).map(sq).sum();
                self.state.tau_y[0] = prior.tau_y.posterior(m.n_cells() as f64, ss).sample(&mut self.rng);
            } else {
                for d in 0..m.day_cells.len() {
                    let cells = &m.day_cells[d];
                    let ss: f64 = cells.iter().map(|&c| sq(c)).sum();
                    let post: GammaPrior = prior.tau_y.posterior(cells.len() as f64, ss);
                    self.state.tau_y[d] = post.sample(&mut self.rng);
                }
            }
            let cache = &mut self.cache;
            for c in 0..cache.eta.len() {
                cache.ll[c] = cell_ll(m, &self.state.tau_y, c, cache.eta[c]);
            }
        }
    }

    fn update_indicator(&mut self, k: usize) {
        let m = self.m;
        let idx = m.coefs.iter().position(|&c| c == Coef::Predictor(k)).expect("predictor coefficient present");
        let x = &m.features[idx];
        let theta = self.state.theta[k];
        let on = self.state.gamma[k];
        // The alternative configuration goes into the scratch buffers.
        let sign = if on { -1.0 } else { 1.0 };
        let diff = self.cache.propose(m, &self.state.tau_y, sign * theta, |c| x[c]);
        let ll_diff = if on { -diff } else { diff };
        let odds = gvs_log_odds(ll_diff, theta, self.prior, self.pseudo[k]);
        let include = self.rng.random::<f64>() < inclusion_probability_from_log_odds(odds);
        if include != on {
            self.cache.commit();
            self.state.gamma[k] = include;
        }
        if !include {
            self.state.theta[k] = draw_pseudo(self.pseudo[k], &mut self.rng);
        }
    }
}

/// Starting point: intercept matched to the overall rate, everything else at
/// zero, precisions at their prior means.
pub fn initial_state(m: &ModelData, prior: &PriorConfig, pseudo: &[PseudoPrior]) -> ParameterState {
    let mut s = ParameterState::zeros(&m.layout);
    let n = m.n_cells();
    s.alpha[0] = if n == 0 {
        0.0
    } else if m.is_lognormal() {
        (0..n).map(|c| m.response[c] - m.log_s[c]).sum::<f64>() / n as f64
    } else {
        let total_y: f64 = m.response.iter().sum();
        let total_s: f64 = m.log_s.iter().map(|l| l.exp()).sum();
        ((total_y + 0.5) / total_s).ln()
    };
    if m.layout.gvs {
        for (k, p) in pseudo.iter().enumerate() {
            s.theta[k] = p.mean;
            s.gamma[k] = true;
        }
    }
    let tau_v = if m.preset.spec.uh_mode == UhMode::SpacetimeTvprec { prior.tau_v_day } else { prior.tau_v };
    s.tau_v.iter_mut().for_each(|t| *t = tau_v.mean());
    if s.tau_u.is_some() {
        s.tau_u = Some(prior.tau_u.mean());
    }
    s.tau_y.iter_mut().for_each(|t| *t = prior.tau_y.mean());
    s
}
