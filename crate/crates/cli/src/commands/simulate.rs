use std::collections::HashMap;
use std::path::Path;

use areal_sir::data::{
    asymptomatic_lambda, read_mobility_csv, read_population_csv, read_predictors_csv, write_cases_csv,
    write_mobility_csv, write_population_csv, write_predictors_csv, MobilityPanel,
};
use areal_sir::simulator::{simulate, SimScenario, Simulation};
use areal_sir::{AdjacencyGraph, ParameterState, StateLayout};
use serde::{Deserialize, Serialize};

use crate::config::{DataFiles, FitConfig, SamplerConfig, SimConfig};
use crate::error::{CliError, CliResult};
use crate::load::data_digest;
use crate::output::{create_dir, relative_to, write_json, write_with, FileEntry};

pub const TRUTH: &str = "truth.json";
pub const FIT_CONFIG: &str = "fit.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimManifest {
    pub command: String,
    pub tool_version: String,
    pub model: String,
    pub config: SimConfig,
    pub data_digest: String,
    pub depleted_everywhere: bool,
    pub outputs: Vec<FileEntry>,
}

fn truth_state(cfg: &SimConfig, layout: &StateLayout) -> CliResult<ParameterState> {
    let t = &cfg.truth;
    let mut s = ParameterState::zeros(layout);
    s.alpha = t.alpha;
    if layout.n_predictors > 0 {
        s.theta = t.theta.clone();
    }
    if layout.gvs {
        s.gamma = if t.gamma.is_empty() { vec![true; layout.n_predictors] } else { t.gamma.clone() };
    }
    if layout.n_periods > 0 {
        s.eta = t.eta.clone();
    }
    s.v = if t.v.is_empty() || layout.n_v == 0 { Vec::new() } else { t.v.clone() };
    if !s.v.is_empty() && s.v.len() != layout.n_v {
        return Err(CliError::config(format!("truth.v needs {} values", layout.n_v)));
    }
    s.u = if t.u.is_empty() || !layout.icar { Vec::new() } else { t.u.clone() };
    if !s.u.is_empty() && s.u.len() != layout.n_areas {
        return Err(CliError::config(format!("truth.u needs {} values", layout.n_areas)));
    }
    s.tau_v = match (&t.tau_v, layout.n_tau_v) {
        (_, 0) => Vec::new(),
        (Some(tv), n) => tv.expand(n, "truth.tau_v")?,
        (None, n) => vec![1.0; n],
    };
    s.tau_u = layout.icar.then(|| t.tau_u.unwrap_or(1.0));
    s.tau_y = match (&t.tau_y, layout.n_tau_y) {
        (_, 0) => Vec::new(),
        (Some(ty), n) => ty.expand(n, "truth.tau_y")?,
        (None, _) => return Err(CliError::config("log-normal presets need truth.tau_y")),
    };
    let positive = s.tau_v.iter().chain(&s.tau_y).chain(s.tau_u.iter()).all(|&x| x > 0.0 && x.is_finite());
    if !positive {
        return Err(CliError::config("truth precisions must be positive"));
    }
    Ok(s)
}

fn scenario(cfg: &SimConfig) -> CliResult<SimScenario> {
    let preset = cfg.preset()?;
    let population = read_population_csv(&cfg.population).map_err(|e| CliError::reading("population", e))?;
    let ids: Vec<String> = population.iter().map(|(id, _)| id.clone()).collect();
    let graph = AdjacencyGraph::from_csv(&cfg.adjacency, &ids).map_err(|e| CliError::reading("adjacency", e))?;
    let predictors = match &cfg.predictors {
        Some(p) => Some(read_predictors_csv(p, &ids).map_err(|e| CliError::reading("predictors", e))?),
        None => None,
    };
    let dates: Vec<_> = (0..cfg.n_days).map(|d| cfg.start + chrono::Days::new(d as u64)).collect();
    let mobility = match (&cfg.mobility, preset.spec.mobility) {
        (Some(m), true) => {
            let work = read_mobility_csv(m, &ids, &dates).map_err(|e| CliError::reading("mobility", e))?;
            Some(MobilityPanel::new(work, cfg.changepoints.clone()).map_err(|e| CliError::config(e.to_string()))?)
        }
        _ => None,
    };
    let n_pred = predictors.as_ref().map_or(0, |p| p.n_predictors());
    let n_periods = mobility.as_ref().map_or(0, MobilityPanel::n_periods);
    let layout = StateLayout::new(&preset, &ids, cfg.n_days, n_pred, n_periods);
    Ok(SimScenario {
        start_date: cfg.start,
        n_days: cfg.n_days,
        population: population.iter().map(|(_, p)| *p).collect(),
        truth: truth_state(cfg, &layout)?,
        seed_cases: cfg.seed_cases.expand(ids.len(), "seed_cases")?,
        lambda: asymptomatic_lambda(cfg.asymptomatic_rate_percent).map_err(|e| CliError::config(e.to_string()))?,
        death_rate: cfg.death_rate,
        death_lag: cfg.death_lag,
        graph,
        preset,
        predictors,
        mobility,
    })
}

fn truth_json(sim: &Simulation, layout: &StateLayout) -> serde_json::Value {
    let values = layout.flatten(&sim.truth);
    let map: serde_json::Map<String, serde_json::Value> =
        layout.names().into_iter().zip(values).map(|(n, v)| (n, serde_json::json!(v))).collect();
    serde_json::Value::Object(map)
}

fn write_core<F>(dir: &Path, file: &str, write: F) -> CliResult<()>
where
    F: FnOnce(&Path) -> areal_sir::Result<()>,
{
    write_with(&dir.join(file), |tmp| write(tmp).map_err(|e| CliError::runtime(e.to_string())))
}

pub struct SimResult {
    pub simulation: Simulation,
    pub manifest: SimManifest,
}

pub fn run(cfg: &SimConfig) -> CliResult<SimResult> {
    let sc = scenario(cfg)?;
    let out_dir = cfg.out_dir()?.to_path_buf();
    let sim = simulate(&sc, cfg.seed)?;
    let data = &sim.data;
    let ids = data.graph.area_ids().to_vec();
    create_dir(&out_dir)?;

    let mut outputs = Vec::new();
    write_core(&out_dir, "cases.csv", |p| write_cases_csv(p, &data.panel.to_cumulative(), &HashMap::new(), "Synthetic"))?;
    outputs.push(FileEntry::of("cases", &out_dir, "cases.csv")?);
    write_core(&out_dir, "population.csv", |p| write_population_csv(p, &ids, &data.panel.population))?;
    outputs.push(FileEntry::of("population", &out_dir, "population.csv")?);
    write_core(&out_dir, "adjacency.csv", |p| data.graph.write_csv(p))?;
    outputs.push(FileEntry::of("adjacency", &out_dir, "adjacency.csv")?);
    if let Some(table) = &data.predictors {
        write_core(&out_dir, "predictors.csv", |p| write_predictors_csv(p, &ids, table))?;
        outputs.push(FileEntry::of("predictors", &out_dir, "predictors.csv")?);
    }
    if let Some(m) = &data.mobility {
        write_core(&out_dir, "mobility.csv", |p| write_mobility_csv(p, &ids, &data.panel.dates, &m.work))?;
        outputs.push(FileEntry::of("mobility", &out_dir, "mobility.csv")?);
    }
    let n_pred = data.predictors.as_ref().map_or(0, |p| p.n_predictors());
    let n_periods = data.mobility.as_ref().map_or(0, MobilityPanel::n_periods);
    let layout = StateLayout::new(&sc.preset, &ids, cfg.n_days, n_pred, n_periods);
    write_json(&out_dir.join(TRUTH), &truth_json(&sim, &layout))?;
    outputs.push(FileEntry::of("truth", &out_dir, TRUTH)?);

    // A fit config for the simulated files, with paths relative to the output directory.
    let fit = FitConfig {
        model: sc.preset.name.clone(),
        data_model: None,
        data: DataFiles {
            cases: "cases.csv".into(),
            population: "population.csv".into(),
            adjacency: "adjacency.csv".into(),
            predictors: data.predictors.as_ref().map(|_| "predictors.csv".into()),
            mobility: data.mobility.as_ref().map(|_| "mobility.csv".into()),
            start: Some(cfg.start),
            end: data.panel.dates.last().copied(),
            asymptomatic_rate_percent: cfg.asymptomatic_rate_percent,
            changepoints: data.mobility.as_ref().map(|m| m.period_lengths.clone()).unwrap_or_default(),
        },
        sampler: SamplerConfig { seed: cfg.seed, ..SamplerConfig::default() },
        priors: Default::default(),
        out: Some(format!("fit-{}", sc.preset.name).into()),
    };
    write_json(&out_dir.join(FIT_CONFIG), &fit)?;
    outputs.push(FileEntry::of("fit_config", &out_dir, FIT_CONFIG)?);

    let manifest = SimManifest {
        command: "simulate".into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        model: sc.preset.name.clone(),
        config: {
            let mut c = cfg.clone();
            c.map_paths(|p| Ok(relative_to(&out_dir, p)))?;
            c.out = Some(".".into());
            c
        },
        data_digest: data_digest(data, &sc.preset),
        depleted_everywhere: sim.depleted_everywhere,
        outputs,
    };
    write_json(&out_dir.join("manifest.json"), &manifest)?;
    Ok(SimResult { simulation: sim, manifest })
}
