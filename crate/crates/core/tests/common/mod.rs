#![allow(dead_code)]

use areal_sir::data::{MobilityPanel, PredictorTable};
use areal_sir::simulator::SimScenario;
use areal_sir::{catalog, AdjacencyGraph, ParameterState, StateLayout};
use chrono::NaiveDate;

/// Rook-contiguity lattice with five-digit ids.
pub fn grid(rows: usize, cols: usize) -> AdjacencyGraph {
    let ids: Vec<String> = (0..rows * cols).map(|i| format!("{:05}", 45001 + 2 * i)).collect();
    let mut edges = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let i = r * cols + c;
            if c + 1 < cols {
                edges.push((ids[i].clone(), ids[i + 1].clone()));
            }
            if r + 1 < rows {
                edges.push((ids[i].clone(), ids[i + cols].clone()));
            }
        }
    }
    AdjacencyGraph::build(&edges, &ids).unwrap()
}

pub fn predictors(n: usize) -> PredictorTable {
    let raw = (0..n).map(|i| vec![(i as f64 * 1.7).sin(), (i as f64 * 0.9).cos(), (i % 3) as f64]).collect();
    PredictorTable::new(vec!["x1".into(), "x2".into(), "x3".into()], raw).unwrap()
}

pub fn mobility(n: usize, days: usize) -> MobilityPanel {
    let work = (0..n).map(|i| (0..days).map(|j| -40.0 * j as f64 / days as f64 + i as f64).collect()).collect();
    let third = days / 3;
    MobilityPanel::new(work, vec![third, third, days - 2 * third]).unwrap()
}

/// A moderate scenario for any preset on a `2 × 5` lattice; random effects
/// are drawn from their priors.
pub fn scenario(name: &str, days: usize) -> SimScenario {
    let graph = grid(2, 5);
    let n = graph.n_areas();
    let preset = catalog(name).unwrap();
    let layout = StateLayout::new(&preset, graph.area_ids(), days, 3, 3);
    let mut truth = ParameterState::zeros(&layout);
    let lognormal = preset.data_model.is_lognormal();
    truth.alpha = match (lognormal, layout.neighbor_lag) {
        (false, true) => [-8.5, 0.5, 0.25],
        (false, false) => [-8.5, 0.75, 0.0],
        (true, false) => [-9.5, 0.5, 0.0],
        (true, true) => [-10.0, 0.4, 0.2],
    };
    if !truth.theta.is_empty() {
        truth.theta = vec![0.3, -0.2, 0.0];
    }
    if !truth.eta.is_empty() {
        truth.eta = vec![0.004, 0.002, -0.003];
    }
    truth.gamma = if layout.gvs { vec![true, true, false] } else { Vec::new() };
    truth.v.clear();
    truth.u.clear();
    truth.tau_v.iter_mut().for_each(|t| *t = 25.0);
    truth.tau_u = truth.tau_u.map(|_| 10.0);
    truth.tau_y.iter_mut().for_each(|t| *t = 20.0);
    SimScenario {
        graph,
        start_date: NaiveDate::from_ymd_opt(2020, 3, 6).unwrap(),
        n_days: days,
        population: (0..n).map(|i| 40_000 + 9_000 * i as u64).collect(),
        preset,
        truth,
        seed_cases: vec![3; n],
        lambda: 1.0,
        death_rate: 0.0,
        death_lag: 0,
        predictors: (layout.n_predictors > 0).then(|| predictors(n)),
        mobility: (layout.n_periods > 0).then(|| mobility(n, days)),
    }
}
