mod common;

use areal_sir::data::susceptible_trajectory;
use areal_sir::design::ModelData;
use areal_sir::inference::likelihood::log_likelihood_pointwise;
use areal_sir::simulator::{simulate, SimScenario};
use areal_sir::{catalog, AdjacencyGraph, ParameterState, StateLayout};
use chrono::NaiveDate;
use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, Poisson};

/// 2A with the area effects pinned at zero, so only the intercept and self lag act.
fn null_scenario(graph: AdjacencyGraph, n_days: usize, s0: u64, alpha: [f64; 3]) -> SimScenario {
    let n = graph.n_areas();
    let preset = catalog("2A").unwrap();
    let layout = StateLayout::new(&preset, graph.area_ids(), n_days, 0, 0);
    let mut truth = ParameterState::zeros(&layout);
    truth.alpha = alpha;
    truth.tau_v = vec![1.0];
    SimScenario {
        graph,
        start_date: NaiveDate::from_ymd_opt(2020, 3, 6).unwrap(),
        n_days,
        population: vec![s0; n],
        preset,
        truth,
        seed_cases: vec![0; n],
        lambda: 0.0,
        death_rate: 0.0,
        death_lag: 0,
        predictors: None,
        mobility: None,
    }
}

#[test]
fn constant_rate_mean_matches_closed_form() {
    let s0 = 1_000_000_000u64;
    let sc = null_scenario(common::grid(10, 10), 101, s0, [(5.0 / s0 as f64).ln(), 0.0, 0.0]);
    let sim = simulate(&sc, 9).unwrap();
    let (mut total, mut expected, mut cells) = (0.0, 0.0, 0.0);
    for i in 0..100 {
        for j in 1..101 {
            total += sim.data.panel.cases[i][j] as f64;
            expected += 5.0 * sim.data.susceptible.s[i][j] / s0 as f64;
            cells += 1.0;
        }
    }
    assert_eq!(cells, 10_000.0);
    let mean = total / cells;
    let target = expected / cells;
    let se = (target / cells).sqrt();
    assert!((mean - target).abs() < 3.0 * se, "mean {mean}, expected {target} ± {se}");
}

#[test]
fn no_seeds_and_tiny_intercept_give_an_empty_panel() {
    let sc = null_scenario(common::grid(2, 5), 60, 100_000, [-20.0, 0.5, 0.0]);
    let sim = simulate(&sc, 0).unwrap();
    assert!(sim.data.panel.cases.iter().flatten().all(|&y| y == 0));
    let model = ModelData::new(&sc.preset, &sim.data).unwrap();
    assert!(log_likelihood_pointwise(&sim.truth, &model).unwrap().iter().all(|l| l.is_finite()));
}

#[test]
fn unseeded_component_stays_at_the_floor() {
    // Two paths of three areas with no edge between them.
    let ids: Vec<String> = (0..6).map(|i| format!("{:05}", 45001 + 2 * i)).collect();
    let edges = [(0, 1), (1, 2), (3, 4), (4, 5)].map(|(a, b)| (ids[a].clone(), ids[b].clone()));
    let graph = AdjacencyGraph::build(&edges, &ids).unwrap();
    let mut sc = null_scenario(graph, 40, 100_000, [-16.0, 0.8, 0.6]);
    sc.preset = catalog("4C").unwrap();
    sc.seed_cases = vec![50, 50, 50, 0, 0, 0];
    let floor = 100_000f64 * (-16f64).exp();
    let reps = 30;
    let (mut seeded, mut unseeded) = (Vec::new(), Vec::new());
    for seed in 0..reps {
        let sim = simulate(&sc, seed).unwrap();
        let total = |areas: std::ops::Range<usize>| -> f64 {
            areas.map(|i| sim.data.panel.cases[i][1..].iter().sum::<u64>() as f64).sum()
        };
        seeded.push(total(0..3));
        unseeded.push(total(3..6));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let var = |v: &[f64]| {
        let m = mean(v);
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
    };
    let se = ((var(&seeded) + var(&unseeded)) / reps as f64).sqrt();
    let z = (mean(&seeded) - mean(&unseeded)) / se;
    assert!(z > 3.0, "z = {z}");
    // Three areas over 39 days at the floor rate, with room for occasional
    // local amplification after a chance case.
    let floor_total = 3.0 * 39.0 * floor;
    assert!(mean(&unseeded) < 5.0 * floor_total + 1.0, "{} vs floor {floor_total}", mean(&unseeded));
}

#[test]
fn true_parameters_beat_inflated_self_lag() {
    for seed in 0..20 {
        let sc = common::scenario("2A", 60);
        let sim = simulate(&sc, seed).unwrap();
        let model = ModelData::new(&sc.preset, &sim.data).unwrap();
        let avg = |s: &ParameterState| {
            let ll = log_likelihood_pointwise(s, &model).unwrap();
            ll.iter().sum::<f64>() / ll.len() as f64
        };
        let mut perturbed = sim.truth.clone();
        perturbed.alpha[1] *= 1.5;
        assert!(avg(&sim.truth) > avg(&perturbed), "seed {seed}");
    }
}

#[test]
fn susceptible_trajectory_is_exact() {
    let mut sc = common::scenario("5B", 80);
    sc.death_rate = 0.05;
    sc.death_lag = 5;
    sc.lambda = 0.7;
    for seed in 0..5 {
        let sim = simulate(&sc, seed).unwrap();
        let recomputed = susceptible_trajectory(&sim.data.panel, sc.lambda).unwrap();
        assert_eq!(recomputed, sim.data.susceptible);
        for (i, row) in sim.data.susceptible.s.iter().enumerate() {
            assert_eq!(row[0], sc.population[i] as f64);
            assert!(row.windows(2).all(|w| w[1] <= w[0] && w[1] >= 0.0));
        }
        assert!(sim.data.panel.deaths.iter().flatten().any(|&d| d > 0));
    }
}

#[test]
fn same_seed_same_panel() {
    let sc = common::scenario("6B", 30);
    let a = simulate(&sc, 44).unwrap();
    let b = simulate(&sc, 44).unwrap();
    assert_eq!(a.data.panel, b.data.panel);
    assert_eq!(a.truth, b.truth);
    assert_ne!(simulate(&sc, 45).unwrap().data.panel, a.data.panel);
}

/// Pools cells into count bins with at least five expected observations each.
fn chi_square_p_value(counts: &[u64], means: &[f64]) -> f64 {
    let top = 30;
    let mut observed = vec![0.0; top + 1];
    let mut expected = vec![0.0; top + 1];
    for (&y, &mu) in counts.iter().zip(means) {
        observed[(y as usize).min(top)] += 1.0;
        let dist = Poisson::new(mu).unwrap();
        let mut cum = 0.0;
        for (k, e) in expected.iter_mut().enumerate().take(top) {
            let p = dist.pmf(k as u64);
            *e += p;
            cum += p;
        }
        expected[top] += 1.0 - cum;
    }
    let (mut bins, mut acc_o, mut acc_e) = (Vec::new(), 0.0, 0.0);
    for k in 0..=top {
        acc_o += observed[k];
        acc_e += expected[k];
        if acc_e >= 5.0 {
            bins.push((acc_o, acc_e));
            acc_o = 0.0;
            acc_e = 0.0;
        }
    }
    if let Some(last) = bins.last_mut() {
        last.0 += acc_o;
        last.1 += acc_e;
    }
    let stat: f64 = bins.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    1.0 - ChiSquared::new((bins.len() - 1) as f64).unwrap().cdf(stat)
}

#[test]
fn intercept_only_counts_pass_goodness_of_fit() {
    let s0 = 200_000u64;
    let sc = null_scenario(common::grid(2, 5), 101, s0, [(4.0 / s0 as f64).ln(), 0.0, 0.0]);
    let seeds = 200;
    let mut passed = 0;
    for seed in 0..seeds {
        let sim = simulate(&sc, seed).unwrap();
        let (mut counts, mut means) = (Vec::new(), Vec::new());
        for i in 0..10 {
            for j in 1..101 {
                counts.push(sim.data.panel.cases[i][j]);
                means.push(sim.data.susceptible.s[i][j] * sc.truth.alpha[0].exp());
            }
        }
        if chi_square_p_value(&counts, &means) > 0.01 {
            passed += 1;
        }
    }
    assert!(passed as f64 >= 0.95 * seeds as f64, "{passed}/{seeds}");
}
