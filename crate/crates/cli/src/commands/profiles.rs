use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use areal_sir::data::MobilityPanel;
use areal_sir::diagnostics::quantile_sorted;
use areal_sir::model::log_mean;
use areal_sir::{ParameterState, StateLayout};

use super::fit::FitManifest;
use crate::error::{CliError, CliResult};
use crate::load::load_data;
use crate::output::{create_dir, write_bytes};

fn read_draws(path: &Path, layout: &StateLayout) -> CliResult<Vec<ParameterState>> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    if header != layout.names() {
        return Err(CliError::data(format!("{}: columns do not match the model", path.display())));
    }
    lines
        .map(|line| {
            let values: Result<Vec<f64>, _> = line.split(',').map(str::parse).collect();
            let values = values.map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
            layout.unflatten(&values).map_err(CliError::from)
        })
        .collect()
}

pub fn profile_file(area: &str) -> String {
    format!("profile_{area}.csv")
}

/// Writes one CSV per requested area (all areas when `areas` is empty) and
/// returns the paths written.
pub fn run(run_dir: &Path, areas: &[String], out: Option<&Path>) -> CliResult<Vec<PathBuf>> {
    let manifest = FitManifest::read(run_dir)?;
    let mut cfg = manifest.config.clone();
    cfg.map_paths(|p| Ok(crate::output::resolve(run_dir, p)))?;
    let cfg = &cfg;
    let preset = cfg.preset()?;
    let data = load_data(&cfg.data)?.data;
    let ids = data.graph.area_ids().to_vec();
    let wanted: Vec<usize> = if areas.is_empty() {
        (0..ids.len()).collect()
    } else {
        areas
            .iter()
            .map(|a| data.graph.index_of(a).ok_or_else(|| CliError::data(format!("unknown area id `{a}`"))))
            .collect::<CliResult<_>>()?
    };
    let n_pred = data.predictors.as_ref().map_or(0, |p| p.n_predictors());
    let n_periods = data.mobility.as_ref().map_or(0, MobilityPanel::n_periods);
    let layout = StateLayout::new(&preset, &ids, data.n_days(), n_pred, n_periods);
    let mut draws = Vec::new();
    for entry in manifest.files("draws") {
        draws.extend(read_draws(&run_dir.join(&entry.file), &layout)?);
    }
    if draws.is_empty() {
        return Err(CliError::data("run has no retained draws"));
    }

    let out_dir = out.map_or_else(|| run_dir.join("profiles"), Path::to_path_buf);
    create_dir(&out_dir)?;
    let mut written = Vec::new();
    let mut mu = vec![0.0; draws.len()];
    for &i in &wanted {
        let mut text = String::from("date,observed,mu_mean,mu_q025,mu_q975\n");
        for j in 0..data.n_days() {
            let date = data.panel.dates[j];
            let observed = data.panel.cases[i][j];
            if j == 0 || data.susceptible.s[i][j] <= 0.0 {
                let _ = writeln!(text, "{date},{observed},,,");
                continue;
            }
            for (m, d) in mu.iter_mut().zip(&draws) {
                *m = log_mean(&preset, d, &data, i, j)?.exp();
            }
            let mean = mu.iter().sum::<f64>() / mu.len() as f64;
            mu.sort_by(f64::total_cmp);
            let _ = writeln!(
                text,
                "{date},{observed},{mean:?},{:?},{:?}",
                quantile_sorted(&mu, 0.025),
                quantile_sorted(&mu, 0.975)
            );
        }
        let path = out_dir.join(profile_file(&ids[i]));
        write_bytes(&path, text.as_bytes())?;
        written.push(path);
    }
    Ok(written)
}
