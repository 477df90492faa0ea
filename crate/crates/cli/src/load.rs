//! Reads the files named in a fit config into a data bundle.

use std::collections::HashSet;

use areal_sir::data::{
    asymptomatic_lambda, ingest_cases, read_cases_csv, read_mobility_csv, read_population_csv, read_predictors_csv,
    MobilityPanel,
};
use areal_sir::{AdjacencyGraph, DataBundle, ModelPreset};
use serde::{Deserialize, Serialize};

use crate::config::{data_model_name, DataFiles};
use crate::error::{CliError, CliResult};
use crate::output::{file_sha256, Digester};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

pub struct Loaded {
    pub data: DataBundle,
    pub inputs: Vec<InputDigest>,
}

pub fn load_data(files: &DataFiles) -> CliResult<Loaded> {
    let population = read_population_csv(&files.population).map_err(|e| CliError::reading("population", e))?;
    if population.is_empty() {
        return Err(CliError::data("population file lists no areas"));
    }
    let mut seen = HashSet::new();
    for (id, pop) in &population {
        if !seen.insert(id.as_str()) {
            return Err(CliError::data(format!("population: duplicate area id `{id}`")));
        }
        if *pop == 0 {
            return Err(CliError::data(format!("population: area `{id}` has zero population")));
        }
    }
    let ids: Vec<String> = population.iter().map(|(id, _)| id.clone()).collect();
    let pops: Vec<u64> = population.iter().map(|(_, p)| *p).collect();
    let graph = AdjacencyGraph::from_csv(&files.adjacency, &ids).map_err(|e| CliError::reading("adjacency", e))?;

    let records = read_cases_csv(&files.cases).map_err(|e| CliError::reading("cases", e))?;
    let listed: Vec<_> = records.iter().filter(|r| seen.contains(r.fips.as_str())).map(|r| r.date).collect();
    let start = files.start.or_else(|| listed.iter().min().copied());
    let end = files.end.or_else(|| listed.iter().max().copied());
    let (Some(start), Some(end)) = (start, end) else {
        return Err(CliError::data("cases file has no rows for the listed areas"));
    };
    let panel = ingest_cases(&records, &ids, start, end, &pops).map_err(|e| CliError::reading("cases", e))?;
    let lambda = asymptomatic_lambda(files.asymptomatic_rate_percent).map_err(|e| CliError::config(e.to_string()))?;
    let mut data = DataBundle::new(graph, panel, lambda).map_err(|e| CliError::reading("cases", e))?;
    if let Some(p) = &files.predictors {
        let table = read_predictors_csv(p, &ids).map_err(|e| CliError::reading("predictors", e))?;
        data = data.with_predictors(table).map_err(|e| CliError::reading("predictors", e))?;
    }
    if let Some(m) = &files.mobility {
        let work = read_mobility_csv(m, &ids, &data.panel.dates).map_err(|e| CliError::reading("mobility", e))?;
        let panel = MobilityPanel::new(work, files.changepoints.clone()).map_err(|e| {
            CliError::config(format!("changepoints: {e} (the panel has {} days)", data.n_days()))
        })?;
        data = data.with_mobility(panel).map_err(|e| CliError::reading("mobility", e))?;
    }

    let mut inputs = Vec::new();
    let named = [
        ("cases", Some(&files.cases)),
        ("population", Some(&files.population)),
        ("adjacency", Some(&files.adjacency)),
        ("predictors", files.predictors.as_ref()),
        ("mobility", files.mobility.as_ref()),
    ];
    for (role, path) in named {
        if let Some(path) = path {
            inputs.push(InputDigest { role: role.into(), path: path.display().to_string(), sha256: file_sha256(path)? });
        }
    }
    Ok(Loaded { data, inputs })
}

/// Digest of the modeled response: the panel, the susceptible accounting and
/// the data model. Runs with equal digests have comparable WAIC values.
pub fn data_digest(data: &DataBundle, preset: &ModelPreset) -> String {
    let mut d = Digester::default();
    d.line(data_model_name(preset));
    d.line(&format!("lambda {:?}", data.susceptible.lambda));
    d.line(&data.panel.dates.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","));
    for i in 0..data.n_areas() {
        d.line(&format!("{} {}", data.panel.area_ids[i], data.panel.population[i]));
        d.line(&data.panel.cases[i].iter().map(u64::to_string).collect::<Vec<_>>().join(","));
        d.line(&data.panel.deaths[i].iter().map(u64::to_string).collect::<Vec<_>>().join(","));
    }
    d.finish()
}
