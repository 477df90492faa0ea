use std::fmt::Write as _;
use std::path::Path;

use areal_sir::design::ModelData;
use areal_sir::diagnostics::{fit_report, FitReport};
use areal_sir::inference::{mcmc_run, ChainOutput, PseudoPrior};
use serde::{Deserialize, Serialize};

use crate::config::FitConfig;
use crate::error::{CliError, CliResult};
use crate::load::{data_digest, load_data, InputDigest};
use crate::output::{create_dir, encode_loglik, relative_to, write_bytes, write_json, FileEntry};

pub const MANIFEST: &str = "manifest.json";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TEXT: &str = "report.txt";
pub const LOGLIK: &str = "loglik.bin";
pub const CELLS: &str = "cells.csv";

pub fn draws_file(chain: usize) -> String {
    format!("draws_chain{}.csv", chain + 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitManifest {
    pub command: String,
    pub tool_version: String,
    pub model: String,
    pub config: FitConfig,
    pub data_digest: String,
    pub inputs: Vec<InputDigest>,
    pub n_areas: usize,
    pub n_days: usize,
    pub n_cells: usize,
    pub n_dropped_cells: usize,
    /// Negative daily increments in the case file that were set to zero.
    pub n_clamped_increments: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pseudo_priors: Vec<PseudoPrior>,
    pub outputs: Vec<FileEntry>,
}

impl FitManifest {
    pub fn read(run_dir: &Path) -> CliResult<Self> {
        let path = run_dir.join(MANIFEST);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
    }

    pub fn files<'a>(&'a self, role: &'a str) -> impl Iterator<Item = &'a FileEntry> {
        self.outputs.iter().filter(move |f| f.role == role)
    }
}

pub struct FitResult {
    pub report: FitReport,
    pub manifest: FitManifest,
}

fn draws_csv(model: &ModelData, chain: &ChainOutput) -> String {
    let layout = &model.layout;
    let mut out = layout.names().join(",");
    out.push('\n');
    for d in &chain.draws {
        let row: Vec<String> = layout.flatten(d).iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn cells_csv(model: &ModelData, data: &areal_sir::DataBundle) -> String {
    let mut out = String::from("column,fips,date,day\n");
    for (c, cell) in model.cells.iter().enumerate() {
        let _ = writeln!(out, "{c},{},{},{}", data.panel.area_ids[cell.area], data.panel.dates[cell.day], cell.day);
    }
    out
}

/// The config with every path relative to the run directory, so a manifest
/// stays valid when the tree containing the run and its inputs moves.
fn portable(cfg: &FitConfig, out_dir: &Path) -> CliResult<FitConfig> {
    let mut c = cfg.clone();
    c.map_paths(|p| Ok(relative_to(out_dir, p)))?;
    c.out = Some(".".into());
    Ok(c)
}

pub fn run(cfg: &FitConfig) -> CliResult<FitResult> {
    let preset = cfg.preset()?;
    let out_dir = cfg.out_dir()?.to_path_buf();
    let loaded = load_data(&cfg.data)?;
    let data = &loaded.data;
    preset.check_data(data).map_err(|e| CliError::config(e.to_string()))?;
    let model = ModelData::new(&preset, data)?;
    if model.n_cells() == 0 {
        return Err(CliError::data("no cell has susceptibles left to model"));
    }
    let chains = mcmc_run(&model, &cfg.priors, &cfg.sampler.controls())?;
    let report = fit_report(&model, &chains)?;

    create_dir(&out_dir)?;
    let mut outputs = Vec::new();
    for chain in &chains {
        let name = draws_file(chain.chain);
        write_bytes(&out_dir.join(&name), draws_csv(&model, chain).as_bytes())?;
        outputs.push(FileEntry::of("draws", &out_dir, &name)?);
    }
    let rows: Vec<&[f64]> = chains.iter().map(|c| c.pointwise_loglik.as_slice()).collect();
    write_bytes(&out_dir.join(LOGLIK), &encode_loglik(&rows, model.n_cells()))?;
    outputs.push(FileEntry::of("loglik", &out_dir, LOGLIK)?);
    write_bytes(&out_dir.join(CELLS), cells_csv(&model, data).as_bytes())?;
    outputs.push(FileEntry::of("cells", &out_dir, CELLS)?);
    write_json(&out_dir.join(REPORT_JSON), &report)?;
    outputs.push(FileEntry::of("report", &out_dir, REPORT_JSON)?);
    write_bytes(&out_dir.join(REPORT_TEXT), report.table().as_bytes())?;
    outputs.push(FileEntry::of("report_text", &out_dir, REPORT_TEXT)?);

    let manifest = FitManifest {
        command: "fit".into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        model: preset.name.clone(),
        config: portable(cfg, &out_dir)?,
        data_digest: data_digest(data, &preset),
        inputs: loaded
            .inputs
            .into_iter()
            .map(|i| InputDigest { path: relative_to(&out_dir, Path::new(&i.path)).display().to_string(), ..i })
            .collect(),
        n_areas: data.n_areas(),
        n_days: data.n_days(),
        n_cells: model.n_cells(),
        n_dropped_cells: model.dropped.len(),
        n_clamped_increments: data.panel.clamped,
        pseudo_priors: chains[0].pseudo_priors.clone(),
        outputs,
    };
    write_json(&out_dir.join(MANIFEST), &manifest)?;
    Ok(FitResult { report, manifest })
}
