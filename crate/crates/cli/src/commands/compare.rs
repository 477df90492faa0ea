use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use areal_sir::diagnostics::FitReport;

use super::fit::{FitManifest, REPORT_JSON};
use crate::error::{CliError, CliResult};
use crate::output::write_bytes;

pub const COMPARISON: &str = "comparison.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub run: PathBuf,
    pub model: String,
    pub mean_deviance: f64,
    pub waic: f64,
    pub p_waic: f64,
}

fn read_report(dir: &Path) -> CliResult<FitReport> {
    let path = dir.join(REPORT_JSON);
    let text =
        std::fs::read_to_string(&path).map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

/// Rows sorted by WAIC; ties keep the order the runs were given in.
pub fn compare(runs: &[PathBuf]) -> CliResult<Vec<Row>> {
    if runs.len() < 2 {
        return Err(CliError::config("compare needs at least two runs"));
    }
    let mut digest: Option<(String, &Path)> = None;
    let mut rows = Vec::with_capacity(runs.len());
    for dir in runs {
        let manifest = FitManifest::read(dir)?;
        match &digest {
            None => digest = Some((manifest.data_digest.clone(), dir)),
            Some((d, first)) if *d != manifest.data_digest => {
                return Err(CliError::data(format!(
                    "runs {} and {} were fitted to different data (digests differ)",
                    first.display(),
                    dir.display()
                )))
            }
            Some(_) => {}
        }
        let report = read_report(dir)?;
        rows.push(Row {
            run: dir.clone(),
            model: report.model,
            mean_deviance: report.mean_deviance,
            waic: report.waic,
            p_waic: report.p_waic,
        });
    }
    rows.sort_by(|a, b| a.waic.total_cmp(&b.waic));
    Ok(rows)
}

pub fn table(rows: &[Row]) -> String {
    let mut out = format!("{:<12} {:>16} {:>16} {:>10}  {}\n", "Model", "Mean deviance", "WAIC", "pWAIC", "Run");
    for r in rows {
        let _ = writeln!(
            out,
            "{:<12} {:>16.2} {:>16.2} {:>10.2}  {}",
            r.model,
            r.mean_deviance,
            r.waic,
            r.p_waic,
            r.run.display()
        );
    }
    out
}

pub fn write_csv(path: &Path, rows: &[Row]) -> CliResult<()> {
    let mut out = String::from("model,mean_deviance,waic,p_waic,run\n");
    for r in rows {
        let _ = writeln!(out, "{},{:?},{:?},{:?},{}", r.model, r.mean_deviance, r.waic, r.p_waic, r.run.display());
    }
    write_bytes(path, out.as_bytes())
}
