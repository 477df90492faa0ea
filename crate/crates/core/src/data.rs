//! Ingestion and derivation of case panels.
//!
//! Raw inputs arrive as cumulative NYT-style records, per-area population,
//! deprivation predictors and Google work-index mobility. Everything here is a
//! pure function of its inputs.

use std::collections::HashMap;
use std::path::Path;

use chrono::NaiveDate;
use serde::Deserialize;

use crate::error::{Error, Result};

/// One cumulative record from a cases file.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct CumulativeRecord {
    pub date: NaiveDate,
    pub fips: String,
    pub cases: u64,
    pub deaths: u64,
}

/// Daily new cases and deaths, one row per area.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseSeriesPanel {
    pub area_ids: Vec<String>,
    pub dates: Vec<NaiveDate>,
    pub cases: Vec<Vec<u64>>,
    pub deaths: Vec<Vec<u64>>,
    pub population: Vec<u64>,
    /// Number of negative daily increments clamped to zero during ingestion.
    pub clamped: usize,
}

impl CaseSeriesPanel {
    pub fn n_areas(&self) -> usize {
        self.area_ids.len()
    }

    pub fn n_days(&self) -> usize {
        self.dates.len()
    }

    /// Consistency checks on dimensions, dates and populations.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_areas();
        let j = self.n_days();
        if self.cases.len() != n || self.deaths.len() != n || self.population.len() != n {
            return Err(Error::InvalidData("panel rows do not match area count".into()));
        }
        if self.cases.iter().chain(&self.deaths).any(|row| row.len() != j) {
            return Err(Error::InvalidData("panel columns do not match day count".into()));
        }
        for w in self.dates.windows(2) {
            if w[1] != w[0] + chrono::Duration::days(1) {
                return Err(Error::NonMonotoneDates { area: "*".into(), date: w[1].to_string() });
            }
        }
        if let Some(i) = self.population.iter().position(|&p| p == 0) {
            return Err(Error::InvalidData(format!(
                "population of area `{}` must be positive",
                self.area_ids[i]
            )));
        }
        Ok(())
    }

    /// Cumulative records reproducing this panel, in date-major order.
    pub fn to_cumulative(&self) -> Vec<CumulativeRecord> {
        let mut cum_cases = vec![0u64; self.n_areas()];
        let mut cum_deaths = vec![0u64; self.n_areas()];
        let mut out = Vec::with_capacity(self.n_areas() * self.n_days());
        for (j, date) in self.dates.iter().enumerate() {
            for i in 0..self.n_areas() {
                cum_cases[i] += self.cases[i][j];
                cum_deaths[i] += self.deaths[i][j];
                out.push(CumulativeRecord {
                    date: *date,
                    fips: self.area_ids[i].clone(),
                    cases: cum_cases[i],
                    deaths: cum_deaths[i],
                });
            }
        }
        out
    }
}

/// Reads a cases file with columns `date,county,state,fips,cases,deaths`.
pub fn read_cases_csv(path: impl AsRef<Path>) -> Result<Vec<CumulativeRecord>> {
    #[derive(Deserialize)]
    struct Row {
        date: NaiveDate,
        fips: String,
        cases: f64,
        deaths: Option<f64>,
    }
    let mut reader = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in reader.deserialize() {
        let row: Row = row?;
        if row.fips.is_empty() {
            continue;
        }
        out.push(CumulativeRecord {
            date: row.date,
            fips: row.fips,
            cases: row.cases.max(0.0) as u64,
            deaths: row.deaths.unwrap_or(0.0).max(0.0) as u64,
        });
    }
    Ok(out)
}

/// Writes cumulative records in the same shape `read_cases_csv` expects.
pub fn write_cases_csv(
    path: impl AsRef<Path>,
    records: &[CumulativeRecord],
    county_names: &HashMap<String, String>,
    state: &str,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["date", "county", "state", "fips", "cases", "deaths"])?;
    for r in records {
        let county = county_names.get(&r.fips).map(String::as_str).unwrap_or(&r.fips);
        w.write_record([
            r.date.to_string().as_str(),
            county,
            state,
            &r.fips,
            &r.cases.to_string(),
            &r.deaths.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a population file with columns `fips,population`, preserving row order.
pub fn read_population_csv(path: impl AsRef<Path>) -> Result<Vec<(String, u64)>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in reader.deserialize() {
        let (fips, pop): (String, u64) = row?;
        out.push((fips, pop));
    }
    Ok(out)
}

pub fn write_population_csv(path: impl AsRef<Path>, area_ids: &[String], population: &[u64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["fips", "population"])?;
    for (id, p) in area_ids.iter().zip(population) {
        w.write_record([id.as_str(), &p.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Converts cumulative records into daily increments over `[start, end]`.
///
/// Dates missing for an area carry the last cumulative value forward, which
/// yields a zero increment. The day before `start` is used as the baseline when
/// present; otherwise the baseline is zero. Negative increments are clamped to
/// zero and counted in `clamped`.
pub fn ingest_cases(
    records: &[CumulativeRecord],
    area_ids: &[String],
    start: NaiveDate,
    end: NaiveDate,
    population: &[u64],
) -> Result<CaseSeriesPanel> {
    if start > end {
        return Err(Error::EmptyDateRange);
    }
    if population.len() != area_ids.len() {
        return Err(Error::InvalidData("population length does not match area count".into()));
    }
    let index: HashMap<&str, usize> = area_ids.iter().enumerate().map(|(i, a)| (a.as_str(), i)).collect();
    let mut by_area: Vec<Vec<&CumulativeRecord>> = vec![Vec::new(); area_ids.len()];
    for r in records {
        if let Some(&i) = index.get(r.fips.as_str()) {
            if let Some(prev) = by_area[i].last() {
                if r.date <= prev.date {
                    return Err(Error::NonMonotoneDates { area: r.fips.clone(), date: r.date.to_string() });
                }
            }
            by_area[i].push(r);
        }
    }
    if let Some(i) = by_area.iter().position(Vec::is_empty) {
        return Err(Error::UnknownAreaId(area_ids[i].clone()));
    }

    let n_days = (end - start).num_days() as usize + 1;
    let dates: Vec<NaiveDate> = (0..n_days).map(|d| start + chrono::Duration::days(d as i64)).collect();
    let mut cases = Vec::with_capacity(area_ids.len());
    let mut deaths = Vec::with_capacity(area_ids.len());
    let mut clamped = 0;
    for rows in &by_area {
        // Cumulative values carried forward onto the daily grid.
        let mut pos = 0;
        let mut last = (0u64, 0u64);
        while pos < rows.len() && rows[pos].date < start {
            last = (rows[pos].cases, rows[pos].deaths);
            pos += 1;
        }
        let mut c_row = Vec::with_capacity(n_days);
        let mut d_row = Vec::with_capacity(n_days);
        for date in &dates {
            let prev = last;
            if pos < rows.len() && rows[pos].date == *date {
                last = (rows[pos].cases, rows[pos].deaths);
                pos += 1;
            }
            let dc = last.0 as i64 - prev.0 as i64;
            let dd = last.1 as i64 - prev.1 as i64;
            if dc < 0 {
                clamped += 1;
            }
            if dd < 0 {
                clamped += 1;
            }
            c_row.push(dc.max(0) as u64);
            d_row.push(dd.max(0) as u64);
        }
        cases.push(c_row);
        deaths.push(d_row);
    }
    if clamped > 0 {
        log::warn!("{clamped} negative daily increments clamped to zero");
    }
    let panel = CaseSeriesPanel {
        area_ids: area_ids.to_vec(),
        dates,
        cases,
        deaths,
        population: population.to_vec(),
        clamped,
    };
    panel.validate()?;
    Ok(panel)
}

/// Trailing three-day mean of daily counts, shrinking the window at the start.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedPanel {
    pub values: Vec<Vec<f64>>,
}

pub fn three_day_average(panel: &CaseSeriesPanel) -> Result<SmoothedPanel> {
    if panel.n_days() < 3 {
        return Err(Error::TooShortSeries(panel.n_days()));
    }
    let values = panel.cases.iter().map(|row| trailing_mean(row, 3)).collect();
    Ok(SmoothedPanel { values })
}

fn trailing_mean(row: &[u64], width: usize) -> Vec<f64> {
    (0..row.len())
        .map(|j| {
            let lo = j.saturating_sub(width - 1);
            let window = &row[lo..=j];
            window.iter().sum::<u64>() as f64 / window.len() as f64
        })
        .collect()
}

/// Susceptible counts per area and day.
#[derive(Debug, Clone, PartialEq)]
pub struct SusceptibleTrajectory {
    pub s: Vec<Vec<f64>>,
    pub lambda: f64,
}

/// Runs the accounting equation `S_j = S_{j-1} - (1 + λ) y_{j-1} - d_{j-1}`,
/// floored at zero.
pub fn susceptible_trajectory(panel: &CaseSeriesPanel, lambda: f64) -> Result<SusceptibleTrajectory> {
    if !(lambda >= 0.0) {
        return Err(Error::NegativeLambda(lambda));
    }
    let s = (0..panel.n_areas())
        .map(|i| {
            let mut row = Vec::with_capacity(panel.n_days());
            let mut current = panel.population[i] as f64;
            row.push(current);
            for j in 1..panel.n_days() {
                current = susceptible_step(current, panel.cases[i][j - 1] as f64, panel.deaths[i][j - 1] as f64, lambda);
                row.push(current);
            }
            row
        })
        .collect();
    Ok(SusceptibleTrajectory { s, lambda })
}

/// One step of the accounting equation.
pub fn susceptible_step(s_prev: f64, cases_prev: f64, removals_prev: f64, lambda: f64) -> f64 {
    (s_prev - (1.0 + lambda) * cases_prev - removals_prev).max(0.0)
}

/// Maps an asymptomatic share of total infections (percent) to the multiplier
/// on observed cases.
pub fn asymptomatic_lambda(rate_percent: f64) -> Result<f64> {
    if !(0.0..100.0).contains(&rate_percent) {
        return Err(Error::RateOutOfRange(rate_percent));
    }
    let r = rate_percent / 100.0;
    Ok(r / (1.0 - r))
}

/// Assigns each day (in order) to its 1-based change-point period.
pub fn changepoint_index(period_lengths: &[usize], n_days: usize) -> Result<Vec<usize>> {
    let sum: usize = period_lengths.iter().sum();
    if sum != n_days || period_lengths.iter().any(|&l| l == 0) {
        return Err(Error::LengthMismatch { sum, expected: n_days });
    }
    Ok(period_lengths
        .iter()
        .enumerate()
        .flat_map(|(p, &len)| std::iter::repeat_n(p + 1, len))
        .collect())
}

/// Area-level predictors, raw and standardized (zero mean, unit sample sd).
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorTable {
    pub names: Vec<String>,
    pub raw: Vec<Vec<f64>>,
    pub standardized: Vec<Vec<f64>>,
}

impl PredictorTable {
    pub fn new(names: Vec<String>, raw: Vec<Vec<f64>>) -> Result<Self> {
        let k = names.len();
        let n = raw.len();
        if n < 2 {
            return Err(Error::InvalidData("predictors need at least two areas".into()));
        }
        if raw.iter().any(|r| r.len() != k || r.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidData("predictor rows must be complete and finite".into()));
        }
        let mut standardized = raw.clone();
        for c in 0..k {
            let mean = raw.iter().map(|r| r[c]).sum::<f64>() / n as f64;
            let var = raw.iter().map(|r| (r[c] - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let sd = var.sqrt();
            if !(sd > 0.0) {
                return Err(Error::InvalidData(format!("predictor `{}` is constant", names[c])));
            }
            for (row, z) in raw.iter().zip(standardized.iter_mut()) {
                z[c] = (row[c] - mean) / sd;
            }
        }
        Ok(Self { names, raw, standardized })
    }

    pub fn n_predictors(&self) -> usize {
        self.names.len()
    }
}

pub const PREDICTOR_COLUMNS: [&str; 3] = ["pct_poverty", "pct_black", "mdi17"];

/// Reads `fips,pct_poverty,pct_black,mdi17`, ordered by `area_ids`.
pub fn read_predictors_csv(path: impl AsRef<Path>, area_ids: &[String]) -> Result<PredictorTable> {
    #[derive(Deserialize)]
    struct Row {
        fips: String,
        pct_poverty: Option<f64>,
        pct_black: Option<f64>,
        mdi17: Option<f64>,
    }
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows = HashMap::new();
    for row in reader.deserialize() {
        let row: Row = row?;
        rows.insert(row.fips.clone(), row);
    }
    let mut raw = Vec::with_capacity(area_ids.len());
    for id in area_ids {
        let row = rows.get(id).ok_or_else(|| Error::MissingValue { area: id.clone(), what: "predictors".into() })?;
        let vals = [row.pct_poverty, row.pct_black, row.mdi17];
        let vals: Option<Vec<f64>> = vals.into_iter().collect();
        raw.push(vals.ok_or_else(|| Error::MissingValue { area: id.clone(), what: "predictors".into() })?);
    }
    PredictorTable::new(PREDICTOR_COLUMNS.iter().map(|s| s.to_string()).collect(), raw)
}

pub fn write_predictors_csv(path: impl AsRef<Path>, area_ids: &[String], table: &PredictorTable) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["fips".to_string()];
    header.extend(table.names.iter().cloned());
    w.write_record(&header)?;
    for (id, row) in area_ids.iter().zip(&table.raw) {
        let mut rec = vec![id.clone()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Work-index mobility aligned to a panel's dates, with change-point periods.
#[derive(Debug, Clone, PartialEq)]
pub struct MobilityPanel {
    pub work: Vec<Vec<f64>>,
    pub period_lengths: Vec<usize>,
    pub period_index: Vec<usize>,
}

impl MobilityPanel {
    pub fn new(work: Vec<Vec<f64>>, period_lengths: Vec<usize>) -> Result<Self> {
        let n_days = work.first().map_or(0, Vec::len);
        if work.iter().any(|r| r.len() != n_days) {
            return Err(Error::InvalidData("mobility rows have unequal lengths".into()));
        }
        let period_index = changepoint_index(&period_lengths, n_days)?;
        Ok(Self { work, period_lengths, period_index })
    }

    pub fn n_periods(&self) -> usize {
        self.period_lengths.len()
    }
}

/// Reads `date,fips,work_index` and aligns it to `dates`. Missing cells take the
/// area's last observed value; leading gaps are zero.
pub fn read_mobility_csv(
    path: impl AsRef<Path>,
    area_ids: &[String],
    dates: &[NaiveDate],
) -> Result<Vec<Vec<f64>>> {
    #[derive(Deserialize)]
    struct Row {
        date: NaiveDate,
        fips: String,
        work_index: Option<f64>,
    }
    let index: HashMap<&str, usize> = area_ids.iter().enumerate().map(|(i, a)| (a.as_str(), i)).collect();
    let day: HashMap<NaiveDate, usize> = dates.iter().enumerate().map(|(j, d)| (*d, j)).collect();
    let mut cells: Vec<Vec<Option<f64>>> = vec![vec![None; dates.len()]; area_ids.len()];
    let mut reader = csv::Reader::from_path(path)?;
    for row in reader.deserialize() {
        let row: Row = row?;
        if let (Some(&i), Some(&j)) = (index.get(row.fips.as_str()), day.get(&row.date)) {
            cells[i][j] = row.work_index.filter(|v| v.is_finite());
        }
    }
    Ok(cells
        .into_iter()
        .map(|row| {
            let mut last = 0.0;
            row.into_iter()
                .map(|v| {
                    if let Some(v) = v {
                        last = v;
                    }
                    last
                })
                .collect()
        })
        .collect())
}

pub fn write_mobility_csv(
    path: impl AsRef<Path>,
    area_ids: &[String],
    dates: &[NaiveDate],
    work: &[Vec<f64>],
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["date", "fips", "work_index"])?;
    for (j, d) in dates.iter().enumerate() {
        for (i, id) in area_ids.iter().enumerate() {
            w.write_record([d.to_string().as_str(), id, &work[i][j].to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}
