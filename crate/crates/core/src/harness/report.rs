//! Aggregated result tables and plot-data files.
//!
//! Every file is comma-separated text with a header row:
//!
//! * `report.csv`: one [`ReportRow`] per method.
//! * `learning_curves.csv`: `method,seed,episode,cost,shed_mwh,team_reward`.
//! * `trajectories.csv`: per-slot ESS power and SoC for each method and test
//!   day, with `outage_onset` / `outage_offset` marker columns (slot indices,
//!   empty when the day has no outage) and a 0/1 `in_outage` flag.
//! * `days.csv`: `method,seed,day,cost,shed_mwh,soc_violations,max_residual,outage_onset,outage_offset`.
//! * `lambda_sweep.csv`: one [`LambdaRow`] per shedding price.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maddpg::EpisodeMetrics;
use crate::policy::DayRecord;

pub const REPORT_HEADER: [&str; 6] =
    ["method", "avg_cost", "highest_cost", "lowest_cost", "avg_load_shedding", "computation_time_s"];

/// Test-set summary of one method. Costs are $/day; shedding is MWh/day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    pub avg_cost: f64,
    pub highest_cost: f64,
    pub lowest_cost: f64,
    pub avg_load_shedding: f64,
    pub computation_time_s: f64,
}

impl ReportRow {
    pub fn from_days(method: &str, days: &[DayRecord], computation_time_s: f64) -> Result<Self> {
        if days.is_empty() {
            return Err(Error::InvalidInput(format!("no evaluation days for {method}")));
        }
        let n = days.len() as f64;
        Ok(Self {
            method: method.to_string(),
            avg_cost: days.iter().map(|d| d.cost).sum::<f64>() / n,
            highest_cost: days.iter().map(|d| d.cost).fold(f64::NEG_INFINITY, f64::max),
            lowest_cost: days.iter().map(|d| d.cost).fold(f64::INFINITY, f64::min),
            avg_load_shedding: days.iter().map(|d| d.shed_mwh).sum::<f64>() / n,
            computation_time_s,
        })
    }

    /// Same row with the timing column zeroed, for byte-level comparisons.
    pub fn without_timing(&self) -> Self {
        Self { computation_time_s: 0.0, ..self.clone() }
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| Error::Io(std::io::Error::other(e)))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

pub fn write_report(path: &Path, rows: &[ReportRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_report(path: &Path) -> Result<Vec<ReportRow>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

pub fn write_learning_curves(path: &Path, curves: &[(String, u64, Vec<EpisodeMetrics>)]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "method,seed,episode,cost,shed_mwh,team_reward")?;
    for (method, seed, rows) in curves {
        for m in rows {
            writeln!(f, "{method},{seed},{},{},{},{}", m.episode, m.cost, m.shed_mwh, m.team_reward)?;
        }
    }
    Ok(())
}

pub fn write_trajectories(path: &Path, runs: &[(String, Vec<DayRecord>)]) -> Result<()> {
    let n_ess = runs.iter().flat_map(|(_, d)| d.iter()).flat_map(|d| d.slots.first()).map(|s| s.p_ess.len()).next();
    let n_ess = n_ess.unwrap_or(0);
    let mut f = std::fs::File::create(path)?;
    let mut header = vec!["method".to_string(), "day".into(), "slot".into(), "connected".into()];
    header.extend((1..=n_ess).map(|j| format!("p_ess_{j}")));
    header.extend((1..=n_ess).map(|j| format!("soc_{j}")));
    header.extend(["p_grid", "p_gen", "alpha", "cost", "in_outage", "outage_onset", "outage_offset"].map(String::from));
    writeln!(f, "{}", header.join(","))?;
    for (method, days) in runs {
        for d in days {
            let (onset, offset) = match d.outage {
                Some(o) => (o.onset_slot.to_string(), (o.onset_slot + o.duration_slots).to_string()),
                None => (String::new(), String::new()),
            };
            for s in &d.slots {
                let mut row = vec![method.clone(), d.day.to_string(), s.slot.to_string(), u8::from(s.connected).to_string()];
                row.extend(s.p_ess.iter().map(|p| p.to_string()));
                row.extend(s.soc.iter().map(|p| p.to_string()));
                let in_outage = d.outage.is_some_and(|o| o.covers(s.slot));
                row.extend([
                    s.p_grid.to_string(),
                    s.p_gen.to_string(),
                    s.alpha.to_string(),
                    s.cost.to_string(),
                    u8::from(in_outage).to_string(),
                    onset.clone(),
                    offset.clone(),
                ]);
                writeln!(f, "{}", row.join(","))?;
            }
        }
    }
    Ok(())
}

pub fn write_days(path: &Path, runs: &[(String, u64, Vec<DayRecord>)]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "method,seed,day,cost,shed_mwh,soc_violations,max_residual,outage_onset,outage_offset")?;
    for (method, seed, days) in runs {
        for d in days {
            let (onset, offset) = match d.outage {
                Some(o) => (o.onset_slot.to_string(), (o.onset_slot + o.duration_slots).to_string()),
                None => (String::new(), String::new()),
            };
            writeln!(
                f,
                "{method},{seed},{},{},{},{},{},{onset},{offset}",
                d.day, d.cost, d.shed_mwh, d.soc_violations, d.max_residual
            )?;
        }
    }
    Ok(())
}

/// One row of the shedding-price sensitivity table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaRow {
    pub lambda_load: f64,
    /// Mean daily shedding penalty, $/day.
    pub avg_shed_cost: f64,
    /// MWh/day.
    pub avg_load_shedding: f64,
}

pub fn write_lambda_sweep(path: &Path, rows: &[LambdaRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, 0.0);
    }
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}
