//! Quarter-hourly PV/load series: CSV ingestion, capacity scaling, synthetic
//! generation, forecast-error injection and stress perturbation.
//!
//! CSV schema: a header row whose first column is `timestamp`
//! (`YYYY-MM-DD HH:MM[:SS]` or RFC 3339), followed by either one column per
//! device named after the device id (`PV1`, ..., `Load1`, ...) or the two
//! aggregate columns `pv` and `load`, which are split across devices in
//! proportion to capacity.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{NaiveDate, NaiveDateTime, Timelike};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::MicrogridConfig;
use crate::rng::SeedStreams;

/// Per-device series over whole days, indexed `[device][day * slots + t]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesSet {
    pub slots_per_day: usize,
    pub dates: Vec<NaiveDate>,
    pub pv: Vec<Vec<f64>>,
    pub load: Vec<Vec<f64>>,
}

/// One day cut out of a [`SeriesSet`], indexed `[device][t]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DaySeries {
    pub date: NaiveDate,
    pub pv: Vec<Vec<f64>>,
    pub load: Vec<Vec<f64>>,
}

impl DaySeries {
    pub fn slots(&self) -> usize {
        self.pv.first().or(self.load.first()).map_or(0, Vec::len)
    }

    pub fn pv_at(&self, t: usize) -> Vec<f64> {
        self.pv.iter().map(|s| s[t]).collect()
    }

    pub fn load_at(&self, t: usize) -> Vec<f64> {
        self.load.iter().map(|s| s[t]).collect()
    }

    pub fn pv_energy(&self, dt: f64) -> f64 {
        self.pv.iter().flatten().sum::<f64>() * dt
    }
}

impl SeriesSet {
    pub fn days(&self) -> usize {
        self.dates.len()
    }

    pub fn day(&self, d: usize) -> DaySeries {
        let s = self.slots_per_day;
        let cut = |v: &Vec<Vec<f64>>| v.iter().map(|x| x[d * s..(d + 1) * s].to_vec()).collect();
        DaySeries { date: self.dates[d], pv: cut(&self.pv), load: cut(&self.load) }
    }

    pub fn check_bounds(&self, config: &MicrogridConfig) -> Result<()> {
        let check = |name: &str, series: &[Vec<f64>], caps: Vec<f64>| -> Result<()> {
            for (i, (s, cap)) in series.iter().zip(caps).enumerate() {
                if let Some(v) = s.iter().find(|v| !(**v >= 0.0 && **v <= cap + 1e-9)) {
                    return Err(Error::InvalidInput(format!("{name} {i}: value {v} outside [0, {cap}]")));
                }
            }
            Ok(())
        };
        check("pv", &self.pv, config.pv.iter().map(|p| p.p_max).collect())?;
        check("load", &self.load, config.loads.iter().map(|l| l.p_max).collect())
    }

    /// SHA-256 over dimensions and the little-endian bytes of every value.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.slots_per_day as u64).to_le_bytes());
        for d in &self.dates {
            h.update(d.to_string().as_bytes());
        }
        for s in self.pv.iter().chain(&self.load) {
            h.update((s.len() as u64).to_le_bytes());
            for v in s {
                h.update(v.to_le_bytes());
            }
        }
        hex(&h.finalize())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    chrono::DateTime::parse_from_rfc3339(s)
        .map(|d| d.naive_local())
        .ok()
        .or_else(|| NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S").ok())
        .or_else(|| NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M").ok())
        .or_else(|| NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S").ok())
        .or_else(|| NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M").ok())
}

/// Splits an aggregate value over devices in proportion to their capacity.
pub fn allocate_proportional(total: f64, caps: &[f64]) -> Vec<f64> {
    let sum: f64 = caps.iter().sum();
    caps.iter().map(|c| total * c / sum).collect()
}

/// Reads a CSV in the schema described in the module docs. Days that do not
/// hold exactly one row per slot are rejected together in one error.
pub fn load_csv(path: &Path, config: &MicrogridConfig) -> Result<SeriesSet> {
    let text = std::fs::read_to_string(path)?;
    parse_csv(&text, config)
}

pub fn parse_csv(text: &str, config: &MicrogridConfig) -> Result<SeriesSet> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Parse(format!("header: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    if headers.first().map(|h| h.to_ascii_lowercase()) != Some("timestamp".into()) {
        return Err(Error::Parse("line 1: first column must be `timestamp`".into()));
    }
    let col = |name: &str| headers.iter().position(|h| h == name);
    let pv_caps: Vec<f64> = config.pv.iter().map(|p| p.p_max).collect();
    let load_caps: Vec<f64> = config.loads.iter().map(|l| l.p_max).collect();

    enum Layout {
        PerDevice(Vec<usize>, Vec<usize>),
        Aggregate(usize, usize),
    }
    let per_pv: Option<Vec<usize>> = config.pv.iter().map(|p| col(&p.id)).collect();
    let per_load: Option<Vec<usize>> = config.loads.iter().map(|l| col(&l.id)).collect();
    let layout = match (per_pv, per_load, col("pv"), col("load")) {
        (Some(p), Some(l), _, _) => Layout::PerDevice(p, l),
        (_, _, Some(p), Some(l)) => Layout::Aggregate(p, l),
        _ => {
            return Err(Error::Parse(
                "line 1: need a column per device id or aggregate `pv` and `load` columns".into(),
            ))
        }
    };

    let slots = config.slots_per_day;
    let step_minutes = (24 * 60) / slots as i64;
    let mut rows: BTreeMap<NaiveDate, Vec<(usize, Vec<f64>, Vec<f64>)>> = BTreeMap::new();
    let mut prev: Option<NaiveDateTime> = None;
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::Parse(format!("line {line}: {e}")))?;
        let ts = parse_timestamp(rec.get(0).unwrap_or(""))
            .ok_or_else(|| Error::Parse(format!("line {line}: bad timestamp {:?}", rec.get(0).unwrap_or(""))))?;
        if let Some(p) = prev {
            if ts <= p {
                return Err(Error::Parse(format!("line {line}: timestamp {ts} not after {p}")));
            }
        }
        prev = Some(ts);
        let minutes = ts.hour() as i64 * 60 + ts.minute() as i64;
        if minutes % step_minutes != 0 || ts.second() != 0 {
            return Err(Error::Parse(format!("line {line}: {ts} is not on the {step_minutes}-minute grid")));
        }
        let value = |c: usize| -> Result<f64> {
            let raw = rec.get(c).unwrap_or("");
            let v: f64 = raw
                .parse()
                .map_err(|_| Error::Parse(format!("line {line}: column {}: {raw:?} is not a number", headers[c])))?;
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Parse(format!("line {line}: column {}: {v} must be finite and >= 0", headers[c])));
            }
            Ok(v)
        };
        let (pv, load) = match &layout {
            Layout::PerDevice(p, l) => (
                p.iter().map(|&c| value(c)).collect::<Result<Vec<_>>>()?,
                l.iter().map(|&c| value(c)).collect::<Result<Vec<_>>>()?,
            ),
            Layout::Aggregate(p, l) => (allocate_proportional(value(*p)?, &pv_caps), allocate_proportional(value(*l)?, &load_caps)),
        };
        rows.entry(ts.date()).or_default().push(((minutes / step_minutes) as usize, pv, load));
    }

    let gaps: Vec<String> = rows
        .iter()
        .filter(|(_, r)| r.len() != slots)
        .map(|(d, r)| format!("{d}: {} of {slots} slots", r.len()))
        .collect();
    if !gaps.is_empty() {
        return Err(Error::Validation(gaps.into_iter().map(|g| format!("gap on {g}")).collect()));
    }
    if rows.is_empty() {
        return Err(Error::Parse("no data rows".into()));
    }
    let mut set = SeriesSet {
        slots_per_day: slots,
        dates: Vec::new(),
        pv: vec![Vec::new(); pv_caps.len()],
        load: vec![Vec::new(); load_caps.len()],
    };
    for (date, day) in rows {
        set.dates.push(date);
        for (_, pv, load) in day {
            pv.iter().enumerate().for_each(|(i, v)| set.pv[i].push(*v));
            load.iter().enumerate().for_each(|(i, v)| set.load[i].push(*v));
        }
    }
    Ok(set)
}

/// Zero-intercept scaling mapping each device's observed maximum to its
/// capacity; all-zero series stay zero.
pub fn scale_to_capacity(series: &SeriesSet, config: &MicrogridConfig) -> SeriesSet {
    let scale = |s: &Vec<f64>, cap: f64| {
        let max = s.iter().cloned().fold(0.0, f64::max);
        if max > 0.0 {
            s.iter().map(|v| if *v == max { cap } else { v * cap / max }).collect()
        } else {
            s.clone()
        }
    };
    SeriesSet {
        slots_per_day: series.slots_per_day,
        dates: series.dates.clone(),
        pv: series.pv.iter().zip(&config.pv).map(|(s, p)| scale(s, p.p_max)).collect(),
        load: series.load.iter().zip(&config.loads).map(|(s, l)| scale(s, l.p_max)).collect(),
    }
}

/// Scales actuals by the stress factors, clipping back to capacity.
pub fn stress_transform(day: &DaySeries, config: &MicrogridConfig, pv_factor: f64, load_factor: f64) -> DaySeries {
    let apply = |series: &[Vec<f64>], caps: Vec<f64>, k: f64| -> Vec<Vec<f64>> {
        series.iter().zip(caps).map(|(s, cap)| s.iter().map(|v| (v * k).min(cap)).collect()).collect()
    };
    DaySeries {
        date: day.date,
        pv: apply(&day.pv, config.pv.iter().map(|p| p.p_max).collect(), pv_factor),
        load: apply(&day.load, config.loads.iter().map(|l| l.p_max).collect(), load_factor),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForecastModel {
    /// Error std as a fraction of PV capacity.
    pub pv_std: f64,
    /// Error std as a fraction of load capacity.
    pub load_std: f64,
}

impl Default for ForecastModel {
    fn default() -> Self {
        Self { pv_std: 0.05, load_std: 0.03 }
    }
}

impl ForecastModel {
    pub fn validate(&self, errs: &mut Vec<String>) {
        if !(self.pv_std >= 0.0) || !(self.load_std >= 0.0) {
            errs.push("forecast std values must be >= 0".into());
        }
    }
}

/// Predictions `[device][t][k - 1]` for leads `k = 1..horizon`, targeting
/// slot `t + k` within the day. Leads that fall past the end of the day are
/// left out and padded later.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastTable {
    pub horizon: usize,
    pub pv: Vec<Vec<Vec<f64>>>,
    pub load: Vec<Vec<Vec<f64>>>,
}

/// `clip(truth + eps, 0, cap)` with an independent draw per device, slot and lead.
pub fn make_forecasts<R: Rng + ?Sized>(
    day: &DaySeries,
    config: &MicrogridConfig,
    model: &ForecastModel,
    horizon: usize,
    rng: &mut R,
) -> ForecastTable {
    let slots = day.slots();
    let mut one = |series: &Vec<f64>, cap: f64, std: f64| -> Vec<Vec<f64>> {
        let normal = Normal::new(0.0, std * cap).expect("std is finite and >= 0");
        (0..slots)
            .map(|t| {
                (1..horizon)
                    .filter(|k| t + k < slots)
                    .map(|k| {
                        let eps = if std > 0.0 { normal.sample(rng) } else { 0.0 };
                        (series[t + k] + eps).clamp(0.0, cap)
                    })
                    .collect()
            })
            .collect()
    };
    let pv = day.pv.iter().zip(&config.pv).map(|(s, p)| one(s, p.p_max, model.pv_std)).collect();
    let load = day.load.iter().zip(&config.loads).map(|(s, l)| one(s, l.p_max, model.load_std)).collect();
    ForecastTable { horizon, pv, load }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub sunrise_slot: f64,
    pub daylight_slots: f64,
    /// Multiplicative noise std on PV.
    pub pv_noise: f64,
    /// Load floor as a fraction of capacity.
    pub load_base: f64,
    pub load_noise: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self { sunrise_slot: 24.0, daylight_slots: 56.0, pv_noise: 0.08, load_base: 0.35, load_noise: 0.03 }
    }
}

/// Morning and evening bumps on top of a base floor, in fractions of capacity.
fn load_shape(t: f64, morning: f64, evening: f64, a_m: f64, a_e: f64, base: f64) -> f64 {
    let bump = |c: f64, w: f64| (-(t - c) * (t - c) / (2.0 * w * w)).exp();
    base + a_m * bump(morning, 6.0) + a_e * bump(evening, 7.0)
}

/// Synthetic days: a clear-sky half-sine for PV with a per-day weather factor
/// and per-slot multiplicative noise; loads are a floor plus two daily peaks.
pub fn synth_generator(seed: u64, days: usize, config: &MicrogridConfig, params: &SynthParams) -> SeriesSet {
    let streams = SeedStreams::new(seed);
    let slots = config.slots_per_day;
    let start = NaiveDate::from_ymd_opt(2022, 7, 1).expect("valid date");
    let mut set = SeriesSet {
        slots_per_day: slots,
        dates: (0..days).map(|d| start + chrono::Days::new(d as u64)).collect(),
        pv: vec![Vec::with_capacity(days * slots); config.pv.len()],
        load: vec![Vec::with_capacity(days * slots); config.loads.len()],
    };
    let scale = slots as f64 / 96.0;
    for d in 0..days {
        let mut rng = streams.indexed("data.synth", d as u64);
        let weather: f64 = rng.random_range(0.55..1.0);
        let morning = rng.random_range(30.0..38.0) * scale;
        let evening = rng.random_range(74.0..82.0) * scale;
        let a_m = rng.random_range(0.25..0.4);
        let a_e = rng.random_range(0.45..0.6);
        let sunrise = params.sunrise_slot * scale;
        let daylight = params.daylight_slots * scale;
        for (i, spec) in config.pv.iter().enumerate() {
            for t in 0..slots {
                let x = (t as f64 - sunrise) / daylight;
                let clear = if (0.0..=1.0).contains(&x) { (std::f64::consts::PI * x).sin().max(0.0) } else { 0.0 };
                let noise = 1.0 + params.pv_noise * rng.random_range(-1.0..1.0);
                set.pv[i].push((spec.p_max * weather * clear * noise).clamp(0.0, spec.p_max));
            }
        }
        for (i, spec) in config.loads.iter().enumerate() {
            for t in 0..slots {
                let shape = load_shape(t as f64, morning, evening, a_m, a_e, params.load_base);
                let noise = params.load_noise * rng.random_range(0.0..1.0);
                set.load[i].push((spec.p_max * (shape + noise)).min(spec.p_max));
            }
        }
    }
    set
}

/// Indices of local maxima whose prominence exceeds `min_prominence`.
pub fn prominent_peaks(series: &[f64], min_prominence: f64) -> Vec<usize> {
    let n = series.len();
    let mut peaks = Vec::new();
    for i in 0..n {
        let v = series[i];
        let left_ok = i == 0 || series[i - 1] < v;
        let right_ok = i + 1 == n || series[i + 1] <= v;
        if !(left_ok && right_ok) {
            continue;
        }
        let mut left_min = v;
        for j in (0..i).rev() {
            if series[j] > v {
                break;
            }
            left_min = left_min.min(series[j]);
        }
        let mut right_min = v;
        for &s in &series[i + 1..] {
            if s > v {
                break;
            }
            right_min = right_min.min(s);
        }
        if v - left_min.max(right_min) > min_prominence {
            peaks.push(i);
        }
    }
    peaks
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DaySplit {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded shuffle of whole days; the test share is a quarter of the days,
/// raised to `min_test` when that still leaves a training day.
pub fn split_days(days: usize, train_fraction: f64, min_test: usize, seed: u64) -> Result<DaySplit> {
    if days < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 days to split, have {days}")));
    }
    let mut idx: Vec<usize> = (0..days).collect();
    let mut rng = SeedStreams::new(seed).stream("data.split");
    for i in (1..days).rev() {
        let j = rng.random_range(0..=i);
        idx.swap(i, j);
    }
    let mut n_test = ((1.0 - train_fraction) * days as f64).round() as usize;
    n_test = n_test.max(min_test.min(days - 1)).clamp(1, days - 1);
    let mut test = idx[..n_test].to_vec();
    let mut train = idx[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok(DaySplit { train, test })
}

/// Serialized series with a checksum over the values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeriesCache {
    pub checksum: String,
    pub series: SeriesSet,
}

pub fn write_cache(path: &Path, series: &SeriesSet) -> Result<String> {
    let checksum = series.checksum();
    let cache = SeriesCache { checksum: checksum.clone(), series: series.clone() };
    std::fs::write(path, serde_json::to_vec(&cache).map_err(|e| Error::Parse(e.to_string()))?)?;
    Ok(checksum)
}

pub fn read_cache(path: &Path) -> Result<SeriesSet> {
    let cache: SeriesCache =
        serde_json::from_slice(&std::fs::read(path)?).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let actual = cache.series.checksum();
    if actual != cache.checksum {
        return Err(Error::Parse(format!("{}: checksum {actual} does not match {}", path.display(), cache.checksum)));
    }
    Ok(cache.series)
}

/// Writes a set in the per-device CSV schema.
pub fn write_csv(path: &Path, series: &SeriesSet, config: &MicrogridConfig) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Parse(e.to_string()))?;
    let mut header = vec!["timestamp".to_string()];
    header.extend(config.pv.iter().map(|p| p.id.clone()));
    header.extend(config.loads.iter().map(|l| l.id.clone()));
    w.write_record(&header).map_err(|e| Error::Parse(e.to_string()))?;
    let step = (24 * 60 / series.slots_per_day) as i64;
    for (d, date) in series.dates.iter().enumerate() {
        for t in 0..series.slots_per_day {
            let ts = date.and_hms_opt(0, 0, 0).expect("midnight") + chrono::Duration::minutes(step * t as i64);
            let mut rec = vec![ts.format("%Y-%m-%d %H:%M").to_string()];
            let i = d * series.slots_per_day + t;
            rec.extend(series.pv.iter().map(|s| format!("{}", s[i])));
            rec.extend(series.load.iter().map(|s| format!("{}", s[i])));
            w.write_record(&rec).map_err(|e| Error::Parse(e.to_string()))?;
        }
    }
    w.flush()?;
    Ok(())
}
