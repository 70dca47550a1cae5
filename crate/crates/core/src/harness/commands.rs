//! The train, eval, compare, audit and synth-data commands.
//!
//! Each command writes its files into an output directory and returns a
//! serializable outcome; [`run`] wraps a command with its manifest.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::manifest::{Invocation, Method, PolicySpec, RunManifest, Seeds};
use super::report::{
    mean_std, write_days, write_lambda_sweep, write_learning_curves, write_report, write_trajectories, LambdaRow,
    ReportRow,
};
use crate::baselines::{dp_oracle, DdpgSingle, DpOracleConfig, RulePolicy};
use crate::config::RunConfig;
use crate::data::{load_csv, scale_to_capacity, split_days, synth_generator, write_cache, write_csv, DaySplit, SeriesSet};
use crate::diffkit::ParamSet;
use crate::env::{Environment, Observation, Scenario, Stress};
use crate::error::{Error, Result};
use crate::grid::MicrogridConfig;
use crate::maddpg::{train, EpisodeMetrics, Maddpg, ScenarioSource, SharedEncoder, Trainer};
use crate::policy::{evaluate, DayRecord, LearnedPolicy, Policy};
use crate::powerflow::check_dispatch;
use crate::rng::SeedStreams;

pub const CHECKPOINT_FILE: &str = "checkpoint.params";
pub const METRICS_FILE: &str = "metrics.csv";

/// The served series and its train/test split.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub series: Arc<SeriesSet>,
    pub split: DaySplit,
    pub checksum: String,
}

impl Dataset {
    /// Synthetic days, or a CSV scaled so each device peaks at its capacity.
    pub fn prepare(cfg: &RunConfig) -> Result<Self> {
        let mg = &cfg.microgrid;
        let d = &cfg.data;
        let series = match d.source.as_str() {
            "csv" => scale_to_capacity(&load_csv(Path::new(&d.csv_path), mg)?, mg),
            _ => synth_generator(d.synth_seed, d.synth_days, mg, &d.synth),
        };
        Self::from_series(cfg, series)
    }

    pub fn from_series(cfg: &RunConfig, series: SeriesSet) -> Result<Self> {
        series.check_bounds(&cfg.microgrid)?;
        let d = &cfg.data;
        let split = split_days(series.days(), d.train_fraction, d.min_test_days, d.split_seed)?;
        Ok(Self { checksum: series.checksum(), series: Arc::new(series), split })
    }

    pub fn source(&self, cfg: &RunConfig, days: &[usize], stress: Stress) -> ScenarioSource {
        ScenarioSource {
            microgrid: cfg.microgrid.clone(),
            series: self.series.clone(),
            days: days.to_vec(),
            forecast: cfg.forecast,
            outage: cfg.outage.clone(),
            stress,
        }
    }

    /// Training never sees the evaluation stress.
    pub fn train_source(&self, cfg: &RunConfig) -> ScenarioSource {
        self.source(cfg, &self.split.train, Stress::default())
    }

    pub fn test_source(&self, cfg: &RunConfig) -> ScenarioSource {
        self.source(cfg, &self.split.test, cfg.eval.stress)
    }
}

/// A trainer for either learned method.
pub enum LearnedRun {
    Proposed(Trainer<Maddpg>),
    Ddpg(Trainer<DdpgSingle>),
}

impl LearnedRun {
    /// Fresh networks drawn from the `init` stream of `cfg.run.seed`.
    pub fn new(cfg: &RunConfig, method: Method) -> Result<Self> {
        let seed = cfg.run.seed;
        let t = &cfg.train;
        let mg = &cfg.microgrid;
        let mut init = SeedStreams::new(seed).stream("init");
        let encoder = SharedEncoder::new(t.encoder_shape(), mg, t.lr_gru, &mut init);
        match method {
            Method::Proposed => {
                let learner = Maddpg::new(t.learner(), mg.ess.clone(), mg.dt(), t.v_dim, &mut init);
                Ok(Self::Proposed(Trainer::new(t.clone(), mg.clone(), learner, encoder, seed)))
            }
            Method::Ddpg => {
                let learner = DdpgSingle::new(t.learner(), mg.ess.clone(), mg.dt(), t.v_dim, &mut init);
                Ok(Self::Ddpg(Trainer::new(t.clone(), mg.clone(), learner, encoder, seed)))
            }
            other => Err(Error::InvalidInput(format!("{} is not a learned method", other.label()))),
        }
    }

    /// Networks restored from a checkpoint; the method follows its tag.
    pub fn from_checkpoint(cfg: &RunConfig, ckpt: &ParamSet) -> Result<Self> {
        let method = [Method::Proposed, Method::Ddpg]
            .into_iter()
            .find(|m| m.learner_name().map(|n| format!("{n}.checkpoint")).as_deref() == Some(ckpt.tag()))
            .ok_or_else(|| Error::Schema(format!("`{}` is not a learner checkpoint", ckpt.tag())))?;
        let mut run = Self::new(cfg, method)?;
        match &mut run {
            Self::Proposed(t) => t.restore(ckpt)?,
            Self::Ddpg(t) => t.restore(ckpt)?,
        }
        Ok(run)
    }

    pub fn method(&self) -> Method {
        match self {
            Self::Proposed(_) => Method::Proposed,
            Self::Ddpg(_) => Method::Ddpg,
        }
    }

    pub fn train(
        &mut self,
        source: &ScenarioSource,
        mut on_episode: impl FnMut(&EpisodeMetrics) -> Result<()>,
    ) -> Result<Vec<EpisodeMetrics>> {
        match self {
            Self::Proposed(t) => train(t, source, |m, _| on_episode(m)),
            Self::Ddpg(t) => train(t, source, |m, _| on_episode(m)),
        }
    }

    pub fn checkpoint(&self) -> ParamSet {
        match self {
            Self::Proposed(t) => t.checkpoint(),
            Self::Ddpg(t) => t.checkpoint(),
        }
    }

    /// Frozen greedy copy of the current networks.
    pub fn policy(&self) -> Box<dyn Policy> {
        let label = self.method().label().to_string();
        match self {
            Self::Proposed(t) => {
                Box::new(LearnedPolicy { label, encoder: t.encoder.clone(), learner: t.learner.clone() })
            }
            Self::Ddpg(t) => Box::new(LearnedPolicy { label, encoder: t.encoder.clone(), learner: t.learner.clone() }),
        }
    }
}

/// Solves the perfect-foresight schedule when a day begins and replays it.
#[derive(Debug, Clone)]
pub struct DpPolicy {
    pub oracle: DpOracleConfig,
    schedule: Vec<Vec<f64>>,
}

impl DpPolicy {
    pub fn new(cfg: &RunConfig) -> Self {
        let oracle = DpOracleConfig {
            grid_points: cfg.eval.dp_grid_points,
            aggregate: true,
            max_states: 100_000,
            refine: false,
        };
        Self { oracle, schedule: Vec::new() }
    }
}

impl Policy for DpPolicy {
    fn name(&self) -> String {
        Method::DpOracle.label().into()
    }

    fn begin_day(&mut self, scenario: &Scenario, config: &MicrogridConfig) -> Result<()> {
        self.schedule = dp_oracle(config, scenario, &self.oracle)?.schedule;
        Ok(())
    }

    fn commands(&mut self, obs: &Observation, _config: &MicrogridConfig) -> Result<Vec<f64>> {
        self.schedule
            .get(obs.slot)
            .cloned()
            .ok_or_else(|| Error::Contract(format!("dp schedule has no slot {}", obs.slot)))
    }
}

pub fn baseline_policy(cfg: &RunConfig, method: Method) -> Result<Box<dyn Policy>> {
    match method {
        Method::RuleBased => Ok(Box::new(RulePolicy::default())),
        Method::DpOracle => Ok(Box::new(DpPolicy::new(cfg))),
        other => Err(Error::InvalidInput(format!("{} needs a checkpoint", other.label()))),
    }
}

pub fn load_policy(cfg: &RunConfig, spec: &PolicySpec) -> Result<Box<dyn Policy>> {
    match spec {
        PolicySpec::Baseline { method } => baseline_policy(cfg, *method),
        PolicySpec::Checkpoint { path } => Ok(LearnedRun::from_checkpoint(cfg, &ParamSet::load(path)?)?.policy()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutcome {
    pub row: ReportRow,
    pub days: Vec<DayRecord>,
}

/// Frozen evaluation on the test days. `prior_time_s` (training time) is
/// added to the reported computation time.
pub fn evaluate_policy(
    cfg: &RunConfig,
    dataset: &Dataset,
    policy: &mut dyn Policy,
    prior_time_s: f64,
) -> Result<EvalOutcome> {
    let t0 = Instant::now();
    let source = dataset.test_source(cfg);
    let streams = SeedStreams::new(cfg.eval.scenario_seed);
    let days = evaluate(policy, &source, &streams, &dataset.split.test, cfg.train.window, cfg.eval.fail_agents)?;
    let row = ReportRow::from_days(&policy.name(), &days, prior_time_s + t0.elapsed().as_secs_f64())?;
    Ok(EvalOutcome { row, days })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub method: Method,
    pub episodes: usize,
    pub final_cost: f64,
    /// Mean over the last ten episodes.
    pub tail_cost: f64,
    pub tail_shed_mwh: f64,
    pub train_time_s: f64,
    pub checkpoint: PathBuf,
}

/// Trains `method` from `cfg.run.seed`, streaming the metric log to
/// `metrics.csv` and saving the final networks to `checkpoint.params`.
pub fn cmd_train(cfg: &RunConfig, dataset: &Dataset, method: Method, out: &Path) -> Result<(TrainOutcome, LearnedRun)> {
    std::fs::create_dir_all(out)?;
    let t0 = Instant::now();
    let mut run = LearnedRun::new(cfg, method)?;
    let mut log = std::io::BufWriter::new(std::fs::File::create(out.join(METRICS_FILE))?);
    writeln!(log, "{}", EpisodeMetrics::CSV_HEADER)?;
    let metrics = run.train(&dataset.train_source(cfg), |m| {
        writeln!(log, "{}", m.csv_row())?;
        Ok(())
    })?;
    log.flush()?;
    let checkpoint = out.join(CHECKPOINT_FILE);
    run.checkpoint().save(&checkpoint)?;
    let tail = &metrics[metrics.len().saturating_sub(10)..];
    let tail_mean = |f: fn(&EpisodeMetrics) -> f64| tail.iter().map(f).sum::<f64>() / tail.len().max(1) as f64;
    let outcome = TrainOutcome {
        method,
        episodes: metrics.len(),
        final_cost: metrics.last().map_or(f64::NAN, |m| m.cost),
        tail_cost: tail_mean(|m| m.cost),
        tail_shed_mwh: tail_mean(|m| m.shed_mwh),
        train_time_s: t0.elapsed().as_secs_f64(),
        checkpoint,
    };
    Ok((outcome, run))
}

/// Evaluates a policy and writes `report.csv` and `days.csv`.
pub fn cmd_eval(cfg: &RunConfig, dataset: &Dataset, policy: &PolicySpec, out: &Path) -> Result<EvalOutcome> {
    std::fs::create_dir_all(out)?;
    let mut p = load_policy(cfg, policy)?;
    let outcome = evaluate_policy(cfg, dataset, p.as_mut(), 0.0)?;
    write_report(&out.join("report.csv"), std::slice::from_ref(&outcome.row))?;
    write_days(&out.join("days.csv"), &[(outcome.row.method.clone(), cfg.run.seed, outcome.days.clone())])?;
    Ok(outcome)
}

/// Per-seed summary of one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRow {
    pub method: String,
    pub seed: u64,
    pub avg_cost: f64,
    pub avg_load_shedding: f64,
    pub computation_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub cost_mean: f64,
    pub cost_sd: f64,
    pub shed_mean: f64,
    pub shed_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareOutcome {
    /// Pooled over every seed's test days.
    pub report: Vec<ReportRow>,
    pub per_seed: Vec<SeedRow>,
    /// Mean and sample s.d. of the per-seed averages.
    pub summary: Vec<MethodSummary>,
    pub lambda_sweep: Vec<LambdaRow>,
}

/// Runs every method on the same test scenarios. Learned methods train once
/// per seed and keep their checkpoints under `checkpoints/`; baselines do not
/// depend on the training seed and run once.
pub fn cmd_compare(
    cfg: &RunConfig,
    dataset: &Dataset,
    methods: &[Method],
    seeds: &[u64],
    lambda_sweep: bool,
    out: &Path,
) -> Result<CompareOutcome> {
    if methods.is_empty() || seeds.is_empty() {
        return Err(Error::InvalidInput("compare needs at least one method and one seed".into()));
    }
    std::fs::create_dir_all(out.join("checkpoints"))?;
    let mut report = Vec::new();
    let mut per_seed = Vec::new();
    let mut summary = Vec::new();
    let mut curves = Vec::new();
    let mut trajectories = Vec::new();
    let mut all_days = Vec::new();
    for &method in methods {
        let run_seeds: &[u64] = if method.is_learned() { seeds } else { &seeds[..1] };
        let mut pooled = Vec::new();
        let mut times = Vec::new();
        for &seed in run_seeds {
            let mut c = cfg.clone();
            c.run.seed = seed;
            let ev = if method.is_learned() {
                let dir = out.join("checkpoints").join(format!("{}_seed{seed}", method.label()));
                let (tr, run) = cmd_train(&c, dataset, method, &dir)?;
                curves.push((method.label().to_string(), seed, read_metrics(&dir.join(METRICS_FILE))?));
                evaluate_policy(&c, dataset, run.policy().as_mut(), tr.train_time_s)?
            } else {
                evaluate_policy(&c, dataset, baseline_policy(&c, method)?.as_mut(), 0.0)?
            };
            per_seed.push(SeedRow {
                method: ev.row.method.clone(),
                seed,
                avg_cost: ev.row.avg_cost,
                avg_load_shedding: ev.row.avg_load_shedding,
                computation_time_s: ev.row.computation_time_s,
            });
            if seed == run_seeds[0] {
                trajectories.push((ev.row.method.clone(), ev.days.clone()));
            }
            times.push(ev.row.computation_time_s);
            all_days.push((ev.row.method.clone(), seed, ev.days.clone()));
            pooled.extend(ev.days);
        }
        let label = method.label();
        report.push(ReportRow::from_days(label, &pooled, mean_std(&times).0)?);
        let rows: Vec<&SeedRow> = per_seed.iter().filter(|r| r.method == label).collect();
        let (cost_mean, cost_sd) = mean_std(&rows.iter().map(|r| r.avg_cost).collect::<Vec<_>>());
        let (shed_mean, shed_sd) = mean_std(&rows.iter().map(|r| r.avg_load_shedding).collect::<Vec<_>>());
        summary.push(MethodSummary { method: label.into(), cost_mean, cost_sd, shed_mean, shed_sd });
    }
    let lambda_rows = if lambda_sweep { run_lambda_sweep(cfg, dataset, seeds[0], &out.join("lambda"))? } else { Vec::new() };

    write_report(&out.join("report.csv"), &report)?;
    write_seed_rows(&out.join("report_by_seed.csv"), &per_seed)?;
    write_learning_curves(&out.join("learning_curves.csv"), &curves)?;
    write_trajectories(&out.join("trajectories.csv"), &trajectories)?;
    write_days(&out.join("days.csv"), &all_days)?;
    if lambda_sweep {
        write_lambda_sweep(&out.join("lambda_sweep.csv"), &lambda_rows)?;
    }
    Ok(CompareOutcome { report, per_seed, summary, lambda_sweep: lambda_rows })
}

/// Retrains the proposed method at each shedding price in `eval.lambda_sweep`
/// for `eval.sweep_episodes` episodes and reports its test-day shedding.
pub fn run_lambda_sweep(cfg: &RunConfig, dataset: &Dataset, seed: u64, out: &Path) -> Result<Vec<LambdaRow>> {
    let mut rows = Vec::new();
    for &lambda in &cfg.eval.lambda_sweep {
        let mut c = cfg.clone();
        c.run.seed = seed;
        c.microgrid.costs.lambda_load = lambda;
        c.train.episodes = cfg.eval.sweep_episodes;
        c.validate()?;
        let dir = out.join(format!("lambda_{lambda}"));
        let (tr, run) = cmd_train(&c, dataset, Method::Proposed, &dir)?;
        let ev = evaluate_policy(&c, dataset, run.policy().as_mut(), tr.train_time_s)?;
        rows.push(LambdaRow {
            lambda_load: lambda,
            avg_shed_cost: lambda * ev.row.avg_load_shedding,
            avg_load_shedding: ev.row.avg_load_shedding,
        });
    }
    Ok(rows)
}

pub fn read_metrics(path: &Path) -> Result<Vec<EpisodeMetrics>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    r.deserialize().map(|row| row.map_err(|e| Error::Parse(format!("{}: {e}", path.display())))).collect()
}

fn write_seed_rows(path: &Path, rows: &[SeedRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    }
    w.flush()?;
    Ok(())
}

/// Power-flow check of one replayed slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub day: usize,
    pub slot: usize,
    pub connected: bool,
    pub slack_bus: usize,
    pub converged: bool,
    pub iterations: usize,
    pub v_min: f64,
    pub v_min_bus: usize,
    pub v_max: f64,
    pub v_max_bus: usize,
    pub losses_mw: f64,
    pub violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditSummary {
    pub slots: usize,
    pub feasible_slots: usize,
    /// Slots with at least one bus outside the voltage band.
    pub violation_slots: usize,
    /// Bus-slot pairs outside the band.
    pub bus_violations: usize,
    pub nonconverged_slots: usize,
    pub v_min: f64,
    pub v_max: f64,
    pub max_losses_mw: f64,
}

impl AuditSummary {
    pub fn from_rows(rows: &[AuditRow]) -> Self {
        Self {
            slots: rows.len(),
            feasible_slots: rows.iter().filter(|r| r.converged && r.violations == 0).count(),
            violation_slots: rows.iter().filter(|r| r.violations > 0).count(),
            bus_violations: rows.iter().map(|r| r.violations).sum(),
            nonconverged_slots: rows.iter().filter(|r| !r.converged).count(),
            v_min: rows.iter().map(|r| r.v_min).fold(f64::INFINITY, f64::min),
            v_max: rows.iter().map(|r| r.v_max).fold(f64::NEG_INFINITY, f64::max),
            max_losses_mw: rows.iter().map(|r| r.losses_mw).fold(0.0, f64::max),
        }
    }
}

/// Replays the test days under `policy` and runs the power flow on every
/// resolved slot. The dispatch is never altered.
pub fn audit_policy(cfg: &RunConfig, dataset: &Dataset, policy: &mut dyn Policy) -> Result<Vec<AuditRow>> {
    let topo = cfg.feeder.topology()?;
    let source = dataset.test_source(cfg);
    let streams = SeedStreams::new(cfg.eval.scenario_seed);
    let mut rows = Vec::new();
    for (i, &day) in dataset.split.test.iter().enumerate() {
        let sc = source.scenario_for_day(&streams, "eval", i as u64, day, cfg.train.window)?;
        let mut env = Environment::new(cfg.microgrid.clone(), sc, cfg.train.window)?;
        env.fail_agents(cfg.eval.fail_agents)?;
        env.reset();
        policy.begin_day(env.scenario(), &cfg.microgrid)?;
        while !env.is_done() {
            let obs = env.observe()?;
            let cmd = policy.commands(&obs, &cfg.microgrid)?;
            let out = env.step(&cmd)?;
            let rep = check_dispatch(&topo, &out.result, &cfg.feeder.limits)?;
            rows.push(AuditRow {
                day,
                slot: obs.slot,
                connected: rep.connected,
                slack_bus: rep.slack_bus,
                converged: rep.converged,
                iterations: rep.iterations,
                v_min: rep.v_min,
                v_min_bus: rep.v_min_bus,
                v_max: rep.v_max,
                v_max_bus: rep.v_max_bus,
                losses_mw: rep.losses_mw,
                violations: rep.violations.len(),
            });
        }
    }
    Ok(rows)
}

/// Writes the per-slot `audit.csv` and returns its summary.
pub fn cmd_audit(cfg: &RunConfig, dataset: &Dataset, policy: &PolicySpec, out: &Path) -> Result<AuditSummary> {
    std::fs::create_dir_all(out)?;
    let rows = audit_policy(cfg, dataset, load_policy(cfg, policy)?.as_mut())?;
    let mut w = csv::Writer::from_path(out.join("audit.csv")).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    for r in &rows {
        w.serialize(r).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    }
    w.flush()?;
    Ok(AuditSummary::from_rows(&rows))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthOutcome {
    pub days: usize,
    pub train_days: Vec<usize>,
    pub test_days: Vec<usize>,
    pub checksum: String,
}

/// Writes the configured dataset as `series.csv` plus a checksummed
/// `series.json` cache.
pub fn cmd_synth_data(cfg: &RunConfig, dataset: &Dataset, out: &Path) -> Result<SynthOutcome> {
    std::fs::create_dir_all(out)?;
    write_csv(&out.join("series.csv"), &dataset.series, &cfg.microgrid)?;
    let checksum = write_cache(&out.join("series.json"), &dataset.series)?;
    Ok(SynthOutcome {
        days: dataset.series.days(),
        train_days: dataset.split.train.clone(),
        test_days: dataset.split.test.clone(),
        checksum,
    })
}

fn to_value<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("outcomes serialize")
}

/// Runs `invocation` into `out` and writes its manifest, also when the
/// command fails.
pub fn run(cfg: &RunConfig, invocation: &Invocation, out: &Path) -> Result<RunManifest> {
    cfg.validate()?;
    std::fs::create_dir_all(out)?;
    let started_at = chrono::Utc::now().to_rfc3339();
    let t0 = Instant::now();
    let dataset = Dataset::prepare(cfg)?;
    let result = match invocation {
        Invocation::Train { method } => cmd_train(cfg, &dataset, *method, out).map(|(o, _)| to_value(&o)),
        Invocation::Eval { policy } => cmd_eval(cfg, &dataset, policy, out).map(|o| to_value(&o.row)),
        Invocation::Compare { methods, seeds, lambda_sweep } => {
            cmd_compare(cfg, &dataset, methods, seeds, *lambda_sweep, out).map(|o| {
                to_value(&serde_json::json!({ "report": o.report, "summary": o.summary, "lambda_sweep": o.lambda_sweep }))
            })
        }
        Invocation::Audit { policy } => cmd_audit(cfg, &dataset, policy, out).map(|o| to_value(&o)),
        Invocation::SynthData => cmd_synth_data(cfg, &dataset, out).map(|o| to_value(&o)),
    };
    let outcome = match &result {
        Ok(v) => v.clone(),
        Err(e) => serde_json::json!({ "error": e.to_string() }),
    };
    let manifest = RunManifest {
        invocation: invocation.clone(),
        config: cfg.clone(),
        seeds: Seeds::of(cfg),
        code_version: RunManifest::code_version(),
        dataset_checksum: dataset.checksum.clone(),
        started_at,
        wall_clock_s: t0.elapsed().as_secs_f64(),
        outcome,
    };
    manifest.write(out)?;
    result.map(|_| manifest)
}

/// Repeats the run a manifest describes, writing into `out`.
pub fn rerun(manifest_path: &Path, out: &Path) -> Result<RunManifest> {
    let m = RunManifest::read(manifest_path)?;
    let here = RunManifest::code_version();
    if m.code_version != here {
        return Err(Error::InvalidInput(format!("manifest was written by {}, this is {here}", m.code_version)));
    }
    let fresh = run(&m.config, &m.invocation, out)?;
    if fresh.dataset_checksum != m.dataset_checksum {
        return Err(Error::Contract(format!(
            "dataset checksum {} differs from the manifest's {}",
            fresh.dataset_checksum, m.dataset_checksum
        )));
    }
    Ok(fresh)
}
