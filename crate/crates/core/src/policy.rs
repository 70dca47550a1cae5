//! Frozen controllers and day-level evaluation.

use serde::{Deserialize, Serialize};

use crate::env::{Environment, Observation, Scenario};
use crate::error::Result;
use crate::grid::MicrogridConfig;
use crate::maddpg::learner::{mask_batch, JointLearner};
use crate::maddpg::trainer::{global_state, ScenarioSource, SharedEncoder, SOC_VIOLATION_TOL};
use crate::maddpg::MaskMode;
use crate::diffkit::Tensor;
use crate::outage::OutageDraw;
use crate::rng::SeedStreams;

/// A controller mapping observations to masked ESS commands in MW.
pub trait Policy {
    fn name(&self) -> String;

    fn begin_day(&mut self, _scenario: &Scenario, _config: &MicrogridConfig) -> Result<()> {
        Ok(())
    }

    fn commands(&mut self, obs: &Observation, config: &MicrogridConfig) -> Result<Vec<f64>>;
}

/// A trained learner evaluated greedily.
pub struct LearnedPolicy<L: JointLearner> {
    pub label: String,
    pub encoder: SharedEncoder,
    pub learner: L,
}

impl<L: JointLearner> Policy for LearnedPolicy<L> {
    fn name(&self) -> String {
        self.label.clone()
    }

    fn commands(&mut self, obs: &Observation, config: &MicrogridConfig) -> Result<Vec<f64>> {
        let v = self.encoder.encode(&obs.window)?;
        let state = global_state(&obs.soc, obs.counter as f64 / config.slots_per_day as f64, &v);
        let pi = self.learner.act(&Tensor::row(state.clone()))?;
        let (cmd, _) = mask_batch(MaskMode::Soc, &config.ess, config.dt(), &pi, &Tensor::row(state));
        Ok(cmd.into_data())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub slot: usize,
    pub connected: bool,
    pub p_ess: Vec<f64>,
    pub soc: Vec<f64>,
    pub p_grid: f64,
    pub p_gen: f64,
    pub alpha: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayRecord {
    pub day: usize,
    pub cost: f64,
    pub shed_mwh: f64,
    pub soc_violations: usize,
    pub max_residual: f64,
    pub outage: Option<OutageDraw>,
    pub slots: Vec<SlotRecord>,
}

/// Runs one day to completion.
pub fn run_day(env: &mut Environment, policy: &mut dyn Policy, day: usize) -> Result<DayRecord> {
    env.reset();
    let config = env.config().clone();
    policy.begin_day(env.scenario(), &config)?;
    let dt = config.dt();
    let mut rec = DayRecord {
        day,
        cost: 0.0,
        shed_mwh: 0.0,
        soc_violations: 0,
        max_residual: 0.0,
        outage: env.scenario().outage,
        slots: Vec::with_capacity(config.slots_per_day),
    };
    while !env.is_done() {
        let obs = env.observe()?;
        let cmd = policy.commands(&obs, &config)?;
        let out = env.step(&cmd)?;
        let r = &out.result;
        rec.cost += r.cost_total();
        rec.shed_mwh += r.shed_mw() * dt;
        rec.max_residual = rec.max_residual.max(r.balance_residual.abs());
        rec.soc_violations += usize::from(out.saturation > SOC_VIOLATION_TOL);
        rec.slots.push(SlotRecord {
            slot: obs.slot,
            connected: r.connected,
            p_ess: r.p_ess.clone(),
            soc: out.soc_after.clone(),
            p_grid: r.p_grid,
            p_gen: r.p_gen.iter().sum(),
            alpha: r.alpha.first().copied().unwrap_or(0.0),
            cost: r.cost_total(),
        });
    }
    Ok(rec)
}

/// Evaluates `policy` on every day in `days` with scenario streams keyed by
/// position, so all methods under the same seed face identical days.
pub fn evaluate(
    policy: &mut dyn Policy,
    source: &ScenarioSource,
    streams: &SeedStreams,
    days: &[usize],
    window: usize,
    fail_agents: usize,
) -> Result<Vec<DayRecord>> {
    days.iter()
        .enumerate()
        .map(|(i, &d)| {
            let sc = source.scenario_for_day(streams, "eval", i as u64, d, window)?;
            let mut env = Environment::new(source.microgrid.clone(), sc, window)?;
            env.fail_agents(fail_agents)?;
            run_day(&mut env, policy, d)
        })
        .collect()
}
