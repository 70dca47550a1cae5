//! One-day episode environment: a scenario (served series, forecasts and a
//! sampled outage) replayed slot by slot against ESS commands.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{make_forecasts, stress_transform, DaySeries, ForecastModel, ForecastTable};
use crate::encoder::{build_window, ForecastWindow};
use crate::error::{Error, Result};
use crate::grid::{resolve_slot, reward_for_agent, step_soc, DispatchResult, MicrogridConfig, SimState};
use crate::outage::{build_profile, counter, sample_outage, DisconnectionProfile, OutageDraw, OutageParams};

/// Multiplicative perturbation of served PV and load.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stress {
    pub pv: f64,
    pub load: f64,
}

impl Default for Stress {
    fn default() -> Self {
        Self { pv: 1.0, load: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    /// Served values, after any stress.
    pub actual: DaySeries,
    /// Built from the unstressed truth.
    pub forecasts: ForecastTable,
    pub profile: DisconnectionProfile,
    pub outage: Option<OutageDraw>,
}

impl Scenario {
    /// Draws forecasts from `forecast_rng` and the outage from `outage_rng`,
    /// so stress settings never shift either stream.
    pub fn generate<R1: Rng + ?Sized, R2: Rng + ?Sized>(
        config: &MicrogridConfig,
        truth: &DaySeries,
        model: &ForecastModel,
        outage: &OutageParams,
        horizon: usize,
        stress: Stress,
        forecast_rng: &mut R1,
        outage_rng: &mut R2,
    ) -> Result<Self> {
        let forecasts = make_forecasts(truth, config, model, horizon, forecast_rng);
        let (profile, draw) = if outage.peak_prob > 0.0 {
            let profile = build_profile(outage_rng, config.slots_per_day, outage)?;
            let draw = sample_outage(outage_rng, &profile, outage);
            (profile, draw)
        } else {
            (DisconnectionProfile::calm(config.slots_per_day), None)
        };
        let actual = if stress == Stress::default() {
            truth.clone()
        } else {
            stress_transform(truth, config, stress.pv, stress.load)
        };
        Ok(Self { actual, forecasts, profile, outage: draw })
    }

    /// Scenario with a fixed outage window; the counter peak sits at onset.
    pub fn with_outage(actual: DaySeries, forecasts: ForecastTable, outage: Option<OutageDraw>) -> Self {
        let slots = actual.slots();
        let peak = outage.map_or(slots as i64 / 2, |o| o.onset_slot as i64);
        let peak_prob = if outage.is_some() { 1.0 } else { 0.0 };
        let profile = DisconnectionProfile::with_peaks(slots, peak_prob, 4.0, &[peak]);
        Self { actual, forecasts, profile, outage }
    }

    pub fn connected_at(&self, t: usize) -> bool {
        !self.outage.is_some_and(|o| o.covers(t))
    }
}

/// What the controllers see at a slot, before encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub slot: usize,
    pub soc: Vec<f64>,
    pub counter: usize,
    pub connected: bool,
    pub pv_now: Vec<f64>,
    pub load_now: Vec<f64>,
    pub window: ForecastWindow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub result: DispatchResult,
    pub rewards: Vec<f64>,
    pub soc_before: Vec<f64>,
    pub soc_after: Vec<f64>,
    /// Largest clamp applied to any SoC this slot.
    pub saturation: f64,
    pub done: bool,
}

#[derive(Debug, Clone)]
pub struct Environment {
    config: MicrogridConfig,
    scenario: Scenario,
    window: usize,
    failed: Vec<bool>,
    state: SimState,
    finished: bool,
}

impl Environment {
    pub fn new(config: MicrogridConfig, scenario: Scenario, window: usize) -> Result<Self> {
        let slots = config.slots_per_day;
        if scenario.actual.slots() != slots {
            return Err(Error::InvalidInput(format!("scenario has {} slots, config {slots}", scenario.actual.slots())));
        }
        if scenario.actual.pv.len() != config.pv.len() || scenario.actual.load.len() != config.loads.len() {
            return Err(Error::InvalidInput("scenario device counts differ from config".into()));
        }
        let failed = vec![false; config.ess.len()];
        let state = SimState {
            slot: 0,
            soc: vec![config.initial_soc; config.ess.len()],
            connected: true,
            outage_slots_remaining: 0,
            pv_now: vec![],
            load_now: vec![],
        };
        let mut env = Self { config, scenario, window, failed, state, finished: false };
        env.reset();
        Ok(env)
    }

    pub fn config(&self) -> &MicrogridConfig {
        &self.config
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn is_done(&self) -> bool {
        self.finished
    }

    /// Forces the first `k` agents' commands to 0 MW.
    pub fn fail_agents(&mut self, k: usize) -> Result<()> {
        if k > self.failed.len() {
            return Err(Error::InvalidInput(format!("cannot fail {k} of {} agents", self.failed.len())));
        }
        self.failed.iter_mut().enumerate().for_each(|(i, f)| *f = i < k);
        Ok(())
    }

    pub fn failed(&self) -> &[bool] {
        &self.failed
    }

    pub fn reset(&mut self) {
        self.finished = false;
        self.state.soc = vec![self.config.initial_soc; self.config.ess.len()];
        self.enter_slot(0);
    }

    fn enter_slot(&mut self, t: usize) {
        let s = &self.scenario;
        self.state.slot = t;
        self.state.connected = s.connected_at(t);
        self.state.outage_slots_remaining = match s.outage {
            Some(o) if o.covers(t) => o.onset_slot + o.duration_slots - t,
            _ => 0,
        };
        self.state.pv_now = s.actual.pv_at(t);
        self.state.load_now = s.actual.load_at(t);
    }

    pub fn counter(&self) -> usize {
        let t = self.state.slot;
        let begun = self.scenario.outage.is_some_and(|o| o.onset_slot <= t);
        counter(t, self.scenario.profile.primary_peak(), begun)
    }

    pub fn observe(&self) -> Result<Observation> {
        Ok(Observation {
            slot: self.state.slot,
            soc: self.state.soc.clone(),
            counter: self.counter(),
            connected: self.state.connected,
            pv_now: self.state.pv_now.clone(),
            load_now: self.state.load_now.clone(),
            window: build_window(&self.scenario.actual, &self.scenario.forecasts, self.state.slot, self.window)?,
        })
    }

    /// Applies masked ESS commands for the current slot and advances.
    pub fn step(&mut self, commands: &[f64]) -> Result<StepOutcome> {
        if self.finished {
            return Err(Error::Contract("step after the final slot".into()));
        }
        let cmds: Vec<f64> =
            commands.iter().zip(&self.failed).map(|(&c, &f)| if f { 0.0 } else { c }).collect();
        let result = resolve_slot(&self.config, &self.state, &cmds)?;
        let soc_before = self.state.soc.clone();
        let dt = self.config.dt();
        let mut saturation = 0.0f64;
        for (j, spec) in self.config.ess.iter().enumerate() {
            let u = step_soc(spec, self.state.soc[j], result.p_ess[j], dt)?;
            saturation = saturation.max(u.saturation);
            self.state.soc[j] = u.soc;
        }
        let rewards = (0..self.config.ess.len()).map(|n| reward_for_agent(n, &result, &self.config.costs)).collect();
        let t = self.state.slot;
        let done = t + 1 == self.config.slots_per_day;
        if done {
            self.finished = true;
        } else {
            self.enter_slot(t + 1);
        }
        Ok(StepOutcome { result, rewards, soc_before, soc_after: self.state.soc.clone(), saturation, done })
    }
}
