//! Episode rollouts, replay insertion and the periodic update schedule,
//! shared by every [`JointLearner`].

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::explore::{explore, NoiseSchedule};
use super::learner::{apply_grads, mask_batch, Batch, JointLearner, LearnerConfig, NetParams, UpdateStats};
use super::mask::MaskMode;
use super::replay::{ReplayBuffer, StateRecord, Transition};
use crate::data::{ForecastModel, SeriesSet};
use crate::diffkit::{ParamSet, Tensor};
use crate::encoder::{Encoder, EncoderShape, ForecastWindow};
use crate::env::{Environment, Observation, Scenario, Stress};
use crate::error::{Error, Result};
use crate::grid::MicrogridConfig;
use crate::outage::OutageParams;
use crate::rng::SeedStreams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub episodes: usize,
    pub gamma: f64,
    pub tau: f64,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub lr_gru: f64,
    pub batch_size: usize,
    pub update_every: usize,
    pub updates_per_trigger: usize,
    pub warmup_steps: u64,
    pub replay_capacity: usize,
    pub noise_sigma_start: f64,
    pub noise_sigma_end: f64,
    pub grad_clip: f64,
    pub reward_scale: f64,
    pub hidden: usize,
    pub window: usize,
    pub gru_embed: usize,
    pub gru_hidden: usize,
    pub gru_layers: usize,
    pub v_dim: usize,
    /// Only `shared` is implemented; the per-agent variant is reserved.
    pub encoder_mode: String,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            episodes: 400,
            gamma: 0.99,
            tau: 0.001,
            lr_actor: 2.5e-4,
            lr_critic: 2.5e-4,
            lr_gru: 2.5e-4,
            batch_size: 128,
            update_every: 24,
            updates_per_trigger: 1,
            warmup_steps: 8000,
            replay_capacity: 100_000,
            noise_sigma_start: 0.2,
            noise_sigma_end: 0.02,
            grad_clip: 1.0,
            reward_scale: 1.0,
            hidden: 64,
            window: 8,
            gru_embed: 32,
            gru_hidden: 32,
            gru_layers: 2,
            v_dim: 16,
            encoder_mode: "shared".into(),
        }
    }
}

impl TrainConfig {
    pub fn learner(&self) -> LearnerConfig {
        LearnerConfig {
            gamma: self.gamma,
            tau: self.tau,
            lr_actor: self.lr_actor,
            lr_critic: self.lr_critic,
            hidden: self.hidden,
            grad_clip: self.grad_clip,
            reward_scale: self.reward_scale,
            mask: MaskMode::Soc,
        }
    }

    pub fn encoder_shape(&self) -> EncoderShape {
        EncoderShape {
            window: self.window,
            embed: self.gru_embed,
            hidden: self.gru_hidden,
            layers: self.gru_layers,
            out: self.v_dim,
        }
    }

    pub fn validate(&self, slots_per_day: usize, errs: &mut Vec<String>) {
        let positive = [
            ("episodes", self.episodes as f64),
            ("tau", self.tau),
            ("lr_actor", self.lr_actor),
            ("lr_critic", self.lr_critic),
            ("lr_gru", self.lr_gru),
            ("batch_size", self.batch_size as f64),
            ("update_every", self.update_every as f64),
            ("updates_per_trigger", self.updates_per_trigger as f64),
            ("replay_capacity", self.replay_capacity as f64),
            ("grad_clip", self.grad_clip),
            ("reward_scale", self.reward_scale),
            ("hidden", self.hidden as f64),
            ("window", self.window as f64),
            ("gru_embed", self.gru_embed as f64),
            ("gru_hidden", self.gru_hidden as f64),
            ("gru_layers", self.gru_layers as f64),
            ("v_dim", self.v_dim as f64),
        ];
        for (k, v) in positive {
            if !(v > 0.0) {
                errs.push(format!("train.{k} must be > 0"));
            }
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            errs.push("train.gamma must lie in [0, 1]".into());
        }
        if self.tau > 1.0 {
            errs.push("train.tau must be <= 1".into());
        }
        if !(self.noise_sigma_start >= 0.0 && self.noise_sigma_end >= 0.0) {
            errs.push("train noise sigmas must be >= 0".into());
        }
        let total = (self.episodes * slots_per_day) as u64;
        if self.warmup_steps >= total {
            errs.push(format!("train.warmup_steps ({}) must be below total steps ({total})", self.warmup_steps));
        }
        if self.encoder_mode != "shared" {
            errs.push(format!("train.encoder_mode {:?} is not supported (use \"shared\")", self.encoder_mode));
        }
    }

    pub fn total_steps(&self, slots_per_day: usize) -> u64 {
        (self.episodes * slots_per_day) as u64
    }
}

/// Where training scenarios come from.
#[derive(Debug, Clone)]
pub struct ScenarioSource {
    pub microgrid: MicrogridConfig,
    pub series: Arc<SeriesSet>,
    pub days: Vec<usize>,
    pub forecast: ForecastModel,
    pub outage: OutageParams,
    pub stress: Stress,
}

impl ScenarioSource {
    /// Scenario `index` under stream family `family`; identical arguments
    /// always give the identical scenario.
    pub fn scenario(&self, streams: &SeedStreams, family: &str, index: u64, horizon: usize) -> Result<Scenario> {
        let mut pick = streams.indexed(&format!("{family}.day"), index);
        let day = self.days[pick.random_range(0..self.days.len())];
        self.scenario_for_day(streams, family, index, day, horizon)
    }

    pub fn scenario_for_day(
        &self,
        streams: &SeedStreams,
        family: &str,
        index: u64,
        day: usize,
        horizon: usize,
    ) -> Result<Scenario> {
        let mut frng = streams.indexed(&format!("{family}.forecast"), index);
        let mut orng = streams.indexed(&format!("{family}.outage"), index);
        Scenario::generate(
            &self.microgrid,
            &self.series.day(day),
            &self.forecast,
            &self.outage,
            horizon,
            self.stress,
            &mut frng,
            &mut orng,
        )
    }
}

/// `[soc_1, c, ..., soc_N, c, v...]` with the counter normalised by day length.
pub fn global_state(soc: &[f64], counter: f64, v: &[f64]) -> Vec<f64> {
    let mut s = Vec::with_capacity(2 * soc.len() + v.len());
    for &x in soc {
        s.push(x);
        s.push(counter);
    }
    s.extend_from_slice(v);
    s
}

/// Shared encoder with its target copy and optimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct SharedEncoder {
    pub layout: Encoder,
    pub params: NetParams,
}

impl SharedEncoder {
    pub fn new<R: Rng + ?Sized>(shape: EncoderShape, microgrid: &MicrogridConfig, lr: f64, rng: &mut R) -> Self {
        let caps: Vec<f64> =
            microgrid.pv.iter().map(|p| p.p_max).chain(microgrid.loads.iter().map(|l| l.p_max)).collect();
        let mut p = ParamSet::new("encoder");
        let layout = Encoder::init(&mut p, shape, &caps, rng);
        Self { layout, params: NetParams::new(p, lr) }
    }

    pub fn encode(&self, w: &ForecastWindow) -> Result<Vec<f64>> {
        self.layout.encode(&self.params.online, w)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub episode: usize,
    pub cost: f64,
    pub shed_mwh: f64,
    pub team_reward: f64,
    pub critic_loss: f64,
    pub actor_objective: f64,
    pub updates: u64,
    pub soc_violations: usize,
    pub outage_slots: usize,
}

impl EpisodeMetrics {
    pub const CSV_HEADER: &'static str =
        "episode,cost,shed_mwh,team_reward,critic_loss,actor_objective,updates,soc_violations,outage_slots";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.9},{:.9},{:.9},{:.9},{:.9},{},{},{}",
            self.episode,
            self.cost,
            self.shed_mwh,
            self.team_reward,
            self.critic_loss,
            self.actor_objective,
            self.updates,
            self.soc_violations,
            self.outage_slots
        )
    }
}

/// SoC overshoot that counts as a violation rather than rounding.
pub const SOC_VIOLATION_TOL: f64 = 1e-9;

pub struct Trainer<L: JointLearner> {
    pub cfg: TrainConfig,
    pub microgrid: MicrogridConfig,
    pub learner: L,
    pub encoder: SharedEncoder,
    pub replay: ReplayBuffer,
    streams: SeedStreams,
    schedule: NoiseSchedule,
    pub steps: u64,
    pub updates: u64,
    pub episodes_done: usize,
}

impl<L: JointLearner> Trainer<L> {
    pub fn new(cfg: TrainConfig, microgrid: MicrogridConfig, learner: L, encoder: SharedEncoder, seed: u64) -> Self {
        let schedule = NoiseSchedule {
            warmup_steps: cfg.warmup_steps,
            sigma_start: cfg.noise_sigma_start,
            sigma_end: cfg.noise_sigma_end,
            total_steps: cfg.total_steps(microgrid.slots_per_day),
        };
        Self {
            replay: ReplayBuffer::new(cfg.replay_capacity),
            cfg,
            microgrid,
            learner,
            encoder,
            streams: SeedStreams::new(seed),
            schedule,
            steps: 0,
            updates: 0,
            episodes_done: 0,
        }
    }

    fn record(obs: &Observation, window: Arc<ForecastWindow>, slots: usize) -> StateRecord {
        StateRecord { soc: obs.soc.clone(), counter: obs.counter as f64 / slots as f64, window }
    }

    /// Rolls out one exploratory episode, triggering updates on schedule.
    pub fn run_episode(&mut self, scenario: Scenario) -> Result<EpisodeMetrics> {
        let slots = self.microgrid.slots_per_day;
        let dt = self.microgrid.dt();
        let mut env = Environment::new(self.microgrid.clone(), scenario, self.cfg.window)?;
        let mut noise = self.streams.indexed("noise", self.episodes_done as u64);
        let mut m = EpisodeMetrics {
            episode: self.episodes_done,
            cost: 0.0,
            shed_mwh: 0.0,
            team_reward: 0.0,
            critic_loss: 0.0,
            actor_objective: 0.0,
            updates: 0,
            soc_violations: 0,
            outage_slots: 0,
        };
        let mut obs = env.observe()?;
        let mut window = Arc::new(obs.window.clone());
        while !env.is_done() {
            let v = self.encoder.encode(&window)?;
            let state = global_state(&obs.soc, obs.counter as f64 / slots as f64, &v);
            let raw = self.learner.act(&Tensor::row(state.clone()))?;
            let pi: Vec<f64> = raw.data().iter().map(|&p| explore(p, &mut noise, self.steps, &self.schedule)).collect();
            let (cmd, _) = mask_batch(MaskMode::Soc, &self.microgrid.ess, dt, &Tensor::row(pi.clone()), &Tensor::row(state));
            let out = env.step(cmd.data())?;
            if out.saturation > SOC_VIOLATION_TOL {
                m.soc_violations += 1;
            }
            m.cost += out.result.cost_total();
            m.shed_mwh += out.result.shed_mw() * dt;
            m.team_reward -= out.result.cost_total();
            m.outage_slots += usize::from(!out.result.connected);
            let here = Self::record(&obs, window.clone(), slots);
            let (next_rec, next_obs, next_window) = if out.done {
                (here.clone(), None, window.clone())
            } else {
                let o = env.observe()?;
                let w = Arc::new(o.window.clone());
                (Self::record(&o, w.clone(), slots), Some(o), w)
            };
            self.replay.push(Transition {
                state: here,
                pi,
                rewards: out.rewards.clone(),
                team_reward: -out.result.cost_total(),
                next: next_rec,
                done: out.done,
            });
            self.steps += 1;
            if self.steps >= self.cfg.warmup_steps
                && self.steps % self.cfg.update_every as u64 == 0
                && self.replay.len() >= self.cfg.batch_size
            {
                for _ in 0..self.cfg.updates_per_trigger {
                    let s = self.update_once()?;
                    m.critic_loss += s.critic_loss;
                    m.actor_objective += s.actor_objective;
                    m.updates += 1;
                }
            }
            if let Some(o) = next_obs {
                obs = o;
                window = next_window;
            }
        }
        if m.updates > 0 {
            m.critic_loss /= m.updates as f64;
            m.actor_objective /= m.updates as f64;
        }
        self.episodes_done += 1;
        Ok(m)
    }

    /// Encoded minibatch for the given replay indices plus the encoder cache
    /// of the current-state pass.
    pub fn build_batch(&self, idx: &[usize]) -> Result<(Batch, crate::encoder::EncoderCache)> {
        let items: Vec<&Transition> = idx.iter().map(|&i| self.replay.get(i)).collect();
        let b = items.len();
        let n = self.learner.n_agents();
        let windows: Vec<&ForecastWindow> = items.iter().map(|t| t.state.window.as_ref()).collect();
        let next_windows: Vec<&ForecastWindow> = items.iter().map(|t| t.next.window.as_ref()).collect();
        let (v, cache) = self.encoder.layout.forward(&self.encoder.params.online, &windows)?;
        let (v_next, _) = self.encoder.layout.forward(&self.encoder.params.target, &next_windows)?;
        let stack = |recs: Vec<&StateRecord>, v: &Tensor| -> Result<Tensor> {
            let mut data = Vec::new();
            for (r, rec) in recs.iter().enumerate() {
                data.extend(global_state(&rec.soc, rec.counter, v.row_slice(r)));
            }
            let width = data.len() / b;
            Tensor::matrix(b, width, data)
        };
        let batch = Batch {
            states: stack(items.iter().map(|t| &t.state).collect(), &v)?,
            next_states: stack(items.iter().map(|t| &t.next).collect(), &v_next)?,
            pi: Tensor::matrix(b, n, items.iter().flat_map(|t| t.pi.iter().copied()).collect())?,
            rewards: Tensor::matrix(b, n, items.iter().flat_map(|t| t.rewards.iter().copied()).collect())?,
            team_rewards: Tensor::matrix(b, 1, items.iter().map(|t| t.team_reward).collect())?,
            done: items.iter().map(|t| t.done).collect(),
        };
        Ok((batch, cache))
    }

    /// One learner update followed by the encoder step and its soft update.
    pub fn update_once(&mut self) -> Result<UpdateStats> {
        if self.replay.len() < self.cfg.batch_size {
            return Err(Error::InsufficientReplay { have: self.replay.len(), need: self.cfg.batch_size });
        }
        let mut rng = self.streams.indexed("replay", self.updates);
        let idx = self.replay.sample_indices(&mut rng, self.cfg.batch_size);
        let (batch, cache) = self.build_batch(&idx)?;
        let stats = self.learner.update(&batch)?;
        let enc = &mut self.encoder;
        let mut grads = enc.params.online.zeros_like();
        enc.layout.backward(&enc.params.online, &cache, &stats.dv, &mut grads)?;
        apply_grads(&mut enc.params.online, &mut enc.params.opt, &mut grads, self.cfg.grad_clip, "encoder")?;
        enc.params.soft_update(self.cfg.tau)?;
        self.updates += 1;
        Ok(stats)
    }

    /// Full checkpoint: encoder, learner, optimizer moments and counters.
    pub fn checkpoint(&self) -> ParamSet {
        let mut out = ParamSet::new(format!("{}.checkpoint", self.learner.name()));
        self.encoder.params.export("encoder", &mut out);
        self.learner.export(&mut out);
        out.add(
            "trainer.counters",
            Tensor::row(vec![self.steps as f64, self.updates as f64, self.episodes_done as f64]),
        );
        out
    }

    pub fn restore(&mut self, ckpt: &ParamSet) -> Result<()> {
        self.encoder.params.import("encoder", ckpt)?;
        self.learner.import(ckpt)?;
        let c = ckpt.find("trainer.counters").ok_or_else(|| Error::Schema("missing trainer.counters".into()))?;
        self.steps = c.data()[0] as u64;
        self.updates = c.data()[1] as u64;
        self.episodes_done = c.data()[2] as usize;
        Ok(())
    }

    pub fn streams(&self) -> SeedStreams {
        self.streams
    }
}

/// Runs the remaining episodes, calling `on_episode` after each.
pub fn train<L: JointLearner>(
    trainer: &mut Trainer<L>,
    source: &ScenarioSource,
    mut on_episode: impl FnMut(&EpisodeMetrics, &Trainer<L>) -> Result<()>,
) -> Result<Vec<EpisodeMetrics>> {
    let mut out = Vec::new();
    let streams = trainer.streams();
    while trainer.episodes_done < trainer.cfg.episodes {
        let scenario = source.scenario(&streams, "train", trainer.episodes_done as u64, trainer.cfg.window)?;
        let m = trainer.run_episode(scenario)?;
        on_episode(&m, trainer)?;
        out.push(m);
    }
    Ok(out)
}
