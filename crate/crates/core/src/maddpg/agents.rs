//! Cooperative multi-agent learner: one actor per ESS on its local
//! observation, one centralized critic per agent over the global state and
//! every agent's masked command.

use rand::Rng;

use super::learner::{apply_grads, mask_batch, td_targets, Batch, JointLearner, LearnerConfig, NetParams, UpdateStats};
use super::nets::{Actor, Critic};
use crate::diffkit::layers::mse;
use crate::diffkit::{ParamSet, Tensor};
use crate::error::{Error, Result};
use crate::grid::EssSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct AgentParams {
    pub actor: NetParams,
    pub critic: NetParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Maddpg {
    pub cfg: LearnerConfig,
    pub specs: Vec<EssSpec>,
    pub dt: f64,
    pub v_dim: usize,
    pub actor: Actor,
    pub critic: Critic,
    pub agents: Vec<AgentParams>,
}

impl Maddpg {
    pub fn new<R: Rng + ?Sized>(cfg: LearnerConfig, specs: Vec<EssSpec>, dt: f64, v_dim: usize, rng: &mut R) -> Self {
        let n = specs.len();
        let state_dim = 2 * n + v_dim;
        let mut actor = None;
        let mut critic = None;
        let agents = (0..n)
            .map(|j| {
                let mut pa = ParamSet::new(format!("agent{j}.actor"));
                actor = Some(Actor::init(&mut pa, 2 + v_dim, 1, cfg.hidden, rng));
                let mut pc = ParamSet::new(format!("agent{j}.critic"));
                critic = Some(Critic::init(&mut pc, state_dim, n, cfg.hidden, rng));
                AgentParams { actor: NetParams::new(pa, cfg.lr_actor), critic: NetParams::new(pc, cfg.lr_critic) }
            })
            .collect();
        Self {
            cfg,
            specs,
            dt,
            v_dim,
            actor: actor.expect("at least one agent"),
            critic: critic.expect("at least one agent"),
            agents,
        }
    }

    pub fn state_dim(&self) -> usize {
        2 * self.specs.len() + self.v_dim
    }

    /// Agent `j`'s local observation `[soc_j, counter_j, v]`.
    pub fn observation(&self, states: &Tensor, j: usize) -> Result<Tensor> {
        let n = self.specs.len();
        Tensor::hcat(&[&states.columns(2 * j, 2), &states.columns(2 * n, self.v_dim)])
    }

    fn raw_outputs(&self, states: &Tensor, target: bool) -> Result<Tensor> {
        let n = self.specs.len();
        let cols: Vec<Tensor> = (0..n)
            .map(|j| {
                let p = if target { &self.agents[j].actor.target } else { &self.agents[j].actor.online };
                Ok(self.actor.forward(p, &self.observation(states, j)?)?.0)
            })
            .collect::<Result<_>>()?;
        Tensor::hcat(&cols.iter().collect::<Vec<_>>())
    }

    /// Critic regression of agent `n` towards its bootstrapped targets.
    pub fn critic_update(&mut self, n: usize, batch: &Batch) -> Result<f64> {
        let next_pi = self.raw_outputs(&batch.next_states, true)?;
        let (next_a, _) = mask_batch(self.cfg.mask, &self.specs, self.dt, &next_pi, &batch.next_states);
        let agent = &self.agents[n];
        let (q_next, _) = self.critic.forward(&agent.critic.target, &batch.next_states, &next_a)?;
        let rewards = batch.rewards.columns(n, 1);
        let y = td_targets(rewards.data(), &q_next, &batch.done, self.cfg.gamma, self.cfg.reward_scale);

        let (a, _) = mask_batch(self.cfg.mask, &self.specs, self.dt, &batch.pi, &batch.states);
        let (q, cache) = self.critic.forward(&agent.critic.online, &batch.states, &a)?;
        let (loss, dq) = mse(&q, &y)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("agent{n} critic loss")));
        }
        let mut grads = agent.critic.online.zeros_like();
        self.critic.backward(&agent.critic.online, &cache, &dq, &mut grads)?;
        let net = &mut self.agents[n].critic;
        apply_grads(&mut net.online, &mut net.opt, &mut grads, self.cfg.grad_clip, "critic")?;
        Ok(loss)
    }

    /// Policy-gradient step for agent `n`; the other agents' commands come
    /// from their current actors. Returns the objective and the gradient of
    /// the loss with respect to the encoded vector through this actor.
    pub fn actor_update(&mut self, n: usize, batch: &Batch) -> Result<(f64, Tensor)> {
        let b = batch.len();
        let obs = self.observation(&batch.states, n)?;
        let (own_pi, actor_cache) = self.actor.forward(&self.agents[n].actor.online, &obs)?;
        let mut pi = self.raw_outputs(&batch.states, false)?;
        for r in 0..b {
            pi.row_slice_mut(r)[n] = own_pi.row_slice(r)[0];
        }
        let (a, slope) = mask_batch(self.cfg.mask, &self.specs, self.dt, &pi, &batch.states);
        let critic = &self.agents[n].critic.online;
        let (q, critic_cache) = self.critic.forward(critic, &batch.states, &a)?;
        let objective = q.data().iter().sum::<f64>() / b as f64;
        if !objective.is_finite() {
            return Err(Error::NonFinite(format!("agent{n} actor objective")));
        }
        let dq = Tensor::matrix(b, 1, vec![-1.0 / b as f64; b])?;
        let mut scratch = critic.zeros_like();
        let (_, da) = self.critic.backward(critic, &critic_cache, &dq, &mut scratch)?;
        let dpi = Tensor::matrix(b, 1, (0..b).map(|r| da.row_slice(r)[n] * slope.row_slice(r)[n]).collect())?;
        let actor_params = &self.agents[n].actor.online;
        let mut grads = actor_params.zeros_like();
        let dobs = self.actor.backward(actor_params, &actor_cache, &dpi, &mut grads)?;
        let net = &mut self.agents[n].actor;
        apply_grads(&mut net.online, &mut net.opt, &mut grads, self.cfg.grad_clip, "actor")?;
        Ok((objective, dobs.columns(2, self.v_dim)))
    }

    pub fn soft_update_agent(&mut self, n: usize) -> Result<()> {
        let tau = self.cfg.tau;
        self.agents[n].critic.soft_update(tau)?;
        self.agents[n].actor.soft_update(tau)
    }
}

impl JointLearner for Maddpg {
    fn name(&self) -> &'static str {
        "maddpg"
    }

    fn n_agents(&self) -> usize {
        self.specs.len()
    }

    fn act(&self, states: &Tensor) -> Result<Tensor> {
        self.raw_outputs(states, false)
    }

    fn update(&mut self, batch: &Batch) -> Result<UpdateStats> {
        let n = self.specs.len();
        let mut dv = Tensor::zeros(&[batch.len(), self.v_dim]);
        let (mut loss, mut obj) = (0.0, 0.0);
        for j in 0..n {
            loss += self.critic_update(j, batch)?;
            let (o, d) = self.actor_update(j, batch)?;
            obj += o;
            dv.add_assign(&d)?;
            self.soft_update_agent(j)?;
        }
        Ok(UpdateStats { critic_loss: loss / n as f64, actor_objective: obj / n as f64, dv })
    }

    fn export(&self, out: &mut ParamSet) {
        for (j, a) in self.agents.iter().enumerate() {
            a.actor.export(&format!("agent{j}.actor"), out);
            a.critic.export(&format!("agent{j}.critic"), out);
        }
    }

    fn import(&mut self, from: &ParamSet) -> Result<()> {
        for (j, a) in self.agents.iter_mut().enumerate() {
            a.actor.import(&format!("agent{j}.actor"), from)?;
            a.critic.import(&format!("agent{j}.critic"), from)?;
        }
        Ok(())
    }
}
