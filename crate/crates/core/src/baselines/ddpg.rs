//! Single-agent DDPG controlling every ESS jointly from the global state,
//! trained on the negated total cost.

use rand::Rng;

use crate::diffkit::layers::mse;
use crate::diffkit::{ParamSet, Tensor};
use crate::error::{Error, Result};
use crate::grid::EssSpec;
use crate::maddpg::learner::{apply_grads, mask_batch, td_targets, Batch, JointLearner, LearnerConfig, NetParams, UpdateStats};
use crate::maddpg::nets::{Actor, Critic};

#[derive(Debug, Clone, PartialEq)]
pub struct DdpgSingle {
    pub cfg: LearnerConfig,
    pub specs: Vec<EssSpec>,
    pub dt: f64,
    pub v_dim: usize,
    pub actor: Actor,
    pub critic: Critic,
    pub actor_params: NetParams,
    pub critic_params: NetParams,
}

impl DdpgSingle {
    pub fn new<R: Rng + ?Sized>(cfg: LearnerConfig, specs: Vec<EssSpec>, dt: f64, v_dim: usize, rng: &mut R) -> Self {
        let n = specs.len();
        let state_dim = 2 * n + v_dim;
        let mut pa = ParamSet::new("ddpg.actor");
        let actor = Actor::init(&mut pa, state_dim, n, cfg.hidden, rng);
        let mut pc = ParamSet::new("ddpg.critic");
        let critic = Critic::init(&mut pc, state_dim, n, cfg.hidden, rng);
        Self {
            actor_params: NetParams::new(pa, cfg.lr_actor),
            critic_params: NetParams::new(pc, cfg.lr_critic),
            cfg,
            specs,
            dt,
            v_dim,
            actor,
            critic,
        }
    }

    pub fn critic_update(&mut self, batch: &Batch) -> Result<f64> {
        let (next_pi, _) = self.actor.forward(&self.actor_params.target, &batch.next_states)?;
        let (next_a, _) = mask_batch(self.cfg.mask, &self.specs, self.dt, &next_pi, &batch.next_states);
        let (q_next, _) = self.critic.forward(&self.critic_params.target, &batch.next_states, &next_a)?;
        let y = td_targets(batch.team_rewards.data(), &q_next, &batch.done, self.cfg.gamma, self.cfg.reward_scale);
        let (a, _) = mask_batch(self.cfg.mask, &self.specs, self.dt, &batch.pi, &batch.states);
        let (q, cache) = self.critic.forward(&self.critic_params.online, &batch.states, &a)?;
        let (loss, dq) = mse(&q, &y)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite("ddpg critic loss".into()));
        }
        let mut grads = self.critic_params.online.zeros_like();
        self.critic.backward(&self.critic_params.online, &cache, &dq, &mut grads)?;
        let net = &mut self.critic_params;
        apply_grads(&mut net.online, &mut net.opt, &mut grads, self.cfg.grad_clip, "critic")?;
        Ok(loss)
    }

    pub fn actor_update(&mut self, batch: &Batch) -> Result<(f64, Tensor)> {
        let b = batch.len();
        let (pi, actor_cache) = self.actor.forward(&self.actor_params.online, &batch.states)?;
        let (a, slope) = mask_batch(self.cfg.mask, &self.specs, self.dt, &pi, &batch.states);
        let (q, critic_cache) = self.critic.forward(&self.critic_params.online, &batch.states, &a)?;
        let objective = q.data().iter().sum::<f64>() / b as f64;
        if !objective.is_finite() {
            return Err(Error::NonFinite("ddpg actor objective".into()));
        }
        let dq = Tensor::matrix(b, 1, vec![-1.0 / b as f64; b])?;
        let mut scratch = self.critic_params.online.zeros_like();
        let (_, da) = self.critic.backward(&self.critic_params.online, &critic_cache, &dq, &mut scratch)?;
        let mut dpi = da;
        dpi.data_mut().iter_mut().zip(slope.data()).for_each(|(d, s)| *d *= s);
        let mut grads = self.actor_params.online.zeros_like();
        let dstate = self.actor.backward(&self.actor_params.online, &actor_cache, &dpi, &mut grads)?;
        let net = &mut self.actor_params;
        apply_grads(&mut net.online, &mut net.opt, &mut grads, self.cfg.grad_clip, "actor")?;
        Ok((objective, dstate.columns(2 * self.specs.len(), self.v_dim)))
    }

    pub fn soft_update(&mut self) -> Result<()> {
        self.critic_params.soft_update(self.cfg.tau)?;
        self.actor_params.soft_update(self.cfg.tau)
    }
}

impl JointLearner for DdpgSingle {
    fn name(&self) -> &'static str {
        "ddpg"
    }

    fn n_agents(&self) -> usize {
        self.specs.len()
    }

    fn act(&self, states: &Tensor) -> Result<Tensor> {
        Ok(self.actor.forward(&self.actor_params.online, states)?.0)
    }

    fn update(&mut self, batch: &Batch) -> Result<UpdateStats> {
        let critic_loss = self.critic_update(batch)?;
        let (actor_objective, dv) = self.actor_update(batch)?;
        self.soft_update()?;
        Ok(UpdateStats { critic_loss, actor_objective, dv })
    }

    fn export(&self, out: &mut ParamSet) {
        self.actor_params.export("ddpg.actor", out);
        self.critic_params.export("ddpg.critic", out);
    }

    fn import(&mut self, from: &ParamSet) -> Result<()> {
        self.actor_params.import("ddpg.actor", from)?;
        self.critic_params.import("ddpg.critic", from)
    }
}
