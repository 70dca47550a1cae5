//! Pieces shared by the multi-agent learner and the single-agent baseline.

use serde::{Deserialize, Serialize};

use super::mask::{self, MaskMode};
use crate::diffkit::{Adam, Grads, ParamSet, Tensor};
use crate::error::{Error, Result};
use crate::grid::EssSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub gamma: f64,
    pub tau: f64,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub hidden: usize,
    pub grad_clip: f64,
    /// Multiplies rewards before they enter the critic targets.
    pub reward_scale: f64,
    pub mask: MaskMode,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            tau: 0.001,
            lr_actor: 2.5e-4,
            lr_critic: 2.5e-4,
            hidden: 64,
            grad_clip: 1.0,
            reward_scale: 1.0,
            mask: MaskMode::Soc,
        }
    }
}

/// A sampled minibatch with states already encoded.
///
/// Global state layout: `[soc_1, counter_1, ..., soc_N, counter_N, v...]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub states: Tensor,
    pub next_states: Tensor,
    /// Stored raw actor outputs, `B x N`.
    pub pi: Tensor,
    /// Per-agent rewards, `B x N`.
    pub rewards: Tensor,
    /// Negated total cost, `B x 1`.
    pub team_rewards: Tensor,
    pub done: Vec<bool>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.done.len()
    }

    pub fn is_empty(&self) -> bool {
        self.done.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub actor_objective: f64,
    /// Gradient of the summed actor losses with respect to the encoded vector.
    pub dv: Tensor,
}

/// A learner owning actors and critics for all ESS.
pub trait JointLearner {
    fn name(&self) -> &'static str;
    fn n_agents(&self) -> usize;
    /// Deterministic raw outputs `B x N` for global states `B x S`.
    fn act(&self, states: &Tensor) -> Result<Tensor>;
    /// One gradient step for every network plus target soft updates.
    fn update(&mut self, batch: &Batch) -> Result<UpdateStats>;
    /// Every parameter and optimizer moment, for checkpoints.
    fn export(&self, out: &mut ParamSet);
    fn import(&mut self, from: &ParamSet) -> Result<()>;
}

/// Masked commands and their slopes for raw outputs `pi` (`B x N`), taking
/// each agent's SoC from column `2j` of `states`.
pub fn mask_batch(mode: MaskMode, specs: &[EssSpec], dt: f64, pi: &Tensor, states: &Tensor) -> (Tensor, Tensor) {
    let (b, n) = (pi.rows(), pi.cols());
    let mut a = Tensor::zeros(&[b, n]);
    let mut slope = Tensor::zeros(&[b, n]);
    for r in 0..b {
        let s = states.row_slice(r);
        for j in 0..n {
            let m = mask::apply(mode, pi.row_slice(r)[j], &specs[j], s[2 * j], dt);
            a.row_slice_mut(r)[j] = m.p;
            slope.row_slice_mut(r)[j] = m.slope();
        }
    }
    (a, slope)
}

/// `y = scale * r + gamma * (1 - done) * q_next`.
pub fn td_targets(rewards: &[f64], q_next: &Tensor, done: &[bool], gamma: f64, scale: f64) -> Tensor {
    let y = rewards
        .iter()
        .zip(q_next.data())
        .zip(done)
        .map(|((r, q), d)| scale * r + if *d { 0.0 } else { gamma * q })
        .collect();
    Tensor::matrix(rewards.len(), 1, y).expect("one target per row")
}

/// Clips, checks finiteness, and applies one optimizer step.
pub fn apply_grads(params: &mut ParamSet, opt: &mut Adam, grads: &mut Grads, clip: f64, what: &str) -> Result<f64> {
    if !grads.all_finite() {
        return Err(Error::NonFinite(format!("{what} gradients")));
    }
    let norm = grads.clip_global_norm(clip);
    opt.step(params, grads)?;
    Ok(norm)
}

/// Behaviour and target parameters with their optimizers for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetParams {
    pub online: ParamSet,
    pub target: ParamSet,
    pub opt: Adam,
}

impl NetParams {
    pub fn new(online: ParamSet, lr: f64) -> Self {
        let mut target = online.clone();
        target.set_tag(format!("{}.target", online.tag()));
        let opt = Adam::new(crate::diffkit::AdamConfig::with_lr(lr), &online);
        Self { online, target, opt }
    }

    pub fn export(&self, prefix: &str, out: &mut ParamSet) {
        out.extend_prefixed(prefix, &self.online);
        out.extend_prefixed(&format!("{prefix}.target"), &self.target);
        self.opt.export(&format!("{prefix}.opt"), out);
    }

    pub fn import(&mut self, prefix: &str, from: &ParamSet) -> Result<()> {
        self.online = from.extract_prefixed(prefix, &self.online)?;
        self.target = from.extract_prefixed(&format!("{prefix}.target"), &self.target)?;
        self.opt.import(&format!("{prefix}.opt"), from)
    }

    pub fn soft_update(&mut self, tau: f64) -> Result<()> {
        crate::diffkit::soft_update(&mut self.target, &self.online, tau)
    }
}
