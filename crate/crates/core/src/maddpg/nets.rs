//! Actor and critic networks.

use rand::Rng;

use crate::diffkit::layers::{relu, relu_backward, tanh, tanh_backward, NormCache};
use crate::diffkit::{Dense, Grads, LayerNorm, ParamSet, Tensor};
use crate::error::Result;

/// Two LayerNorm + ReLU hidden layers and a tanh output.
#[derive(Debug, Clone, PartialEq)]
pub struct Actor {
    fc1: Dense,
    ln1: LayerNorm,
    fc2: Dense,
    ln2: LayerNorm,
    out: Dense,
    pub in_dim: usize,
    pub out_dim: usize,
}

#[derive(Debug, Clone)]
pub struct ActorCache {
    x: Tensor,
    n1: NormCache,
    h1: Tensor,
    n2: NormCache,
    h2: Tensor,
    pi: Tensor,
}

/// Scale applied to the final actor layer so initial outputs sit near zero.
pub const ACTOR_OUT_SCALE: f64 = 1e-3;

/// Same for the critic head: an untrained target critic must not swamp the
/// per-slot rewards in the bootstrapped targets.
pub const CRITIC_OUT_SCALE: f64 = 1e-3;

impl Actor {
    pub fn init<R: Rng + ?Sized>(params: &mut ParamSet, in_dim: usize, out_dim: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            fc1: Dense::init(params, "fc1", in_dim, hidden, 1.0, rng),
            ln1: LayerNorm::init(params, "ln1", hidden),
            fc2: Dense::init(params, "fc2", hidden, hidden, 1.0, rng),
            ln2: LayerNorm::init(params, "ln2", hidden),
            out: Dense::init(params, "out", hidden, out_dim, ACTOR_OUT_SCALE, rng),
            in_dim,
            out_dim,
        }
    }

    pub fn forward(&self, p: &ParamSet, x: &Tensor) -> Result<(Tensor, ActorCache)> {
        let (z1, n1) = self.ln1.forward(p, &self.fc1.forward(p, x)?)?;
        let h1 = relu(&z1);
        let (z2, n2) = self.ln2.forward(p, &self.fc2.forward(p, &h1)?)?;
        let h2 = relu(&z2);
        let pi = tanh(&self.out.forward(p, &h2)?);
        Ok((pi.clone(), ActorCache { x: x.clone(), n1, h1, n2, h2, pi }))
    }

    /// Returns the gradient with respect to the input.
    pub fn backward(&self, p: &ParamSet, c: &ActorCache, dpi: &Tensor, g: &mut Grads) -> Result<Tensor> {
        let d = tanh_backward(&c.pi, dpi);
        let d = self.out.backward(p, &c.h2, &d, g)?;
        let d = relu_backward(&c.h2, &d);
        let d = self.ln2.backward(p, &c.n2, &d, g)?;
        let d = self.fc2.backward(p, &c.h1, &d, g)?;
        let d = relu_backward(&c.h1, &d);
        let d = self.ln1.backward(p, &c.n1, &d, g)?;
        self.fc1.backward(p, &c.x, &d, g)
    }
}

/// State path of two LayerNorm + ReLU layers; actions pass through a ReLU
/// embedding added after the first state layer; linear scalar head.
#[derive(Debug, Clone, PartialEq)]
pub struct Critic {
    fc1: Dense,
    ln1: LayerNorm,
    act: Dense,
    fc2: Dense,
    ln2: LayerNorm,
    out: Dense,
    pub state_dim: usize,
    pub action_dim: usize,
}

#[derive(Debug, Clone)]
pub struct CriticCache {
    s: Tensor,
    a: Tensor,
    n1: NormCache,
    hs: Tensor,
    ha: Tensor,
    joined: Tensor,
    n2: NormCache,
    h2: Tensor,
}

impl Critic {
    pub fn init<R: Rng + ?Sized>(
        params: &mut ParamSet,
        state_dim: usize,
        action_dim: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            fc1: Dense::init(params, "fc1", state_dim, hidden, 1.0, rng),
            ln1: LayerNorm::init(params, "ln1", hidden),
            act: Dense::init(params, "act", action_dim, hidden, 1.0, rng),
            fc2: Dense::init(params, "fc2", hidden, hidden, 1.0, rng),
            ln2: LayerNorm::init(params, "ln2", hidden),
            out: Dense::init(params, "out", hidden, 1, CRITIC_OUT_SCALE, rng),
            state_dim,
            action_dim,
        }
    }

    pub fn forward(&self, p: &ParamSet, s: &Tensor, a: &Tensor) -> Result<(Tensor, CriticCache)> {
        let (z1, n1) = self.ln1.forward(p, &self.fc1.forward(p, s)?)?;
        let hs = relu(&z1);
        let ha = relu(&self.act.forward(p, a)?);
        let mut joined = hs.clone();
        joined.add_assign(&ha)?;
        let (z2, n2) = self.ln2.forward(p, &self.fc2.forward(p, &joined)?)?;
        let h2 = relu(&z2);
        let q = self.out.forward(p, &h2)?;
        Ok((q, CriticCache { s: s.clone(), a: a.clone(), n1, hs, ha, joined, n2, h2 }))
    }

    /// Returns `(dQ/ds, dQ/da)`.
    pub fn backward(&self, p: &ParamSet, c: &CriticCache, dq: &Tensor, g: &mut Grads) -> Result<(Tensor, Tensor)> {
        let d = self.out.backward(p, &c.h2, dq, g)?;
        let d = relu_backward(&c.h2, &d);
        let d = self.ln2.backward(p, &c.n2, &d, g)?;
        let d_joined = self.fc2.backward(p, &c.joined, &d, g)?;
        let da = relu_backward(&c.ha, &d_joined);
        let da = self.act.backward(p, &c.a, &da, g)?;
        let ds = relu_backward(&c.hs, &d_joined);
        let ds = self.ln1.backward(p, &c.n1, &ds, g)?;
        let ds = self.fc1.backward(p, &c.s, &ds, g)?;
        Ok((ds, da))
    }
}
