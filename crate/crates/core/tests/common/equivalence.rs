//! Single-agent MADDPG against single-agent DDPG on shared frozen batches.

use microgrid_core::baselines::DdpgSingle;
use microgrid_core::diffkit::{ParamSet, Tensor};
use microgrid_core::grid::MicrogridConfig;
use microgrid_core::maddpg::{Batch, JointLearner, LearnerConfig, MaskMode, Maddpg};
use microgrid_core::rng::SeedStreams;
use rand::Rng;

pub const V_DIM: usize = 16;

pub fn random_batch<R: Rng>(rng: &mut R, b: usize, n: usize) -> Batch {
    let s = 2 * n + V_DIM;
    let mut fill = |rows, cols, lo: f64, hi: f64| {
        Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
    };
    let states = fill(b, s, 0.0, 1.0);
    let next_states = fill(b, s, 0.0, 1.0);
    let pi = fill(b, n, -1.0, 1.0);
    let rewards = fill(b, n, -3.0, 0.0);
    // A lone agent's reward is the team reward.
    let team_rewards = if n == 1 { rewards.clone() } else { fill(b, 1, -3.0, 0.0) };
    let done = (0..b).map(|_| rng.random_bool(0.05)).collect();
    Batch { states, next_states, pi, rewards, team_rewards, done }
}

fn bits(p: &ParamSet) -> Vec<u64> {
    p.tensors().iter().flat_map(|t| t.data().iter().map(|x| x.to_bits())).collect()
}

pub struct Equivalence {
    pub batches: usize,
    /// Updates after which some parameter or output differed in any bit.
    pub diverged_updates: usize,
    pub compared_scalars: usize,
}

/// Builds both learners from identical init streams with masking bypassed and
/// feeds them the same `batches` batches, comparing every parameter,
/// optimizer moment and loss bit-for-bit after each update.
pub fn n1_equivalence(batches: usize, seed: u64) -> Equivalence {
    let mg = MicrogridConfig::default();
    let specs = vec![mg.ess[0].clone()];
    let cfg = LearnerConfig { mask: MaskMode::Bypass, tau: 0.01, lr_actor: 1e-3, lr_critic: 1e-3, ..Default::default() };
    let streams = SeedStreams::new(seed);
    let mut multi = Maddpg::new(cfg, specs.clone(), mg.dt(), V_DIM, &mut streams.stream("init"));
    let mut single = DdpgSingle::new(cfg, specs, mg.dt(), V_DIM, &mut streams.stream("init"));
    let mut rng = streams.stream("batches");
    let mut out = Equivalence { batches, diverged_updates: 0, compared_scalars: 0 };
    for _ in 0..batches {
        let batch = random_batch(&mut rng, 32, 1);
        let a = multi.update(&batch).unwrap();
        let b = single.update(&batch).unwrap();
        let (mut pa, mut pb) = (ParamSet::new("x"), ParamSet::new("x"));
        multi.export(&mut pa);
        single.export(&mut pb);
        let (ba, bb) = (bits(&pa), bits(&pb));
        out.compared_scalars += ba.len();
        let same_outputs = a.critic_loss.to_bits() == b.critic_loss.to_bits()
            && a.actor_objective.to_bits() == b.actor_objective.to_bits()
            && a.dv == b.dv
            && multi.act(&batch.states).unwrap() == single.act(&batch.states).unwrap();
        if ba != bb || !same_outputs {
            out.diverged_updates += 1;
        }
    }
    out
}
