//! Central-difference checks for every differentiable building block.

use microgrid_core::diffkit::layers::{mse, relu, relu_backward, tanh, tanh_backward};
use microgrid_core::diffkit::{Dense, GruCell, LayerNorm, ParamSet, Tensor};
use microgrid_core::encoder::{Encoder, EncoderShape, ForecastWindow};
use microgrid_core::maddpg::nets::{Actor, Critic};
use microgrid_core::rng::SeedStreams;
use rand::Rng;

use super::{fd_relative_error, probe, random_tensor, randomize};

pub const INSTANCES: usize = 50;
const BATCH: usize = 3;

#[derive(Debug, Clone)]
pub struct GradCheck {
    pub op: &'static str,
    pub instances: usize,
    pub worst: f64,
}

fn run(op: &'static str, seed: u64, mut one: impl FnMut(&mut microgrid_core::rng::StreamRng) -> f64) -> GradCheck {
    let streams = SeedStreams::new(seed);
    let worst = (0..INSTANCES as u64)
        .map(|i| one(&mut streams.indexed(&format!("gradcheck.{op}"), i)))
        .fold(0.0, f64::max);
    GradCheck { op, instances: INSTANCES, worst }
}

/// Uniform values kept at least `gap` away from zero so a kink never sits
/// inside the difference stencil.
fn away_from_zero<R: Rng>(rows: usize, cols: usize, gap: f64, rng: &mut R) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| {
            let m = rng.random_range(gap..=2.0);
            if rng.random_bool(0.5) { m } else { -m }
        })
        .collect();
    Tensor::matrix(rows, cols, data).unwrap()
}

pub fn dense(seed: u64) -> GradCheck {
    run("dense", seed, |rng| {
        let mut p = ParamSet::new("t");
        let layer = Dense::init(&mut p, "d", 5, 4, 1.0, rng);
        let x = random_tensor(BATCH, 5, 1.0, rng);
        let w = random_tensor(BATCH, 4, 1.0, rng);
        fd_relative_error(
            &p,
            &[x],
            |p, xs| probe(&layer.forward(p, &xs[0]).unwrap(), &w),
            |p, xs| {
                let mut g = p.zeros_like();
                let dx = layer.backward(p, &xs[0], &w, &mut g).unwrap();
                (g, vec![dx])
            },
        )
    })
}

pub fn layernorm(seed: u64) -> GradCheck {
    run("layernorm", seed, |rng| {
        let mut p = ParamSet::new("t");
        let ln = LayerNorm::init(&mut p, "ln", 6);
        randomize(&mut p, 1.0, rng);
        let x = random_tensor(BATCH, 6, 2.0, rng);
        let w = random_tensor(BATCH, 6, 1.0, rng);
        fd_relative_error(
            &p,
            &[x],
            |p, xs| probe(&ln.forward(p, &xs[0]).unwrap().0, &w),
            |p, xs| {
                let mut g = p.zeros_like();
                let (_, cache) = ln.forward(p, &xs[0]).unwrap();
                let dx = ln.backward(p, &cache, &w, &mut g).unwrap();
                (g, vec![dx])
            },
        )
    })
}

pub fn relu_op(seed: u64) -> GradCheck {
    run("relu", seed, |rng| {
        let x = away_from_zero(BATCH, 7, 1e-3, rng);
        let w = random_tensor(BATCH, 7, 1.0, rng);
        fd_relative_error(
            &ParamSet::new("none"),
            &[x],
            |_, xs| probe(&relu(&xs[0]), &w),
            |p, xs| (p.zeros_like(), vec![relu_backward(&relu(&xs[0]), &w)]),
        )
    })
}

pub fn tanh_op(seed: u64) -> GradCheck {
    run("tanh", seed, |rng| {
        let x = random_tensor(BATCH, 7, 3.0, rng);
        let w = random_tensor(BATCH, 7, 1.0, rng);
        fd_relative_error(
            &ParamSet::new("none"),
            &[x],
            |_, xs| probe(&tanh(&xs[0]), &w),
            |p, xs| (p.zeros_like(), vec![tanh_backward(&tanh(&xs[0]), &w)]),
        )
    })
}

pub fn mse_op(seed: u64) -> GradCheck {
    run("mse", seed, |rng| {
        let x = random_tensor(BATCH, 2, 2.0, rng);
        let target = random_tensor(BATCH, 2, 2.0, rng);
        fd_relative_error(
            &ParamSet::new("none"),
            &[x],
            |_, xs| mse(&xs[0], &target).unwrap().0,
            |p, xs| (p.zeros_like(), vec![mse(&xs[0], &target).unwrap().1]),
        )
    })
}

pub fn gru_cell(seed: u64) -> GradCheck {
    run("gru_cell", seed, |rng| {
        let mut p = ParamSet::new("t");
        let cell = GruCell::init(&mut p, "g", 4, 5, rng);
        randomize(&mut p, 0.8, rng);
        let x = random_tensor(BATCH, 4, 1.0, rng);
        let h = random_tensor(BATCH, 5, 1.0, rng);
        let w = random_tensor(BATCH, 5, 1.0, rng);
        fd_relative_error(
            &p,
            &[x, h],
            |p, xs| probe(&cell.forward(p, &xs[0], &xs[1]).unwrap().0, &w),
            |p, xs| {
                let mut g = p.zeros_like();
                let (_, cache) = cell.forward(p, &xs[0], &xs[1]).unwrap();
                let (dx, dh) = cell.backward(p, &cache, &w, &mut g).unwrap();
                (g, vec![dx, dh])
            },
        )
    })
}

pub fn actor(seed: u64) -> GradCheck {
    run("actor", seed, |rng| {
        let mut p = ParamSet::new("t");
        let net = Actor::init(&mut p, 6, 2, 8, rng);
        randomize(&mut p, 0.6, rng);
        let x = random_tensor(BATCH, 6, 1.0, rng);
        let w = random_tensor(BATCH, 2, 1.0, rng);
        fd_relative_error(
            &p,
            &[x],
            |p, xs| probe(&net.forward(p, &xs[0]).unwrap().0, &w),
            |p, xs| {
                let mut g = p.zeros_like();
                let (_, cache) = net.forward(p, &xs[0]).unwrap();
                let dx = net.backward(p, &cache, &w, &mut g).unwrap();
                (g, vec![dx])
            },
        )
    })
}

pub fn critic(seed: u64) -> GradCheck {
    run("critic", seed, |rng| {
        let mut p = ParamSet::new("t");
        let net = Critic::init(&mut p, 7, 3, 8, rng);
        randomize(&mut p, 0.6, rng);
        let s = random_tensor(BATCH, 7, 1.0, rng);
        let a = random_tensor(BATCH, 3, 1.0, rng);
        let w = random_tensor(BATCH, 1, 1.0, rng);
        fd_relative_error(
            &p,
            &[s, a],
            |p, xs| probe(&net.forward(p, &xs[0], &xs[1]).unwrap().0, &w),
            |p, xs| {
                let mut g = p.zeros_like();
                let (_, cache) = net.forward(p, &xs[0], &xs[1]).unwrap();
                let (ds, da) = net.backward(p, &cache, &w, &mut g).unwrap();
                (g, vec![ds, da])
            },
        )
    })
}

pub fn encoder(seed: u64) -> GradCheck {
    run("encoder", seed, |rng| {
        let shape = EncoderShape { window: 4, embed: 5, hidden: 4, layers: 2, out: 3 };
        let caps = [2.0, 1.0, 0.5];
        let mut p = ParamSet::new("t");
        let enc = Encoder::init(&mut p, shape, &caps, rng);
        randomize(&mut p, 0.8, rng);
        let windows: Vec<ForecastWindow> = (0..BATCH)
            .map(|_| ForecastWindow {
                rows: 3,
                cols: 4,
                data: (0..12).map(|i| rng.random_range(0.0..=caps[i / 4])).collect(),
            })
            .collect();
        let refs: Vec<&ForecastWindow> = windows.iter().collect();
        let w = random_tensor(BATCH, 3, 1.0, rng);
        fd_relative_error(
            &p,
            &[],
            |p, _| probe(&enc.forward(p, &refs).unwrap().0, &w),
            |p, _| {
                let mut g = p.zeros_like();
                let (_, cache) = enc.forward(p, &refs).unwrap();
                enc.backward(p, &cache, &w, &mut g).unwrap();
                (g, vec![])
            },
        )
    })
}

pub fn all(seed: u64) -> Vec<GradCheck> {
    vec![
        dense(seed),
        layernorm(seed),
        relu_op(seed),
        tanh_op(seed),
        mse_op(seed),
        gru_cell(seed),
        actor(seed),
        critic(seed),
        encoder(seed),
    ]
}
