//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use microgrid_core::diffkit::{Grads, ParamSet, Tensor};
use rand::Rng;

pub const FD_EPS: f64 = 1e-5;
pub const FD_REL_TOL: f64 = 1e-4;

/// Fills every tensor with uniform values in `[-scale, scale]`.
pub fn randomize<R: Rng>(p: &mut ParamSet, scale: f64, rng: &mut R) {
    for t in p.tensors_mut() {
        t.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-scale..=scale));
    }
}

pub fn random_tensor<R: Rng>(rows: usize, cols: usize, scale: f64, rng: &mut R) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.random_range(-scale..=scale)).collect()).unwrap()
}

/// `sum(w * y)`, the scalar probe used for every check.
pub fn probe(y: &Tensor, w: &Tensor) -> f64 {
    y.data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
}

/// Stencil used when the first difference disagrees; a ReLU kink inside the
/// wider stencil is the usual cause.
pub const FD_EPS_NARROW: f64 = 1e-7;

fn central(f: &mut dyn FnMut(f64) -> f64, eps: f64) -> f64 {
    (f(eps) - f(-eps)) / (2.0 * eps)
}

/// Worst coordinate disagreement between analytic and central-difference
/// gradients, relative to the larger gradient's max-norm.
///
/// `f` evaluates the scalar loss; `analytic` returns parameter gradients and
/// gradients for each entry of `inputs`.
pub fn fd_relative_error<F, G>(params: &ParamSet, inputs: &[Tensor], f: F, analytic: G) -> f64
where
    F: Fn(&ParamSet, &[Tensor]) -> f64,
    G: Fn(&ParamSet, &[Tensor]) -> (Grads, Vec<Tensor>),
{
    let (pg, ig) = analytic(params, inputs);
    // (analytic, wide stencil, narrow stencil)
    let mut triples: Vec<(f64, f64, f64)> = Vec::new();
    let mut p = params.clone();
    for ti in 0..p.len() {
        for k in 0..p.tensors()[ti].len() {
            let orig = p.tensors()[ti].data()[k];
            let mut at = |h: f64| {
                p.tensors_mut()[ti].data_mut()[k] = orig + h;
                let v = f(&p, inputs);
                p.tensors_mut()[ti].data_mut()[k] = orig;
                v
            };
            let wide = central(&mut at, FD_EPS);
            let narrow = central(&mut at, FD_EPS_NARROW);
            triples.push((pg.0[ti].data()[k], wide, narrow));
        }
    }
    let mut xs = inputs.to_vec();
    for (i, g) in ig.iter().enumerate() {
        for k in 0..xs[i].len() {
            let orig = xs[i].data()[k];
            let mut at = |h: f64| {
                xs[i].data_mut()[k] = orig + h;
                let v = f(params, &xs);
                xs[i].data_mut()[k] = orig;
                v
            };
            let wide = central(&mut at, FD_EPS);
            let narrow = central(&mut at, FD_EPS_NARROW);
            triples.push((g.data()[k], wide, narrow));
        }
    }
    let scale = triples.iter().fold(0.0f64, |m, (a, n, _)| m.max(a.abs()).max(n.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    triples
        .iter()
        .map(|(a, wide, narrow)| {
            let e = (a - wide).abs() / scale;
            if e <= FD_REL_TOL { e } else { (a - narrow).abs() / scale }
        })
        .fold(0.0, f64::max)
}

pub mod gradcheck;
pub mod distflow;
pub mod physics;
pub mod equivalence;
pub mod tiny;
pub mod smoke;
pub mod bound;
