//! Layers with hand-written forward and backward passes.
//!
//! Parameters live in a [`ParamSet`]; a layer only records the ids of its
//! tensors, so one layout can be evaluated against behaviour and target
//! parameter sets alike. Every `backward` accumulates into a [`Grads`]
//! buffer and returns the gradient with respect to the layer input.

use rand::Rng;

use super::params::{Grads, ParamId, ParamSet};
use super::tensor::{matmul, matmul_nt, matmul_tn_acc, Tensor};
use crate::error::{Error, Result};

fn uniform<R: Rng + ?Sized>(rng: &mut R, shape: &[usize], bound: f64) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
    Tensor::from_vec(shape, data).expect("shape product matches")
}

/// Fully connected layer, `y = x W + b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dense {
    pub w: ParamId,
    pub b: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Dense {
    /// Registers `name.w` / `name.b`, uniform in +-1/sqrt(fan_in) times `scale`.
    pub fn init<R: Rng + ?Sized>(
        params: &mut ParamSet,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        scale: f64,
        rng: &mut R,
    ) -> Self {
        let bound = scale / (in_dim as f64).sqrt();
        let w = params.add(format!("{name}.w"), uniform(rng, &[in_dim, out_dim], bound));
        let b = params.add(format!("{name}.b"), uniform(rng, &[out_dim], bound));
        Self { w, b, in_dim, out_dim }
    }

    pub fn forward(&self, p: &ParamSet, x: &Tensor) -> Result<Tensor> {
        if x.cols() != self.in_dim {
            return Err(Error::Shape { op: "dense", left: x.shape().to_vec(), right: p.get(self.w).shape().to_vec() });
        }
        let mut y = matmul(x, p.get(self.w))?;
        let b = p.get(self.b).data();
        for r in 0..y.rows() {
            y.row_slice_mut(r).iter_mut().zip(b).for_each(|(v, bb)| *v += bb);
        }
        Ok(y)
    }

    pub fn backward(&self, p: &ParamSet, x: &Tensor, dy: &Tensor, g: &mut Grads) -> Result<Tensor> {
        matmul_tn_acc(x, dy, g.get_mut(self.w))?;
        let gb = g.get_mut(self.b).data_mut();
        for r in 0..dy.rows() {
            gb.iter_mut().zip(dy.row_slice(r)).for_each(|(a, d)| *a += d);
        }
        matmul_nt(dy, p.get(self.w))
    }
}

/// Row-wise normalisation to zero mean and unit variance.
#[derive(Debug, Clone)]
pub struct NormCache {
    pub xhat: Tensor,
    pub inv_std: Vec<f64>,
}

pub fn normalize_rows(x: &Tensor, eps: f64) -> NormCache {
    let (rows, cols) = (x.rows(), x.cols());
    let mut xhat = Tensor::zeros(&[rows, cols]);
    let mut inv_std = Vec::with_capacity(rows);
    for r in 0..rows {
        let row = x.row_slice(r);
        let mean = row.iter().sum::<f64>() / cols as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
        let is = 1.0 / (var + eps).sqrt();
        let is = if is.is_finite() { is } else { 0.0 };
        xhat.row_slice_mut(r).iter_mut().zip(row).for_each(|(o, v)| *o = (v - mean) * is);
        inv_std.push(is);
    }
    NormCache { xhat, inv_std }
}

/// Layer normalisation with learned gain and bias.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub dim: usize,
    pub eps: f64,
}

impl LayerNorm {
    pub const DEFAULT_EPS: f64 = 1e-5;

    pub fn init(params: &mut ParamSet, name: &str, dim: usize) -> Self {
        let gamma = params.add(format!("{name}.gamma"), Tensor::from_vec(&[dim], vec![1.0; dim]).unwrap());
        let beta = params.add(format!("{name}.beta"), Tensor::zeros(&[dim]));
        Self { gamma, beta, dim, eps: Self::DEFAULT_EPS }
    }

    pub fn forward(&self, p: &ParamSet, x: &Tensor) -> Result<(Tensor, NormCache)> {
        if x.cols() != self.dim {
            return Err(Error::Shape { op: "layernorm", left: x.shape().to_vec(), right: vec![self.dim] });
        }
        let cache = normalize_rows(x, self.eps);
        let g = p.get(self.gamma).data();
        let b = p.get(self.beta).data();
        let mut y = cache.xhat.clone();
        for r in 0..y.rows() {
            for ((v, gg), bb) in y.row_slice_mut(r).iter_mut().zip(g).zip(b) {
                *v = *v * gg + bb;
            }
        }
        Ok((y, cache))
    }

    pub fn backward(&self, p: &ParamSet, cache: &NormCache, dy: &Tensor, grads: &mut Grads) -> Result<Tensor> {
        let (rows, cols) = (dy.rows(), dy.cols());
        let g = p.get(self.gamma).data();
        {
            let gg = grads.get_mut(self.gamma).data_mut();
            for r in 0..rows {
                for ((a, d), xh) in gg.iter_mut().zip(dy.row_slice(r)).zip(cache.xhat.row_slice(r)) {
                    *a += d * xh;
                }
            }
        }
        {
            let gb = grads.get_mut(self.beta).data_mut();
            for r in 0..rows {
                gb.iter_mut().zip(dy.row_slice(r)).for_each(|(a, d)| *a += d);
            }
        }
        let mut dx = Tensor::zeros(&[rows, cols]);
        let n = cols as f64;
        for r in 0..rows {
            let xh = cache.xhat.row_slice(r);
            let d = dy.row_slice(r);
            let mut sum_dxh = 0.0;
            let mut sum_dxh_xh = 0.0;
            for j in 0..cols {
                let dxh = d[j] * g[j];
                sum_dxh += dxh;
                sum_dxh_xh += dxh * xh[j];
            }
            let is = cache.inv_std[r];
            let out = dx.row_slice_mut(r);
            for j in 0..cols {
                let dxh = d[j] * g[j];
                out[j] = is / n * (n * dxh - sum_dxh - xh[j] * sum_dxh_xh);
            }
        }
        Ok(dx)
    }
}

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

/// Gradient through a ReLU given its output.
pub fn relu_backward(y: &Tensor, dy: &Tensor) -> Tensor {
    let mut dx = dy.clone();
    dx.data_mut().iter_mut().zip(y.data()).for_each(|(d, &v)| {
        if v <= 0.0 {
            *d = 0.0
        }
    });
    dx
}

pub fn tanh(x: &Tensor) -> Tensor {
    x.map(f64::tanh)
}

/// Gradient through tanh given its output.
pub fn tanh_backward(y: &Tensor, dy: &Tensor) -> Tensor {
    let mut dx = dy.clone();
    dx.data_mut().iter_mut().zip(y.data()).for_each(|(d, &v)| *d *= 1.0 - v * v);
    dx
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Mean squared error over all elements, with its gradient w.r.t. `pred`.
pub fn mse(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    pred.same_shape("mse", target)?;
    let n = pred.len() as f64;
    let mut grad = pred.clone();
    let mut loss = 0.0;
    for (g, &t) in grad.data_mut().iter_mut().zip(target.data()) {
        let d = *g - t;
        loss += d * d;
        *g = 2.0 * d / n;
    }
    Ok((loss / n, grad))
}

/// Single GRU cell with reset / update / candidate gates (in that order in
/// the stacked weights).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GruCell {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub b_ih: ParamId,
    pub b_hh: ParamId,
    pub in_dim: usize,
    pub hidden: usize,
}

#[derive(Debug, Clone)]
pub struct GruCache {
    pub x: Tensor,
    pub h_prev: Tensor,
    pub r: Tensor,
    pub z: Tensor,
    pub n: Tensor,
    pub gh_n: Tensor,
}

impl GruCell {
    pub fn init<R: Rng + ?Sized>(params: &mut ParamSet, name: &str, in_dim: usize, hidden: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        let w_ih = params.add(format!("{name}.w_ih"), uniform(rng, &[in_dim, 3 * hidden], bound));
        let w_hh = params.add(format!("{name}.w_hh"), uniform(rng, &[hidden, 3 * hidden], bound));
        let b_ih = params.add(format!("{name}.b_ih"), uniform(rng, &[3 * hidden], bound));
        let b_hh = params.add(format!("{name}.b_hh"), uniform(rng, &[3 * hidden], bound));
        Self { w_ih, w_hh, b_ih, b_hh, in_dim, hidden }
    }

    pub fn forward(&self, p: &ParamSet, x: &Tensor, h_prev: &Tensor) -> Result<(Tensor, GruCache)> {
        let hsz = self.hidden;
        if x.cols() != self.in_dim || h_prev.cols() != hsz || x.rows() != h_prev.rows() {
            return Err(Error::Shape { op: "gru_cell", left: x.shape().to_vec(), right: h_prev.shape().to_vec() });
        }
        let mut gi = matmul(x, p.get(self.w_ih))?;
        let mut gh = matmul(h_prev, p.get(self.w_hh))?;
        let bi = p.get(self.b_ih).data();
        let bh = p.get(self.b_hh).data();
        let rows = x.rows();
        for r in 0..rows {
            gi.row_slice_mut(r).iter_mut().zip(bi).for_each(|(v, b)| *v += b);
            gh.row_slice_mut(r).iter_mut().zip(bh).for_each(|(v, b)| *v += b);
        }
        let mut rg = Tensor::zeros(&[rows, hsz]);
        let mut zg = Tensor::zeros(&[rows, hsz]);
        let mut ng = Tensor::zeros(&[rows, hsz]);
        let mut ghn = Tensor::zeros(&[rows, hsz]);
        let mut h = Tensor::zeros(&[rows, hsz]);
        for row in 0..rows {
            let gir = gi.row_slice(row);
            let ghr = gh.row_slice(row);
            let hp = h_prev.row_slice(row);
            for j in 0..hsz {
                let r = sigmoid(gir[j] + ghr[j]);
                let z = sigmoid(gir[hsz + j] + ghr[hsz + j]);
                let hn = ghr[2 * hsz + j];
                let n = (gir[2 * hsz + j] + r * hn).tanh();
                rg.row_slice_mut(row)[j] = r;
                zg.row_slice_mut(row)[j] = z;
                ng.row_slice_mut(row)[j] = n;
                ghn.row_slice_mut(row)[j] = hn;
                h.row_slice_mut(row)[j] = (1.0 - z) * n + z * hp[j];
            }
        }
        Ok((h, GruCache { x: x.clone(), h_prev: h_prev.clone(), r: rg, z: zg, n: ng, gh_n: ghn }))
    }

    /// Returns `(dx, dh_prev)`.
    pub fn backward(&self, p: &ParamSet, c: &GruCache, dh: &Tensor, g: &mut Grads) -> Result<(Tensor, Tensor)> {
        let hsz = self.hidden;
        let rows = dh.rows();
        let mut dgi = Tensor::zeros(&[rows, 3 * hsz]);
        let mut dgh = Tensor::zeros(&[rows, 3 * hsz]);
        let mut dh_prev = Tensor::zeros(&[rows, hsz]);
        for row in 0..rows {
            let d = dh.row_slice(row);
            let (r, z, n, hn, hp) = (
                c.r.row_slice(row),
                c.z.row_slice(row),
                c.n.row_slice(row),
                c.gh_n.row_slice(row),
                c.h_prev.row_slice(row),
            );
            let gi = dgi.row_slice_mut(row);
            let mut gh_tmp = vec![0.0; 3 * hsz];
            let dhp = dh_prev.row_slice_mut(row);
            for j in 0..hsz {
                let dz = d[j] * (hp[j] - n[j]);
                let dn = d[j] * (1.0 - z[j]);
                dhp[j] = d[j] * z[j];
                let dn_pre = dn * (1.0 - n[j] * n[j]);
                let dr = dn_pre * hn[j];
                let dr_pre = dr * r[j] * (1.0 - r[j]);
                let dz_pre = dz * z[j] * (1.0 - z[j]);
                gi[j] = dr_pre;
                gi[hsz + j] = dz_pre;
                gi[2 * hsz + j] = dn_pre;
                gh_tmp[j] = dr_pre;
                gh_tmp[hsz + j] = dz_pre;
                gh_tmp[2 * hsz + j] = dn_pre * r[j];
            }
            dgh.row_slice_mut(row).copy_from_slice(&gh_tmp);
        }
        matmul_tn_acc(&c.x, &dgi, g.get_mut(self.w_ih))?;
        matmul_tn_acc(&c.h_prev, &dgh, g.get_mut(self.w_hh))?;
        for row in 0..rows {
            g.get_mut(self.b_ih).data_mut().iter_mut().zip(dgi.row_slice(row)).for_each(|(a, d)| *a += d);
            g.get_mut(self.b_hh).data_mut().iter_mut().zip(dgh.row_slice(row)).for_each(|(a, d)| *a += d);
        }
        let dx = matmul_nt(&dgi, p.get(self.w_ih))?;
        let dh_rec = matmul_nt(&dgh, p.get(self.w_hh))?;
        dh_prev.add_assign(&dh_rec)?;
        Ok((dx, dh_prev))
    }
}
