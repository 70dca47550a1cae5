//! Forecast window construction and the recurrent encoder that compresses
//! it into the characteristic vector shared by all agents.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{DaySeries, ForecastTable};
use crate::diffkit::layers::{relu, relu_backward, GruCache};
use crate::diffkit::{Dense, Grads, GruCell, ParamSet, Tensor};
use crate::error::{Error, Result};

/// Device rows (PV first, then loads) by window columns: the current value
/// followed by predictions for the next `cols - 1` slots.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastWindow {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl ForecastWindow {
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.at(r, col)).collect()
    }

    /// Same window with its columns in reverse order.
    pub fn reversed(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for r in 0..self.rows {
            data.extend((0..self.cols).rev().map(|c| self.at(r, c)));
        }
        Self { rows: self.rows, cols: self.cols, data }
    }
}

/// Columns whose target slot lies past the end of the day repeat the last
/// in-day column.
pub fn build_window(day: &DaySeries, forecasts: &ForecastTable, t: usize, cols: usize) -> Result<ForecastWindow> {
    let slots = day.slots();
    if t >= slots {
        return Err(Error::InvalidInput(format!("slot {t} outside day of {slots} slots")));
    }
    if cols == 0 || cols > forecasts.horizon.max(1) {
        return Err(Error::InvalidInput(format!("window of {cols} columns with forecast horizon {}", forecasts.horizon)));
    }
    let rows = day.pv.len() + day.load.len();
    let mut data = Vec::with_capacity(rows * cols);
    let series = day.pv.iter().zip(&forecasts.pv).chain(day.load.iter().zip(&forecasts.load));
    for (actual, pred) in series {
        let mut last = actual[t];
        data.push(last);
        for k in 1..cols {
            if t + k < slots {
                last = pred[t][k - 1];
            }
            data.push(last);
        }
    }
    Ok(ForecastWindow { rows, cols, data })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncoderShape {
    pub window: usize,
    pub embed: usize,
    pub hidden: usize,
    pub layers: usize,
    pub out: usize,
}

impl Default for EncoderShape {
    fn default() -> Self {
        Self { window: 8, embed: 32, hidden: 32, layers: 2, out: 16 }
    }
}

/// Embedding with ReLU, a stack of GRU layers run over the window columns,
/// and a ReLU output head on the final top-layer state.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub shape: EncoderShape,
    pub inputs: usize,
    embed: Dense,
    cells: Vec<GruCell>,
    head: Dense,
    /// Inputs are divided by device capacity.
    inv_scale: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct EncoderCache {
    xs: Vec<Tensor>,
    embedded: Vec<Tensor>,
    steps: Vec<Vec<GruCache>>,
    top: Tensor,
    v: Tensor,
}

impl Encoder {
    pub fn init<R: Rng + ?Sized>(params: &mut ParamSet, shape: EncoderShape, capacities: &[f64], rng: &mut R) -> Self {
        let inputs = capacities.len();
        let embed = Dense::init(params, "embed", inputs, shape.embed, 1.0, rng);
        let cells = (0..shape.layers)
            .map(|l| {
                let in_dim = if l == 0 { shape.embed } else { shape.hidden };
                GruCell::init(params, &format!("gru{l}"), in_dim, shape.hidden, rng)
            })
            .collect();
        let head = Dense::init(params, "head", shape.hidden, shape.out, 1.0, rng);
        let inv_scale = capacities.iter().map(|c| 1.0 / c).collect();
        Self { shape, inputs, embed, cells, head, inv_scale }
    }

    fn column_batch(&self, windows: &[&ForecastWindow], col: usize) -> Result<Tensor> {
        let mut data = Vec::with_capacity(windows.len() * self.inputs);
        for w in windows {
            if w.rows != self.inputs || w.cols != self.shape.window {
                return Err(Error::Shape {
                    op: "encoder",
                    left: vec![w.rows, w.cols],
                    right: vec![self.inputs, self.shape.window],
                });
            }
            data.extend((0..w.rows).map(|r| w.at(r, col) * self.inv_scale[r]));
        }
        Tensor::matrix(windows.len(), self.inputs, data)
    }

    pub fn forward(&self, p: &ParamSet, windows: &[&ForecastWindow]) -> Result<(Tensor, EncoderCache)> {
        let b = windows.len();
        let mut h: Vec<Tensor> = (0..self.cells.len()).map(|_| Tensor::zeros(&[b, self.shape.hidden])).collect();
        let mut cache = EncoderCache {
            xs: Vec::with_capacity(self.shape.window),
            embedded: Vec::with_capacity(self.shape.window),
            steps: Vec::with_capacity(self.shape.window),
            top: Tensor::zeros(&[b, self.shape.hidden]),
            v: Tensor::zeros(&[b, self.shape.out]),
        };
        for col in 0..self.shape.window {
            let x = self.column_batch(windows, col)?;
            let e = relu(&self.embed.forward(p, &x)?);
            let mut input = e.clone();
            let mut step = Vec::with_capacity(self.cells.len());
            for (l, cell) in self.cells.iter().enumerate() {
                let (next, c) = cell.forward(p, &input, &h[l])?;
                step.push(c);
                h[l] = next.clone();
                input = next;
            }
            cache.xs.push(x);
            cache.embedded.push(e);
            cache.steps.push(step);
        }
        cache.top = h.pop().expect("at least one layer");
        let v = relu(&self.head.forward(p, &cache.top)?);
        cache.v = v.clone();
        Ok((v, cache))
    }

    pub fn encode(&self, p: &ParamSet, window: &ForecastWindow) -> Result<Vec<f64>> {
        Ok(self.forward(p, &[window])?.0.into_data())
    }

    /// Backpropagation through time from `dv` into the parameter gradients.
    pub fn backward(&self, p: &ParamSet, cache: &EncoderCache, dv: &Tensor, g: &mut Grads) -> Result<()> {
        let d_head = relu_backward(&cache.v, dv);
        let d_top = self.head.backward(p, &cache.top, &d_head, g)?;
        let b = dv.rows();
        let layers = self.cells.len();
        let mut carry: Vec<Tensor> = (0..layers).map(|_| Tensor::zeros(&[b, self.shape.hidden])).collect();
        carry[layers - 1] = d_top;
        for col in (0..self.shape.window).rev() {
            let mut from_above: Option<Tensor> = None;
            for l in (0..layers).rev() {
                let mut dh = carry[l].clone();
                if let Some(a) = from_above.take() {
                    dh.add_assign(&a)?;
                }
                let (dx, dh_prev) = self.cells[l].backward(p, &cache.steps[col][l], &dh, g)?;
                carry[l] = dh_prev;
                from_above = Some(dx);
            }
            let de = relu_backward(&cache.embedded[col], &from_above.expect("at least one layer"));
            self.embed.backward(p, &cache.xs[col], &de, g)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedStreams;
    use chrono::NaiveDate;

    fn day(slots: usize) -> (DaySeries, ForecastTable) {
        let pv = vec![(0..slots).map(|t| t as f64).collect::<Vec<_>>()];
        let load = vec![vec![2.0; slots]];
        let preds = |s: &Vec<f64>| -> Vec<Vec<f64>> {
            (0..slots).map(|t| (1..4).filter(|k| t + k < slots).map(|k| s[t + k]).collect()).collect()
        };
        let f = ForecastTable { horizon: 4, pv: vec![preds(&pv[0])], load: vec![preds(&load[0])] };
        (DaySeries { date: NaiveDate::from_ymd_opt(2022, 7, 1).unwrap(), pv, load }, f)
    }

    #[test]
    fn window_layout_and_padding() {
        let (d, f) = day(96);
        let w = build_window(&d, &f, 10, 4).unwrap();
        assert_eq!(w.column(0), vec![10.0, 2.0]);
        assert_eq!((0..4).map(|c| w.at(0, c)).collect::<Vec<_>>(), vec![10.0, 11.0, 12.0, 13.0]);
        let end = build_window(&d, &f, 94, 4).unwrap();
        assert_eq!((0..4).map(|c| end.at(0, c)).collect::<Vec<_>>(), vec![94.0, 95.0, 95.0, 95.0]);
        let one = build_window(&d, &f, 5, 1).unwrap();
        assert_eq!(one.data, vec![5.0, 2.0]);
        assert!(build_window(&d, &f, 96, 4).is_err());
    }

    #[test]
    fn zero_params_give_zero_vector() {
        let mut p = ParamSet::new("enc");
        let mut rng = SeedStreams::new(0).stream("init");
        let shape = EncoderShape { window: 4, ..Default::default() };
        let enc = Encoder::init(&mut p, shape, &[1.0, 4.0], &mut rng);
        let (d, f) = day(96);
        let w = build_window(&d, &f, 20, 4).unwrap();
        let v = enc.encode(&p, &w).unwrap();
        assert_eq!(v.len(), 16);
        assert!(v.iter().all(|x| *x >= 0.0 && x.is_finite()));
        assert_eq!(v, enc.encode(&p, &w).unwrap());
        p.tensors_mut().iter_mut().for_each(|t| t.fill(0.0));
        assert!(enc.encode(&p, &w).unwrap().iter().all(|x| *x == 0.0));
    }
}
