use crate::error::{Error, Result};

/// Dense row-major f64 tensor with at most three axes.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        assert!(shape.len() <= 3, "tensors have at most three axes");
        Self { shape: shape.to_vec(), data: vec![0.0; shape.iter().product()] }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        if shape.len() > 3 {
            return Err(Error::InvalidInput(format!("tensor with {} axes", shape.len())));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape { op: "from_vec", left: shape.to_vec(), right: vec![data.len()] });
        }
        Ok(Self { shape: shape.to_vec(), data })
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::from_vec(&[rows, cols], data)
    }

    pub fn row(data: Vec<f64>) -> Self {
        let n = data.len();
        Self { shape: vec![1, n], data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Rows of a 2-D tensor (1 for a vector).
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            2 => self.shape[0],
            _ => 1,
        }
    }

    pub fn cols(&self) -> usize {
        *self.shape.last().unwrap_or(&1)
    }

    pub fn row_slice(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn row_slice_mut(&mut self, r: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[r * c..(r + 1) * c]
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&x| f(x)).collect() }
    }

    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        self.same_shape("add_assign", other)?;
        self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += b);
        Ok(())
    }

    pub fn scale(&mut self, k: f64) {
        self.data.iter_mut().for_each(|x| *x *= k);
    }

    pub fn sum_sq(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn same_shape(&self, op: &'static str, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Shape { op, left: self.shape.clone(), right: other.shape.clone() });
        }
        Ok(())
    }

    /// Select columns `[start, start + width)` of a 2-D tensor.
    pub fn columns(&self, start: usize, width: usize) -> Tensor {
        let rows = self.rows();
        let c = self.cols();
        let mut out = Vec::with_capacity(rows * width);
        for r in 0..rows {
            out.extend_from_slice(&self.data[r * c + start..r * c + start + width]);
        }
        Tensor { shape: vec![rows, width], data: out }
    }

    /// Horizontal concatenation of 2-D tensors with equal row counts.
    pub fn hcat(parts: &[&Tensor]) -> Result<Tensor> {
        let rows = parts.first().map_or(0, |p| p.rows());
        for p in parts {
            if p.rows() != rows {
                return Err(Error::Shape { op: "hcat", left: vec![rows], right: p.shape.clone() });
            }
        }
        let width: usize = parts.iter().map(|p| p.cols()).sum();
        let mut data = Vec::with_capacity(rows * width);
        for r in 0..rows {
            for p in parts {
                data.extend_from_slice(p.row_slice(r));
            }
        }
        Ok(Tensor { shape: vec![rows, width], data })
    }
}

/// `x (B x K) * w (K x N)`.
pub fn matmul(x: &Tensor, w: &Tensor) -> Result<Tensor> {
    let (b, k) = (x.rows(), x.cols());
    if w.rows() != k || w.shape().len() != 2 {
        return Err(Error::Shape { op: "matmul", left: x.shape().to_vec(), right: w.shape().to_vec() });
    }
    let n = w.cols();
    let mut out = vec![0.0; b * n];
    let wd = w.data();
    for (r, orow) in out.chunks_exact_mut(n).enumerate() {
        let xrow = x.row_slice(r);
        for (kk, &xv) in xrow.iter().enumerate() {
            if xv == 0.0 {
                continue;
            }
            let wrow = &wd[kk * n..(kk + 1) * n];
            for (o, &wv) in orow.iter_mut().zip(wrow) {
                *o += xv * wv;
            }
        }
    }
    Tensor::matrix(b, n, out)
}

/// Accumulates `x^T (K x B) * dy (B x N)` into `acc (K x N)`.
pub fn matmul_tn_acc(x: &Tensor, dy: &Tensor, acc: &mut Tensor) -> Result<()> {
    let (b, k, n) = (x.rows(), x.cols(), dy.cols());
    if dy.rows() != b || acc.rows() != k || acc.cols() != n {
        return Err(Error::Shape { op: "matmul_tn", left: x.shape().to_vec(), right: dy.shape().to_vec() });
    }
    let ad = acc.data_mut();
    for r in 0..b {
        let xrow = x.row_slice(r);
        let drow = dy.row_slice(r);
        for (kk, &xv) in xrow.iter().enumerate() {
            if xv == 0.0 {
                continue;
            }
            let arow = &mut ad[kk * n..(kk + 1) * n];
            for (a, &d) in arow.iter_mut().zip(drow) {
                *a += xv * d;
            }
        }
    }
    Ok(())
}

/// `dy (B x N) * w^T (N x K)`.
pub fn matmul_nt(dy: &Tensor, w: &Tensor) -> Result<Tensor> {
    let (b, n) = (dy.rows(), dy.cols());
    if w.cols() != n {
        return Err(Error::Shape { op: "matmul_nt", left: dy.shape().to_vec(), right: w.shape().to_vec() });
    }
    let k = w.rows();
    let wd = w.data();
    let mut out = vec![0.0; b * k];
    for (r, orow) in out.chunks_exact_mut(k).enumerate() {
        let drow = dy.row_slice(r);
        for (kk, o) in orow.iter_mut().enumerate() {
            let wrow = &wd[kk * n..(kk + 1) * n];
            *o = wrow.iter().zip(drow).map(|(a, b)| a * b).sum();
        }
    }
    Tensor::matrix(b, k, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_agrees_with_naive() {
        let x = Tensor::matrix(2, 3, vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let w = Tensor::matrix(3, 2, vec![1., 0., 0., 1., 1., 1.]).unwrap();
        let y = matmul(&x, &w).unwrap();
        assert_eq!(y.data(), &[4., 5., 10., 11.]);
        let back = matmul_nt(&y, &w).unwrap();
        assert_eq!(back.data(), &[4., 5., 9., 10., 11., 21.]);
        let mut acc = Tensor::zeros(&[3, 2]);
        matmul_tn_acc(&x, &y, &mut acc).unwrap();
        assert_eq!(acc.data(), &[44., 49., 58., 65., 72., 81.]);
    }

    #[test]
    fn shape_errors_name_both_shapes() {
        let x = Tensor::zeros(&[2, 3]);
        let w = Tensor::zeros(&[4, 2]);
        let msg = matmul(&x, &w).unwrap_err().to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[4, 2]"), "{msg}");
    }
}
