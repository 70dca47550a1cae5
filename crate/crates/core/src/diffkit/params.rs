//! Ordered, named parameter collections and their checkpoint container.
//!
//! Binary layout (all integers and floats little-endian):
//!
//! ```text
//! magic   b"MGPS"
//! u32     format version (currently 1)
//! u32     tag length, then tag bytes (UTF-8)
//! u32     entry count
//! entry:  u32 name length, name bytes (UTF-8)
//!         u32 axis count, u64 per axis
//!         f64 per element, row-major
//! ```

use std::io::{Read, Write};

use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const PARAMS_MAGIC: &[u8; 4] = b"MGPS";
pub const PARAMS_FORMAT_VERSION: u32 = 1;

/// Handle to one tensor inside a [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet {
    tag: String,
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamSet {
    pub fn new(tag: impl Into<String>) -> Self {
        Self { tag: tag.into(), names: Vec::new(), tensors: Vec::new() }
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    pub fn set_tag(&mut self, tag: impl Into<String>) {
        self.tag = tag.into();
    }

    pub fn add(&mut self, name: impl Into<String>, t: Tensor) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(t);
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn find(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Zero-filled gradient buffer with this set's layout.
    pub fn zeros_like(&self) -> Grads {
        Grads(self.tensors.iter().map(|t| Tensor::zeros(t.shape())).collect())
    }

    /// Checks names and shapes line up one-for-one.
    pub fn check_schema(&self, other: &ParamSet) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::Schema(format!("{} vs {} tensors", self.len(), other.len())));
        }
        for ((na, ta), (nb, tb)) in self.iter().zip(other.iter()) {
            if na != nb || ta.shape() != tb.shape() {
                return Err(Error::Schema(format!("{na}{:?} vs {nb}{:?}", ta.shape(), tb.shape())));
            }
        }
        Ok(())
    }

    /// Copies another set's values in, keeping this set's tag.
    pub fn assign(&mut self, other: &ParamSet) -> Result<()> {
        self.check_schema(other)?;
        self.tensors.clone_from(&other.tensors);
        Ok(())
    }

    /// Appends every entry of `other` under `prefix.`.
    pub fn extend_prefixed(&mut self, prefix: &str, other: &ParamSet) {
        for (n, t) in other.iter() {
            self.add(format!("{prefix}.{n}"), t.clone());
        }
    }

    /// Extracts the entries under `prefix.` into a set matching `template`.
    pub fn extract_prefixed(&self, prefix: &str, template: &ParamSet) -> Result<ParamSet> {
        let mut out = ParamSet::new(template.tag());
        for (n, t) in template.iter() {
            let full = format!("{prefix}.{n}");
            let found = self.find(&full).ok_or_else(|| Error::Schema(format!("missing {full}")))?;
            if found.shape() != t.shape() {
                return Err(Error::Schema(format!("{full}: {:?} vs {:?}", found.shape(), t.shape())));
            }
            out.add(n, found.clone());
        }
        Ok(out)
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(PARAMS_MAGIC)?;
        w.write_all(&PARAMS_FORMAT_VERSION.to_le_bytes())?;
        write_str(w, &self.tag)?;
        w.write_all(&(self.len() as u32).to_le_bytes())?;
        for (name, t) in self.iter() {
            write_str(w, name)?;
            w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
            for &d in t.shape() {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            for &v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != PARAMS_MAGIC {
            return Err(Error::Parse("not a parameter file (bad magic)".into()));
        }
        let version = read_u32(r)?;
        if version != PARAMS_FORMAT_VERSION {
            return Err(Error::Parse(format!("unsupported parameter format version {version}")));
        }
        let tag = read_str(r)?;
        let count = read_u32(r)? as usize;
        let mut set = ParamSet::new(tag);
        for _ in 0..count {
            let name = read_str(r)?;
            let ndim = read_u32(r)? as usize;
            if ndim > 3 {
                return Err(Error::Parse(format!("{name}: {ndim} axes")));
            }
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                let mut b = [0u8; 8];
                r.read_exact(&mut b)?;
                shape.push(u64::from_le_bytes(b) as usize);
            }
            let n: usize = shape.iter().product();
            let mut data = Vec::with_capacity(n);
            let mut b = [0u8; 8];
            for _ in 0..n {
                r.read_exact(&mut b)?;
                data.push(f64::from_le_bytes(b));
            }
            set.add(name, Tensor::from_vec(&shape, data)?);
        }
        Ok(set)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_from(&mut f)
    }
}

fn write_str<W: Write>(w: &mut W, s: &str) -> Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_str<R: Read>(r: &mut R) -> Result<String> {
    let n = read_u32(r)? as usize;
    if n > 1 << 20 {
        return Err(Error::Parse(format!("string length {n} too large")));
    }
    let mut b = vec![0u8; n];
    r.read_exact(&mut b)?;
    String::from_utf8(b).map_err(|e| Error::Parse(e.to_string()))
}

/// Gradient buffer laid out like the [`ParamSet`] it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads(pub Vec<Tensor>);

impl Grads {
    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.0[id.0]
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.0[id.0]
    }

    pub fn zero(&mut self) {
        self.0.iter_mut().for_each(|t| t.fill(0.0));
    }

    pub fn global_norm(&self) -> f64 {
        self.0.iter().map(Tensor::sum_sq).sum::<f64>().sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.0.iter().all(Tensor::all_finite)
    }

    /// Rescales so the global norm is at most `max_norm`; returns the pre-clip norm.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.global_norm();
        if norm > max_norm && norm > 0.0 {
            let k = max_norm / norm;
            self.0.iter_mut().for_each(|t| t.scale(k));
        }
        norm
    }

    pub fn scale(&mut self, k: f64) {
        self.0.iter_mut().for_each(|t| t.scale(k));
    }
}

/// Polyak averaging: `target <- tau * source + (1 - tau) * target`.
pub fn soft_update(target: &mut ParamSet, source: &ParamSet, tau: f64) -> Result<()> {
    target.check_schema(source)?;
    for (t, s) in target.tensors_mut().iter_mut().zip(source.tensors()) {
        for (a, &b) in t.data_mut().iter_mut().zip(s.data()) {
            *a = tau * b + (1.0 - tau) * *a;
        }
    }
    Ok(())
}
