//! Named weight tensors and the `LCWT` container.
//!
//! ```text
//! magic   4 bytes  "LCWT"
//! version u32 LE   = 1
//! count   u32 LE   number of tensors
//! count records:
//!   name_len u16 LE, name (UTF-8)
//!   rank     u8
//!   dims     rank × u32 LE
//!   data     prod(dims) × f32 LE, row-major
//! ```

use std::collections::BTreeMap;
use std::io::{Read, Write};

use ndarray::{Array1, Array2, Array3, ArrayView1, ArrayView2, ArrayView3, IxDyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{bail, Error, Result};

pub const WEIGHTS_MAGIC: &[u8; 4] = b"LCWT";
pub const WEIGHTS_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            bail!(Shape, "tensor shape {shape:?} needs {n} values, got {}", data.len());
        }
        if shape.len() > u8::MAX as usize {
            bail!(Shape, "tensor rank {} is too large", shape.len());
        }
        Ok(Self { shape, data })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn view(&self) -> ndarray::ArrayViewD<'_, f32> {
        ndarray::ArrayViewD::from_shape(IxDyn(&self.shape), &self.data).expect("validated shape")
    }
}

impl<D: ndarray::Dimension> From<ndarray::Array<f32, D>> for Tensor {
    fn from(a: ndarray::Array<f32, D>) -> Self {
        let shape = a.shape().to_vec();
        let data = a.as_standard_layout().iter().copied().collect();
        Self { shape, data }
    }
}

/// How a parameter is initialised by [`WeightsBundle::random`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Uniform in ±1/√fan_in.
    Uniform { fan_in: usize },
    Ones,
    Zeros,
}

/// One expected tensor of an architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

impl ParamSpec {
    pub(crate) fn new(name: impl Into<String>, shape: &[usize], init: Init) -> Self {
        Self {
            name: name.into(),
            shape: shape.to_vec(),
            init,
        }
    }
}

/// Name → tensor map. Immutable once built and safe to share between threads.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightsBundle {
    tensors: BTreeMap<String, Tensor>,
}

impl WeightsBundle {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: impl Into<Tensor>) {
        self.tensors.insert(name.into(), tensor.into());
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn merge(&mut self, other: WeightsBundle) {
        self.tensors.extend(other.tensors);
    }

    /// Builds a bundle matching `manifest` from a seeded generator.
    pub fn random(manifest: &[ParamSpec], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Self::new();
        for p in manifest {
            let n: usize = p.shape.iter().product();
            let data = match p.init {
                Init::Uniform { fan_in } => {
                    let b = 1.0 / (fan_in.max(1) as f32).sqrt();
                    (0..n).map(|_| rng.random_range(-b..=b)).collect()
                }
                Init::Ones => vec![1.0; n],
                Init::Zeros => vec![0.0; n],
            };
            out.tensors.insert(p.name.clone(), Tensor { shape: p.shape.clone(), data });
        }
        out
    }

    /// Checks that every entry of `manifest` is present with its exact shape.
    pub fn validate(&self, manifest: &[ParamSpec]) -> Result<()> {
        for p in manifest {
            self.tensor(&p.name, &p.shape)?;
        }
        Ok(())
    }

    fn tensor(&self, name: &str, shape: &[usize]) -> Result<&Tensor> {
        let t = self
            .tensors
            .get(name)
            .ok_or_else(|| Error::Weights(format!("missing weight `{name}`")))?;
        if t.shape != shape {
            bail!(Weights, "weight `{name}` has shape {:?}, expected {shape:?}", t.shape);
        }
        Ok(t)
    }

    pub fn array1(&self, name: &str, n: usize) -> Result<Array1<f32>> {
        let t = self.tensor(name, &[n])?;
        Ok(ArrayView1::from(&t.data[..]).to_owned())
    }

    pub fn array2(&self, name: &str, dims: (usize, usize)) -> Result<Array2<f32>> {
        let t = self.tensor(name, &[dims.0, dims.1])?;
        Ok(ArrayView2::from_shape(dims, &t.data).expect("validated").to_owned())
    }

    pub fn array3(&self, name: &str, dims: (usize, usize, usize)) -> Result<Array3<f32>> {
        let t = self.tensor(name, &[dims.0, dims.1, dims.2])?;
        Ok(ArrayView3::from_shape(dims, &t.data).expect("validated").to_owned())
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(WEIGHTS_MAGIC)?;
        w.write_all(&WEIGHTS_VERSION.to_le_bytes())?;
        let count = u32::try_from(self.tensors.len()).map_err(|_| Error::Data("too many tensors".into()))?;
        w.write_all(&count.to_le_bytes())?;
        for (name, t) in &self.tensors {
            let len = u16::try_from(name.len())
                .map_err(|_| Error::Data(format!("tensor name too long: {name}")))?;
            w.write_all(&len.to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&[t.shape.len() as u8])?;
            for &d in &t.shape {
                let d = u32::try_from(d).map_err(|_| Error::Data("dimension exceeds u32".into()))?;
                w.write_all(&d.to_le_bytes())?;
            }
            let mut buf = Vec::with_capacity(t.data.len() * 4);
            for v in &t.data {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let mut cur = Cursor { bytes: &bytes, pos: 0 };
        if cur.take(4).ok() != Some(&WEIGHTS_MAGIC[..]) {
            bail!(Format, "not an LCWT weights file");
        }
        let version = cur.u32()?;
        if version != WEIGHTS_VERSION {
            bail!(Format, "unsupported LCWT version {version}");
        }
        let count = cur.u32()?;
        let mut out = Self::new();
        for _ in 0..count {
            let len = cur.u16()? as usize;
            let name = std::str::from_utf8(cur.take(len)?)
                .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?
                .to_owned();
            let rank = cur.take(1)?[0] as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(cur.u32()? as usize);
            }
            let n = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .and_then(|n| n.checked_mul(4))
                .ok_or_else(|| Error::Format(format!("tensor `{name}` is too large")))?;
            let data = cur
                .take(n)?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            if out.tensors.insert(name.clone(), Tensor { shape, data }).is_some() {
                bail!(Format, "duplicate tensor `{name}`");
            }
        }
        if cur.pos != bytes.len() {
            bail!(Format, "{} trailing bytes after last tensor", bytes.len() - cur.pos);
        }
        Ok(out)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            bail!(Data, "weights file truncated at byte {}", self.pos);
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}
