use ndarray::{s, Array1, Array2, Array3, ArrayView1, ArrayView2, ArrayView3, Axis};

use super::weights::{Init, ParamSpec, WeightsBundle};
use crate::error::{bail, Result};

/// Geometry of a 1-D convolution. Padding is zeros, `(left, right)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub stride: usize,
    pub padding: (usize, usize),
    pub dilation: usize,
    pub groups: usize,
}

impl ConvSpec {
    pub const fn same(kernel: usize) -> Self {
        Self {
            stride: 1,
            padding: ((kernel - 1) / 2, kernel / 2),
            dilation: 1,
            groups: 1,
        }
    }

    pub const fn symmetric(stride: usize, padding: usize) -> Self {
        Self {
            stride,
            padding: (padding, padding),
            dilation: 1,
            groups: 1,
        }
    }

    pub fn output_len(&self, len: usize, kernel: usize) -> Option<usize> {
        let padded = len + self.padding.0 + self.padding.1;
        let span = self.dilation * (kernel - 1) + 1;
        if self.stride == 0 || padded < span {
            return None;
        }
        Some((padded - span) / self.stride + 1)
    }
}

impl Default for ConvSpec {
    fn default() -> Self {
        Self::symmetric(1, 0)
    }
}

/// Cross-correlation of `x` (channels × time) with `weight`
/// (out_channels × in_channels/groups × kernel).
///
/// Ungrouped convolutions are lowered to a single matrix product over an
/// unfolded input; grouped ones are evaluated directly.
pub fn conv1d_forward(
    x: ArrayView2<'_, f32>,
    weight: ArrayView3<'_, f32>,
    bias: Option<ArrayView1<'_, f32>>,
    spec: &ConvSpec,
) -> Result<Array2<f32>> {
    let (c_in, t_in) = x.dim();
    let (c_out, c_per_group, kernel) = weight.dim();
    let g = spec.groups;
    if g == 0 || c_in % g != 0 || c_out % g != 0 || c_per_group * g != c_in {
        bail!(
            Shape,
            "conv weight {:?} incompatible with {c_in} input channels in {g} groups",
            weight.dim()
        );
    }
    if kernel == 0 || spec.dilation == 0 {
        bail!(Shape, "kernel and dilation must be positive");
    }
    if let Some(b) = &bias {
        if b.len() != c_out {
            bail!(Shape, "conv bias has {} values, expected {c_out}", b.len());
        }
    }
    let Some(t_out) = spec.output_len(t_in, kernel) else {
        bail!(Shape, "input of length {t_in} is shorter than the kernel span");
    };
    let (pl, _) = spec.padding;
    let src = |t: usize, k: usize| -> Option<usize> {
        let pos = (t * spec.stride + k * spec.dilation) as isize - pl as isize;
        (pos >= 0 && (pos as usize) < t_in).then_some(pos as usize)
    };

    let mut out = if g == 1 {
        let mut cols = Array2::<f32>::zeros((c_in * kernel, t_out));
        for c in 0..c_in {
            let xc = x.row(c);
            for k in 0..kernel {
                let mut dst = cols.row_mut(c * kernel + k);
                for t in 0..t_out {
                    if let Some(p) = src(t, k) {
                        dst[t] = xc[p];
                    }
                }
            }
        }
        let w = weight
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((c_out, c_in * kernel))
            .expect("contiguous weight");
        w.dot(&cols)
    } else {
        let out_per_group = c_out / g;
        let mut out = Array2::<f32>::zeros((c_out, t_out));
        for o in 0..c_out {
            let group = o / out_per_group;
            for ci in 0..c_per_group {
                let xc = x.row(group * c_per_group + ci);
                for k in 0..kernel {
                    let w = weight[[o, ci, k]];
                    let mut dst = out.row_mut(o);
                    for t in 0..t_out {
                        if let Some(p) = src(t, k) {
                            dst[t] += w * xc[p];
                        }
                    }
                }
            }
        }
        out
    };
    if let Some(b) = bias {
        for (mut row, bv) in out.axis_iter_mut(Axis(0)).zip(b.iter()) {
            row += *bv;
        }
    }
    Ok(out)
}

/// `x · Wᵀ + b` for `x` (rows × in) and `W` (out × in).
pub fn linear(
    x: ArrayView2<'_, f32>,
    weight: ArrayView2<'_, f32>,
    bias: Option<ArrayView1<'_, f32>>,
) -> Result<Array2<f32>> {
    if x.ncols() != weight.ncols() {
        bail!(
            Shape,
            "linear input has {} features, weight expects {}",
            x.ncols(),
            weight.ncols()
        );
    }
    let mut y = x.dot(&weight.t());
    if let Some(b) = bias {
        if b.len() != weight.nrows() {
            bail!(Shape, "linear bias has {} values, expected {}", b.len(), weight.nrows());
        }
        y += &b;
    }
    Ok(y)
}

pub const LAYER_NORM_EPS: f32 = 1e-6;

/// Normalises every row of `x` (rows × features) to zero mean and unit
/// variance, then applies the affine `gain`/`shift`.
pub fn layer_norm(
    x: ArrayView2<'_, f32>,
    gain: ArrayView1<'_, f32>,
    shift: ArrayView1<'_, f32>,
) -> Result<Array2<f32>> {
    let f = x.ncols();
    if gain.len() != f || shift.len() != f {
        bail!(Shape, "layer norm parameters do not match {f} features");
    }
    let mut out = x.to_owned();
    for mut row in out.rows_mut() {
        let mean = row.iter().map(|&v| v as f64).sum::<f64>() / f as f64;
        let var = row.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / f as f64;
        let inv = 1.0 / (var + LAYER_NORM_EPS as f64).sqrt();
        for ((v, g), b) in row.iter_mut().zip(gain).zip(shift) {
            *v = ((*v as f64 - mean) * inv) as f32 * g + b;
        }
    }
    Ok(out)
}

pub fn elu(x: f32) -> f32 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

pub fn gelu(x: f32) -> f32 {
    0.5 * x * (1.0 + libm::erff(x * std::f32::consts::FRAC_1_SQRT_2))
}

pub fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

/// Sigmoid-weighted linear unit, `x · σ(x)`.
pub fn silu(x: f32) -> f32 {
    x * sigmoid(x)
}

/// Row-wise softmax, numerically stabilised.
pub fn softmax_rows(x: &mut Array2<f32>) {
    for mut row in x.rows_mut() {
        let max = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
}

/// Pads `x` (channels × time) on the right with zeros up to `len` samples.
pub(crate) fn pad_time(x: ArrayView2<'_, f32>, len: usize) -> Array2<f32> {
    let mut out = Array2::zeros((x.nrows(), len.max(x.ncols())));
    out.slice_mut(s![.., ..x.ncols()]).assign(&x);
    out
}

#[inline]
pub(crate) fn debug_assert_finite(x: &Array2<f32>, what: &str) {
    debug_assert!(x.iter().all(|v| v.is_finite()), "non-finite values after {what}");
}

/// Convolution weights with their geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d {
    pub weight: Array3<f32>,
    pub bias: Array1<f32>,
    pub spec: ConvSpec,
}

impl Conv1d {
    pub fn manifest(prefix: &str, c_out: usize, c_in: usize, kernel: usize, groups: usize) -> Vec<ParamSpec> {
        let fan_in = c_in / groups * kernel;
        vec![
            ParamSpec::new(format!("{prefix}.weight"), &[c_out, c_in / groups, kernel], Init::Uniform { fan_in }),
            ParamSpec::new(format!("{prefix}.bias"), &[c_out], Init::Uniform { fan_in }),
        ]
    }

    pub fn from_bundle(
        w: &WeightsBundle,
        prefix: &str,
        (c_out, c_in, kernel): (usize, usize, usize),
        spec: ConvSpec,
    ) -> Result<Self> {
        Ok(Self {
            weight: w.array3(&format!("{prefix}.weight"), (c_out, c_in / spec.groups, kernel))?,
            bias: w.array1(&format!("{prefix}.bias"), c_out)?,
            spec,
        })
    }

    pub fn forward(&self, x: ArrayView2<'_, f32>) -> Result<Array2<f32>> {
        conv1d_forward(x, self.weight.view(), Some(self.bias.view()), &self.spec)
    }
}

/// Dense layer, weight stored as out × in.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Array2<f32>,
    pub bias: Array1<f32>,
}

impl Linear {
    pub fn manifest(prefix: &str, out: usize, inp: usize) -> Vec<ParamSpec> {
        let init = Init::Uniform { fan_in: inp };
        vec![
            ParamSpec::new(format!("{prefix}.weight"), &[out, inp], init),
            ParamSpec::new(format!("{prefix}.bias"), &[out], init),
        ]
    }

    pub fn from_bundle(w: &WeightsBundle, prefix: &str, out: usize, inp: usize) -> Result<Self> {
        Ok(Self {
            weight: w.array2(&format!("{prefix}.weight"), (out, inp))?,
            bias: w.array1(&format!("{prefix}.bias"), out)?,
        })
    }

    pub fn forward(&self, x: ArrayView2<'_, f32>) -> Result<Array2<f32>> {
        linear(x, self.weight.view(), Some(self.bias.view()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gain: Array1<f32>,
    pub shift: Array1<f32>,
}

impl LayerNorm {
    pub fn identity(n: usize) -> Self {
        Self {
            gain: Array1::ones(n),
            shift: Array1::zeros(n),
        }
    }

    pub fn manifest(prefix: &str, n: usize) -> Vec<ParamSpec> {
        vec![
            ParamSpec::new(format!("{prefix}.weight"), &[n], Init::Ones),
            ParamSpec::new(format!("{prefix}.bias"), &[n], Init::Zeros),
        ]
    }

    pub fn from_bundle(w: &WeightsBundle, prefix: &str, n: usize) -> Result<Self> {
        Ok(Self {
            gain: w.array1(&format!("{prefix}.weight"), n)?,
            shift: w.array1(&format!("{prefix}.bias"), n)?,
        })
    }

    /// Normalises each row of `x` (time × features).
    pub fn forward(&self, x: ArrayView2<'_, f32>) -> Result<Array2<f32>> {
        layer_norm(x, self.gain.view(), self.shift.view())
    }
}
