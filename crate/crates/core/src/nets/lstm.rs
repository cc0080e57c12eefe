use ndarray::{s, Array1, Array2, ArrayView2};

use super::layers::{linear, sigmoid};
use super::weights::{Init, ParamSpec, WeightsBundle};
use crate::error::{bail, Result};

/// One LSTM layer. Gate rows are stacked input, forget, cell, output.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayer {
    pub weight_ih: Array2<f32>,
    pub weight_hh: Array2<f32>,
    pub bias_ih: Array1<f32>,
    pub bias_hh: Array1<f32>,
}

impl LstmLayer {
    pub fn hidden(&self) -> usize {
        self.weight_hh.ncols()
    }

    pub fn input(&self) -> usize {
        self.weight_ih.ncols()
    }

    fn check(&self) -> Result<()> {
        let h = self.hidden();
        if self.weight_hh.nrows() != 4 * h
            || self.weight_ih.nrows() != 4 * h
            || self.bias_ih.len() != 4 * h
            || self.bias_hh.len() != 4 * h
        {
            bail!(Shape, "inconsistent LSTM gate shapes for hidden size {h}");
        }
        Ok(())
    }

    pub fn manifest(prefix: &str, input: usize, hidden: usize) -> Vec<ParamSpec> {
        let init = Init::Uniform { fan_in: hidden };
        vec![
            ParamSpec::new(format!("{prefix}.weight_ih"), &[4 * hidden, input], init),
            ParamSpec::new(format!("{prefix}.weight_hh"), &[4 * hidden, hidden], init),
            ParamSpec::new(format!("{prefix}.bias_ih"), &[4 * hidden], init),
            ParamSpec::new(format!("{prefix}.bias_hh"), &[4 * hidden], init),
        ]
    }

    pub fn from_bundle(w: &WeightsBundle, prefix: &str, input: usize, hidden: usize) -> Result<Self> {
        Ok(Self {
            weight_ih: w.array2(&format!("{prefix}.weight_ih"), (4 * hidden, input))?,
            weight_hh: w.array2(&format!("{prefix}.weight_hh"), (4 * hidden, hidden))?,
            bias_ih: w.array1(&format!("{prefix}.bias_ih"), 4 * hidden)?,
            bias_hh: w.array1(&format!("{prefix}.bias_hh"), 4 * hidden)?,
        })
    }

    /// Runs the layer over `x` (time × input) from a zero state.
    pub fn forward(&self, x: ArrayView2<'_, f32>) -> Result<Array2<f32>> {
        self.check()?;
        if x.ncols() != self.input() {
            bail!(Shape, "LSTM input has {} channels, expected {}", x.ncols(), self.input());
        }
        let h_dim = self.hidden();
        let bias = &self.bias_ih + &self.bias_hh;
        let pre = linear(x, self.weight_ih.view(), Some(bias.view()))?;
        let mut h = Array1::<f32>::zeros(h_dim);
        let mut c = Array1::<f32>::zeros(h_dim);
        let mut out = Array2::zeros((x.nrows(), h_dim));
        for t in 0..x.nrows() {
            let gates = &pre.row(t) + &self.weight_hh.dot(&h);
            for j in 0..h_dim {
                let i = sigmoid(gates[j]);
                let f = sigmoid(gates[h_dim + j]);
                let g = gates[2 * h_dim + j].tanh();
                let o = sigmoid(gates[3 * h_dim + j]);
                c[j] = f * c[j] + i * g;
                h[j] = o * c[j].tanh();
            }
            out.slice_mut(s![t, ..]).assign(&h);
        }
        Ok(out)
    }
}

/// Stacked LSTM over `x` (time × channels), zero initial state in every layer.
pub fn recurrent_forward(x: ArrayView2<'_, f32>, layers: &[LstmLayer]) -> Result<Array2<f32>> {
    let Some((first, rest)) = layers.split_first() else {
        bail!(Shape, "recurrent stack has no layers");
    };
    let mut y = first.forward(x)?;
    for layer in rest {
        y = layer.forward(y.view())?;
    }
    Ok(y)
}
