use ndarray::Array2;
use num_complex::Complex64;

use super::ComplexSpectrogram;
use crate::error::{bail, Result};

/// Upper bound on `exp(q)` applied by [`head_to_spectrum`].
pub const DEFAULT_MAGNITUDE_CEILING: f64 = 1e2;

/// Converts the decoder head output into complex STFT coefficients.
///
/// `h` is frames × (n_fft + 2). The first `n_fft / 2 + 1` channels are log
/// magnitudes, the remaining ones phases; each coefficient is
/// `exp(q) * (cos p + j sin p)` with the magnitude capped at
/// [`DEFAULT_MAGNITUDE_CEILING`].
pub fn head_to_spectrum(h: &Array2<f64>, n_fft: usize) -> Result<ComplexSpectrogram> {
    head_to_spectrum_clamped(h, n_fft, DEFAULT_MAGNITUDE_CEILING)
}

pub fn head_to_spectrum_clamped(
    h: &Array2<f64>,
    n_fft: usize,
    ceiling: f64,
) -> Result<ComplexSpectrogram> {
    if n_fft == 0 || n_fft % 2 != 0 {
        bail!(Config, "n_fft must be even and positive, got {n_fft}");
    }
    if h.ncols() != n_fft + 2 {
        bail!(
            Shape,
            "head output has {} channels, expected n_fft + 2 = {}",
            h.ncols(),
            n_fft + 2
        );
    }
    if !(ceiling > 0.0) {
        bail!(Config, "magnitude ceiling must be positive");
    }
    let bins = n_fft / 2 + 1;
    let mut data = Vec::with_capacity(h.nrows() * bins);
    for row in h.rows() {
        let (q, p) = (row.slice(ndarray::s![..bins]), row.slice(ndarray::s![bins..]));
        for (q, p) in q.iter().zip(p.iter()) {
            let mag = q.exp().min(ceiling);
            data.push(Complex64::new(mag * p.cos(), mag * p.sin()));
        }
    }
    ComplexSpectrogram::new(h.nrows(), bins, data)
}
