//! Short-time Fourier analysis/synthesis, the magnitude/phase spectral head
//! and log-mel feature extraction.
//!
//! Everything in here works in double precision so that algebraic properties
//! (linearity, Parseval, round trip) can be checked at tight tolerances.

mod head;
mod mel;
mod stft;

pub use head::{head_to_spectrum, head_to_spectrum_clamped, DEFAULT_MAGNITUDE_CEILING};
pub use mel::{mel_energies, mel_filterbank, mel_spectrogram, MelConfig};
pub use stft::{hann_window, istft, istft_at_rate, stft, ComplexSpectrogram, StftConfig};

use crate::error::{bail, Result};

/// Mono waveform with its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioBuffer {
    /// Wraps `samples`, rejecting non-finite values and a zero sample rate.
    ///
    /// Samples are nominally in [-1, 1] but this is not enforced: untrained
    /// decoders routinely overshoot, and the WAV writer is where clipping is
    /// dealt with.
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            bail!(Config, "sample rate must be positive");
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            bail!(Data, "sample {i} is not finite");
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Result<Self> {
        Self::new(vec![0.0; len], sample_rate)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Duration in seconds (`T = d * sr`).
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0f64, |m, s| m.max(s.abs()))
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s * s).sum()
    }
}
