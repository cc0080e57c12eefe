use ndarray::Array2;

use super::{stft, AudioBuffer, StftConfig};
use crate::error::{bail, Result};

/// Log-mel feature parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MelConfig {
    pub n_mels: usize,
    pub f_min: f64,
    pub f_max: f64,
    /// Energies are clamped to this floor before the logarithm.
    pub log_floor: f64,
}

impl Default for MelConfig {
    fn default() -> Self {
        Self {
            n_mels: 100,
            f_min: 0.0,
            f_max: 12_000.0,
            log_floor: 1e-5,
        }
    }
}

impl MelConfig {
    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        if self.n_mels == 0 {
            bail!(Config, "n_mels must be positive");
        }
        if !(self.f_min >= 0.0 && self.f_min < self.f_max) {
            bail!(Config, "mel range must satisfy 0 <= f_min < f_max");
        }
        if self.f_max > sample_rate as f64 / 2.0 {
            bail!(
                Config,
                "f_max {} exceeds Nyquist for {sample_rate} Hz",
                self.f_max
            );
        }
        if !(self.log_floor > 0.0) {
            bail!(Config, "log floor must be positive");
        }
        Ok(())
    }
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filterbank, `n_mels × (n_fft / 2 + 1)`.
///
/// Band edges are equally spaced on the HTK mel scale; each triangle is
/// area-normalised (`2 / (f_hi - f_lo)`) so a flat spectrum gives roughly
/// equal band energies.
pub fn mel_filterbank(n_fft: usize, sample_rate: u32, cfg: &MelConfig) -> Result<Array2<f64>> {
    cfg.validate(sample_rate)?;
    let bins = n_fft / 2 + 1;
    let nyquist = sample_rate as f64 / 2.0;
    let freqs: Vec<f64> = (0..bins)
        .map(|k| nyquist * k as f64 / (bins - 1) as f64)
        .collect();
    let (m_lo, m_hi) = (hz_to_mel(cfg.f_min), hz_to_mel(cfg.f_max));
    let edges: Vec<f64> = (0..cfg.n_mels + 2)
        .map(|i| mel_to_hz(m_lo + (m_hi - m_lo) * i as f64 / (cfg.n_mels + 1) as f64))
        .collect();

    let mut fb = Array2::zeros((cfg.n_mels, bins));
    for m in 0..cfg.n_mels {
        let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        let norm = 2.0 / (hi - lo);
        for (k, &f) in freqs.iter().enumerate() {
            let up = (f - lo) / (mid - lo);
            let down = (hi - f) / (hi - mid);
            let w = up.min(down).max(0.0);
            fb[[m, k]] = w * norm;
        }
    }
    Ok(fb)
}

/// Linear mel-band magnitudes, frames × n_mels.
pub fn mel_energies(
    audio: &AudioBuffer,
    stft_cfg: &StftConfig,
    mel_cfg: &MelConfig,
) -> Result<Array2<f64>> {
    let fb = mel_filterbank(stft_cfg.n_fft(), audio.sample_rate(), mel_cfg)?;
    let spec = stft(audio, stft_cfg)?;
    let mags = Array2::from_shape_vec((spec.frames(), spec.bins()), spec.magnitudes())
        .expect("spectrogram shape");
    Ok(mags.dot(&fb.t()))
}

/// Log-compressed mel spectrogram, `log(max(energy, floor))`.
pub fn mel_spectrogram(
    audio: &AudioBuffer,
    stft_cfg: &StftConfig,
    mel_cfg: &MelConfig,
) -> Result<Array2<f64>> {
    let floor = mel_cfg.log_floor;
    Ok(mel_energies(audio, stft_cfg, mel_cfg)?.mapv(|e| e.max(floor).ln()))
}
