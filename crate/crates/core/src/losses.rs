//! Training objectives evaluated as plain metrics over supplied signals,
//! discriminator logits and feature maps.
//!
//! Every reduction inside a single logit or feature array is an elementwise
//! mean, so values do not depend on a discriminator's output resolution.

use ndarray::ArrayD;

use crate::dsp::{mel_spectrogram, AudioBuffer, MelConfig, StftConfig};
use crate::error::{bail, Result};

/// Logits of `K ≥ 1` discriminators, each an array of any shape.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitSet(Vec<ArrayD<f64>>);

impl LogitSet {
    pub fn new(logits: Vec<ArrayD<f64>>) -> Result<Self> {
        if logits.is_empty() {
            bail!(Shape, "a logit set needs at least one discriminator");
        }
        for (k, a) in logits.iter().enumerate() {
            if a.is_empty() {
                bail!(Shape, "discriminator {k} produced no logits");
            }
            if a.iter().any(|v| !v.is_finite()) {
                bail!(Data, "discriminator {k} has non-finite logits");
            }
        }
        Ok(Self(logits))
    }

    /// Convenience constructor from flat vectors.
    pub fn from_vecs(logits: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(logits.into_iter().map(|v| ArrayD::from_shape_vec(vec![v.len()], v).unwrap()).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ArrayD<f64>> {
        self.0.iter()
    }
}

/// `maps[k][l]` is the `l`-th intermediate feature map of discriminator `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMaps(Vec<Vec<ArrayD<f64>>>);

impl FeatureMaps {
    pub fn new(maps: Vec<Vec<ArrayD<f64>>>) -> Result<Self> {
        if maps.is_empty() || maps.iter().any(Vec::is_empty) {
            bail!(Shape, "feature maps need at least one discriminator and one layer each");
        }
        if maps.iter().flatten().any(|a| a.is_empty()) {
            bail!(Shape, "empty feature map");
        }
        if maps.iter().flatten().flat_map(|a| a.iter()).any(|v| !v.is_finite()) {
            bail!(Data, "non-finite feature values");
        }
        Ok(Self(maps))
    }

    pub fn discriminators(&self) -> usize {
        self.0.len()
    }

    pub fn maps(&self) -> &[Vec<ArrayD<f64>>] {
        &self.0
    }
}

fn mean_of(a: &ArrayD<f64>, f: impl Fn(f64) -> f64) -> f64 {
    a.iter().map(|&v| f(v)).sum::<f64>() / a.len() as f64
}

/// Hinge loss of the discriminators: real logits are pushed above 1, fake
/// ones below −1.
pub fn disc_hinge_loss(real: &LogitSet, fake: &LogitSet) -> Result<f64> {
    if real.len() != fake.len() {
        bail!(
            Shape,
            "real and fake logit sets cover {} and {} discriminators",
            real.len(),
            fake.len()
        );
    }
    let total: f64 = real
        .iter()
        .zip(fake.iter())
        .map(|(r, f)| mean_of(r, |v| (1.0 - v).max(0.0)) + mean_of(f, |v| (1.0 + v).max(0.0)))
        .sum();
    Ok(total / real.len() as f64)
}

/// Generator-side hinge loss on fake logits.
pub fn adv_hinge_loss(fake: &LogitSet) -> f64 {
    fake.iter().map(|f| mean_of(f, |v| (1.0 - v).max(0.0))).sum::<f64>() / fake.len() as f64
}

/// Mean absolute difference between real and fake feature maps, averaged
/// over all `K·L` maps.
pub fn feature_matching_loss(real: &FeatureMaps, fake: &FeatureMaps) -> Result<f64> {
    let (r, f) = (real.maps(), fake.maps());
    if r.len() != f.len() {
        bail!(Shape, "feature maps cover {} and {} discriminators", r.len(), f.len());
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (k, (rk, fk)) in r.iter().zip(f).enumerate() {
        if rk.len() != fk.len() {
            bail!(Shape, "discriminator {k} has {} real and {} fake layers", rk.len(), fk.len());
        }
        for (l, (a, b)) in rk.iter().zip(fk).enumerate() {
            if a.shape() != b.shape() {
                bail!(Shape, "feature map ({k}, {l}) shapes {:?} and {:?} differ", a.shape(), b.shape());
            }
            total += a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Mean absolute difference of log-mel spectrograms.
pub fn mel_loss(x: &AudioBuffer, y: &AudioBuffer, stft_cfg: &StftConfig, mel_cfg: &MelConfig) -> Result<f64> {
    if x.len() != y.len() {
        bail!(Shape, "signals have different lengths ({} and {})", x.len(), y.len());
    }
    if x.sample_rate() != y.sample_rate() {
        bail!(Config, "signals have different sample rates");
    }
    let a = mel_spectrogram(x, stft_cfg, mel_cfg)?;
    let b = mel_spectrogram(y, stft_cfg, mel_cfg)?;
    Ok((&a - &b).mapv(f64::abs).mean().unwrap_or(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub quantizer: f64,
    pub mel: f64,
    pub adversarial: f64,
    pub feature: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            quantizer: 1.0,
            mel: 45.0,
            adversarial: 1.0,
            feature: 2.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.quantizer, self.mel, self.adversarial, self.feature];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            bail!(Config, "loss weights must be finite and non-negative");
        }
        Ok(())
    }
}

/// Individual generator loss terms.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossParts {
    pub quantizer: f64,
    pub mel: f64,
    pub adversarial: f64,
    pub feature: f64,
}

pub fn generator_total_loss(parts: &LossParts, w: &LossWeights) -> Result<f64> {
    w.validate()?;
    Ok(w.quantizer * parts.quantizer
        + w.mel * parts.mel
        + w.adversarial * parts.adversarial
        + w.feature * parts.feature)
}
