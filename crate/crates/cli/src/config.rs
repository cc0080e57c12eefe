use std::path::{Path, PathBuf};

use lcodec::dsp::{MelConfig, StftConfig};
use lcodec::losses::LossWeights;
use lcodec::nets::{DecoderConfig, EncoderConfig};
use lcodec::quantizer::{McrvqConfig, TrainSchedule};
use lcodec::{Error, Result};
use serde::{Deserialize, Serialize};

/// Everything a command can be configured with. Loaded from TOML; missing
/// keys take the defaults below and command-line flags override both.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: Paths,
    pub stft: StftSection,
    pub mel: MelSection,
    pub quantizer: QuantizerSection,
    pub training: TrainingSection,
    pub encoder: EncoderSection,
    pub decoder: DecoderSection,
    pub loss_weights: LossSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub weights: Option<PathBuf>,
    pub codebooks: Option<PathBuf>,
    pub rvq_codebooks: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StftSection {
    pub n_fft: usize,
    pub hop: usize,
}

impl Default for StftSection {
    fn default() -> Self {
        Self { n_fft: 1280, hop: 320 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MelSection {
    pub n_mels: usize,
    pub f_min: f64,
    pub f_max: f64,
    pub log_floor: f64,
}

impl Default for MelSection {
    fn default() -> Self {
        let m = MelConfig::default();
        Self {
            n_mels: m.n_mels,
            f_min: m.f_min,
            f_max: m.f_max,
            log_floor: m.log_floor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuantizerSection {
    pub n_total: usize,
    pub n_parallel: usize,
    pub codebook_size: usize,
    pub dim: usize,
}

impl Default for QuantizerSection {
    fn default() -> Self {
        Self {
            n_total: 8,
            n_parallel: 3,
            codebook_size: 1024,
            dim: 512,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub kmeans_iters: usize,
    pub ema_epochs: usize,
    pub ema_batch: usize,
    pub ema_decay: f64,
    pub dead_threshold: f64,
    pub reseed_rounds: usize,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let t = TrainSchedule::default();
        Self {
            kmeans_iters: t.kmeans_iters,
            ema_epochs: t.ema_epochs,
            ema_batch: t.ema_batch,
            ema_decay: t.ema_decay,
            dead_threshold: t.dead_threshold,
            reseed_rounds: t.reseed_rounds,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderSection {
    pub base_channels: usize,
    pub strides: Vec<usize>,
    pub lstm_layers: usize,
}

impl Default for EncoderSection {
    fn default() -> Self {
        let e = EncoderConfig::default();
        Self {
            base_channels: e.base_channels,
            strides: e.strides,
            lstm_layers: e.lstm_layers,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecoderSection {
    pub hidden_dim: usize,
    pub intermediate_dim: usize,
    pub n_convnext_blocks: usize,
    pub attention_heads: usize,
}

impl Default for DecoderSection {
    fn default() -> Self {
        let d = DecoderConfig::default();
        Self {
            hidden_dim: d.hidden_dim,
            intermediate_dim: d.intermediate_dim,
            n_convnext_blocks: d.n_convnext_blocks,
            attention_heads: d.attention_heads,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossSection {
    pub quantizer: f64,
    pub mel: f64,
    pub adversarial: f64,
    pub feature: f64,
}

impl Default for LossSection {
    fn default() -> Self {
        let w = LossWeights::default();
        Self {
            quantizer: w.quantizer,
            mel: w.mel,
            adversarial: w.adversarial,
            feature: w.feature,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn stft(&self) -> Result<StftConfig> {
        StftConfig::hann(self.stft.n_fft, self.stft.hop)
    }

    pub fn mel(&self) -> MelConfig {
        MelConfig {
            n_mels: self.mel.n_mels,
            f_min: self.mel.f_min,
            f_max: self.mel.f_max,
            log_floor: self.mel.log_floor,
        }
    }

    pub fn mcrvq(&self) -> Result<McrvqConfig> {
        let q = &self.quantizer;
        McrvqConfig::new(q.n_total, q.n_parallel, q.codebook_size, q.dim)
    }

    pub fn schedule(&self) -> TrainSchedule {
        let t = &self.training;
        TrainSchedule {
            kmeans_iters: t.kmeans_iters,
            ema_epochs: t.ema_epochs,
            ema_batch: t.ema_batch,
            ema_decay: t.ema_decay,
            dead_threshold: t.dead_threshold,
            reseed_rounds: t.reseed_rounds,
            seed: self.seed,
        }
    }

    pub fn encoder(&self) -> EncoderConfig {
        EncoderConfig {
            base_channels: self.encoder.base_channels,
            strides: self.encoder.strides.clone(),
            out_dim: self.quantizer.dim,
            lstm_layers: self.encoder.lstm_layers,
            ..EncoderConfig::default()
        }
    }

    pub fn decoder(&self) -> DecoderConfig {
        DecoderConfig {
            input_dim: self.quantizer.dim,
            hidden_dim: self.decoder.hidden_dim,
            intermediate_dim: self.decoder.intermediate_dim,
            n_convnext_blocks: self.decoder.n_convnext_blocks,
            attention_heads: self.decoder.attention_heads,
            n_fft: self.stft.n_fft,
            ..DecoderConfig::default()
        }
    }

    pub fn loss_weights(&self) -> LossWeights {
        let w = &self.loss_weights;
        LossWeights {
            quantizer: w.quantizer,
            mel: w.mel,
            adversarial: w.adversarial,
            feature: w.feature,
        }
    }

    /// Cross-module consistency: the encoder's total stride must equal the
    /// STFT hop so both sides run at the same frame rate.
    pub fn validate(&self) -> Result<()> {
        self.stft()?;
        self.mel().validate(lcodec::nets::DECODER_SAMPLE_RATE)?;
        self.mcrvq()?;
        self.encoder().validate()?;
        self.decoder().validate()?;
        self.loss_weights().validate()?;
        let hop = self.encoder().hop();
        if hop != self.stft.hop {
            return Err(Error::Config(format!(
                "encoder stride product {hop} differs from STFT hop {}",
                self.stft.hop
            )));
        }
        Ok(())
    }

    pub fn require<'a>(path: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
        path.as_deref()
            .ok_or_else(|| Error::Config(format!("no {what} path given (flag or [paths] in config)")))
    }
}
