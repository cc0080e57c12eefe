use ndarray::ArrayView2;

use super::layers::{debug_assert_finite, elu, pad_time, Conv1d, ConvSpec};
use super::lstm::{recurrent_forward, LstmLayer};
use super::weights::{ParamSpec, WeightsBundle};
use crate::dsp::AudioBuffer;
use crate::error::{bail, Result};
use crate::quantizer::LatentSequence;

pub const ENCODER_SAMPLE_RATE: u32 = 24_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncoderConfig {
    pub base_channels: usize,
    /// Down-sampling factor of each block; channels double per block.
    pub strides: Vec<usize>,
    pub out_dim: usize,
    pub lstm_layers: usize,
    pub kernel: usize,
    pub residual_kernel: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            base_channels: 32,
            strides: vec![2, 4, 5, 8],
            out_dim: 512,
            lstm_layers: 2,
            kernel: 7,
            residual_kernel: 3,
        }
    }
}

impl EncoderConfig {
    /// Samples per latent frame.
    pub fn hop(&self) -> usize {
        self.strides.iter().product()
    }

    pub fn block_channels(&self, block: usize) -> usize {
        self.base_channels << block
    }

    pub fn bottleneck_channels(&self) -> usize {
        self.block_channels(self.strides.len())
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_channels == 0 || self.out_dim == 0 || self.lstm_layers == 0 {
            bail!(Config, "encoder widths and LSTM depth must be positive");
        }
        if self.strides.is_empty() || self.strides.contains(&0) {
            bail!(Config, "encoder strides must be non-empty and positive");
        }
        if self.kernel % 2 == 0 || self.residual_kernel % 2 == 0 {
            bail!(Config, "encoder kernels must be odd to preserve length");
        }
        Ok(())
    }

    /// Names and shapes of every weight the encoder reads.
    pub fn manifest(&self) -> Vec<ParamSpec> {
        let mut m = Conv1d::manifest("enc.conv_in", self.base_channels, 1, self.kernel, 1);
        for (b, &s) in self.strides.iter().enumerate() {
            let c = self.block_channels(b);
            let p = format!("enc.block.{b}");
            m.extend(Conv1d::manifest(&format!("{p}.res.conv1"), c, c, self.residual_kernel, 1));
            m.extend(Conv1d::manifest(&format!("{p}.res.conv2"), c, c, self.residual_kernel, 1));
            m.extend(Conv1d::manifest(&format!("{p}.down"), 2 * c, c, 2 * s, 1));
        }
        let h = self.bottleneck_channels();
        for l in 0..self.lstm_layers {
            m.extend(LstmLayer::manifest(&format!("enc.lstm.{l}"), h, h));
        }
        m.extend(Conv1d::manifest("enc.conv_out", self.out_dim, h, self.kernel, 1));
        m
    }
}

struct EncoderBlock {
    conv1: Conv1d,
    conv2: Conv1d,
    down: Conv1d,
}

/// Encoder with weights resolved and shape-checked.
pub struct Encoder {
    cfg: EncoderConfig,
    conv_in: Conv1d,
    blocks: Vec<EncoderBlock>,
    lstm: Vec<LstmLayer>,
    conv_out: Conv1d,
}

impl Encoder {
    pub fn from_bundle(w: &WeightsBundle, cfg: &EncoderConfig) -> Result<Self> {
        cfg.validate()?;
        let k = cfg.kernel;
        let rk = cfg.residual_kernel;
        let conv_in = Conv1d::from_bundle(w, "enc.conv_in", (cfg.base_channels, 1, k), ConvSpec::same(k))?;
        let mut blocks = Vec::new();
        for (b, &s) in cfg.strides.iter().enumerate() {
            let c = cfg.block_channels(b);
            let p = format!("enc.block.{b}");
            let down = ConvSpec {
                stride: s,
                padding: (s / 2, s - s / 2),
                dilation: 1,
                groups: 1,
            };
            blocks.push(EncoderBlock {
                conv1: Conv1d::from_bundle(w, &format!("{p}.res.conv1"), (c, c, rk), ConvSpec::same(rk))?,
                conv2: Conv1d::from_bundle(w, &format!("{p}.res.conv2"), (c, c, rk), ConvSpec::same(rk))?,
                down: Conv1d::from_bundle(w, &format!("{p}.down"), (2 * c, c, 2 * s), down)?,
            });
        }
        let h = cfg.bottleneck_channels();
        let lstm = (0..cfg.lstm_layers)
            .map(|l| LstmLayer::from_bundle(w, &format!("enc.lstm.{l}"), h, h))
            .collect::<Result<_>>()?;
        let conv_out = Conv1d::from_bundle(w, "enc.conv_out", (cfg.out_dim, h, k), ConvSpec::same(k))?;
        Ok(Self {
            cfg: cfg.clone(),
            conv_in,
            blocks,
            lstm,
            conv_out,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.cfg
    }

    /// Latent frames for `audio`. Input is zero-padded at the end to a whole
    /// number of hops, so `n` samples give `ceil(n / hop)` frames.
    pub fn forward(&self, audio: &AudioBuffer) -> Result<LatentSequence> {
        if audio.sample_rate() != ENCODER_SAMPLE_RATE {
            bail!(
                Config,
                "encoder expects {ENCODER_SAMPLE_RATE} Hz audio, got {} Hz",
                audio.sample_rate()
            );
        }
        if audio.is_empty() {
            bail!(Shape, "cannot encode empty audio");
        }
        let hop = self.cfg.hop();
        let frames = audio.len().div_ceil(hop);
        let x: Vec<f32> = audio.samples().iter().map(|&v| v as f32).collect();
        let x = ArrayView2::from_shape((1, x.len()), &x).expect("row vector");
        let x = pad_time(x, frames * hop);

        let mut h = self.conv_in.forward(x.view())?;
        for block in &self.blocks {
            let mut r = h.mapv(elu);
            r = block.conv1.forward(r.view())?;
            r.mapv_inplace(elu);
            r = block.conv2.forward(r.view())?;
            h += &r;
            h.mapv_inplace(elu);
            h = block.down.forward(h.view())?;
            debug_assert_finite(&h, "encoder block");
        }
        let seq = recurrent_forward(h.t(), &self.lstm)?;
        debug_assert_finite(&seq, "encoder LSTM");
        let y = self.conv_out.forward(seq.mapv(elu).t())?;
        debug_assert_eq!(y.ncols(), frames);
        LatentSequence::new(y.t().as_standard_layout().into_owned())
    }
}

pub fn encoder_forward(audio: &AudioBuffer, w: &WeightsBundle, cfg: &EncoderConfig) -> Result<LatentSequence> {
    Encoder::from_bundle(w, cfg)?.forward(audio)
}
