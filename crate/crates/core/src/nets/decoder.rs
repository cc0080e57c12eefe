use ndarray::{s, Array2, ArrayView2};

use super::layers::{debug_assert_finite, gelu, silu, softmax_rows, Conv1d, ConvSpec, LayerNorm, Linear};
use super::weights::{ParamSpec, WeightsBundle};
use crate::dsp::{head_to_spectrum, istft_at_rate, AudioBuffer, StftConfig};
use crate::error::{bail, Result};
use crate::quantizer::LatentSequence;

pub const DECODER_SAMPLE_RATE: u32 = 24_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecoderConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub intermediate_dim: usize,
    pub n_convnext_blocks: usize,
    pub attention_heads: usize,
    pub n_fft: usize,
    pub embed_kernel: usize,
    pub convnext_kernel: usize,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            input_dim: 512,
            hidden_dim: 512,
            intermediate_dim: 1536,
            n_convnext_blocks: 8,
            attention_heads: 8,
            n_fft: 1280,
            embed_kernel: 7,
            convnext_kernel: 7,
        }
    }
}

impl DecoderConfig {
    pub fn head_dim(&self) -> usize {
        self.n_fft + 2
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_dim == 0 || self.intermediate_dim == 0 {
            bail!(Config, "decoder widths must be positive");
        }
        if self.attention_heads == 0 || self.hidden_dim % self.attention_heads != 0 {
            bail!(
                Config,
                "hidden_dim {} is not divisible by {} attention heads",
                self.hidden_dim,
                self.attention_heads
            );
        }
        if self.n_fft == 0 || self.n_fft % 2 != 0 {
            bail!(Config, "n_fft must be even and positive");
        }
        if self.embed_kernel % 2 == 0 || self.convnext_kernel % 2 == 0 {
            bail!(Config, "decoder kernels must be odd to preserve length");
        }
        Ok(())
    }

    pub fn manifest(&self) -> Vec<ParamSpec> {
        let h = self.hidden_dim;
        let mut m = Conv1d::manifest("dec.embed", h, self.input_dim, self.embed_kernel, 1);
        m.extend(AttentionBlock::manifest("dec.attn", h));
        for i in 0..self.n_convnext_blocks {
            m.extend(ConvNextBlock::manifest(
                &format!("dec.convnext.{i}"),
                h,
                self.intermediate_dim,
                self.convnext_kernel,
            ));
        }
        m.extend(LayerNorm::manifest("dec.final_norm", h));
        m.extend(Linear::manifest("dec.head", self.head_dim(), h));
        m
    }
}

/// Applies a conv over time to `x` laid out time × channels.
fn conv_time_major(conv: &Conv1d, x: ArrayView2<'_, f32>) -> Result<Array2<f32>> {
    Ok(conv.forward(x.t())?.reversed_axes().as_standard_layout().into_owned())
}

/// ResBlock followed by multi-head self-attention over the whole sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionBlock {
    pub norm1: LayerNorm,
    pub conv1: Conv1d,
    pub norm2: LayerNorm,
    pub conv2: Conv1d,
    pub q: Conv1d,
    pub k: Conv1d,
    pub v: Conv1d,
    pub out: Conv1d,
    pub heads: usize,
}

impl AttentionBlock {
    const RES_KERNEL: usize = 3;

    pub fn manifest(prefix: &str, h: usize) -> Vec<ParamSpec> {
        let mut m = LayerNorm::manifest(&format!("{prefix}.res.norm1"), h);
        m.extend(Conv1d::manifest(&format!("{prefix}.res.conv1"), h, h, Self::RES_KERNEL, 1));
        m.extend(LayerNorm::manifest(&format!("{prefix}.res.norm2"), h));
        m.extend(Conv1d::manifest(&format!("{prefix}.res.conv2"), h, h, Self::RES_KERNEL, 1));
        for name in ["q", "k", "v", "out"] {
            m.extend(Conv1d::manifest(&format!("{prefix}.{name}"), h, h, 1, 1));
        }
        m
    }

    pub fn from_bundle(w: &WeightsBundle, prefix: &str, h: usize, heads: usize) -> Result<Self> {
        let rk = Self::RES_KERNEL;
        let pw = |name: &str| Conv1d::from_bundle(w, &format!("{prefix}.{name}"), (h, h, 1), ConvSpec::default());
        Ok(Self {
            norm1: LayerNorm::from_bundle(w, &format!("{prefix}.res.norm1"), h)?,
            conv1: Conv1d::from_bundle(w, &format!("{prefix}.res.conv1"), (h, h, rk), ConvSpec::same(rk))?,
            norm2: LayerNorm::from_bundle(w, &format!("{prefix}.res.norm2"), h)?,
            conv2: Conv1d::from_bundle(w, &format!("{prefix}.res.conv2"), (h, h, rk), ConvSpec::same(rk))?,
            q: pw("q")?,
            k: pw("k")?,
            v: pw("v")?,
            out: pw("out")?,
            heads,
        })
    }
}

/// `x` is time × hidden; the output has the same shape.
pub fn attention_block_forward(x: ArrayView2<'_, f32>, w: &AttentionBlock) -> Result<Array2<f32>> {
    let (t, h) = x.dim();
    if w.heads == 0 || h % w.heads != 0 {
        bail!(Shape, "hidden size {h} is not divisible by {} heads", w.heads);
    }
    if w.norm1.gain.len() != h {
        bail!(Shape, "attention block expects {} channels, got {h}", w.norm1.gain.len());
    }

    let mut r = w.norm1.forward(x)?;
    r.mapv_inplace(silu);
    r = conv_time_major(&w.conv1, r.view())?;
    r = w.norm2.forward(r.view())?;
    r.mapv_inplace(silu);
    r = conv_time_major(&w.conv2, r.view())?;
    let y = &x + &r;

    let q = conv_time_major(&w.q, y.view())?;
    let k = conv_time_major(&w.k, y.view())?;
    let v = conv_time_major(&w.v, y.view())?;
    let dh = h / w.heads;
    let scale = 1.0 / (dh as f32).sqrt();
    let mut ctx = Array2::<f32>::zeros((t, h));
    for head in 0..w.heads {
        let cols = s![.., head * dh..(head + 1) * dh];
        let mut scores = q.slice(cols).dot(&k.slice(cols).t());
        scores *= scale;
        softmax_rows(&mut scores);
        ctx.slice_mut(cols).assign(&scores.dot(&v.slice(cols)));
    }
    let o = conv_time_major(&w.out, ctx.view())?;
    let out = y + o;
    debug_assert_finite(&out, "attention block");
    Ok(out)
}

/// Depthwise conv, per-frame norm and an inverted bottleneck, with a residual.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvNextBlock {
    pub dwconv: Conv1d,
    pub norm: LayerNorm,
    pub pwconv1: Linear,
    pub pwconv2: Linear,
}

impl ConvNextBlock {
    pub fn manifest(prefix: &str, h: usize, inter: usize, kernel: usize) -> Vec<ParamSpec> {
        let mut m = Conv1d::manifest(&format!("{prefix}.dwconv"), h, h, kernel, h);
        m.extend(LayerNorm::manifest(&format!("{prefix}.norm"), h));
        m.extend(Linear::manifest(&format!("{prefix}.pwconv1"), inter, h));
        m.extend(Linear::manifest(&format!("{prefix}.pwconv2"), h, inter));
        m
    }

    pub fn from_bundle(w: &WeightsBundle, prefix: &str, h: usize, inter: usize, kernel: usize) -> Result<Self> {
        let spec = ConvSpec { groups: h, ..ConvSpec::same(kernel) };
        Ok(Self {
            dwconv: Conv1d::from_bundle(w, &format!("{prefix}.dwconv"), (h, h, kernel), spec)?,
            norm: LayerNorm::from_bundle(w, &format!("{prefix}.norm"), h)?,
            pwconv1: Linear::from_bundle(w, &format!("{prefix}.pwconv1"), inter, h)?,
            pwconv2: Linear::from_bundle(w, &format!("{prefix}.pwconv2"), h, inter)?,
        })
    }
}

/// `x` is time × hidden; the output has the same shape.
pub fn convnext_block_forward(x: ArrayView2<'_, f32>, w: &ConvNextBlock) -> Result<Array2<f32>> {
    let mut y = conv_time_major(&w.dwconv, x)?;
    y = w.norm.forward(y.view())?;
    y = w.pwconv1.forward(y.view())?;
    y.mapv_inplace(gelu);
    y = w.pwconv2.forward(y.view())?;
    if y.dim() != x.dim() {
        bail!(Shape, "ConvNeXt block changes shape {:?} to {:?}", x.dim(), y.dim());
    }
    let out = &x + &y;
    debug_assert_finite(&out, "ConvNeXt block");
    Ok(out)
}

/// Decoder with weights resolved and shape-checked.
pub struct Decoder {
    cfg: DecoderConfig,
    embed: Conv1d,
    attention: AttentionBlock,
    convnext: Vec<ConvNextBlock>,
    final_norm: LayerNorm,
    head: Linear,
}

impl Decoder {
    pub fn from_bundle(w: &WeightsBundle, cfg: &DecoderConfig) -> Result<Self> {
        cfg.validate()?;
        let h = cfg.hidden_dim;
        let ek = cfg.embed_kernel;
        Ok(Self {
            cfg: cfg.clone(),
            embed: Conv1d::from_bundle(w, "dec.embed", (h, cfg.input_dim, ek), ConvSpec::same(ek))?,
            attention: AttentionBlock::from_bundle(w, "dec.attn", h, cfg.attention_heads)?,
            convnext: (0..cfg.n_convnext_blocks)
                .map(|i| {
                    ConvNextBlock::from_bundle(w, &format!("dec.convnext.{i}"), h, cfg.intermediate_dim, cfg.convnext_kernel)
                })
                .collect::<Result<_>>()?,
            final_norm: LayerNorm::from_bundle(w, "dec.final_norm", h)?,
            head: Linear::from_bundle(w, "dec.head", cfg.head_dim(), h)?,
        })
    }

    pub fn config(&self) -> &DecoderConfig {
        &self.cfg
    }

    /// Head output (frames × (n_fft + 2)) before the spectral inversion.
    pub fn head_output(&self, zq: &LatentSequence) -> Result<Array2<f32>> {
        if zq.dim() != self.cfg.input_dim {
            bail!(Shape, "decoder expects {}-dim latents, got {}", self.cfg.input_dim, zq.dim());
        }
        if zq.frames() == 0 {
            bail!(Shape, "cannot decode an empty latent sequence");
        }
        let mut x = conv_time_major(&self.embed, zq.view())?;
        x = attention_block_forward(x.view(), &self.attention)?;
        for block in &self.convnext {
            x = convnext_block_forward(x.view(), block)?;
        }
        x = self.final_norm.forward(x.view())?;
        let y = self.head.forward(x.view())?;
        debug_assert_finite(&y, "decoder head");
        Ok(y)
    }

    pub fn forward(&self, zq: &LatentSequence, stft_cfg: &StftConfig) -> Result<AudioBuffer> {
        if stft_cfg.n_fft() != self.cfg.n_fft {
            bail!(
                Config,
                "STFT size {} does not match decoder head size {}",
                stft_cfg.n_fft(),
                self.cfg.n_fft
            );
        }
        let h = self.head_output(zq)?.mapv(f64::from);
        let spec = head_to_spectrum(&h, self.cfg.n_fft)?;
        istft_at_rate(&spec, stft_cfg, DECODER_SAMPLE_RATE)
    }
}

pub fn decoder_forward(
    zq: &LatentSequence,
    w: &WeightsBundle,
    cfg: &DecoderConfig,
    stft_cfg: &StftConfig,
) -> Result<AudioBuffer> {
    Decoder::from_bundle(w, cfg)?.forward(zq, stft_cfg)
}
