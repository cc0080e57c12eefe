use super::{
    mcrvq_decode, mcrvq_encode, rvq_decode, rvq_encode, CodebookSet, LatentSequence, McrvqConfig,
    QuantizationResult,
};
use crate::error::{bail, Result};

/// Captured-energy figures for one quantization scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeProfile {
    /// Residual-energy drop contributed by each stage, as a fraction of the
    /// input energy. For a parallel stage this is the energy it captures on
    /// its own channel block.
    pub stage_captured: Vec<f64>,
    /// `(m, 1 - |z - decode(m)|^2 / |z|^2)` for every decodable prefix `m`.
    pub prefix_captured: Vec<(usize, f64)>,
    /// Shannon entropy of each stage's token histogram, in bits.
    pub stage_entropy_bits: Vec<f64>,
}

/// Side-by-side information profile of masked-channel RVQ and plain RVQ on
/// the same latents.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelProfile {
    pub n_total: usize,
    pub n_parallel: usize,
    /// Total input energy summed over frames.
    pub input_energy: f64,
    /// Set when the input has no energy; every fraction is then reported as 0.
    pub zero_energy: bool,
    pub mcrvq: SchemeProfile,
    pub rvq: SchemeProfile,
}

/// Entropy in bits of the empirical distribution of `tokens`.
pub fn token_entropy_bits(tokens: &[u32], codebook_size: usize) -> f64 {
    if tokens.is_empty() {
        return 0.0;
    }
    let mut hist = vec![0usize; codebook_size.max(1)];
    for &t in tokens {
        if (t as usize) < hist.len() {
            hist[t as usize] += 1;
        }
    }
    let n = tokens.len() as f64;
    hist.iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

fn residual_energy(z: &LatentSequence, approx: &LatentSequence) -> f64 {
    z.as_array()
        .iter()
        .zip(approx.as_array().iter())
        .map(|(a, b)| {
            let d = *a as f64 - *b as f64;
            d * d
        })
        .sum()
}

fn scheme_profile(
    z: &LatentSequence,
    result: &QuantizationResult,
    first_prefix: usize,
    codebook_size: usize,
    decode: impl Fn(usize) -> Result<LatentSequence>,
) -> Result<SchemeProfile> {
    let total = z.energy();
    let frames = z.frames() as f64;
    let frac = |x: f64| if total > 0.0 { x / total } else { 0.0 };
    let e = &result.stage_residual_energy;
    let stage_captured = e.windows(2).map(|w| frac((w[0] - w[1]) * frames)).collect();
    let mut prefix_captured = Vec::new();
    for m in first_prefix..=result.tokens.stages() {
        let approx = decode(m)?;
        let captured = if total > 0.0 {
            1.0 - residual_energy(z, &approx) / total
        } else {
            0.0
        };
        prefix_captured.push((m, captured));
    }
    let stage_entropy_bits = (0..result.tokens.stages())
        .map(|s| token_entropy_bits(&result.tokens.stage_column(s), codebook_size))
        .collect();
    Ok(SchemeProfile {
        stage_captured,
        prefix_captured,
        stage_entropy_bits,
    })
}

/// Measures how much of the latent energy each stage (and each decodable
/// stage prefix) captures under masked-channel RVQ and under plain RVQ.
///
/// `rvq_cbs` must hold `cfg.n_total()` full-width codebooks.
pub fn channel_information_profile(
    z: &LatentSequence,
    mcrvq_cbs: &CodebookSet,
    cfg: &McrvqConfig,
    rvq_cbs: &CodebookSet,
) -> Result<ChannelProfile> {
    if rvq_cbs.len() != cfg.n_total() {
        bail!(
            Shape,
            "RVQ codebook set has {} stages, expected {}",
            rvq_cbs.len(),
            cfg.n_total()
        );
    }
    let n = cfg.n_total();
    let k = cfg.codebook_size();
    let m_res = mcrvq_encode(z, mcrvq_cbs, cfg)?;
    let r_res = rvq_encode(z, rvq_cbs, n)?;
    let mcrvq = scheme_profile(z, &m_res, cfg.n_parallel(), k, |m| {
        mcrvq_decode(&m_res.tokens, mcrvq_cbs, cfg, m)
    })?;
    let rvq = scheme_profile(z, &r_res, 1, k, |m| rvq_decode(&r_res.tokens, rvq_cbs, m))?;
    let input_energy = z.energy();
    Ok(ChannelProfile {
        n_total: n,
        n_parallel: cfg.n_parallel(),
        input_energy,
        zero_energy: input_energy == 0.0,
        mcrvq,
        rvq,
    })
}
