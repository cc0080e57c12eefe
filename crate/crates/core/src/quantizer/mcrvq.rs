use ndarray::{s, Array2};

use super::vq::{sq_dist_exact, NearestSearch};
use super::{CodebookSet, LatentSequence, McrvqConfig, QuantizationResult, Tokens};
use crate::error::{bail, Result};

pub(crate) fn mean_energy(x: &Array2<f32>) -> f64 {
    if x.nrows() == 0 {
        return 0.0;
    }
    x.iter().map(|&v| v as f64 * v as f64).sum::<f64>() / x.nrows() as f64
}

fn check_latents(z: &LatentSequence, cfg: &McrvqConfig) -> Result<()> {
    if z.dim() != cfg.dim() {
        bail!(Shape, "latents have dim {}, config expects {}", z.dim(), cfg.dim());
    }
    Ok(())
}

/// Masked-channel residual quantization of `z`.
///
/// Stages `0..n_parallel` each see only their own channel block of `z`;
/// their embeddings are zero elsewhere. The first serial stage quantizes
/// `z` minus all parallel embeddings and every later serial stage the
/// running residual.
pub fn mcrvq_encode(
    z: &LatentSequence,
    cbs: &CodebookSet,
    cfg: &McrvqConfig,
) -> Result<QuantizationResult> {
    check_latents(z, cfg)?;
    cfg.check_codebooks(cbs)?;
    let frames = z.frames();
    let zv = z.as_array();
    let mut tokens = Array2::<u32>::zeros((frames, cfg.n_total()));
    let mut residual = zv.clone();
    let mut energy = Vec::with_capacity(cfg.n_total() + 1);
    energy.push(mean_energy(&residual));

    for (stage, range) in cfg.partition().iter().enumerate() {
        let cb = cbs.stage(stage);
        let block = zv.slice(s![.., range.clone()]);
        let (idx, _) = NearestSearch::new(cb).assign(block)?;
        for (t, &k) in idx.iter().enumerate() {
            tokens[[t, stage]] = k;
            let e = cb.entry(k as usize);
            for (j, c) in range.clone().enumerate() {
                residual[[t, c]] = zv[[t, c]] - e[j];
            }
        }
        energy.push(mean_energy(&residual));
    }

    for stage in cfg.n_parallel()..cfg.n_total() {
        let cb = cbs.stage(stage);
        let (idx, _) = NearestSearch::new(cb).assign(residual.view())?;
        for (t, &k) in idx.iter().enumerate() {
            tokens[[t, stage]] = k;
            let mut row = residual.row_mut(t);
            row -= &cb.entry(k as usize);
        }
        energy.push(mean_energy(&residual));
    }

    let tokens = Tokens::new(tokens);
    let fused = mcrvq_decode(&tokens, cbs, cfg, cfg.n_total())?;
    Ok(QuantizationResult {
        tokens,
        fused,
        stage_residual_energy: energy,
    })
}

/// Reconstructs the fused latent from the first `n_stages` quantizers.
///
/// Decoding fewer than `n_parallel` stages would leave channel blocks
/// undefined and is rejected.
pub fn mcrvq_decode(
    tokens: &Tokens,
    cbs: &CodebookSet,
    cfg: &McrvqConfig,
    n_stages: usize,
) -> Result<LatentSequence> {
    cfg.check_codebooks(cbs)?;
    if n_stages < cfg.n_parallel() {
        bail!(
            Unsupported,
            "decoding {n_stages} stages is below the {} parallel stages",
            cfg.n_parallel()
        );
    }
    if n_stages > cfg.n_total() {
        bail!(Config, "requested {n_stages} stages of {}", cfg.n_total());
    }
    if tokens.stages() < n_stages {
        bail!(Shape, "token matrix has {} stages, need {n_stages}", tokens.stages());
    }
    let frames = tokens.frames();
    let mut out = Array2::<f32>::zeros((frames, cfg.dim()));
    for (stage, range) in cfg.partition().iter().enumerate() {
        let cb = cbs.stage(stage);
        for t in 0..frames {
            let k = cb.check_index(tokens.get(t, stage), stage)?;
            out.slice_mut(s![t, range.clone()]).assign(&cb.entry(k));
        }
    }
    for stage in cfg.n_parallel()..n_stages {
        let cb = cbs.stage(stage);
        for t in 0..frames {
            let k = cb.check_index(tokens.get(t, stage), stage)?;
            let mut row = out.row_mut(t);
            row += &cb.entry(k);
        }
    }
    LatentSequence::new(out)
}

/// Mean per-frame quantizer loss: the sum over stages of the squared error
/// between each stage's input and its selected embedding.
///
/// A parallel stage's input is its channel block of `z`; a serial stage's
/// input is the cumulative residual. Stage inputs are rebuilt from the
/// tokens, independently of the encoder's own bookkeeping.
pub fn quantizer_loss(
    result: &QuantizationResult,
    z: &LatentSequence,
    cbs: &CodebookSet,
    cfg: &McrvqConfig,
) -> Result<f64> {
    check_latents(z, cfg)?;
    cfg.check_codebooks(cbs)?;
    let tokens = &result.tokens;
    if tokens.frames() != z.frames() || tokens.stages() != cfg.n_total() {
        bail!(
            Shape,
            "tokens are {}x{}, expected {}x{}",
            tokens.frames(),
            tokens.stages(),
            z.frames(),
            cfg.n_total()
        );
    }
    if result.fused.frames() != z.frames() || result.fused.dim() != z.dim() {
        bail!(Shape, "fused latent shape differs from input");
    }
    let frames = z.frames();
    if frames == 0 {
        return Ok(0.0);
    }
    let zv = z.as_array();
    let mut total = 0.0;
    let mut residual = zv.clone();
    for (stage, range) in cfg.partition().iter().enumerate() {
        let cb = cbs.stage(stage);
        for t in 0..frames {
            let k = cb.check_index(tokens.get(t, stage), stage)?;
            let input = zv.slice(s![t, range.clone()]).to_vec();
            total += sq_dist_exact(&input, cb.entry(k));
            for (j, c) in range.clone().enumerate() {
                residual[[t, c]] = zv[[t, c]] - cb.entry(k)[j];
            }
        }
    }
    for stage in cfg.n_parallel()..cfg.n_total() {
        let cb = cbs.stage(stage);
        for t in 0..frames {
            let k = cb.check_index(tokens.get(t, stage), stage)?;
            let input = residual.row(t).to_vec();
            total += sq_dist_exact(&input, cb.entry(k));
            let mut row = residual.row_mut(t);
            row -= &cb.entry(k);
        }
    }
    Ok(total / frames as f64)
}
