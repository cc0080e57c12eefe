use ndarray::Array2;

use super::mcrvq::mean_energy;
use super::vq::NearestSearch;
use super::{CodebookSet, LatentSequence, QuantizationResult, Tokens};
use crate::error::{bail, Result};

fn check_serial(cbs: &CodebookSet, dim: usize, n_stages: usize) -> Result<()> {
    if n_stages == 0 || n_stages > cbs.len() {
        bail!(Config, "requested {n_stages} stages, codebook set has {}", cbs.len());
    }
    let size = cbs.stage(0).size();
    for (s, cb) in cbs.iter().take(n_stages).enumerate() {
        if cb.dim() != dim {
            bail!(Shape, "stage {s} codebook has dim {}, expected {dim}", cb.dim());
        }
        if cb.size() != size {
            bail!(Shape, "stage {s} codebook size {} differs from {size}", cb.size());
        }
    }
    Ok(())
}

/// Plain residual VQ: every stage quantizes the full-width residual left by
/// its predecessors.
pub fn rvq_encode(z: &LatentSequence, cbs: &CodebookSet, n_total: usize) -> Result<QuantizationResult> {
    check_serial(cbs, z.dim(), n_total)?;
    let frames = z.frames();
    let mut tokens = Array2::<u32>::zeros((frames, n_total));
    let mut residual = z.as_array().clone();
    let mut energy = vec![mean_energy(&residual)];
    for stage in 0..n_total {
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
    let fused = rvq_decode(&tokens, cbs, n_total)?;
    Ok(QuantizationResult {
        tokens,
        fused,
        stage_residual_energy: energy,
    })
}

/// Sum of the first `n_stages` selected embeddings.
pub fn rvq_decode(tokens: &Tokens, cbs: &CodebookSet, n_stages: usize) -> Result<LatentSequence> {
    if cbs.is_empty() {
        bail!(Config, "empty codebook set");
    }
    let dim = cbs.stage(0).dim();
    check_serial(cbs, dim, n_stages)?;
    if tokens.stages() < n_stages {
        bail!(Shape, "token matrix has {} stages, need {n_stages}", tokens.stages());
    }
    let mut out = Array2::<f32>::zeros((tokens.frames(), dim));
    for stage in 0..n_stages {
        let cb = cbs.stage(stage);
        for t in 0..tokens.frames() {
            let k = cb.check_index(tokens.get(t, stage), stage)?;
            let mut row = out.row_mut(t);
            row += &cb.entry(k);
        }
    }
    LatentSequence::new(out)
}
