//! Vector quantization: nearest-codeword search, plain residual VQ, the
//! masked-channel residual scheme, codebook training and the channel
//! information profiler.
//!
//! The masked-channel scheme runs its first `n_parallel` quantizers side by
//! side, each on a disjoint contiguous block of latent channels. The
//! remaining quantizers run serially on the cumulative residual, exactly as
//! in plain RVQ. The fused latent is the channel-concatenation of the parallel
//! embeddings plus the sum of the serial ones.

mod codebook;
mod io;
mod mcrvq;
mod profile;
mod rvq;
mod train;
mod vq;

pub use codebook::{Codebook, CodebookSet};
pub use io::{read_codebooks, write_codebooks, CODEBOOK_MAGIC, CODEBOOK_VERSION};
pub use mcrvq::{mcrvq_decode, mcrvq_encode, quantizer_loss};
pub use profile::{channel_information_profile, token_entropy_bits, ChannelProfile, SchemeProfile};
pub use rvq::{rvq_decode, rvq_encode};
pub use train::{
    kmeans, refine_ema, reseed_unused, train_codebooks, train_rvq_codebooks, usage_histogram,
    TrainSchedule,
};
pub use vq::{vq_nearest, NearestSearch};

use std::ops::Range;

use ndarray::{Array2, ArrayView2};

use crate::error::{bail, Result};

/// Frames × D matrix of encoder latents.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSequence(Array2<f32>);

impl LatentSequence {
    pub fn new(data: Array2<f32>) -> Result<Self> {
        if data.iter().any(|v| !v.is_finite()) {
            bail!(Data, "latent sequence contains non-finite values");
        }
        Ok(Self(data))
    }

    pub fn from_rows(frames: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        let arr = Array2::from_shape_vec((frames, dim), data)
            .map_err(|e| crate::Error::Shape(e.to_string()))?;
        Self::new(arr)
    }

    pub fn zeros(frames: usize, dim: usize) -> Self {
        Self(Array2::zeros((frames, dim)))
    }

    pub fn frames(&self) -> usize {
        self.0.nrows()
    }

    pub fn dim(&self) -> usize {
        self.0.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, f32> {
        self.0.view()
    }

    pub fn as_array(&self) -> &Array2<f32> {
        &self.0
    }

    pub fn into_array(self) -> Array2<f32> {
        self.0
    }

    /// Total squared norm over all frames, accumulated in f64.
    pub fn energy(&self) -> f64 {
        self.0.iter().map(|&v| (v as f64) * (v as f64)).sum()
    }
}

/// Frames × stages matrix of codebook indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tokens(Array2<u32>);

impl Tokens {
    pub fn new(data: Array2<u32>) -> Self {
        Self(data)
    }

    pub fn from_rows(frames: usize, stages: usize, data: Vec<u32>) -> Result<Self> {
        Array2::from_shape_vec((frames, stages), data)
            .map(Self)
            .map_err(|e| crate::Error::Shape(e.to_string()))
    }

    pub fn frames(&self) -> usize {
        self.0.nrows()
    }

    pub fn stages(&self) -> usize {
        self.0.ncols()
    }

    pub fn get(&self, frame: usize, stage: usize) -> u32 {
        self.0[[frame, stage]]
    }

    pub fn as_array(&self) -> &Array2<u32> {
        &self.0
    }

    pub fn stage_column(&self, stage: usize) -> Vec<u32> {
        self.0.column(stage).to_vec()
    }
}

/// Layout of a masked-channel residual quantizer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct McrvqConfig {
    n_total: usize,
    n_parallel: usize,
    codebook_size: usize,
    dim: usize,
    partition: Vec<Range<usize>>,
}

impl McrvqConfig {
    /// Builds a config with `n_parallel` near-equal contiguous channel blocks.
    /// Earlier blocks take the extra channel when `n_parallel` does not divide
    /// `dim`.
    pub fn new(n_total: usize, n_parallel: usize, codebook_size: usize, dim: usize) -> Result<Self> {
        if n_parallel == 0 || n_parallel > n_total {
            bail!(Config, "need 1 <= n_parallel ({n_parallel}) <= n_total ({n_total})");
        }
        if n_parallel > dim {
            bail!(Config, "cannot split {dim} channels into {n_parallel} blocks");
        }
        let base = dim / n_parallel;
        let extra = dim % n_parallel;
        let mut partition = Vec::with_capacity(n_parallel);
        let mut start = 0;
        for i in 0..n_parallel {
            let len = base + usize::from(i < extra);
            partition.push(start..start + len);
            start += len;
        }
        Self::with_partition(n_total, codebook_size, dim, partition)
    }

    /// Plain residual VQ expressed as a single full-width parallel stage.
    pub fn rvq(n_total: usize, codebook_size: usize, dim: usize) -> Result<Self> {
        Self::new(n_total, 1, codebook_size, dim)
    }

    pub fn with_partition(
        n_total: usize,
        codebook_size: usize,
        dim: usize,
        partition: Vec<Range<usize>>,
    ) -> Result<Self> {
        let n_parallel = partition.len();
        if n_parallel == 0 || n_parallel > n_total {
            bail!(Config, "need 1 <= n_parallel ({n_parallel}) <= n_total ({n_total})");
        }
        if codebook_size == 0 {
            bail!(Config, "codebook size must be positive");
        }
        if dim == 0 {
            bail!(Config, "latent dimension must be positive");
        }
        let mut next = 0;
        for r in &partition {
            if r.start != next || r.end <= r.start {
                bail!(Config, "partition must be ordered, non-empty and contiguous");
            }
            next = r.end;
        }
        if next != dim {
            bail!(Config, "partition covers [0, {next}) but dim is {dim}");
        }
        let sizes: Vec<usize> = partition.iter().map(|r| r.len()).collect();
        let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
        if hi - lo > 1 {
            bail!(Config, "partition sizes {sizes:?} differ by more than one");
        }
        Ok(Self {
            n_total,
            n_parallel,
            codebook_size,
            dim,
            partition,
        })
    }

    pub fn n_total(&self) -> usize {
        self.n_total
    }

    pub fn n_parallel(&self) -> usize {
        self.n_parallel
    }

    pub fn n_serial(&self) -> usize {
        self.n_total - self.n_parallel
    }

    pub fn codebook_size(&self) -> usize {
        self.codebook_size
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn partition(&self) -> &[Range<usize>] {
        &self.partition
    }

    /// Codebook dimensionality expected at `stage`.
    pub fn stage_dim(&self, stage: usize) -> usize {
        if stage < self.n_parallel {
            self.partition[stage].len()
        } else {
            self.dim
        }
    }

    /// Checks that `cbs` has one codebook per stage with matching shapes.
    pub fn check_codebooks(&self, cbs: &CodebookSet) -> Result<()> {
        if cbs.len() != self.n_total {
            bail!(
                Shape,
                "codebook set has {} stages, config needs {}",
                cbs.len(),
                self.n_total
            );
        }
        for (s, cb) in cbs.iter().enumerate() {
            if cb.size() != self.codebook_size {
                bail!(
                    Shape,
                    "stage {s} codebook has {} entries, config needs {}",
                    cb.size(),
                    self.codebook_size
                );
            }
            if cb.dim() != self.stage_dim(s) {
                bail!(
                    Shape,
                    "stage {s} codebook has dim {}, expected {}",
                    cb.dim(),
                    self.stage_dim(s)
                );
            }
        }
        Ok(())
    }
}

impl Default for McrvqConfig {
    fn default() -> Self {
        Self::new(8, 3, 1024, 512).expect("default layout is valid")
    }
}

/// Output of an encode pass.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizationResult {
    pub tokens: Tokens,
    pub fused: LatentSequence,
    /// Mean per-frame residual energy before stage 1 and after each stage
    /// (`n_total + 1` values).
    pub stage_residual_energy: Vec<f64>,
}
