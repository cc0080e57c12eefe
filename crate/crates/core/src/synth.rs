//! Synthetic latent corpora for exercising the quantizers without a trained
//! encoder.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{bail, Result};
use crate::quantizer::LatentSequence;

/// Low-rank correlated Gaussian latents.
///
/// Each frame is `f · A + noise` where `f` has `rank` independent factors
/// with geometrically decaying scale and `A` mixes every factor into every
/// channel, so energy and correlation are spread across the whole width.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelatedGaussian {
    pub frames: usize,
    pub dim: usize,
    pub rank: usize,
    /// Ratio between consecutive factor standard deviations.
    pub decay: f64,
    /// Standard deviation of the isotropic noise floor.
    pub noise: f64,
    pub seed: u64,
}

impl CorrelatedGaussian {
    pub fn new(frames: usize, dim: usize, seed: u64) -> Self {
        Self {
            frames,
            dim,
            rank: 24,
            decay: 0.9,
            noise: 0.05,
            seed,
        }
    }

    pub fn generate(&self) -> Result<LatentSequence> {
        if self.dim == 0 || self.rank == 0 {
            bail!(Config, "dim and rank must be positive");
        }
        if !(self.decay > 0.0) || !(self.noise >= 0.0) {
            bail!(Config, "decay must be positive and noise non-negative");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let std = Normal::new(0.0, 1.0).unwrap();
        let mix_scale = 1.0 / (self.rank as f64).sqrt();
        let mix = Array2::from_shape_fn((self.rank, self.dim), |_| std.sample(&mut rng) * mix_scale);
        let scales: Vec<f64> = (0..self.rank).map(|i| self.decay.powi(i as i32)).collect();
        let factors = Array2::from_shape_fn((self.frames, self.rank), |(_, i)| {
            std.sample(&mut rng) * scales[i]
        });
        let mut z = factors.dot(&mix);
        z.mapv_inplace(|v| v + std.sample(&mut rng) * self.noise);
        LatentSequence::new(z.mapv(|v| v as f32))
    }
}

/// Isotropic Gaussian clusters around `means`, `per_cluster` frames each,
/// laid out cluster by cluster.
pub fn gaussian_clusters(
    means: &[Vec<f32>],
    per_cluster: usize,
    sd: f32,
    seed: u64,
) -> Result<LatentSequence> {
    let Some(dim) = means.first().map(Vec::len) else {
        bail!(Config, "need at least one cluster mean");
    };
    if means.iter().any(|m| m.len() != dim) {
        bail!(Shape, "cluster means differ in dimension");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0f32, sd).map_err(|e| crate::Error::Config(e.to_string()))?;
    let frames = means.len() * per_cluster;
    let z = Array2::from_shape_fn((frames, dim), |(t, c)| {
        means[t / per_cluster][c] + noise.sample(&mut rng)
    });
    LatentSequence::new(z)
}
