use ndarray::{s, Array2, ArrayView1, ArrayView2, Axis};

use super::Codebook;
use crate::error::{bail, Result};

const CHUNK_ROWS: usize = 256;
/// Below this many multiply-adds per vector the direct scan is cheaper than
/// setting up a matrix product.
const DIRECT_WORK: usize = 2048;

/// Squared Euclidean distance accumulated left to right in f64.
///
/// This is the reference metric: every argmin this module reports is the
/// argmin of exactly this function, ties going to the lowest index.
#[inline]
pub(crate) fn sq_dist_exact(a: &[f32], b: ArrayView1<'_, f32>) -> f64 {
    let mut acc = 0.0f64;
    for (x, c) in a.iter().zip(b.iter()) {
        let d = *x as f64 - *c as f64;
        acc += d * d;
    }
    acc
}

/// Nearest-entry search over one codebook.
///
/// Large searches shortlist candidates with an f32 matrix product of inputs
/// against entries, using `|x - c|^2 = |c|^2 - 2 x.c + |x|^2`, then re-score
/// every candidate within a rigorous rounding-error margin of the best with
/// [`sq_dist_exact`]. The result is identical to an exhaustive exact scan.
pub struct NearestSearch<'a> {
    cb: &'a Codebook,
    norms: Vec<f64>,
    max_norm: f64,
}

impl<'a> NearestSearch<'a> {
    pub fn new(cb: &'a Codebook) -> Self {
        let norms: Vec<f64> = cb
            .entries()
            .rows()
            .into_iter()
            .map(|r| r.iter().map(|&v| v as f64 * v as f64).sum())
            .collect();
        let max_norm = norms.iter().cloned().fold(0.0, f64::max).sqrt();
        Self { cb, norms, max_norm }
    }

    pub fn codebook(&self) -> &Codebook {
        self.cb
    }

    /// Exhaustive exact scan for a single vector.
    pub fn nearest_direct(&self, v: &[f32]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (k, row) in self.cb.entries().rows().into_iter().enumerate() {
            let d = sq_dist_exact(v, row);
            if d < best.1 {
                best = (k, d);
            }
        }
        best
    }

    /// Index and exact squared distance of the nearest entry for every row.
    pub fn assign(&self, vectors: ArrayView2<'_, f32>) -> Result<(Vec<u32>, Vec<f64>)> {
        if vectors.ncols() != self.cb.dim() {
            bail!(
                Shape,
                "vectors have dim {}, codebook has dim {}",
                vectors.ncols(),
                self.cb.dim()
            );
        }
        let n = vectors.nrows();
        let mut idx = Vec::with_capacity(n);
        let mut dist = Vec::with_capacity(n);
        if self.cb.size() * self.cb.dim() <= DIRECT_WORK || self.cb.size() <= 4 {
            for row in vectors.rows() {
                let row = row.to_vec();
                let (k, d) = self.nearest_direct(&row);
                idx.push(k as u32);
                dist.push(d);
            }
            return Ok((idx, dist));
        }

        let entries_t = self.cb.entries().t();
        let dim = self.cb.dim() as f64;
        let u = f32::EPSILON as f64 / 2.0;
        let gamma = (dim + 2.0) * u / (1.0 - (dim + 2.0) * u);
        let mut cand = Vec::new();
        for start in (0..n).step_by(CHUNK_ROWS) {
            let end = (start + CHUNK_ROWS).min(n);
            let chunk = vectors.slice(s![start..end, ..]);
            let dots = chunk.dot(&entries_t);
            for (row, drow) in chunk.axis_iter(Axis(0)).zip(dots.axis_iter(Axis(0))) {
                let x: Vec<f32> = row.to_vec();
                let xn2: f64 = x.iter().map(|&v| v as f64 * v as f64).sum();
                let xn = xn2.sqrt();
                let mut min_approx = f64::INFINITY;
                for (k, &d) in drow.iter().enumerate() {
                    let a = self.norms[k] - 2.0 * d as f64;
                    if a < min_approx {
                        min_approx = a;
                    }
                }
                // Each approximate score is within 2*gamma*|x||c| of the truth;
                // doubled again for safety, plus f64 slack on the norms.
                let margin = 8.0 * gamma * xn * self.max_norm
                    + 1e-12 * (xn2 + self.max_norm * self.max_norm)
                    + f64::MIN_POSITIVE;
                cand.clear();
                for (k, &d) in drow.iter().enumerate() {
                    if self.norms[k] - 2.0 * d as f64 <= min_approx + margin {
                        cand.push(k);
                    }
                }
                let mut best = (cand[0], f64::INFINITY);
                for &k in &cand {
                    let d = sq_dist_exact(&x, self.cb.entry(k));
                    if d < best.1 {
                        best = (k, d);
                    }
                }
                idx.push(best.0 as u32);
                dist.push(best.1);
            }
        }
        Ok((idx, dist))
    }
}

/// Nearest codebook entry for every row of `vectors`.
///
/// Returns the indices (ties to the lowest index) and the selected entries.
pub fn vq_nearest(cb: &Codebook, vectors: ArrayView2<'_, f32>) -> Result<(Vec<u32>, Array2<f32>)> {
    let (idx, _) = NearestSearch::new(cb).assign(vectors)?;
    let mut emb = Array2::zeros((idx.len(), cb.dim()));
    for (mut row, &k) in emb.rows_mut().into_iter().zip(&idx) {
        row.assign(&cb.entry(k as usize));
    }
    Ok((idx, emb))
}
