use ndarray::{Array2, ArrayView1};

use crate::error::{bail, Result};

/// A single quantizer's codebook with its EMA training statistics.
///
/// `ema_counts[k]` is the smoothed number of corpus frames assigned to entry
/// `k`; `ema_sums` is the matching smoothed vector sum.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    entries: Array2<f32>,
    pub(crate) ema_counts: Vec<f64>,
    pub(crate) ema_sums: Array2<f64>,
}

impl Codebook {
    pub fn new(entries: Array2<f32>) -> Result<Self> {
        if entries.nrows() == 0 || entries.ncols() == 0 {
            bail!(Shape, "codebook must have at least one entry of positive dim");
        }
        if entries.iter().any(|v| !v.is_finite()) {
            bail!(Data, "codebook contains non-finite entries");
        }
        let ema_counts = vec![0.0; entries.nrows()];
        let ema_sums = Array2::zeros(entries.dim());
        Ok(Self {
            entries,
            ema_counts,
            ema_sums,
        })
    }

    pub fn from_rows(size: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        let arr = Array2::from_shape_vec((size, dim), data)
            .map_err(|e| crate::Error::Shape(e.to_string()))?;
        Self::new(arr)
    }

    pub fn zeros(size: usize, dim: usize) -> Self {
        Self::new(Array2::zeros((size, dim))).expect("zero codebook is valid")
    }

    pub fn size(&self) -> usize {
        self.entries.nrows()
    }

    pub fn dim(&self) -> usize {
        self.entries.ncols()
    }

    pub fn entries(&self) -> &Array2<f32> {
        &self.entries
    }

    pub fn entry(&self, k: usize) -> ArrayView1<'_, f32> {
        self.entries.row(k)
    }

    pub fn ema_counts(&self) -> &[f64] {
        &self.ema_counts
    }

    pub(crate) fn entries_mut(&mut self) -> &mut Array2<f32> {
        &mut self.entries
    }

    pub(crate) fn check_index(&self, idx: u32, stage: usize) -> Result<usize> {
        let k = idx as usize;
        if k >= self.size() {
            bail!(
                Data,
                "token {idx} out of range for stage {stage} (codebook size {})",
                self.size()
            );
        }
        Ok(k)
    }
}

/// Ordered per-stage codebooks.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CodebookSet {
    stages: Vec<Codebook>,
}

impl CodebookSet {
    pub fn new(stages: Vec<Codebook>) -> Self {
        Self { stages }
    }

    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }

    pub fn stage(&self, s: usize) -> &Codebook {
        &self.stages[s]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Codebook> {
        self.stages.iter()
    }

    pub fn push(&mut self, cb: Codebook) {
        self.stages.push(cb);
    }

    pub fn into_stages(self) -> Vec<Codebook> {
        self.stages
    }
}

impl FromIterator<Codebook> for CodebookSet {
    fn from_iter<I: IntoIterator<Item = Codebook>>(iter: I) -> Self {
        Self::new(iter.into_iter().collect())
    }
}
