//! Codebook training without gradients: k-means++ seeding, Lloyd
//! iterations, minibatch EMA refinement and dead-code re-seeding.
//!
//! Stages are trained greedily in order. Parallel stages see only their
//! channel block of the corpus; serial stages see the residual left by the
//! already-trained earlier stages.

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::vq::NearestSearch;
use super::{Codebook, CodebookSet, LatentSequence, McrvqConfig};
use crate::error::{bail, Result};

/// Hyper-parameters for [`train_codebooks`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSchedule {
    /// Lloyd iterations after k-means++ seeding.
    pub kmeans_iters: usize,
    /// Passes of minibatch EMA refinement over the corpus.
    pub ema_epochs: usize,
    pub ema_batch: usize,
    pub ema_decay: f64,
    /// Entries whose EMA usage (in corpus frames) drops below this are
    /// re-seeded.
    pub dead_threshold: f64,
    /// Upper bound on final passes that re-seed entries with zero usage.
    pub reseed_rounds: usize,
    pub seed: u64,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        Self {
            kmeans_iters: 10,
            ema_epochs: 2,
            ema_batch: 4096,
            ema_decay: 0.99,
            dead_threshold: 1.0,
            reseed_rounds: 8,
            seed: 0,
        }
    }
}

impl TrainSchedule {
    fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.ema_decay) {
            bail!(Config, "EMA decay must lie in [0, 1)");
        }
        if self.ema_batch == 0 {
            bail!(Config, "EMA batch size must be positive");
        }
        if !(self.dead_threshold >= 0.0) {
            bail!(Config, "dead-code threshold must be non-negative");
        }
        Ok(())
    }

    fn stage_rng(&self, stage: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stage as u64);
        rng
    }
}

/// Squared distance in f32 with independent lanes so it vectorises. Only
/// used for seeding, where exactness does not matter.
fn sq_dist_fast(a: &[f32], b: &[f32]) -> f32 {
    const LANES: usize = 16;
    let mut acc = [0.0f32; LANES];
    let ca = a.chunks_exact(LANES);
    let cb = b.chunks_exact(LANES);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..LANES {
            let d = x[i] - y[i];
            acc[i] += d * d;
        }
    }
    let mut s: f32 = acc.iter().sum();
    for (x, y) in ra.iter().zip(rb) {
        let d = x - y;
        s += d * d;
    }
    s
}

fn row(data: &Array2<f32>, i: usize) -> &[f32] {
    data.row(i).to_slice().expect("standard layout")
}

fn kmeans_pp(data: &Array2<f32>, k: usize, rng: &mut impl Rng) -> Array2<f32> {
    let n = data.nrows();
    let mut centers = Array2::zeros((k, data.ncols()));
    let first = rng.random_range(0..n);
    centers.row_mut(0).assign(&data.row(first));
    let mut min_d: Vec<f64> = (0..n)
        .map(|i| sq_dist_fast(row(data, i), row(data, first)) as f64)
        .collect();
    for c in 1..k {
        let total: f64 = min_d.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, d) in min_d.iter().enumerate() {
                if target < *d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centers.row_mut(c).assign(&data.row(pick));
        let center = row(data, pick).to_vec();
        for (i, d) in min_d.iter_mut().enumerate() {
            let nd = sq_dist_fast(row(data, i), &center) as f64;
            if nd < *d {
                *d = nd;
            }
        }
    }
    centers
}

fn accumulate(data: &Array2<f32>, rows: &[usize], idx: &[u32], k: usize) -> (Vec<f64>, Array2<f64>) {
    let mut counts = vec![0.0; k];
    let mut sums = Array2::<f64>::zeros((k, data.ncols()));
    for (&i, &c) in rows.iter().zip(idx) {
        let c = c as usize;
        counts[c] += 1.0;
        let mut srow = sums.row_mut(c);
        for (s, v) in srow.iter_mut().zip(data.row(i)) {
            *s += *v as f64;
        }
    }
    (counts, sums)
}

fn set_entry_from_stats(cb: &mut Codebook, k: usize) {
    let count = cb.ema_counts[k];
    if count > 0.0 {
        let mean: Vec<f32> = cb.ema_sums.row(k).iter().map(|s| (s / count) as f32).collect();
        for (e, m) in cb.entries_mut().row_mut(k).iter_mut().zip(mean) {
            *e = m;
        }
    }
}

fn reseed_entry(cb: &mut Codebook, k: usize, x: ndarray::ArrayView1<'_, f32>, count: f64) {
    cb.entries_mut().row_mut(k).assign(&x);
    cb.ema_counts[k] = count;
    for (s, v) in cb.ema_sums.row_mut(k).iter_mut().zip(x) {
        *s = *v as f64 * count;
    }
}

/// k-means++ seeding followed by up to `iters` Lloyd iterations.
///
/// Empty clusters are re-seeded from a random data row. The returned
/// codebook's EMA statistics hold the final cluster counts and sums.
pub fn kmeans(
    data: ArrayView2<'_, f32>,
    k: usize,
    iters: usize,
    rng: &mut impl Rng,
) -> Result<Codebook> {
    let n = data.nrows();
    if k == 0 {
        bail!(Config, "codebook size must be positive");
    }
    if n < k {
        bail!(Data, "{n} training vectors cannot seed {k} entries");
    }
    let data = data.as_standard_layout().into_owned();
    let mut cb = Codebook::new(kmeans_pp(&data, k, rng))?;
    let all: Vec<usize> = (0..n).collect();
    let mut prev: Option<Vec<u32>> = None;
    for _ in 0..=iters {
        let (idx, _) = NearestSearch::new(&cb).assign(data.view())?;
        let (counts, sums) = accumulate(&data, &all, &idx, k);
        cb.ema_counts = counts;
        cb.ema_sums = sums;
        if prev.as_ref() == Some(&idx) {
            break;
        }
        for c in 0..k {
            if cb.ema_counts[c] == 0.0 {
                let i = rng.random_range(0..n);
                reseed_entry(&mut cb, c, data.row(i), 0.0);
            } else {
                set_entry_from_stats(&mut cb, c);
            }
        }
        prev = Some(idx);
    }
    Ok(cb)
}

/// Minibatch EMA refinement of `cb` on `data`.
///
/// Per-batch counts and sums are rescaled to corpus size before entering
/// the moving averages, so `ema_counts` estimates corpus usage. Entries that
/// fall below the dead-code threshold are re-seeded from a random vector of
/// the current batch. Returns the number of re-seeds.
pub fn refine_ema(
    cb: &mut Codebook,
    data: ArrayView2<'_, f32>,
    schedule: &TrainSchedule,
    rng: &mut impl Rng,
) -> Result<usize> {
    schedule.validate()?;
    if data.ncols() != cb.dim() {
        bail!(Shape, "data dim {} differs from codebook dim {}", data.ncols(), cb.dim());
    }
    let n = data.nrows();
    if n == 0 {
        return Ok(0);
    }
    let data = data.as_standard_layout().into_owned();
    let k = cb.size();
    if cb.ema_counts.iter().all(|&c| c == 0.0) {
        let all: Vec<usize> = (0..n).collect();
        let (idx, _) = NearestSearch::new(cb).assign(data.view())?;
        let (counts, sums) = accumulate(&data, &all, &idx, k);
        cb.ema_counts = counts;
        cb.ema_sums = sums;
    }
    let decay = schedule.ema_decay;
    let mut reseeds = 0;
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..schedule.ema_epochs {
        order.shuffle(rng);
        for batch in order.chunks(schedule.ema_batch) {
            let x = data.select(Axis(0), batch);
            let (idx, _) = NearestSearch::new(cb).assign(x.view())?;
            let local: Vec<usize> = (0..batch.len()).collect();
            let (counts, sums) = accumulate(&x, &local, &idx, k);
            let scale = n as f64 / batch.len() as f64;
            for c in 0..k {
                cb.ema_counts[c] = decay * cb.ema_counts[c] + (1.0 - decay) * counts[c] * scale;
            }
            cb.ema_sums *= decay;
            cb.ema_sums.scaled_add((1.0 - decay) * scale, &sums);
            for c in 0..k {
                if cb.ema_counts[c] < schedule.dead_threshold {
                    let i = rng.random_range(0..batch.len());
                    reseed_entry(cb, c, x.row(i), schedule.dead_threshold);
                    reseeds += 1;
                } else {
                    set_entry_from_stats(cb, c);
                }
            }
        }
    }
    Ok(reseeds)
}

/// Number of `data` rows assigned to each entry.
pub fn usage_histogram(cb: &Codebook, data: ArrayView2<'_, f32>) -> Result<Vec<usize>> {
    let (idx, _) = NearestSearch::new(cb).assign(data)?;
    let mut hist = vec![0; cb.size()];
    for i in idx {
        hist[i as usize] += 1;
    }
    Ok(hist)
}

/// Moves every entry with zero usage on `data` onto a data row taken from a
/// cluster that can spare it. Repeats up to `rounds` times; returns the
/// number of entries still unused.
pub fn reseed_unused(
    cb: &mut Codebook,
    data: ArrayView2<'_, f32>,
    rounds: usize,
    count: f64,
    rng: &mut impl Rng,
) -> Result<usize> {
    for _ in 0..rounds {
        let (idx, _) = NearestSearch::new(cb).assign(data)?;
        let mut usage = vec![0usize; cb.size()];
        for &i in &idx {
            usage[i as usize] += 1;
        }
        let dead: Vec<usize> = (0..cb.size()).filter(|&k| usage[k] == 0).collect();
        if dead.is_empty() {
            return Ok(0);
        }
        let mut donors: Vec<usize> = (0..data.nrows()).collect();
        donors.shuffle(rng);
        let mut spare = usage.clone();
        let mut dead_iter = dead.iter();
        for i in donors {
            let owner = idx[i] as usize;
            if spare[owner] < 2 {
                continue;
            }
            let Some(&k) = dead_iter.next() else { break };
            spare[owner] -= 1;
            reseed_entry(cb, k, data.row(i), count);
        }
    }
    let hist = usage_histogram(cb, data)?;
    Ok(hist.iter().filter(|&&h| h == 0).count())
}

fn train_stage(
    data: ArrayView2<'_, f32>,
    k: usize,
    schedule: &TrainSchedule,
    stage: usize,
) -> Result<Codebook> {
    let mut rng = schedule.stage_rng(stage);
    let mut cb = kmeans(data, k, schedule.kmeans_iters, &mut rng)?;
    let reseeds = refine_ema(&mut cb, data, schedule, &mut rng)?;
    let unused = reseed_unused(&mut cb, data, schedule.reseed_rounds, schedule.dead_threshold, &mut rng)?;
    log::debug!("stage {stage}: {reseeds} EMA re-seeds, {unused} entries unused");
    Ok(cb)
}

/// Trains one codebook per stage of `cfg` on `latents`.
pub fn train_codebooks(
    latents: &LatentSequence,
    cfg: &McrvqConfig,
    schedule: &TrainSchedule,
) -> Result<CodebookSet> {
    schedule.validate()?;
    if latents.dim() != cfg.dim() {
        bail!(Shape, "corpus dim {} differs from config dim {}", latents.dim(), cfg.dim());
    }
    if latents.frames() < cfg.codebook_size() {
        bail!(
            Data,
            "corpus has {} frames, need at least codebook_size = {}",
            latents.frames(),
            cfg.codebook_size()
        );
    }
    let z = latents.as_array();
    let mut residual = z.clone();
    let mut set = CodebookSet::default();
    for (stage, range) in cfg.partition().iter().enumerate() {
        let block = z.slice(s![.., range.clone()]);
        let cb = train_stage(block, cfg.codebook_size(), schedule, stage)?;
        let (idx, _) = NearestSearch::new(&cb).assign(block)?;
        for (t, &k) in idx.iter().enumerate() {
            let e = cb.entry(k as usize);
            for (j, c) in range.clone().enumerate() {
                residual[[t, c]] = z[[t, c]] - e[j];
            }
        }
        log::info!("trained parallel stage {stage} on channels {range:?}");
        set.push(cb);
    }
    for stage in cfg.n_parallel()..cfg.n_total() {
        let cb = train_stage(residual.view(), cfg.codebook_size(), schedule, stage)?;
        let (idx, _) = NearestSearch::new(&cb).assign(residual.view())?;
        for (t, &k) in idx.iter().enumerate() {
            let mut r = residual.row_mut(t);
            r -= &cb.entry(k as usize);
        }
        log::info!("trained serial stage {stage}");
        set.push(cb);
    }
    Ok(set)
}

/// Trains full-width codebooks for plain residual VQ.
pub fn train_rvq_codebooks(
    latents: &LatentSequence,
    n_total: usize,
    codebook_size: usize,
    schedule: &TrainSchedule,
) -> Result<CodebookSet> {
    let cfg = McrvqConfig::rvq(n_total, codebook_size, latents.dim())?;
    train_codebooks(latents, &cfg, schedule)
}
