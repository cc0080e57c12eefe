use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use super::AudioBuffer;
use crate::error::{bail, Result};

const COLA_TOLERANCE: f64 = 1e-6;
const ENVELOPE_FLOOR: f64 = 1e-11;

/// Periodic Hann window of length `n`.
pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Frame geometry and analysis/synthesis window.
///
/// Construction checks the constant-overlap-add condition: the window summed
/// over all hop shifts must be a positive constant.
#[derive(Debug, Clone, PartialEq)]
pub struct StftConfig {
    n_fft: usize,
    hop: usize,
    window: Vec<f64>,
}

impl StftConfig {
    pub fn new(n_fft: usize, hop: usize, window: Vec<f64>) -> Result<Self> {
        if n_fft == 0 || n_fft % 2 != 0 {
            bail!(Config, "n_fft must be even and positive, got {n_fft}");
        }
        if hop == 0 || hop > n_fft {
            bail!(Config, "hop must satisfy 0 < hop <= n_fft ({n_fft}), got {hop}");
        }
        if window.len() != n_fft {
            bail!(Config, "window has {} taps, expected {n_fft}", window.len());
        }
        if window.iter().any(|w| !w.is_finite() || *w < 0.0) {
            bail!(Config, "window taps must be finite and non-negative");
        }
        let mut overlap = vec![0.0; hop];
        for (i, w) in window.iter().enumerate() {
            overlap[i % hop] += w;
        }
        let max = overlap.iter().cloned().fold(f64::MIN, f64::max);
        let min = overlap.iter().cloned().fold(f64::MAX, f64::min);
        if min <= 0.0 || (max - min) > COLA_TOLERANCE * max {
            bail!(
                Config,
                "window does not satisfy constant overlap-add at hop {hop} (range {min}..{max})"
            );
        }
        Ok(Self { n_fft, hop, window })
    }

    pub fn hann(n_fft: usize, hop: usize) -> Result<Self> {
        Self::new(n_fft, hop, hann_window(n_fft))
    }

    pub fn rectangular(n_fft: usize, hop: usize) -> Result<Self> {
        Self::new(n_fft, hop, vec![1.0; n_fft])
    }

    pub fn n_fft(&self) -> usize {
        self.n_fft
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    /// Single-sideband bin count, `n_fft / 2 + 1`.
    pub fn bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    /// Reflect padding applied before the first and after the last sample.
    ///
    /// Total padding is `n_fft - hop`, which makes the frame count exactly
    /// `len / hop`.
    pub fn padding(&self) -> (usize, usize) {
        let total = self.n_fft - self.hop;
        (total / 2, total - total / 2)
    }

    /// Number of frames `stft` produces for a signal of `len` samples.
    pub fn frame_count(&self, len: usize) -> usize {
        let (l, r) = self.padding();
        let padded = (len + l + r).max(self.n_fft);
        (padded - self.n_fft) / self.hop + 1
    }
}

impl Default for StftConfig {
    fn default() -> Self {
        Self::hann(1280, 320).expect("default STFT config is COLA")
    }
}

/// Frames × bins matrix of single-sideband DFT coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    frames: usize,
    bins: usize,
    data: Vec<Complex64>,
}

impl ComplexSpectrogram {
    pub fn new(frames: usize, bins: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != frames * bins {
            bail!(
                Shape,
                "spectrogram data has {} values, expected {frames}x{bins}",
                data.len()
            );
        }
        if data.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            bail!(Data, "spectrogram contains non-finite coefficients");
        }
        Ok(Self { frames, bins, data })
    }

    pub fn zeros(frames: usize, bins: usize) -> Self {
        Self {
            frames,
            bins,
            data: vec![Complex64::new(0.0, 0.0); frames * bins],
        }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn frame(&self, t: usize) -> &[Complex64] {
        &self.data[t * self.bins..(t + 1) * self.bins]
    }

    pub fn get(&self, t: usize, k: usize) -> Complex64 {
        self.data[t * self.bins + k]
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.data.iter().map(|c| c.norm()).collect()
    }
}

/// Mirror index into a signal of length `len` (reflect mode, edge sample not
/// repeated). Works for any offset, including pads longer than the signal.
fn reflect_index(i: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let m = i.rem_euclid(period);
    if m < len as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

fn padded_signal(samples: &[f64], cfg: &StftConfig) -> Vec<f64> {
    let (l, r) = cfg.padding();
    let len = samples.len();
    let mut out: Vec<f64> = (0..len + l + r)
        .map(|i| samples[reflect_index(i as isize - l as isize, len)])
        .collect();
    if out.len() < cfg.n_fft {
        out.resize(cfg.n_fft, 0.0);
    }
    out
}

/// Short-time Fourier transform with reflect padding.
///
/// `1 s` at 24 kHz with hop 320 yields exactly 75 frames.
pub fn stft(audio: &AudioBuffer, cfg: &StftConfig) -> Result<ComplexSpectrogram> {
    if audio.is_empty() {
        bail!(Data, "cannot analyse an empty signal");
    }
    let n = cfg.n_fft;
    let bins = cfg.bins();
    let padded = padded_signal(audio.samples(), cfg);
    let frames = cfg.frame_count(audio.len());
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);

    let mut data = Vec::with_capacity(frames * bins);
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    for t in 0..frames {
        let seg = &padded[t * cfg.hop..t * cfg.hop + n];
        for ((b, x), w) in buf.iter_mut().zip(seg).zip(&cfg.window) {
            *b = Complex64::new(x * w, 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        data.extend_from_slice(&buf[..bins]);
    }
    ComplexSpectrogram::new(frames, bins, data)
}

/// Weighted overlap-add inverse of [`stft`].
///
/// Each frame is inverse transformed, multiplied by the synthesis window and
/// overlap-added; the sum is divided by the overlapped squared window. The
/// result has `frames * hop` samples with the analysis padding removed.
pub fn istft(spec: &ComplexSpectrogram, cfg: &StftConfig) -> Result<AudioBuffer> {
    istft_at_rate(spec, cfg, 24_000)
}

/// [`istft`] with an explicit output sample rate.
pub fn istft_at_rate(
    spec: &ComplexSpectrogram,
    cfg: &StftConfig,
    sample_rate: u32,
) -> Result<AudioBuffer> {
    let n = cfg.n_fft;
    let bins = cfg.bins();
    if spec.bins() != bins {
        bail!(
            Shape,
            "spectrogram has {} bins, config expects {bins}",
            spec.bins()
        );
    }
    let frames = spec.frames();
    if frames == 0 {
        return AudioBuffer::new(Vec::new(), sample_rate);
    }
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(n);
    let total = (frames - 1) * cfg.hop + n;
    let mut acc = vec![0.0; total];
    let mut env = vec![0.0; total];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let mut scratch = vec![Complex64::new(0.0, 0.0); ifft.get_inplace_scratch_len()];
    let scale = 1.0 / n as f64;

    for t in 0..frames {
        let frame = spec.frame(t);
        // Hermitian extension; DC and Nyquist imaginary parts are dropped as
        // a real inverse transform would.
        buf[0] = Complex64::new(frame[0].re, 0.0);
        buf[n / 2] = Complex64::new(frame[n / 2].re, 0.0);
        for k in 1..n / 2 {
            buf[k] = frame[k];
            buf[n - k] = frame[k].conj();
        }
        ifft.process_with_scratch(&mut buf, &mut scratch);
        let off = t * cfg.hop;
        for (i, w) in cfg.window.iter().enumerate() {
            acc[off + i] += buf[i].re * scale * w;
            env[off + i] += w * w;
        }
    }

    let (l, _) = cfg.padding();
    let len = frames * cfg.hop;
    let samples = (l..l + len)
        .map(|i| {
            if env[i] > ENVELOPE_FLOOR {
                acc[i] / env[i]
            } else {
                0.0
            }
        })
        .collect();
    AudioBuffer::new(samples, sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(len: usize, seed: u64) -> AudioBuffer {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        AudioBuffer::new((0..len).map(|_| rng.random_range(-1.0..1.0)).collect(), 24_000).unwrap()
    }

    // Direct O(N^2) DFT used as an independent oracle.
    fn direct_dft(x: &[f64]) -> Vec<Complex64> {
        let n = x.len();
        (0..n / 2 + 1)
            .map(|k| {
                x.iter().enumerate().fold(Complex64::new(0.0, 0.0), |acc, (i, v)| {
                    let ang = -2.0 * PI * (k * i) as f64 / n as f64;
                    acc + Complex64::new(ang.cos(), ang.sin()) * v
                })
            })
            .collect()
    }

    #[test]
    fn config_validation() {
        assert!(StftConfig::hann(1280, 320).is_ok());
        assert!(StftConfig::hann(1280, 1281).is_err());
        assert!(StftConfig::hann(1279, 320).is_err());
        assert!(StftConfig::hann(64, 0).is_err());
        // Hann with hop = n_fft is not COLA.
        assert!(StftConfig::hann(64, 64).is_err());
        assert!(StftConfig::rectangular(64, 64).is_ok());
        assert!(StftConfig::new(4, 2, vec![1.0, -1.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn one_second_gives_75_frames() {
        let cfg = StftConfig::default();
        let spec = stft(&AudioBuffer::zeros(24_000, 24_000).unwrap(), &cfg).unwrap();
        assert_eq!(spec.frames(), 75);
        assert_eq!(spec.bins(), 641);
        let y = istft(&ComplexSpectrogram::zeros(75, 641), &cfg).unwrap();
        assert_eq!(y.len(), 24_000);
    }

    #[test]
    fn zero_signal_zero_spectrum() {
        let cfg = StftConfig::hann(256, 64).unwrap();
        let spec = stft(&AudioBuffer::zeros(1024, 24_000).unwrap(), &cfg).unwrap();
        assert!(spec.data().iter().all(|c| c.norm() == 0.0));
        let y = istft(&spec, &cfg).unwrap();
        assert!(y.samples().iter().all(|s| *s == 0.0));
    }

    #[test]
    fn cosine_on_bin_concentrates_energy() {
        let n = 64;
        let k0 = 5;
        let cfg = StftConfig::rectangular(n, n).unwrap();
        let x: Vec<f64> = (0..n)
            .map(|i| (2.0 * PI * (k0 * i) as f64 / n as f64).cos())
            .collect();
        let spec = stft(&AudioBuffer::new(x.clone(), 24_000).unwrap(), &cfg).unwrap();
        assert_eq!(spec.frames(), 1);
        let oracle = direct_dft(&x);
        let peak = spec.get(0, k0).norm();
        assert!((peak - oracle[k0].norm()).abs() < 1e-9);
        for k in 0..spec.bins() {
            assert!((spec.get(0, k) - oracle[k]).norm() < 1e-9);
            if k != k0 {
                assert!(spec.get(0, k).norm() <= 1e-6 * peak, "bin {k} leaked");
            }
        }
    }

    #[test]
    fn parseval_single_rectangular_frame() {
        let n = 128;
        let cfg = StftConfig::rectangular(n, n).unwrap();
        let x = noise(n, 3);
        let spec = stft(&x, &cfg).unwrap();
        let f = spec.frame(0);
        // Single-sideband: interior bins count twice.
        let mut spec_energy = f[0].norm_sqr() + f[n / 2].norm_sqr();
        spec_energy += 2.0 * f[1..n / 2].iter().map(|c| c.norm_sqr()).sum::<f64>();
        let time_energy = x.energy();
        assert!((time_energy - spec_energy / n as f64).abs() <= 1e-6 * time_energy);
    }

    #[test]
    fn round_trip_hann_quarter_hop() {
        let cfg = StftConfig::hann(512, 128).unwrap();
        let x = noise(512 * 8, 11);
        let y = istft(&stft(&x, &cfg).unwrap(), &cfg).unwrap();
        assert_eq!(y.len(), x.len());
        let err: f64 = x.samples().iter().zip(y.samples()).map(|(a, b)| (a - b).powi(2)).sum();
        assert!((err / x.energy()).sqrt() < 1e-9);
    }

    #[test]
    fn istft_rejects_bin_mismatch() {
        let cfg = StftConfig::hann(256, 64).unwrap();
        assert!(istft(&ComplexSpectrogram::zeros(3, 100), &cfg).is_err());
    }

    #[test]
    fn short_signals_are_padded() {
        let cfg = StftConfig::hann(256, 64).unwrap();
        let spec = stft(&noise(10, 1), &cfg).unwrap();
        assert_eq!(spec.frames(), 1);
        assert!(stft(&AudioBuffer::zeros(0, 24_000).unwrap(), &cfg).is_err());
    }

    #[test]
    fn reflect_index_mirrors() {
        assert_eq!(reflect_index(-1, 5), 1);
        assert_eq!(reflect_index(-4, 5), 4);
        assert_eq!(reflect_index(5, 5), 3);
        assert_eq!(reflect_index(9, 5), 1);
        assert_eq!(reflect_index(3, 1), 0);
    }
}
