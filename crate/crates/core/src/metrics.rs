//! Objective comparisons between a reference and a degraded signal.

use crate::dsp::{stft, AudioBuffer, StftConfig};
use crate::error::{bail, Result};

/// Reported SNR when the signals are identical.
pub const SNR_CAP_DB: f64 = 99.0;

fn check_pair(reference: &AudioBuffer, degraded: &AudioBuffer) -> Result<()> {
    if reference.len() != degraded.len() {
        bail!(
            Shape,
            "signals have different lengths ({} and {})",
            reference.len(),
            degraded.len()
        );
    }
    if reference.sample_rate() != degraded.sample_rate() {
        bail!(Config, "signals have different sample rates");
    }
    Ok(())
}

/// Time-domain SNR in dB, capped at [`SNR_CAP_DB`].
pub fn snr_db(reference: &AudioBuffer, degraded: &AudioBuffer) -> Result<f64> {
    check_pair(reference, degraded)?;
    let signal = reference.energy();
    let noise: f64 = reference
        .samples()
        .iter()
        .zip(degraded.samples())
        .map(|(a, b)| (a - b).powi(2))
        .sum();
    if noise == 0.0 {
        return Ok(SNR_CAP_DB);
    }
    if signal == 0.0 {
        return Ok(-SNR_CAP_DB);
    }
    Ok((10.0 * (signal / noise).log10()).clamp(-SNR_CAP_DB, SNR_CAP_DB))
}

/// `‖|S(ref)| − |S(deg)|‖_F / ‖|S(ref)|‖_F`; 0 when both are silent.
pub fn spectral_convergence(reference: &AudioBuffer, degraded: &AudioBuffer, cfg: &StftConfig) -> Result<f64> {
    check_pair(reference, degraded)?;
    let a = stft(reference, cfg)?.magnitudes();
    let b = stft(degraded, cfg)?.magnitudes();
    let diff: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum();
    let norm: f64 = a.iter().map(|x| x * x).sum();
    if diff == 0.0 {
        return Ok(0.0);
    }
    if norm == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok((diff / norm).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn sine(n: usize) -> AudioBuffer {
        AudioBuffer::new((0..n).map(|i| 0.5 * (i as f64 * 0.07).sin()).collect(), 24_000).unwrap()
    }

    #[test]
    fn identical_signals() {
        let x = sine(4800);
        assert_eq!(snr_db(&x, &x).unwrap(), SNR_CAP_DB);
        assert_eq!(spectral_convergence(&x, &x, &StftConfig::default()).unwrap(), 0.0);
    }

    #[test]
    fn constructed_noise_at_minus_20_db() {
        let x = sine(24_000);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n: Vec<f64> = (0..x.len()).map(|_| Normal::new(0.0, 1.0).unwrap().sample(&mut rng)).collect();
        let scale = (x.energy() / n.iter().map(|v| v * v).sum::<f64>() / 100.0).sqrt();
        let y = AudioBuffer::new(x.samples().iter().zip(&n).map(|(a, b)| a + scale * b).collect(), 24_000).unwrap();
        assert!((snr_db(&x, &y).unwrap() - 20.0).abs() < 1e-9);
        let sc = spectral_convergence(&x, &y, &StftConfig::default()).unwrap();
        assert!(sc > 0.0 && sc < 1.0);
    }

    #[test]
    fn length_mismatch() {
        assert!(snr_db(&sine(10), &sine(11)).is_err());
        assert!(spectral_convergence(&sine(1000), &sine(1100), &StftConfig::default()).is_err());
    }
}
