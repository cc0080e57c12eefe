use std::f64::consts::PI;
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use lcodec::dsp::AudioBuffer;
use lcodec::{Error, Result};

fn wav_error(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::Io(io),
        other => Error::Format(format!("{}: {other}", path.display())),
    }
}

/// Reads a mono WAV file (8/16/24/32-bit PCM or 32-bit float) into
/// samples scaled to [-1, 1].
pub fn read_wav(path: &Path) -> Result<AudioBuffer> {
    let mut reader = WavReader::open(path).map_err(|e| wav_error(path, e))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::Unsupported(format!(
            "{}: mono input required, file has {} channels",
            path.display(),
            spec.channels
        )));
    }
    let samples: Vec<f64> = match spec.sample_format {
        SampleFormat::Float => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>(),
        SampleFormat::Int => {
            let scale = (1u64 << (spec.bits_per_sample - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<std::result::Result<_, _>>()
        }
    }
    .map_err(|e| wav_error(path, e))?;
    AudioBuffer::new(samples, spec.sample_rate)
}

/// Writes 16-bit PCM mono. Audio whose peak exceeds 1 is scaled down to a
/// peak of 1 first; anything within range is written untouched.
pub fn write_wav(path: &Path, audio: &AudioBuffer) -> Result<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: audio.sample_rate(),
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let peak = audio.peak();
    let gain = if peak > 1.0 {
        log::warn!("peak {peak:.3} exceeds full scale; normalising {}", path.display());
        1.0 / peak
    } else {
        1.0
    };
    let mut w = WavWriter::create(path, spec).map_err(|e| wav_error(path, e))?;
    for &s in audio.samples() {
        let v = (s * gain * 32767.0).round().clamp(-32768.0, 32767.0) as i16;
        w.write_sample(v).map_err(|e| wav_error(path, e))?;
    }
    w.finalize().map_err(|e| wav_error(path, e))
}

/// Zero crossings of the sinc kernel on each side of the centre tap.
const ZERO_CROSSINGS: f64 = 16.0;
/// Cut-off as a fraction of the lower Nyquist frequency.
const ROLLOFF: f64 = 0.94;

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 { a } else { gcd(b, a % b) }
}

fn blackman(x: f64) -> f64 {
    // x in [-1, 1]
    0.42 + 0.5 * (PI * x).cos() + 0.08 * (2.0 * PI * x).cos()
}

/// Band-limited resampling with a Blackman-windowed sinc.
///
/// The pass band is flat to about 94% of the lower Nyquist frequency and
/// the stop band sits near -74 dB. Output length is `ceil(n · to / from)`.
pub fn resample(x: &AudioBuffer, to: u32) -> Result<AudioBuffer> {
    let from = x.sample_rate();
    if from == to {
        return Ok(x.clone());
    }
    if to == 0 {
        return Err(Error::Config("target sample rate must be positive".into()));
    }
    let g = gcd(from as u64, to as u64);
    let (up, down) = (to as u64 / g, from as u64 / g);
    let src = x.samples();
    let out_len = (src.len() as u64 * up).div_ceil(down) as usize;
    let fc = ROLLOFF * (to as f64 / from as f64).min(1.0);
    let half = ZERO_CROSSINGS / fc;
    let mut out = Vec::with_capacity(out_len);
    for n in 0..out_len as u64 {
        let num = n * down;
        let pos = (num / up) as f64 + (num % up) as f64 / up as f64;
        let lo = (pos - half).ceil().max(0.0) as usize;
        let hi = ((pos + half).floor() as usize).min(src.len() - 1);
        let mut acc = 0.0;
        for (j, &s) in src.iter().enumerate().take(hi + 1).skip(lo) {
            let tau = j as f64 - pos;
            let arg = fc * tau;
            let sinc = if arg == 0.0 { 1.0 } else { (PI * arg).sin() / (PI * arg) };
            acc += s * fc * sinc * blackman(tau / half);
        }
        out.push(acc);
    }
    AudioBuffer::new(out, to)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, sr: u32, n: usize) -> AudioBuffer {
        AudioBuffer::new(
            (0..n).map(|i| 0.5 * (2.0 * PI * freq * i as f64 / sr as f64).sin()).collect(),
            sr,
        )
        .unwrap()
    }

    fn snr_interior(a: &[f64], b: &[f64], margin: usize) -> f64 {
        let (mut s, mut e) = (0.0, 0.0);
        for i in margin..a.len() - margin {
            s += a[i] * a[i];
            e += (a[i] - b[i]).powi(2);
        }
        10.0 * (s / e).log10()
    }

    #[test]
    fn downsample_keeps_in_band_tone() {
        let y = resample(&tone(1000.0, 48_000, 9600), 24_000).unwrap();
        assert_eq!(y.len(), 4800);
        let want = tone(1000.0, 24_000, 4800);
        assert!(snr_interior(want.samples(), y.samples(), 100) > 60.0);
    }

    #[test]
    fn upsample_keeps_in_band_tone() {
        let y = resample(&tone(440.0, 16_000, 1600), 24_000).unwrap();
        assert_eq!(y.len(), 2400);
        let want = tone(440.0, 24_000, 2400);
        assert!(snr_interior(want.samples(), y.samples(), 100) > 60.0);
    }

    #[test]
    fn downsample_rejects_out_of_band_tone() {
        // 20 kHz is above the 12 kHz Nyquist of the target rate.
        let y = resample(&tone(20_000.0, 48_000, 9600), 24_000).unwrap();
        let rms = (y.samples()[100..4700].iter().map(|v| v * v).sum::<f64>() / 4600.0).sqrt();
        assert!(rms < 0.5 * 1e-3, "leak rms {rms}");
    }

    #[test]
    fn wav_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        let x = tone(300.0, 24_000, 1000);
        write_wav(&p, &x).unwrap();
        let y = read_wav(&p).unwrap();
        assert_eq!(y.sample_rate(), 24_000);
        assert!(x.samples().iter().zip(y.samples()).all(|(a, b)| (a - b).abs() < 1.0 / 32767.0));
    }

    #[test]
    fn loud_audio_is_normalised() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        let x = AudioBuffer::new(vec![0.5, -2.0, 1.0], 24_000).unwrap();
        write_wav(&p, &x).unwrap();
        let y = read_wav(&p).unwrap();
        assert!((y.samples()[1] + 32767.0 / 32768.0).abs() < 1e-9);
        assert!((y.samples()[0] - 0.25).abs() < 1e-4);
    }

    #[test]
    fn stereo_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.wav");
        let spec = WavSpec {
            channels: 2,
            sample_rate: 24_000,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        };
        let mut w = WavWriter::create(&p, spec).unwrap();
        for _ in 0..8 {
            w.write_sample(0i16).unwrap();
        }
        w.finalize().unwrap();
        assert!(matches!(read_wav(&p), Err(Error::Unsupported(_))));
    }
}
