//! WAV handling, rate conversion and a built-in test-signal generator.
//!
//! Everything here is mono. Files are written as 32-bit float PCM at
//! 44.1 kHz; 16/24/32-bit integer and float inputs are accepted and
//! converted on ingest.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::AudioError;

/// The project-wide sample rate.
pub const SAMPLE_RATE: u32 = 44100;

/// Read a WAV file as mono f32. Multi-channel input is downmixed by
/// averaging. Returns the samples and the file's native sample rate.
pub fn read_wav_mono(path: &Path) -> Result<(Vec<f32>, u32), AudioError> {
    let mut reader = hound::WavReader::open(path).map_err(|e| AudioError::Read {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(AudioError::UnsupportedFormat {
            path: path.to_path_buf(),
            msg: "zero channels".into(),
        });
    }
    let interleaved: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .collect::<Result<_, _>>()
            .map_err(|e| AudioError::Read {
                path: path.to_path_buf(),
                msg: e.to_string(),
            })?,
        (hound::SampleFormat::Int, bits @ (16 | 24 | 32)) => {
            let scale = 1.0 / (1i64 << (bits - 1)) as f32;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f32 * scale))
                .collect::<Result<_, _>>()
                .map_err(|e| AudioError::Read {
                    path: path.to_path_buf(),
                    msg: e.to_string(),
                })?
        }
        (fmt, bits) => {
            return Err(AudioError::UnsupportedFormat {
                path: path.to_path_buf(),
                msg: format!("{fmt:?} at {bits} bits"),
            })
        }
    };
    let mono = if channels == 1 {
        interleaved
    } else {
        interleaved
            .chunks(channels)
            .map(|frame| frame.iter().sum::<f32>() / channels as f32)
            .collect()
    };
    Ok((mono, spec.sample_rate))
}

/// Write mono f32 samples as a 32-bit float WAV.
pub fn write_wav_f32(path: &Path, samples: &[f32], sample_rate: u32) -> Result<(), AudioError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| AudioError::Write {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    for &s in samples {
        writer.write_sample(s).map_err(|e| AudioError::Write {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
    }
    writer.finalize().map_err(|e| AudioError::Write {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

/// Bring samples to the project rate, resampling when necessary.
pub fn ensure_sample_rate(samples: Vec<f32>, from_hz: u32, to_hz: u32) -> Vec<f32> {
    if from_hz == to_hz {
        samples
    } else {
        resample_poly(&samples, to_hz as usize, from_hz as usize)
    }
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Zeroth-order modified Bessel function, power series.
fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let half_sq = x * x / 4.0;
    for k in 1..=30 {
        term *= half_sq / (k * k) as f64;
        sum += term;
        if term < sum * 1e-16 {
            break;
        }
    }
    sum
}

/// Polyphase rational-rate resampler (Kaiser-windowed sinc, beta = 5),
/// matching the common scipy `resample_poly` defaults: half-length
/// `10·max(up, down)` at the upsampled rate and cutoff `1/max(up, down)`.
pub fn resample_poly(x: &[f32], up: usize, down: usize) -> Vec<f32> {
    assert!(up > 0 && down > 0);
    let g = gcd(up, down);
    let (up, down) = (up / g, down / g);
    if up == 1 && down == 1 {
        return x.to_vec();
    }
    let max_rate = up.max(down);
    let half = 10 * max_rate;
    let n_taps = 2 * half + 1;
    let fc = 1.0 / max_rate as f64; // normalized to upsampled Nyquist
    let beta = 5.0;
    let i0b = bessel_i0(beta);
    let mut h = vec![0.0f64; n_taps];
    let mut dc = 0.0;
    for (i, tap) in h.iter_mut().enumerate() {
        let m = i as f64 - half as f64;
        let sinc = if m == 0.0 {
            1.0
        } else {
            let a = std::f64::consts::PI * fc * m;
            a.sin() / a
        };
        let r = m / half as f64;
        let win = bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / i0b;
        *tap = fc * sinc * win;
        dc += *tap;
    }
    // normalize DC gain to 1, then scale by the interpolation factor
    let scale = up as f64 / dc;
    for tap in &mut h {
        *tap *= scale;
    }

    let out_len = (x.len() * up).div_ceil(down);
    let mut y = Vec::with_capacity(out_len);
    for m in 0..out_len {
        // center of the filter sits on the conceptual upsampled stream
        let pos = m * down + half;
        let mut acc = 0.0f64;
        // x[n] contributes via h[pos − n·up]
        let n_max = pos / up;
        let n_lo = pos.saturating_sub(n_taps - 1).div_ceil(up);
        for n in n_lo..=n_max.min(x.len().saturating_sub(1)) {
            let k = pos - n * up;
            acc += x[n] as f64 * h[k];
        }
        y.push(acc as f32);
    }
    y
}

/// Root-mean-square level of a signal.
pub fn rms(x: &[f32]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|&s| (s as f64) * (s as f64)).sum::<f64>() / x.len() as f64).sqrt()
}

/// Deterministic "music-like" generator: a handful of harmonics over a
/// piecewise-constant fundamental, plus soft low-passed noise bursts. Good
/// enough to exercise the full pipeline hermetically when no real music is
/// supplied.
pub fn gen_music_like(seed: u64, duration_s: f64, sample_rate: u32) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = (duration_s * sample_rate as f64).round() as usize;
    let dt = 1.0 / sample_rate as f64;
    let n_harm = rng.random_range(4..=8usize);
    let amps: Vec<f64> = (1..=n_harm)
        .map(|k| rng.random_range(0.5..1.0) / (k as f64).powf(1.1))
        .collect();
    let mut out = vec![0.0f64; n];

    // harmonic stack with phase-continuous pitch changes
    let mut phases = vec![0.0f64; n_harm];
    let mut f0 = 0.0f64;
    let mut next_change = 0usize;
    for (i, sample) in out.iter_mut().enumerate() {
        if i == next_change {
            let lo = 80.0f64.ln();
            let hi = 880.0f64.ln();
            f0 = rng.random_range(lo..hi).exp();
            next_change = i + (rng.random_range(0.25..1.0) * sample_rate as f64) as usize;
        }
        let mut s = 0.0;
        for (k, phase) in phases.iter_mut().enumerate() {
            *phase += 2.0 * std::f64::consts::PI * f0 * (k + 1) as f64 * dt;
            s += amps[k] * phase.sin();
        }
        *sample = s;
    }

    // low-passed noise bursts with attack/decay envelopes
    let mut t = 0usize;
    while t < n {
        t += (rng.random_range(0.2..1.0) * sample_rate as f64) as usize;
        if t >= n {
            break;
        }
        let len = (rng.random_range(0.03..0.15) * sample_rate as f64) as usize;
        let amp = rng.random_range(0.05..0.2);
        let mut prev = [0.0f64; 4];
        for j in 0..len.min(n - t) {
            let white: f64 = rng.random_range(-1.0..1.0);
            prev.rotate_right(1);
            prev[0] = white;
            let filtered = prev.iter().sum::<f64>() / 4.0;
            let x = j as f64 / len as f64;
            let env = (x * 8.0).min(1.0) * (1.0 - x);
            out[t + j] += amp * env * filtered;
        }
    }

    let peak = out.iter().fold(0.0f64, |p, &s| p.max(s.abs())).max(1e-9);
    let gain = 0.7 / peak;
    out.iter().map(|&s| (s * gain) as f32).collect()
}
