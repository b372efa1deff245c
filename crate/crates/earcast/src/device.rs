//! Simulated playback devices: realize a frequency response curve as a
//! causal FIR filter and render paired (input, device-played) audio.
//!
//! Filters are minimum phase, built with the real-cepstrum construction:
//! interpolate the requested log-magnitude onto a dense FFT grid, take the
//! real cepstrum of `ln|H|`, fold it onto the causal side, exponentiate back
//! and truncate. Minimum phase keeps all energy at the front of the impulse
//! response, so there is no pre-ringing and the group delay is the smallest
//! any causal filter with that magnitude can have, matching how a physical
//! driver behaves.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::audio;
use crate::data::{AudioSegment, DatasetManifest, FileEntry};
use crate::error::DeviceError;
use crate::frc::{self, FrequencyResponse};

/// Upper bound on filter length.
pub const MAX_TAPS: usize = 8192;

/// Default filter length: about 93 ms at 44.1 kHz, dense enough below
/// 100 Hz where the measurement grid is tight.
pub const DEFAULT_TAPS: usize = 4096;

/// Magnitudes outside this symmetric dB range are rejected by the designer.
pub const DESIGN_DB_LIMIT: f64 = 48.0;

/// A causal FIR filter with real taps.
#[derive(Debug, Clone, PartialEq)]
pub struct FirFilter {
    pub taps: Vec<f64>,
    pub sample_rate_hz: u32,
}

impl FirFilter {
    pub fn new(taps: Vec<f64>, sample_rate_hz: u32) -> Self {
        Self {
            taps,
            sample_rate_hz,
        }
    }

    pub fn validate(&self) -> Result<(), DeviceError> {
        if self.taps.is_empty() {
            return Err(DeviceError::EmptyFilter);
        }
        if self.taps.len() > MAX_TAPS {
            return Err(DeviceError::TooManyTaps {
                taps: self.taps.len(),
                max: MAX_TAPS,
            });
        }
        if let Some(i) = self.taps.iter().position(|t| !t.is_finite()) {
            return Err(DeviceError::NonFiniteTap { index: i });
        }
        Ok(())
    }
}

/// Result of a filter design: the filter plus how far its measured response
/// strays from the request over the 100 Hz – 16 kHz band. Callers decide
/// whether the deviation is acceptable.
#[derive(Debug, Clone)]
pub struct FirDesign {
    pub filter: FirFilter,
    pub max_deviation_db: f64,
}

fn run_fft(data: &mut [Complex<f64>], inverse: bool) {
    let mut planner = FftPlanner::new();
    let fft = if inverse {
        planner.plan_fft_inverse(data.len())
    } else {
        planner.plan_fft_forward(data.len())
    };
    fft.process(data);
    if inverse {
        let scale = 1.0 / data.len() as f64;
        for c in data.iter_mut() {
            *c *= scale;
        }
    }
}

/// Design a minimum-phase FIR whose magnitude response matches `frc`.
pub fn design_min_phase_fir(
    frc: &FrequencyResponse,
    n_taps: usize,
    sample_rate_hz: u32,
) -> Result<FirDesign, DeviceError> {
    for (&f, &m) in frc.freqs_hz.iter().zip(&frc.mags_db) {
        if m.abs() > DESIGN_DB_LIMIT {
            return Err(DeviceError::MagnitudeOutOfRange {
                mag_db: m,
                freq_hz: f,
                lo: -DESIGN_DB_LIMIT,
                hi: DESIGN_DB_LIMIT,
            });
        }
    }
    let n_taps = n_taps.clamp(1, MAX_TAPS);
    let n = (n_taps * 8).next_power_of_two().max(8192);
    let ln10_over_20 = std::f64::consts::LN_10 / 20.0;

    // log-magnitude on the dense FFT grid, conjugate-symmetric
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    for k in 0..=n / 2 {
        let f = k as f64 * sample_rate_hz as f64 / n as f64;
        let ln_mag = frc.mag_at(f) * ln10_over_20;
        buf[k] = Complex::new(ln_mag, 0.0);
        if k > 0 && k < n / 2 {
            buf[n - k] = Complex::new(ln_mag, 0.0);
        }
    }

    // real cepstrum of ln|H|
    run_fft(&mut buf, true);
    // fold the anticausal half onto the causal side
    let mut folded = vec![Complex::new(0.0, 0.0); n];
    folded[0] = Complex::new(buf[0].re, 0.0);
    for k in 1..n / 2 {
        folded[k] = Complex::new(2.0 * buf[k].re, 0.0);
    }
    folded[n / 2] = Complex::new(buf[n / 2].re, 0.0);

    // back to the spectrum and exponentiate: exp of the folded cepstrum is
    // the minimum-phase spectrum with the requested magnitude
    run_fft(&mut folded, false);
    for c in folded.iter_mut() {
        *c = c.exp();
    }
    run_fft(&mut folded, true);

    let mut taps: Vec<f64> = folded[..n_taps].iter().map(|c| c.re).collect();
    // fade the tail to suppress truncation ripple
    let fade = n_taps / 8;
    if fade >= 2 {
        for i in 0..fade {
            let x = (i + 1) as f64 / fade as f64;
            let w = 0.5 * (1.0 + (std::f64::consts::PI * x).cos());
            taps[n_taps - fade + i] *= w;
        }
    }
    let filter = FirFilter::new(taps, sample_rate_hz);

    // report the worst deviation over the audible check band
    let check_lo = 100.0f64.max(frc.freqs_hz[0]);
    let check_hi = 16000.0f64.min(*frc.freqs_hz.last().unwrap()).min(sample_rate_hz as f64 / 2.0 * 0.99);
    let grid = frc::log_grid(check_lo, check_hi, 200);
    let measured = frc::measure_frc(&filter, &grid, sample_rate_hz)?;
    let max_deviation_db = grid
        .iter()
        .zip(&measured.mags_db)
        .map(|(&f, &m)| (m - frc.mag_at(f)).abs())
        .fold(0.0f64, f64::max);

    Ok(FirDesign {
        filter,
        max_deviation_db,
    })
}

/// Linear convolution of `x` with the filter, truncated to the input
/// length. Uses overlap-add block FFT convolution in f64.
pub fn apply_fir(x: &[f32], filter: &FirFilter) -> Vec<f32> {
    let taps = &filter.taps;
    let m = taps.len();
    if m == 1 {
        return x.iter().map(|&s| (s as f64 * taps[0]) as f32).collect();
    }
    let fft_len = (m.next_power_of_two() * 4).clamp(8192, 1 << 18).max(m.next_power_of_two() * 2);
    let block = fft_len - m + 1;

    let mut h = vec![Complex::new(0.0, 0.0); fft_len];
    for (i, &t) in taps.iter().enumerate() {
        h[i] = Complex::new(t, 0.0);
    }
    run_fft(&mut h, false);

    let mut out = vec![0.0f64; x.len() + m - 1];
    let mut pos = 0usize;
    while pos < x.len() {
        let end = (pos + block).min(x.len());
        let mut buf = vec![Complex::new(0.0, 0.0); fft_len];
        for (i, &s) in x[pos..end].iter().enumerate() {
            buf[i] = Complex::new(s as f64, 0.0);
        }
        run_fft(&mut buf, false);
        for (b, hh) in buf.iter_mut().zip(&h) {
            *b *= *hh;
        }
        run_fft(&mut buf, true);
        let seg = (end - pos + m - 1).min(out.len() - pos);
        for i in 0..seg {
            out[pos + i] += buf[i].re;
        }
        pos = end;
    }
    out.truncate(x.len());
    out.into_iter().map(|s| s as f32).collect()
}

/// A named simulated device: its response curve and the filter realizing it.
#[derive(Debug, Clone)]
pub struct DeviceProfile {
    pub name: String,
    pub frc: FrequencyResponse,
    pub filter: FirFilter,
    pub price_tier: Option<String>,
}

/// Play audio through a device.
pub fn apply_device(
    audio: &AudioSegment,
    device: &DeviceProfile,
) -> Result<AudioSegment, DeviceError> {
    if audio.sample_rate_hz != device.filter.sample_rate_hz {
        return Err(DeviceError::SampleRateMismatch {
            audio_hz: audio.sample_rate_hz,
            filter_hz: device.filter.sample_rate_hz,
        });
    }
    Ok(AudioSegment {
        samples: apply_fir(&audio.samples, &device.filter),
        sample_rate_hz: audio.sample_rate_hz,
        source_file: audio.source_file.clone(),
        offset_s: audio.offset_s,
    })
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One device's curve as a sum of parametric shapes over log-frequency.
fn parametric_curve(rng: &mut ChaCha8Rng, grid: &[f64]) -> Vec<f64> {
    let bass_sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let bass_amp = bass_sign * rng.random_range(3.0..12.0);
    let bass_fc: f64 = rng.random_range(80.0..300.0);
    let bass_w = rng.random_range(0.4..0.8);

    let peak_sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let peak_amp = peak_sign * rng.random_range(2.0..8.0);
    let peak_fc = rng.random_range(1000.0f64.ln()..5000.0f64.ln()).exp();
    let peak_s = rng.random_range(0.3..0.8);

    let treble_sign = if rng.random_bool(0.75) { -1.0 } else { 1.0 };
    let treble_amp = treble_sign * rng.random_range(2.0..12.0);
    let treble_fc: f64 = rng.random_range(8000.0..14000.0);
    let treble_w = rng.random_range(0.3..0.6);

    let notch = rng.random_bool(0.5);
    let notch_amp = -rng.random_range(3.0..9.0);
    let notch_fc = rng.random_range(300.0f64.ln()..8000.0f64.ln()).exp();
    let notch_s = rng.random_range(0.06..0.15);

    grid.iter()
        .map(|&f| {
            let lf = f.ln();
            let mut db = bass_amp * sigmoid((bass_fc.ln() - lf) / bass_w);
            db += peak_amp * (-0.5 * ((lf - peak_fc.ln()) / peak_s).powi(2)).exp();
            db += treble_amp * sigmoid((lf - treble_fc.ln()) / treble_w);
            if notch {
                db += notch_amp * (-0.5 * ((lf - notch_fc.ln()) / notch_s).powi(2)).exp();
            }
            db.clamp(-18.0, 18.0)
        })
        .collect()
}

const PRICE_TIERS: [&str; 6] = ["entry", "budget", "mid", "premium", "flagship", "studio"];

/// Deterministic bank of distinct simulated devices. Curves are drawn from
/// parametric shapes (bass shelf, presence peak, treble tilt, optional
/// notch) and redrawn until every pair differs by at least 3 dB on average.
pub fn make_parametric_device_bank(
    seed: u64,
    n_devices: usize,
) -> Result<Vec<DeviceProfile>, DeviceError> {
    if n_devices < 2 {
        return Err(DeviceError::TooFewDevices {
            n: n_devices,
            min: 2,
        });
    }
    let grid = frc::standard_grid();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut curves: Vec<Vec<f64>> = Vec::with_capacity(n_devices);
    let mut attempts = 0usize;
    while curves.len() < n_devices {
        attempts += 1;
        assert!(attempts < 10_000, "device bank generation failed to separate curves");
        let cand = parametric_curve(&mut rng, &grid);
        let distinct = curves.iter().all(|c| {
            let mean_abs: f64 = c
                .iter()
                .zip(&cand)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>()
                / c.len() as f64;
            mean_abs >= 3.0
        });
        if distinct {
            curves.push(cand);
        }
    }
    curves
        .into_iter()
        .enumerate()
        .map(|(i, mags)| {
            let name = format!("dev{i}");
            let frc = FrequencyResponse::new(grid.clone(), mags, name.clone())?;
            let design = design_min_phase_fir(&frc, DEFAULT_TAPS, audio::SAMPLE_RATE)?;
            Ok(DeviceProfile {
                name,
                frc,
                filter: design.filter,
                price_tier: Some(PRICE_TIERS[i % PRICE_TIERS.len()].to_string()),
            })
        })
        .collect()
}

/// Options for dataset synthesis.
#[derive(Debug, Clone)]
pub struct SynthOptions {
    /// Seed recorded in the manifest (and used for optional noise).
    pub seed: u64,
    /// Additive noise level in dB relative to each file's RMS; None keeps
    /// the simulation noiseless.
    pub noise_db: Option<f64>,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            noise_db: None,
        }
    }
}

/// A synthesized paired dataset on disk.
#[derive(Debug, Clone)]
pub struct PairedDataset {
    pub root: PathBuf,
    pub manifest: DatasetManifest,
    pub devices: Vec<String>,
}

/// Render every input file through every device and write the paired tree
/// (`input/<file>.wav`, `<device>/<file>.wav`, `frc/<device>.csv`,
/// `manifest.json`). Unreadable inputs are skipped and listed as warnings.
pub fn synthesize_paired_dataset(
    inputs: &[PathBuf],
    bank: &[DeviceProfile],
    out_dir: &Path,
    opts: &SynthOptions,
) -> Result<PairedDataset, DeviceError> {
    let device_names: Vec<String> = bank.iter().map(|d| d.name.clone()).collect();
    std::fs::create_dir_all(out_dir.join("input"))?;
    std::fs::create_dir_all(out_dir.join("frc"))?;
    for d in bank {
        std::fs::create_dir_all(out_dir.join(&d.name))?;
        d.frc
            .save_csv(&out_dir.join("frc").join(format!("{}.csv", d.name)))?;
    }

    let mut manifest =
        DatasetManifest::new(audio::SAMPLE_RATE, device_names.clone(), opts.seed);

    let mut sorted: Vec<&PathBuf> = inputs.iter().collect();
    sorted.sort();
    for (file_idx, path) in sorted.into_iter().enumerate() {
        let (raw, sr) = match audio::read_wav_mono(path) {
            Ok(x) => x,
            Err(e) => {
                manifest.warnings.push(format!("skipped {}: {e}", path.display()));
                continue;
            }
        };
        let samples = audio::ensure_sample_rate(raw, sr, audio::SAMPLE_RATE);
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| format!("file{file_idx}"));
        let name = format!("{stem}.wav");
        audio::write_wav_f32(&out_dir.join("input").join(&name), &samples, audio::SAMPLE_RATE)?;

        for (dev_idx, device) in bank.iter().enumerate() {
            let mut played = apply_fir(&samples, &device.filter);
            if let Some(noise_db) = opts.noise_db {
                let sig_rms = audio::rms(&samples);
                let noise_rms = sig_rms * 10f64.powf(noise_db / 20.0);
                let mut nrng = ChaCha8Rng::seed_from_u64(
                    opts.seed
                        .wrapping_mul(0x9e3779b9)
                        .wrapping_add((file_idx as u64) << 16)
                        .wrapping_add(dev_idx as u64),
                );
                for s in &mut played {
                    let (u1, u2): (f64, f64) =
                        (nrng.random_range(1e-12..1.0), nrng.random());
                    let g = (-2.0 * u1.ln()).sqrt()
                        * (2.0 * std::f64::consts::PI * u2).cos();
                    *s += (g * noise_rms) as f32;
                }
            }
            audio::write_wav_f32(
                &out_dir.join(&device.name).join(&name),
                &played,
                audio::SAMPLE_RATE,
            )?;
        }

        manifest.files.push(FileEntry {
            duration_s: samples.len() as f64 / audio::SAMPLE_RATE as f64,
            n_samples: samples.len() as u64,
            name,
            split: None,
        });
    }
    manifest.files.sort_by(|a, b| a.name.cmp(&b.name));
    manifest
        .save(&out_dir.join("manifest.json"))
        .map_err(|e| DeviceError::Io(std::io::Error::other(e.to_string())))?;

    Ok(PairedDataset {
        root: out_dir.to_path_buf(),
        manifest,
        devices: device_names,
    })
}
