//! Frequency response curves: the dB-vs-frequency fingerprints of playback
//! devices.
//!
//! A curve lives on a strictly increasing frequency grid. The canonical grid
//! has [`STANDARD_BANDS`] log-spaced points covering 20 Hz to 22.05 kHz, the
//! resolution used by common headphone measurement databases. Curves can be
//! measured from a filter, resampled between grids, compared against a target
//! curve, and rendered as line-graph images (see [`crate::graph`]).

use std::fmt::Write as _;
use std::path::Path;

use crate::device::FirFilter;
use crate::error::FrcError;

/// Number of bands in the canonical measurement grid.
pub const STANDARD_BANDS: usize = 480;

/// Lowest frequency of the canonical grid, Hz.
pub const GRID_LO_HZ: f64 = 20.0;

/// Highest frequency of the canonical grid, Hz.
pub const GRID_HI_HZ: f64 = 22050.0;

/// The canonical 480-band grid, log-spaced and inclusive of both endpoints.
pub fn standard_grid() -> Vec<f64> {
    log_grid(GRID_LO_HZ, GRID_HI_HZ, STANDARD_BANDS)
}

/// `n` log-spaced frequencies from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2 && lo > 0.0 && hi > lo);
    let step = (hi / lo).ln() / (n - 1) as f64;
    (0..n)
        .map(|i| {
            if i == n - 1 {
                hi
            } else {
                lo * (step * i as f64).exp()
            }
        })
        .collect()
}

/// A device's magnitude response in dB relative to the digital input.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyResponse {
    pub freqs_hz: Vec<f64>,
    pub mags_db: Vec<f64>,
    pub device_name: String,
}

impl FrequencyResponse {
    /// Build a curve, enforcing the grid and magnitude invariants.
    pub fn new(
        freqs_hz: Vec<f64>,
        mags_db: Vec<f64>,
        device_name: impl Into<String>,
    ) -> Result<Self, FrcError> {
        if freqs_hz.len() != mags_db.len() {
            return Err(FrcError::LengthMismatch {
                freqs: freqs_hz.len(),
                mags: mags_db.len(),
            });
        }
        for (i, w) in freqs_hz.windows(2).enumerate() {
            if !(w[1] > w[0]) {
                return Err(FrcError::NotIncreasing { index: i });
            }
        }
        if let Some(&first) = freqs_hz.first() {
            let last = *freqs_hz.last().unwrap();
            if first < GRID_LO_HZ || last > GRID_HI_HZ {
                let bad = if first < GRID_LO_HZ { first } else { last };
                return Err(FrcError::FrequencyOutOfRange {
                    freq_hz: bad,
                    lo: GRID_LO_HZ,
                    hi: GRID_HI_HZ,
                });
            }
        }
        if let Some(i) = mags_db.iter().position(|m| !m.is_finite()) {
            return Err(FrcError::NonFiniteMagnitude { index: i });
        }
        Ok(Self {
            freqs_hz,
            mags_db,
            device_name: device_name.into(),
        })
    }

    /// A curve that is `level_db` everywhere on the standard grid.
    pub fn constant(level_db: f64, device_name: impl Into<String>) -> Self {
        let grid = standard_grid();
        let mags = vec![level_db; grid.len()];
        Self::new(grid, mags, device_name).expect("constant curve is always valid")
    }

    /// Number of frequency bands.
    pub fn bands(&self) -> usize {
        self.freqs_hz.len()
    }

    /// Frequency span (first, last) in Hz.
    pub fn span(&self) -> (f64, f64) {
        (self.freqs_hz[0], *self.freqs_hz.last().unwrap())
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.device_name = name.into();
        self
    }

    /// Magnitude at an arbitrary frequency, interpolated linearly in
    /// log-frequency. Clamps to the end values outside the span.
    pub fn mag_at(&self, freq_hz: f64) -> f64 {
        let f = &self.freqs_hz;
        let m = &self.mags_db;
        if freq_hz <= f[0] {
            return m[0];
        }
        if freq_hz >= *f.last().unwrap() {
            return *m.last().unwrap();
        }
        let j = f.partition_point(|&x| x <= freq_hz);
        let (f0, f1) = (f[j - 1], f[j]);
        let t = (freq_hz / f0).ln() / (f1 / f0).ln();
        m[j - 1] + t * (m[j] - m[j - 1])
    }

    /// Write the curve as `freq_hz,magnitude_db` CSV (UTF-8, LF endings).
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.bands() * 24);
        out.push_str("freq_hz,magnitude_db\n");
        for (f, m) in self.freqs_hz.iter().zip(&self.mags_db) {
            let _ = writeln!(out, "{f},{m}");
        }
        out
    }

    pub fn save_csv(&self, path: &Path) -> Result<(), FrcError> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    /// Parse a curve from the CSV format written by [`Self::to_csv`]. The
    /// device name is taken from the file stem.
    pub fn load_csv(path: &Path) -> Result<Self, FrcError> {
        let text = std::fs::read_to_string(path).map_err(|e| FrcError::Csv {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        let mut lines = text.lines();
        match lines.next() {
            Some("freq_hz,magnitude_db") => {}
            other => {
                return Err(FrcError::Csv {
                    path: path.to_path_buf(),
                    msg: format!("bad header: {other:?}"),
                })
            }
        }
        let mut freqs = Vec::new();
        let mut mags = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let mut cols = line.split(',');
            let (f, m) = match (cols.next(), cols.next(), cols.next()) {
                (Some(f), Some(m), None) => (f, m),
                _ => {
                    return Err(FrcError::Csv {
                        path: path.to_path_buf(),
                        msg: format!("row {}: expected two columns", i + 2),
                    })
                }
            };
            let parse = |s: &str| {
                s.trim().parse::<f64>().map_err(|e| FrcError::Csv {
                    path: path.to_path_buf(),
                    msg: format!("row {}: {e}", i + 2),
                })
            };
            freqs.push(parse(f)?);
            mags.push(parse(m)?);
        }
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Self::new(freqs, mags, name)
    }
}

/// Which reference shape a target curve represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetKind {
    Harman,
    Flat,
    Custom,
}

/// A reference curve that device responses are compared against.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetCurve {
    pub response: FrequencyResponse,
    pub kind: TargetKind,
}

/// Approximate rendition of the widely cited Harman over-ear preference
/// target: a bass shelf reaching +6 dB at 20 Hz, flat through the midrange,
/// an ear-gain bump of about +3 dB near 3 kHz, and a gentle treble roll-off
/// above 10 kHz. The values are illustrative anchor points, not a published
/// dataset; only the overall shape matters for use as a reference overlay.
const HARMAN_ANCHORS: [(f64, f64); 32] = [
    (20.0, 6.0),
    (26.0, 5.5),
    (34.0, 5.0),
    (45.0, 4.4),
    (60.0, 3.7),
    (80.0, 3.0),
    (105.0, 2.2),
    (140.0, 1.3),
    (200.0, 0.4),
    (260.0, 0.0),
    (350.0, 0.0),
    (470.0, 0.0),
    (630.0, 0.0),
    (840.0, 0.1),
    (1100.0, 0.4),
    (1400.0, 0.9),
    (1800.0, 1.6),
    (2300.0, 2.3),
    (3000.0, 3.0),
    (3700.0, 2.8),
    (4500.0, 2.2),
    (5500.0, 1.4),
    (6700.0, 0.7),
    (8000.0, 0.2),
    (9500.0, -0.2),
    (11000.0, -0.8),
    (13000.0, -1.6),
    (15000.0, -2.4),
    (17000.0, -3.2),
    (19000.0, -4.0),
    (21000.0, -4.7),
    (22050.0, -5.0),
];

impl TargetCurve {
    /// A flat (0 dB) target on the given grid.
    pub fn flat(grid: &[f64]) -> Self {
        let response =
            FrequencyResponse::new(grid.to_vec(), vec![0.0; grid.len()], "Flat").unwrap();
        Self {
            response,
            kind: TargetKind::Flat,
        }
    }

    /// The Harman-style preference target interpolated onto the given grid.
    pub fn harman(grid: &[f64]) -> Self {
        let anchors = FrequencyResponse::new(
            HARMAN_ANCHORS.iter().map(|a| a.0).collect(),
            HARMAN_ANCHORS.iter().map(|a| a.1).collect(),
            "Harman",
        )
        .unwrap();
        let mags = grid.iter().map(|&f| anchors.mag_at(f)).collect();
        let response = FrequencyResponse::new(grid.to_vec(), mags, "Harman").unwrap();
        Self {
            response,
            kind: TargetKind::Harman,
        }
    }

    pub fn custom(response: FrequencyResponse) -> Self {
        Self {
            response,
            kind: TargetKind::Custom,
        }
    }

    /// Label used in legends and series lists.
    pub fn label(&self) -> &str {
        match self.kind {
            TargetKind::Harman => "Harman",
            TargetKind::Flat => "Flat",
            TargetKind::Custom => "Target",
        }
    }

    pub fn of_kind(kind: TargetKind, grid: &[f64]) -> Self {
        match kind {
            TargetKind::Harman => Self::harman(grid),
            TargetKind::Flat => Self::flat(grid),
            TargetKind::Custom => Self::flat(grid),
        }
    }
}

/// Measure a filter's magnitude response on the given grid by evaluating its
/// transfer function `H(e^{j2πf/fs})` directly. For an LTI filter this equals
/// the steady-state level of a played-back unit sinusoid, without having to
/// synthesize one.
pub fn measure_frc(
    filter: &FirFilter,
    grid: &[f64],
    sample_rate_hz: u32,
) -> Result<FrequencyResponse, FrcError> {
    filter.validate().map_err(|e| FrcError::GridMismatch(e.to_string()))?;
    let nyquist = sample_rate_hz as f64 / 2.0;
    let mut mags = Vec::with_capacity(grid.len());
    for &f in grid {
        if f >= nyquist {
            return Err(FrcError::AboveNyquist {
                freq_hz: f,
                nyquist_hz: nyquist,
            });
        }
        if f <= 0.0 {
            return Err(FrcError::FrequencyOutOfRange {
                freq_hz: f,
                lo: f64::MIN_POSITIVE,
                hi: nyquist,
            });
        }
        let w = 2.0 * std::f64::consts::PI * f / sample_rate_hz as f64;
        let (mut re, mut im) = (0.0f64, 0.0f64);
        for (k, &tap) in filter.taps.iter().enumerate() {
            let phase = w * k as f64;
            re += tap * phase.cos();
            im -= tap * phase.sin();
        }
        let mag = (re * re + im * im).sqrt().max(1e-12);
        mags.push(20.0 * mag.log10());
    }
    FrequencyResponse::new(grid.to_vec(), mags, "measured")
}

/// Resample a curve onto a new grid by linear interpolation in
/// log-frequency. The new grid must lie within the curve's span.
pub fn resample_frc(
    fr: &FrequencyResponse,
    new_grid: &[f64],
) -> Result<FrequencyResponse, FrcError> {
    let (lo, hi) = fr.span();
    for w in new_grid.windows(2) {
        if !(w[1] > w[0]) {
            return Err(FrcError::NotIncreasing { index: 0 });
        }
    }
    for &f in new_grid {
        if f < lo || f > hi {
            return Err(FrcError::OutsideSpan {
                freq_hz: f,
                lo,
                hi,
            });
        }
    }
    let mags = new_grid.iter().map(|&f| fr.mag_at(f)).collect();
    FrequencyResponse::new(new_grid.to_vec(), mags, fr.device_name.clone())
}

/// Elementwise difference `fr − target` in dB. Grids must already align.
pub fn deviation_from_target(
    fr: &FrequencyResponse,
    target: &TargetCurve,
) -> Result<Vec<f64>, FrcError> {
    let t = &target.response;
    if fr.bands() != t.bands() {
        return Err(FrcError::LengthMismatch {
            freqs: fr.bands(),
            mags: t.bands(),
        });
    }
    for (a, b) in fr.freqs_hz.iter().zip(&t.freqs_hz) {
        if (a - b).abs() > 1e-9 * a.max(1.0) {
            return Err(FrcError::GridMismatch(format!(
                "curve has {a} Hz where target has {b} Hz; resample first"
            )));
        }
    }
    Ok(fr
        .mags_db
        .iter()
        .zip(&t.mags_db)
        .map(|(a, b)| a - b)
        .collect())
}
