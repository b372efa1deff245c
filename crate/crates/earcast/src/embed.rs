//! Device embeddings and the embedding pool.
//!
//! Each device is represented by a set of 4096-dimensional vectors rather
//! than a single one; training samples a different pool entry each
//! iteration so the model never locks onto one exact representation. Two
//! providers exist:
//!
//! - [`FrcEncoder`] — a deterministic desk-scale encoder that turns the
//!   response curve (and its deviation from a target) into features,
//!   jitters them per pool index, and projects to 4096 dimensions. It
//!   reproduces the statistical property the pool depends on: small
//!   within-device spread, large between-device separation.
//! - [`crate::vlm::VlmClient`] — a wire client for an external
//!   vision-language embedding service operating on rendered line graphs.
//!
//! Pools store `ep_number` training entries (pool indices `0..ep_number`)
//! and 20 test entries in a separate index space starting at 10000, which
//! makes train/test disjointness structural.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::device::DeviceProfile;
use crate::error::EmbedError;
use crate::frc::{self, FrequencyResponse, TargetCurve};
use crate::util::{randn, subseed};

/// Dimensionality of every device embedding.
pub const EMBEDDING_DIM: usize = 4096;

/// First pool index of the held-out test entries.
pub const TEST_POOL_BASE: u32 = 10_000;

/// Number of held-out test embeddings per device.
pub const TEST_POOL_SIZE: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingSource {
    FrcEncoder,
    VlmService,
}

/// One 4096-d device representation.
#[derive(Debug, Clone)]
pub struct DeviceEmbedding {
    pub vector: Vec<f32>,
    pub device_name: String,
    pub source: EmbeddingSource,
    pub pool_index: u32,
}

impl DeviceEmbedding {
    pub fn validate(&self) -> Result<(), EmbedError> {
        if self.vector.len() != EMBEDDING_DIM {
            return Err(EmbedError::WrongDimension {
                expected: EMBEDDING_DIM,
                got: self.vector.len(),
            });
        }
        if self.vector.iter().any(|v| !v.is_finite()) {
            return Err(EmbedError::NonFinite);
        }
        if self.vector.iter().all(|&v| v == 0.0) {
            return Err(EmbedError::AllZero);
        }
        Ok(())
    }
}

/// Anything that can produce a device embedding for a (curve, target, index).
pub trait EmbeddingProvider {
    fn extract(
        &self,
        frc: &FrequencyResponse,
        target: &TargetCurve,
        device_name: &str,
        pool_index: u32,
    ) -> Result<DeviceEmbedding, EmbedError>;

    fn source(&self) -> EmbeddingSource;
}

/// Feature length before projection: raw curve + deviation + 16 log-band
/// means + 15 band-mean first differences.
const FEATURE_LEN: usize = 480 + 480 + 16 + 15;

const PROJECTION_SALT: &[u8] = b"earcast.frc-encoder.projection";

/// Deterministic curve-to-embedding encoder.
///
/// Pipeline: feature vector from the curve and its target deviation →
/// per-feature Gaussian jitter (keyed by device, pool index and seed) →
/// fixed seeded random projection shared by all devices → L2 normalization.
pub struct FrcEncoder {
    seed: u64,
    jitter_db: f64,
    /// Row-major [EMBEDDING_DIM × FEATURE_LEN] projection, same for every
    /// device and pool index under a given seed.
    projection: Vec<f32>,
}

impl FrcEncoder {
    pub fn new(seed: u64) -> Self {
        Self::with_jitter(seed, 0.5)
    }

    /// `jitter_db` is the standard deviation of the per-feature noise that
    /// differentiates pool entries of the same device.
    pub fn with_jitter(seed: u64, jitter_db: f64) -> Self {
        let mut rng = ChaCha8Rng::from_seed(subseed(&[PROJECTION_SALT, &seed.to_le_bytes()]));
        let scale = 1.0 / (FEATURE_LEN as f64).sqrt();
        let projection = (0..EMBEDDING_DIM * FEATURE_LEN)
            .map(|_| (randn(&mut rng) * scale) as f32)
            .collect();
        Self {
            seed,
            jitter_db,
            projection,
        }
    }

    fn features(
        &self,
        fr: &FrequencyResponse,
        target: &TargetCurve,
    ) -> Result<Vec<f64>, EmbedError> {
        if fr.bands() != frc::STANDARD_BANDS {
            return Err(EmbedError::WrongGrid {
                expected: frc::STANDARD_BANDS,
                got: fr.bands(),
            });
        }
        let target = if target.response.bands() == fr.bands() {
            target.clone()
        } else {
            TargetCurve {
                response: frc::resample_frc(&target.response, &fr.freqs_hz)?,
                kind: target.kind,
            }
        };
        let deviation = frc::deviation_from_target(fr, &target)?;

        let mut feats = Vec::with_capacity(FEATURE_LEN);
        feats.extend_from_slice(&fr.mags_db);
        feats.extend_from_slice(&deviation);
        // 16 equal log-width band means over the 480 log-spaced bins
        let chunk = frc::STANDARD_BANDS / 16;
        let band_means: Vec<f64> = fr
            .mags_db
            .chunks(chunk)
            .take(16)
            .map(|c| c.iter().sum::<f64>() / c.len() as f64)
            .collect();
        feats.extend_from_slice(&band_means);
        for w in band_means.windows(2) {
            feats.push(w[1] - w[0]);
        }
        debug_assert_eq!(feats.len(), FEATURE_LEN);
        Ok(feats)
    }
}

impl EmbeddingProvider for FrcEncoder {
    fn extract(
        &self,
        fr: &FrequencyResponse,
        target: &TargetCurve,
        device_name: &str,
        pool_index: u32,
    ) -> Result<DeviceEmbedding, EmbedError> {
        let mut feats = self.features(fr, target)?;

        let mut jitter_rng = ChaCha8Rng::from_seed(subseed(&[
            b"earcast.frc-encoder.jitter",
            device_name.as_bytes(),
            &pool_index.to_le_bytes(),
            &self.seed.to_le_bytes(),
        ]));
        for f in &mut feats {
            *f += randn(&mut jitter_rng) * self.jitter_db;
        }

        let mut vector = vec![0.0f32; EMBEDDING_DIM];
        for (d, out) in vector.iter_mut().enumerate() {
            let row = &self.projection[d * FEATURE_LEN..(d + 1) * FEATURE_LEN];
            let mut acc = 0.0f64;
            for (r, f) in row.iter().zip(&feats) {
                acc += *r as f64 * f;
            }
            *out = acc as f32;
        }
        let norm = vector.iter().map(|v| (*v as f64).powi(2)).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in &mut vector {
                *v = (*v as f64 / norm) as f32;
            }
        }
        let out = DeviceEmbedding {
            vector,
            device_name: device_name.to_string(),
            source: EmbeddingSource::FrcEncoder,
            pool_index,
        };
        out.validate()?;
        Ok(out)
    }

    fn source(&self) -> EmbeddingSource {
        EmbeddingSource::FrcEncoder
    }
}

/// Per-device train/test embedding lists.
#[derive(Debug, Clone)]
pub struct DevicePool {
    pub train: Vec<DeviceEmbedding>,
    pub test: Vec<DeviceEmbedding>,
}

/// The embedding pool across all devices.
#[derive(Debug, Clone)]
pub struct EmbeddingPool {
    pub ep_number: usize,
    pub seed: u64,
    pub source: EmbeddingSource,
    devices: BTreeMap<String, DevicePool>,
}

#[derive(Serialize, Deserialize)]
struct PoolDeviceEntry {
    device: String,
    ep_number: usize,
    indices: PoolIndices,
    source: EmbeddingSource,
    seed: u64,
}

#[derive(Serialize, Deserialize)]
struct PoolIndices {
    train: Vec<u32>,
    test: Vec<u32>,
}

#[derive(Serialize, Deserialize)]
struct PoolManifest {
    ep_number: usize,
    seed: u64,
    source: EmbeddingSource,
    devices: Vec<PoolDeviceEntry>,
}

impl EmbeddingPool {
    /// Generate `ep_number` train and 20 test embeddings for every bank
    /// device. Nothing touches disk here; use [`save`](Self::save) after.
    pub fn build(
        bank: &[DeviceProfile],
        target: &TargetCurve,
        ep_number: usize,
        provider: &dyn EmbeddingProvider,
        seed: u64,
    ) -> Result<Self, EmbedError> {
        assert!(ep_number >= 1, "ep_number must be at least 1");
        let mut devices = BTreeMap::new();
        for dev in bank {
            let mut train = Vec::with_capacity(ep_number);
            for i in 0..ep_number as u32 {
                train.push(provider.extract(&dev.frc, target, &dev.name, i)?);
            }
            let mut test = Vec::with_capacity(TEST_POOL_SIZE);
            for i in 0..TEST_POOL_SIZE as u32 {
                test.push(provider.extract(&dev.frc, target, &dev.name, TEST_POOL_BASE + i)?);
            }
            devices.insert(dev.name.clone(), DevicePool { train, test });
        }
        Ok(Self {
            ep_number,
            seed,
            source: provider.source(),
            devices,
        })
    }

    pub fn device_names(&self) -> Vec<String> {
        self.devices.keys().cloned().collect()
    }

    pub fn device(&self, name: &str) -> Result<&DevicePool, EmbedError> {
        self.devices
            .get(name)
            .ok_or_else(|| EmbedError::UnknownDevice(name.to_string()))
    }

    /// Uniform draw from a device's training list.
    pub fn sample_train_embedding<R: Rng>(
        &self,
        device_name: &str,
        rng: &mut R,
    ) -> Result<&DeviceEmbedding, EmbedError> {
        let pool = self.device(device_name)?;
        let i = rng.random_range(0..pool.train.len());
        Ok(&pool.train[i])
    }

    /// The fixed evaluation embedding: the first held-out test entry.
    pub fn eval_embedding(&self, device_name: &str) -> Result<&DeviceEmbedding, EmbedError> {
        let pool = self.device(device_name)?;
        pool.test.first().ok_or_else(|| {
            EmbedError::CorruptPool(format!("device {device_name} has no test embeddings"))
        })
    }

    /// Verify lengths, finiteness and train/test disjointness.
    pub fn validate(&self) -> Result<(), EmbedError> {
        for (name, pool) in &self.devices {
            if pool.train.len() != self.ep_number {
                return Err(EmbedError::CorruptPool(format!(
                    "device {name}: {} train entries, expected {}",
                    pool.train.len(),
                    self.ep_number
                )));
            }
            if pool.test.len() != TEST_POOL_SIZE {
                return Err(EmbedError::CorruptPool(format!(
                    "device {name}: {} test entries, expected {TEST_POOL_SIZE}",
                    pool.test.len()
                )));
            }
            let mut seen = std::collections::HashSet::new();
            for e in pool.train.iter().chain(&pool.test) {
                e.validate()?;
                if e.device_name != *name {
                    return Err(EmbedError::CorruptPool(format!(
                        "entry labeled {} filed under {name}",
                        e.device_name
                    )));
                }
                if !seen.insert(e.pool_index) {
                    return Err(EmbedError::CorruptPool(format!(
                        "device {name}: duplicate pool index {}",
                        e.pool_index
                    )));
                }
            }
            for e in &pool.train {
                if e.pool_index >= TEST_POOL_BASE {
                    return Err(EmbedError::CorruptPool(format!(
                        "device {name}: train entry in test index space ({})",
                        e.pool_index
                    )));
                }
            }
            for e in &pool.test {
                if e.pool_index < TEST_POOL_BASE {
                    return Err(EmbedError::CorruptPool(format!(
                        "device {name}: test entry in train index space ({})",
                        e.pool_index
                    )));
                }
            }
        }
        Ok(())
    }

    /// Write the pool: one little-endian f32 row file per device (train rows
    /// first, then test rows) plus `pool_manifest.json`.
    pub fn save(&self, dir: &Path) -> Result<(), EmbedError> {
        self.validate()?;
        std::fs::create_dir_all(dir)?;
        let mut entries = Vec::new();
        for (name, pool) in &self.devices {
            let path = dir.join(format!("{name}.f32"));
            let mut file = std::io::BufWriter::new(std::fs::File::create(&path)?);
            for e in pool.train.iter().chain(&pool.test) {
                for v in &e.vector {
                    file.write_all(&v.to_le_bytes())?;
                }
            }
            file.flush()?;
            entries.push(PoolDeviceEntry {
                device: name.clone(),
                ep_number: self.ep_number,
                indices: PoolIndices {
                    train: pool.train.iter().map(|e| e.pool_index).collect(),
                    test: pool.test.iter().map(|e| e.pool_index).collect(),
                },
                source: self.source,
                seed: self.seed,
            });
        }
        let manifest = PoolManifest {
            ep_number: self.ep_number,
            seed: self.seed,
            source: self.source,
            devices: entries,
        };
        std::fs::write(
            dir.join("pool_manifest.json"),
            serde_json::to_string_pretty(&manifest).expect("pool manifest serializes"),
        )?;
        Ok(())
    }

    /// Load a pool written by [`save`](Self::save), re-verifying every
    /// invariant.
    pub fn load(dir: &Path) -> Result<Self, EmbedError> {
        let manifest_path = dir.join("pool_manifest.json");
        let text = std::fs::read_to_string(&manifest_path).map_err(|e| {
            EmbedError::CorruptPool(format!("{}: {e}", manifest_path.display()))
        })?;
        let manifest: PoolManifest = serde_json::from_str(&text)
            .map_err(|e| EmbedError::CorruptPool(format!("manifest parse: {e}")))?;
        let mut devices = BTreeMap::new();
        for entry in manifest.devices {
            let path = dir.join(format!("{}.f32", entry.device));
            let mut bytes = Vec::new();
            std::fs::File::open(&path)
                .map_err(|e| EmbedError::CorruptPool(format!("{}: {e}", path.display())))?
                .read_to_end(&mut bytes)?;
            let n_rows = entry.indices.train.len() + entry.indices.test.len();
            let expected = n_rows * EMBEDDING_DIM * 4;
            if bytes.len() != expected {
                return Err(EmbedError::CorruptPool(format!(
                    "{}: {} bytes, expected {expected}",
                    path.display(),
                    bytes.len()
                )));
            }
            let mut rows = bytes.chunks_exact(EMBEDDING_DIM * 4).map(|row| {
                row.chunks_exact(4)
                    .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                    .collect::<Vec<f32>>()
            });
            let mut read_rows = |indices: &[u32]| -> Vec<DeviceEmbedding> {
                indices
                    .iter()
                    .map(|&pool_index| DeviceEmbedding {
                        vector: rows.next().unwrap(),
                        device_name: entry.device.clone(),
                        source: entry.source,
                        pool_index,
                    })
                    .collect()
            };
            let train = read_rows(&entry.indices.train);
            let test = read_rows(&entry.indices.test);
            devices.insert(entry.device, DevicePool { train, test });
        }
        let pool = Self {
            ep_number: manifest.ep_number,
            seed: manifest.seed,
            source: manifest.source,
            devices,
        };
        pool.validate()?;
        Ok(pool)
    }
}

/// Cosine similarity of two embeddings.
pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum();
    let na: f64 = a.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
    dot / (na * nb).max(1e-30)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::make_parametric_device_bank;
    use crate::frc::standard_grid;

    fn bank6() -> Vec<DeviceProfile> {
        make_parametric_device_bank(42, 6).unwrap()
    }

    #[test]
    fn encoder_is_deterministic() {
        let bank = make_parametric_device_bank(1, 2).unwrap();
        let target = TargetCurve::harman(&standard_grid());
        let enc = FrcEncoder::new(9);
        let a = enc.extract(&bank[0].frc, &target, "dev0", 3).unwrap();
        let b = enc.extract(&bank[0].frc, &target, "dev0", 3).unwrap();
        assert_eq!(a.vector, b.vector);
        // different pool index gives a different vector
        let c = enc.extract(&bank[0].frc, &target, "dev0", 4).unwrap();
        assert_ne!(a.vector, c.vector);
    }

    #[test]
    fn embedding_is_unit_norm_4096() {
        let bank = make_parametric_device_bank(2, 2).unwrap();
        let target = TargetCurve::harman(&standard_grid());
        let enc = FrcEncoder::new(0);
        let e = enc.extract(&bank[1].frc, &target, "dev1", 0).unwrap();
        assert_eq!(e.vector.len(), 4096);
        let norm: f64 = e.vector.iter().map(|v| (*v as f64).powi(2)).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-6, "norm {norm}");
    }

    #[test]
    fn encoder_rejects_wrong_grid() {
        let fr = FrequencyResponse::new(vec![100.0, 1000.0], vec![0.0, 0.0], "short").unwrap();
        let target = TargetCurve::flat(&[100.0, 1000.0]);
        let enc = FrcEncoder::new(0);
        assert!(matches!(
            enc.extract(&fr, &target, "short", 0),
            Err(EmbedError::WrongGrid { .. })
        ));
    }

    #[test]
    fn within_device_similarity_exceeds_cross_device() {
        let bank = bank6();
        let target = TargetCurve::harman(&standard_grid());
        let enc = FrcEncoder::new(0);
        let per_device: Vec<Vec<DeviceEmbedding>> = bank
            .iter()
            .map(|d| {
                (0..30)
                    .map(|i| enc.extract(&d.frc, &target, &d.name, i).unwrap())
                    .collect()
            })
            .collect();
        let mut within = Vec::new();
        let mut cross = Vec::new();
        for a in 0..per_device.len() {
            for i in 0..30 {
                for b in a..per_device.len() {
                    for j in 0..30 {
                        if (a, i) >= (b, j) {
                            continue;
                        }
                        let c = cosine(&per_device[a][i].vector, &per_device[b][j].vector);
                        if a == b {
                            within.push(c);
                        } else {
                            cross.push(c);
                        }
                    }
                }
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(
            mean(&within) > mean(&cross),
            "within {} <= cross {}",
            mean(&within),
            mean(&cross)
        );
    }

    #[test]
    fn pool_counts_and_disjointness() {
        let bank = bank6();
        let target = TargetCurve::harman(&standard_grid());
        let enc = FrcEncoder::new(5);
        for ep in [1usize, 10, 30] {
            let pool = EmbeddingPool::build(&bank, &target, ep, &enc, 5).unwrap();
            pool.validate().unwrap();
            for name in pool.device_names() {
                let d = pool.device(&name).unwrap();
                assert_eq!(d.train.len(), ep);
                assert_eq!(d.test.len(), 20);
                let train_keys: std::collections::HashSet<(String, u32)> = d
                    .train
                    .iter()
                    .map(|e| (e.device_name.clone(), e.pool_index))
                    .collect();
                for t in &d.test {
                    assert!(!train_keys.contains(&(t.device_name.clone(), t.pool_index)));
                }
            }
        }
    }

    #[test]
    fn pool_round_trips_through_disk() {
        let bank = make_parametric_device_bank(3, 2).unwrap();
        let target = TargetCurve::harman(&standard_grid());
        let enc = FrcEncoder::new(1);
        let pool = EmbeddingPool::build(&bank, &target, 3, &enc, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        pool.save(dir.path()).unwrap();
        let back = EmbeddingPool::load(dir.path()).unwrap();
        assert_eq!(back.ep_number, 3);
        assert_eq!(back.seed, 1);
        for name in pool.device_names() {
            let a = pool.device(&name).unwrap();
            let b = back.device(&name).unwrap();
            for (x, y) in a.train.iter().zip(&b.train) {
                assert_eq!(x.vector, y.vector);
                assert_eq!(x.pool_index, y.pool_index);
            }
            for (x, y) in a.test.iter().zip(&b.test) {
                assert_eq!(x.vector, y.vector);
            }
        }
    }

    #[test]
    fn load_rejects_truncated_pool() {
        let bank = make_parametric_device_bank(3, 2).unwrap();
        let target = TargetCurve::harman(&standard_grid());
        let enc = FrcEncoder::new(1);
        let pool = EmbeddingPool::build(&bank, &target, 2, &enc, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        pool.save(dir.path()).unwrap();
        // chop a vector file
        let victim = dir.path().join("dev0.f32");
        let bytes = std::fs::read(&victim).unwrap();
        std::fs::write(&victim, &bytes[..bytes.len() - 8]).unwrap();
        assert!(matches!(
            EmbeddingPool::load(dir.path()),
            Err(EmbedError::CorruptPool(_))
        ));
    }

    #[test]
    fn sampling_single_entry_pool_always_returns_it() {
        let bank = make_parametric_device_bank(4, 2).unwrap();
        let target = TargetCurve::harman(&standard_grid());
        let enc = FrcEncoder::new(2);
        let pool = EmbeddingPool::build(&bank, &target, 1, &enc, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..10 {
            let e = pool.sample_train_embedding("dev0", &mut rng).unwrap();
            assert_eq!(e.pool_index, 0);
        }
        assert!(matches!(
            pool.sample_train_embedding("nope", &mut rng),
            Err(EmbedError::UnknownDevice(_))
        ));
    }

    #[test]
    fn sampling_sequence_is_seed_reproducible() {
        let bank = make_parametric_device_bank(4, 2).unwrap();
        let target = TargetCurve::harman(&standard_grid());
        let enc = FrcEncoder::new(2);
        let pool = EmbeddingPool::build(&bank, &target, 10, &enc, 2).unwrap();
        let draw = |seed: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50)
                .map(|_| pool.sample_train_embedding("dev1", &mut rng).unwrap().pool_index)
                .collect::<Vec<u32>>()
        };
        assert_eq!(draw(3), draw(3));
        assert_ne!(draw(3), draw(4));
    }

    #[test]
    fn sampling_is_uniform_by_chi_square() {
        // 10_000 draws over EP-30; chi-square upper critical value at
        // p = 0.01 with 29 degrees of freedom is 49.588 (standard table).
        let bank = make_parametric_device_bank(6, 2).unwrap();
        let target = TargetCurve::harman(&standard_grid());
        let enc = FrcEncoder::new(3);
        let pool = EmbeddingPool::build(&bank, &target, 30, &enc, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut counts = [0usize; 30];
        let n = 10_000;
        for _ in 0..n {
            let e = pool.sample_train_embedding("dev0", &mut rng).unwrap();
            counts[e.pool_index as usize] += 1;
        }
        let expected = n as f64 / 30.0;
        let chi2: f64 = counts
            .iter()
            .map(|&o| (o as f64 - expected).powi(2) / expected)
            .sum();
        assert!(chi2 < 49.588, "chi-square {chi2} rejects uniformity");
    }
}
