//! Dataset plumbing: manifests, train/val/test splits and windowed pair
//! iteration over (input, device-rendered) audio.
//!
//! Disk layout of a paired dataset rooted at `root`:
//!
//! ```text
//! root/
//!   manifest.json          file list, splits, seeds, segment counts
//!   input/<name>.wav       the ingested digital inputs
//!   <device>/<name>.wav    the same files as played by each device
//!   frc/<device>.csv       response curve of each device
//! ```
//!
//! Splits are assigned at file granularity so no file contributes to two
//! splits, and windows never cross file boundaries.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio;
use crate::error::DataError;

/// Default training segment length, seconds.
pub const SEGMENT_S: f64 = 5.0;
/// Default window stride, seconds.
pub const STRIDE_S: f64 = 0.5;

/// A windowed slice of one audio file.
#[derive(Debug, Clone)]
pub struct AudioSegment {
    pub samples: Vec<f32>,
    pub sample_rate_hz: u32,
    pub source_file: String,
    pub offset_s: f64,
}

impl AudioSegment {
    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// Per-device minute budgets for the three splits.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_minutes: f64,
    pub val_minutes: f64,
    pub test_minutes: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_minutes: 60.0,
            val_minutes: 15.0,
            test_minutes: 25.0,
        }
    }
}

impl SplitSpec {
    /// Scaled-down budgets that keep a full pipeline run in the minutes
    /// range on one machine.
    pub fn desk() -> Self {
        Self {
            train_minutes: 6.0,
            val_minutes: 1.5,
            test_minutes: 2.5,
        }
    }

    pub fn total_minutes(&self) -> f64 {
        self.train_minutes + self.val_minutes + self.test_minutes
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub n_samples: u64,
    pub duration_s: f64,
    pub split: Option<Split>,
}

/// Totals of (file, offset, device) samples per split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentCounts {
    pub train: u64,
    pub val: u64,
    pub test: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub sample_rate_hz: u32,
    pub devices: Vec<String>,
    pub files: Vec<FileEntry>,
    pub synthesis_seed: u64,
    pub split_seed: Option<u64>,
    pub segment_s: f64,
    pub stride_s: f64,
    pub segment_counts: Option<SegmentCounts>,
    pub warnings: Vec<String>,
}

impl DatasetManifest {
    pub fn new(sample_rate_hz: u32, devices: Vec<String>, synthesis_seed: u64) -> Self {
        Self {
            sample_rate_hz,
            devices,
            files: Vec::new(),
            synthesis_seed,
            split_seed: None,
            segment_s: SEGMENT_S,
            stride_s: STRIDE_S,
            segment_counts: None,
            warnings: Vec::new(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        let text = std::fs::read_to_string(path).map_err(|e| DataError::Parse {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        let manifest: Self = serde_json::from_str(&text).map_err(|e| DataError::Parse {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn files_in(&self, split: Split) -> impl Iterator<Item = &FileEntry> {
        self.files.iter().filter(move |f| f.split == Some(split))
    }

    /// Recompute the per-split totals from the file table and windowing
    /// parameters. One sample is one (file, offset, device) triple.
    pub fn recount_segments(&self) -> SegmentCounts {
        let mut counts = SegmentCounts {
            train: 0,
            val: 0,
            test: 0,
        };
        let n_dev = self.devices.len() as u64;
        for f in &self.files {
            let windows =
                window_offsets(f.duration_s, self.segment_s, self.stride_s).len() as u64;
            match f.split {
                Some(Split::Train) => counts.train += windows * n_dev,
                Some(Split::Val) => counts.val += windows * n_dev,
                Some(Split::Test) => counts.test += windows * n_dev,
                None => {}
            }
        }
        counts
    }

    /// Check internal consistency: file names unique, recorded counts (when
    /// present) match a recount.
    pub fn validate(&self) -> Result<(), DataError> {
        let mut seen = std::collections::HashSet::new();
        for f in &self.files {
            if !seen.insert(&f.name) {
                return Err(DataError::Invalid(format!("duplicate file {}", f.name)));
            }
        }
        if let Some(recorded) = self.segment_counts {
            let actual = self.recount_segments();
            if recorded != actual {
                return Err(DataError::Invalid(format!(
                    "segment counts {recorded:?} do not match recount {actual:?}"
                )));
            }
        }
        Ok(())
    }
}

/// Window start offsets `k·stride` for windows that fit entirely inside a
/// file of the given duration. A file shorter than one segment yields none.
pub fn window_offsets(duration_s: f64, segment_s: f64, stride_s: f64) -> Vec<f64> {
    assert!(segment_s > 0.0 && stride_s > 0.0);
    if duration_s + 1e-9 < segment_s {
        return Vec::new();
    }
    let k_max = ((duration_s - segment_s) / stride_s + 1e-9).floor() as usize;
    (0..=k_max).map(|k| k as f64 * stride_s).collect()
}

/// Assign files to splits by filling each minute budget greedily in
/// seeded-shuffled order, stopping at the whole file nearest the budget.
/// Leftover files stay unassigned.
pub fn build_splits(
    manifest: &DatasetManifest,
    spec: &SplitSpec,
    seed: u64,
) -> Result<DatasetManifest, DataError> {
    let total_s: f64 = manifest.files.iter().map(|f| f.duration_s).sum();
    let needed_s = spec.total_minutes() * 60.0;
    if total_s + 1e-9 < needed_s {
        let mut report = String::new();
        for device in &manifest.devices {
            report.push_str(&format!(
                "  {device}: have {:.1} min, need {:.1} min (short {:.1} min)\n",
                total_s / 60.0,
                needed_s / 60.0,
                (needed_s - total_s) / 60.0
            ));
        }
        return Err(DataError::InsufficientAudio { report });
    }

    let mut order: Vec<usize> = (0..manifest.files.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let mut out = manifest.clone();
    for f in &mut out.files {
        f.split = None;
    }
    let budgets = [
        (Split::Train, spec.train_minutes * 60.0),
        (Split::Val, spec.val_minutes * 60.0),
        (Split::Test, spec.test_minutes * 60.0),
    ];
    let mut cursor = 0usize;
    for (split, budget_s) in budgets {
        let mut acc = 0.0f64;
        while cursor < order.len() {
            let f = &mut out.files[order[cursor]];
            let with = acc + f.duration_s;
            // take the file only if it moves us closer to the budget
            if (with - budget_s).abs() <= (acc - budget_s).abs() + 1e-9 {
                f.split = Some(split);
                acc = with;
                cursor += 1;
            } else {
                break;
            }
        }
    }
    out.split_seed = Some(seed);
    out.segment_counts = Some(out.recount_segments());
    Ok(out)
}

/// Reference to one training sample before audio is loaded.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRef {
    pub file: String,
    pub offset_s: f64,
    pub device: String,
}

/// All samples of a split, in deterministic (device, file, offset) order.
/// Pass `device` to restrict to a single device.
pub fn sample_refs(
    manifest: &DatasetManifest,
    split: Split,
    device: Option<&str>,
) -> Result<Vec<SampleRef>, DataError> {
    let devices: Vec<&String> = match device {
        Some(d) => {
            let found = manifest.devices.iter().find(|x| x.as_str() == d);
            vec![found.ok_or_else(|| DataError::UnknownDevice(d.to_string()))?]
        }
        None => manifest.devices.iter().collect(),
    };
    let mut refs = Vec::new();
    for dev in devices {
        for f in manifest.files_in(split) {
            for off in window_offsets(f.duration_s, manifest.segment_s, manifest.stride_s) {
                refs.push(SampleRef {
                    file: f.name.clone(),
                    offset_s: off,
                    device: dev.clone(),
                });
            }
        }
    }
    Ok(refs)
}

/// One aligned batch of (input, target) windows.
#[derive(Debug)]
pub struct PairBatch {
    pub inputs: Vec<AudioSegment>,
    pub targets: Vec<AudioSegment>,
    pub device_names: Vec<String>,
}

impl PairBatch {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// Small FIFO cache of decoded wav files.
struct WavCache {
    root: PathBuf,
    entries: HashMap<PathBuf, std::rc::Rc<Vec<f32>>>,
    order: Vec<PathBuf>,
    cap: usize,
}

impl WavCache {
    fn new(root: &Path, cap: usize) -> Self {
        Self {
            root: root.to_path_buf(),
            entries: HashMap::new(),
            order: Vec::new(),
            cap,
        }
    }

    fn get(&mut self, rel: &Path) -> Result<std::rc::Rc<Vec<f32>>, DataError> {
        let full = self.root.join(rel);
        if let Some(hit) = self.entries.get(&full) {
            return Ok(hit.clone());
        }
        if !full.is_file() {
            let name = rel.to_string_lossy().into_owned();
            let device = rel
                .parent()
                .map(|p| p.to_string_lossy().into_owned())
                .unwrap_or_default();
            return Err(DataError::MissingTarget { file: name, device });
        }
        let (samples, _sr) = audio::read_wav_mono(&full)?;
        let rc = std::rc::Rc::new(samples);
        if self.order.len() >= self.cap {
            let evict = self.order.remove(0);
            self.entries.remove(&evict);
        }
        self.order.push(full.clone());
        self.entries.insert(full, rc.clone());
        Ok(rc)
    }
}

/// Iterator yielding aligned (input, target) batches for a split. Order is
/// a seeded shuffle; the final partial batch is yielded.
pub struct PairIterator {
    refs: Vec<SampleRef>,
    cursor: usize,
    batch_size: usize,
    cache: WavCache,
    segment_s: f64,
    sample_rate_hz: u32,
}

impl PairIterator {
    pub fn new(
        root: &Path,
        manifest: &DatasetManifest,
        mut refs: Vec<SampleRef>,
        batch_size: usize,
        shuffle_seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed);
        refs.shuffle(&mut rng);
        Self {
            refs,
            cursor: 0,
            batch_size: batch_size.max(1),
            cache: WavCache::new(root, 16),
            segment_s: manifest.segment_s,
            sample_rate_hz: manifest.sample_rate_hz,
        }
    }

    fn cut(&self, samples: &[f32], r: &SampleRef, file: &str) -> AudioSegment {
        let sr = self.sample_rate_hz;
        let start = (r.offset_s * sr as f64).round() as usize;
        let len = (self.segment_s * sr as f64).round() as usize;
        let end = (start + len).min(samples.len());
        AudioSegment {
            samples: samples[start.min(samples.len())..end].to_vec(),
            sample_rate_hz: sr,
            source_file: file.to_string(),
            offset_s: r.offset_s,
        }
    }
}

impl Iterator for PairIterator {
    type Item = Result<PairBatch, DataError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.cursor >= self.refs.len() {
            return None;
        }
        let end = (self.cursor + self.batch_size).min(self.refs.len());
        let mut batch = PairBatch {
            inputs: Vec::with_capacity(end - self.cursor),
            targets: Vec::with_capacity(end - self.cursor),
            device_names: Vec::with_capacity(end - self.cursor),
        };
        for i in self.cursor..end {
            let r = self.refs[i].clone();
            let input = match self.cache.get(&Path::new("input").join(&r.file)) {
                Ok(s) => s,
                Err(e) => return Some(Err(e)),
            };
            let target = match self.cache.get(&Path::new(&r.device).join(&r.file)) {
                Ok(s) => s,
                Err(e) => return Some(Err(e)),
            };
            batch.inputs.push(self.cut(&input, &r, &r.file));
            batch.targets.push(self.cut(&target, &r, &r.file));
            batch.device_names.push(r.device.clone());
        }
        self.cursor = end;
        Some(Ok(batch))
    }
}

/// Sorted list of `.wav` files directly inside a directory.
pub fn list_wavs(dir: &Path) -> Result<Vec<PathBuf>, DataError> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_counts_match_closed_form() {
        // floor((30 - 5)/0.5) + 1 = 51
        assert_eq!(window_offsets(30.0, 5.0, 0.5).len(), 51);
        // shorter than one segment
        assert_eq!(window_offsets(4.0, 5.0, 0.5).len(), 0);
        // exactly one segment
        let offs = window_offsets(5.0, 5.0, 0.5);
        assert_eq!(offs, vec![0.0]);
    }

    #[test]
    fn window_offsets_are_stride_multiples() {
        let offs = window_offsets(12.3, 5.0, 0.5);
        for (k, &o) in offs.iter().enumerate() {
            assert!((o - k as f64 * 0.5).abs() < 1e-12);
        }
        // last window must fit inside the file
        assert!(offs.last().unwrap() + 5.0 <= 12.3 + 1e-9);
    }

    fn manifest_with_files(n: usize, duration_s: f64) -> DatasetManifest {
        let mut m = DatasetManifest::new(
            audio::SAMPLE_RATE,
            vec!["dev0".into(), "dev1".into()],
            0,
        );
        for i in 0..n {
            m.files.push(FileEntry {
                name: format!("f{i:03}.wav"),
                n_samples: (duration_s * audio::SAMPLE_RATE as f64) as u64,
                duration_s,
                split: None,
            });
        }
        m
    }

    #[test]
    fn splits_fill_to_whole_files() {
        // 20 files of 30 s; budgets 6 / 1.5 / 2.5 minutes -> 12 / 3 / 5 files
        let m = manifest_with_files(20, 30.0);
        let spec = SplitSpec {
            train_minutes: 6.0,
            val_minutes: 1.5,
            test_minutes: 2.5,
        };
        let out = build_splits(&m, &spec, 9).unwrap();
        let count = |s| out.files_in(s).count();
        assert_eq!(count(Split::Train), 12);
        assert_eq!(count(Split::Val), 3);
        assert_eq!(count(Split::Test), 5);
        // every file in exactly one split (or none)
        let assigned = out.files.iter().filter(|f| f.split.is_some()).count();
        assert_eq!(assigned, 20);
    }

    #[test]
    fn splits_are_deterministic() {
        let m = manifest_with_files(24, 30.0);
        let spec = SplitSpec::desk();
        let a = build_splits(&m, &spec, 1234).unwrap();
        let b = build_splits(&m, &spec, 1234).unwrap();
        let splits = |m: &DatasetManifest| {
            m.files
                .iter()
                .map(|f| (f.name.clone(), f.split))
                .collect::<Vec<_>>()
        };
        assert_eq!(splits(&a), splits(&b));
        let c = build_splits(&m, &spec, 99).unwrap();
        assert_ne!(splits(&a), splits(&c));
    }

    #[test]
    fn splits_reject_insufficient_audio() {
        let m = manifest_with_files(2, 30.0);
        let err = build_splits(&m, &SplitSpec::desk(), 0).unwrap_err();
        match err {
            DataError::InsufficientAudio { report } => {
                assert!(report.contains("dev0"));
                assert!(report.contains("short"));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn segment_counts_validate() {
        let m = manifest_with_files(20, 30.0);
        let out = build_splits(&m, &SplitSpec::desk(), 7).unwrap();
        // 12 files * 51 windows * 2 devices
        assert_eq!(out.segment_counts.unwrap().train, 12 * 51 * 2);
        out.validate().unwrap();
        let mut broken = out.clone();
        broken.segment_counts = Some(SegmentCounts {
            train: 1,
            val: 1,
            test: 1,
        });
        assert!(broken.validate().is_err());
    }

    #[test]
    fn paper_scale_counts_noted() {
        // With the published protocol (60/15/25 minutes of 30 s files, 5 s
        // windows at 0.5 s stride over six devices) the closed form gives
        // 120*51*6 = 36720 train samples, not the published 42552; the
        // original corpus evidently had different file granularity. The
        // formula itself is what we implement.
        let m = DatasetManifest {
            devices: (0..6).map(|i| format!("dev{i}")).collect(),
            ..manifest_with_files(200, 30.0)
        };
        let out = build_splits(&m, &SplitSpec::default(), 0).unwrap();
        assert_eq!(out.segment_counts.unwrap().train, 120 * 51 * 6);
    }

    #[test]
    fn batch_sizes_with_final_partial() {
        // 100 refs at batch 32 -> 32, 32, 32, 4
        let refs: Vec<SampleRef> = (0..100)
            .map(|i| SampleRef {
                file: format!("f{i}.wav"),
                offset_s: 0.0,
                device: "dev0".into(),
            })
            .collect();
        // no files on disk needed: we only check the batching arithmetic
        let m = manifest_with_files(0, 30.0);
        let it = PairIterator::new(Path::new("/nonexistent"), &m, refs, 32, 0);
        let mut sizes = Vec::new();
        let mut cursor = it.cursor;
        let total = it.refs.len();
        while cursor < total {
            let end = (cursor + it.batch_size).min(total);
            sizes.push(end - cursor);
            cursor = end;
        }
        assert_eq!(sizes, vec![32, 32, 32, 4]);
    }

    #[test]
    fn shuffle_is_seeded() {
        let m = manifest_with_files(4, 30.0);
        let mut m = m;
        for f in &mut m.files {
            f.split = Some(Split::Train);
        }
        let refs = sample_refs(&m, Split::Train, None).unwrap();
        assert_eq!(refs.len(), 4 * 51 * 2);
        let order =
            |seed: u64| PairIterator::new(Path::new("/x"), &m, refs.clone(), 8, seed).refs;
        assert_eq!(order(5), order(5));
        assert_ne!(order(5), order(6));
    }

    #[test]
    fn sample_refs_rejects_unknown_device() {
        let m = manifest_with_files(2, 30.0);
        assert!(matches!(
            sample_refs(&m, Split::Train, Some("nope")),
            Err(DataError::UnknownDevice(_))
        ));
    }
}
