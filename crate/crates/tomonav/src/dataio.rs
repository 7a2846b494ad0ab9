//! On-disk datasets.
//!
//! Episode directory layout:
//!
//! ```text
//! <episode>/
//!   meta.json        provenance (map seed, episode seed, camera)
//!   log.jsonl        one EpisodeRecord per line, frame order
//!   frame_000000.pgm ... referenced 8-bit binary PGM frames
//!   .feature_cache/<cfg-digest>/   f32 feature blobs keyed by frame digest
//! ```
//!
//! Splits are by episode, never by frame: temporally adjacent frames
//! are near-duplicates and frame-level splits would leak. With
//! `heldout_maps` the test episodes come from maps never seen in
//! training.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::nn::TrainSet;
use crate::simworld::episode::{frame_digest, EpisodeLog, EpisodeProvenance, EpisodeRecord};
use crate::tomography::{featurize, TomoConfig};

pub fn save_episode(log: &EpisodeLog, dir: &Path) -> Result<()> {
    log.validate()?;
    if log.frames.len() != log.records.len() {
        return Err(Error::InvalidInput("cannot save an episode without frames".into()));
    }
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&log.provenance)?)?;
    let mut jsonl = Vec::new();
    for (record, frame) in log.records.iter().zip(&log.frames) {
        frame.save_pgm(&dir.join(&record.frame))?;
        serde_json::to_writer(&mut jsonl, record)?;
        jsonl.push(b'\n');
    }
    std::fs::write(dir.join("log.jsonl"), jsonl)?;
    Ok(())
}

fn read_records(dir: &Path) -> Result<(EpisodeProvenance, Vec<EpisodeRecord>)> {
    let meta: EpisodeProvenance =
        serde_json::from_str(&std::fs::read_to_string(dir.join("meta.json"))?)?;
    let file = std::fs::File::open(dir.join("log.jsonl"))?;
    let mut records = Vec::new();
    for (index, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: EpisodeRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Parse { index, message: e.to_string() })?;
        records.push(record);
    }
    Ok((meta, records))
}

/// Load an episode's metadata and records, verifying the schema and
/// that every referenced frame file exists.
pub fn load_episode_meta(dir: &Path) -> Result<EpisodeLog> {
    let (provenance, records) = read_records(dir)?;
    for (index, r) in records.iter().enumerate() {
        if !dir.join(&r.frame).is_file() {
            return Err(Error::Parse { index, message: format!("missing frame file {}", r.frame) });
        }
    }
    let log = EpisodeLog { provenance, records, frames: Vec::new() };
    log.validate()?;
    Ok(log)
}

/// Full load: metadata, records and pixel data, with every frame's
/// digest re-verified.
pub fn load_episode(dir: &Path) -> Result<EpisodeLog> {
    let mut log = load_episode_meta(dir)?;
    let mut frames = Vec::with_capacity(log.records.len());
    for (index, r) in log.records.iter().enumerate() {
        let img = Image::load_pgm(&dir.join(&r.frame))
            .map_err(|e| Error::Parse { index, message: e.to_string() })?;
        if frame_digest(&img) != r.digest {
            return Err(Error::Parse {
                index,
                message: format!("frame {} does not match its recorded digest", r.frame),
            });
        }
        frames.push(img);
    }
    log.frames = frames;
    Ok(log)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub seed: u64,
    /// Require test maps to be disjoint from train/val maps.
    pub heldout_maps: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { train: 0.8, val: 0.1, test: 0.1, seed: 0, heldout_maps: false }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        for f in [self.train, self.val, self.test] {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::InvalidSplit(format!("fraction {f} outside [0, 1]")));
            }
        }
        if (self.train + self.val + self.test - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidSplit("fractions must sum to 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitTag {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeRef {
    pub dir: PathBuf,
    pub map_seed: u64,
    pub episode_seed: u64,
    pub frames: usize,
}

/// In-memory feature dataset for one split.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub split: SplitTag,
    pub feature_size: usize,
    pub features: Vec<Vec<f32>>,
    pub targets: Vec<[f64; 5]>,
    pub episodes: Vec<EpisodeRef>,
    pub config_digest: String,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn to_train_set(&self) -> TrainSet {
        TrainSet {
            input_size: self.feature_size,
            features: self.features.clone(),
            targets: self.targets.clone(),
        }
    }
}

pub fn tomo_config_digest(cfg: &TomoConfig) -> String {
    let json = serde_json::to_string(cfg).expect("tomo config serializes");
    let mut hasher = Sha256::new();
    hasher.update(json.as_bytes());
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Episode-level split by seeded shuffle with largest-remainder
/// apportioning; exact for e.g. 10 episodes at (0.8, 0.1, 0.1).
fn split_counts(n: usize, spec: &SplitSpec) -> [usize; 3] {
    let fracs = [spec.train, spec.val, spec.test];
    let mut counts = [0usize; 3];
    let mut remainders: Vec<(usize, f64)> = Vec::new();
    let mut assigned = 0usize;
    for (i, f) in fracs.iter().enumerate() {
        let exact = f * n as f64;
        counts[i] = exact.floor() as usize;
        assigned += counts[i];
        remainders.push((i, exact - exact.floor()));
    }
    remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    for (i, _) in remainders.into_iter().take(n - assigned) {
        counts[i] += 1;
    }
    counts
}

/// Assign episode indices to (train, val, test).
fn assign_split(refs: &[EpisodeRef], spec: &SplitSpec) -> Result<[Vec<usize>; 3]> {
    spec.validate()?;
    let n = refs.len();
    let counts = split_counts(n, spec);
    for (frac, count) in [(spec.train, counts[0]), (spec.val, counts[1]), (spec.test, counts[2])] {
        if frac > 0.0 && count == 0 {
            return Err(Error::InvalidSplit(format!(
                "{n} episodes cannot honor a nonzero {frac} fraction"
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    if spec.heldout_maps {
        let mut seeds: Vec<u64> = refs.iter().map(|r| r.map_seed).collect();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() < 2 {
            return Err(Error::InvalidSplit(
                "heldout_maps needs episodes from at least two maps".into(),
            ));
        }
        seeds.shuffle(&mut rng);
        let mut test = Vec::new();
        let mut held = std::collections::HashSet::new();
        for seed in seeds {
            if test.len() >= counts[2] {
                break;
            }
            held.insert(seed);
            test.extend(
                refs.iter().enumerate().filter(|(_, r)| r.map_seed == seed).map(|(i, _)| i),
            );
        }
        let mut rest: Vec<usize> =
            (0..n).filter(|i| !held.contains(&refs[*i].map_seed)).collect();
        if rest.is_empty() {
            return Err(Error::InvalidSplit("holding out maps leaves no training episodes".into()));
        }
        rest.shuffle(&mut rng);
        let val_count = counts[1].min(rest.len().saturating_sub(1));
        let val = rest.split_off(rest.len() - val_count);
        Ok([rest, val, test])
    } else {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let train: Vec<usize> = order[..counts[0]].to_vec();
        let val: Vec<usize> = order[counts[0]..counts[0] + counts[1]].to_vec();
        let test: Vec<usize> = order[counts[0] + counts[1]..].to_vec();
        Ok([train, val, test])
    }
}

/// Build (train, val, test) feature datasets from episode directories.
/// Features are computed once per (frame digest, config digest) and
/// cached on disk next to each episode.
pub fn build_dataset(
    episode_dirs: &[PathBuf],
    spec: &SplitSpec,
    tomo: &TomoConfig,
) -> Result<(Dataset, Dataset, Dataset)> {
    if episode_dirs.is_empty() {
        return Err(Error::InvalidSplit("no episodes given".into()));
    }
    let mut refs = Vec::with_capacity(episode_dirs.len());
    for dir in episode_dirs {
        let log = load_episode_meta(dir)?;
        refs.push(EpisodeRef {
            dir: dir.clone(),
            map_seed: log.provenance.map_seed,
            episode_seed: log.provenance.episode_seed,
            frames: log.records.len(),
        });
    }
    let [train_idx, val_idx, test_idx] = assign_split(&refs, spec)?;
    let digest = tomo_config_digest(tomo);

    let mut build = |indices: &[usize], split: SplitTag| -> Result<Dataset> {
        let mut ds = Dataset {
            split,
            feature_size: tomo.output_size,
            features: Vec::new(),
            targets: Vec::new(),
            episodes: indices.iter().map(|&i| refs[i].clone()).collect(),
            config_digest: digest.clone(),
        };
        let mut sorted: Vec<usize> = indices.to_vec();
        sorted.sort_unstable();
        for &i in &sorted {
            let cache = FeatureCache::open(&refs[i].dir, tomo)?;
            let log = load_episode_meta(&refs[i].dir)?;
            for record in &log.records {
                let feature = cache.get_or_compute(&refs[i].dir, record)?;
                ds.features.push(feature);
                ds.targets.push(record.target);
            }
        }
        Ok(ds)
    };

    Ok((build(&train_idx, SplitTag::Train)?, build(&val_idx, SplitTag::Val)?, build(&test_idx, SplitTag::Test)?))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CacheIndex {
    config_digest: String,
    config: TomoConfig,
    output_size: usize,
}

/// Per-episode feature cache: one f32 blob per frame, keyed by the
/// frame digest, under a config-digest directory. Writes go through a
/// temp file and an atomic rename.
pub struct FeatureCache {
    dir: PathBuf,
    config: TomoConfig,
    expected_len: usize,
    hits: std::cell::Cell<usize>,
    misses: std::cell::Cell<usize>,
}

impl FeatureCache {
    pub fn open(episode_dir: &Path, cfg: &TomoConfig) -> Result<Self> {
        cfg.validate()?;
        let digest = tomo_config_digest(cfg);
        let dir = episode_dir.join(".feature_cache").join(&digest[..16]);
        std::fs::create_dir_all(&dir)?;
        let index_path = dir.join("index.json");
        if !index_path.exists() {
            let index = CacheIndex {
                config_digest: digest.clone(),
                config: cfg.clone(),
                output_size: cfg.output_size,
            };
            std::fs::write(&index_path, serde_json::to_string_pretty(&index)?)?;
        } else {
            let index: CacheIndex = serde_json::from_str(&std::fs::read_to_string(&index_path)?)?;
            if index.config_digest != digest {
                return Err(Error::StaleCache("cache index belongs to another config".into()));
            }
        }
        Ok(Self {
            dir,
            config: cfg.clone(),
            expected_len: cfg.output_size * cfg.output_size,
            hits: std::cell::Cell::new(0),
            misses: std::cell::Cell::new(0),
        })
    }

    pub fn stats(&self) -> (usize, usize) {
        (self.hits.get(), self.misses.get())
    }

    fn blob_path(&self, frame_digest: &str) -> PathBuf {
        self.dir.join(format!("{frame_digest}.f32"))
    }

    /// Cached feature for a frame digest; `StaleCache` when the blob
    /// exists but is unreadable or the wrong size.
    pub fn get(&self, frame_digest: &str) -> Result<Option<Vec<f32>>> {
        let path = self.blob_path(frame_digest);
        if !path.exists() {
            return Ok(None);
        }
        let mut bytes = Vec::new();
        std::fs::File::open(&path)?.read_to_end(&mut bytes)?;
        if bytes.len() != self.expected_len * 4 {
            return Err(Error::StaleCache(format!(
                "blob {frame_digest} has {} bytes, expected {}",
                bytes.len(),
                self.expected_len * 4
            )));
        }
        let mut out = Vec::with_capacity(self.expected_len);
        for chunk in bytes.chunks_exact(4) {
            out.push(f32::from_le_bytes(chunk.try_into().unwrap()));
        }
        Ok(Some(out))
    }

    pub fn put(&self, frame_digest: &str, data: &[f32]) -> Result<()> {
        let path = self.blob_path(frame_digest);
        let tmp = path.with_extension("tmp");
        {
            let mut f = std::fs::File::create(&tmp)?;
            for v in data {
                f.write_all(&v.to_le_bytes())?;
            }
            f.flush()?;
        }
        std::fs::rename(&tmp, &path)?;
        Ok(())
    }

    /// Cache hit or recompute; stale blobs are recomputed and
    /// rewritten.
    pub fn get_or_compute(&self, episode_dir: &Path, record: &EpisodeRecord) -> Result<Vec<f32>> {
        match self.get(&record.digest) {
            Ok(Some(feature)) => {
                self.hits.set(self.hits.get() + 1);
                return Ok(feature);
            }
            Ok(None) => {}
            Err(Error::StaleCache(_)) => {}
            Err(e) => return Err(e),
        }
        self.misses.set(self.misses.get() + 1);
        let img = Image::load_pgm(&episode_dir.join(&record.frame))?;
        let feature = featurize(&img, &self.config)?;
        let data: Vec<f32> = feature.data().iter().map(|&v| v as f32).collect();
        self.put(&record.digest, &data)?;
        Ok(data)
    }
}
