//! Demonstration episodes: per-frame (image, expert action, pose,
//! timestamp) records. In memory the rendered frames ride alongside
//! the records; on disk an episode is a directory of PGM frames plus
//! `log.jsonl` (see the dataio module).

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::simworld::{CameraModel, DronePose};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeRecord {
    pub frame_id: u64,
    /// Frame file name relative to the episode directory.
    pub frame: String,
    /// SHA-256 of the quantized frame (dimensions + 8-bit pixels).
    pub digest: String,
    /// Expert targets: [forward, yaw_left, yaw_right, halt, junction].
    pub target: [f64; 5],
    pub pose: DronePose,
    /// Seconds since episode start; strictly increasing.
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeProvenance {
    /// Seed of the map the episode was flown on.
    pub map_seed: u64,
    pub episode_seed: u64,
    pub camera: CameraModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub provenance: EpisodeProvenance,
    pub records: Vec<EpisodeRecord>,
    /// Parallel to `records` for in-memory episodes; empty after a
    /// metadata-only load.
    pub frames: Vec<Image>,
}

/// Digest of the quantized (on-disk) form of a frame, hex encoded.
pub fn frame_digest(img: &Image) -> String {
    let mut hasher = Sha256::new();
    hasher.update((img.width() as u64).to_le_bytes());
    hasher.update((img.height() as u64).to_le_bytes());
    hasher.update(&img.to_bytes_u8());
    let out = hasher.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}

impl EpisodeLog {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Schema checks shared by the writer and the loader; errors name
    /// the first offending record.
    pub fn validate(&self) -> Result<()> {
        let mut prev_t = f64::NEG_INFINITY;
        for (i, r) in self.records.iter().enumerate() {
            if r.t <= prev_t {
                return Err(Error::Parse {
                    index: i,
                    message: format!("timestamp {} does not increase past {prev_t}", r.t),
                });
            }
            prev_t = r.t;
            for &v in &r.target {
                if v != 0.0 && v != 1.0 {
                    return Err(Error::Parse {
                        index: i,
                        message: format!("target component {v} is not binary"),
                    });
                }
            }
            if (r.pose.altitude - crate::simworld::ALTITUDE_M).abs() > 1e-9 {
                return Err(Error::Parse {
                    index: i,
                    message: "altitude must stay at the fixed flight level".into(),
                });
            }
        }
        if !self.frames.is_empty() && self.frames.len() != self.records.len() {
            return Err(Error::InvalidInput("frame/record count mismatch".into()));
        }
        Ok(())
    }
}
