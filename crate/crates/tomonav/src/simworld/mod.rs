//! Deterministic synthetic road world: seeded map generation, a
//! top-down orthographic camera, a pure-pursuit scripted expert for
//! demonstrations, unicycle dynamics, and closed-loop rollouts.
//!
//! Everything is a pure function of (inputs, seeds); two runs with the
//! same configuration produce bitwise identical logs and reports.

pub mod episode;
pub mod map;
pub mod oracle;
pub mod render;
pub mod rollout;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fixed flight altitude above ground, meters.
pub const ALTITUDE_M: f64 = 2.5;

/// Control/camera frame period: 30 Hz.
pub const FRAME_DT: f64 = 1.0 / 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DronePose {
    pub x: f64,
    pub y: f64,
    /// Heading, radians counter-clockwise from +x.
    pub heading: f64,
    /// Constant by construction.
    pub altitude: f64,
}

impl DronePose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self { x, y, heading, altitude: ALTITUDE_M }
    }

    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    pub fn heading_vector(&self) -> [f64; 2] {
        [self.heading.cos(), self.heading.sin()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShadowMode {
    Off,
    Soft,
    Sharp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CameraModel {
    /// Meters viewed per side of the square footprint.
    pub footprint_m: f64,
    /// Output resolution in pixels per side.
    pub resolution: usize,
    /// Speckle noise amplitude (standard deviation of the bounded
    /// uniform noise added per pixel).
    pub noise_sigma: f64,
    pub shadow_mode: ShadowMode,
}

impl Default for CameraModel {
    fn default() -> Self {
        Self { footprint_m: 8.0, resolution: 100, noise_sigma: 0.02, shadow_mode: ShadowMode::Off }
    }
}

impl CameraModel {
    pub fn validate(&self) -> Result<()> {
        if self.resolution < 16 {
            return Err(Error::InvalidInput(format!(
                "camera resolution must be >= 16, got {}",
                self.resolution
            )));
        }
        if !(self.footprint_m > 0.0) {
            return Err(Error::InvalidInput("camera footprint must be positive".into()));
        }
        if !(0.0..=0.15).contains(&self.noise_sigma) {
            return Err(Error::InvalidInput(
                "noise sigma must be in [0, 0.15] so background stays above 0.5".into(),
            ));
        }
        Ok(())
    }
}

pub use episode::{EpisodeLog, EpisodeProvenance, EpisodeRecord};
pub use map::{find_route, generate_map, plan_route, JunctionNode, MapParams, RoadGraph, RoadMap, RoutePath};
pub use oracle::{oracle_policy, step_dynamics, OracleParams};
pub use render::render_view;
pub use rollout::{collect_demonstrations, rollout, DemoParams, RolloutPolicy, RolloutReport};
