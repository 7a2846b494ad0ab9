//! Canonical run configuration: one JSON document covering the
//! featurizer, network preset, training hyperparameters, controller
//! constants, world parameters and seeds. Unknown keys are rejected;
//! artifact-producing commands write the fully resolved form next to
//! their outputs so any run can be reproduced from its directory.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataio::SplitSpec;
use crate::error::{Error, Result};
use crate::navigation::NavConfig;
use crate::nn::{NetworkSpec, TrainHyper};
use crate::simworld::{CameraModel, DemoParams, MapParams, OracleParams};
use crate::tomography::TomoConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Seeds {
    pub world: u64,
    pub demo: u64,
    pub network: u64,
    pub route: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self { world: 1, demo: 0, network: 7, route: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub tomo: TomoConfig,
    /// Network preset name: "full" or "tiny".
    pub preset: String,
    pub train: TrainHyper,
    pub nav: NavConfig,
    pub world: MapParams,
    pub camera: CameraModel,
    pub oracle: OracleParams,
    pub demo: DemoParams,
    pub split: SplitSpec,
    pub seeds: Seeds,
    /// Demonstration episodes per `demo` invocation.
    pub episodes: usize,
    pub frames_per_episode: usize,
    pub route_min_junctions: usize,
    pub route_min_length_m: f64,
    pub route_max_length_m: f64,
    pub max_rollout_frames: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            tomo: TomoConfig::default(),
            preset: "full".into(),
            train: TrainHyper::default(),
            nav: NavConfig::default(),
            world: MapParams::default(),
            camera: CameraModel::default(),
            oracle: OracleParams::default(),
            demo: DemoParams::default(),
            split: SplitSpec::default(),
            seeds: Seeds::default(),
            episodes: 4,
            frames_per_episode: 2000,
            route_min_junctions: 3,
            route_min_length_m: 350.0,
            route_max_length_m: 700.0,
            max_rollout_frames: 9000,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.tomo.validate()?;
        self.nav.validate()?;
        self.world.validate()?;
        self.camera.validate()?;
        self.split.validate()?;
        self.network_spec()?.validate()?;
        if self.episodes == 0 || self.frames_per_episode == 0 {
            return Err(Error::InvalidInput("episodes and frames must be nonzero".into()));
        }
        Ok(())
    }

    pub fn network_spec(&self) -> Result<NetworkSpec> {
        NetworkSpec::preset(&self.preset)
            .ok_or_else(|| Error::InvalidInput(format!("unknown network preset '{}'", self.preset)))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("run config serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}
