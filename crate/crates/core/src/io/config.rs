use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{FragmentConfig, IoError};
use crate::init::PipelineConfig;
use crate::matching::MatchConfig;
use crate::sim::{FrontEndConfig, NoiseConfig};

/// Simulated recordings used when no dataset is configured.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub sequences: usize,
    /// Seconds per sequence.
    pub duration: f64,
    pub landmarks: usize,
    pub camera_rate: f64,
    pub seed: u64,
    pub noise: NoiseConfig,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            sequences: 4,
            duration: 30.0,
            landmarks: 200,
            camera_rate: 20.0,
            seed: 0,
            noise: NoiseConfig::realistic(1.0, 0),
        }
    }
}

/// Every knob of a benchmark run, read from one TOML file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    /// EuRoC root holding one directory per sequence; simulation when unset.
    pub dataset_dir: Option<PathBuf>,
    /// Sequence directory names; empty selects every directory with `mav0`.
    pub sequences: Vec<String>,
    /// Track CSV name inside each sequence directory.
    pub tracks_file: Option<String>,
    /// Worker threads; 0 uses all cores.
    pub jobs: usize,
    pub fragments: FragmentConfig,
    pub pipeline: PipelineConfig,
    pub matching: MatchConfig,
    pub front_end: FrontEndConfig,
    pub simulation: SimulationConfig,
}

impl BenchmarkConfig {
    pub fn from_toml(text: &str) -> Result<Self, IoError> {
        let cfg: Self = toml::from_str(text).map_err(|e| IoError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, IoError> {
        if !path.is_file() {
            return Err(IoError::MissingFile(path.to_path_buf()));
        }
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), IoError> {
        self.fragments.validate().map_err(IoError::Config)?;
        if !self.pipeline.imu.is_valid() {
            return Err(IoError::Config("IMU noise densities must be non-negative".into()));
        }
        if !self.simulation.noise.is_valid() {
            return Err(IoError::Config("simulation noise must be non-negative".into()));
        }
        if self.simulation.duration <= 0.0 || self.simulation.camera_rate <= 0.0 {
            return Err(IoError::Config("simulation duration and camera rate must be positive".into()));
        }
        let p = self.front_end.descriptor_fail_prob;
        if !(0.0..=1.0).contains(&p) {
            return Err(IoError::Config(format!("descriptor_fail_prob {p} outside [0, 1]")));
        }
        Ok(())
    }
}
