use serde::{Deserialize, Serialize};

use crate::imu::{ImuNoise, StaticThresholds};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RansacConfig {
    pub max_iterations: usize,
    pub confidence: f64,
    /// Epipolar inlier threshold, pixels.
    pub threshold_px: f64,
    pub min_inlier_ratio: f64,
    /// Median rotation-compensated parallax below which the baseline is
    /// treated as zero, pixels.
    pub min_parallax_px: f64,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            confidence: 0.99,
            threshold_px: 1.5,
            min_inlier_ratio: 0.5,
            min_parallax_px: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmConfig {
    pub initial_lambda: f64,
    pub lambda_up: f64,
    pub lambda_down: f64,
    pub max_iterations: usize,
    /// Stop when the relative cost decrease of an accepted step falls below this.
    pub relative_cost_tolerance: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            initial_lambda: 1e-4,
            lambda_up: 10.0,
            lambda_down: 10.0,
            max_iterations: 30,
            relative_cost_tolerance: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParallaxWeightConfig {
    pub w_max: f64,
    pub w_min: f64,
    /// Pixels.
    pub p_min: f64,
}

impl Default for ParallaxWeightConfig {
    fn default() -> Self {
        Self { w_max: 4f64.exp(), w_min: 1.0, p_min: 20.0 }
    }
}

/// Table-5 style switches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationFlags {
    /// Gyro-aided 2-point RANSAC; when off a visual-only 5-point solver is used.
    pub two_point: bool,
    /// Gyro factors in bundle adjustment; when off the SfM BA is visual only.
    pub vg_ba: bool,
    pub vi_ba: bool,
    pub parallax_weight: bool,
}

impl Default for AblationFlags {
    fn default() -> Self {
        Self { two_point: true, vg_ba: true, vi_ba: true, parallax_weight: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationVariant {
    Full,
    NoTwoPoint,
    NoVgBa,
    NoViBa,
    NoWeight,
}

impl AblationVariant {
    pub const ALL: [AblationVariant; 5] = [
        AblationVariant::Full,
        AblationVariant::NoTwoPoint,
        AblationVariant::NoVgBa,
        AblationVariant::NoViBa,
        AblationVariant::NoWeight,
    ];

    pub fn flags(self) -> AblationFlags {
        let mut f = AblationFlags::default();
        match self {
            AblationVariant::Full => {}
            AblationVariant::NoTwoPoint => f.two_point = false,
            AblationVariant::NoVgBa => f.vg_ba = false,
            AblationVariant::NoViBa => f.vi_ba = false,
            AblationVariant::NoWeight => f.parallax_weight = false,
        }
        f
    }

    pub fn label(self) -> &'static str {
        match self {
            AblationVariant::Full => "full",
            AblationVariant::NoTwoPoint => "no_two_point",
            AblationVariant::NoVgBa => "no_vg_ba",
            AblationVariant::NoViBa => "no_vi_ba",
            AblationVariant::NoWeight => "no_weight",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitConfig {
    pub ransac: RansacConfig,
    pub lm: LmConfig,
    pub weight: ParallaxWeightConfig,
    pub ablation: AblationFlags,
    pub min_common_tracks: usize,
    pub min_landmarks: usize,
    pub min_ray_angle_deg: f64,
    pub min_pnp_observations: usize,
    /// Huber threshold on visual residuals, pixels.
    pub huber_delta_px: f64,
    /// Standard deviation assumed for keypoint positions, pixels.
    pub pixel_sigma: f64,
    pub estimate_accel_bias: bool,
    /// Prior on the accelerometer bias inside VI-BA, m/s².
    pub accel_bias_prior_std: f64,
    pub max_condition_number: f64,
    pub gravity_refinement_passes: usize,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            ransac: RansacConfig::default(),
            lm: LmConfig::default(),
            weight: ParallaxWeightConfig::default(),
            ablation: AblationFlags::default(),
            min_common_tracks: 8,
            min_landmarks: 15,
            min_ray_angle_deg: 1.0,
            min_pnp_observations: 4,
            huber_delta_px: 1.5,
            pixel_sigma: 1.0,
            estimate_accel_bias: true,
            accel_bias_prior_std: 0.1,
            max_condition_number: 1e8,
            gravity_refinement_passes: 2,
        }
    }
}

/// Everything [`crate::init::initialize_fragment`] needs besides the fragment.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub imu: ImuNoise,
    pub static_detection: StaticThresholds,
    pub init: InitConfig,
}

impl PipelineConfig {
    pub fn with_ablation(&self, variant: AblationVariant) -> Self {
        let mut c = self.clone();
        c.init.ablation = variant.flags();
        c
    }
}
