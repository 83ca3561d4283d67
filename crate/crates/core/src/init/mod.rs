//! Motion initialization: keyframe-pair selection, gyro-aided two-view
//! reconstruction, VG-PnP, VG-BA, visual-inertial alignment and VI-BA.

mod align;
mod config;
mod factors;
mod five_point;
mod keyframe;
pub mod lm;
mod pipeline;
mod pnp;
#[cfg(test)]
mod testutil;
mod two_point;
mod two_view;
mod types;
mod vg_ba;
mod vi_ba;
mod weight;

pub use align::va_align;
pub use config::{
    AblationFlags, AblationVariant, InitConfig, LmConfig, ParallaxWeightConfig, PipelineConfig, RansacConfig,
};
pub use factors::{
    body_rotation_factor, camera_rotation_factor, camera_to_body_jacobian, huber_cost, huber_weight, reprojection,
    reprojection_residual, Reprojection, RotationFactor,
};
pub use five_point::{decompose_essential, five_point_essentials, five_point_ransac, FivePointResult};
pub use keyframe::{compensated_displacements, select_keyframe_pair, KeyframePair};
pub use pipeline::initialize_fragment;
pub use pnp::{vg_pnp, GyroLink, PnpObservation, PnpResult};
pub use two_point::{two_point_ransac, Correspondence, TwoPointResult};
pub use two_view::{two_view_reconstruct, TwoViewResult};
pub use types::{FailureStage, Fragment, InitError, InitReport, InitState, SfmEstimate, SolveDiagnostics};
pub use vg_ba::vg_ba;
pub use vi_ba::{metric_from_alignment, vi_ba, MetricSolution};
pub use weight::parallax_weight;
