//! Ground-truth trajectories, scenes and sensor synthesis used as oracles.

mod frontend;
mod synth;
mod trajectory;

use nalgebra::{Matrix3, UnitQuaternion, Vector3};

use crate::geom::Pose;

pub use frontend::{synth_frontends, FrontEndConfig, SimFrontEnd};
pub use synth::{
    simulate_fragment, simulate_sequence, synth_imu, synth_observations, NoiseConfig, SimFragment, SimScene,
};
pub use trajectory::{KinematicState, Trajectory, TrajectoryKind, TrajectoryModel};

/// EuRoC cam0-to-IMU extrinsic.
pub fn euroc_extrinsic() -> Pose {
    let r = Matrix3::new(
        0.0148655429818,
        -0.999880929698,
        0.00414029679422,
        0.999557249008,
        0.0149672133247,
        0.025715529948,
        -0.0257744366974,
        0.00375618835797,
        0.999660727178,
    );
    Pose::new(UnitQuaternion::from_matrix(&r), Vector3::new(-0.0216401454975, -0.064676986768, 0.00981073058949))
}
