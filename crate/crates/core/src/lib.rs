//! Stereo visual-odometry toolkit: camera-path estimation from affine-view
//! simulated feature matching and essential-matrix geometry, two-camera
//! rotation averaging, stereo fixed-point translation chaining, sparse
//! triangulation with bundle adjustment, and trajectory evaluation against
//! ground truth.

pub mod epipolar;
pub mod features;
pub mod geom;
pub mod stereo;
pub mod pipeline;
pub mod synth;

pub use geom::{Pose, RotationMatrix, Trajectory, Translation};
