//! Rotation and translation domain types plus the chaining/correction
//! arithmetic used to assemble camera trajectories.
//!
//! Conventions used throughout the crate:
//! - A [`RotationMatrix`] stored in a [`Pose`] maps camera coordinates to
//!   world coordinates (columns are the camera axes expressed in the world
//!   frame).
//! - Translations are camera centers in the world frame, in millimetres.
//! - Euler angles follow the product order `R = Rx(rx) * Ry(ry) * Rz(rz)`
//!   applied to column vectors.

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

pub type Mat3 = Matrix3<f64>;
pub type Vec3 = Vector3<f64>;

/// Tolerance for the orthonormality / determinant checks on rotations.
pub const ROTATION_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum GeomError {
    #[error("matrix is not a rotation: {0}")]
    NotARotation(String),
    #[error("mean of the two rotations is rank-deficient; caller should fall back to the first input")]
    DegenerateAverage,
    #[error("trajectory pose indices must start at 1 and increase by 1 (offending index {0})")]
    NonConsecutiveIndices(usize),
    #[error("pose 1 must carry the identity rotation and zero translation")]
    BadBasePose,
    #[error("trajectory must contain at least one pose")]
    EmptyTrajectory,
}

/// Proper rotation: orthonormal with determinant +1, checked on construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix(Mat3);

impl RotationMatrix {
    pub fn identity() -> Self {
        RotationMatrix(Mat3::identity())
    }

    /// Validates `‖MᵀM − I‖_F < 1e-9` and `det(M) = 1 ± 1e-9`.
    pub fn try_new(m: Mat3) -> Result<Self, GeomError> {
        let gram_defect = (m.transpose() * m - Mat3::identity()).norm();
        if gram_defect >= ROTATION_TOL {
            return Err(GeomError::NotARotation(format!(
                "orthonormality defect {gram_defect:.3e}"
            )));
        }
        let det = m.determinant();
        if (det - 1.0).abs() >= ROTATION_TOL {
            return Err(GeomError::NotARotation(format!("determinant {det:.12}")));
        }
        Ok(RotationMatrix(m))
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        RotationMatrix(self.0.transpose())
    }

    pub fn apply(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    /// Geodesic distance to `other` in radians.
    pub fn angle_to(&self, other: &RotationMatrix) -> f64 {
        let rel = self.0.transpose() * other.0;
        // trace(R) = 1 + 2 cos(theta); clamp against rounding drift
        let c = ((rel.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        c.acos()
    }
}

/// Rotation angles about the X, Y and Z axes, each in `(-pi, pi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerAngles {
    pub rx: f64,
    pub ry: f64,
    pub rz: f64,
}

/// Result of factoring a rotation into Euler angles. Near `|ry| = pi/2` the
/// x/z axes align and only `rx + rz` is observable; the decomposition then
/// pins `rz = 0` and reports `gimbal_lock = true`.
#[derive(Debug, Clone, Copy)]
pub struct EulerDecomposition {
    pub angles: EulerAngles,
    pub gimbal_lock: bool,
}

/// Camera translation in millimetres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Translation(Vec3);

impl Translation {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        let v = Vec3::new(x, y, z);
        assert!(
            v.iter().all(|c| c.is_finite()),
            "translation components must be finite"
        );
        Translation(v)
    }

    pub fn zero() -> Self {
        Translation(Vec3::zeros())
    }

    pub fn vector(&self) -> &Vec3 {
        &self.0
    }

    pub fn x(&self) -> f64 {
        self.0.x
    }
    pub fn y(&self) -> f64 {
        self.0.y
    }
    pub fn z(&self) -> f64 {
        self.0.z
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }
}

impl From<Vec3> for Translation {
    fn from(v: Vec3) -> Self {
        Translation::new(v.x, v.y, v.z)
    }
}

/// Per-pose bookkeeping: which parts of the pose were frozen because the
/// underlying estimate failed for that step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PoseFlags {
    pub rotation_reused: bool,
    pub translation_reused: bool,
}

impl PoseFlags {
    pub fn clean() -> Self {
        PoseFlags::default()
    }

    /// Compact token used in the trajectory CSV: empty, `R`, `T` or `RT`.
    pub fn token(&self) -> String {
        let mut s = String::new();
        if self.rotation_reused {
            s.push('R');
        }
        if self.translation_reused {
            s.push('T');
        }
        s
    }

    pub fn parse(token: &str) -> Option<Self> {
        let mut flags = PoseFlags::default();
        for c in token.chars() {
            match c {
                'R' => flags.rotation_reused = true,
                'T' => flags.translation_reused = true,
                _ => return None,
            }
        }
        Some(flags)
    }
}

/// Camera pose at a 1-based position index.
#[derive(Debug, Clone, Copy)]
pub struct Pose {
    pub position_index: usize,
    pub rotation: RotationMatrix,
    pub translation: Translation,
    pub flags: PoseFlags,
}

impl Pose {
    pub fn base() -> Self {
        Pose {
            position_index: 1,
            rotation: RotationMatrix::identity(),
            translation: Translation::zero(),
            flags: PoseFlags::clean(),
        }
    }
}

/// Ordered pose sequence with consecutive indices starting at 1.
#[derive(Debug, Clone)]
pub struct Trajectory {
    poses: Vec<Pose>,
}

impl Trajectory {
    pub fn new(poses: Vec<Pose>) -> Result<Self, GeomError> {
        if poses.is_empty() {
            return Err(GeomError::EmptyTrajectory);
        }
        for (i, pose) in poses.iter().enumerate() {
            if pose.position_index != i + 1 {
                return Err(GeomError::NonConsecutiveIndices(pose.position_index));
            }
        }
        let base = &poses[0];
        let rot_defect = (base.rotation.matrix() - Mat3::identity()).norm();
        if rot_defect > ROTATION_TOL || base.translation.norm() > ROTATION_TOL {
            return Err(GeomError::BadBasePose);
        }
        Ok(Trajectory { poses })
    }

    pub fn poses(&self) -> &[Pose] {
        &self.poses
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }
}

/// Builds `Rx(rx) * Ry(ry) * Rz(rz)` (expanded closed form).
pub fn compose_rotation(rx: f64, ry: f64, rz: f64) -> RotationMatrix {
    debug_assert!(rx.is_finite() && ry.is_finite() && rz.is_finite());
    let (sa, ca) = rx.sin_cos();
    let (sb, cb) = ry.sin_cos();
    let (sc, cc) = rz.sin_cos();
    let m = Mat3::new(
        cb * cc,
        -cb * sc,
        sb,
        ca * sc + sa * sb * cc,
        ca * cc - sa * sb * sc,
        -sa * cb,
        sa * sc - ca * sb * cc,
        sa * cc + ca * sb * sc,
        ca * cb,
    );
    RotationMatrix(m)
}

/// Elementary rotation about the X axis.
pub fn rotation_x(angle: f64) -> RotationMatrix {
    compose_rotation(angle, 0.0, 0.0)
}

/// Elementary rotation about the Y axis.
pub fn rotation_y(angle: f64) -> RotationMatrix {
    compose_rotation(0.0, angle, 0.0)
}

/// Elementary rotation about the Z axis.
pub fn rotation_z(angle: f64) -> RotationMatrix {
    compose_rotation(0.0, 0.0, angle)
}

/// Inverse of [`compose_rotation`]. `|cos(ry)| < 1e-6` triggers the flagged
/// gimbal-lock decomposition with `rz = 0`.
pub fn euler_from_rotation(r: &RotationMatrix) -> EulerDecomposition {
    let m = r.matrix();
    let sy = m[(0, 2)].clamp(-1.0, 1.0);
    let ry = sy.asin();
    let cy = (1.0 - sy * sy).sqrt();
    if cy < 1e-6 {
        // x and z rotations act about the same axis here; report their sum as rx
        let rx = m[(2, 1)].atan2(m[(1, 1)]);
        return EulerDecomposition {
            angles: EulerAngles { rx, ry, rz: 0.0 },
            gimbal_lock: true,
        };
    }
    let rx = (-m[(1, 2)]).atan2(m[(2, 2)]);
    let rz = (-m[(0, 1)]).atan2(m[(0, 0)]);
    EulerDecomposition {
        angles: EulerAngles { rx, ry, rz },
        gimbal_lock: false,
    }
}

/// Chains a relative rotation onto the previous final rotation. Position 1
/// is the reference and always maps to the identity.
pub fn chain_rotation(
    final_prev: &RotationMatrix,
    relative: &RotationMatrix,
    position: usize,
) -> RotationMatrix {
    assert!(position >= 1, "position indices are 1-based");
    if position == 1 {
        return RotationMatrix::identity();
    }
    RotationMatrix(final_prev.0 * relative.0)
}

/// Averages two rotations by projecting their elementwise mean back onto the
/// rotation group (nearest rotation in Frobenius norm, determinant +1).
pub fn average_rotations(
    r1: &RotationMatrix,
    r2: &RotationMatrix,
) -> Result<RotationMatrix, GeomError> {
    let mean = (r1.0 + r2.0) / 2.0;
    project_to_rotation(&mean)
}

/// Nearest rotation to `m` in Frobenius norm via polar decomposition.
/// Fails when `m` is rank-deficient (the projection is not unique).
pub fn project_to_rotation(m: &Mat3) -> Result<RotationMatrix, GeomError> {
    let svd = m.svd(true, true);
    let u = svd.u.ok_or(GeomError::DegenerateAverage)?;
    let v_t = svd.v_t.ok_or(GeomError::DegenerateAverage)?;
    let smallest = svd
        .singular_values
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if smallest < 1e-9 {
        return Err(GeomError::DegenerateAverage);
    }
    let det = (u * v_t).determinant();
    let fix = Mat3::from_diagonal(&Vec3::new(1.0, 1.0, det.signum()));
    RotationMatrix::try_new(u * fix * v_t)
}

/// World point expressed in camera coordinates for a camera with
/// camera-to-world rotation `rotation_cw` and center `center` (mm).
pub fn world_to_camera(rotation_cw: &RotationMatrix, center: &Translation, world: &Vec3) -> Vec3 {
    rotation_cw.matrix().transpose() * (world - center.vector())
}

/// Componentwise difference of two world-point offsets expressed in the same
/// frame (the relative camera translation for one step).
pub fn relative_translation(t_wp: &Translation, t_wp_prev: &Translation) -> Translation {
    Translation::from(t_wp.0 - t_wp_prev.0)
}

/// Adds a relative step onto the accumulated translation. Position 1 is the
/// origin by definition.
pub fn accumulate_translation(
    final_prev: &Translation,
    relative: &Translation,
    position: usize,
) -> Translation {
    assert!(position >= 1, "position indices are 1-based");
    if position == 1 {
        return Translation::zero();
    }
    Translation::from(final_prev.0 + relative.0)
}
