//! Stereo depth measurement and fixed-point translation estimation.
//!
//! A calibrated rig turns one left/right frame pair into metric 3D offsets
//! of tracked landmarks (disparity -> depth -> back-projection). Offsets of
//! landmarks that persist between consecutive positions feed the relative
//! translation of the camera, with the camera rotation compensated so pure
//! rotation never masquerades as translation.

use std::path::Path;

use nalgebra::Rotation3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{detect_sift, Descriptor, FeaturesError, Image, SiftParams};
use crate::geom::{Mat3, RotationMatrix, Translation, Vec3};

/// Disparities at or below this value (pixels) are treated as unmeasurable.
pub const DEFAULT_MIN_DISPARITY: f64 = 0.5;

#[derive(Debug, Error)]
pub enum StereoError {
    #[error("disparity {0} px is at or below the measurable minimum")]
    NonPositiveDisparity(f64),
    #[error("landmark tracking lost: {0}")]
    TrackLost(String),
    #[error("bad calibration: {0}")]
    BadCalibration(String),
    #[error(transparent)]
    Features(#[from] FeaturesError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("calibration parse: {0}")]
    Parse(#[from] serde_json::Error),
}

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self, StereoError> {
        if fx <= 0.0 || fy <= 0.0 || !fx.is_finite() || !fy.is_finite() {
            return Err(StereoError::BadCalibration(format!(
                "focal lengths must be positive, got fx={fx} fy={fy}"
            )));
        }
        if !cx.is_finite() || !cy.is_finite() {
            return Err(StereoError::BadCalibration(
                "principal point must be finite".into(),
            ));
        }
        Ok(CameraIntrinsics { fx, fy, cx, cy })
    }

    pub fn k_matrix(&self) -> Mat3 {
        Mat3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn k_inverse(&self) -> Mat3 {
        Mat3::new(
            1.0 / self.fx,
            0.0,
            -self.cx / self.fx,
            0.0,
            1.0 / self.fy,
            -self.cy / self.fy,
            0.0,
            0.0,
            1.0,
        )
    }

    /// Pinhole projection of a camera-frame point; `None` behind the camera.
    pub fn project(&self, p_cam: &Vec3) -> Option<[f64; 2]> {
        if p_cam.z <= 0.0 {
            return None;
        }
        Some([
            self.fx * p_cam.x / p_cam.z + self.cx,
            self.fy * p_cam.y / p_cam.z + self.cy,
        ])
    }

    /// Pixel -> normalized image coordinates (unit depth).
    pub fn normalize(&self, p: [f64; 2]) -> Vec3 {
        Vec3::new((p[0] - self.cx) / self.fx, (p[1] - self.cy) / self.fy, 1.0)
    }
}

/// Calibrated stereo pair: intrinsics of both cameras plus the relative
/// extrinsics mapping left-camera coordinates to right-camera coordinates
/// (`x_right = R * x_left + T`, T in millimetres).
#[derive(Debug, Clone)]
pub struct StereoRig {
    pub left: CameraIntrinsics,
    pub right: CameraIntrinsics,
    pub r_rel: RotationMatrix,
    pub t_rel: Translation,
}

#[derive(Serialize, Deserialize)]
struct CalibrationFile {
    left: CameraIntrinsics,
    right: CameraIntrinsics,
    #[serde(rename = "R")]
    r: [f64; 9],
    #[serde(rename = "T")]
    t: [f64; 3],
}

impl StereoRig {
    pub fn new(
        left: CameraIntrinsics,
        right: CameraIntrinsics,
        r_rel: RotationMatrix,
        t_rel: Translation,
    ) -> Result<Self, StereoError> {
        let rig = StereoRig {
            left,
            right,
            r_rel,
            t_rel,
        };
        if rig.baseline() <= 0.0 {
            return Err(StereoError::BadCalibration(
                "baseline (|T_x|) must be positive".into(),
            ));
        }
        Ok(rig)
    }

    /// Horizontal baseline in millimetres: |T_x| of the relative extrinsics.
    pub fn baseline(&self) -> f64 {
        self.t_rel.x().abs()
    }

    /// Loads the calibration JSON `{ left:{fx,fy,cx,cy}, right:{...},
    /// R:[9 row-major], T:[3 mm] }`.
    pub fn load_json(path: impl AsRef<Path>) -> Result<Self, StereoError> {
        let text = std::fs::read_to_string(path)?;
        let file: CalibrationFile = serde_json::from_str(&text)?;
        let m = Mat3::from_row_slice(&file.r);
        let r_rel = RotationMatrix::try_new(m)
            .map_err(|e| StereoError::BadCalibration(format!("R: {e}")))?;
        let left = CameraIntrinsics::new(file.left.fx, file.left.fy, file.left.cx, file.left.cy)?;
        let right =
            CameraIntrinsics::new(file.right.fx, file.right.fy, file.right.cx, file.right.cy)?;
        StereoRig::new(
            left,
            right,
            r_rel,
            Translation::new(file.t[0], file.t[1], file.t[2]),
        )
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<(), StereoError> {
        let m = self.r_rel.matrix();
        let file = CalibrationFile {
            left: self.left,
            right: self.right,
            r: [
                m[(0, 0)],
                m[(0, 1)],
                m[(0, 2)],
                m[(1, 0)],
                m[(1, 1)],
                m[(1, 2)],
                m[(2, 0)],
                m[(2, 1)],
                m[(2, 2)],
            ],
            t: [self.t_rel.x(), self.t_rel.y(), self.t_rel.z()],
        };
        std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
        Ok(())
    }
}

/// Horizontal pixel offset between rectified correspondences.
pub fn disparity(x_left: f64, x_right: f64) -> f64 {
    x_left - x_right
}

/// Depth from the direct stereo formula `Z = f * B / d` using the left focal
/// length and the horizontal baseline.
pub fn depth_from_disparity(d: f64, rig: &StereoRig) -> Result<f64, StereoError> {
    if d <= DEFAULT_MIN_DISPARITY {
        return Err(StereoError::NonPositiveDisparity(d));
    }
    Ok(rig.left.fx * rig.baseline() / d)
}

/// Back-projects a pixel at known depth into the camera frame:
/// `((x-cx)·Z/fx, (y-cy)·Z/fy, Z)`.
pub fn backproject(x: f64, y: f64, z: f64, cam: &CameraIntrinsics) -> Translation {
    debug_assert!(z > 0.0);
    Translation::new(
        (x - cam.cx) * z / cam.fx,
        (y - cam.cy) * z / cam.fy,
        z,
    )
}

/// Rotations and common intrinsics that bring both views onto parallel,
/// row-aligned image planes (rotation split evenly between the two views,
/// then both rotated so the x-axis follows the baseline).
#[derive(Debug, Clone)]
pub struct RectifiedGeometry {
    pub r_left: RotationMatrix,
    pub r_right: RotationMatrix,
    pub k_rect: CameraIntrinsics,
    /// Full metric baseline of the rectified pair, `‖T‖` mm.
    pub baseline_mm: f64,
}

pub fn rectify_rig(rig: &StereoRig) -> RectifiedGeometry {
    let omega = Rotation3::from_matrix_unchecked(*rig.r_rel.matrix()).scaled_axis();
    let half_pos = Rotation3::from_scaled_axis(omega / 2.0);
    let half_neg = Rotation3::from_scaled_axis(-omega / 2.0);
    // right-camera center in the half-rotated left frame
    let c = -(half_neg * rig.t_rel.vector());
    let e1 = if c.x >= 0.0 { c / c.norm() } else { -c / c.norm() };
    let mut e2 = Vec3::new(0.0, 0.0, 1.0).cross(&e1);
    e2 /= e2.norm();
    let e3 = e1.cross(&e2);
    let r_row = Mat3::from_rows(&[e1.transpose(), e2.transpose(), e3.transpose()]);
    let r_left = RotationMatrix::try_new(r_row * half_pos.matrix())
        .expect("rectifying rotation is orthonormal");
    let r_right = RotationMatrix::try_new(r_row * half_neg.matrix())
        .expect("rectifying rotation is orthonormal");
    RectifiedGeometry {
        r_left,
        r_right,
        k_rect: rig.left,
        baseline_mm: rig.t_rel.norm(),
    }
}

impl RectifiedGeometry {
    /// Maps a raw pixel through the rectifying homography `K_rect R K^-1`.
    pub fn rectify_pixel(
        &self,
        p: [f64; 2],
        k_src: &CameraIntrinsics,
        r_rect: &RotationMatrix,
    ) -> [f64; 2] {
        let ray = r_rect.matrix() * k_src.normalize(p);
        [
            self.k_rect.fx * ray.x / ray.z + self.k_rect.cx,
            self.k_rect.fy * ray.y / ray.z + self.k_rect.cy,
        ]
    }
}

/// Full measurement path for one left/right correspondence: rectify both
/// pixels, take the disparity, invert to depth, back-project, and express
/// the result in the raw left-camera frame (mm).
pub fn stereo_point_from_match(
    p_left: [f64; 2],
    p_right: [f64; 2],
    rig: &StereoRig,
    geometry: &RectifiedGeometry,
    min_disparity: f64,
) -> Result<Translation, StereoError> {
    let l = geometry.rectify_pixel(p_left, &rig.left, &geometry.r_left);
    let r = geometry.rectify_pixel(p_right, &rig.right, &geometry.r_right);
    let d = disparity(l[0], r[0]);
    if d <= min_disparity {
        return Err(StereoError::NonPositiveDisparity(d));
    }
    let z = geometry.k_rect.fx * geometry.baseline_mm / d;
    let rectified = backproject(l[0], l[1], z, &geometry.k_rect);
    let in_left = geometry.r_left.matrix().transpose() * rectified.vector();
    Ok(Translation::from(in_left))
}

/// Parameters of the per-position landmark measurement.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StereoMeasureConfig {
    pub sift: SiftParams,
    pub match_ratio: f64,
    /// Vertical tolerance around the rectified epipolar line, pixels.
    pub epipolar_tol_px: f64,
    pub min_disparity_px: f64,
    /// Minimum stereo landmarks for a usable measurement.
    pub min_landmarks: usize,
    /// Minimum landmarks persisting from the previous position.
    pub min_persistent: usize,
}

impl Default for StereoMeasureConfig {
    fn default() -> Self {
        StereoMeasureConfig {
            sift: SiftParams::default(),
            match_ratio: 0.75,
            epipolar_tol_px: 1.5,
            min_disparity_px: DEFAULT_MIN_DISPARITY,
            min_landmarks: 15,
            min_persistent: 3,
        }
    }
}

#[derive(Debug, Clone)]
struct Landmark {
    descriptor: Descriptor,
    offset: Vec3,
}

/// Tracking context carried across positions of a sequence: the landmarks of
/// the previous position and, after each successful measurement, the paired
/// offsets of landmarks that persisted.
#[derive(Debug, Default)]
pub struct WorldPointTracks {
    prev: Option<Vec<Landmark>>,
    persistent: Vec<(Vec3, Vec3)>,
}

impl WorldPointTracks {
    pub fn new() -> Self {
        WorldPointTracks::default()
    }

    /// `(previous offset, current offset)` of each landmark persisting
    /// between the last two measured positions, both in their own
    /// left-camera frames.
    pub fn persistent_pairs(&self) -> &[(Vec3, Vec3)] {
        &self.persistent
    }

    pub fn has_previous(&self) -> bool {
        self.prev.is_some()
    }
}

/// Componentwise median; the two central values are averaged for even
/// counts. Robust to strictly less than half the entries being corrupted.
pub fn componentwise_median(values: &[Vec3]) -> Option<Vec3> {
    if values.is_empty() {
        return None;
    }
    let mut out = Vec3::zeros();
    for c in 0..3 {
        let mut col: Vec<f64> = values.iter().map(|v| v[c]).collect();
        col.sort_by(f64::total_cmp);
        let n = col.len();
        out[c] = if n % 2 == 1 {
            col[n / 2]
        } else {
            (col[n / 2 - 1] + col[n / 2]) / 2.0
        };
    }
    Some(out)
}

fn stereo_landmarks(
    left: &Image,
    right: &Image,
    rig: &StereoRig,
    geometry: &RectifiedGeometry,
    cfg: &StereoMeasureConfig,
) -> Result<Vec<Landmark>, StereoError> {
    let feats_left = detect_sift(left, &cfg.sift)?;
    let feats_right = detect_sift(right, &cfg.sift)?;
    if feats_left.is_empty() || feats_right.is_empty() {
        return Ok(Vec::new());
    }
    let rect_right: Vec<[f64; 2]> = feats_right
        .iter()
        .map(|(kp, _)| geometry.rectify_pixel([kp.x as f64, kp.y as f64], &rig.right, &geometry.r_right))
        .collect();

    let ratio_sq = (cfg.match_ratio * cfg.match_ratio) as f32;
    let mut landmarks = Vec::new();
    for (kp, desc) in &feats_left {
        let pl_raw = [kp.x as f64, kp.y as f64];
        let pl = geometry.rectify_pixel(pl_raw, &rig.left, &geometry.r_left);
        let mut best = usize::MAX;
        let mut d1 = f32::INFINITY;
        let mut d2 = f32::INFINITY;
        for (j, (_, cand)) in feats_right.iter().enumerate() {
            // candidates must sit on the same rectified row with positive disparity
            if (rect_right[j][1] - pl[1]).abs() > cfg.epipolar_tol_px {
                continue;
            }
            if pl[0] - rect_right[j][0] <= cfg.min_disparity_px {
                continue;
            }
            let d = desc.distance_sq(cand);
            if d < d1 {
                d2 = d1;
                d1 = d;
                best = j;
            } else if d < d2 {
                d2 = d;
            }
        }
        if best == usize::MAX || (d2.is_finite() && d1 >= ratio_sq * d2) {
            continue;
        }
        let pr_raw = [feats_right[best].0.x as f64, feats_right[best].0.y as f64];
        let Ok(offset) =
            stereo_point_from_match(pl_raw, pr_raw, rig, geometry, cfg.min_disparity_px)
        else {
            continue;
        };
        if offset.z() <= 0.0 {
            continue;
        }
        landmarks.push(Landmark {
            descriptor: desc.clone(),
            offset: *offset.vector(),
        });
    }
    Ok(landmarks)
}

fn match_persistent(prev: &[Landmark], cur: &[Landmark], ratio: f64) -> Vec<(Vec3, Vec3)> {
    let ratio_sq = (ratio * ratio) as f32;
    let nearest = |d: &Descriptor, set: &[Landmark]| -> (usize, f32, f32) {
        let mut best = usize::MAX;
        let mut d1 = f32::INFINITY;
        let mut d2 = f32::INFINITY;
        for (j, lm) in set.iter().enumerate() {
            let dist = d.distance_sq(&lm.descriptor);
            if dist < d1 {
                d2 = d1;
                d1 = dist;
                best = j;
            } else if dist < d2 {
                d2 = dist;
            }
        }
        (best, d1, d2)
    };
    let mut pairs = Vec::new();
    for cur_lm in cur {
        let (j, d1, d2) = nearest(&cur_lm.descriptor, prev);
        if j == usize::MAX || (d2.is_finite() && d1 >= ratio_sq * d2) {
            continue;
        }
        // mutual consistency: the previous landmark must prefer this one back
        let (back, b1, _) = nearest(&prev[j].descriptor, cur);
        if back == usize::MAX || b1 + 1e-12 < d1 {
            continue;
        }
        pairs.push((prev[j].offset, cur_lm.offset));
    }
    pairs
}

/// Measures the landmark field of one stereo pair and returns the
/// componentwise-median 3D offset of the tracked world points in the left
/// camera frame (mm). Persistence against the previous position is recorded
/// in `tracks`; fewer than `min_persistent` surviving landmarks is a
/// [`StereoError::TrackLost`].
pub fn measure_world_offset(
    left: &Image,
    right: &Image,
    rig: &StereoRig,
    tracks: &mut WorldPointTracks,
    cfg: &StereoMeasureConfig,
) -> Result<Translation, StereoError> {
    let geometry = rectify_rig(rig);
    let landmarks = stereo_landmarks(left, right, rig, &geometry, cfg)?;
    if landmarks.len() < cfg.min_landmarks {
        let n = landmarks.len();
        tracks.prev = Some(landmarks);
        tracks.persistent.clear();
        return Err(StereoError::TrackLost(format!(
            "{n} stereo landmarks, need at least {}",
            cfg.min_landmarks
        )));
    }
    let result = match &tracks.prev {
        None => {
            let median = componentwise_median(
                &landmarks.iter().map(|l| l.offset).collect::<Vec<_>>(),
            )
            .expect("landmark set is non-empty");
            tracks.persistent.clear();
            Ok(Translation::from(median))
        }
        Some(prev) => {
            let pairs = match_persistent(prev, &landmarks, cfg.match_ratio);
            if pairs.len() < cfg.min_persistent {
                tracks.persistent.clear();
                Err(StereoError::TrackLost(format!(
                    "{} persistent landmarks, need at least {}",
                    pairs.len(),
                    cfg.min_persistent
                )))
            } else {
                let median = componentwise_median(
                    &pairs.iter().map(|(_, cur)| *cur).collect::<Vec<_>>(),
                )
                .expect("pair set is non-empty");
                tracks.persistent = pairs;
                Ok(Translation::from(median))
            }
        }
    };
    tracks.prev = Some(landmarks);
    result
}

/// Relative camera translation for one step, in the world frame. The two
/// fixed-point offsets are rotated out of their camera frames first, so a
/// stationary point under pure camera rotation contributes zero motion:
/// `T_P = R_prev · t_prev − R_cur · t_cur`.
pub fn translation_for_step(
    t_wp: &Translation,
    t_wp_prev: &Translation,
    r_fp: &RotationMatrix,
    r_fp_prev: &RotationMatrix,
) -> Translation {
    Translation::from(r_fp_prev.apply(t_wp_prev.vector()) - r_fp.apply(t_wp.vector()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::rotation_y;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn test_rig() -> StereoRig {
        StereoRig::new(
            CameraIntrinsics::new(1000.0, 1000.0, 320.0, 240.0).unwrap(),
            CameraIntrinsics::new(1000.0, 1000.0, 320.0, 240.0).unwrap(),
            RotationMatrix::identity(),
            Translation::new(-47.917, 0.0, 0.0),
        )
        .unwrap()
    }

    /// Rig shaped like a real bench calibration: slight relative rotation
    /// and translation components off the x axis.
    fn skewed_rig() -> StereoRig {
        let r = RotationMatrix::try_new(
            *crate::geom::compose_rotation(0.008, 0.0163, -0.011).matrix(),
        )
        .unwrap();
        StereoRig::new(
            CameraIntrinsics::new(1050.0, 1045.0, 960.0, 540.0).unwrap(),
            CameraIntrinsics::new(1048.0, 1050.0, 955.0, 545.0).unwrap(),
            r,
            Translation::new(-47.917, -0.142, -13.373),
        )
        .unwrap()
    }

    #[test]
    fn disparity_is_coordinate_difference() {
        assert_eq!(disparity(640.0, 600.0), 40.0);
        assert_eq!(disparity(100.0, 100.0), 0.0);
    }

    #[test]
    fn depth_formula_direct_substitution() {
        let rig = test_rig();
        let z = depth_from_disparity(10.0, &rig).unwrap();
        assert_relative_eq!(z, 4791.7, epsilon = 1e-9);
        assert!(matches!(
            depth_from_disparity(0.0, &rig),
            Err(StereoError::NonPositiveDisparity(_))
        ));
    }

    #[test]
    fn backproject_axis_cases() {
        let cam = CameraIntrinsics::new(1000.0, 1000.0, 320.0, 240.0).unwrap();
        let on_axis = backproject(320.0, 240.0, 1000.0, &cam);
        assert_eq!(on_axis.vector(), &Vec3::new(0.0, 0.0, 1000.0));
        let diag = backproject(320.0 + 1000.0, 240.0, 500.0, &cam);
        assert_relative_eq!(diag.x(), 500.0, epsilon = 1e-12);
    }

    #[test]
    fn rectified_measurement_recovers_points_on_skewed_rig() {
        let rig = skewed_rig();
        let geometry = rectify_rig(&rig);
        let points = [
            Vec3::new(120.0, -60.0, 900.0),
            Vec3::new(-300.0, 150.0, 1500.0),
            Vec3::new(40.0, 10.0, 2500.0),
        ];
        for p in &points {
            let pl = rig.left.project(p).unwrap();
            let p_right_cam = rig.r_rel.matrix() * p + rig.t_rel.vector();
            let pr = rig.right.project(&p_right_cam).unwrap();
            // rectified rows must align
            let rl = geometry.rectify_pixel(pl, &rig.left, &geometry.r_left);
            let rr = geometry.rectify_pixel(pr, &rig.right, &geometry.r_right);
            assert!((rl[1] - rr[1]).abs() < 1e-9, "row misalignment {}", rl[1] - rr[1]);
            let recovered = stereo_point_from_match(pl, pr, &rig, &geometry, 0.01).unwrap();
            assert_relative_eq!(recovered.vector(), p, epsilon = 1e-8);
        }
    }

    #[test]
    fn translation_step_cases() {
        // camera advanced +25 mm along x: the fixed point recedes in-frame
        let step = translation_for_step(
            &Translation::new(-25.0, 0.0, 1000.0),
            &Translation::new(0.0, 0.0, 1000.0),
            &RotationMatrix::identity(),
            &RotationMatrix::identity(),
        );
        assert_relative_eq!(step.vector(), &Vec3::new(25.0, 0.0, 0.0), epsilon = 1e-12);

        let none = translation_for_step(
            &Translation::new(3.0, 4.0, 5.0),
            &Translation::new(3.0, 4.0, 5.0),
            &RotationMatrix::identity(),
            &RotationMatrix::identity(),
        );
        assert!(none.norm() < 1e-12);

        // stationary camera yawing 90 degrees: rotation compensation must
        // cancel the apparent motion of the stationary point
        let r_prev = RotationMatrix::identity();
        let r_cur = rotation_y(90f64.to_radians());
        let world_point = Vec3::new(0.0, 0.0, 1000.0);
        let t_prev = Translation::from(r_prev.matrix().transpose() * world_point);
        let t_cur = Translation::from(r_cur.matrix().transpose() * world_point);
        let step = translation_for_step(&t_cur, &t_prev, &r_cur, &r_prev);
        assert!(step.norm() < 1e-6, "pure rotation produced {}", step.norm());
    }

    #[test]
    fn median_resists_gross_outliers() {
        let clean: Vec<Vec3> = (0..11)
            .map(|i| Vec3::new(100.0 + i as f64 * 0.01, -50.0, 800.0))
            .collect();
        let clean_median = componentwise_median(&clean).unwrap();
        let mut corrupted = clean.clone();
        for slot in corrupted.iter_mut().take(5) {
            *slot = Vec3::new(1e6, -1e6, 1e6);
        }
        let corrupted_median = componentwise_median(&corrupted).unwrap();
        // 5 of 11 replaced: the median may move within the clean spread but
        // not toward the outliers
        assert!((corrupted_median - clean_median).norm() < 0.1);
    }

    #[test]
    fn calibration_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("calib.json");
        let rig = skewed_rig();
        rig.save_json(&path).unwrap();
        let loaded = StereoRig::load_json(&path).unwrap();
        assert_relative_eq!(loaded.left.fx, rig.left.fx);
        assert_relative_eq!(loaded.t_rel.x(), rig.t_rel.x());
        assert!((loaded.r_rel.matrix() - rig.r_rel.matrix()).norm() < 1e-12);
        assert_relative_eq!(loaded.baseline(), 47.917);
    }

    #[test]
    fn zero_baseline_rejected() {
        let cam = CameraIntrinsics::new(1000.0, 1000.0, 320.0, 240.0).unwrap();
        let err = StereoRig::new(
            cam,
            cam,
            RotationMatrix::identity(),
            Translation::new(0.0, 5.0, 0.0),
        );
        assert!(matches!(err, Err(StereoError::BadCalibration(_))));
    }

    proptest! {
        #[test]
        fn depth_round_trip_over_working_range(z in 100.0f64..10000.0) {
            let rig = test_rig();
            let d = rig.left.fx * rig.baseline() / z;
            let z_back = depth_from_disparity(d, &rig).unwrap();
            prop_assert!((z_back - z).abs() / z < 1e-9);
        }

        #[test]
        fn backproject_reproject_round_trip(
            x in 1.0f64..639.0,
            y in 1.0f64..479.0,
            z in 100.0f64..10000.0,
        ) {
            let cam = CameraIntrinsics::new(1000.0, 1000.0, 320.0, 240.0).unwrap();
            let p = backproject(x, y, z, &cam);
            let pix = cam.project(p.vector()).unwrap();
            prop_assert!((pix[0] - x).abs() < 1e-9);
            prop_assert!((pix[1] - y).abs() < 1e-9);
        }
    }
}
