//! Synthetic stereo scene generation: textured point fields rendered along
//! analytic trajectories, with exact projections available alongside the
//! rendered frames. This is the independent oracle behind most geometry
//! tests — everything here is closed-form, nothing passes through the
//! estimation code it checks.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{Image, MatchPair};
use crate::geom::{world_to_camera, Mat3, RotationMatrix, Translation, Vec3};
use crate::stereo::{CameraIntrinsics, StereoRig};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("no world points visible from position {0}")]
    NoVisiblePoints(usize),
    #[error("scene must have at least 2 positions, got {0}")]
    TooFewPositions(usize),
    #[error("bad scene spec: {0}")]
    BadSpec(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("scene spec parse: {0}")]
    Parse(#[from] serde_json::Error),
}

/// Analytic camera path, one pose per 1-based position index.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrajectoryKind {
    /// No motion.
    Static,
    /// Constant step along a fixed direction (mm per step).
    Line { step_mm: [f64; 3] },
    /// Closed rectangle in the XY plane, facing +Z throughout. The step
    /// count is split across the four sides so the path closes exactly.
    SquareLoop { side_mm: f64 },
    /// In-place rotation about the camera Y axis (degrees per step).
    Yaw { step_deg: f64 },
    /// Orbit about the point `[0, 0, radius_mm]`, yawing to keep facing it.
    Arc { radius_mm: f64, step_deg: f64 },
}

/// Serializable description of a synthetic scene.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneSpec {
    pub seed: u64,
    pub n_points: usize,
    pub positions: usize,
    pub trajectory: TrajectoryKind,
    pub image_width: usize,
    pub image_height: usize,
    /// Lateral extent of the point field, mm (x and y half-ranges).
    pub spread_mm: [f64; 2],
    /// Depth range of the point field in front of the first pose, mm.
    pub depth_range_mm: [f64; 2],
    /// Physical sprite size range, mm.
    pub sprite_size_mm: [f64; 2],
    /// Isotropic pixel noise applied by the corrupted-correspondence
    /// generator (not by rendering).
    pub noise_px: f64,
    /// Fraction of correspondences replaced by geometry-violating outliers
    /// by the corrupted-correspondence generator.
    pub outlier_fraction: f64,
    /// Seconds between consecutive positions (for ground-truth timestamps).
    pub frame_interval_s: f64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            seed: 1,
            n_points: 300,
            positions: 5,
            trajectory: TrajectoryKind::Static,
            image_width: 512,
            image_height: 384,
            spread_mm: [450.0, 320.0],
            depth_range_mm: [700.0, 1600.0],
            sprite_size_mm: [26.0, 46.0],
            noise_px: 0.0,
            outlier_fraction: 0.0,
            frame_interval_s: 0.1,
        }
    }
}

impl SceneSpec {
    pub fn load_json(path: impl AsRef<Path>) -> Result<Self, SynthError> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<(), SynthError> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// One textured sprite lobe, in sprite-local units (fractions of the sprite
/// size).
#[derive(Debug, Clone, Copy)]
struct Lobe {
    dx: f64,
    dy: f64,
    sigma: f64,
    amplitude: f64,
}

/// A world point with its billboard texture.
#[derive(Debug, Clone)]
pub struct WorldPoint {
    pub position: Vec3,
    pub size_mm: f64,
    lobes: Vec<Lobe>,
}

/// Fully instantiated scene: world points, rig, and per-position poses.
#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub spec: SceneSpec,
    pub rig: StereoRig,
    pub points: Vec<WorldPoint>,
    poses: Vec<(RotationMatrix, Translation)>,
}

/// Rendered output: stereo frames per position plus the exact trajectory.
#[derive(Debug)]
pub struct RenderedSequence {
    pub left: Vec<Image>,
    pub right: Vec<Image>,
    /// Exact pose (camera-to-world rotation, camera center mm) per position.
    pub poses: Vec<(RotationMatrix, Translation)>,
    /// Frame timestamps, seconds.
    pub frame_times: Vec<f64>,
}

fn default_rig(spec: &SceneSpec) -> StereoRig {
    let f = 0.9 * spec.image_width as f64;
    let cam = CameraIntrinsics::new(
        f,
        f,
        spec.image_width as f64 / 2.0,
        spec.image_height as f64 / 2.0,
    )
    .expect("synthetic intrinsics are valid");
    StereoRig::new(
        cam,
        cam,
        RotationMatrix::identity(),
        Translation::new(-100.0, 0.0, 0.0),
    )
    .expect("synthetic rig is valid")
}

fn pose_at(kind: &TrajectoryKind, positions: usize, p: usize) -> (RotationMatrix, Translation) {
    debug_assert!((1..=positions).contains(&p));
    let i = (p - 1) as f64;
    match kind {
        TrajectoryKind::Static => (RotationMatrix::identity(), Translation::zero()),
        TrajectoryKind::Line { step_mm } => (
            RotationMatrix::identity(),
            Translation::new(step_mm[0] * i, step_mm[1] * i, step_mm[2] * i),
        ),
        TrajectoryKind::SquareLoop { side_mm } => {
            let steps = positions - 1;
            let per_side = [
                steps / 4 + usize::from(steps % 4 > 0),
                steps / 4 + usize::from(steps % 4 > 1),
                steps / 4 + usize::from(steps % 4 > 2),
                steps / 4,
            ];
            let legs = [
                Vec3::new(1.0, 0.0, 0.0),
                Vec3::new(0.0, 1.0, 0.0),
                Vec3::new(-1.0, 0.0, 0.0),
                Vec3::new(0.0, -1.0, 0.0),
            ];
            let mut remaining = p - 1;
            let mut center = Vec3::zeros();
            for (leg, &count) in legs.iter().zip(&per_side) {
                if count == 0 {
                    continue;
                }
                let take = remaining.min(count);
                center += leg * (side_mm / count as f64) * take as f64;
                remaining -= take;
                if remaining == 0 {
                    break;
                }
            }
            (RotationMatrix::identity(), Translation::from(center))
        }
        TrajectoryKind::Yaw { step_deg } => (
            crate::geom::rotation_y((step_deg * i).to_radians()),
            Translation::zero(),
        ),
        TrajectoryKind::Arc { radius_mm, step_deg } => {
            let theta = (step_deg * i).to_radians();
            let pivot = Vec3::new(0.0, 0.0, *radius_mm);
            let center = pivot + Vec3::new(theta.sin(), 0.0, -theta.cos()) * *radius_mm;
            (
                crate::geom::rotation_y(-theta),
                Translation::from(center),
            )
        }
    }
}

impl SyntheticScene {
    /// Instantiates the scene: seeded point sampling, rejection-sampled so
    /// every point is visible from both cameras of the first position.
    pub fn generate(spec: SceneSpec) -> Result<Self, SynthError> {
        Self::generate_with_rig(spec.clone(), default_rig(&spec))
    }

    pub fn generate_with_rig(spec: SceneSpec, rig: StereoRig) -> Result<Self, SynthError> {
        if spec.positions < 2 {
            return Err(SynthError::TooFewPositions(spec.positions));
        }
        if spec.depth_range_mm[0] <= 0.0 || spec.depth_range_mm[1] < spec.depth_range_mm[0] {
            return Err(SynthError::BadSpec("depth range must be positive".into()));
        }
        let poses: Vec<(RotationMatrix, Translation)> = (1..=spec.positions)
            .map(|p| pose_at(&spec.trajectory, spec.positions, p))
            .collect();

        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let (first_rot, first_center) = &poses[0];
        let margin = 10.0;
        // translating trajectories need the field in view the whole way for
        // both cameras; rotating-in-place ones cannot have that and keep the
        // first-pose guarantee only
        let anchors: Vec<usize> = match spec.trajectory {
            TrajectoryKind::Static | TrajectoryKind::Yaw { .. } => vec![1],
            TrajectoryKind::Arc { .. } | TrajectoryKind::Line { .. }
            | TrajectoryKind::SquareLoop { .. } => {
                let n = spec.positions;
                let mut a = vec![1, n.div_ceil(4), n.div_ceil(2), (3 * n).div_ceil(4), n];
                a.sort_unstable();
                a.dedup();
                a
            }
        };
        let mut points = Vec::with_capacity(spec.n_points);
        // projected footprint centers already taken, for overlap rejection:
        // overlapping sprites at different depths would form composite image
        // features that do not track any rigid world point
        let mut occupied: Vec<([f64; 2], f64)> = Vec::with_capacity(spec.n_points);
        let mut attempts = 0usize;
        while points.len() < spec.n_points {
            attempts += 1;
            if attempts > spec.n_points * 400 {
                return Err(SynthError::BadSpec(
                    "could not sample enough visible points; widen the field or reduce n_points"
                        .into(),
                ));
            }
            let local = Vec3::new(
                rng.gen_range(-spec.spread_mm[0]..spec.spread_mm[0]),
                rng.gen_range(-spec.spread_mm[1]..spec.spread_mm[1]),
                rng.gen_range(spec.depth_range_mm[0]..spec.depth_range_mm[1]),
            );
            // place relative to the first pose so the field starts in view
            let world = first_rot.apply(&local) + first_center.vector();
            let left_cam = world_to_camera(first_rot, first_center, &world);
            let left_pix = rig.left.project(&left_cam);
            let in_frame = |p: [f64; 2]| {
                p[0] >= margin
                    && p[0] < spec.image_width as f64 - margin
                    && p[1] >= margin
                    && p[1] < spec.image_height as f64 - margin
            };
            let visible_everywhere = anchors.iter().all(|&anchor| {
                let (rot, center) = &poses[anchor - 1];
                let cam_l = world_to_camera(rot, center, &world);
                let ok_l = rig.left.project(&cam_l).is_some_and(in_frame);
                let cam_r = rig.r_rel.matrix() * cam_l + rig.t_rel.vector();
                let ok_r = rig.right.project(&cam_r).is_some_and(in_frame);
                ok_l && ok_r
            });
            if !visible_everywhere {
                continue;
            }
            let pix = left_pix.expect("visibility established");
            let mean_size = (spec.sprite_size_mm[0] + spec.sprite_size_mm[1]) / 2.0;
            let radius_px = 0.55 * rig.left.fx * mean_size / left_cam.z;
            let clear = occupied.iter().all(|(other, other_r)| {
                let d = ((pix[0] - other[0]).powi(2) + (pix[1] - other[1]).powi(2)).sqrt();
                d >= 0.9 * (radius_px + other_r)
            });
            if !clear {
                continue;
            }
            occupied.push((pix, radius_px));
            let size_mm = rng.gen_range(spec.sprite_size_mm[0]..=spec.sprite_size_mm[1]);
            let mut lobes = vec![Lobe {
                dx: 0.0,
                dy: 0.0,
                sigma: 0.16 + rng.gen_range(0.0..0.04),
                amplitude: if rng.gen_bool(0.5) { 0.47 } else { -0.47 },
            }];
            for _ in 0..rng.gen_range(3..=5usize) {
                lobes.push(Lobe {
                    dx: rng.gen_range(-0.45..0.45),
                    dy: rng.gen_range(-0.45..0.45),
                    sigma: rng.gen_range(0.09..0.15),
                    amplitude: rng.gen_range(0.18..0.32)
                        * if rng.gen_bool(0.5) { 1.0 } else { -1.0 },
                });
            }
            points.push(WorldPoint {
                position: world,
                size_mm,
                lobes,
            });
        }
        Ok(SyntheticScene {
            spec,
            rig,
            points,
            poses,
        })
    }

    pub fn positions(&self) -> usize {
        self.spec.positions
    }

    /// Exact pose of the left camera at 1-based position `p`.
    pub fn pose(&self, p: usize) -> (RotationMatrix, Translation) {
        self.poses[p - 1]
    }

    /// Pose of the right camera at position `p` (left pose composed with the
    /// rig extrinsics).
    pub fn right_pose(&self, p: usize) -> (RotationMatrix, Translation) {
        let (r_l, c_l) = self.pose(p);
        // x_right = R_rel x_left + t  =>  R_cw,right = R_cw,left * R_rel^T
        let r_r = RotationMatrix::try_new(r_l.matrix() * self.rig.r_rel.matrix().transpose())
            .expect("composed pose is a rotation");
        let c_r = c_l.vector() - r_r.matrix() * self.rig.t_rel.vector();
        (r_r, Translation::from(c_r))
    }

    fn camera_pose(&self, camera: Camera, p: usize) -> (RotationMatrix, Translation) {
        match camera {
            Camera::Left => self.pose(p),
            Camera::Right => self.right_pose(p),
        }
    }

    fn intrinsics(&self, camera: Camera) -> &CameraIntrinsics {
        match camera {
            Camera::Left => &self.rig.left,
            Camera::Right => &self.rig.right,
        }
    }

    /// Exact projection of world point `idx` into camera `camera` at
    /// position `p`, if it is in front of the camera and inside the frame.
    pub fn project_point(&self, camera: Camera, p: usize, idx: usize) -> Option<[f64; 2]> {
        let (rot, center) = self.camera_pose(camera, p);
        let cam_pt = world_to_camera(&rot, &center, &self.points[idx].position);
        let pix = self.intrinsics(camera).project(&cam_pt)?;
        let (w, h) = (self.spec.image_width as f64, self.spec.image_height as f64);
        (pix[0] >= 0.0 && pix[0] < w && pix[1] >= 0.0 && pix[1] < h).then_some(pix)
    }

    fn render_frame(&self, camera: Camera, p: usize) -> Image {
        let (w, h) = (self.spec.image_width, self.spec.image_height);
        let (rot, center) = self.camera_pose(camera, p);
        let cam = self.intrinsics(camera);
        let mut data = vec![0.5f32; w * h];
        for point in &self.points {
            let cam_pt = world_to_camera(&rot, &center, &point.position);
            let Some(pix) = cam.project(&cam_pt) else {
                continue;
            };
            let scale_px = cam.fx * point.size_mm / cam_pt.z;
            for lobe in &point.lobes {
                let bx = pix[0] + lobe.dx * scale_px;
                let by = pix[1] + lobe.dy * scale_px;
                let sigma = (lobe.sigma * scale_px).max(0.6);
                let radius = (3.2 * sigma).ceil() as i64;
                let x0 = (bx as i64 - radius).max(0);
                let x1 = (bx as i64 + radius).min(w as i64 - 1);
                let y0 = (by as i64 - radius).max(0);
                let y1 = (by as i64 + radius).min(h as i64 - 1);
                let denom = 2.0 * sigma * sigma;
                for y in y0..=y1 {
                    for x in x0..=x1 {
                        let d2 = (x as f64 - bx).powi(2) + (y as f64 - by).powi(2);
                        data[y as usize * w + x as usize] +=
                            (lobe.amplitude * (-d2 / denom).exp()) as f32;
                    }
                }
            }
        }
        Image::new(w, h, data.iter().map(|v| v.clamp(0.0, 1.0)).collect())
            .expect("rendered raster is well-formed")
    }

    /// Renders every position for both cameras. Deterministic per scene.
    pub fn render_sequence(&self) -> Result<RenderedSequence, SynthError> {
        for p in 1..=self.positions() {
            let visible = (0..self.points.len())
                .any(|i| self.project_point(Camera::Left, p, i).is_some());
            if !visible {
                return Err(SynthError::NoVisiblePoints(p));
            }
        }
        let left: Vec<Image> = (1..=self.positions())
            .into_par_iter()
            .map(|p| self.render_frame(Camera::Left, p))
            .collect();
        let right: Vec<Image> = (1..=self.positions())
            .into_par_iter()
            .map(|p| self.render_frame(Camera::Right, p))
            .collect();
        let frame_times = (0..self.positions())
            .map(|i| i as f64 * self.spec.frame_interval_s)
            .collect();
        Ok(RenderedSequence {
            left,
            right,
            poses: self.poses.clone(),
            frame_times,
        })
    }

    /// Exact correspondences of one camera between two positions, bypassing
    /// feature detection entirely.
    pub fn exact_correspondences(
        &self,
        camera: Camera,
        p1: usize,
        p2: usize,
    ) -> Vec<MatchPair> {
        (0..self.points.len())
            .filter_map(|i| {
                let a = self.project_point(camera, p1, i)?;
                let b = self.project_point(camera, p2, i)?;
                Some(MatchPair {
                    p1: a,
                    p2: b,
                    distance: 0.0,
                })
            })
            .collect()
    }

    /// Exact left/right projections of the shared visible points at one
    /// position, with the world point attached.
    pub fn exact_stereo_pairs(&self, p: usize) -> Vec<([f64; 2], [f64; 2], Vec3)> {
        (0..self.points.len())
            .filter_map(|i| {
                let l = self.project_point(Camera::Left, p, i)?;
                let r = self.project_point(Camera::Right, p, i)?;
                Some((l, r, self.points[i].position))
            })
            .collect()
    }

    /// True fundamental matrix between two views of one camera, built from
    /// the exact poses: `F = K2^-T [t]x R K1^-1`, scaled to unit norm.
    pub fn true_fundamental(&self, camera: Camera, p1: usize, p2: usize) -> Mat3 {
        let (r1, c1) = self.camera_pose(camera, p1);
        let (r2, c2) = self.camera_pose(camera, p2);
        // point transform between the view frames: x2 = R x1 + t
        let r = r2.matrix().transpose() * r1.matrix();
        let t = r2.matrix().transpose() * (c1.vector() - c2.vector());
        let tx = Mat3::new(0.0, -t.z, t.y, t.z, 0.0, -t.x, -t.y, t.x, 0.0);
        let e = tx * r;
        let k = self.intrinsics(camera);
        let f = k.k_inverse().transpose() * e * k.k_inverse();
        f / f.norm()
    }

    /// Relative point-transform pose between two views of one camera:
    /// `x2 = R x1 + t`, `t` normalized to unit length.
    pub fn true_relative_pose(&self, camera: Camera, p1: usize, p2: usize) -> (Mat3, Vec3) {
        let (r1, c1) = self.camera_pose(camera, p1);
        let (r2, c2) = self.camera_pose(camera, p2);
        let r = r2.matrix().transpose() * r1.matrix();
        let t = r2.matrix().transpose() * (c1.vector() - c2.vector());
        let norm = t.norm();
        (r, if norm > 0.0 { t / norm } else { t })
    }

    /// Correspondences with seeded Gaussian pixel noise on both ends and a
    /// fraction of geometry-violating outliers (rejection-sampled to sit at
    /// least `outlier_margin_px` away from the true epipolar geometry, so an
    /// admitted one is unambiguously a robustness failure).
    pub fn corrupted_correspondences(
        &self,
        camera: Camera,
        p1: usize,
        p2: usize,
        seed: u64,
        outlier_margin_px: f64,
    ) -> Vec<MatchPair> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let exact = self.exact_correspondences(camera, p1, p2);
        let f_true = self.true_fundamental(camera, p1, p2);
        let (w, h) = (self.spec.image_width as f64, self.spec.image_height as f64);
        let sigma = self.spec.noise_px;
        let gauss = |rng: &mut ChaCha8Rng| -> f64 {
            // Box-Muller
            let u1: f64 = rng.gen_range(1e-12..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        };
        exact
            .into_iter()
            .map(|mut m| {
                if self.spec.outlier_fraction > 0.0 && rng.gen_bool(self.spec.outlier_fraction) {
                    loop {
                        let cand = [rng.gen_range(0.0..w), rng.gen_range(0.0..h)];
                        let d = crate::epipolar::sampson_distance(&f_true, m.p1, cand);
                        if d >= outlier_margin_px {
                            m.p2 = cand;
                            break;
                        }
                    }
                } else if sigma > 0.0 {
                    m.p1[0] += sigma * gauss(&mut rng);
                    m.p1[1] += sigma * gauss(&mut rng);
                    m.p2[0] += sigma * gauss(&mut rng);
                    m.p2[1] += sigma * gauss(&mut rng);
                }
                m
            })
            .collect()
    }
}

/// Which camera of the rig a query refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Camera {
    Left,
    Right,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn line_scene(step: [f64; 3], positions: usize) -> SyntheticScene {
        let spec = SceneSpec {
            seed: 42,
            n_points: 60,
            positions,
            trajectory: TrajectoryKind::Line { step_mm: step },
            ..SceneSpec::default()
        };
        SyntheticScene::generate(spec).unwrap()
    }

    #[test]
    fn static_scene_renders_identical_frames() {
        let spec = SceneSpec {
            seed: 3,
            n_points: 40,
            positions: 3,
            ..SceneSpec::default()
        };
        let scene = SyntheticScene::generate(spec).unwrap();
        let seq = scene.render_sequence().unwrap();
        assert_eq!(seq.left.len(), 3);
        assert_eq!(seq.left[0].data(), seq.left[1].data());
        assert_eq!(seq.left[0].data(), seq.left[2].data());
        assert_eq!(seq.right[0].data(), seq.right[2].data());
        // left and right differ (parallax)
        assert_ne!(seq.left[0].data(), seq.right[0].data());
    }

    #[test]
    fn rendering_is_deterministic_per_seed() {
        let spec = SceneSpec {
            seed: 9,
            n_points: 25,
            positions: 2,
            ..SceneSpec::default()
        };
        let a = SyntheticScene::generate(spec.clone()).unwrap();
        let b = SyntheticScene::generate(spec).unwrap();
        let fa = a.render_sequence().unwrap();
        let fb = b.render_sequence().unwrap();
        assert_eq!(fa.left[0].data(), fb.left[0].data());
        assert_eq!(fa.right[1].data(), fb.right[1].data());
    }

    #[test]
    fn projection_matches_hand_computed_pinhole() {
        let scene = line_scene([0.0, 0.0, 0.0], 2);
        let cam = &scene.rig.left;
        for idx in 0..scene.points.len() {
            let world = scene.points[idx].position;
            let expect = [
                cam.fx * world.x / world.z + cam.cx,
                cam.fy * world.y / world.z + cam.cy,
            ];
            let got = scene.project_point(Camera::Left, 1, idx).unwrap();
            assert_relative_eq!(got[0], expect[0], epsilon = 1e-12);
            assert_relative_eq!(got[1], expect[1], epsilon = 1e-12);
        }
    }

    #[test]
    fn rendered_disparity_equals_depth_formula() {
        let scene = line_scene([0.0, 0.0, 0.0], 2);
        let f = scene.rig.left.fx;
        let b = scene.rig.baseline();
        for (l, r, world) in scene.exact_stereo_pairs(1) {
            let d = l[0] - r[0];
            assert_relative_eq!(d, f * b / world.z, epsilon = 1e-9);
            assert_relative_eq!(l[1], r[1], epsilon = 1e-9); // rectified rig rows align
        }
    }

    #[test]
    fn same_position_correspondences_are_identical() {
        let scene = line_scene([25.0, 0.0, 0.0], 3);
        for m in scene.exact_correspondences(Camera::Left, 2, 2) {
            assert_eq!(m.p1, m.p2);
        }
    }

    #[test]
    fn pure_translation_pairs_move_horizontally() {
        let scene = line_scene([25.0, 0.0, 0.0], 3);
        let pairs = scene.exact_correspondences(Camera::Left, 1, 2);
        assert!(pairs.len() > 30);
        for m in pairs {
            assert!((m.p1[1] - m.p2[1]).abs() < 1e-9, "vertical drift {}", m.p1[1] - m.p2[1]);
        }
    }

    #[test]
    fn exact_pairs_satisfy_true_epipolar_identity() {
        let scene = SyntheticScene::generate(SceneSpec {
            seed: 5,
            n_points: 80,
            positions: 4,
            trajectory: TrajectoryKind::Arc {
                radius_mm: 1200.0,
                step_deg: 3.0,
            },
            ..SceneSpec::default()
        })
        .unwrap();
        let f = scene.true_fundamental(Camera::Left, 1, 3);
        for m in scene.exact_correspondences(Camera::Left, 1, 3) {
            let x1 = nalgebra::Vector3::new(m.p1[0], m.p1[1], 1.0);
            let x2 = nalgebra::Vector3::new(m.p2[0], m.p2[1], 1.0);
            let residual = (x2.transpose() * f * x1)[(0, 0)].abs();
            assert!(residual < 1e-9, "epipolar residual {residual}");
        }
    }

    #[test]
    fn square_loop_closes_exactly() {
        let spec = SceneSpec {
            seed: 2,
            n_points: 10,
            positions: 20,
            trajectory: TrajectoryKind::SquareLoop { side_mm: 200.0 },
            ..SceneSpec::default()
        };
        let scene = SyntheticScene::generate(spec).unwrap();
        let (_, first) = scene.pose(1);
        let (_, last) = scene.pose(20);
        assert!((first.vector() - last.vector()).norm() < 1e-9);
        // the path actually leaves the origin in between
        let (_, mid) = scene.pose(10);
        assert!(mid.norm() > 100.0);
    }

    #[test]
    fn too_few_positions_rejected() {
        let spec = SceneSpec {
            positions: 1,
            ..SceneSpec::default()
        };
        assert!(matches!(
            SyntheticScene::generate(spec),
            Err(SynthError::TooFewPositions(1))
        ));
    }
}
