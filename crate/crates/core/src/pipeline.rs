//! End-to-end camera path estimation: per-camera chained rotation
//! sequences, two-camera rotation averaging, and stereo fixed-point
//! translation chaining into a corrected trajectory.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::epipolar::{relative_rotation_from_features, EpipolarError, PairConfig};
use crate::features::{detect_affine_features, AffineFeatures, FeaturesError, Image};
use crate::geom::{
    accumulate_translation, average_rotations, chain_rotation, GeomError, Pose, PoseFlags,
    RotationMatrix, Trajectory, Translation,
};
use crate::stereo::{
    measure_world_offset, translation_for_step, CameraIntrinsics, StereoError,
    StereoMeasureConfig, StereoRig, WorldPointTracks,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("sequence too short: {0} positions, need at least 2")]
    SequenceTooShort(usize),
    #[error("left/right frame counts differ: {left} vs {right}")]
    MismatchedFrameCounts { left: usize, right: usize },
    #[error("frame {index} has dimensions {got}, expected {expected}")]
    MismatchedFrameSize {
        index: usize,
        got: String,
        expected: String,
    },
    #[error("frame {index}: {source}")]
    Frame {
        index: usize,
        source: FeaturesError,
    },
    #[error("stereo measurement: {0}")]
    Stereo(#[from] StereoError),
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error("trajectory csv: {0}")]
    Csv(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// All tunables of the path-estimation pipeline. Every random choice flows
/// from `seed`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub seed: u64,
    pub pair: PairConfig,
    pub stereo: StereoMeasureConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            pair: PairConfig::default(),
            stereo: StereoMeasureConfig::default(),
        }
    }
}

impl PipelineConfig {
    /// Pair configuration with the robust-estimation seed derived for one
    /// camera (camera index 0 or 1).
    fn pair_for_camera(&self, camera: usize) -> PairConfig {
        let mut pair = self.pair.clone();
        pair.ransac.seed = self.seed.wrapping_mul(2).wrapping_add(camera as u64 + 1);
        pair
    }
}

/// Ordered stereo frames plus rig and configuration.
#[derive(Debug)]
pub struct SequenceInput {
    pub left: Vec<Image>,
    pub right: Vec<Image>,
    pub rig: StereoRig,
    pub config: PipelineConfig,
}

impl SequenceInput {
    pub fn new(
        left: Vec<Image>,
        right: Vec<Image>,
        rig: StereoRig,
        config: PipelineConfig,
    ) -> Result<Self, PipelineError> {
        if left.len() != right.len() {
            return Err(PipelineError::MismatchedFrameCounts {
                left: left.len(),
                right: right.len(),
            });
        }
        if left.len() < 2 {
            return Err(PipelineError::SequenceTooShort(left.len()));
        }
        let expected = (left[0].width(), left[0].height());
        for (index, frame) in left.iter().chain(right.iter()).enumerate() {
            if (frame.width(), frame.height()) != expected {
                return Err(PipelineError::MismatchedFrameSize {
                    index: index % left.len(),
                    got: format!("{}x{}", frame.width(), frame.height()),
                    expected: format!("{}x{}", expected.0, expected.1),
                });
            }
        }
        Ok(SequenceInput {
            left,
            right,
            rig,
            config,
        })
    }

    pub fn positions(&self) -> usize {
        self.left.len()
    }
}

/// Chained rotation at one position, with the flag recording whether the
/// relative estimate for the step into this position had to be reused from
/// the previous step.
#[derive(Debug, Clone, Copy)]
pub struct RotationStep {
    pub rotation: RotationMatrix,
    pub reused: bool,
}

/// Chains per-pair relative rotations into finals for one camera. Position 1
/// is the identity. A pair that cannot be estimated freezes the previous
/// relative rotation and marks the step.
pub fn estimate_rotation_sequence(
    frames: &[Image],
    intrinsics: &CameraIntrinsics,
    cfg: &PairConfig,
) -> Result<Vec<RotationStep>, PipelineError> {
    let mut steps = vec![RotationStep {
        rotation: RotationMatrix::identity(),
        reused: false,
    }];
    if frames.len() <= 1 {
        return Ok(steps);
    }
    // every frame is detected once; the identity view doubles as the plain
    // feature set when the frame acts as the earlier image of a pair
    let mut features: Vec<AffineFeatures> = Vec::with_capacity(frames.len());
    for (index, frame) in frames.iter().enumerate() {
        let feats = detect_affine_features(frame, &cfg.sift, &cfg.view_grid)
            .map_err(|source| PipelineError::Frame { index, source })?;
        features.push(feats);
    }
    let mut last_relative = RotationMatrix::identity();
    for p in 2..=frames.len() {
        let feats1 = features[p - 2].identity_features();
        let views2 = &features[p - 1];
        let (relative, reused) =
            match relative_rotation_from_features(feats1, views2, intrinsics, intrinsics, cfg) {
                Ok(r) => (r, false),
                Err(EpipolarError::SkipPair(_)) => (last_relative, true),
                Err(other) => (last_relative, matches!(other.into_skip(), _)),
            };
        last_relative = relative;
        let rotation = chain_rotation(&steps[p - 2].rotation, &relative, p);
        steps.push(RotationStep { rotation, reused });
    }
    Ok(steps)
}

/// Runs the full correction: rotation sequences for both cameras, averaged
/// per position, then stereo fixed-point translation chaining. Pose 1 is
/// pinned to (identity, zero).
pub fn correct_path(input: &SequenceInput) -> Result<Trajectory, PipelineError> {
    let n = input.positions();
    let (seq_left, seq_right) = rayon::join(
        || {
            estimate_rotation_sequence(
                &input.left,
                &input.rig.left,
                &input.config.pair_for_camera(0),
            )
        },
        || {
            estimate_rotation_sequence(
                &input.right,
                &input.rig.right,
                &input.config.pair_for_camera(1),
            )
        },
    );
    let seq_left = seq_left?;
    let seq_right = seq_right?;

    // two-camera correction: average the chained finals elementwise and
    // project back onto the rotation group; a degenerate mean falls back to
    // the first camera
    let mut rotations = Vec::with_capacity(n);
    let mut rotation_reused = Vec::with_capacity(n);
    for p in 0..n {
        let averaged = average_rotations(&seq_left[p].rotation, &seq_right[p].rotation)
            .unwrap_or(seq_left[p].rotation);
        rotations.push(if p == 0 {
            RotationMatrix::identity()
        } else {
            averaged
        });
        rotation_reused.push(seq_left[p].reused || seq_right[p].reused);
    }

    // translation chaining from persistent stereo landmarks
    let mut tracks = WorldPointTracks::new();
    let mut translations = vec![Translation::zero(); n];
    let mut translation_reused = vec![false; n];
    let mut last_step = Translation::zero();
    let first = measure_world_offset(
        &input.left[0],
        &input.right[0],
        &input.rig,
        &mut tracks,
        &input.config.stereo,
    );
    match first {
        Ok(_) | Err(StereoError::TrackLost(_)) => {}
        Err(other) => return Err(other.into()),
    }
    translation_reused[0] = first.is_err();
    for p in 2..=n {
        let measured = measure_world_offset(
            &input.left[p - 1],
            &input.right[p - 1],
            &input.rig,
            &mut tracks,
            &input.config.stereo,
        );
        match measured {
            Ok(_t_wp) => {
                let pairs = tracks.persistent_pairs();
                if pairs.is_empty() {
                    translation_reused[p - 1] = true;
                } else {
                    // per-landmark world-frame steps, robustly aggregated
                    let steps: Vec<crate::geom::Vec3> = pairs
                        .iter()
                        .map(|(prev, cur)| {
                            *translation_for_step(
                                &Translation::from(*cur),
                                &Translation::from(*prev),
                                &rotations[p - 1],
                                &rotations[p - 2],
                            )
                            .vector()
                        })
                        .collect();
                    let median = crate::stereo::componentwise_median(&steps)
                        .expect("non-empty step set");
                    last_step = Translation::from(median);
                }
            }
            Err(StereoError::TrackLost(_)) => {
                translation_reused[p - 1] = true;
            }
            Err(other) => return Err(other.into()),
        }
        translations[p - 1] =
            accumulate_translation(&translations[p - 2], &last_step, p);
    }

    let poses: Vec<Pose> = (0..n)
        .map(|p| Pose {
            position_index: p + 1,
            rotation: rotations[p],
            translation: translations[p],
            flags: PoseFlags {
                rotation_reused: rotation_reused[p],
                translation_reused: translation_reused[p],
            },
        })
        .collect();
    Ok(Trajectory::new(poses)?)
}

pub const TRAJECTORY_CSV_HEADER: &str =
    "p,tx_mm,ty_mm,tz_mm,r11,r12,r13,r21,r22,r23,r31,r32,r33,flags";

/// Writes the trajectory CSV. Floats use the shortest round-trip
/// representation, so re-reading reproduces the values bit-exactly.
pub fn write_trajectory_csv(
    trajectory: &Trajectory,
    mut out: impl Write,
) -> Result<(), PipelineError> {
    writeln!(out, "{TRAJECTORY_CSV_HEADER}")?;
    for pose in trajectory.poses() {
        let t = pose.translation.vector();
        let m = pose.rotation.matrix();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            pose.position_index,
            t.x,
            t.y,
            t.z,
            m[(0, 0)],
            m[(0, 1)],
            m[(0, 2)],
            m[(1, 0)],
            m[(1, 1)],
            m[(1, 2)],
            m[(2, 0)],
            m[(2, 1)],
            m[(2, 2)],
            pose.flags.token(),
        )?;
    }
    Ok(())
}

pub fn read_trajectory_csv(reader: impl BufRead) -> Result<Trajectory, PipelineError> {
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| PipelineError::Csv("empty file".into()))??;
    if header.trim() != TRAJECTORY_CSV_HEADER {
        return Err(PipelineError::Csv(format!("unexpected header: {header}")));
    }
    let mut poses = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 14 {
            return Err(PipelineError::Csv(format!(
                "row {}: expected 14 fields, got {}",
                lineno + 2,
                fields.len()
            )));
        }
        let parse = |s: &str| -> Result<f64, PipelineError> {
            s.trim()
                .parse::<f64>()
                .map_err(|e| PipelineError::Csv(format!("row {}: {e}", lineno + 2)))
        };
        let position_index: usize = fields[0]
            .trim()
            .parse()
            .map_err(|e| PipelineError::Csv(format!("row {}: {e}", lineno + 2)))?;
        let translation = Translation::new(parse(fields[1])?, parse(fields[2])?, parse(fields[3])?);
        let mut m = [0.0f64; 9];
        for (i, slot) in m.iter_mut().enumerate() {
            *slot = parse(fields[4 + i])?;
        }
        let rotation = RotationMatrix::try_new(crate::geom::Mat3::from_row_slice(&m))
            .map_err(|e| PipelineError::Csv(format!("row {}: {e}", lineno + 2)))?;
        let flags = PoseFlags::parse(fields[13].trim())
            .ok_or_else(|| PipelineError::Csv(format!("row {}: bad flags", lineno + 2)))?;
        poses.push(Pose {
            position_index,
            rotation,
            translation,
            flags,
        });
    }
    Ok(Trajectory::new(poses)?)
}
