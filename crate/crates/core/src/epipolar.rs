//! Two-view epipolar geometry: robust inlier selection over a trial budget,
//! the normalized eight-point fundamental solve, essential-matrix recovery
//! and its decomposition into relative rotation and translation direction.

use nalgebra::{DMatrix, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{
    detect_affine_features, detect_sift, match_asymmetric, AffineFeatures, Descriptor,
    FeaturesError, Image, Keypoint, MatchPair, SiftParams, ViewGridParams,
};
use crate::geom::{Mat3, RotationMatrix, Vec3};
use crate::stereo::CameraIntrinsics;

#[derive(Debug, Error)]
pub enum EpipolarError {
    #[error("degenerate correspondence configuration (design matrix rank < 8)")]
    DegenerateConfiguration,
    #[error("need at least 8 correspondences, got {0}")]
    TooFewPairs(usize),
    #[error("insufficient inliers: best support {support} of {total}")]
    InsufficientInliers { support: usize, total: usize },
    #[error("cheirality vote is ambiguous (no candidate holds a strict majority)")]
    CheiralityAmbiguous,
    #[error("frame pair skipped: {0}")]
    SkipPair(String),
}

impl EpipolarError {
    /// Folds the recoverable per-pair failures into `SkipPair` so sequence
    /// drivers can freeze the previous estimate and continue.
    pub fn into_skip(self) -> EpipolarError {
        match self {
            EpipolarError::SkipPair(_) => self,
            other => EpipolarError::SkipPair(other.to_string()),
        }
    }
}

/// Rank-2 fundamental matrix, canonically scaled: unit Frobenius norm with
/// the largest-magnitude entry positive.
#[derive(Debug, Clone, Copy)]
pub struct FundamentalMatrix(Mat3);

impl FundamentalMatrix {
    fn canonicalize(mut m: Mat3) -> Result<Self, EpipolarError> {
        let norm = m.norm();
        if !norm.is_finite() || norm < 1e-15 {
            return Err(EpipolarError::DegenerateConfiguration);
        }
        m /= norm;
        let mut extreme = 0.0f64;
        for v in m.iter() {
            if v.abs() > extreme.abs() {
                extreme = *v;
            }
        }
        if extreme < 0.0 {
            m = -m;
        }
        Ok(FundamentalMatrix(m))
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    /// `|p2ᵀ F p1|` for a pixel correspondence.
    pub fn algebraic_residual(&self, m: &MatchPair) -> f64 {
        let x1 = Vector3::new(m.p1[0], m.p1[1], 1.0);
        let x2 = Vector3::new(m.p2[0], m.p2[1], 1.0);
        (x2.transpose() * self.0 * x1)[(0, 0)].abs()
    }
}

/// Essential matrix with the (s, s, 0) singular-value structure enforced and
/// scaled so both non-zero singular values are 1.
#[derive(Debug, Clone, Copy)]
pub struct EssentialMatrix(Mat3);

impl EssentialMatrix {
    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }
}

/// Correspondences consistent with a fundamental matrix at the threshold
/// that selected them.
#[derive(Debug, Clone)]
pub struct InlierSet {
    pub matches: Vec<MatchPair>,
    pub f: FundamentalMatrix,
    pub support: usize,
}

/// Robust-estimation parameters: trial budget, residual threshold in
/// pixels, and the RNG seed that makes runs reproducible.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RansacParams {
    pub trials: usize,
    pub threshold_px: f64,
    pub seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        RansacParams {
            trials: 10_000,
            threshold_px: 1.0,
            seed: 0,
        }
    }
}

/// Hartley normalization: translate the centroid to the origin, scale the
/// mean distance to sqrt(2).
fn normalizing_transform(points: &[[f64; 2]]) -> Mat3 {
    let n = points.len() as f64;
    let (mut mx, mut my) = (0.0, 0.0);
    for p in points {
        mx += p[0];
        my += p[1];
    }
    mx /= n;
    my /= n;
    let mut mean_dist = 0.0;
    for p in points {
        mean_dist += ((p[0] - mx).powi(2) + (p[1] - my).powi(2)).sqrt();
    }
    mean_dist /= n;
    let s = if mean_dist > 1e-12 {
        std::f64::consts::SQRT_2 / mean_dist
    } else {
        1.0
    };
    Mat3::new(s, 0.0, -s * mx, 0.0, s, -s * my, 0.0, 0.0, 1.0)
}

/// Normalized eight-point solve with rank-2 enforcement.
pub fn fundamental_eight_point(pairs: &[MatchPair]) -> Result<FundamentalMatrix, EpipolarError> {
    if pairs.len() < 8 {
        return Err(EpipolarError::TooFewPairs(pairs.len()));
    }
    let pts1: Vec<[f64; 2]> = pairs.iter().map(|m| m.p1).collect();
    let pts2: Vec<[f64; 2]> = pairs.iter().map(|m| m.p2).collect();
    let t1 = normalizing_transform(&pts1);
    let t2 = normalizing_transform(&pts2);

    // a zero row pads minimal samples to 9x9: the thin SVD of an 8x9 matrix
    // would not expose the null-space vector
    let mut design = DMatrix::zeros(pairs.len().max(9), 9);
    for (row, m) in pairs.iter().enumerate() {
        let p1 = t1 * Vector3::new(m.p1[0], m.p1[1], 1.0);
        let p2 = t2 * Vector3::new(m.p2[0], m.p2[1], 1.0);
        let (x1, y1) = (p1.x / p1.z, p1.y / p1.z);
        let (x2, y2) = (p2.x / p2.z, p2.y / p2.z);
        design[(row, 0)] = x2 * x1;
        design[(row, 1)] = x2 * y1;
        design[(row, 2)] = x2;
        design[(row, 3)] = y2 * x1;
        design[(row, 4)] = y2 * y1;
        design[(row, 5)] = y2;
        design[(row, 6)] = x1;
        design[(row, 7)] = y1;
        design[(row, 8)] = 1.0;
    }
    let svd = design.svd(false, true);
    let v_t = svd.v_t.as_ref().ok_or(EpipolarError::DegenerateConfiguration)?;
    // order singular values descending over the 9 columns of V
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let largest = svd.singular_values[order[0]];
    // rank < 8 means the null space is not unique
    if order.len() < 9 || svd.singular_values[order[7]] < 1e-9 * largest {
        return Err(EpipolarError::DegenerateConfiguration);
    }
    let null_row = v_t.row(order[8]);
    let f_norm = Mat3::new(
        null_row[0], null_row[1], null_row[2], null_row[3], null_row[4], null_row[5], null_row[6],
        null_row[7], null_row[8],
    );

    // rank-2 enforcement by subtracting the smallest rank-1 component; this
    // avoids a full U*S*V^T reconstruction, which loses half the mantissa
    // when the two leading singular values are clustered
    let svd3 = f_norm.svd(true, true);
    let u = svd3.u.ok_or(EpipolarError::DegenerateConfiguration)?;
    let v_t3 = svd3.v_t.ok_or(EpipolarError::DegenerateConfiguration)?;
    let smallest = (0..3)
        .min_by(|&a, &b| svd3.singular_values[a].total_cmp(&svd3.singular_values[b]))
        .expect("three singular values");
    let f_rank2 = f_norm
        - u.column(smallest) * v_t3.row(smallest) * svd3.singular_values[smallest];

    FundamentalMatrix::canonicalize(t2.transpose() * f_rank2 * t1)
}

/// First-order geometric (Sampson) distance of a correspondence to the
/// epipolar constraint, in pixels.
pub fn sampson_distance(f: &Mat3, p1: [f64; 2], p2: [f64; 2]) -> f64 {
    let x1 = Vector3::new(p1[0], p1[1], 1.0);
    let x2 = Vector3::new(p2[0], p2[1], 1.0);
    let fx1 = f * x1;
    let ftx2 = f.transpose() * x2;
    let r = (x2.transpose() * f * x1)[(0, 0)];
    let denom = fx1.x * fx1.x + fx1.y * fx1.y + ftx2.x * ftx2.x + ftx2.y * ftx2.y;
    if denom < 1e-18 {
        return f64::INFINITY;
    }
    (r * r / denom).sqrt()
}

fn count_inliers(f: &FundamentalMatrix, pairs: &[MatchPair], threshold: f64) -> usize {
    pairs
        .iter()
        .filter(|m| sampson_distance(f.matrix(), m.p1, m.p2) < threshold)
        .count()
}

fn inlier_indices(f: &FundamentalMatrix, pairs: &[MatchPair], threshold: f64) -> Vec<usize> {
    pairs
        .iter()
        .enumerate()
        .filter(|(_, m)| sampson_distance(f.matrix(), m.p1, m.p2) < threshold)
        .map(|(i, _)| i)
        .collect()
}

/// Best-support fundamental matrix over seeded minimal samples, refit on the
/// winning inlier set. Samples are drawn as a sequential stream from the
/// seed, so a longer trial budget extends (never reshuffles) the sample
/// sequence; trials are scored in parallel with ties broken by the lowest
/// trial index.
pub fn ransac_inliers(
    pairs: &[MatchPair],
    params: &RansacParams,
) -> Result<InlierSet, EpipolarError> {
    if pairs.len() < 8 {
        return Err(EpipolarError::InsufficientInliers {
            support: pairs.len(),
            total: pairs.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let samples: Vec<[usize; 8]> = (0..params.trials)
        .map(|_| {
            let mut sample = [usize::MAX; 8];
            let mut filled = 0;
            while filled < 8 {
                let cand = rng.gen_range(0..pairs.len());
                if !sample[..filled].contains(&cand) {
                    sample[filled] = cand;
                    filled += 1;
                }
            }
            sample
        })
        .collect();

    let best = samples
        .par_iter()
        .enumerate()
        .filter_map(|(trial, sample)| {
            let minimal: Vec<MatchPair> = sample.iter().map(|&i| pairs[i]).collect();
            let f = fundamental_eight_point(&minimal).ok()?;
            let support = count_inliers(&f, pairs, params.threshold_px);
            Some((support, trial, f))
        })
        .reduce(
            || (0usize, usize::MAX, FundamentalMatrix(Mat3::identity())),
            |a, b| {
                if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
                    b
                } else {
                    a
                }
            },
        );

    let (sample_support, _, sample_f) = best;
    if sample_support < 8 {
        return Err(EpipolarError::InsufficientInliers {
            support: sample_support,
            total: pairs.len(),
        });
    }

    // refit-and-recount to a fixed point: the least-squares model over the
    // consensus set ejects outliers that a bent minimal-sample model
    // captured opportunistically
    let fixed_point = |start: FundamentalMatrix| {
        let mut model = start;
        let mut current = inlier_indices(&model, pairs, params.threshold_px);
        for _ in 0..8 {
            if current.len() < 8 {
                break;
            }
            let subset: Vec<MatchPair> = current.iter().map(|&i| pairs[i]).collect();
            let Ok(refit) = fundamental_eight_point(&subset) else {
                break;
            };
            let next = inlier_indices(&refit, pairs, params.threshold_px);
            if next.len() < 8 {
                break;
            }
            let stable = next == current;
            model = refit;
            current = next;
            if stable {
                break;
            }
        }
        (model, current)
    };

    let (mut model, mut current) = fixed_point(sample_f);

    // Exact-core detection. When the data is (near-)noiseless, a model bent
    // by up to the threshold can legitimately out-vote the true one by
    // capturing a stray correspondence; neither consensus size nor robust
    // cost separates them. What does distinguish the true model is that
    // almost the whole consensus fits it to machine precision. Look for
    // such a core with minimal samples drawn inside the consensus.
    const EXACT_CORE_TOL: f64 = 1e-6;
    if current.len() >= 8 {
        let mut best_core: Option<(usize, FundamentalMatrix)> = None;
        for _ in 0..32 {
            let mut sample = [usize::MAX; 8];
            let mut filled = 0;
            while filled < 8 {
                let cand = current[rng.gen_range(0..current.len())];
                if !sample[..filled].contains(&cand) {
                    sample[filled] = cand;
                    filled += 1;
                }
            }
            let minimal: Vec<MatchPair> = sample.iter().map(|&i| pairs[i]).collect();
            let Ok(f) = fundamental_eight_point(&minimal) else {
                continue;
            };
            let tiny = current
                .iter()
                .filter(|&&i| sampson_distance(f.matrix(), pairs[i].p1, pairs[i].p2) < EXACT_CORE_TOL)
                .count();
            if best_core.as_ref().is_none_or(|(n, _)| tiny > *n) {
                best_core = Some((tiny, f));
            }
        }
        if let Some((core_size, core_f)) = best_core {
            if core_size >= 8 && core_size * 4 >= current.len() * 3 {
                let (core_model, core_set) = fixed_point(core_f);
                if core_set.len() >= 8 {
                    model = core_model;
                    current = core_set;
                }
            }
        }
    }

    // final polish: refit on the residual core at 2.5 robust sigma. Matches
    // that are wrong by less than the threshold (e.g. a feature locking onto
    // a neighbouring pattern element) stay in the consensus but would bias
    // the least-squares model; the scale-tightened refit excludes them from
    // the fit while membership is still reported at the nominal threshold.
    for _ in 0..2 {
        if current.len() < 16 {
            break;
        }
        let mut residuals: Vec<f64> = current
            .iter()
            .map(|&i| sampson_distance(model.matrix(), pairs[i].p1, pairs[i].p2))
            .collect();
        residuals.sort_by(f64::total_cmp);
        let sigma = residuals[residuals.len() / 2] / 0.6745;
        let tight = (2.5 * sigma).clamp(1e-7, params.threshold_px);
        if tight >= params.threshold_px {
            break;
        }
        let core = inlier_indices(&model, pairs, tight);
        if core.len() < 16 {
            break;
        }
        let subset: Vec<MatchPair> = core.iter().map(|&i| pairs[i]).collect();
        let Ok(refit) = fundamental_eight_point(&subset) else {
            break;
        };
        let next = inlier_indices(&refit, pairs, params.threshold_px);
        if next.len() < 8 {
            break;
        }
        model = refit;
        current = next;
    }

    if current.len() < 8 {
        return Err(EpipolarError::InsufficientInliers {
            support: current.len(),
            total: pairs.len(),
        });
    }
    Ok(InlierSet {
        support: current.len(),
        matches: current.iter().map(|&i| pairs[i]).collect(),
        f: model,
    })
}

/// `E = K2ᵀ F K1` with the singular values projected to (1, 1, 0).
pub fn essential_from_fundamental(
    f: &FundamentalMatrix,
    k1: &CameraIntrinsics,
    k2: &CameraIntrinsics,
) -> EssentialMatrix {
    let raw = k2.k_matrix().transpose() * f.matrix() * k1.k_matrix();
    enforce_essential(&raw)
}

fn enforce_essential(raw: &Mat3) -> EssentialMatrix {
    let svd = raw.svd(true, true);
    let u = svd.u.expect("3x3 svd yields u");
    let v_t = svd.v_t.expect("3x3 svd yields v_t");
    let mut idx: Vec<usize> = (0..3).collect();
    idx.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let mut sigma = Vec3::zeros();
    sigma[idx[0]] = 1.0;
    sigma[idx[1]] = 1.0;
    EssentialMatrix(u * Mat3::from_diagonal(&sigma) * v_t)
}

/// Linear two-view triangulation in normalized camera coordinates with
/// `P1 = [I|0]`, `P2 = [R|t]`; returns the depths in both frames.
fn triangulate_normalized(x1: &Vec3, x2: &Vec3, r: &Mat3, t: &Vec3) -> Option<(f64, f64)> {
    let mut a = nalgebra::Matrix4::zeros();
    let p1 = Mat3::identity();
    // row-major stacking of x cross (P X) = 0 constraints
    for c in 0..3 {
        a[(0, c)] = x1.x * p1[(2, c)] - p1[(0, c)];
        a[(1, c)] = x1.y * p1[(2, c)] - p1[(1, c)];
        a[(2, c)] = x2.x * r[(2, c)] - r[(0, c)];
        a[(3, c)] = x2.y * r[(2, c)] - r[(1, c)];
    }
    a[(0, 3)] = 0.0;
    a[(1, 3)] = 0.0;
    a[(2, 3)] = x2.x * t.z - t.x;
    a[(3, 3)] = x2.y * t.z - t.y;
    let svd = a.svd(false, true);
    let v_t = svd.v_t?;
    let mut idx: Vec<usize> = (0..4).collect();
    idx.sort_by(|&p, &q| svd.singular_values[p].total_cmp(&svd.singular_values[q]));
    let h = v_t.row(idx[0]);
    if h[3].abs() < 1e-15 {
        return None;
    }
    let point = Vec3::new(h[0] / h[3], h[1] / h[3], h[2] / h[3]);
    let z1 = point.z;
    let z2 = (r * point + t).z;
    Some((z1, z2))
}

/// Picks the (R, t) candidate placing the most triangulated inliers in front
/// of both cameras. Returned in the point-transform convention
/// `x2 = R x1 + t` with `t` unit-norm; translation scale is unobservable
/// from two views.
pub fn decompose_essential(
    e: &EssentialMatrix,
    inliers: &InlierSet,
    k1: &CameraIntrinsics,
    k2: &CameraIntrinsics,
) -> Result<(RotationMatrix, Vec3), EpipolarError> {
    if inliers.matches.is_empty() {
        return Err(EpipolarError::CheiralityAmbiguous);
    }
    // zero parallax cannot decide cheirality: the no-motion case is
    // ambiguous by construction
    if median_displacement(&inliers.matches) < 1e-9 {
        return Err(EpipolarError::CheiralityAmbiguous);
    }
    let svd = e.matrix().svd(true, true);
    let mut u = svd.u.expect("3x3 svd yields u");
    let mut v_t = svd.v_t.expect("3x3 svd yields v_t");
    if u.determinant() < 0.0 {
        u = -u;
    }
    if v_t.determinant() < 0.0 {
        v_t = -v_t;
    }
    let w = Mat3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
    let r1 = RotationMatrix::try_new(u * w * v_t)
        .map_err(|_| EpipolarError::CheiralityAmbiguous)?;
    let r2 = RotationMatrix::try_new(u * w.transpose() * v_t)
        .map_err(|_| EpipolarError::CheiralityAmbiguous)?;
    let t = u.column(2).into_owned();

    let k1_inv = k1.k_inverse();
    let k2_inv = k2.k_inverse();
    let candidates = [
        (r1, t),
        (r1, -t),
        (r2, t),
        (r2, -t),
    ];
    let mut votes = [0usize; 4];
    let mut total = 0usize;
    for m in &inliers.matches {
        let x1 = k1_inv * Vector3::new(m.p1[0], m.p1[1], 1.0);
        let x2 = k2_inv * Vector3::new(m.p2[0], m.p2[1], 1.0);
        total += 1;
        for (ci, (r, tc)) in candidates.iter().enumerate() {
            if let Some((z1, z2)) = triangulate_normalized(&x1, &x2, r.matrix(), tc) {
                if z1 > 0.0 && z2 > 0.0 {
                    votes[ci] += 1;
                }
            }
        }
    }
    let best = (0..4).max_by_key(|&i| votes[i]).expect("four candidates");
    // strict majority of the inlier votes, and strictly ahead of the runner-up
    let runner_up = (0..4)
        .filter(|&i| i != best)
        .map(|i| votes[i])
        .max()
        .unwrap_or(0);
    if votes[best] * 2 <= total || votes[best] == runner_up {
        return Err(EpipolarError::CheiralityAmbiguous);
    }
    let (r, tc) = candidates[best];
    Ok((r, tc / tc.norm()))
}

/// Signed first-order epipolar residual in normalized coordinates.
fn sampson_signed(e: &Mat3, x1: &Vec3, x2: &Vec3) -> f64 {
    let ex1 = e * x1;
    let etx2 = e.transpose() * x2;
    let num = (x2.transpose() * e * x1)[(0, 0)];
    let denom = (ex1.x * ex1.x + ex1.y * ex1.y + etx2.x * etx2.x + etx2.y * etx2.y).sqrt();
    if denom < 1e-18 {
        return 0.0;
    }
    num / denom
}

/// Gauss-Newton refinement of a relative pose on the essential manifold
/// (3 rotation + 2 translation-direction parameters), minimizing the
/// Sampson error of the inliers in normalized coordinates. Seeded by the
/// closed-form decomposition; at a noiseless optimum it is a no-op.
pub fn refine_relative_pose(
    r0: &RotationMatrix,
    t0: &Vec3,
    inliers: &InlierSet,
    k1: &CameraIntrinsics,
    k2: &CameraIntrinsics,
) -> (RotationMatrix, Vec3) {
    use nalgebra::{Rotation3, SMatrix, SVector};
    let k1_inv = k1.k_inverse();
    let k2_inv = k2.k_inverse();
    let points: Vec<(Vec3, Vec3)> = inliers
        .matches
        .iter()
        .map(|m| {
            (
                k1_inv * Vector3::new(m.p1[0], m.p1[1], 1.0),
                k2_inv * Vector3::new(m.p2[0], m.p2[1], 1.0),
            )
        })
        .collect();
    if points.len() < 8 {
        return (*r0, *t0);
    }
    // orthonormal basis of the tangent plane at the translation direction
    let tangent_basis = |t: &Vec3| -> (Vec3, Vec3) {
        let pick = if t.x.abs() < 0.9 {
            Vec3::new(1.0, 0.0, 0.0)
        } else {
            Vec3::new(0.0, 1.0, 0.0)
        };
        let u = t.cross(&pick).normalize();
        let v = t.cross(&u).normalize();
        (u, v)
    };
    let compose = |r: &Mat3, t: &Vec3, params: &SVector<f64, 5>| -> (Mat3, Vec3) {
        let omega = Vec3::new(params[0], params[1], params[2]);
        let r_new = Rotation3::from_scaled_axis(omega).matrix() * r;
        let (u, v) = tangent_basis(t);
        let t_new = (t + u * params[3] + v * params[4]).normalize();
        (r_new, t_new)
    };
    let essential = |r: &Mat3, t: &Vec3| -> Mat3 {
        Mat3::new(0.0, -t.z, t.y, t.z, 0.0, -t.x, -t.y, t.x, 0.0) * r
    };
    let cost = |r: &Mat3, t: &Vec3| -> f64 {
        let e = essential(r, t);
        points
            .iter()
            .map(|(x1, x2)| sampson_signed(&e, x1, x2).powi(2))
            .sum()
    };

    let mut r = *r0.matrix();
    let mut t = *t0;
    let mut lambda = 1e-6;
    let mut current_cost = cost(&r, &t);
    for _ in 0..12 {
        let e = essential(&r, &t);
        let residuals: Vec<f64> = points
            .iter()
            .map(|(x1, x2)| sampson_signed(&e, x1, x2))
            .collect();
        // forward-difference Jacobian over the 5 pose parameters
        let eps = 1e-7;
        let mut jtj = SMatrix::<f64, 5, 5>::zeros();
        let mut jtr = SVector::<f64, 5>::zeros();
        let mut jacobian = vec![[0.0f64; 5]; points.len()];
        for p in 0..5 {
            let mut step = SVector::<f64, 5>::zeros();
            step[p] = eps;
            let (rp, tp) = compose(&r, &t, &step);
            let ep = essential(&rp, &tp);
            for (i, (x1, x2)) in points.iter().enumerate() {
                jacobian[i][p] = (sampson_signed(&ep, x1, x2) - residuals[i]) / eps;
            }
        }
        for (i, row) in jacobian.iter().enumerate() {
            for a in 0..5 {
                jtr[a] += row[a] * residuals[i];
                for bcol in 0..5 {
                    jtj[(a, bcol)] += row[a] * row[bcol];
                }
            }
        }
        let mut improved = false;
        for _ in 0..6 {
            let mut damped = jtj;
            for d in 0..5 {
                damped[(d, d)] += lambda * jtj[(d, d)].max(1e-12);
            }
            let Some(delta) = damped.lu().solve(&(-jtr)) else {
                break;
            };
            let (r_new, t_new) = compose(&r, &t, &delta);
            let new_cost = cost(&r_new, &t_new);
            if new_cost < current_cost {
                let rel_gain = (current_cost - new_cost) / current_cost.max(1e-300);
                r = r_new;
                t = t_new;
                current_cost = new_cost;
                lambda = (lambda / 10.0).max(1e-12);
                improved = rel_gain > 1e-12;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    let rotation = RotationMatrix::try_new(r).unwrap_or(*r0);
    (rotation, t)
}

/// Feature, matching and robust-estimation parameters for one frame pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairConfig {
    pub sift: SiftParams,
    pub view_grid: ViewGridParams,
    pub match_ratio: f64,
    pub ransac: RansacParams,
    /// Median match displacement (px) below which the pair is treated as
    /// motionless and the relative rotation reported as identity.
    pub min_motion_px: f64,
    /// Gauss-Newton polish of the decomposed pose on the inlier set.
    pub refine_pose: bool,
}

impl Default for PairConfig {
    fn default() -> Self {
        PairConfig {
            sift: SiftParams::default(),
            view_grid: ViewGridParams::default(),
            match_ratio: 0.75,
            ransac: RansacParams::default(),
            min_motion_px: 0.75,
            refine_pose: true,
        }
    }
}

fn median_displacement(matches: &[MatchPair]) -> f64 {
    let mut d: Vec<f64> = matches
        .iter()
        .map(|m| ((m.p1[0] - m.p2[0]).powi(2) + (m.p1[1] - m.p2[1]).powi(2)).sqrt())
        .collect();
    d.sort_by(f64::total_cmp);
    d[d.len() / 2]
}

/// Relative camera rotation between two already-detected feature sets: the
/// plain features of the earlier frame against the simulated views of the
/// later frame. Returns the camera-orientation change (transpose of the
/// point-transform rotation).
pub fn relative_rotation_from_features(
    feats1: &[(Keypoint, Descriptor)],
    views2: &AffineFeatures,
    k1: &CameraIntrinsics,
    k2: &CameraIntrinsics,
    cfg: &PairConfig,
) -> Result<RotationMatrix, EpipolarError> {
    let matches = match_asymmetric(feats1, views2, cfg.match_ratio).map_err(|e| match e {
        FeaturesError::NoMatches | FeaturesError::EmptyFeatureSet => {
            EpipolarError::SkipPair(e.to_string())
        }
        other => EpipolarError::SkipPair(other.to_string()),
    })?;
    if median_displacement(&matches) < cfg.min_motion_px {
        return Ok(RotationMatrix::identity());
    }
    let inliers = ransac_inliers(&matches, &cfg.ransac).map_err(EpipolarError::into_skip)?;
    let e = essential_from_fundamental(&inliers.f, k1, k2);
    let (mut r_points, t) =
        decompose_essential(&e, &inliers, k1, k2).map_err(EpipolarError::into_skip)?;
    if cfg.refine_pose {
        (r_points, _) = refine_relative_pose(&r_points, &t, &inliers, k1, k2);
    }
    Ok(r_points.transpose())
}

/// Full per-pair estimate from raw frames: detect plain features on the
/// first image, affine-simulated features on the second, match, select
/// inliers, and decompose. The translation direction is discarded here; the
/// stereo measurement path owns metric translation.
pub fn relative_rotation_for_pair(
    i1: &Image,
    i2: &Image,
    k1: &CameraIntrinsics,
    k2: &CameraIntrinsics,
    cfg: &PairConfig,
) -> Result<RotationMatrix, EpipolarError> {
    let feats1 =
        detect_sift(i1, &cfg.sift).map_err(|e| EpipolarError::SkipPair(e.to_string()))?;
    let views2 = detect_affine_features(i2, &cfg.sift, &cfg.view_grid)
        .map_err(|e| EpipolarError::SkipPair(e.to_string()))?;
    relative_rotation_from_features(&feats1, &views2, k1, k2, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{Camera, SceneSpec, SyntheticScene, TrajectoryKind};

    fn arc_scene(seed: u64, n_points: usize) -> SyntheticScene {
        SyntheticScene::generate(SceneSpec {
            seed,
            n_points,
            positions: 3,
            trajectory: TrajectoryKind::Arc {
                radius_mm: 1500.0,
                step_deg: 4.0,
            },
            ..SceneSpec::default()
        })
        .unwrap()
    }

    #[test]
    fn eight_point_recovers_true_fundamental() {
        let scene = arc_scene(11, 120);
        let pairs = scene.exact_correspondences(Camera::Left, 1, 2);
        assert!(pairs.len() >= 8);
        let f = fundamental_eight_point(&pairs).unwrap();
        let mut truth = scene.true_fundamental(Camera::Left, 1, 2);
        // canonical sign of the estimate
        let mut extreme = 0.0f64;
        for v in truth.iter() {
            if v.abs() > extreme.abs() {
                extreme = *v;
            }
        }
        if extreme < 0.0 {
            truth = -truth;
        }
        assert!(
            (f.matrix() - truth).norm() < 1e-8,
            "fundamental deviates by {:.3e}",
            (f.matrix() - truth).norm()
        );
        for m in &pairs {
            assert!(f.algebraic_residual(m) < 1e-8);
        }
    }

    #[test]
    fn eight_point_on_rectified_stereo_has_canonical_form() {
        // correspondences between the left and right frames of a
        // horizontal-baseline rig: epipole at x = infinity
        let scene = arc_scene(13, 90);
        let pairs: Vec<MatchPair> = scene
            .exact_stereo_pairs(1)
            .into_iter()
            .map(|(l, r, _)| MatchPair {
                p1: l,
                p2: r,
                distance: 0.0,
            })
            .collect();
        let f = fundamental_eight_point(&pairs).unwrap();
        let m = f.matrix();
        // proportional to [0 0 0; 0 0 -1; 0 1 0] up to canonical sign
        let expected_mag = 1.0 / std::f64::consts::SQRT_2;
        assert!(m[(1, 2)].abs() > expected_mag - 1e-6);
        assert!(m[(2, 1)].abs() > expected_mag - 1e-6);
        assert!((m[(1, 2)] + m[(2, 1)]).abs() < 1e-6, "skew structure violated");
        for (i, j) in [(0, 0), (0, 1), (0, 2), (1, 0), (1, 1), (2, 0), (2, 2)] {
            assert!(m[(i, j)].abs() < 1e-6, "F[{i}{j}] = {}", m[(i, j)]);
        }
    }

    #[test]
    fn eight_point_rejects_degenerate_input() {
        let identical: Vec<MatchPair> = (0..10)
            .map(|_| MatchPair {
                p1: [100.0, 100.0],
                p2: [120.0, 100.0],
                distance: 0.0,
            })
            .collect();
        assert!(matches!(
            fundamental_eight_point(&identical),
            Err(EpipolarError::DegenerateConfiguration)
        ));
        assert!(matches!(
            fundamental_eight_point(&identical[..7]),
            Err(EpipolarError::TooFewPairs(7))
        ));
    }

    #[test]
    fn ransac_full_inlier_support() {
        let scene = arc_scene(17, 100);
        let pairs = scene.exact_correspondences(Camera::Left, 1, 2);
        let n = pairs.len();
        let set = ransac_inliers(
            &pairs,
            &RansacParams {
                trials: 300,
                threshold_px: 1.0,
                seed: 5,
            },
        )
        .unwrap();
        assert_eq!(set.support, n);
    }

    #[test]
    fn ransac_rejects_injected_outliers() {
        let mut scene = arc_scene(19, 100);
        scene.spec.outlier_fraction = 1.0 / 3.0;
        let pairs = scene.corrupted_correspondences(Camera::Left, 1, 2, 77, 3.0);
        let truth = scene.true_fundamental(Camera::Left, 1, 2);
        let outliers: Vec<usize> = pairs
            .iter()
            .enumerate()
            .filter(|(_, m)| sampson_distance(&truth, m.p1, m.p2) > 1.0)
            .map(|(i, _)| i)
            .collect();
        assert!(outliers.len() > 10, "contamination too small to test");
        let set = ransac_inliers(
            &pairs,
            &RansacParams {
                trials: 2000,
                threshold_px: 1.0,
                seed: 3,
            },
        )
        .unwrap();
        assert!(set.support >= pairs.len() - outliers.len() - 2);
        for m in &set.matches {
            let d = sampson_distance(&truth, m.p1, m.p2);
            assert!(d < 1.0, "outlier admitted at true distance {d:.2}");
        }
    }

    #[test]
    fn ransac_below_minimal_sample_fails() {
        let scene = arc_scene(23, 60);
        let pairs = scene.exact_correspondences(Camera::Left, 1, 2);
        let seven = &pairs[..7];
        assert!(matches!(
            ransac_inliers(seven, &RansacParams::default()),
            Err(EpipolarError::InsufficientInliers { .. })
        ));
    }

    #[test]
    fn ransac_support_monotone_in_trials() {
        let mut scene = arc_scene(29, 90);
        scene.spec.outlier_fraction = 0.3;
        scene.spec.noise_px = 0.3;
        let pairs = scene.corrupted_correspondences(Camera::Left, 1, 2, 4, 3.0);
        let mut last = 0usize;
        for trials in [50, 200, 800] {
            let set = ransac_inliers(
                &pairs,
                &RansacParams {
                    trials,
                    threshold_px: 1.0,
                    seed: 11,
                },
            )
            .unwrap();
            assert!(
                set.support >= last,
                "support dropped from {last} to {} at {trials} trials",
                set.support
            );
            last = set.support;
        }
    }

    #[test]
    fn essential_with_identity_intrinsics_is_enforced_fundamental() {
        let scene = arc_scene(31, 80);
        let pairs = scene.exact_correspondences(Camera::Left, 1, 2);
        let f = fundamental_eight_point(&pairs).unwrap();
        let k_id = CameraIntrinsics::new(1.0, 1.0, 0.0, 0.0).unwrap();
        let e = essential_from_fundamental(&f, &k_id, &k_id);
        let direct = enforce_essential(f.matrix());
        assert!((e.matrix() - direct.matrix()).norm() < 1e-12);
        // enforcement is idempotent
        let twice = enforce_essential(e.matrix());
        assert!((twice.matrix() - e.matrix()).norm() < 1e-12);
        // singular structure (1, 1, 0)
        let svd = e.matrix().svd(false, false);
        let mut s: Vec<f64> = svd.singular_values.iter().cloned().collect();
        s.sort_by(f64::total_cmp);
        assert!(s[0].abs() < 1e-12 && (s[1] - 1.0).abs() < 1e-9 && (s[2] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn essential_matches_true_pose_construction() {
        let scene = arc_scene(37, 100);
        let pairs = scene.exact_correspondences(Camera::Left, 1, 2);
        let f = fundamental_eight_point(&pairs).unwrap();
        let e = essential_from_fundamental(&f, &scene.rig.left, &scene.rig.left);
        let (r_true, t_true) = scene.true_relative_pose(Camera::Left, 1, 2);
        let tx = Mat3::new(
            0.0, -t_true.z, t_true.y, t_true.z, 0.0, -t_true.x, -t_true.y, t_true.x, 0.0,
        );
        let mut e_true = tx * r_true;
        e_true *= std::f64::consts::SQRT_2 / e_true.norm();
        let diff_plus = (e.matrix() - e_true).norm();
        let diff_minus = (e.matrix() + e_true).norm();
        assert!(
            diff_plus.min(diff_minus) < 1e-6,
            "essential deviates by {:.3e}",
            diff_plus.min(diff_minus)
        );
    }

    #[test]
    fn decompose_recovers_rotation_and_direction() {
        let scene = arc_scene(41, 100);
        let pairs = scene.exact_correspondences(Camera::Left, 1, 2);
        let set = ransac_inliers(
            &pairs,
            &RansacParams {
                trials: 500,
                threshold_px: 1.0,
                seed: 9,
            },
        )
        .unwrap();
        let e = essential_from_fundamental(&set.f, &scene.rig.left, &scene.rig.left);
        let (r, t) = decompose_essential(&e, &set, &scene.rig.left, &scene.rig.left).unwrap();
        let (r_true, t_true) = scene.true_relative_pose(Camera::Left, 1, 2);
        assert!(
            (r.matrix() - r_true).norm() < 1e-6,
            "rotation off by {:.3e}",
            (r.matrix() - r_true).norm()
        );
        assert!(
            (t - t_true).norm() < 1e-6,
            "direction off by {:.3e}",
            (t - t_true).norm()
        );
    }

    #[test]
    fn decompose_zero_motion_is_ambiguous() {
        // identical frames and a near-zero essential matrix: after the
        // (s, s, 0) enforcement inflates the noise, no candidate pose can
        // place a majority of the zero-displacement rays in front of both
        // cameras
        let scene = arc_scene(43, 60);
        let pairs = scene.exact_correspondences(Camera::Left, 2, 2);
        let e_raw = Mat3::new(
            1.3e-14, -0.8e-14, 0.4e-14, 0.9e-14, 1.1e-14, -0.5e-14, -0.2e-14, 0.7e-14, 1.0e-14,
        );
        let e = enforce_essential(&e_raw);
        let f = FundamentalMatrix::canonicalize(
            scene.rig.left.k_inverse().transpose() * e.matrix() * scene.rig.left.k_inverse(),
        )
        .unwrap();
        let set = InlierSet {
            support: pairs.len(),
            matches: pairs,
            f,
        };
        assert!(matches!(
            decompose_essential(&e, &set, &scene.rig.left, &scene.rig.left),
            Err(EpipolarError::CheiralityAmbiguous)
        ));
    }

    #[test]
    fn recovered_pose_keeps_epipolar_residual_tiny() {
        let scene = arc_scene(47, 90);
        let pairs = scene.exact_correspondences(Camera::Left, 1, 2);
        let set = ransac_inliers(
            &pairs,
            &RansacParams {
                trials: 400,
                threshold_px: 1.0,
                seed: 21,
            },
        )
        .unwrap();
        let e = essential_from_fundamental(&set.f, &scene.rig.left, &scene.rig.left);
        let (r, t) = decompose_essential(&e, &set, &scene.rig.left, &scene.rig.left).unwrap();
        // rebuild E from the recovered pose and measure the constraint
        let tx = Mat3::new(0.0, -t.z, t.y, t.z, 0.0, -t.x, -t.y, t.x, 0.0);
        let e_rebuilt = tx * r.matrix();
        let k_inv = scene.rig.left.k_inverse();
        for m in &set.matches {
            let x1 = k_inv * Vector3::new(m.p1[0], m.p1[1], 1.0);
            let x2 = k_inv * Vector3::new(m.p2[0], m.p2[1], 1.0);
            let r_alg = (x2.transpose() * e_rebuilt * x1)[(0, 0)].abs();
            assert!(r_alg < 1e-6, "epipolar residual {r_alg:.3e}");
        }
    }
}
