//! Feature detection and matching: plain scale-invariant features for the
//! first image, affine-simulated views for the second, and the asymmetric
//! matcher that joins them.

mod affine;
mod image;
mod sift;

pub use affine::{simulate_affine_views, AffineView, ViewGridParams};
pub use image::Image;
pub use sift::{detect_sift, Descriptor, Keypoint, SiftParams};

use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FeaturesError {
    #[error("image {width}x{height} is below the 32x32 detection minimum")]
    ImageTooSmall { width: usize, height: usize },
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("invalid view grid: {0}")]
    InvalidViewGrid(String),
    #[error("no matches between the feature sets")]
    NoMatches,
    #[error("feature set is empty")]
    EmptyFeatureSet,
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("image codec: {0}")]
    Codec(#[from] ::image::ImageError),
}

/// Correspondence between a point in image 1 and a point in image 2 (already
/// mapped back from any simulated view), with the descriptor distance.
#[derive(Debug, Clone, Copy)]
pub struct MatchPair {
    pub p1: [f64; 2],
    pub p2: [f64; 2],
    pub distance: f64,
}

/// Features of one simulated view, with keypoints kept in the view's own
/// pixel frame and the map back to the original image.
#[derive(Debug, Clone)]
pub struct ViewFeatures {
    pub view: AffineView,
    pub features: Vec<(Keypoint, Descriptor)>,
}

/// Affine-simulated feature sets of an image: one entry per view (the first
/// is always the identity view, i.e. plain detection).
#[derive(Debug, Clone)]
pub struct AffineFeatures {
    pub views: Vec<ViewFeatures>,
    pub width: usize,
    pub height: usize,
}

impl AffineFeatures {
    /// Features of the identity view (plain detection on the unwarped image).
    pub fn identity_features(&self) -> &[(Keypoint, Descriptor)] {
        &self.views[0].features
    }

    pub fn total_features(&self) -> usize {
        self.views.iter().map(|v| v.features.len()).sum()
    }
}

/// Detects features on every simulated view of `img`. Views are processed in
/// parallel; the result order is the deterministic view order. Keypoints
/// whose mapped-back location falls outside the original frame are dropped.
pub fn detect_affine_features(
    img: &Image,
    sift: &SiftParams,
    grid: &ViewGridParams,
) -> Result<AffineFeatures, FeaturesError> {
    let views = simulate_affine_views(img, grid)?;
    let (w, h) = (img.width() as f64, img.height() as f64);
    let detected: Result<Vec<ViewFeatures>, FeaturesError> = views
        .par_iter()
        .map(|(sim, view)| {
            let mut features = detect_sift(sim, sift)?;
            features.retain(|(kp, _)| {
                let (ox, oy) = view.apply(kp.x as f64, kp.y as f64);
                ox >= 0.0 && ox < w && oy >= 0.0 && oy < h
            });
            Ok(ViewFeatures {
                view: *view,
                features,
            })
        })
        .collect();
    Ok(AffineFeatures {
        views: detected?,
        width: img.width(),
        height: img.height(),
    })
}

/// Indices of the two nearest neighbours of `query` in `set` by descriptor
/// distance; ties resolved by the lower index.
fn nearest_two(query: &Descriptor, set: &[(Keypoint, Descriptor)]) -> (usize, f32, f32) {
    let mut best = usize::MAX;
    let mut d1 = f32::INFINITY;
    let mut d2 = f32::INFINITY;
    for (j, (_, cand)) in set.iter().enumerate() {
        let d = query.distance_sq(cand);
        if d < d1 {
            d2 = d1;
            d1 = d;
            best = j;
        } else if d < d2 {
            d2 = d;
        }
    }
    (best, d1, d2)
}

fn ratio_matches(
    feats1: &[(Keypoint, Descriptor)],
    feats2: &[(Keypoint, Descriptor)],
    ratio: f64,
) -> Vec<(usize, usize, f32)> {
    let r2 = (ratio * ratio) as f32;
    feats1
        .par_iter()
        .enumerate()
        .filter_map(|(i, (_, d))| {
            let (j, d1, d2) = nearest_two(d, feats2);
            if j == usize::MAX {
                return None;
            }
            if d2.is_finite() && d1 >= r2 * d2 {
                return None;
            }
            Some((i, j, d1))
        })
        .collect()
}

/// Plain symmetric-free matching (first set against second set) with the
/// ratio test. Used for plain-vs-plain comparisons and stereo matching.
pub fn match_plain(
    feats1: &[(Keypoint, Descriptor)],
    feats2: &[(Keypoint, Descriptor)],
    ratio: f64,
) -> Vec<MatchPair> {
    ratio_matches(feats1, feats2, ratio)
        .into_iter()
        .map(|(i, j, d)| MatchPair {
            p1: [feats1[i].0.x as f64, feats1[i].0.y as f64],
            p2: [feats2[j].0.x as f64, feats2[j].0.y as f64],
            distance: (d as f64).sqrt(),
        })
        .collect()
}

/// Matches plain features of image 1 against every simulated view of image
/// 2. The ratio test runs per view; a keypoint of image 1 matched in several
/// views keeps its smallest-distance match. Matched view coordinates are
/// mapped back into the original image-2 frame.
pub fn match_asymmetric(
    feats1: &[(Keypoint, Descriptor)],
    views2: &AffineFeatures,
    ratio: f64,
) -> Result<Vec<MatchPair>, FeaturesError> {
    if feats1.is_empty() || views2.total_features() == 0 {
        return Err(FeaturesError::EmptyFeatureSet);
    }
    let mut best: Vec<Option<([f64; 2], f64)>> = vec![None; feats1.len()];
    for view_feats in &views2.views {
        if view_feats.features.is_empty() {
            continue;
        }
        for (i, j, d) in ratio_matches(feats1, &view_feats.features, ratio) {
            let dist = (d as f64).sqrt();
            let kp2 = &view_feats.features[j].0;
            let p2 = view_feats.view.apply(kp2.x as f64, kp2.y as f64);
            let replace = match &best[i] {
                None => true,
                Some((_, cur)) => dist < *cur,
            };
            if replace {
                best[i] = Some(([p2.0, p2.1], dist));
            }
        }
    }
    let pairs: Vec<MatchPair> = best
        .iter()
        .enumerate()
        .filter_map(|(i, entry)| {
            entry.map(|(p2, distance)| MatchPair {
                p1: [feats1[i].0.x as f64, feats1[i].0.y as f64],
                p2,
                distance,
            })
        })
        .collect();
    if pairs.is_empty() {
        return Err(FeaturesError::NoMatches);
    }
    Ok(pairs)
}
