//! Scale-invariant keypoint detection and 128-bin descriptor extraction.
//!
//! Classic difference-of-Gaussians pipeline: incremental Gaussian scale
//! space, 26-neighbour extrema with quadratic subpixel refinement, contrast
//! and edge-response rejection, orientation histogram peaks, and a 4x4x8
//! gradient descriptor with trilinear binning.

use super::{FeaturesError, Image};

/// Detector/descriptor parameters. Defaults: 4 octaves, 3 scales per
/// octave, contrast threshold 0.03, edge ratio 10.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SiftParams {
    pub octaves: usize,
    pub scales_per_octave: usize,
    pub sigma_base: f32,
    pub assumed_blur: f32,
    pub contrast_threshold: f32,
    pub edge_ratio: f32,
}

impl Default for SiftParams {
    fn default() -> Self {
        SiftParams {
            octaves: 4,
            scales_per_octave: 3,
            sigma_base: 1.6,
            assumed_blur: 0.5,
            contrast_threshold: 0.03,
            edge_ratio: 10.0,
        }
    }
}

/// Subpixel keypoint location with absolute scale (pixels) and orientation
/// (radians).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub x: f32,
    pub y: f32,
    pub scale: f32,
    pub orientation: f32,
}

/// L2-normalized 128-dimensional descriptor with non-negative entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor(pub [f32; 128]);

impl Descriptor {
    #[inline]
    pub fn distance_sq(&self, other: &Descriptor) -> f32 {
        let mut acc = 0.0f32;
        for i in 0..128 {
            let d = self.0[i] - other.0[i];
            acc += d * d;
        }
        acc
    }
}

const MIN_IMAGE_SIDE: usize = 32;
const BORDER: i32 = 5;
const MAX_REFINE_STEPS: usize = 5;
const ORI_BINS: usize = 36;
const ORI_SIGMA_FACTOR: f32 = 1.5;
const ORI_RADIUS_FACTOR: f32 = 3.0;
const ORI_PEAK_RATIO: f32 = 0.8;
const DESCR_WIDTH: usize = 4;
const DESCR_ORI_BINS: usize = 8;
const DESCR_SCALE_FACTOR: f32 = 3.0;
const DESCR_CLAMP: f32 = 0.2;

/// Internal working raster; values may leave `[0, 1]` (difference images).
#[derive(Clone)]
struct Buf {
    w: usize,
    h: usize,
    data: Vec<f32>,
}

impl Buf {
    fn from_image(img: &Image) -> Buf {
        Buf {
            w: img.width(),
            h: img.height(),
            data: img.data().to_vec(),
        }
    }

    #[inline]
    fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.w + x]
    }

    fn sub(&self, other: &Buf) -> Buf {
        debug_assert_eq!(self.w, other.w);
        debug_assert_eq!(self.h, other.h);
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Buf {
            w: self.w,
            h: self.h,
            data,
        }
    }

    fn downsample_2x(&self) -> Buf {
        let w = (self.w / 2).max(1);
        let h = (self.h / 2).max(1);
        let mut data = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                data.push(self.get(x * 2, y * 2));
            }
        }
        Buf { w, h, data }
    }
}

fn gaussian_kernel(sigma: f32) -> Vec<f32> {
    let radius = (sigma * 4.0).ceil().max(1.0) as usize;
    let mut k = Vec::with_capacity(2 * radius + 1);
    let denom = 2.0 * sigma * sigma;
    for i in 0..=2 * radius {
        let d = i as f32 - radius as f32;
        k.push((-d * d / denom).exp());
    }
    let sum: f32 = k.iter().sum();
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Reflected index (border mode `reflect101`: ... 2 1 | 0 1 2 ... ).
#[inline]
fn reflect(i: i64, n: i64) -> usize {
    let mut i = i;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    i = i.rem_euclid(period);
    if i >= n {
        i = period - i;
    }
    i as usize
}

fn blur(src: &Buf, sigma: f32) -> Buf {
    if sigma <= 0.0 {
        return src.clone();
    }
    let kernel = gaussian_kernel(sigma);
    let r = (kernel.len() / 2) as i64;
    let (w, h) = (src.w, src.h);
    // horizontal pass
    let mut tmp = vec![0.0f32; w * h];
    for y in 0..h {
        let row = &src.data[y * w..(y + 1) * w];
        let out = &mut tmp[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0f32;
            for (ki, kv) in kernel.iter().enumerate() {
                let xi = reflect(x as i64 + ki as i64 - r, w as i64);
                acc += row[xi] * kv;
            }
            out[x] = acc;
        }
    }
    // vertical pass
    let mut data = vec![0.0f32; w * h];
    for y in 0..h {
        for (ki, kv) in kernel.iter().enumerate() {
            let yi = reflect(y as i64 + ki as i64 - r, h as i64);
            let src_row = &tmp[yi * w..(yi + 1) * w];
            let dst_row = &mut data[y * w..(y + 1) * w];
            for x in 0..w {
                dst_row[x] += src_row[x] * kv;
            }
        }
    }
    Buf { w, h, data }
}

struct ScaleSpace {
    /// gaussians[octave][scale], scale in 0..S+3
    gaussians: Vec<Vec<Buf>>,
    /// dogs[octave][layer], layer in 0..S+2
    dogs: Vec<Vec<Buf>>,
}

fn build_scale_space(img: &Image, params: &SiftParams) -> ScaleSpace {
    let s = params.scales_per_octave;
    let k = 2.0f32.powf(1.0 / s as f32);
    let base_extra = (params.sigma_base * params.sigma_base
        - params.assumed_blur * params.assumed_blur)
        .max(0.0)
        .sqrt();
    let mut octave_base = blur(&Buf::from_image(img), base_extra);

    // limit octave count so the smallest pyramid level stays meaningful
    let mut max_octaves = 0usize;
    let mut side = octave_base.w.min(octave_base.h);
    while side >= 16 && max_octaves < params.octaves {
        max_octaves += 1;
        side /= 2;
    }

    let mut gaussians = Vec::with_capacity(max_octaves);
    let mut dogs = Vec::with_capacity(max_octaves);
    for _ in 0..max_octaves {
        let mut levels = Vec::with_capacity(s + 3);
        levels.push(octave_base.clone());
        for i in 1..s + 3 {
            let sigma_prev = params.sigma_base * k.powi(i as i32 - 1);
            let sigma_inc = sigma_prev * (k * k - 1.0).sqrt();
            let next = blur(&levels[i - 1], sigma_inc);
            levels.push(next);
        }
        let mut diff = Vec::with_capacity(s + 2);
        for i in 0..s + 2 {
            diff.push(levels[i + 1].sub(&levels[i]));
        }
        octave_base = levels[s].downsample_2x();
        gaussians.push(levels);
        dogs.push(diff);
    }
    ScaleSpace { gaussians, dogs }
}

struct RefinedExtremum {
    x: f32,
    y: f32,
    layer: f32,
    value: f32,
}

/// Quadratic fit around a discrete extremum; steps to the neighbouring
/// sample when the offset leaves the pixel.
fn refine_extremum(
    dog: &[Buf],
    mut x: i32,
    mut y: i32,
    mut l: i32,
    contrast_threshold: f32,
    edge_ratio: f32,
    scales: usize,
) -> Option<RefinedExtremum> {
    let w = dog[0].w as i32;
    let h = dog[0].h as i32;
    let max_layer = dog.len() as i32 - 2;
    let mut offset = [0.0f32; 3];
    let mut converged = false;
    let mut value = 0.0f32;
    for _ in 0..MAX_REFINE_STEPS {
        let d = |dx: i32, dy: i32, dl: i32| -> f32 {
            dog[(l + dl) as usize].get((x + dx) as usize, (y + dy) as usize)
        };
        let g = [
            (d(1, 0, 0) - d(-1, 0, 0)) / 2.0,
            (d(0, 1, 0) - d(0, -1, 0)) / 2.0,
            (d(0, 0, 1) - d(0, 0, -1)) / 2.0,
        ];
        let center = d(0, 0, 0);
        let hxx = d(1, 0, 0) + d(-1, 0, 0) - 2.0 * center;
        let hyy = d(0, 1, 0) + d(0, -1, 0) - 2.0 * center;
        let hll = d(0, 0, 1) + d(0, 0, -1) - 2.0 * center;
        let hxy = (d(1, 1, 0) - d(-1, 1, 0) - d(1, -1, 0) + d(-1, -1, 0)) / 4.0;
        let hxl = (d(1, 0, 1) - d(-1, 0, 1) - d(1, 0, -1) + d(-1, 0, -1)) / 4.0;
        let hyl = (d(0, 1, 1) - d(0, -1, 1) - d(0, 1, -1) + d(0, -1, -1)) / 4.0;
        let hess = nalgebra::Matrix3::new(hxx, hxy, hxl, hxy, hyy, hyl, hxl, hyl, hll);
        let grad = nalgebra::Vector3::new(g[0], g[1], g[2]);
        let solved = hess.lu().solve(&(-grad))?;
        offset = [solved[0], solved[1], solved[2]];
        if offset[0].abs() < 0.5 && offset[1].abs() < 0.5 && offset[2].abs() < 0.5 {
            value = center + 0.5 * grad.dot(&solved);
            // edge response on the spatial Hessian
            let tr = hxx + hyy;
            let det = hxx * hyy - hxy * hxy;
            let r = edge_ratio;
            if det <= 0.0 || tr * tr * r >= (r + 1.0) * (r + 1.0) * det {
                return None;
            }
            converged = true;
            break;
        }
        x += offset[0].round() as i32;
        y += offset[1].round() as i32;
        l += offset[2].round() as i32;
        if x < BORDER || x >= w - BORDER || y < BORDER || y >= h - BORDER || l < 1 || l > max_layer
        {
            return None;
        }
    }
    if !converged {
        return None;
    }
    if value.abs() < contrast_threshold / scales as f32 {
        return None;
    }
    Some(RefinedExtremum {
        x: x as f32 + offset[0],
        y: y as f32 + offset[1],
        layer: l as f32 + offset[2],
        value,
    })
}

fn is_discrete_extremum(dog: &[Buf], x: usize, y: usize, l: usize) -> bool {
    let v = dog[l].get(x, y);
    let mut is_max = true;
    let mut is_min = true;
    for dl in -1i32..=1 {
        let layer = &dog[(l as i32 + dl) as usize];
        for dy in -1i32..=1 {
            for dx in -1i32..=1 {
                if dl == 0 && dx == 0 && dy == 0 {
                    continue;
                }
                let n = layer.get((x as i32 + dx) as usize, (y as i32 + dy) as usize);
                if v <= n {
                    is_max = false;
                }
                if v >= n {
                    is_min = false;
                }
                if !is_max && !is_min {
                    return false;
                }
            }
        }
    }
    is_max || is_min
}

/// Orientation histogram over a Gaussian-weighted neighbourhood; returns one
/// angle per peak above 80% of the maximum.
fn orientations(gauss: &Buf, x: f32, y: f32, sigma_octave: f32) -> Vec<f32> {
    let sigma = ORI_SIGMA_FACTOR * sigma_octave;
    let radius = (ORI_RADIUS_FACTOR * sigma).round() as i32;
    let denom = 2.0 * sigma * sigma;
    let mut hist = [0.0f32; ORI_BINS];
    let xi = x.round() as i32;
    let yi = y.round() as i32;
    for dy in -radius..=radius {
        let py = yi + dy;
        if py < 1 || py >= gauss.h as i32 - 1 {
            continue;
        }
        for dx in -radius..=radius {
            let px = xi + dx;
            if px < 1 || px >= gauss.w as i32 - 1 {
                continue;
            }
            let gx = gauss.get(px as usize + 1, py as usize)
                - gauss.get(px as usize - 1, py as usize);
            let gy = gauss.get(px as usize, py as usize + 1)
                - gauss.get(px as usize, py as usize - 1);
            let mag = (gx * gx + gy * gy).sqrt();
            let weight = (-((dx * dx + dy * dy) as f32) / denom).exp();
            let angle = gy.atan2(gx);
            let mut bin =
                ((angle / (2.0 * std::f32::consts::PI)) * ORI_BINS as f32).round() as i32;
            bin = bin.rem_euclid(ORI_BINS as i32);
            hist[bin as usize] += mag * weight;
        }
    }
    // circular box smoothing, as in common implementations
    for _ in 0..6 {
        let copy = hist;
        for i in 0..ORI_BINS {
            let prev = copy[(i + ORI_BINS - 1) % ORI_BINS];
            let next = copy[(i + 1) % ORI_BINS];
            hist[i] = (prev + copy[i] + next) / 3.0;
        }
    }
    let max = hist.iter().cloned().fold(0.0f32, f32::max);
    if max <= 0.0 {
        return Vec::new();
    }
    let mut result = Vec::new();
    for i in 0..ORI_BINS {
        let prev = hist[(i + ORI_BINS - 1) % ORI_BINS];
        let next = hist[(i + 1) % ORI_BINS];
        if hist[i] > prev && hist[i] > next && hist[i] >= ORI_PEAK_RATIO * max {
            // parabolic interpolation of the peak bin
            let denom_p = prev - 2.0 * hist[i] + next;
            let shift = if denom_p.abs() > 1e-12 {
                0.5 * (prev - next) / denom_p
            } else {
                0.0
            };
            let bin = i as f32 + shift;
            let mut angle = bin * 2.0 * std::f32::consts::PI / ORI_BINS as f32;
            if angle > std::f32::consts::PI {
                angle -= 2.0 * std::f32::consts::PI;
            }
            result.push(angle);
        }
    }
    result
}

fn describe(gauss: &Buf, x: f32, y: f32, sigma_octave: f32, orientation: f32) -> Option<Descriptor> {
    let d = DESCR_WIDTH;
    let n = DESCR_ORI_BINS;
    let hist_width = DESCR_SCALE_FACTOR * sigma_octave;
    let radius = (hist_width * std::f32::consts::SQRT_2 * (d as f32 + 1.0) * 0.5).round() as i32;
    let (sin_o, cos_o) = orientation.sin_cos();
    let bins_per_rad = n as f32 / (2.0 * std::f32::consts::PI);
    let weight_denom = 2.0 * (0.5 * d as f32 * hist_width) * (0.5 * d as f32 * hist_width);
    let xi = x.round() as i32;
    let yi = y.round() as i32;
    let mut hist = vec![0.0f32; d * d * n];

    for dy in -radius..=radius {
        let py = yi + dy;
        if py < 1 || py >= gauss.h as i32 - 1 {
            continue;
        }
        for dx in -radius..=radius {
            let px = xi + dx;
            if px < 1 || px >= gauss.w as i32 - 1 {
                continue;
            }
            let fx = px as f32 - x;
            let fy = py as f32 - y;
            // rotate into the keypoint frame
            let rx = (cos_o * fx + sin_o * fy) / hist_width;
            let ry = (-sin_o * fx + cos_o * fy) / hist_width;
            let cbin = rx + d as f32 / 2.0 - 0.5;
            let rbin = ry + d as f32 / 2.0 - 0.5;
            if !(-1.0 < cbin && cbin < d as f32 && -1.0 < rbin && rbin < d as f32) {
                continue;
            }
            let gx = gauss.get(px as usize + 1, py as usize)
                - gauss.get(px as usize - 1, py as usize);
            let gy = gauss.get(px as usize, py as usize + 1)
                - gauss.get(px as usize, py as usize - 1);
            let mag = (gx * gx + gy * gy).sqrt();
            let weight = (-(rx * rx + ry * ry) * (hist_width * hist_width) / weight_denom).exp();
            let angle = gy.atan2(gx) - orientation;
            let mut obin = angle * bins_per_rad;
            while obin < 0.0 {
                obin += n as f32;
            }
            while obin >= n as f32 {
                obin -= n as f32;
            }
            let value = mag * weight;

            // trilinear accumulation over (row, col, orientation)
            let r0 = rbin.floor();
            let c0 = cbin.floor();
            let o0 = obin.floor();
            let dr = rbin - r0;
            let dc = cbin - c0;
            let dob = obin - o0;
            for (ri, rw) in [(r0 as i32, 1.0 - dr), (r0 as i32 + 1, dr)] {
                if ri < 0 || ri >= d as i32 {
                    continue;
                }
                for (ci, cw) in [(c0 as i32, 1.0 - dc), (c0 as i32 + 1, dc)] {
                    if ci < 0 || ci >= d as i32 {
                        continue;
                    }
                    for (oi, ow) in [(o0 as i32, 1.0 - dob), (o0 as i32 + 1, dob)] {
                        let oi = oi.rem_euclid(n as i32);
                        hist[(ri as usize * d + ci as usize) * n + oi as usize] +=
                            value * rw * cw * ow;
                    }
                }
            }
        }
    }

    let mut v = [0.0f32; 128];
    v.copy_from_slice(&hist);
    let norm = v.iter().map(|a| a * a).sum::<f32>().sqrt();
    if norm < 1e-12 {
        return None;
    }
    for a in &mut v {
        *a = (*a / norm).min(DESCR_CLAMP);
    }
    let norm2 = v.iter().map(|a| a * a).sum::<f32>().sqrt();
    if norm2 < 1e-12 {
        return None;
    }
    for a in &mut v {
        *a /= norm2;
    }
    Some(Descriptor(v))
}

/// Detects keypoints and computes their descriptors. Deterministic for a
/// fixed input and parameter set; output is sorted by (x, y, scale,
/// orientation).
pub fn detect_sift(
    img: &Image,
    params: &SiftParams,
) -> Result<Vec<(Keypoint, Descriptor)>, FeaturesError> {
    if img.width() < MIN_IMAGE_SIDE || img.height() < MIN_IMAGE_SIDE {
        return Err(FeaturesError::ImageTooSmall {
            width: img.width(),
            height: img.height(),
        });
    }
    let s = params.scales_per_octave;
    let k = 2.0f32.powf(1.0 / s as f32);
    let space = build_scale_space(img, params);
    let preliminary_thresh = 0.5 * params.contrast_threshold / s as f32;

    let mut result = Vec::new();
    for (oct, dog) in space.dogs.iter().enumerate() {
        let scale_mult = (1usize << oct) as f32;
        let (w, h) = (dog[0].w as i32, dog[0].h as i32);
        for l in 1..=s {
            for y in BORDER..h - BORDER {
                for x in BORDER..w - BORDER {
                    let v = dog[l].get(x as usize, y as usize);
                    if v.abs() < preliminary_thresh {
                        continue;
                    }
                    if !is_discrete_extremum(dog, x as usize, y as usize, l) {
                        continue;
                    }
                    let Some(refined) = refine_extremum(
                        dog,
                        x,
                        y,
                        l as i32,
                        params.contrast_threshold,
                        params.edge_ratio,
                        s,
                    ) else {
                        continue;
                    };
                    let sigma_octave = params.sigma_base * k.powf(refined.layer);
                    let gauss = &space.gaussians[oct][refined.layer.round() as usize];
                    for angle in orientations(gauss, refined.x, refined.y, sigma_octave) {
                        let Some(desc) = describe(gauss, refined.x, refined.y, sigma_octave, angle)
                        else {
                            continue;
                        };
                        let kp = Keypoint {
                            x: refined.x * scale_mult,
                            y: refined.y * scale_mult,
                            scale: sigma_octave * scale_mult,
                            orientation: angle,
                        };
                        if kp.x >= 0.0
                            && kp.x < img.width() as f32
                            && kp.y >= 0.0
                            && kp.y < img.height() as f32
                        {
                            result.push((kp, desc, refined.value.abs()));
                        }
                    }
                }
            }
        }
    }
    result.sort_by(|a, b| {
        a.0.x
            .total_cmp(&b.0.x)
            .then(a.0.y.total_cmp(&b.0.y))
            .then(a.0.scale.total_cmp(&b.0.scale))
            .then(a.0.orientation.total_cmp(&b.0.orientation))
    });
    // collapse duplicate detections of the same extremum (adjacent layers or
    // octave overlap produce clones that would defeat ratio-test matching)
    let mut kept: Vec<(Keypoint, Descriptor, f32)> = Vec::with_capacity(result.len());
    'candidates: for cand in result {
        for prev in kept.iter().rev() {
            if cand.0.x - prev.0.x > 0.5 {
                break;
            }
            let dori = (cand.0.orientation - prev.0.orientation).abs();
            let dori = dori.min(2.0 * std::f32::consts::PI - dori);
            if (cand.0.y - prev.0.y).abs() < 0.5
                && (cand.0.scale / prev.0.scale).ln().abs() < 0.1
                && dori < 0.05
            {
                continue 'candidates;
            }
        }
        kept.push(cand);
    }
    Ok(kept.into_iter().map(|(kp, d, _)| (kp, d)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian_blob_image(w: usize, h: usize, cx: f32, cy: f32, sigma: f32, amp: f32) -> Image {
        let mut data = vec![0.5f32; w * h];
        for y in 0..h {
            for x in 0..w {
                let dx = x as f32 - cx;
                let dy = y as f32 - cy;
                data[y * w + x] += amp * (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
            }
        }
        Image::new(w, h, data.iter().map(|v| v.clamp(0.0, 1.0)).collect()).unwrap()
    }

    #[test]
    fn rejects_tiny_images() {
        let img = Image::constant(16, 16, 0.5);
        assert!(matches!(
            detect_sift(&img, &SiftParams::default()),
            Err(FeaturesError::ImageTooSmall { .. })
        ));
    }

    #[test]
    fn constant_image_has_no_keypoints() {
        let img = Image::constant(128, 128, 0.5);
        let feats = detect_sift(&img, &SiftParams::default()).unwrap();
        assert!(feats.is_empty());
    }

    #[test]
    fn gaussian_blob_detected_near_center() {
        // an isotropic blob is a difference-of-Gaussians extremum at its center
        let img = gaussian_blob_image(128, 128, 64.0, 64.0, 4.0, 0.4);
        let feats = detect_sift(&img, &SiftParams::default()).unwrap();
        assert!(!feats.is_empty());
        let near = feats
            .iter()
            .any(|(kp, _)| ((kp.x - 64.0).powi(2) + (kp.y - 64.0).powi(2)).sqrt() < 2.0);
        assert!(near, "no keypoint within 2 px of blob center: {feats:?}");
    }

    #[test]
    fn descriptors_are_normalized_and_non_negative() {
        let img = super::super::tests::textured_test_image(128, 128, 9);
        let feats = detect_sift(&img, &SiftParams::default()).unwrap();
        assert!(!feats.is_empty());
        for (_, d) in &feats {
            let norm: f32 = d.0.iter().map(|v| v * v).sum::<f32>().sqrt();
            assert!((norm - 1.0).abs() < 1e-6);
            assert!(d.0.iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn detection_is_deterministic() {
        let img = super::super::tests::textured_test_image(96, 96, 4);
        let a = detect_sift(&img, &SiftParams::default()).unwrap();
        let b = detect_sift(&img, &SiftParams::default()).unwrap();
        assert_eq!(a.len(), b.len());
        for ((ka, da), (kb, db)) in a.iter().zip(&b) {
            assert_eq!(ka, kb);
            assert_eq!(da.0, db.0);
        }
    }

    #[test]
    fn rotated_image_descriptors_rematch() {
        let img = super::super::tests::textured_test_image(128, 128, 11);
        // lossless 90-degree rotation: (x, y) -> (h - 1 - y, x)
        let (w, h) = (img.width(), img.height());
        let mut rot_data = vec![0.0f32; w * h];
        for y in 0..h {
            for x in 0..w {
                rot_data[x * h + (h - 1 - y)] = img.get(x, y);
            }
        }
        let rotated = Image::new(h, w, rot_data).unwrap();

        let fa = detect_sift(&img, &SiftParams::default()).unwrap();
        let fb = detect_sift(&rotated, &SiftParams::default()).unwrap();
        assert!(fa.len() >= 10, "expected a rich feature set, got {}", fa.len());

        let nearest = |d: &Descriptor, set: &[(Keypoint, Descriptor)]| -> (usize, f32, f32) {
            let mut best = (usize::MAX, f32::INFINITY, f32::INFINITY);
            for (i, (_, cand)) in set.iter().enumerate() {
                let dist = d.distance_sq(cand);
                if dist < best.1 {
                    best = (i, dist, best.1);
                } else if dist < best.2 {
                    best.2 = dist;
                }
            }
            best
        };

        let mut matched = 0usize;
        for (_, da) in &fa {
            let (j, d1, d2) = nearest(da, &fb);
            if j == usize::MAX || d1 >= 0.8 * 0.8 * d2 {
                continue;
            }
            let (back, b1, _) = nearest(&fb[j].1, &fa);
            if back != usize::MAX && b1 <= d1 + 1e-9 {
                matched += 1;
            }
        }
        let frac = matched as f32 / fa.len() as f32;
        assert!(
            frac >= 0.8,
            "only {matched}/{} descriptors rematched after rotation",
            fa.len()
        );
    }
}
