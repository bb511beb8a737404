//! Affine view simulation: renders tilted/rotated copies of an image so
//! that features can be matched across strong viewpoint changes.

use serde::{Deserialize, Serialize};

use super::{FeaturesError, Image};

/// Sampling grid for the simulated views. The defaults (tilt step 15°,
/// rotation step 30°, maximum tilt 45°) produce 1 + 3·6 = 19 views.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ViewGridParams {
    pub tilt_step_deg: f64,
    pub rot_step_deg: f64,
    pub max_tilt_deg: f64,
}

impl Default for ViewGridParams {
    fn default() -> Self {
        ViewGridParams {
            tilt_step_deg: 15.0,
            rot_step_deg: 30.0,
            max_tilt_deg: 45.0,
        }
    }
}

impl ViewGridParams {
    /// Identity-only grid (no simulated views).
    pub fn identity_only() -> Self {
        ViewGridParams {
            tilt_step_deg: 15.0,
            rot_step_deg: 30.0,
            max_tilt_deg: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), FeaturesError> {
        let tilt_ok = self.tilt_step_deg > 0.0
            && (self.max_tilt_deg / self.tilt_step_deg).fract().abs() < 1e-9;
        let rot_ok =
            self.rot_step_deg > 0.0 && (180.0 / self.rot_step_deg).fract().abs() < 1e-9;
        if tilt_ok && rot_ok {
            Ok(())
        } else {
            Err(FeaturesError::InvalidViewGrid(format!(
                "steps must divide their ranges evenly: tilt {}/{}, rot 180/{}",
                self.max_tilt_deg, self.tilt_step_deg, self.rot_step_deg
            )))
        }
    }

    pub fn view_count(&self) -> usize {
        let tilts = (self.max_tilt_deg / self.tilt_step_deg).round() as usize;
        let rots = (180.0 / self.rot_step_deg).round() as usize;
        1 + tilts * rots
    }
}

/// One simulated view: the warped image parameters plus the affine map that
/// takes simulated-image coordinates back to the original image.
#[derive(Debug, Clone, Copy)]
pub struct AffineView {
    pub tilt_deg: f64,
    pub rot_deg: f64,
    /// 2x3 row-major affine: `orig = map[..2] * sim + map[2]` per row.
    pub map: [[f64; 3]; 2],
}

impl AffineView {
    pub fn identity() -> Self {
        AffineView {
            tilt_deg: 0.0,
            rot_deg: 0.0,
            map: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
        }
    }

    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        (
            self.map[0][0] * x + self.map[0][1] * y + self.map[0][2],
            self.map[1][0] * x + self.map[1][1] * y + self.map[1][2],
        )
    }

    pub fn det(&self) -> f64 {
        self.map[0][0] * self.map[1][1] - self.map[0][1] * self.map[1][0]
    }
}

const FILL: f32 = 0.5;
const ANTIALIAS_FACTOR: f64 = 0.8;

fn rotate_image(img: &Image, angle_deg: f64) -> (Image, [f64; 2], [f64; 2]) {
    let phi = angle_deg.to_radians();
    let (s, c) = phi.sin_cos();
    let (w, h) = (img.width() as f64, img.height() as f64);
    // bounding box of the rotated rectangle
    let out_w = (w * c.abs() + h * s.abs()).ceil() as usize;
    let out_h = (w * s.abs() + h * c.abs()).ceil() as usize;
    let c_orig = [(w - 1.0) / 2.0, (h - 1.0) / 2.0];
    let c_rot = [(out_w as f64 - 1.0) / 2.0, (out_h as f64 - 1.0) / 2.0];
    let mut data = vec![FILL; out_w * out_h];
    for y in 0..out_h {
        for x in 0..out_w {
            // inverse map: rotated -> original
            let dx = x as f64 - c_rot[0];
            let dy = y as f64 - c_rot[1];
            let ox = c * dx + s * dy + c_orig[0];
            let oy = -s * dx + c * dy + c_orig[1];
            if ox >= -0.5 && ox <= w - 0.5 && oy >= -0.5 && oy <= h - 0.5 {
                data[y * out_w + x] = img.sample_bilinear(ox as f32, oy as f32);
            }
        }
    }
    let rotated = Image::new(
        out_w,
        out_h,
        data.iter().map(|v| v.clamp(0.0, 1.0)).collect(),
    )
    .expect("rotated raster is well-formed");
    (rotated, c_orig, c_rot)
}

fn blur_vertical(img: &Image, sigma: f64) -> Image {
    if sigma <= 0.0 {
        return img.clone();
    }
    let radius = (sigma * 4.0).ceil().max(1.0) as i64;
    let denom = 2.0 * sigma * sigma;
    let kernel: Vec<f32> = (-radius..=radius)
        .map(|i| (-(i as f64 * i as f64) / denom).exp() as f32)
        .collect();
    let ksum: f32 = kernel.iter().sum();
    let (w, h) = (img.width(), img.height());
    let mut data = vec![0.0f32; w * h];
    for y in 0..h as i64 {
        for (ki, kv) in kernel.iter().enumerate() {
            let yi = (y + ki as i64 - radius).clamp(0, h as i64 - 1) as usize;
            let src_row = &img.data()[yi * w..(yi + 1) * w];
            let dst_row = &mut data[y as usize * w..(y as usize + 1) * w];
            for x in 0..w {
                dst_row[x] += src_row[x] * kv;
            }
        }
    }
    Image::new(
        w,
        h,
        data.iter().map(|v| (v / ksum).clamp(0.0, 1.0)).collect(),
    )
    .expect("blurred raster is well-formed")
}

fn compress_vertical(img: &Image, t: f64) -> Image {
    let (w, h) = (img.width(), img.height());
    let out_h = ((h as f64 / t).floor() as usize).max(1);
    let mut data = vec![0.0f32; w * out_h];
    for y in 0..out_h {
        let src_y = (y as f64 * t) as f32;
        for x in 0..w {
            data[y * w + x] = img.sample_bilinear(x as f32, src_y);
        }
    }
    Image::new(w, out_h, data).expect("compressed raster is well-formed")
}

/// Simulates the view grid: the identity view plus, for each (tilt,
/// rotation) pair, an in-plane rotation followed by a 1/cos(tilt)
/// subsampling along the rotated vertical axis with anti-alias filtering.
pub fn simulate_affine_views(
    img: &Image,
    grid: &ViewGridParams,
) -> Result<Vec<(Image, AffineView)>, FeaturesError> {
    grid.validate()?;
    let mut views = vec![(img.clone(), AffineView::identity())];
    let tilts = (grid.max_tilt_deg / grid.tilt_step_deg).round() as usize;
    let rots = (180.0 / grid.rot_step_deg).round() as usize;
    for ti in 1..=tilts {
        let tilt_deg = ti as f64 * grid.tilt_step_deg;
        let t = 1.0 / tilt_deg.to_radians().cos();
        for ri in 0..rots {
            let rot_deg = ri as f64 * grid.rot_step_deg;
            let (rotated, c_orig, c_rot) = rotate_image(img, rot_deg);
            let blurred = blur_vertical(&rotated, ANTIALIAS_FACTOR * (t * t - 1.0).sqrt());
            let sim = compress_vertical(&blurred, t);

            // sim -> rotated is (x, y*t); rotated -> original is R(-phi)
            // about the respective image centers
            let phi = rot_deg.to_radians();
            let (s, c) = phi.sin_cos();
            let view = AffineView {
                tilt_deg,
                rot_deg,
                map: [
                    [c, s * t, c_orig[0] - (c * c_rot[0] + s * c_rot[1])],
                    [-s, c * t, c_orig[1] - (-s * c_rot[0] + c * c_rot[1])],
                ],
            };
            views.push((sim, view));
        }
    }
    Ok(views)
}
