//! Random affine + flip augmentation, split into parameter sampling and a
//! deterministic application step.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::imaging::{quantize, Image};
use crate::seed::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FillMode {
    Nearest,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    /// Maximum absolute rotation in degrees.
    pub rotation_deg: f64,
    pub height_shift_frac: f64,
    pub width_shift_frac: f64,
    /// Maximum absolute shear angle in radians.
    pub shear: f64,
    /// Zoom factor is drawn from [1 - zoom_frac, 1 + zoom_frac].
    pub zoom_frac: f64,
    pub hflip: bool,
    pub vflip: bool,
    pub fill: FillMode,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            rotation_deg: 15.0,
            height_shift_frac: 0.1,
            width_shift_frac: 0.1,
            shear: 0.2,
            zoom_frac: 0.2,
            hflip: true,
            vflip: true,
            fill: FillMode::Nearest,
        }
    }
}

impl AugmentConfig {
    /// All ranges zero and flips off.
    pub fn disabled() -> Self {
        Self {
            rotation_deg: 0.0,
            height_shift_frac: 0.0,
            width_shift_frac: 0.0,
            shear: 0.0,
            zoom_frac: 0.0,
            hflip: false,
            vflip: false,
            fill: FillMode::Nearest,
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        let frac_ok = |f: f64| (0.0..1.0).contains(&f);
        if !(self.rotation_deg >= 0.0)
            || !(self.shear >= 0.0)
            || !frac_ok(self.height_shift_frac)
            || !frac_ok(self.width_shift_frac)
            || !frac_ok(self.zoom_frac)
        {
            return Err(crate::Error::Parameter(format!("invalid augmentation config {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentParams {
    pub angle_deg: f64,
    /// Horizontal shift in pixels (positive moves content right).
    pub dx: f64,
    /// Vertical shift in pixels (positive moves content down).
    pub dy: f64,
    pub shear: f64,
    pub zoom: f64,
    pub hflip: bool,
    pub vflip: bool,
}

impl AugmentParams {
    pub fn identity() -> Self {
        Self { angle_deg: 0.0, dx: 0.0, dy: 0.0, shear: 0.0, zoom: 1.0, hflip: false, vflip: false }
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::identity()
    }
}

fn symmetric(rng: &mut Rng, half_width: f64) -> f64 {
    if half_width > 0.0 {
        rng.random_range(-half_width..=half_width)
    } else {
        0.0
    }
}

/// Draws each field uniformly within its configured range; flips are fair coins.
pub fn sample_augment_params(rng: &mut Rng, cfg: &AugmentConfig, height: usize, width: usize) -> AugmentParams {
    let angle_deg = symmetric(rng, cfg.rotation_deg);
    let dx = symmetric(rng, cfg.width_shift_frac * width as f64);
    let dy = symmetric(rng, cfg.height_shift_frac * height as f64);
    let shear = symmetric(rng, cfg.shear);
    let zoom = 1.0 + symmetric(rng, cfg.zoom_frac);
    let hflip = cfg.hflip && rng.random_bool(0.5);
    let vflip = cfg.vflip && rng.random_bool(0.5);
    AugmentParams { angle_deg, dx, dy, shear, zoom, hflip, vflip }
}

/// 2x2 matrix, row-major.
type Mat2 = [[f64; 2]; 2];

fn mul(a: Mat2, b: Mat2) -> Mat2 {
    [
        [a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]],
        [a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]],
    ]
}

fn inverse(m: Mat2) -> Mat2 {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    [[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]]
}

/// Forward map on (x, y) offsets from the image center: rotate, then shear,
/// then zoom.
fn forward_matrix(p: &AugmentParams) -> Mat2 {
    let (s, c) = p.angle_deg.to_radians().sin_cos();
    let rotate = [[c, -s], [s, c]];
    let shear = [[1.0, -p.shear.sin()], [0.0, p.shear.cos()]];
    let zoom = [[p.zoom, 0.0], [0.0, p.zoom]];
    mul(zoom, mul(shear, rotate))
}

/// Bilinear sample with coordinates clamped to the image (nearest fill).
fn sample(img: &Image, x: f64, y: f64, c: usize) -> f64 {
    let x = x.clamp(0.0, (img.width() - 1) as f64);
    let y = y.clamp(0.0, (img.height() - 1) as f64);
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(img.width() - 1), (y0 + 1).min(img.height() - 1));
    let (fx, fy) = (x - x0 as f64, y - y0 as f64);
    let top = img.get(y0, x0, c) as f64 * (1.0 - fx) + img.get(y0, x1, c) as f64 * fx;
    let bottom = img.get(y1, x0, c) as f64 * (1.0 - fx) + img.get(y1, x1, c) as f64 * fx;
    top * (1.0 - fy) + bottom * fy
}

pub fn hflip(img: &Image) -> Image {
    let mut out = img.clone();
    let (w, ch) = (img.width(), img.channels());
    for y in 0..img.height() {
        for x in 0..w {
            for c in 0..ch {
                out.set(y, x, c, img.get(y, w - 1 - x, c));
            }
        }
    }
    out
}

pub fn vflip(img: &Image) -> Image {
    let mut out = img.clone();
    let h = img.height();
    let row = img.width() * img.channels();
    for y in 0..h {
        out.data_mut()[y * row..(y + 1) * row].copy_from_slice(&img.data()[(h - 1 - y) * row..(h - y) * row]);
    }
    out
}

/// Applies the composed affine transform about the image center, then flips.
/// Output dimensions equal input dimensions.
pub fn apply_augment(img: &Image, p: &AugmentParams) -> Image {
    if img.is_empty() {
        return img.clone();
    }
    let mut out = if p.angle_deg == 0.0 && p.dx == 0.0 && p.dy == 0.0 && p.shear == 0.0 && p.zoom == 1.0 {
        img.clone()
    } else {
        let inv = inverse(forward_matrix(p));
        let cx = (img.width() - 1) as f64 / 2.0;
        let cy = (img.height() - 1) as f64 / 2.0;
        let mut out = img.clone();
        for y in 0..img.height() {
            for x in 0..img.width() {
                let ox = x as f64 - cx - p.dx;
                let oy = y as f64 - cy - p.dy;
                let sx = inv[0][0] * ox + inv[0][1] * oy + cx;
                let sy = inv[1][0] * ox + inv[1][1] * oy + cy;
                for c in 0..img.channels() {
                    out.set(y, x, c, quantize(sample(img, sx, sy, c)));
                }
            }
        }
        out
    };
    if p.hflip {
        out = hflip(&out);
    }
    if p.vflip {
        out = vflip(&out);
    }
    out
}
