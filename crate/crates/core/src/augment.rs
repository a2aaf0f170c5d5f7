//! Seeded random affine augmentation.
//!
//! A [`SampledTransform`] is drawn uniformly from the ranges of an
//! [`AugmentConfig`], turned into an output→input [`AffineTransform`] about
//! the image centre, and applied with nearest-neighbour sampling. Coordinates
//! that fall outside the source are clamped to the border, which repeats the
//! nearest edge pixel outward. Flips are applied after the affine warp.
//!
//! Randomness for every stream item comes from its own ChaCha generator keyed
//! by `(seed, epoch, index)`, so items can be produced in any order, or in
//! parallel, with identical results.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{ImageBuffer, LabeledImage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FillPolicy {
    /// Out-of-range coordinates are clamped to the nearest border pixel.
    #[default]
    Nearest,
}

/// Ranges the augmentation parameters are drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    /// Half-width of the rotation range, in degrees.
    pub rotation_deg: f64,
    /// Half-width of the horizontal shift range, as a fraction of the width.
    pub width_shift_frac: f64,
    /// Half-width of the vertical shift range, as a fraction of the height.
    pub height_shift_frac: f64,
    /// Half-width of the shear angle range, in radians.
    pub shear_intensity: f64,
    /// Closed interval of zoom factors. Values below 1 shrink the content.
    pub zoom_range: [f64; 2],
    pub hflip_enabled: bool,
    pub vflip_enabled: bool,
    pub fill_policy: FillPolicy,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            rotation_deg: 30.0,
            width_shift_frac: 0.1,
            height_shift_frac: 0.1,
            shear_intensity: 0.2,
            zoom_range: [0.8, 1.1],
            hflip_enabled: true,
            vflip_enabled: true,
            fill_policy: FillPolicy::Nearest,
        }
    }
}

impl AugmentConfig {
    /// A config whose every draw is the identity transform.
    pub fn identity() -> Self {
        Self {
            rotation_deg: 0.0,
            width_shift_frac: 0.0,
            height_shift_frac: 0.0,
            shear_intensity: 0.0,
            zoom_range: [1.0, 1.0],
            hflip_enabled: false,
            vflip_enabled: false,
            fill_policy: FillPolicy::Nearest,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.rotation_deg,
            self.width_shift_frac,
            self.height_shift_frac,
            self.shear_intensity,
            self.zoom_range[0],
            self.zoom_range[1],
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid("augment config contains non-finite values"));
        }
        if self.rotation_deg < 0.0 {
            return Err(Error::invalid("rotation_deg must be >= 0"));
        }
        for (name, v) in [
            ("width_shift_frac", self.width_shift_frac),
            ("height_shift_frac", self.height_shift_frac),
        ] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::invalid(format!("{name} must lie in [0, 1), got {v}")));
            }
        }
        // cos(shear) must stay positive for the linear part to be invertible
        if !(0.0..std::f64::consts::FRAC_PI_2).contains(&self.shear_intensity) {
            return Err(Error::invalid("shear_intensity must lie in [0, pi/2)"));
        }
        let [lo, hi] = self.zoom_range;
        if lo <= 0.0 || lo > hi {
            return Err(Error::invalid(format!(
                "zoom_range must satisfy 0 < lo <= hi, got [{lo}, {hi}]"
            )));
        }
        Ok(())
    }
}

/// One concrete draw from an [`AugmentConfig`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampledTransform {
    pub angle_deg: f64,
    pub dx_frac: f64,
    pub dy_frac: f64,
    pub shear_rad: f64,
    pub zoom: f64,
    pub do_hflip: bool,
    pub do_vflip: bool,
}

impl SampledTransform {
    pub fn identity() -> Self {
        Self {
            angle_deg: 0.0,
            dx_frac: 0.0,
            dy_frac: 0.0,
            shear_rad: 0.0,
            zoom: 1.0,
            do_hflip: false,
            do_vflip: false,
        }
    }
}

fn symmetric<R: Rng + ?Sized>(rng: &mut R, half_width: f64) -> f64 {
    if half_width == 0.0 {
        return 0.0;
    }
    -half_width + 2.0 * half_width * rng.random::<f64>()
}

/// Draws every parameter uniformly from its range; flips are fair coins when
/// enabled. The draw order is fixed, so a given generator state always yields
/// the same transform.
pub fn sample_params<R: Rng + ?Sized>(config: &AugmentConfig, rng: &mut R) -> SampledTransform {
    let angle_deg = symmetric(rng, config.rotation_deg);
    let dx_frac = symmetric(rng, config.width_shift_frac);
    let dy_frac = symmetric(rng, config.height_shift_frac);
    let shear_rad = symmetric(rng, config.shear_intensity);
    let [lo, hi] = config.zoom_range;
    let zoom = lo + (hi - lo) * rng.random::<f64>();
    let do_hflip = config.hflip_enabled && rng.random_bool(0.5);
    let do_vflip = config.vflip_enabled && rng.random_bool(0.5);
    SampledTransform {
        angle_deg,
        dx_frac,
        dy_frac,
        shear_rad,
        zoom,
        do_hflip,
        do_vflip,
    }
}

/// Output→input pixel map in `(x, y) = (column, row)` coordinates:
/// `x_in = m[0][0]·x + m[0][1]·y + m[0][2]`, `y_in = m[1][0]·x + m[1][1]·y + m[1][2]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineTransform {
    pub matrix: [[f64; 3]; 2],
}

impl AffineTransform {
    pub fn identity() -> Self {
        Self {
            matrix: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
        }
    }

    /// Source coordinate `(x, y)` for output pixel `(x, y)`.
    pub fn map(&self, x: f64, y: f64) -> (f64, f64) {
        let m = &self.matrix;
        (
            m[0][0] * x + m[0][1] * y + m[0][2],
            m[1][0] * x + m[1][1] * y + m[1][2],
        )
    }

    pub fn is_finite(&self) -> bool {
        self.matrix.iter().flatten().all(|v| v.is_finite())
    }
}

fn mat_mul(a: [[f64; 2]; 2], b: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

/// Composes rotation ∘ shear ∘ scale(1/zoom) ∘ translation about the image
/// centre into a single output→input map. A positive `dx_frac` (`dy_frac`)
/// moves content right (down).
pub fn build_affine(t: &SampledTransform, h: usize, w: usize) -> Result<AffineTransform> {
    if h == 0 || w == 0 {
        return Err(Error::invalid("image dimensions must be positive"));
    }
    if t.zoom == 0.0 || !t.zoom.is_finite() {
        return Err(Error::invalid(format!("zoom must be finite and nonzero, got {}", t.zoom)));
    }
    let theta = t.angle_deg.to_radians();
    let (sin, cos) = theta.sin_cos();
    let rotation = [[cos, -sin], [sin, cos]];
    let shear = [[1.0, -t.shear_rad.sin()], [0.0, t.shear_rad.cos()]];
    let inv_zoom = 1.0 / t.zoom;
    let scale = [[inv_zoom, 0.0], [0.0, inv_zoom]];
    let lin = mat_mul(mat_mul(rotation, shear), scale);

    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    let tx = t.dx_frac * w as f64;
    let ty = t.dy_frac * h as f64;
    // in = c + lin·(out − c − shift)  ⇒  offset = c − lin·(c + shift)
    let (px, py) = (cx + tx, cy + ty);
    let bx = cx - (lin[0][0] * px + lin[0][1] * py);
    let by = cy - (lin[1][0] * px + lin[1][1] * py);
    let affine = AffineTransform {
        matrix: [[lin[0][0], lin[0][1], bx], [lin[1][0], lin[1][1], by]],
    };
    if !affine.is_finite() {
        return Err(Error::invalid("transform has non-finite entries"));
    }
    Ok(affine)
}

/// Resamples `img` through `t` with nearest-neighbour rounding and border
/// clamping. Output dimensions and value domain match the input.
pub fn apply_affine(img: &ImageBuffer, t: &AffineTransform) -> Result<ImageBuffer> {
    if !t.is_finite() {
        return Err(Error::invalid("transform has non-finite entries"));
    }
    let (h, w) = (img.height(), img.width());
    let max_x = (w - 1) as f64;
    let max_y = (h - 1) as f64;
    Ok(img.remap(h, w, |r, c| {
        let (x, y) = t.map(c as f64, r as f64);
        let sx = x.round().clamp(0.0, max_x) as usize;
        let sy = y.round().clamp(0.0, max_y) as usize;
        (sy, sx)
    }))
}

/// Reverses column order.
pub fn flip_h(img: &ImageBuffer) -> ImageBuffer {
    let w = img.width();
    img.remap(img.height(), w, |r, c| (r, w - 1 - c))
}

/// Reverses row order.
pub fn flip_v(img: &ImageBuffer) -> ImageBuffer {
    let h = img.height();
    img.remap(h, img.width(), |r, c| (h - 1 - r, c))
}

/// Applies one sampled transform: affine warp, then the enabled flips.
pub fn augment_image(img: &ImageBuffer, t: &SampledTransform) -> Result<ImageBuffer> {
    let affine = build_affine(t, img.height(), img.width())?;
    let mut out = apply_affine(img, &affine)?;
    if t.do_hflip {
        out = flip_h(&out);
    }
    if t.do_vflip {
        out = flip_v(&out);
    }
    Ok(out)
}

/// Generator for the item at `(epoch, index)` of the stream keyed by `seed`.
pub fn item_rng(seed: u64, epoch: u64, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&epoch.to_le_bytes());
    key[16..24].copy_from_slice(&index.to_le_bytes());
    key[24..].copy_from_slice(b"augment\0");
    ChaCha8Rng::from_seed(key)
}

/// Unbounded, cyclic, augmented view over a dataset.
///
/// Position `i` yields item `i mod N` of the source, augmented with the
/// transform drawn from `item_rng(seed, i / N, i mod N)`.
#[derive(Debug, Clone)]
pub struct AugmentStream<'a> {
    dataset: &'a [LabeledImage],
    config: AugmentConfig,
    seed: u64,
    position: u64,
}

pub fn augment_stream<'a>(
    dataset: &'a [LabeledImage],
    config: &AugmentConfig,
    seed: u64,
) -> Result<AugmentStream<'a>> {
    if dataset.is_empty() {
        return Err(Error::invalid("cannot augment an empty dataset"));
    }
    config.validate()?;
    Ok(AugmentStream {
        dataset,
        config: config.clone(),
        seed,
        position: 0,
    })
}

impl AugmentStream<'_> {
    pub fn position(&self) -> u64 {
        self.position
    }

    pub fn transform_at(&self, position: u64) -> SampledTransform {
        let n = self.dataset.len() as u64;
        let mut rng = item_rng(self.seed, position / n, position % n);
        sample_params(&self.config, &mut rng)
    }

    /// The item at an absolute stream position, independent of the cursor.
    pub fn item_at(&self, position: u64) -> LabeledImage {
        let n = self.dataset.len() as u64;
        let src = &self.dataset[(position % n) as usize];
        let t = self.transform_at(position);
        // validated config and positive dims make this infallible
        let image = augment_image(&src.image, &t).expect("validated transform");
        LabeledImage {
            image,
            label: src.label,
        }
    }

    /// Produces the next `count` items in parallel and advances the cursor.
    /// Output is identical to calling `next()` `count` times.
    pub fn next_batch(&mut self, count: usize) -> Vec<LabeledImage> {
        let start = self.position;
        let items = (0..count as u64)
            .into_par_iter()
            .map(|k| self.item_at(start + k))
            .collect();
        self.position += count as u64;
        items
    }
}

impl Iterator for AugmentStream<'_> {
    type Item = LabeledImage;

    fn next(&mut self) -> Option<LabeledImage> {
        let item = self.item_at(self.position);
        self.position += 1;
        Some(item)
    }
}
