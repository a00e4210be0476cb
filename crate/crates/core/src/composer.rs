//! Rendering of composite images.
//!
//! Member `p` (0-based) of a composite lands in grid row `p / cols`, column
//! `p % cols`, i.e. row-major fill. Each member is rotated about its centre,
//! scaled to fit its cell with the aspect ratio preserved, centred on a black
//! letterbox and, for completion records, shifted and contrast-adjusted. All
//! of this is folded into one inverse mapping per output pixel followed by a
//! single bilinear sample, so a tile is resampled exactly once.
//!
//! Channel values are rounded half away from zero and clamped to `0..=255`.

use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageFormat, RgbImage};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::combinatorics::{class_seed, splitmix64};
use crate::error::{Error, Result};
use crate::manifest::{pixel_digest, DatasetManifest};
use crate::scalar::Scalar;
use crate::{Count, Real};

pub const DEFAULT_CELL: u32 = 224;
pub const DEFAULT_MAX_ROTATION: f64 = 3.0;
pub const COMPLETION_MAX_SHIFT: i32 = 2;
pub const COMPLETION_CONTRAST: (f64, f64) = (0.9, 1.1);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub rows: u32,
    pub cols: u32,
    pub cell_width: u32,
    pub cell_height: u32,
}

impl Default for Layout {
    fn default() -> Self {
        Self { rows: 3, cols: 1, cell_width: DEFAULT_CELL, cell_height: DEFAULT_CELL }
    }
}

impl Layout {
    pub fn new(rows: u32, cols: u32, cell_width: u32, cell_height: u32) -> Result<Self> {
        let layout = Self { rows, cols, cell_width, cell_height };
        layout.validate()?;
        Ok(layout)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 || self.cell_width == 0 || self.cell_height == 0 {
            return Err(Error::InvalidConfig(format!("layout dimensions must be positive: {self:?}")));
        }
        Ok(())
    }

    /// Images per composite.
    pub fn k(&self) -> usize {
        self.rows as usize * self.cols as usize
    }

    /// `(width, height)` of the rendered composite.
    pub fn output_dims(&self) -> (u32, u32) {
        (self.cols * self.cell_width, self.rows * self.cell_height)
    }

    /// Top-left pixel of the cell holding member `slot`.
    pub fn cell_origin(&self, slot: usize) -> (u32, u32) {
        let row = slot as u32 / self.cols;
        let col = slot as u32 % self.cols;
        (col * self.cell_width, row * self.cell_height)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotTransform<S = Real> {
    pub rotation_degrees: S,
    pub translation_px: (i32, i32),
    pub contrast_scale: S,
}

impl<S: Scalar> SlotTransform<S> {
    pub fn identity() -> Self {
        Self { rotation_degrees: S::zero(), translation_px: (0, 0), contrast_scale: S::one() }
    }

    pub fn is_identity(&self) -> bool {
        self.rotation_degrees == S::zero() && self.translation_px == (0, 0) && self.contrast_scale == S::one()
    }
}

/// Identifies one composite for transform derivation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecordKey<'a> {
    pub class_name: &'a str,
    pub rank: Count,
    pub epoch: u32,
}

/// Uniform in `[0, 1)` from the top 53 bits of a word.
fn unit(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Per-slot augmentation parameters, a pure function of `(seed, key)`.
///
/// The stream is ChaCha8 seeded with
/// `splitmix64(splitmix64(splitmix64(class_seed ^ rank_lo) ^ rank_hi) ^ epoch)`.
/// Per slot it draws the rotation, then (epoch > 0 only) x shift, y shift and
/// contrast scale.
pub fn derive_slot_transforms<S: Scalar>(seed: u64, key: RecordKey<'_>, k: usize, max_rotation: S) -> Vec<SlotTransform<S>> {
    let mut s = class_seed(seed, key.class_name);
    s = splitmix64(s ^ key.rank as u64);
    s = splitmix64(s ^ (key.rank >> 64) as u64);
    s = splitmix64(s ^ key.epoch as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(s);
    let max_rotation = max_rotation.abs();
    let shift_span = (2 * COMPLETION_MAX_SHIFT + 1) as u64;
    (0..k)
        .map(|_| {
            let u = S::lit(unit(&mut rng));
            let rotation_degrees =
                if max_rotation == S::zero() { S::zero() } else { (S::lit(2.0) * u - S::one()) * max_rotation };
            if key.epoch == 0 {
                return SlotTransform { rotation_degrees, ..SlotTransform::identity() };
            }
            let dx = (rng.next_u64() % shift_span) as i32 - COMPLETION_MAX_SHIFT;
            let dy = (rng.next_u64() % shift_span) as i32 - COMPLETION_MAX_SHIFT;
            let (lo, hi) = COMPLETION_CONTRAST;
            let contrast_scale = S::lit(lo + (hi - lo) * unit(&mut rng));
            SlotTransform { rotation_degrees, translation_px: (dx, dy), contrast_scale }
        })
        .collect()
}

/// Fitted tile size for a `w x h` source in a `cw x ch` cell, computed in
/// integers (round half up) so it is exact on every platform.
fn fit(w: u32, h: u32, cw: u32, ch: u32) -> (u32, u32) {
    let (w64, h64, cw64, ch64) = (w as u64, h as u64, cw as u64, ch as u64);
    if w64 * ch64 >= h64 * cw64 {
        let fh = (2 * h64 * cw64 + w64) / (2 * w64);
        (cw, (fh as u32).clamp(1, ch))
    } else {
        let fw = (2 * w64 * ch64 + h64) / (2 * h64);
        ((fw as u32).clamp(1, cw), ch)
    }
}

fn quantize<S: Scalar>(v: S) -> u8 {
    // Float::round is half away from zero.
    v.round().max(S::zero()).min(S::lit(255.0)).to_u8().unwrap_or(0)
}

/// Draw `src` into the `cw x ch` cell of `canvas` whose top-left corner is `origin`.
pub fn render_tile<S: Scalar>(canvas: &mut RgbImage, origin: (u32, u32), cw: u32, ch: u32, src: &RgbImage, t: &SlotTransform<S>) {
    let (w, h) = src.dimensions();
    if w == 0 || h == 0 {
        return;
    }
    let (fw, fh) = fit(w, h, cw, ch);
    let (ox, oy) = ((cw - fw) / 2, (ch - fh) / 2);

    let half = S::lit(0.5);
    let sx_scale = S::from_u32_lossy(w) / S::from_u32_lossy(fw);
    let sy_scale = S::from_u32_lossy(h) / S::from_u32_lossy(fh);
    let cx = (S::from_u32_lossy(w) - S::one()) * half;
    let cy = (S::from_u32_lossy(h) - S::one()) * half;
    let theta = t.rotation_degrees.to_radians();
    let (sin, cos) = theta.sin_cos();
    let rotated = t.rotation_degrees != S::zero();
    let mid = S::lit(127.5);
    let contrast = t.contrast_scale;
    let adjust = contrast != S::one();
    let (max_x, max_y) = (S::from_u32_lossy(w) - half, S::from_u32_lossy(h) - half);
    let raw = src.as_raw();
    let stride = w as usize * 3;

    for y in 0..ch {
        for x in 0..cw {
            let xs = x as i64 - t.translation_px.0 as i64 - ox as i64;
            let ys = y as i64 - t.translation_px.1 as i64 - oy as i64;
            let px = canvas.get_pixel_mut(origin.0 + x, origin.1 + y);
            if xs < 0 || ys < 0 || xs >= fw as i64 || ys >= fh as i64 {
                px.0 = [0, 0, 0];
                continue;
            }
            // Position in the (rotated) source frame.
            let u = (S::from_i64(xs).unwrap() + half) * sx_scale - half;
            let v = (S::from_i64(ys).unwrap() + half) * sy_scale - half;
            let (sx, sy) = if rotated {
                let (du, dv) = (u - cx, v - cy);
                (du * cos - dv * sin + cx, du * sin + dv * cos + cy)
            } else {
                (u, v)
            };
            if sx < -half || sy < -half || sx > max_x || sy > max_y {
                px.0 = [0, 0, 0];
                continue;
            }
            let sx = sx.max(S::zero()).min(S::from_u32_lossy(w - 1));
            let sy = sy.max(S::zero()).min(S::from_u32_lossy(h - 1));
            let (x0, y0) = (sx.floor(), sy.floor());
            let (fx, fy) = (sx - x0, sy - y0);
            let (x0, y0) = (x0.to_usize().unwrap(), y0.to_usize().unwrap());
            let x1 = (x0 + 1).min(w as usize - 1);
            let y1 = (y0 + 1).min(h as usize - 1);
            for c in 0..3 {
                let at = |xx: usize, yy: usize| S::from_u8(raw[yy * stride + xx * 3 + c]).unwrap();
                let top = at(x0, y0) * (S::one() - fx) + at(x1, y0) * fx;
                let bottom = at(x0, y1) * (S::one() - fx) + at(x1, y1) * fx;
                let mut value = top * (S::one() - fy) + bottom * fy;
                if adjust {
                    value = (value - mid) * contrast + mid;
                }
                px.0[c] = quantize(value);
            }
        }
    }
}

/// Compose `members` onto a grid: member `(i - 1) * cols + j` (1-based) fills cell `(i, j)`.
pub fn create_coimg<S: Scalar>(members: &[DynamicImage], layout: &Layout, transforms: &[SlotTransform<S>]) -> Result<RgbImage> {
    let k = layout.k();
    if members.len() != k {
        return Err(Error::MemberCountMismatch { expected: k, actual: members.len() });
    }
    if transforms.len() != k {
        return Err(Error::MemberCountMismatch { expected: k, actual: transforms.len() });
    }
    let (width, height) = layout.output_dims();
    let mut canvas = RgbImage::new(width, height);
    for (slot, (member, t)) in members.iter().zip(transforms).enumerate() {
        let rgb = member.to_rgb8();
        render_tile(&mut canvas, layout.cell_origin(slot), layout.cell_width, layout.cell_height, &rgb, t);
    }
    Ok(canvas)
}

/// Digest of a rendered composite's pixel buffer.
pub fn composite_digest(img: &RgbImage) -> String {
    pixel_digest(img.width(), img.height(), 3, img.as_raw())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Png,
    Bmp,
    Tiff,
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Png => "png",
            OutputFormat::Bmp => "bmp",
            OutputFormat::Tiff => "tiff",
        }
    }

    pub fn image_format(self) -> ImageFormat {
        match self {
            OutputFormat::Png => ImageFormat::Png,
            OutputFormat::Bmp => ImageFormat::Bmp,
            OutputFormat::Tiff => ImageFormat::Tiff,
        }
    }
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "png" => Ok(OutputFormat::Png),
            "bmp" => Ok(OutputFormat::Bmp),
            "tif" | "tiff" => Ok(OutputFormat::Tiff),
            other => Err(Error::InvalidConfig(format!("unsupported image format {other:?}"))),
        }
    }
}

/// `<class>/<class>_<rank, 10 digits>[_e<epoch>].<ext>`, relative to the output root.
pub fn output_path(class_name: &str, rank: Count, epoch: u32, format: OutputFormat) -> String {
    let ext = format.extension();
    if epoch == 0 {
        format!("{class_name}/{class_name}_{rank:010}.{ext}")
    } else {
        format!("{class_name}/{class_name}_{rank:010}_e{epoch}.{ext}")
    }
}

/// One planned composite. With `pixel_digest` filled in it is also one line of
/// the generation manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositeRecord {
    #[serde(rename = "class")]
    pub class_name: String,
    pub rank: Count,
    pub member_indices: Vec<usize>,
    pub slot_transforms: Vec<SlotTransform<Real>>,
    pub augmentation_epoch: u32,
    pub output_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pixel_digest: Option<String>,
}

impl CompositeRecord {
    /// Decode the members from `manifest` and compose them.
    pub fn render(&self, manifest: &DatasetManifest, layout: &Layout) -> Result<RgbImage> {
        let class = manifest
            .class(&self.class_name)
            .ok_or_else(|| Error::InvalidConfig(format!("class {:?} not in manifest", self.class_name)))?;
        let members = self
            .member_indices
            .iter()
            .map(|&i| {
                let entry = class.entries.get(i).ok_or_else(|| {
                    Error::InvalidConfig(format!("member index {i} out of range for class {:?}", self.class_name))
                })?;
                manifest.load_image(entry)
            })
            .collect::<Result<Vec<_>>>()?;
        create_coimg(&members, layout, &self.slot_transforms)
    }
}

/// Render `record`, write it under `out_root` and return the pre-encoding pixel digest.
pub fn render_and_encode(
    record: &CompositeRecord,
    manifest: &DatasetManifest,
    layout: &Layout,
    format: OutputFormat,
    out_root: &Path,
) -> Result<String> {
    let img = record.render(manifest, layout)?;
    let digest = composite_digest(&img);
    let path: PathBuf = out_root.join(&record.output_path);
    let fail = |reason: String| Error::WriteFailure { path: path.clone(), reason };
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| fail(e.to_string()))?;
    }
    img.save_with_format(&path, format.image_format()).map_err(|e| fail(e.to_string()))?;
    Ok(digest)
}
