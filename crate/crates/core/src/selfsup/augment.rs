//! Replayable photometric and geometric augmentation.
//!
//! Order: photometric, scale/stretch, flips, crop, eraser. An
//! [`AugmentRecord`] holds every parameter so any transform can be replayed
//! bit-identically and mirrored onto flow labels.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{LabelProvenance, SelfSupLabel};
use crate::error::{invalid, Result};
use crate::field::{resize_flow, resize_image, FlowField, Image, Plane};
use crate::objectives::CropWindow;

/// Axis-aligned pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

/// Every parameter of one augmentation draw.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentRecord {
    /// Crop inside the scaled frame.
    pub crop: CropWindow,
    pub flip_horizontal: bool,
    pub flip_vertical: bool,
    /// `(s_x, s_y)`; scaled dims are `round(W * s_x) x round(H * s_y)`.
    pub scale: (f64, f64),
    /// Hue rotation in turns (1.0 = 360 degrees).
    pub hue_shift: f64,
    pub brightness: f64,
    pub saturation: f64,
    /// Rectangles in the cropped frame, filled with the image mean colour.
    pub erasers: Vec<Rect>,
    pub seed: u64,
}

impl AugmentRecord {
    /// The record that leaves a `height x width` pair untouched.
    pub fn identity(height: usize, width: usize) -> Self {
        Self {
            crop: CropWindow::full(height, width),
            flip_horizontal: false,
            flip_vertical: false,
            scale: (1.0, 1.0),
            hue_shift: 0.0,
            brightness: 1.0,
            saturation: 1.0,
            erasers: Vec::new(),
            seed: 0,
        }
    }

    /// Dimensions after scaling a `height x width` frame.
    pub fn scaled_dims(&self, height: usize, width: usize) -> (usize, usize) {
        (
            ((height as f64 * self.scale.1).round() as usize).max(1),
            ((width as f64 * self.scale.0).round() as usize).max(1),
        )
    }

    fn is_photometric_identity(&self) -> bool {
        self.hue_shift == 0.0 && self.brightness == 1.0 && self.saturation == 1.0
    }

    fn validate_geometry(&self, height: usize, width: usize) -> Result<()> {
        if !(self.scale.0 > 0.0 && self.scale.1 > 0.0) {
            return invalid(format!("scale factors must be positive, got {:?}", self.scale));
        }
        let (sh, sw) = self.scaled_dims(height, width);
        if self.crop.full_height != sh || self.crop.full_width != sw {
            return invalid(format!(
                "crop expects a {}x{} frame but scaling gives {sh}x{sw}",
                self.crop.full_height, self.crop.full_width
            ));
        }
        self.crop.validate()?;
        for r in &self.erasers {
            if r.x + r.width > self.crop.width || r.y + r.height > self.crop.height {
                return invalid(format!("eraser {r:?} leaves the cropped frame"));
            }
        }
        Ok(())
    }
}

/// Sampling ranges for [`sample_record`].
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentRanges {
    pub crop_height: usize,
    pub crop_width: usize,
    /// Log2 range of the isotropic scale.
    pub log2_scale: (f64, f64),
    /// Log2 range of the extra x/y stretch.
    pub log2_stretch: (f64, f64),
    pub flip_horizontal_prob: f64,
    pub flip_vertical_prob: f64,
    pub hue: (f64, f64),
    pub brightness: (f64, f64),
    pub saturation: (f64, f64),
    pub max_erasers: usize,
    /// Largest eraser side as a fraction of the crop side.
    pub eraser_max_fraction: f64,
}

impl AugmentRanges {
    pub fn for_crop(crop_height: usize, crop_width: usize) -> Self {
        Self {
            crop_height,
            crop_width,
            log2_scale: (-0.2, 0.4),
            log2_stretch: (-0.1, 0.1),
            flip_horizontal_prob: 0.5,
            flip_vertical_prob: 0.1,
            hue: (-0.08, 0.08),
            brightness: (0.7, 1.3),
            saturation: (0.6, 1.4),
            max_erasers: 3,
            eraser_max_fraction: 0.25,
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// Draws a record for a `height x width` pair; fully determined by `seed`.
pub fn sample_record(height: usize, width: usize, ranges: &AugmentRanges, seed: u64) -> Result<AugmentRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = uniform(&mut rng, ranges.log2_scale);
    let stretch = uniform(&mut rng, ranges.log2_stretch);
    // Never scale below what the crop needs.
    let min_sx = ranges.crop_width as f64 / width as f64;
    let min_sy = ranges.crop_height as f64 / height as f64;
    let sx = 2f64.powf(s + stretch).max(min_sx);
    let sy = 2f64.powf(s - stretch).max(min_sy);
    let mut record = AugmentRecord::identity(height, width);
    record.scale = (sx, sy);
    let (sh, sw) = record.scaled_dims(height, width);
    if sh < ranges.crop_height || sw < ranges.crop_width {
        return invalid(format!(
            "crop {}x{} does not fit a {sh}x{sw} scaled frame",
            ranges.crop_height, ranges.crop_width
        ));
    }
    let cy = rng.random_range(0..=sh - ranges.crop_height);
    let cx = rng.random_range(0..=sw - ranges.crop_width);
    record.crop = CropWindow::new(cx, cy, ranges.crop_height, ranges.crop_width, sh, sw)?;
    record.flip_horizontal = rng.random_bool(ranges.flip_horizontal_prob.clamp(0.0, 1.0));
    record.flip_vertical = rng.random_bool(ranges.flip_vertical_prob.clamp(0.0, 1.0));
    record.hue_shift = uniform(&mut rng, ranges.hue);
    record.brightness = uniform(&mut rng, ranges.brightness);
    record.saturation = uniform(&mut rng, ranges.saturation);
    let count = rng.random_range(0..=ranges.max_erasers);
    for _ in 0..count {
        let max_w = ((ranges.crop_width as f64 * ranges.eraser_max_fraction) as usize).max(1);
        let max_h = ((ranges.crop_height as f64 * ranges.eraser_max_fraction) as usize).max(1);
        let w = rng.random_range(1..=max_w);
        let h = rng.random_range(1..=max_h);
        let x = rng.random_range(0..=ranges.crop_width - w);
        let y = rng.random_range(0..=ranges.crop_height - h);
        record.erasers.push(Rect {
            x,
            y,
            width: w,
            height: h,
        });
    }
    record.seed = seed;
    Ok(record)
}

/// Brightness gain, saturation gain about the luma axis, then hue rotation
/// about the grey axis. Values are not clamped.
pub fn photometric_augment(image: &Image, record: &AugmentRecord) -> Image {
    if record.is_photometric_identity() {
        return image.clone();
    }
    let mut out = image.clone();
    let c = image.channels();
    let angle = record.hue_shift * std::f64::consts::TAU;
    let (sin, cos) = angle.sin_cos();
    let third = (1.0 - cos) / 3.0;
    let root = (1.0f64 / 3.0).sqrt() * sin;
    // Rotation by `angle` about (1, 1, 1) / sqrt(3).
    let rot = [
        [cos + third, third - root, third + root],
        [third + root, cos + third, third - root],
        [third - root, third + root, cos + third],
    ];
    for px in out.data_mut().chunks_exact_mut(c) {
        let mut v: Vec<f64> = px.iter().map(|&x| x as f64 * record.brightness).collect();
        if c == 3 {
            let grey = 0.299 * v[0] + 0.587 * v[1] + 0.114 * v[2];
            for x in v.iter_mut() {
                *x = grey + record.saturation * (*x - grey);
            }
            if record.hue_shift != 0.0 {
                let r = (0..3)
                    .map(|i| rot[i][0] * v[0] + rot[i][1] * v[1] + rot[i][2] * v[2])
                    .collect::<Vec<_>>();
                v = r;
            }
        }
        for (p, x) in px.iter_mut().zip(v) {
            *p = x as f32;
        }
    }
    out
}

/// Mirrors columns (`horizontal`) and/or rows (`vertical`) of an image.
pub fn flip_image(image: &Image, horizontal: bool, vertical: bool) -> Image {
    let (h, w) = (image.height(), image.width());
    Image::from_fn(h, w, image.channels(), |y, x, c| {
        let sy = if vertical { h - 1 - y } else { y };
        let sx = if horizontal { w - 1 - x } else { x };
        image.get(sy, sx, c)
    })
}

/// Mirrors a flow field and negates the mirrored vector component.
pub fn flip_flow(flow: &FlowField, horizontal: bool, vertical: bool) -> FlowField {
    let (h, w) = (flow.height(), flow.width());
    FlowField::from_fn(h, w, |y, x| {
        let sy = if vertical { h - 1 - y } else { y };
        let sx = if horizontal { w - 1 - x } else { x };
        let (u, v) = flow.get(sy, sx);
        (if horizontal { -u } else { u }, if vertical { -v } else { v })
    })
}

/// Fills every rectangle with the image's mean colour.
pub fn apply_eraser(image: &Image, rects: &[Rect]) -> Image {
    let mut out = image.clone();
    if rects.iter().all(|r| r.width == 0 || r.height == 0) {
        return out;
    }
    let c = image.channels();
    let n = (image.height() * image.width()) as f64;
    let mean: Vec<f32> = (0..c)
        .map(|ch| (image.data().iter().skip(ch).step_by(c).map(|&v| v as f64).sum::<f64>() / n) as f32)
        .collect();
    for r in rects {
        for y in r.y..(r.y + r.height).min(image.height()) {
            for x in r.x..(r.x + r.width).min(image.width()) {
                for (ch, &m) in mean.iter().enumerate() {
                    out.set(y, x, ch, m);
                }
            }
        }
    }
    out
}

fn geometric_single(image: &Image, record: &AugmentRecord) -> Result<Image> {
    let (sh, sw) = record.scaled_dims(image.height(), image.width());
    let scaled = if (sh, sw) == (image.height(), image.width()) {
        image.clone()
    } else {
        resize_image(image, sh, sw)?
    };
    let flipped = flip_image(&scaled, record.flip_horizontal, record.flip_vertical);
    let c = &record.crop;
    flipped.crop(c.y, c.x, c.height, c.width)
}

/// Scale, flip and crop both frames of a pair identically.
pub fn geometric_augment(pair: (&Image, &Image), record: &AugmentRecord) -> Result<(Image, Image)> {
    let (a, b) = pair;
    if a.height() != b.height() || a.width() != b.width() {
        return invalid("both frames of a pair must share dimensions");
    }
    record.validate_geometry(a.height(), a.width())?;
    Ok((geometric_single(a, record)?, geometric_single(b, record)?))
}

/// The complete student-side transform of a pair.
pub fn augment_pair(i1: &Image, i2: &Image, record: &AugmentRecord) -> Result<(Image, Image)> {
    let p1 = photometric_augment(i1, record);
    let p2 = photometric_augment(i2, record);
    let (g1, g2) = geometric_augment((&p1, &p2), record)?;
    Ok((apply_eraser(&g1, &record.erasers), apply_eraser(&g2, &record.erasers)))
}

/// Maps a full-frame flow into the student geometry of `record`.
pub fn transform_flow_label(teacher: &FlowField, record: &AugmentRecord) -> Result<SelfSupLabel> {
    record.validate_geometry(teacher.height(), teacher.width())?;
    let (sh, sw) = record.scaled_dims(teacher.height(), teacher.width());
    let scaled = if (sh, sw) == (teacher.height(), teacher.width()) {
        teacher.clone()
    } else {
        resize_flow(teacher, sh, sw)?
    };
    let flipped = flip_flow(&scaled, record.flip_horizontal, record.flip_vertical);
    let c = &record.crop;
    let flow = flipped.crop(c.y, c.x, c.height, c.width)?;
    Ok(SelfSupLabel {
        valid: Plane::filled(c.height, c.width, 1.0),
        flow,
        provenance: LabelProvenance::TwoFrameTeacher,
    })
}
