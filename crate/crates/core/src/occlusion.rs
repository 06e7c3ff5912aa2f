//! Occlusion masks for frame 1: range-map coverage or forward-backward consistency.
//!
//! Masks are plain values (1 = visible). Nothing differentiates through
//! them; callers treat them as constants.

use crate::error::{invalid, Result};
use crate::field::{forward_splat_count, BorderPolicy, FlowField, Plane, Taps};
use crate::objectives::CropWindow;

/// Per-pixel visibility in `[0, 1]`, 1 meaning visible.
pub type OcclusionMask = Plane;

/// Forward-backward consistency thresholds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FbParams {
    /// Relative slack, multiplied by the summed squared flow magnitudes.
    pub alpha1: f64,
    /// Absolute slack in squared pixels.
    pub alpha2: f64,
}

impl Default for FbParams {
    fn default() -> Self {
        Self {
            alpha1: 0.01,
            alpha2: 0.5,
        }
    }
}

/// Which estimator produces the photometric occlusion mask.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OcclusionMethod {
    /// Everything visible.
    None,
    RangeMap { threshold: f64 },
    ForwardBackward(FbParams),
}

impl OcclusionMethod {
    pub fn range_map() -> Self {
        OcclusionMethod::RangeMap { threshold: 0.75 }
    }

    pub fn forward_backward() -> Self {
        OcclusionMethod::ForwardBackward(FbParams::default())
    }
}

/// Visibility from the coverage of frame 1 by backward-splatted frame 2 pixels.
///
/// Coverage at or above `threshold` is fully visible; below it the mask
/// ramps linearly down to 0 at zero coverage.
pub fn occlusion_from_range_map(backward: &FlowField, threshold: f64) -> Result<OcclusionMask> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return invalid(format!("range-map threshold must lie in (0, 1], got {threshold}"));
    }
    let mut coverage = forward_splat_count(backward)?;
    for c in &mut coverage.data {
        *c = (c.clamp(0.0, 1.0) / threshold).min(1.0);
    }
    Ok(coverage)
}

/// Hard visibility: `|f + b(p + f)|² < α1 (|f|² + |b(p + f)|²) + α2`.
pub fn occlusion_from_fb_consistency(
    forward: &FlowField,
    backward: &FlowField,
    params: FbParams,
) -> Result<OcclusionMask> {
    let (h, w) = (forward.height(), forward.width());
    if !backward.same_dims(h, w) {
        return invalid(format!(
            "backward flow {}x{} does not match forward flow {h}x{w}",
            backward.height(),
            backward.width()
        ));
    }
    if params.alpha1 < 0.0 || params.alpha2 < 0.0 {
        return invalid("forward-backward thresholds must be non-negative");
    }
    forward.check_finite()?;
    backward.check_finite()?;
    let bw = backward.as_slice();
    Ok(Plane::from_fn(h, w, |y, x| {
        let (fu, fv) = forward.get(y, x);
        let taps = Taps::new(x as f64 + fu, y as f64 + fv, h, w, BorderPolicy::ZeroPad);
        let bu = taps.sample(bw, 2, 0);
        let bv = taps.sample(bw, 2, 1);
        let diff = (fu + bu).powi(2) + (fv + bv).powi(2);
        let mag = fu * fu + fv * fv + bu * bu + bv * bv;
        if diff < params.alpha1 * mag + params.alpha2 {
            1.0
        } else {
            0.0
        }
    }))
}

/// Occlusion of frame 1 given its forward flow and frame 2's backward flow.
pub fn estimate_occlusion(
    method: OcclusionMethod,
    forward: &FlowField,
    backward: &FlowField,
) -> Result<OcclusionMask> {
    match method {
        OcclusionMethod::None => Ok(Plane::filled(forward.height(), forward.width(), 1.0)),
        OcclusionMethod::RangeMap { threshold } => occlusion_from_range_map(backward, threshold),
        OcclusionMethod::ForwardBackward(p) => occlusion_from_fb_consistency(forward, backward, p),
    }
}

/// Marks as visible every pixel whose target leaves the crop but stays
/// inside the full frame, where full-image warping still has data.
pub fn release_out_of_crop(mask: &mut OcclusionMask, forward: &FlowField, crop: &CropWindow) {
    release_out_of_frame(
        mask,
        forward,
        crop.offset(),
        (crop.full_height, crop.full_width),
    );
}

/// Variant of [`release_out_of_crop`] with a real-valued crop offset, as
/// produced by downsampling a crop window.
pub fn release_out_of_frame(
    mask: &mut OcclusionMask,
    forward: &FlowField,
    offset: (f64, f64),
    full_dims: (usize, usize),
) {
    let (h, w) = (forward.height(), forward.width());
    let inside = |x: f64, y: f64, hh: usize, ww: usize| {
        x >= 0.0 && x <= (ww - 1) as f64 && y >= 0.0 && y <= (hh - 1) as f64
    };
    for y in 0..h {
        for x in 0..w {
            let (u, v) = forward.get(y, x);
            let (cx, cy) = (x as f64 + u, y as f64 + v);
            if !inside(cx, cy, h, w) && inside(cx + offset.0, cy + offset.1, full_dims.0, full_dims.1) {
                mask.set(y, x, 1.0);
            }
        }
    }
}
