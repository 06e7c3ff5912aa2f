//! The unsupervised objective: census photometric loss, edge-aware
//! smoothness, self-supervision, sequence weighting and the weighted total.

mod census;
mod smooth;

pub use census::{
    census_of_plane, census_offsets, census_transform, photometric_loss, soft_hamming,
    CensusParams, MeanNormalization, PhotometricTerm,
};
pub use smooth::{smoothness_loss, SmoothnessTerm};

use crate::error::{invalid, Result};
use crate::field::{FlowField, Image, Plane};

/// Placement of a cropped frame inside its full frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropWindow {
    pub x: usize,
    pub y: usize,
    pub height: usize,
    pub width: usize,
    pub full_height: usize,
    pub full_width: usize,
}

impl CropWindow {
    pub fn new(
        x: usize,
        y: usize,
        height: usize,
        width: usize,
        full_height: usize,
        full_width: usize,
    ) -> Result<Self> {
        let c = Self {
            x,
            y,
            height,
            width,
            full_height,
            full_width,
        };
        c.validate()?;
        Ok(c)
    }

    /// A window covering the whole `height x width` frame.
    pub fn full(height: usize, width: usize) -> Self {
        Self {
            x: 0,
            y: 0,
            height,
            width,
            full_height: height,
            full_width: width,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 || self.full_height == 0 || self.full_width == 0 {
            return invalid("crop and frame dimensions must be positive");
        }
        if self.x + self.width > self.full_width || self.y + self.height > self.full_height {
            return invalid(format!(
                "crop {}x{} at ({}, {}) leaves the {}x{} frame",
                self.height, self.width, self.x, self.y, self.full_height, self.full_width
            ));
        }
        Ok(())
    }

    pub fn offset(&self) -> (f64, f64) {
        (self.x as f64, self.y as f64)
    }

    pub fn is_full_frame(&self) -> bool {
        self.x == 0
            && self.y == 0
            && self.height == self.full_height
            && self.width == self.full_width
    }
}

/// Generalized Charbonnier `((a - b)² + ε²)^α`.
#[inline]
pub fn charbonnier(a: f64, b: f64, eps: f64, alpha: f64) -> f64 {
    ((a - b) * (a - b) + eps * eps).powf(alpha)
}

/// Derivative of [`charbonnier`] with respect to `a`.
#[inline]
pub fn charbonnier_grad(a: f64, b: f64, eps: f64, alpha: f64) -> f64 {
    let d = a - b;
    alpha * 2.0 * d * (d * d + eps * eps).powf(alpha - 1.0)
}

/// Weights and constants of the unsupervised objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub photo: f64,
    pub smooth: f64,
    pub self_sup: f64,
    /// Edge sensitivity of the smoothness weights.
    pub edge_lambda: f64,
    /// Smoothness derivative order, 1 or 2.
    pub smooth_order: usize,
    /// Charbonnier constants for flow comparisons.
    pub eps: f64,
    pub alpha: f64,
    /// Sequence decay.
    pub gamma: f64,
    /// Sequence length.
    pub iterations: usize,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self::chairs()
    }
}

impl LossWeights {
    pub fn chairs() -> Self {
        Self {
            photo: 1.0,
            smooth: 4.0,
            self_sup: 0.3,
            edge_lambda: 150.0,
            smooth_order: 1,
            eps: 0.001,
            alpha: 0.5,
            gamma: 0.8,
            iterations: 12,
        }
    }

    pub fn sintel() -> Self {
        Self {
            smooth: 2.5,
            ..Self::chairs()
        }
    }

    pub fn kitti() -> Self {
        Self {
            smooth_order: 2,
            ..Self::chairs()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.photo,
            self.smooth,
            self.self_sup,
            self.edge_lambda,
            self.eps,
            self.alpha,
        ];
        if all.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return invalid("loss weights and constants must be finite and non-negative");
        }
        if self.smooth_order != 1 && self.smooth_order != 2 {
            return invalid(format!("smoothness order must be 1 or 2, got {}", self.smooth_order));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return invalid(format!("sequence decay must lie in (0, 1], got {}", self.gamma));
        }
        Ok(())
    }
}

/// Optional masks for the self-supervision comparison.
#[derive(Debug, Clone, Copy)]
pub enum SelfSupMasking<'a> {
    None,
    /// Weighted by `label_mask * (1 - prediction_mask)`.
    ForwardBackward {
        label_mask: &'a Plane,
        prediction_mask: &'a Plane,
    },
}

/// Charbonnier distance of `student` to the frozen `teacher`, averaged over
/// pixels and both flow components.
pub fn self_supervision_loss(
    teacher: &FlowField,
    student: &FlowField,
    masking: SelfSupMasking<'_>,
    eps: f64,
    alpha: f64,
) -> Result<(f64, FlowField)> {
    let (h, w) = (student.height(), student.width());
    if !teacher.same_dims(h, w) {
        return invalid(format!(
            "teacher {}x{} does not match student {h}x{w}",
            teacher.height(),
            teacher.width()
        ));
    }
    let weights: Option<Vec<f64>> = match masking {
        SelfSupMasking::None => None,
        SelfSupMasking::ForwardBackward {
            label_mask,
            prediction_mask,
        } => {
            if !label_mask.same_dims(h, w) || !prediction_mask.same_dims(h, w) {
                return invalid("self-supervision masks do not match the flow");
            }
            Some(
                label_mask
                    .data
                    .iter()
                    .zip(&prediction_mask.data)
                    .map(|(l, p)| l * (1.0 - p))
                    .collect(),
            )
        }
    };
    let count = (2 * h * w) as f64;
    let mut grad = FlowField::zeros(h, w);
    let mut loss = 0.0;
    let t = teacher.as_slice();
    for (i, (g, &s)) in grad.as_mut_slice().iter_mut().zip(student.as_slice()).enumerate() {
        let m = weights.as_ref().map_or(1.0, |ws| ws[i / 2]);
        loss += m * charbonnier(s, t[i], eps, alpha);
        *g = m * charbonnier_grad(s, t[i], eps, alpha) / count;
    }
    Ok((loss / count, grad))
}

/// Weights `γ^(n-i)` for iterates `i = 1..=n`.
pub fn sequence_weights(n: usize, gamma: f64) -> Vec<f64> {
    (1..=n).map(|i| gamma.powi((n - i) as i32)).collect()
}

/// `Σ_i γ^(n-i) L_i`; the latest iterate has weight 1.
pub fn sequence_weighted_loss(losses: &[f64], gamma: f64) -> Result<f64> {
    if losses.is_empty() {
        return invalid("sequence loss needs at least one iterate");
    }
    Ok(sequence_weights(losses.len(), gamma)
        .iter()
        .zip(losses)
        .map(|(w, l)| w * l)
        .sum())
}

/// Per-term values of the objective and the gradient of the weighted total.
#[derive(Debug, Clone)]
pub struct LossBreakdown {
    pub photometric: f64,
    pub smoothness: f64,
    pub self_supervision: f64,
    pub total: f64,
    pub gradient: FlowField,
}

impl LossBreakdown {
    /// Recomputes the weighted total from the components.
    pub fn recombine(&self, weights: &LossWeights) -> f64 {
        weighted_total(weights, self.photometric, self.smoothness, self.self_supervision)
    }
}

fn weighted_total(w: &LossWeights, photo: f64, smooth: f64, self_sup: f64) -> f64 {
    w.photo * photo + w.smooth * smooth + w.self_sup * self_sup
}

/// Everything one evaluation of the objective needs.
#[derive(Debug, Clone, Copy)]
pub struct LossInputs<'a> {
    pub i1_crop: &'a Image,
    pub i2_full: &'a Image,
    pub crop: &'a CropWindow,
    pub flow: &'a FlowField,
    pub occlusion: &'a Plane,
    /// Image for the smoothness edge weights; defaults to `i1_crop`.
    pub edge_image: Option<&'a Image>,
    /// Frozen self-supervision label and its masking.
    pub teacher: Option<(&'a FlowField, SelfSupMasking<'a>)>,
}

pub fn total_loss(
    inputs: &LossInputs<'_>,
    weights: &LossWeights,
    census: &CensusParams,
) -> Result<LossBreakdown> {
    weights.validate()?;
    let (photo, g_photo) = photometric_loss(
        inputs.i1_crop,
        inputs.i2_full,
        inputs.crop,
        inputs.flow,
        inputs.occlusion,
        census,
    )?;
    let edge = inputs.edge_image.unwrap_or(inputs.i1_crop);
    let (smooth, g_smooth) =
        smoothness_loss(edge, inputs.flow, weights.smooth_order, weights.edge_lambda)?;
    let (self_sup, g_self) = match inputs.teacher {
        Some((teacher, masking)) => {
            self_supervision_loss(teacher, inputs.flow, masking, weights.eps, weights.alpha)?
        }
        None => (0.0, FlowField::zeros(inputs.flow.height(), inputs.flow.width())),
    };
    let mut gradient = FlowField::zeros(inputs.flow.height(), inputs.flow.width());
    gradient.axpy(weights.photo, &g_photo);
    gradient.axpy(weights.smooth, &g_smooth);
    gradient.axpy(weights.self_sup, &g_self);
    Ok(LossBreakdown {
        photometric: photo,
        smoothness: smooth,
        self_supervision: self_sup,
        total: weighted_total(weights, photo, smooth, self_sup),
        gradient,
    })
}
