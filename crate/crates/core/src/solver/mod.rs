//! Direct per-pair flow estimation: coarse-to-fine Adam descent on the
//! flow field itself against the unsupervised objective.
//!
//! Forward (frame 1 to 2) and backward (frame 2 to 1) flows are optimized
//! together so occlusion masks can be re-estimated from the current pair
//! every `occlusion_period` steps. Masks are held constant between
//! re-estimations and no gradient passes through them.

mod adam;

pub use adam::{adam_step, AdamHyper, AdamState};

use crate::error::{invalid, Error, Result};
use crate::field::{downsample2, resize_flow, FlowField, Image, Plane};
use crate::objectives::{
    sequence_weighted_loss, total_loss, CensusParams, CropWindow, LossInputs, LossWeights,
    PhotometricTerm, SelfSupMasking, SmoothnessTerm,
};
use crate::occlusion::{estimate_occlusion, release_out_of_frame, OcclusionMethod};
use crate::selfsup::SelfSupLabel;

/// Schedule of the self-supervision weight over the finest level's steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelfSupRamp {
    /// Fraction of steps with weight 0.
    pub start: f64,
    /// Fraction of steps at which `final_weight` is reached.
    pub end: f64,
    pub final_weight: f64,
}

impl Default for SelfSupRamp {
    fn default() -> Self {
        Self {
            start: 0.4,
            end: 0.5,
            final_weight: 0.3,
        }
    }
}

impl SelfSupRamp {
    pub fn weight_at(&self, step: usize, total: usize) -> f64 {
        let frac = step as f64 / total as f64;
        if frac < self.start {
            0.0
        } else if frac >= self.end {
            self.final_weight
        } else {
            self.final_weight * (frac - self.start) / (self.end - self.start)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub levels: usize,
    /// Steps per pyramid level, coarsest first.
    pub steps_per_level: Vec<usize>,
    pub adam: AdamHyper,
    pub learning_rate: f64,
    /// Fraction of each level's steps spent on the exponential tail decay.
    pub decay_fraction: f64,
    /// Learning-rate multiplier reached at the end of the tail.
    pub decay_factor: f64,
    pub weights: LossWeights,
    pub census: CensusParams,
    pub occlusion: OcclusionMethod,
    /// Steps between occlusion re-estimations.
    pub occlusion_period: usize,
    /// Warp the uncropped second frame when the input is a crop.
    pub full_image_warping: bool,
    pub ramp: SelfSupRamp,
    /// Iterates recorded per level, evenly spaced, the last at the level's final step.
    pub checkpoints_per_level: usize,
    /// Seed for the randomized pipelines built on top of this solver.
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            levels: 3,
            steps_per_level: vec![300, 300, 400],
            adam: AdamHyper::default(),
            learning_rate: 0.05,
            decay_fraction: 0.2,
            decay_factor: 1e-3,
            weights: LossWeights::default(),
            census: CensusParams::default(),
            occlusion: OcclusionMethod::range_map(),
            occlusion_period: 50,
            full_image_warping: true,
            ramp: SelfSupRamp::default(),
            checkpoints_per_level: 4,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 {
            return invalid("solver needs at least one pyramid level");
        }
        if self.steps_per_level.len() != self.levels {
            return invalid(format!(
                "{} step counts given for {} levels",
                self.steps_per_level.len(),
                self.levels
            ));
        }
        if self.steps_per_level.contains(&0) {
            return invalid("every level needs a positive step count");
        }
        if self.checkpoints_per_level == 0
            || self.steps_per_level.iter().any(|&s| s < self.checkpoints_per_level)
        {
            return invalid("checkpoints per level must be between 1 and the level's step count");
        }
        if self.occlusion_period == 0 {
            return invalid("occlusion period must be positive");
        }
        if !(self.learning_rate > 0.0) {
            return invalid("learning rate must be positive");
        }
        if !(0.0..=1.0).contains(&self.decay_fraction) || !(self.decay_factor > 0.0) {
            return invalid("decay fraction must lie in [0, 1] and the decay factor be positive");
        }
        let r = &self.ramp;
        if !(0.0..=1.0).contains(&r.start) || !(0.0..=1.0).contains(&r.end) || r.start > r.end {
            return invalid("self-supervision ramp fractions must satisfy 0 <= start <= end <= 1");
        }
        if !(r.final_weight >= 0.0) {
            return invalid("self-supervision weight must be non-negative");
        }
        self.weights.validate()?;
        self.census.validate()
    }

    /// Total number of recorded iterates.
    pub fn sequence_len(&self) -> usize {
        self.levels * self.checkpoints_per_level
    }

    fn learning_rate_at(&self, step: usize, total: usize) -> f64 {
        let decay_start = decay_start(total, self.decay_fraction);
        if step < decay_start || total == decay_start {
            self.learning_rate
        } else {
            let t = (step + 1 - decay_start) as f64 / (total - decay_start) as f64;
            self.learning_rate * self.decay_factor.powf(t)
        }
    }
}

fn decay_start(total: usize, fraction: f64) -> usize {
    ((1.0 - fraction) * total as f64).floor() as usize
}

/// Ordered flow iterates at crop resolution; the last one is the estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSequence {
    iterates: Vec<FlowField>,
}

impl FlowSequence {
    pub fn new(iterates: Vec<FlowField>) -> Result<Self> {
        let Some(first) = iterates.first() else {
            return invalid("a flow sequence needs at least one iterate");
        };
        let (h, w) = (first.height(), first.width());
        if iterates.iter().any(|f| !f.same_dims(h, w)) {
            return invalid("all iterates of a flow sequence must share dimensions");
        }
        Ok(Self { iterates })
    }

    pub fn iterates(&self) -> &[FlowField] {
        &self.iterates
    }

    pub fn len(&self) -> usize {
        self.iterates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iterates.is_empty()
    }

    pub fn final_flow(&self) -> &FlowField {
        self.iterates.last().expect("non-empty by construction")
    }
}

/// Everything a solve produces besides the forward sequence.
#[derive(Debug, Clone)]
pub struct SolveOutput {
    pub sequence: FlowSequence,
    /// Final frame 2 to frame 1 flow on the crop grid.
    pub backward: FlowField,
    /// Occlusion of frame 1 estimated from the final flows.
    pub occlusion: Plane,
    /// Per level (coarsest first), the summed forward and backward objective before each step.
    pub loss_history: Vec<Vec<f64>>,
}

struct Level {
    crop1: Image,
    crop2: Image,
    target1: Image,
    target2: Image,
    offset: (f64, f64),
    full_dims: (usize, usize),
}

fn halve(image: &Image) -> Result<Image> {
    Image::from_field(&downsample2(&image.to_field())?)
}

fn build_pyramid(
    i1_full: &Image,
    i2_full: &Image,
    crop: &CropWindow,
    config: &SolverConfig,
) -> Result<Vec<Level>> {
    let crop1 = i1_full.crop(crop.y, crop.x, crop.height, crop.width)?;
    let crop2 = i2_full.crop(crop.y, crop.x, crop.height, crop.width)?;
    let full = config.full_image_warping && !crop.is_full_frame();
    let mut level = if full {
        Level {
            crop1,
            crop2,
            target1: i1_full.clone(),
            target2: i2_full.clone(),
            offset: crop.offset(),
            full_dims: (crop.full_height, crop.full_width),
        }
    } else {
        Level {
            target1: crop1.clone(),
            target2: crop2.clone(),
            crop1,
            crop2,
            offset: (0.0, 0.0),
            full_dims: (crop.height, crop.width),
        }
    };
    let mut levels = Vec::with_capacity(config.levels);
    for _ in 1..config.levels {
        let next = Level {
            crop1: halve(&level.crop1)?,
            crop2: halve(&level.crop2)?,
            target1: halve(&level.target1)?,
            target2: halve(&level.target2)?,
            offset: (level.offset.0 / 2.0, level.offset.1 / 2.0),
            full_dims: (level.full_dims.0 / 2, level.full_dims.1 / 2),
        };
        levels.push(level);
        level = next;
    }
    levels.push(level);
    levels.reverse();
    Ok(levels)
}

/// One direction of the objective at one level.
struct Direction<'a> {
    photo: PhotometricTerm,
    smooth: SmoothnessTerm,
    label: Option<&'a SelfSupLabel>,
}

impl Direction<'_> {
    fn evaluate(
        &self,
        flow: &FlowField,
        occlusion: &Plane,
        weights: &LossWeights,
        self_weight: f64,
    ) -> Result<(f64, FlowField)> {
        let (lp, gp) = self.photo.evaluate(flow, occlusion)?;
        let (ls, gs) = self.smooth.evaluate(flow)?;
        let mut loss = weights.photo * lp + weights.smooth * ls;
        let mut grad = FlowField::zeros(flow.height(), flow.width());
        grad.axpy(weights.photo, &gp);
        grad.axpy(weights.smooth, &gs);
        if let (Some(label), true) = (self.label, self_weight > 0.0) {
            let zeros = Plane::filled(flow.height(), flow.width(), 0.0);
            let (lq, gq) = crate::objectives::self_supervision_loss(
                &label.flow,
                flow,
                SelfSupMasking::ForwardBackward {
                    label_mask: &label.valid,
                    prediction_mask: &zeros,
                },
                weights.eps,
                weights.alpha,
            )?;
            loss += self_weight * lq;
            grad.axpy(self_weight, &gq);
        }
        Ok((loss, grad))
    }
}

fn occlusion_for(
    config: &SolverConfig,
    forward: &FlowField,
    backward: &FlowField,
    level: &Level,
) -> Result<Plane> {
    let mut mask = estimate_occlusion(config.occlusion, forward, backward)?;
    if level.full_dims != (forward.height(), forward.width()) || level.offset != (0.0, 0.0) {
        release_out_of_frame(&mut mask, forward, level.offset, level.full_dims);
    }
    Ok(mask)
}

/// Runs the solver on `crop` of the frame pair and returns all its outputs.
///
/// With full-image warping the crop of frame 1 is compared against the whole
/// of frame 2 (and vice versa for the backward flow).
pub fn solve(
    i1_full: &Image,
    i2_full: &Image,
    crop: &CropWindow,
    config: &SolverConfig,
    label: Option<&SelfSupLabel>,
) -> Result<SolveOutput> {
    config.validate()?;
    crop.validate()?;
    for (name, img) in [("first", i1_full), ("second", i2_full)] {
        if img.height() != crop.full_height || img.width() != crop.full_width {
            return invalid(format!(
                "{name} frame is {}x{}, crop window expects {}x{}",
                img.height(),
                img.width(),
                crop.full_height,
                crop.full_width
            ));
        }
    }
    if let Some(l) = label {
        if !l.flow.same_dims(crop.height, crop.width) {
            return invalid(format!(
                "label is {}x{}, crop is {}x{}",
                l.flow.height(),
                l.flow.width(),
                crop.height,
                crop.width
            ));
        }
    }
    let levels = build_pyramid(i1_full, i2_full, crop, config)?;
    let weights = &config.weights;
    let mut iterates = Vec::with_capacity(config.sequence_len());
    let mut history = Vec::with_capacity(levels.len());
    let mut forward: Option<FlowField> = None;
    let mut backward: Option<FlowField> = None;
    let finest = levels.len() - 1;

    for (li, level) in levels.iter().enumerate() {
        let (h, w) = (level.crop1.height(), level.crop1.width());
        let mut f = match &forward {
            Some(prev) => resize_flow(prev, h, w)?,
            None => FlowField::zeros(h, w),
        };
        let mut b = match &backward {
            Some(prev) => resize_flow(prev, h, w)?,
            None => FlowField::zeros(h, w),
        };
        let fwd = Direction {
            photo: PhotometricTerm::new(&level.crop1, &level.target2, level.offset, config.census)?,
            smooth: SmoothnessTerm::new(&level.crop1, weights.smooth_order, weights.edge_lambda)?,
            label: if li == finest { label } else { None },
        };
        let bwd = Direction {
            photo: PhotometricTerm::new(&level.crop2, &level.target1, level.offset, config.census)?,
            smooth: SmoothnessTerm::new(&level.crop2, weights.smooth_order, weights.edge_lambda)?,
            label: None,
        };
        let steps = config.steps_per_level[li];
        let tail = decay_start(steps, config.decay_fraction);
        let checkpoints: Vec<usize> = (1..=config.checkpoints_per_level)
            .map(|j| (j * steps).div_ceil(config.checkpoints_per_level) - 1)
            .collect();
        let mut adam_f = AdamState::new(2 * h * w);
        let mut adam_b = AdamState::new(2 * h * w);
        let mut occ_f = Plane::filled(h, w, 1.0);
        let mut occ_b = Plane::filled(h, w, 1.0);
        let mut level_history = Vec::with_capacity(steps);

        for s in 0..steps {
            if s % config.occlusion_period == 0 && (s < tail || s == 0) {
                occ_f = occlusion_for(config, &f, &b, level)?;
                occ_b = occlusion_for(config, &b, &f, level)?;
            }
            let self_weight = if li == finest {
                config.ramp.weight_at(s, steps)
            } else {
                0.0
            };
            let (lf, gf) = fwd.evaluate(&f, &occ_f, weights, self_weight)?;
            let (lb, gb) = bwd.evaluate(&b, &occ_b, weights, 0.0)?;
            let total = lf + lb;
            if !total.is_finite() {
                return Err(Error::Numerical(format!(
                    "objective diverged at level {li}, step {s} (loss {total})"
                )));
            }
            level_history.push(total);
            let lr = config.learning_rate_at(s, steps);
            adam_f
                .step(f.as_mut_slice(), gf.as_slice(), &config.adam, lr)
                .map_err(|e| Error::Numerical(format!("level {li}, step {s}: {e}")))?;
            adam_b
                .step(b.as_mut_slice(), gb.as_slice(), &config.adam, lr)
                .map_err(|e| Error::Numerical(format!("level {li}, step {s}: {e}")))?;
            if checkpoints.contains(&s) {
                iterates.push(if li == finest {
                    f.clone()
                } else {
                    resize_flow(&f, crop.height, crop.width)?
                });
            }
        }
        history.push(level_history);
        forward = Some(f);
        backward = Some(b);
    }

    let forward = forward.expect("at least one level");
    let backward = backward.expect("at least one level");
    let occlusion = occlusion_for(config, &forward, &backward, &levels[finest])?;
    Ok(SolveOutput {
        sequence: FlowSequence::new(iterates)?,
        backward,
        occlusion,
        loss_history: history,
    })
}

/// Forward flow iterates for `crop` of the frame pair.
pub fn estimate_flow(
    i1_full: &Image,
    i2_full: &Image,
    crop: &CropWindow,
    config: &SolverConfig,
    label: Option<&SelfSupLabel>,
) -> Result<FlowSequence> {
    solve(i1_full, i2_full, crop, config, label).map(|out| out.sequence)
}

/// Sequence-weighted total objective over every iterate of `seq`.
///
/// `inputs.flow` is ignored; each iterate takes its place in turn.
pub fn evaluate_sequence(
    seq: &FlowSequence,
    inputs: &LossInputs<'_>,
    weights: &LossWeights,
    census: &CensusParams,
) -> Result<f64> {
    let losses = seq
        .iterates()
        .iter()
        .map(|flow| total_loss(&LossInputs { flow, ..*inputs }, weights, census).map(|b| b.total))
        .collect::<Result<Vec<_>>>()?;
    sequence_weighted_loss(&losses, weights.gamma)
}

/// A deterministic two-frame flow estimator.
pub trait FlowEstimator {
    fn estimate(&self, i1: &Image, i2: &Image) -> Result<FlowField>;
}

/// [`FlowEstimator`] backed by [`solve`] on the whole frame.
#[derive(Debug, Clone, Default)]
pub struct DirectSolver {
    pub config: SolverConfig,
}

impl FlowEstimator for DirectSolver {
    fn estimate(&self, i1: &Image, i2: &Image) -> Result<FlowField> {
        let crop = CropWindow::full(i1.height(), i1.width());
        let seq = estimate_flow(i1, i2, &crop, &self.config, None)?;
        Ok(seq.final_flow().clone())
    }
}
