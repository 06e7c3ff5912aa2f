//! Per-frame backward-to-forward flow inversion used to inpaint occluded
//! regions of a forward flow from the backward flow of the same frame.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{LabelProvenance, SelfSupLabel};
use crate::error::{invalid, Result};
use crate::field::{conv2d, conv2d_backward, Field, FlowField, Kernel, Plane};
use crate::objectives::{charbonnier, charbonnier_grad};
use crate::solver::{AdamHyper, AdamState};

const INPUT_CHANNELS: usize = 4;
const WIDTHS: [usize; 3] = [16, 16, 2];

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub kernel: Kernel,
    pub bias: Vec<f64>,
}

/// Three 3x3 convolutions with 16, 16 and 2 output channels and ReLU after
/// the first two. Input: backward flow `(u, v)` and pixel coordinates
/// normalized to `[-1, 1]`. Flows are divided by `flow_scale` on the way in
/// and multiplied by it on the way out.
#[derive(Debug, Clone, PartialEq)]
pub struct TinyInversionModel {
    pub layers: [ConvLayer; 3],
    pub flow_scale: f64,
}

/// Training hyperparameters for one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InversionHyper {
    pub steps: usize,
    pub learning_rate: f64,
    /// Learning-rate multiplier reached at the last step (exponential decay).
    pub decay_factor: f64,
    pub eps: f64,
    pub alpha: f64,
    pub seed: u64,
}

impl Default for InversionHyper {
    fn default() -> Self {
        Self {
            steps: 100,
            learning_rate: 0.01,
            decay_factor: 0.1,
            eps: 0.001,
            alpha: 0.5,
            seed: 0,
        }
    }
}

struct Activations {
    input: Field,
    pre1: Field,
    act1: Field,
    pre2: Field,
    act2: Field,
    out: Field,
}

fn relu(f: &Field) -> Field {
    Field {
        data: f.data.iter().map(|&v| v.max(0.0)).collect(),
        ..f.clone()
    }
}

impl TinyInversionModel {
    /// All weights and biases zero.
    pub fn zeros() -> Self {
        let mut cin = INPUT_CHANNELS;
        let layers = WIDTHS.map(|cout| {
            let l = ConvLayer {
                kernel: Kernel::zeros(3, 3, cin, cout),
                bias: vec![0.0; cout],
            };
            cin = cout;
            l
        });
        Self {
            layers,
            flow_scale: 1.0,
        }
    }

    /// He-normal hidden layers and a zero output layer, so the fresh model
    /// predicts zero flow everywhere.
    pub fn initialize(seed: u64) -> Self {
        let mut model = Self::zeros();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in model.layers.iter_mut().take(2) {
            let fan_in = (9 * layer.kernel.in_channels) as f64;
            let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("valid std");
            for w in &mut layer.kernel.weights {
                *w = normal.sample(&mut rng);
            }
        }
        model
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.kernel.weights.len() + l.bias.len())
            .sum()
    }

    fn parameters(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.parameter_count());
        for l in &self.layers {
            p.extend_from_slice(&l.kernel.weights);
            p.extend_from_slice(&l.bias);
        }
        p
    }

    fn set_parameters(&mut self, p: &[f64]) {
        let mut i = 0;
        for l in &mut self.layers {
            let n = l.kernel.weights.len();
            l.kernel.weights.copy_from_slice(&p[i..i + n]);
            i += n;
            let n = l.bias.len();
            l.bias.copy_from_slice(&p[i..i + n]);
            i += n;
        }
    }

    /// Backward flow divided by `flow_scale` plus normalized `(x, y)` coordinates.
    pub fn input_features(backward: &FlowField, flow_scale: f64) -> Field {
        let (h, w) = (backward.height(), backward.width());
        let norm = |i: usize, n: usize| {
            if n > 1 {
                2.0 * i as f64 / (n - 1) as f64 - 1.0
            } else {
                0.0
            }
        };
        Field::from_fn(h, w, INPUT_CHANNELS, |y, x, c| match c {
            0 => backward.get(y, x).0 / flow_scale,
            1 => backward.get(y, x).1 / flow_scale,
            2 => norm(x, w),
            _ => norm(y, h),
        })
    }

    fn forward(&self, backward: &FlowField) -> Result<Activations> {
        let input = Self::input_features(backward, self.flow_scale);
        let [l1, l2, l3] = &self.layers;
        let pre1 = conv2d(&input, &l1.kernel, &l1.bias)?;
        let act1 = relu(&pre1);
        let pre2 = conv2d(&act1, &l2.kernel, &l2.bias)?;
        let act2 = relu(&pre2);
        let out = conv2d(&act2, &l3.kernel, &l3.bias)?;
        Ok(Activations {
            input,
            pre1,
            act1,
            pre2,
            act2,
            out,
        })
    }

    /// Forward flow predicted from a backward flow.
    pub fn predict(&self, backward: &FlowField) -> Result<FlowField> {
        backward.check_finite()?;
        let mut out = FlowField::from_field(self.forward(backward)?.out)?;
        out.scale(self.flow_scale);
        Ok(out)
    }

    /// Masked mean Charbonnier loss against `target` in scaled units and its
    /// parameter gradient.
    fn loss_and_grad(
        &self,
        backward: &FlowField,
        target: &FlowField,
        weights: &Plane,
        weight_sum: f64,
        hyper: &InversionHyper,
    ) -> Result<(f64, Vec<f64>)> {
        let acts = self.forward(backward)?;
        let norm = 2.0 * weight_sum;
        let mut loss = 0.0;
        let mut g_out = Field::zeros(acts.out.height, acts.out.width, 2);
        for (i, (o, t)) in acts.out.data.iter().zip(target.as_slice()).enumerate() {
            let m = weights.data[i / 2];
            if m == 0.0 {
                continue;
            }
            let t = &(t / self.flow_scale);
            loss += m * charbonnier(*o, *t, hyper.eps, hyper.alpha);
            g_out.data[i] = m * charbonnier_grad(*o, *t, hyper.eps, hyper.alpha) / norm;
        }
        let [l1, l2, l3] = &self.layers;
        let g3 = conv2d_backward(&acts.act2, &l3.kernel, &g_out)?;
        let mut g_pre2 = g3.input.clone();
        for (g, p) in g_pre2.data.iter_mut().zip(&acts.pre2.data) {
            if *p <= 0.0 {
                *g = 0.0;
            }
        }
        let g2 = conv2d_backward(&acts.act1, &l2.kernel, &g_pre2)?;
        let mut g_pre1 = g2.input.clone();
        for (g, p) in g_pre1.data.iter_mut().zip(&acts.pre1.data) {
            if *p <= 0.0 {
                *g = 0.0;
            }
        }
        let g1 = conv2d_backward(&acts.input, &l1.kernel, &g_pre1)?;
        let mut grad = Vec::with_capacity(self.parameter_count());
        for g in [g1, g2, g3] {
            grad.extend_from_slice(&g.kernel.weights);
            grad.extend_from_slice(&g.bias);
        }
        Ok((loss / norm, grad))
    }
}

fn check_dims(a: &FlowField, b: &FlowField, mask: &Plane) -> Result<()> {
    let (h, w) = (a.height(), a.width());
    if !b.same_dims(h, w) || !mask.same_dims(h, w) {
        return invalid(format!(
            "backward flow, forward flow and occlusion mask must share dimensions ({h}x{w})"
        ));
    }
    Ok(())
}

/// Fits a freshly initialized model so that `model(backward) ≈ forward` on
/// visible pixels (`occlusion` weights each pixel; 0 excludes it).
pub fn train_inversion_model(
    backward: &FlowField,
    forward: &FlowField,
    occlusion: &Plane,
    hyper: &InversionHyper,
) -> Result<TinyInversionModel> {
    check_dims(backward, forward, occlusion)?;
    backward.check_finite()?;
    forward.check_finite()?;
    let weight_sum: f64 = occlusion.data.iter().sum();
    if !(weight_sum > 0.0) {
        return invalid("no non-occluded pixels to supervise the inversion model");
    }
    let mut model = TinyInversionModel::initialize(hyper.seed);
    model.flow_scale = backward.mean_magnitude().max(1.0);
    let mut params = model.parameters();
    let mut adam = AdamState::new(params.len());
    let adam_hyper = AdamHyper::default();
    for s in 0..hyper.steps {
        let (_, grad) = model.loss_and_grad(backward, forward, occlusion, weight_sum, hyper)?;
        let t = s as f64 / hyper.steps.max(2).saturating_sub(1) as f64;
        let lr = hyper.learning_rate * hyper.decay_factor.powf(t);
        adam.step(&mut params, &grad, &adam_hyper, lr)?;
        model.set_parameters(&params);
    }
    Ok(model)
}

/// Masked mean Charbonnier training objective of `model`.
pub fn inversion_loss(
    model: &TinyInversionModel,
    backward: &FlowField,
    forward: &FlowField,
    occlusion: &Plane,
    hyper: &InversionHyper,
) -> Result<f64> {
    check_dims(backward, forward, occlusion)?;
    let weight_sum: f64 = occlusion.data.iter().sum();
    if !(weight_sum > 0.0) {
        return invalid("no non-occluded pixels to supervise the inversion model");
    }
    model
        .loss_and_grad(backward, forward, occlusion, weight_sum, hyper)
        .map(|(l, _)| l)
}

/// Mean endpoint error of the model's prediction over visible pixels.
pub fn inversion_error(
    model: &TinyInversionModel,
    backward: &FlowField,
    forward: &FlowField,
    occlusion: &Plane,
) -> Result<f64> {
    check_dims(backward, forward, occlusion)?;
    let pred = model.predict(backward)?;
    let (mut err, mut count) = (0.0, 0.0);
    for (i, &m) in occlusion.data.iter().enumerate() {
        let (y, x) = (i / pred.width(), i % pred.width());
        let (pu, pv) = pred.get(y, x);
        let (fu, fv) = forward.get(y, x);
        err += m * (pu - fu).hypot(pv - fv);
        count += m;
    }
    if count == 0.0 {
        return invalid("no non-occluded pixels");
    }
    Ok(err / count)
}

/// `O * forward + (1 - O) * model(backward)`.
pub fn inpaint_occluded_flow(
    forward: &FlowField,
    model: &TinyInversionModel,
    backward: &FlowField,
    occlusion: &Plane,
) -> Result<SelfSupLabel> {
    check_dims(backward, forward, occlusion)?;
    let pred = model.predict(backward)?;
    let (h, w) = (forward.height(), forward.width());
    let flow = FlowField::from_fn(h, w, |y, x| {
        let o = occlusion.get(y, x);
        let (fu, fv) = forward.get(y, x);
        let (pu, pv) = pred.get(y, x);
        (o * fu + (1.0 - o) * pu, o * fv + (1.0 - o) * pv)
    });
    Ok(SelfSupLabel {
        flow,
        valid: Plane::filled(h, w, 1.0),
        provenance: LabelProvenance::MultiFrameInpainted,
    })
}
