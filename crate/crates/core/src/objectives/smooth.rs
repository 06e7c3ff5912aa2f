//! Edge-aware k-th order smoothness.

use crate::error::{invalid, Result};
use crate::field::{spatial_derivative, Axis, Field, FlowField, Image};

/// Edge weights for one image, reusable across flow evaluations.
#[derive(Debug, Clone)]
pub struct SmoothnessTerm {
    order: usize,
    height: usize,
    width: usize,
    /// `height x (width - order)`
    weight_x: Vec<f64>,
    /// `(height - order) x width`
    weight_y: Vec<f64>,
}

fn edge_weights(image: &Image, axis: Axis, order: usize, lambda: f64) -> Result<Vec<f64>> {
    let d = spatial_derivative(&image.to_field(), axis, 1)?;
    let c = image.channels() as f64;
    let (h, w) = (image.height(), image.width());
    // The k-th derivative at index j spans samples j..=j+k; pair it with the
    // first image derivative at j + k - 1.
    let shift = order - 1;
    let (oh, ow) = match axis {
        Axis::X => (h, w - order),
        Axis::Y => (h - order, w),
    };
    let mut out = Vec::with_capacity(oh * ow);
    for y in 0..oh {
        for x in 0..ow {
            let (sy, sx) = match axis {
                Axis::X => (y, x + shift),
                Axis::Y => (y + shift, x),
            };
            let sum: f64 = (0..d.channels).map(|ch| d.get(sy, sx, ch).abs()).sum();
            out.push((-lambda / c * sum).exp());
        }
    }
    Ok(out)
}

impl SmoothnessTerm {
    /// Edge weights are computed once from `image` and held constant.
    pub fn new(image: &Image, order: usize, lambda: f64) -> Result<Self> {
        if order != 1 && order != 2 {
            return invalid(format!("smoothness order must be 1 or 2, got {order}"));
        }
        let (h, w) = (image.height(), image.width());
        if h < order + 1 || w < order + 1 {
            return invalid(format!(
                "order-{order} smoothness needs at least {}x{} pixels, got {h}x{w}",
                order + 1,
                order + 1
            ));
        }
        Ok(Self {
            order,
            height: h,
            width: w,
            weight_x: edge_weights(image, Axis::X, order, lambda)?,
            weight_y: edge_weights(image, Axis::Y, order, lambda)?,
        })
    }

    pub fn evaluate(&self, flow: &FlowField) -> Result<(f64, FlowField)> {
        if !flow.same_dims(self.height, self.width) {
            return invalid(format!(
                "flow {}x{} does not match image {}x{}",
                flow.height(),
                flow.width(),
                self.height,
                self.width
            ));
        }
        let f = flow.to_field();
        let mut grad = Field::zeros(self.height, self.width, 2);
        let mut loss = 0.0;
        for (axis, weights) in [(Axis::X, &self.weight_x), (Axis::Y, &self.weight_y)] {
            let d = spatial_derivative(&f, axis, self.order)?;
            let count = d.data.len() as f64;
            let mut gd = Field::zeros(d.height, d.width, 2);
            let mut term = 0.0;
            for (i, pair) in d.data.chunks_exact(2).enumerate() {
                for ch in 0..2 {
                    let v = pair[ch];
                    term += weights[i] * v.abs();
                    gd.data[2 * i + ch] = weights[i] * sign(v) / count;
                }
            }
            loss += term / count;
            let back = forward_difference_adjoint(&gd, axis, self.order);
            for (g, b) in grad.data.iter_mut().zip(&back.data) {
                *g += b;
            }
        }
        Ok((loss, FlowField::from_field(grad)?))
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Transpose of applying the forward difference `order` times.
fn forward_difference_adjoint(g: &Field, axis: Axis, order: usize) -> Field {
    let mut cur = g.clone();
    for _ in 0..order {
        let (h, w) = match axis {
            Axis::X => (cur.height, cur.width + 1),
            Axis::Y => (cur.height + 1, cur.width),
        };
        let mut next = Field::zeros(h, w, cur.channels);
        for y in 0..cur.height {
            for x in 0..cur.width {
                for c in 0..cur.channels {
                    let v = cur.get(y, x, c);
                    let (ny, nx) = match axis {
                        Axis::X => (y, x + 1),
                        Axis::Y => (y + 1, x),
                    };
                    next.data[(ny * w + nx) * cur.channels + c] += v;
                    next.data[(y * w + x) * cur.channels + c] -= v;
                }
            }
        }
        cur = next;
    }
    cur
}

/// Edge-aware smoothness of `flow` with edge weights from `image`.
pub fn smoothness_loss(
    image: &Image,
    flow: &FlowField,
    order: usize,
    lambda: f64,
) -> Result<(f64, FlowField)> {
    SmoothnessTerm::new(image, order, lambda)?.evaluate(flow)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noisy_image(h: usize, w: usize) -> Image {
        Image::from_fn(h, w, 3, |y, x, c| (((y * 31 + x * 17 + c * 7) % 13) as f32) / 13.0)
    }

    #[test]
    fn constant_flow_is_free() {
        let img = noisy_image(6, 7);
        for k in 1..=2 {
            let (l, g) = smoothness_loss(&img, &FlowField::constant(6, 7, 1.5, -2.0), k, 150.0).unwrap();
            assert_eq!(l, 0.0);
            assert!(g.as_slice().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn affine_flow_free_at_second_order() {
        let img = noisy_image(6, 7);
        let flow = FlowField::from_fn(6, 7, |y, x| (0.5 * x as f64 - 0.25 * y as f64 + 1.0, 2.0 * y as f64));
        let (l, _) = smoothness_loss(&img, &flow, 2, 150.0).unwrap();
        assert_eq!(l, 0.0);
    }

    #[test]
    fn unit_slope_on_uniform_image() {
        // u = x on a 4x4 grid: d/dx u = 1 on 4x3 samples, every other term 0.
        // x term: (12 * 1 + 12 * 0) / 24 = 0.5; y term: 0.
        let img = Image::from_fn(4, 4, 3, |_, _, _| 0.5);
        let flow = FlowField::from_fn(4, 4, |_, x| (x as f64, 0.0));
        let (l, _) = smoothness_loss(&img, &flow, 1, 150.0).unwrap();
        assert_eq!(l, 0.5);
    }

    #[test]
    fn too_small_or_bad_order() {
        let img = noisy_image(2, 5);
        assert!(smoothness_loss(&img, &FlowField::zeros(2, 5), 2, 150.0).is_err());
        let img = noisy_image(5, 5);
        assert!(smoothness_loss(&img, &FlowField::zeros(5, 5), 3, 150.0).is_err());
        assert!(smoothness_loss(&img, &FlowField::zeros(5, 4), 1, 150.0).is_err());
    }
}
