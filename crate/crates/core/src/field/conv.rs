use super::Field;
use crate::error::{invalid, Result};

/// Convolution weights laid out as `[ky][kx][c_in][c_out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    pub height: usize,
    pub width: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub weights: Vec<f64>,
}

impl Kernel {
    pub fn zeros(height: usize, width: usize, in_channels: usize, out_channels: usize) -> Self {
        Self {
            height,
            width,
            in_channels,
            out_channels,
            weights: vec![0.0; height * width * in_channels * out_channels],
        }
    }

    #[inline]
    pub fn index(&self, ky: usize, kx: usize, ci: usize, co: usize) -> usize {
        ((ky * self.width + kx) * self.in_channels + ci) * self.out_channels + co
    }

    #[inline]
    pub fn get(&self, ky: usize, kx: usize, ci: usize, co: usize) -> f64 {
        self.weights[self.index(ky, kx, ci, co)]
    }

    fn validate(&self, input: &Field, bias: &[f64]) -> Result<()> {
        if self.height.is_multiple_of(2) || self.width.is_multiple_of(2) {
            return invalid(format!(
                "kernel dimensions must be odd, got {}x{}",
                self.height, self.width
            ));
        }
        if self.weights.len() != self.height * self.width * self.in_channels * self.out_channels {
            return invalid("kernel weight count does not match its shape");
        }
        if input.channels != self.in_channels {
            return invalid(format!(
                "input has {} channels, kernel expects {}",
                input.channels, self.in_channels
            ));
        }
        if bias.len() != self.out_channels {
            return invalid(format!(
                "bias has {} entries, kernel produces {} channels",
                bias.len(),
                self.out_channels
            ));
        }
        Ok(())
    }
}

/// Stride-1 cross-correlation with zero padding; output has the input's size.
pub fn conv2d(input: &Field, kernel: &Kernel, bias: &[f64]) -> Result<Field> {
    kernel.validate(input, bias)?;
    let (h, w) = (input.height, input.width);
    let (ry, rx) = (kernel.height / 2, kernel.width / 2);
    let (cin, cout) = (kernel.in_channels, kernel.out_channels);
    let mut out = Field::zeros(h, w, cout);
    for y in 0..h {
        for x in 0..w {
            let o = (y * w + x) * cout;
            out.data[o..o + cout].copy_from_slice(bias);
            for ky in 0..kernel.height {
                let sy = y as isize + ky as isize - ry as isize;
                if sy < 0 || sy >= h as isize {
                    continue;
                }
                for kx in 0..kernel.width {
                    let sx = x as isize + kx as isize - rx as isize;
                    if sx < 0 || sx >= w as isize {
                        continue;
                    }
                    let i = (sy as usize * w + sx as usize) * cin;
                    for ci in 0..cin {
                        let s = input.data[i + ci];
                        if s == 0.0 {
                            continue;
                        }
                        let k = kernel.index(ky, kx, ci, 0);
                        let wrow = &kernel.weights[k..k + cout];
                        for (acc, &wt) in out.data[o..o + cout].iter_mut().zip(wrow) {
                            *acc += wt * s;
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Gradients of a scalar loss with respect to the inputs of [`conv2d`].
#[derive(Debug, Clone)]
pub struct Conv2dGrads {
    pub input: Field,
    pub kernel: Kernel,
    pub bias: Vec<f64>,
}

/// Backpropagates `grad_out` (same shape as the forward output) through [`conv2d`].
pub fn conv2d_backward(input: &Field, kernel: &Kernel, grad_out: &Field) -> Result<Conv2dGrads> {
    kernel.validate(input, &vec![0.0; kernel.out_channels])?;
    if grad_out.height != input.height
        || grad_out.width != input.width
        || grad_out.channels != kernel.out_channels
    {
        return invalid("output gradient shape does not match the convolution output");
    }
    let (h, w) = (input.height, input.width);
    let (ry, rx) = (kernel.height / 2, kernel.width / 2);
    let (cin, cout) = (kernel.in_channels, kernel.out_channels);
    let mut g_in = Field::zeros(h, w, cin);
    let mut g_k = Kernel::zeros(kernel.height, kernel.width, cin, cout);
    let mut g_b = vec![0.0; cout];
    for y in 0..h {
        for x in 0..w {
            let o = (y * w + x) * cout;
            let go = &grad_out.data[o..o + cout];
            for (b, &g) in g_b.iter_mut().zip(go) {
                *b += g;
            }
            for ky in 0..kernel.height {
                let sy = y as isize + ky as isize - ry as isize;
                if sy < 0 || sy >= h as isize {
                    continue;
                }
                for kx in 0..kernel.width {
                    let sx = x as isize + kx as isize - rx as isize;
                    if sx < 0 || sx >= w as isize {
                        continue;
                    }
                    let i = (sy as usize * w + sx as usize) * cin;
                    for ci in 0..cin {
                        let k = kernel.index(ky, kx, ci, 0);
                        let s = input.data[i + ci];
                        let mut acc = 0.0;
                        for co in 0..cout {
                            acc += kernel.weights[k + co] * go[co];
                            g_k.weights[k + co] += s * go[co];
                        }
                        g_in.data[i + ci] += acc;
                    }
                }
            }
        }
    }
    Ok(Conv2dGrads {
        input: g_in,
        kernel: g_k,
        bias: g_b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(rng: &mut ChaCha8Rng, h: usize, w: usize, c: usize) -> Field {
        Field::from_fn(h, w, c, |_, _, _| rng.random_range(-1.0..1.0))
    }

    fn random_kernel(rng: &mut ChaCha8Rng, k: usize, cin: usize, cout: usize) -> Kernel {
        let mut kernel = Kernel::zeros(k, k, cin, cout);
        kernel.weights.iter_mut().for_each(|w| *w = rng.random_range(-1.0..1.0));
        kernel
    }

    #[test]
    fn delta_kernel_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let input = random_field(&mut rng, 5, 6, 2);
        let mut k = Kernel::zeros(3, 3, 2, 2);
        for c in 0..2 {
            let i = k.index(1, 1, c, c);
            k.weights[i] = 1.0;
        }
        let out = conv2d(&input, &k, &[0.0, 0.0]).unwrap();
        assert_eq!(out, input);
    }

    #[test]
    fn ones_kernel_on_ones() {
        let input = Field::from_fn(5, 5, 1, |_, _, _| 1.0);
        let mut k = Kernel::zeros(3, 3, 1, 1);
        k.weights.iter_mut().for_each(|w| *w = 1.0);
        let out = conv2d(&input, &k, &[0.0]).unwrap();
        for y in 1..4 {
            for x in 1..4 {
                assert_eq!(out.get(y, x, 0), 9.0);
            }
        }
        assert_eq!(out.get(0, 0, 0), 4.0);
    }

    #[test]
    fn matches_nested_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let input = random_field(&mut rng, 5, 5, 3);
        let kernel = random_kernel(&mut rng, 3, 3, 4);
        let bias: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let out = conv2d(&input, &kernel, &bias).unwrap();
        for y in 0..5i64 {
            for x in 0..5i64 {
                for co in 0..4 {
                    let mut acc = bias[co];
                    for dy in -1..=1i64 {
                        for dx in -1..=1i64 {
                            let (sy, sx) = (y + dy, x + dx);
                            if !(0..5).contains(&sy) || !(0..5).contains(&sx) {
                                continue;
                            }
                            for ci in 0..3 {
                                acc += kernel.get((dy + 1) as usize, (dx + 1) as usize, ci, co)
                                    * input.get(sy as usize, sx as usize, ci);
                            }
                        }
                    }
                    assert!((out.get(y as usize, x as usize, co) - acc).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn rejects_bad_shapes() {
        let input = Field::zeros(4, 4, 2);
        assert!(conv2d(&input, &Kernel::zeros(3, 3, 3, 1), &[0.0]).is_err());
        assert!(conv2d(&input, &Kernel::zeros(2, 3, 2, 1), &[0.0]).is_err());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let input = random_field(&mut rng, 4, 5, 2);
        let kernel = random_kernel(&mut rng, 3, 2, 3);
        let bias = vec![0.1, -0.2, 0.3];
        let probe = random_field(&mut rng, 4, 5, 3);
        let loss = |inp: &Field, k: &Kernel, b: &[f64]| -> f64 {
            let out = conv2d(inp, k, b).unwrap();
            out.data.iter().zip(&probe.data).map(|(a, p)| a * p).sum()
        };
        let grads = conv2d_backward(&input, &kernel, &probe).unwrap();
        let h = 1e-6;
        for i in 0..input.data.len() {
            let (mut a, mut b) = (input.clone(), input.clone());
            a.data[i] += h;
            b.data[i] -= h;
            let num = (loss(&a, &kernel, &bias) - loss(&b, &kernel, &bias)) / (2.0 * h);
            assert!((num - grads.input.data[i]).abs() < 1e-7);
        }
        for i in 0..kernel.weights.len() {
            let (mut a, mut b) = (kernel.clone(), kernel.clone());
            a.weights[i] += h;
            b.weights[i] -= h;
            let num = (loss(&input, &a, &bias) - loss(&input, &b, &bias)) / (2.0 * h);
            assert!((num - grads.kernel.weights[i]).abs() < 1e-7);
        }
        for co in 0..3 {
            let expect: f64 = (0..20).map(|p| probe.data[p * 3 + co]).sum();
            assert!((grads.bias[co] - expect).abs() < 1e-12);
        }
    }
}
