use crate::error::{invalid, Error, Result};

/// Adam constants. The learning rate is supplied per step so schedules stay
/// outside the optimizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    /// One bias-corrected Adam update of `var` in place.
    pub fn step(&mut self, var: &mut [f64], grad: &[f64], hyper: &AdamHyper, lr: f64) -> Result<()> {
        if var.len() != self.m.len() || grad.len() != self.m.len() {
            return invalid(format!(
                "optimizer state has {} entries, variable {} and gradient {}",
                self.m.len(),
                var.len(),
                grad.len()
            ));
        }
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite gradient at element {i} on step {}",
                self.t + 1
            )));
        }
        self.t += 1;
        let bc1 = 1.0 - hyper.beta1.powi(self.t as i32);
        let bc2 = 1.0 - hyper.beta2.powi(self.t as i32);
        for i in 0..var.len() {
            let g = grad[i];
            self.m[i] = hyper.beta1 * self.m[i] + (1.0 - hyper.beta1) * g;
            self.v[i] = hyper.beta2 * self.v[i] + (1.0 - hyper.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            var[i] -= lr * m_hat / (v_hat.sqrt() + hyper.eps);
        }
        if let Some(i) = var.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "update overflowed at element {i} on step {}",
                self.t
            )));
        }
        Ok(())
    }
}

/// Functional form of [`AdamState::step`].
pub fn adam_step(
    state: &mut AdamState,
    var: &mut [f64],
    grad: &[f64],
    hyper: &AdamHyper,
    lr: f64,
) -> Result<()> {
    state.step(var, grad, hyper, lr)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_keeps_variable() {
        let mut s = AdamState::new(3);
        let mut x = vec![1.0, -2.0, 3.0];
        s.step(&mut x, &[0.0; 3], &AdamHyper::default(), 0.1).unwrap();
        assert_eq!(x, vec![1.0, -2.0, 3.0]);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m_hat = g, v_hat = g², update = lr * g / (|g| + eps)
        let mut s = AdamState::new(2);
        let mut x = vec![0.0, 0.0];
        s.step(&mut x, &[3.0, -0.5], &AdamHyper::default(), 0.01).unwrap();
        assert!((x[0] + 0.01 * 3.0 / (3.0 + 1e-8)).abs() < 1e-15);
        assert!((x[1] - 0.01 * 0.5 / (0.5 + 1e-8)).abs() < 1e-15);
        assert!((x[0].abs() - 0.01).abs() < 1e-9);
    }

    #[test]
    fn deterministic() {
        let run = || {
            let mut s = AdamState::new(2);
            let mut x = vec![0.3, 0.4];
            for k in 0..5 {
                let g = [x[0] * 2.0 + k as f64, x[1] - 1.0];
                s.step(&mut x, &g, &AdamHyper::default(), 0.05).unwrap();
            }
            (s, x)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut s = AdamState::new(2);
        let mut x = vec![0.0; 2];
        let err = s
            .step(&mut x, &[0.0, f64::INFINITY], &AdamHyper::default(), 0.1)
            .unwrap_err();
        assert!(err.to_string().contains("element 1"));
        assert_eq!(s.t, 0);
    }
}
