//! Central-difference verification of analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::field::{FlowField, Image, Plane};
use crate::objectives::{
    photometric_loss, self_supervision_loss, smoothness_loss, CensusParams, CropWindow,
    SelfSupMasking,
};

/// Outcome of comparing an analytic gradient with central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// `max_i |a_i - n_i| / (|a_i| + |n_i| + 1e-8)`.
    pub max_rel_error: f64,
    /// Flat index of the worst element.
    pub worst_index: usize,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    pub checked: usize,
    pub passed: bool,
}

impl GradCheckReport {
    /// Worst offender as `(y, x, channel)` for an interleaved field of the given width and depth.
    pub fn worst_coords(&self, width: usize, channels: usize) -> (usize, usize, usize) {
        let c = self.worst_index % channels;
        let p = self.worst_index / channels;
        (p / width, p % width, c)
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs() + 1e-8)
}

/// Checks every element of `analytic` against the fourth-order central
/// difference `(8(L(x+h) - L(x-h)) - (L(x+2h) - L(x-2h))) / 12h`.
pub fn finite_difference_check<F>(
    mut loss: F,
    point: &[f64],
    analytic: &[f64],
    step: f64,
    tolerance: f64,
) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> f64,
{
    if !(step > 0.0) {
        return invalid(format!("finite-difference step must be positive, got {step}"));
    }
    if point.len() != analytic.len() {
        return invalid(format!(
            "gradient has {} entries but the point has {}",
            analytic.len(),
            point.len()
        ));
    }
    let mut x = point.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        worst_analytic: analytic.first().copied().unwrap_or(0.0),
        worst_numeric: 0.0,
        checked: point.len(),
        passed: true,
    };
    for i in 0..x.len() {
        let orig = x[i];
        let mut probe = |k: f64| {
            x[i] = orig + k * step;
            loss(&x)
        };
        let (p1, m1, p2, m2) = (probe(1.0), probe(-1.0), probe(2.0), probe(-2.0));
        x[i] = orig;
        if ![p1, m1, p2, m2].iter().all(|v| v.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite loss when probing element {i} (L+ = {p1}, L- = {m1})"
            )));
        }
        let numeric = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * step);
        let rel = relative_error(analytic[i], numeric);
        if rel > report.max_rel_error || !rel.is_finite() {
            report.max_rel_error = rel;
            report.worst_index = i;
            report.worst_analytic = analytic[i];
            report.worst_numeric = numeric;
        }
    }
    report.passed = report.max_rel_error.is_finite() && report.max_rel_error < tolerance;
    Ok(report)
}

/// Summary of one loss family in [`gradient_suite`].
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub instances: usize,
    /// Largest relative error over all instances and elements.
    pub max_rel_error: f64,
    pub passed: bool,
}

/// Uniform magnitude in `[lo, hi)` with a random sign.
fn signed(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    let s = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    s * rng.random_range(lo..hi)
}

/// Flow whose first and second differences along both axes stay at least
/// 0.4 away from zero, away from the kinks of the absolute value.
fn kink_free_flow(rng: &mut ChaCha8Rng, h: usize, w: usize) -> FlowField {
    let mut coeffs = || {
        let c = signed(rng, 0.3, 0.4);
        // first differences c(2t+1) + d keep the sign of c
        let d = c.signum() * rng.random_range(0.5..1.0);
        let e = signed(rng, 0.3, 0.4);
        let f = e.signum() * rng.random_range(0.5..1.0);
        [c, d, e, f]
    };
    let (cu, cv) = (coeffs(), coeffs());
    FlowField::from_fn(h, w, |y, x| {
        let (x, y) = (x as f64, y as f64);
        let p = |k: [f64; 4]| k[0] * x * x + k[1] * x + k[2] * y * y + k[3] * y;
        (
            p(cu) + rng.random_range(-0.05..0.05),
            p(cv) + rng.random_range(-0.05..0.05),
        )
    })
}

/// Flow whose components keep their fractional part in `[0.2, 0.8]`, away
/// from the kinks of bilinear sampling.
fn off_grid_flow(rng: &mut ChaCha8Rng, h: usize, w: usize, max_int: i32) -> FlowField {
    FlowField::from_fn(h, w, |_, _| {
        let mut c = || rng.random_range(-max_int..=max_int) as f64 + rng.random_range(0.2..0.8);
        (c(), c())
    })
}

fn noise_image(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Image {
    Image::from_fn(h, w, 3, |_, _, _| rng.random_range(0.0..1.0))
}

fn noise_plane(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Plane {
    Plane::from_fn(h, w, |_, _| rng.random_range(0.0..1.0))
}

fn check_flow_loss<F>(
    flow: &FlowField,
    analytic: &FlowField,
    loss: F,
    step: f64,
    tolerance: f64,
) -> Result<f64>
where
    F: Fn(&FlowField) -> Result<f64>,
{
    let (h, w) = (flow.height(), flow.width());
    let mut failure = None;
    let report = finite_difference_check(
        |x| {
            let f = FlowField::from_vec(h, w, x.to_vec()).expect("same length");
            loss(&f).unwrap_or_else(|e| {
                failure.get_or_insert(e);
                f64::NAN
            })
        },
        flow.as_slice(),
        analytic.as_slice(),
        step,
        tolerance,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(report?.max_rel_error)
}

/// Checks the analytic gradients of the photometric loss (alternating plain
/// and full-image warping), smoothness of order 1 and 2, and the
/// self-supervision loss on `instances` random 16x16 problems each.
pub fn gradient_suite(instances: usize, seed: u64, tolerance: f64) -> Result<Vec<SuiteResult>> {
    if instances == 0 {
        return invalid("gradient suite needs at least one instance");
    }
    const N: usize = 16;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let census = CensusParams::default();
    let mut worst = [0.0f64; 4];
    for i in 0..instances {
        let flow = off_grid_flow(&mut rng, N, N, 3);
        let mask = noise_plane(&mut rng, N, N);
        let i1 = noise_image(&mut rng, N, N);
        let (i2, crop) = if i % 2 == 0 {
            (noise_image(&mut rng, N, N), CropWindow::full(N, N))
        } else {
            let crop = CropWindow::new(3, 2, N, N, N + 4, N + 6)?;
            (noise_image(&mut rng, N + 4, N + 6), crop)
        };
        let (_, g) = photometric_loss(&i1, &i2, &crop, &flow, &mask, &census)?;
        let e = check_flow_loss(
            &flow,
            &g,
            |f| photometric_loss(&i1, &i2, &crop, f, &mask, &census).map(|r| r.0),
            1e-3,
            tolerance,
        )?;
        worst[0] = worst[0].max(e);

        let lambda = rng.random_range(1.0..20.0);
        let smooth_flow = kink_free_flow(&mut rng, N, N);
        for (slot, order) in [(1, 1), (2, 2)] {
            let (_, g) = smoothness_loss(&i1, &smooth_flow, order, lambda)?;
            let e = check_flow_loss(
                &smooth_flow,
                &g,
                |f| smoothness_loss(&i1, f, order, lambda).map(|r| r.0),
                1e-2,
                tolerance,
            )?;
            worst[slot] = worst[slot].max(e);
        }

        // keep every residual at least 0.1 from the Charbonnier minimum
        let teacher = FlowField::from_fn(N, N, |y, x| {
            let (u, v) = smooth_flow.get(y, x);
            (u + signed(&mut rng, 0.1, 3.0), v + signed(&mut rng, 0.1, 3.0))
        });
        let label_mask = noise_plane(&mut rng, N, N);
        let prediction_mask = noise_plane(&mut rng, N, N);
        let masking = SelfSupMasking::ForwardBackward {
            label_mask: &label_mask,
            prediction_mask: &prediction_mask,
        };
        let (eps, alpha) = (0.001, 0.5);
        let (_, g) = self_supervision_loss(&teacher, &smooth_flow, masking, eps, alpha)?;
        let e = check_flow_loss(
            &smooth_flow,
            &g,
            |f| self_supervision_loss(&teacher, f, masking, eps, alpha).map(|r| r.0),
            1e-3,
            tolerance,
        )?;
        worst[3] = worst[3].max(e);
    }
    let names = ["photometric", "smoothness k=1", "smoothness k=2", "self-supervision"];
    Ok(names
        .iter()
        .zip(worst)
        .map(|(&name, w)| SuiteResult {
            name,
            instances,
            max_rel_error: w,
            passed: w < tolerance,
        })
        .collect())
}
