//! Synthetic acceptance checks with known answers, sized to run from the CLI.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::field::{FlowField, Plane};
use crate::flowkit::{evaluate, read_flo, write_flo, ErrorRateMode, FlowFileRecord};
use crate::gradcheck::gradient_suite;
use crate::objectives::{
    photometric_loss, sequence_weights, smoothness_loss, CensusParams, CropWindow,
};
use crate::occlusion::{estimate_occlusion, OcclusionMethod};
use crate::selfsup::{
    augment_pair, inversion_error, multi_frame_label, sample_record, train_inversion_model,
    AugmentRanges, InversionHyper, MultiFrameConfig,
};
use crate::solver::solve;
use crate::synth;

/// Outcome of one check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

/// Mean endpoint error over pixels at least `margin` from the border.
pub fn interior_epe(pred: &FlowField, gt: &FlowField, margin: usize) -> f64 {
    let (h, w) = (pred.height(), pred.width());
    let mask = Plane::from_fn(h, w, |y, x| {
        (y >= margin && x >= margin && y + margin < h && x + margin < w) as u8 as f64
    });
    masked_epe(pred, gt, &mask)
}

/// Mean endpoint error over pixels within `band` of the border.
pub fn border_band_epe(pred: &FlowField, gt: &FlowField, band: usize) -> f64 {
    let (h, w) = (pred.height(), pred.width());
    let mask = Plane::from_fn(h, w, |y, x| {
        (y < band || x < band || y + band >= h || x + band >= w) as u8 as f64
    });
    masked_epe(pred, gt, &mask)
}

/// Mean endpoint error over pixels where `mask > 0.5`; 0 for an empty mask.
pub fn masked_epe(pred: &FlowField, gt: &FlowField, mask: &Plane) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for (i, m) in mask.data.iter().enumerate() {
        if *m > 0.5 {
            let (a, b) = (&pred.as_slice()[2 * i..2 * i + 2], &gt.as_slice()[2 * i..2 * i + 2]);
            sum += (a[0] - b[0]).hypot(a[1] - b[1]);
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Precision and recall of the occluded class (`mask < 0.5`).
pub fn occlusion_precision_recall(estimated: &Plane, visible: &Plane) -> (f64, f64) {
    let (mut tp, mut fp, mut fneg) = (0.0, 0.0, 0.0);
    for (e, v) in estimated.data.iter().zip(&visible.data) {
        match (*e < 0.5, *v < 0.5) {
            (true, true) => tp += 1.0,
            (true, false) => fp += 1.0,
            (false, true) => fneg += 1.0,
            _ => {}
        }
    }
    let ratio = |a: f64, b: f64| if a + b == 0.0 { 1.0 } else { a / (a + b) };
    (ratio(tp, fp), ratio(tp, fneg))
}

/// Translations for the solver oracle: the four axis extremes, then random
/// vectors of length at most `max_len`.
pub fn oracle_shifts(count: usize, max_len: f64, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fixed = [(max_len, 0.0), (0.0, -max_len), (-max_len, 0.0), (0.0, max_len)];
    (0..count)
        .map(|i| {
            fixed.get(i).copied().unwrap_or_else(|| {
                let r = max_len * rng.random_range(0.0f64..1.0).sqrt();
                let a = rng.random_range(0.0..std::f64::consts::TAU);
                (r * a.cos(), r * a.sin())
            })
        })
        .collect()
}

/// Zoom factors of the crop scenes for the full-image warping check.
pub fn crop_scene_zooms(count: usize) -> Vec<f64> {
    (0..count).map(|i| 0.05 + 0.045 * i as f64 / count.max(2) as f64).collect()
}

fn timed(name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> CheckResult {
    let t = Instant::now();
    let (passed, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
    CheckResult {
        name,
        passed,
        detail,
        seconds: t.elapsed().as_secs_f64(),
    }
}

/// Runs every check; `quick` shrinks instance counts for a fast smoke run.
pub fn run_selftest(quick: bool) -> Vec<CheckResult> {
    let n = |full: usize, small: usize| if quick { small } else { full };
    vec![
        timed("gradients", || {
            let results = gradient_suite(n(20, 4), 0, 1e-4)?;
            let detail = results
                .iter()
                .map(|r| format!("{} {:.1e}", r.name, r.max_rel_error))
                .collect::<Vec<_>>()
                .join(", ");
            Ok((results.iter().all(|r| r.passed), detail))
        }),
        timed("solver oracle", || {
            let config = synth::benchmark_solver_config();
            let mut worst: f64 = 0.0;
            for (i, shift) in oracle_shifts(n(10, 2), 4.0, 11).into_iter().enumerate() {
                let scene = synth::translation_pair(64, 64, shift, 100 + i as u64);
                let out = solve(&scene.i1, &scene.i2, &CropWindow::full(64, 64), &config, None)?;
                worst = worst.max(interior_epe(out.sequence.final_flow(), &scene.flow, 8));
            }
            Ok((worst < 0.5, format!("worst interior EPE {worst:.3}")))
        }),
        timed("full-image warping", || {
            let (full, size, census) = (64, 40, CensusParams::default());
            let zooms = crop_scene_zooms(n(10, 2));
            let mut lower = 0;
            let mut gain = 0.0;
            for (i, &zoom) in zooms.iter().enumerate() {
                let scene = synth::zoom_pair(full, full, zoom, 300 + i as u64);
                let crop = synth::centred_crop(full, full, size, size);
                let i1 = scene.i1.crop(crop.y, crop.x, size, size)?;
                let i2 = scene.i2.crop(crop.y, crop.x, size, size)?;
                let gt = scene.flow.crop(crop.y, crop.x, size, size)?;
                let ones = Plane::filled(size, size, 1.0);
                let (lf, _) = photometric_loss(&i1, &scene.i2, &crop, &gt, &ones, &census)?;
                let local = CropWindow::full(size, size);
                let (lc, _) = photometric_loss(&i1, &i2, &local, &gt, &ones, &census)?;
                lower += (lf < lc) as usize;
                let mut config = synth::benchmark_solver_config();
                let ef = border_band_epe(
                    solve(&scene.i1, &scene.i2, &crop, &config, None)?.sequence.final_flow(),
                    &gt,
                    3,
                );
                config.full_image_warping = false;
                let ec = border_band_epe(
                    solve(&scene.i1, &scene.i2, &crop, &config, None)?.sequence.final_flow(),
                    &gt,
                    3,
                );
                gain += (1.0 - ef / ec) / zooms.len() as f64;
            }
            Ok((
                lower == zooms.len() && gain >= 0.25,
                format!("lower loss {lower}/{}, border EPE gain {:.0}%", zooms.len(), 100.0 * gain),
            ))
        }),
        timed("multi-frame labels", || {
            let ones = Plane::filled(32, 32, 1.0);
            let mut train: f64 = 0.0;
            for c in [1.0, 2.5, 4.0] {
                let back = FlowField::constant(32, 32, -c, 0.0);
                let fwd = FlowField::constant(32, 32, c, 0.0);
                let model = train_inversion_model(&back, &fwd, &ones, &InversionHyper::default())?;
                train = train.max(inversion_error(&model, &back, &fwd, &ones)?);
            }
            let config = MultiFrameConfig {
                solver: synth::benchmark_solver_config(),
                ..MultiFrameConfig::default()
            };
            let (mut raw, mut label) = (0.0, 0.0);
            for seed in 40..40 + n(5, 1) as u64 {
                let s = synth::exiting_strip_sequence(48, 64, 20, 1.0, 4.0, seed);
                let out = multi_frame_label(&s.prev, &s.cur, &s.next, &config)?;
                raw += masked_epe(&out.forward, &s.forward, &s.occluded);
                label += masked_epe(&out.label.flow, &s.forward, &s.occluded);
            }
            let gain = 1.0 - label / raw;
            Ok((
                train < 0.05 && gain >= 0.5,
                format!("training error {train:.4}, occluded EPE gain {:.0}%", 100.0 * gain),
            ))
        }),
        timed("loss identities", || {
            let s: f64 = sequence_weights(12, 0.8).iter().sum();
            let expected = (1.0 - 0.8f64.powi(12)) / 0.2;
            let img = synth::texture(12, 12, 3, 5);
            let affine = FlowField::from_fn(12, 12, |y, x| (0.3 * x as f64 - 1.0, 0.2 * y as f64));
            let (l2, _) = smoothness_loss(&img, &affine, 2, 150.0)?;
            let ok = (s - expected).abs() < 1e-12 && l2.abs() < 1e-12;
            Ok((ok, format!("sequence sum error {:.1e}, affine k=2 smoothness {l2:.1e}", (s - expected).abs())))
        }),
        timed("occlusion estimators", || {
            let scenes = [
                synth::moving_square(48, 48, 16, (12, 14), (5, 3), 1),
                synth::translation_pair(48, 48, (3.0, -2.0), 4),
            ];
            let mut worst: f64 = 1.0;
            for s in &scenes {
                for m in [OcclusionMethod::range_map(), OcclusionMethod::forward_backward()] {
                    let est = estimate_occlusion(m, &s.flow, &s.backward)?;
                    let (p, r) = occlusion_precision_recall(&est, &s.visible);
                    worst = worst.min(p).min(r);
                }
            }
            Ok((worst >= 0.9, format!("worst precision/recall {worst:.3}")))
        }),
        timed("metrics and formats", || {
            // .flo stores f32, so the roundtrip is exact for f32-representable flow
            let gt = FlowField::from_fn(8, 8, |y, x| {
                ((x as f32 * 0.7 - 2.0) as f64, (y as f32 * 0.3) as f64)
            });
            let mut pred = gt.clone();
            for uv in pred.as_mut_slice().chunks_exact_mut(2) {
                uv[0] += 3.0;
                uv[1] += 4.0;
            }
            let stats = evaluate(&pred, &FlowFileRecord::dense(gt.clone()), None, ErrorRateMode::Conjunction)?;
            let back = read_flo(&write_flo(&gt)?)?;
            Ok((
                stats.epe == 5.0 && back.flow == gt,
                format!("uniform (3,4) EPE {}, .flo roundtrip exact {}", stats.epe, back.flow == gt),
            ))
        }),
        timed("determinism", || {
            let scene = synth::translation_pair(32, 32, (1.5, -0.5), 9);
            let mut config = synth::benchmark_solver_config();
            config.steps_per_level = vec![40, 40, 40];
            let crop = CropWindow::full(32, 32);
            let a = solve(&scene.i1, &scene.i2, &crop, &config, None)?;
            let b = solve(&scene.i1, &scene.i2, &crop, &config, None)?;
            let ranges = AugmentRanges::for_crop(24, 24);
            let ra = sample_record(32, 32, &ranges, 17)?;
            let rb = sample_record(32, 32, &ranges, 17)?;
            let same_aug = ra == rb && augment_pair(&scene.i1, &scene.i2, &ra)? == augment_pair(&scene.i1, &scene.i2, &rb)?;
            let same_flow = a.sequence == b.sequence;
            Ok((same_flow && same_aug, format!("solve identical {same_flow}, augmentation identical {same_aug}")))
        }),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn helpers() {
        let gt = FlowField::zeros(4, 4);
        let pred = FlowField::constant(4, 4, 3.0, 4.0);
        assert_eq!(interior_epe(&pred, &gt, 1), 5.0);
        assert_eq!(border_band_epe(&pred, &gt, 1), 5.0);
        let vis = Plane::from_fn(2, 2, |y, _| y as f64);
        assert_eq!(occlusion_precision_recall(&vis, &vis), (1.0, 1.0));
        let shifts = oracle_shifts(10, 4.0, 1);
        assert_eq!(shifts[0], (4.0, 0.0));
        assert!(shifts.iter().all(|(x, y)| x.hypot(*y) <= 4.0 + 1e-12));
        let z = crop_scene_zooms(10);
        assert_eq!(z.len(), 10);
        assert!(z.iter().all(|v| (0.05..0.095).contains(v)));
    }
}
