use flowcraft::field::{FlowField, Plane};
use flowcraft::objectives::CropWindow;
use flowcraft::selfsup::{LabelProvenance, SelfSupLabel};
use flowcraft::selftest::interior_epe;
use flowcraft::solver::{solve, SelfSupRamp, SolverConfig};
use flowcraft::synth;
use flowcraft::Error;

fn full(n: usize) -> CropWindow {
    CropWindow::full(n, n)
}

#[test]
fn finest_level_tail_is_monotone() {
    let config = synth::benchmark_solver_config();
    for (i, shift) in [(2.3, -1.6), (-4.0, 0.0), (0.7, 3.2)].into_iter().enumerate() {
        let scene = synth::translation_pair(48, 48, shift, 7 + i as u64);
        let out = solve(&scene.i1, &scene.i2, &full(48), &config, None).unwrap();
        let finest = out.loss_history.last().unwrap();
        let start = (0.8 * finest.len() as f64).floor() as usize;
        for pair in finest[start..].windows(2) {
            assert!(pair[1] <= pair[0] + 1e-6, "uptick {} -> {}", pair[0], pair[1]);
        }
    }
}

#[test]
fn more_steps_do_not_hurt() {
    let scene = synth::translation_pair(48, 48, (-3.1, 1.2), 12);
    let config = synth::benchmark_solver_config();
    let base = solve(&scene.i1, &scene.i2, &full(48), &config, None).unwrap();
    let mut doubled = config.clone();
    doubled.steps_per_level = config.steps_per_level.iter().map(|s| 2 * s).collect();
    let long = solve(&scene.i1, &scene.i2, &full(48), &doubled, None).unwrap();
    let e1 = interior_epe(base.sequence.final_flow(), &scene.flow, 8);
    let e2 = interior_epe(long.sequence.final_flow(), &scene.flow, 8);
    assert!(e2 <= 1.05 * e1 + 1e-3, "{e1} -> {e2}");
}

#[test]
fn repeated_solves_are_bit_identical() {
    let scene = synth::translation_pair(32, 32, (1.0, 2.5), 3);
    let mut config = synth::benchmark_solver_config();
    config.steps_per_level = vec![50, 50, 50];
    let a = solve(&scene.i1, &scene.i2, &full(32), &config, None).unwrap();
    let b = solve(&scene.i1, &scene.i2, &full(32), &config, None).unwrap();
    assert_eq!(a.sequence, b.sequence);
    assert_eq!(a.loss_history, b.loss_history);
    assert_eq!(a.sequence.len(), config.sequence_len());
}

#[test]
fn dominant_label_is_reproduced() {
    // frames carry no usable correspondence; the label alone fixes the answer
    let i1 = synth::texture(32, 32, 3, 1);
    let i2 = synth::texture(32, 32, 3, 2);
    let target = FlowField::from_fn(32, 32, |y, x| (0.05 * x as f64 - 1.0, 0.5 - 0.03 * y as f64));
    let label = SelfSupLabel {
        flow: target.clone(),
        valid: Plane::filled(32, 32, 1.0),
        provenance: LabelProvenance::TwoFrameTeacher,
    };
    let mut config = synth::benchmark_solver_config();
    config.ramp = SelfSupRamp {
        start: 0.0,
        end: 0.0,
        final_weight: 100.0,
    };
    config.weights.smooth = 0.0;
    let out = solve(&i1, &i2, &full(32), &config, Some(&label)).unwrap();
    let epe = interior_epe(out.sequence.final_flow(), &target, 0);
    assert!(epe < 0.1, "label EPE {epe}");
}

#[test]
fn invalid_configurations_are_rejected() {
    let scene = synth::translation_pair(16, 16, (0.0, 0.0), 0);
    let config = SolverConfig {
        steps_per_level: vec![10],
        ..SolverConfig::default()
    };
    let err = solve(&scene.i1, &scene.i2, &full(16), &config, None).unwrap_err();
    assert!(matches!(err, Error::InvalidInput(_)));
    let wrong = CropWindow::full(20, 16);
    let err = solve(&scene.i1, &scene.i2, &wrong, &SolverConfig::default(), None).unwrap_err();
    assert!(matches!(err, Error::InvalidInput(_)));
}
