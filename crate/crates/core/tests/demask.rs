use std::sync::OnceLock;

use rismask_core::demask::*;
use rismask_core::io::ScenarioFile;
use rismask_core::scheduler::{random_wrong_key, CandidateSampling, MaskingKey};
use rismask_core::sim::*;
use rismask_core::{Stage, C64};

const GESTURE: &str = include_str!("../../../scenarios/default.toml");

fn base() -> &'static Scenario {
    static CELL: OnceLock<Scenario> = OnceLock::new();
    CELL.get_or_init(|| ScenarioFile::from_toml_str(GESTURE).unwrap().build(None, None).unwrap().0)
}

fn scenario(edit: impl FnOnce(&mut Scenario)) -> Scenario {
    let mut s = base().clone();
    edit(&mut s);
    s
}

fn legit_correlation(s: &Scenario, out: &SimOutput, params: &DemaskParams) -> f64 {
    let r = demask_pipeline(&out.legit, &s.key, params).unwrap();
    correlation(&r.samples, &out.truth.legit_times, &out.truth.motion).unwrap()
}

#[test]
fn correct_key_recovers_motion_at_high_snr() {
    let s = scenario(|s| s.params.snr_db = 60.0);
    let out = run_scenario(&s).unwrap();
    let params = DemaskParams::default();
    assert!(legit_correlation(&s, &out, &params) >= 0.99);

    let wrong = random_wrong_key(&s.key, 77, 8, CandidateSampling::Complementary).unwrap();
    let permissive = DemaskParams { permissive_sync: true, ..params };
    let guessed = match demask_pipeline(&out.legit, &wrong, &permissive) {
        Ok(r) => r.samples,
        Err(_) => out.legit.samples.clone(),
    };
    let c = correlation(&guessed, &out.truth.legit_times, &out.truth.motion).unwrap();
    assert!(c <= 0.3, "guessed key on the keyed receiver's trace: {c}");
}

#[test]
fn output_scales_with_input() {
    let s = scenario(|s| s.params.duration = 4.0);
    let out = run_scenario(&s).unwrap();
    let params = DemaskParams::default();
    let a = demask_pipeline(&out.legit, &s.key, &params).unwrap();
    let c = C64::new(-3.0, 1.5);
    let b = demask_pipeline(&out.legit.scaled(c), &s.key, &params).unwrap();
    assert_eq!(a.samples.len(), b.samples.len());
    assert_eq!(a.clock, b.clock);
    for (x, y) in a.samples.iter().zip(&b.samples) {
        assert_eq!(x.timestamp, y.timestamp);
        let scale = x.csi.iter().map(|z| z.norm()).fold(0.0, f64::max);
        for (p, q) in x.csi.iter().zip(y.csi.iter()) {
            assert!((p * c - q).norm() <= 1e-8 * scale * c.norm());
        }
    }
}

#[test]
fn reruns_are_identical() {
    let s = scenario(|s| s.params.duration = 3.0);
    let out = run_scenario(&s).unwrap();
    let params = DemaskParams::default();
    let a = demask_pipeline(&out.legit, &s.key, &params).unwrap();
    let b = demask_pipeline(&out.legit, &s.key, &params).unwrap();
    assert_eq!(a.samples, b.samples);
    assert_eq!(a.diagnostics, b.diagnostics);
}

#[test]
fn still_target_leaves_nothing_to_recover() {
    let s = scenario(|s| {
        s.motion = Motion::Static;
        s.params.duration = 4.0;
    });
    let out = run_scenario(&s).unwrap();
    match demask_pipeline(&out.legit, &s.key, &DemaskParams::default()) {
        Ok(r) => {
            let input: f64 = out.legit.samples.iter().map(|x| x.csi.norm_squared()).sum();
            let residual: f64 = r.samples.iter().map(|x| x.csi.norm_squared()).sum();
            assert!(residual < 1e-2 * input, "residual energy {residual} of {input}");
        }
        Err(e) => assert_eq!(e.stage(), Some(Stage::Gains), "{e}"),
    }
}

#[test]
fn drifting_clock_still_labels_every_packet_correctly() {
    let s = scenario(|s| {
        s.params.legit_clock = ClockModel { offset: 2e-3, drift: 1e-5 };
        s.params.duration = 10.0;
    });
    let out = run_scenario(&s).unwrap();
    let params = DemaskParams::default();
    let r = demask_pipeline(&out.legit, &s.key, &params).unwrap();
    assert!((r.clock.offset - 2e-3).abs() < 2e-4, "offset {}", r.clock.offset);
    let labeled = label_configs(&out.legit, &s.key, &r.clock, params.guard_for(&s.key)).unwrap();
    assert_eq!(labeled.guard_dropped, 0);
    let mut checked = 0;
    for sample in &labeled.samples {
        let i = out.truth.legit_times.partition_point(|&t| t < sample.timestamp);
        assert_eq!(out.truth.legit_times[i], sample.timestamp);
        assert_eq!(sample.config, out.truth.configs[i], "packet {i}");
        checked += 1;
    }
    assert_eq!(checked + labeled.sync_samples + labeled.span_dropped, out.legit.samples.len());
}

#[test]
fn injected_gains_are_recovered() {
    let injected = [C64::new(1.0, 0.0), C64::new(0.7, 0.0), C64::new(1.3, 0.0), C64::new(0.4, 0.0)];
    let s = scenario(|s| {
        s.key = MaskingKey::generate(9, 8, 8, 4, CandidateSampling::Complementary, 0.002, 0.5, 3).unwrap();
        s.params.gain_override = Some(injected.iter().map(|g| [g.re, g.im]).collect());
        s.params.snr_db = 20.0;
    });
    let out = run_scenario(&s).unwrap();
    let r = demask_pipeline(&out.legit, &s.key, &DemaskParams::default()).unwrap();
    for (c, want) in injected.iter().enumerate() {
        let got = r.gains.g[c];
        assert!((got - want).norm() <= 0.05 * want.norm(), "config {c}: {got} vs {want}");
    }
    assert!(r.gains.gradient_norm < 1e-8);
}

#[test]
fn short_trace_fails_at_sync() {
    let s = scenario(|s| s.params.duration = 2.0);
    let mut trace = run_scenario(&s).unwrap().legit;
    trace.samples.retain(|x| x.timestamp < 0.8);
    let err = demask_pipeline(&trace, &s.key, &DemaskParams::default()).unwrap_err();
    assert_eq!(err.stage(), Some(Stage::Sync), "{err}");
}

#[test]
fn wrong_key_shape_is_rejected() {
    let s = scenario(|s| s.params.duration = 2.0);
    let out = run_scenario(&s).unwrap();
    let mut key = s.key.clone();
    key.candidates.clear();
    assert!(demask_pipeline(&out.legit, &key, &DemaskParams::default()).unwrap_err().is_validation());
}
