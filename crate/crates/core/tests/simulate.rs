mod common;

use common::{following_event, merge_event};
use mergesim_core::dataio::{generate_synthetic_event, ScenarioSpec};
use mergesim_core::metrics::EvalWindow;
use mergesim_core::simulate::{full_window, simulate_event, SimConfig};
use mergesim_core::{ActorKind, ModelKind, ModelParams};
use proptest::prelude::*;

#[test]
fn no_leader_anywhere_replays_raw_speeds() {
    let mut ev = merge_event("solo");
    ev.tracks.retain(|t| t.kind == ActorKind::Ta);
    for (i, s) in ev.tracks[0].samples.iter_mut().enumerate() {
        s.speed = (18.0 + 3.0 * (i as f64 * 0.05).cos()).max(0.0);
    }
    for kind in ModelKind::ALL {
        let cfg = SimConfig::defaults(kind).with_window(full_window(&ev).unwrap());
        let res = simulate_event(&ev, &cfg).unwrap();
        let raw: Vec<f64> = ev.tracks[0].samples.iter().map(|s| s.speed).collect();
        assert_eq!(res.ta_speed, raw, "{kind}");
    }
}

#[test]
fn equilibrium_behind_constant_leader() {
    let mut p = ModelParams::defaults(ModelKind::Idm);
    p.set("v0", 40.0).unwrap();
    let ev = following_event(100.0, 20.0, 25.0, 300.0);
    let cfg = SimConfig::new(p).with_window(EvalWindow::new(0.0, 300.0).unwrap());
    let res = simulate_event(&ev, &cfg).unwrap();
    let v = *res.ta_speed.last().unwrap();
    assert!((v - 25.0).abs() < 1e-3, "{v}");
    // Bumper gap at equilibrium: s*(v) / sqrt(1 - (v/v0)^4), plus the driver offset.
    let s_star = 2.0 + 25.0 * 1.5;
    let expected = s_star / (1.0 - (25.0f64 / 40.0).powi(4)).sqrt();
    let la = &ev.tracks[1];
    let last = res.len() - 1;
    let la_rear = la.samples[last].s - 2.25;
    let gap = la_rear - (res.ta_s[last] + 2.25 - 1.5);
    assert!(
        (gap - expected).abs() < 0.01 * expected,
        "{gap} vs {expected}"
    );
}

#[test]
fn rollout_is_bit_reproducible() {
    let ev = generate_synthetic_event(&ScenarioSpec::standard_merge(), 11).unwrap();
    for kind in ModelKind::ALL {
        let cfg = SimConfig::defaults(kind);
        assert_eq!(
            simulate_event(&ev, &cfg).unwrap(),
            simulate_event(&ev, &cfg).unwrap()
        );
    }
}

#[test]
fn halving_the_step_converges_first_order() {
    let ev = following_event(40.0, 20.0, 25.0, 30.0);
    let final_speed = |step: f64| {
        let mut cfg =
            SimConfig::defaults(ModelKind::Idm).with_window(EvalWindow::new(0.0, 10.0).unwrap());
        cfg.step = step;
        *simulate_event(&ev, &cfg).unwrap().ta_speed.last().unwrap()
    };
    let (v1, v2, v3) = (final_speed(0.1), final_speed(0.05), final_speed(0.025));
    let (e1, e2) = ((v1 - v2).abs(), (v2 - v3).abs());
    assert!(e1 > 0.0 && e1 < 0.1);
    let ratio = e1 / e2;
    assert!((1.6..2.5).contains(&ratio), "ratio {ratio}");
}

#[test]
fn identity_rollout_tracks_recorded_accel() {
    // A generated event is its own perfect fit: same model, same parameters.
    let ev = generate_synthetic_event(&ScenarioSpec::overtaking_merge(), 5).unwrap();
    let cfg = SimConfig::defaults(ModelKind::MrIdm);
    let res = simulate_event(&ev, &cfg).unwrap();
    for (sim, raw) in res.ta_speed.iter().zip(&res.raw_speed) {
        assert!((sim - raw).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn outputs_are_finite_and_consistent(seed in 0u64..1000, kind_idx in 0usize..7, frac in 0.0f64..1.0) {
        let ev = generate_synthetic_event(&ScenarioSpec::standard_merge(), seed).unwrap();
        let kind = ModelKind::ALL[kind_idx];
        let mut p = ModelParams::defaults(kind);
        for name in p.names().into_iter().map(str::to_string).collect::<Vec<_>>() {
            let b = p.bounds[&name];
            p.set(&name, b.lo + frac * b.width()).unwrap();
        }
        let res = simulate_event(&ev, &SimConfig::new(p).with_window(full_window(&ev).unwrap())).unwrap();
        let n = res.len();
        prop_assert!(res.ta_speed.len() == n && res.ta_s.len() == n && res.accel.len() == n);
        for k in 0..n {
            prop_assert!(res.ta_speed[k].is_finite() && res.ta_speed[k] >= 0.0);
            prop_assert!(res.ta_s[k].is_finite() && res.accel[k].is_finite());
            if k > 0 {
                prop_assert_eq!(res.ta_s[k], res.ta_s[k - 1] + res.ta_speed[k - 1] * 0.1);
            }
        }
    }
}
