//! Behaviour of the sample-time bound `γ0(T)` on the F-16 design.

use ucmpc::f16;
use ucmpc::l1ac::{alpha_constants, gamma0};
use ucmpc::tightening::{f16_l1_config, run_algorithm1, TighteningOptions};

#[test]
fn gamma0_decreases_with_the_sample_time() {
    let plant = f16::plant();
    let l1 = f16_l1_config();
    let b_f = 4.32;
    let ts: Vec<f64> = (3..=8).map(|k| 10f64.powi(-k)).collect();
    let values: Vec<f64> = ts
        .iter()
        .map(|t| gamma0(&alpha_constants(&l1.a_e, &plant.b, &plant.b_u, *t).unwrap(), b_f, 1.0))
        .collect();
    for w in values.windows(2) {
        assert!(w[1] < w[0], "{values:?}");
    }
    // Roughly linear in T once T is small.
    let ratio = values[4] / values[5];
    assert!((ratio - 10.0).abs() < 0.5, "{ratio}");
    assert!(values[5] < 1e-4);
}

#[test]
fn gamma0_on_a_fine_grid_is_monotone() {
    let plant = f16::plant();
    let l1 = f16_l1_config();
    let mut prev = f64::INFINITY;
    for k in 0..=50 {
        let t = 10f64.powf(-3.0 - 5.0 * k as f64 / 50.0);
        let g = gamma0(&alpha_constants(&l1.a_e, &plant.b, &plant.b_u, t).unwrap(), 4.32, 1.0);
        assert!(g < prev, "T = {t:e}");
        prev = g;
    }
}

#[test]
fn design_sample_time_satisfies_the_condition() {
    let plant = f16::plant();
    let unc = f16::uncertainty();
    let r = run_algorithm1(&plant, &unc, &f16_l1_config(), &TighteningOptions::default()).unwrap();
    assert!((r.t_final - 1e-7).abs() < 1e-20);
    let entry = r.audit.iter().rev().find(|e| e.step.starts_with("T =")).unwrap();
    assert!(entry.holds && entry.lhs < 0.02, "{entry:?}");
    assert_eq!(r.gamma1, 0.02);
    let (_, g0) = *r.t_sequence.last().unwrap();
    assert_eq!(g0, r.gamma0);
}

#[test]
fn coarse_start_halves_until_the_condition_holds() {
    let plant = f16::plant();
    let unc = f16::uncertainty();
    let l1 = f16_l1_config().with_sample_time(1e-2).unwrap();
    let r = run_algorithm1(&plant, &unc, &l1, &TighteningOptions::default()).unwrap();
    assert!(r.t_sequence.len() > 1);
    for w in r.t_sequence.windows(2) {
        assert!((w[1].0 - 0.5 * w[0].0).abs() < 1e-18);
        assert!(w[1].1 < w[0].1);
    }
    let last = r.audit.iter().rev().find(|e| e.step.starts_with("T =")).unwrap();
    assert!(last.holds);
    let before = r.audit.iter().filter(|e| e.step.starts_with("T =")).count();
    assert_eq!(before, 1, "only the accepted sample time is audited");
}
