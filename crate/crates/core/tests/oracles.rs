//! Cross-checks against independent reference computations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ucmpc::f16;
use ucmpc::lti::{expm, zoh_discretize, Mat, Vector};
use ucmpc::mpc::{rpi_outer_box, solve_qp, QpProblem, QpSettings, QpStatus};
use ucmpc::sim::rk4_step;

#[test]
fn expm_matches_scaled_series() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let n = rng.random_range(1..=6);
        let a = Mat::from_fn(n, n, |_, _| rng.random_range(-3.0..3.0));
        let t = rng.random_range(0.0..2.0);
        // e^{At} = (e^{At/2^s})^{2^s} with a long series on the small step.
        let s = 12;
        let small = &a * (t / f64::from(1u32 << s));
        let mut term = Mat::identity(n, n);
        let mut sum = Mat::identity(n, n);
        for k in 1..30 {
            term = &term * &small / k as f64;
            sum += &term;
        }
        for _ in 0..s {
            sum = &sum * &sum;
        }
        let e = expm(&a, t).unwrap();
        let rel = (&e - &sum).norm() / sum.norm();
        assert!(rel < 1e-10, "rel {rel:e}");
    }
}

#[test]
fn rk4_matches_exact_propagation_with_input() {
    let plant = f16::plant();
    let a = plant.a_m();
    let u = Vector::from_column_slice(&[1.5, -0.7]);
    let dt = 1e-4;
    let (a_d, b_d) = zoh_discretize(&a, &plant.b, dt).unwrap();
    let mut x_rk = Vector::from_column_slice(&[0.5, 2.0, -0.3]);
    let mut x_ex = x_rk.clone();
    let mut worst: f64 = 0.0;
    for k in 0..10_000 {
        x_rk = rk4_step(|_, x| &a * x + &plant.b * &u, &x_rk, k as f64 * dt, dt).unwrap();
        x_ex = &a_d * &x_ex + &b_d * &u;
        worst = worst.max((&x_rk - &x_ex).amax());
    }
    assert!(worst <= 1e-8, "{worst:e}");
}

#[test]
fn qp_matches_kkt_on_mpc_sized_equality_problems() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..20 {
        let n = 40;
        let me = 12;
        let m = Mat::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let h = &m * m.transpose() + Mat::identity(n, n);
        let g = Vector::from_fn(n, |_, _| rng.random_range(-5.0..5.0));
        let a = Mat::from_fn(me, n, |_, _| rng.random_range(-1.0..1.0));
        let b = Vector::from_fn(me, |_, _| rng.random_range(-1.0..1.0));
        let p = QpProblem::new(h.clone(), g.clone(), Mat::zeros(0, n), Vector::zeros(0), Vector::zeros(0), a.clone(), b.clone()).unwrap();
        let s = solve_qp(&p, &QpSettings::default()).unwrap();
        assert_eq!(s.status, QpStatus::Optimal);
        let mut k = Mat::zeros(n + me, n + me);
        k.view_mut((0, 0), (n, n)).copy_from(&h);
        k.view_mut((0, n), (n, me)).copy_from(&a.transpose());
        k.view_mut((n, 0), (me, n)).copy_from(&a);
        let mut rhs = Vector::zeros(n + me);
        rhs.rows_mut(0, n).copy_from(&-&g);
        rhs.rows_mut(n, me).copy_from(&b);
        let want = k.lu().solve(&rhs).unwrap().rows(0, n).into_owned();
        assert!((&s.z - &want).amax() < 1e-8 * (1.0 + want.amax()));
    }
}

#[test]
fn qp_matches_projected_gradient_on_box_problems() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..20 {
        let n = 30;
        let m = Mat::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let h = &m * m.transpose() / n as f64 + Mat::identity(n, n) * 0.1;
        let g = Vector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
        let lo = Vector::from_fn(n, |_, _| rng.random_range(-2.0..0.0));
        let hi = Vector::from_fn(n, |_, _| rng.random_range(0.0..2.0));
        let p = QpProblem::inequality(h.clone(), g.clone(), Mat::identity(n, n), lo.clone(), hi.clone()).unwrap();
        let s = solve_qp(&p, &QpSettings::default()).unwrap();
        assert_eq!(s.status, QpStatus::Optimal);

        let step = 1.0 / h.clone().symmetric_eigenvalues().max();
        let mut z = Vector::zeros(n);
        for _ in 0..100_000 {
            let next = (&z - (&h * &z + &g) * step).zip_zip_map(&lo, &hi, |v, l, u| v.clamp(l, u));
            let done = (&next - &z).amax() < 1e-14;
            z = next;
            if done {
                break;
            }
        }
        let (fs, fo) = (p.objective(&s.z), p.objective(&z));
        assert!((fs - fo).abs() <= 1e-6 * (1.0 + fo.abs()), "{fs} vs {fo}");
        assert!(fs <= fo + 1e-9);
    }
}

#[test]
fn error_box_contains_random_disturbance_responses() {
    let plant = f16::plant();
    let unc = f16::uncertainty();
    let set = rpi_outer_box(&plant, &unc, 1e-6).unwrap();
    let z = set.z.radii();
    let kz = set.kx_z.radii();
    let b_f = &set.disturbance[..2];
    let dt = 0.005;
    let mut input = Mat::zeros(3, 3);
    input.view_mut((0, 0), (3, 2)).copy_from(&plant.b);
    input.view_mut((0, 2), (3, 1)).copy_from(&plant.b_u);
    let (a_d, b_d) = zoh_discretize(&plant.a_m(), &input, dt).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut escapes = 0;
    let mut peak = [0.0f64; 3];
    for _ in 0..1000 {
        let mut e = Vector::zeros(3);
        let mut d = Vector::zeros(3);
        let mut hold = 0;
        for _ in 0..1000 {
            if hold == 0 {
                d = Vector::from_fn(3, |i, _| {
                    let b = if i < 2 { b_f[i] } else { unc.b_w };
                    if rng.random_bool(0.8) {
                        if rng.random_bool(0.5) { b } else { -b }
                    } else {
                        rng.random_range(-b..b)
                    }
                });
                hold = rng.random_range(1..200);
            }
            hold -= 1;
            e = &a_d * &e + &b_d * &d;
            let u = &plant.k_x * &e;
            let out_x = (0..3).any(|i| e[i].abs() > z[i]);
            let out_u = (0..2).any(|j| u[j].abs() > kz[j]);
            if out_x || out_u {
                escapes += 1;
            }
            for i in 0..3 {
                peak[i] = peak[i].max(e[i].abs() / z[i]);
            }
        }
    }
    assert_eq!(escapes, 0);
    // The box is not vacuous: some run gets at least a third of the way out.
    assert!(peak.iter().all(|p| *p > 0.3), "{peak:?}");
}
