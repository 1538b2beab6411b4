//! The induced gain bounds the peak output for every bounded input, and is
//! nearly attained by the sign-matched input.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ucmpc::lti::{l1_norm, spectral_abscissa, zoh_discretize, FilterBank, Mat, StateSpaceModel, Vector};

fn random_stable(rng: &mut ChaCha8Rng) -> StateSpaceModel {
    let n = rng.random_range(1..=4);
    let m = rng.random_range(1..=2);
    let p = rng.random_range(1..=2);
    let mut a = Mat::from_fn(n, n, |_, _| rng.random_range(-2.0..2.0));
    let shift = spectral_abscissa(&a).unwrap() + rng.random_range(0.2..2.0);
    for i in 0..n {
        a[(i, i)] -= shift;
    }
    let b = Mat::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0));
    let c = Mat::from_fn(p, n, |_, _| rng.random_range(-1.0..1.0));
    let d = if rng.random_bool(0.5) {
        Mat::from_fn(p, m, |_, _| rng.random_range(-0.5..0.5))
    } else {
        Mat::zeros(p, m)
    };
    StateSpaceModel::new(a, b, c, d).unwrap()
}

struct Grid {
    a_d: Mat,
    b_d: Mat,
    dt: f64,
    steps: usize,
}

fn grid(sys: &StateSpaceModel) -> Grid {
    let decay = -spectral_abscissa(&sys.a).unwrap();
    let horizon = 12.0 / decay;
    let dt = (0.02 / sys.a.norm().max(1.0)).max(horizon / 20_000.0);
    let steps = (horizon / dt).ceil() as usize;
    let (a_d, b_d) = zoh_discretize(&sys.a, &sys.b, dt).unwrap();
    Grid { a_d, b_d, dt, steps }
}

/// Peak `|y_i|` over the grid for a piecewise-constant input.
fn peak<F: FnMut(usize) -> Vector>(sys: &StateSpaceModel, g: &Grid, mut input: F) -> Vec<f64> {
    let mut x = Vector::zeros(sys.states());
    let mut peak = vec![0.0f64; sys.outputs()];
    for k in 0..g.steps {
        let u = input(k);
        let y = &sys.c * &x + &sys.d * &u;
        for (p, v) in peak.iter_mut().zip(y.iter()) {
            *p = p.max(v.abs());
        }
        x = &g.a_d * &x + &g.b_d * &u;
    }
    peak
}

#[test]
fn random_inputs_never_exceed_the_gain() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..20 {
        let sys = random_stable(&mut rng);
        let gain = l1_norm(&sys, 1e-6).unwrap();
        let g = grid(&sys);
        for _ in 0..50 {
            // Random switching times and amplitudes in [-1, 1].
            let mut current = Vector::zeros(sys.inputs());
            let mut hold = 0usize;
            let peaks = peak(&sys, &g, |_| {
                if hold == 0 {
                    current = Vector::from_fn(sys.inputs(), |_, _| {
                        if rng.random_bool(0.7) {
                            if rng.random_bool(0.5) { 1.0 } else { -1.0 }
                        } else {
                            rng.random_range(-1.0..1.0)
                        }
                    });
                    hold = rng.random_range(1..=(g.steps / 20).max(2));
                }
                hold -= 1;
                current.clone()
            });
            for (p, bound) in peaks.iter().zip(&gain.rows) {
                assert!(*p <= bound + 1e-3, "peak {p} exceeds gain {bound}");
            }
        }
    }
}

#[test]
fn sign_matched_input_nearly_attains_the_gain() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..20 {
        let sys = random_stable(&mut rng);
        let gain = l1_norm(&sys, 1e-6).unwrap();
        let g = grid(&sys);
        for i in 0..sys.outputs() {
            // u_j(t) = sign(h_ij(T - t)) drives y_i(T) to Σ_j ∫|h_ij| + |D_ij|.
            let mut h = Vec::with_capacity(g.steps);
            let mut state = sys.b.clone();
            let (a_half, _) = zoh_discretize(&sys.a, &sys.b, 0.5 * g.dt).unwrap();
            state = &a_half * state;
            for _ in 0..g.steps {
                h.push((sys.c.row(i) * &state).transpose());
                state = &g.a_d * state;
            }
            let mut x = Vector::zeros(sys.states());
            for k in 0..g.steps {
                let u = h[g.steps - 1 - k].map(f64::signum);
                x = &g.a_d * &x + &g.b_d * &u;
            }
            let u_end = sys.d.row(i).transpose().map(f64::signum);
            let y = (sys.c.row(i) * &x)[0] + (sys.d.row(i) * &u_end)[0];
            assert!(y <= gain.rows[i] + 1e-3);
            assert!(y >= 0.97 * gain.rows[i] - 1e-6, "{y} vs {}", gain.rows[i]);
        }
    }
}

#[test]
fn first_order_filters_have_unit_gain() {
    for k in [0.5, 10.0, 200.0, 5e4] {
        let sys = FilterBank::uniform(2, k).unwrap().realization();
        let gain = l1_norm(&sys, 1e-9).unwrap();
        for r in gain.rows {
            assert!((r - 1.0).abs() < 1e-6, "k = {k}: {r}");
        }
    }
}
