//! Quick closed-form checks of the numerical building blocks.

use std::sync::Arc;

use ucmpc::f16;
use ucmpc::l1ac::{alpha_constants, gamma0, gamma2, L1Adaptive};
use ucmpc::lti::{expm, impulse_response, l1_norm, rho_in, FilterBank, Mat, StateSpaceModel, Vector};
use ucmpc::model::{NoUncertainty, UncertaintySpec, Unmatched};
use ucmpc::mpc::{rpi_outer_box, rpi_outer_box_discrete, solve_qp, QpProblem, QpSettings, Variant};
use ucmpc::sets::HyperRect;
use ucmpc::sim::{prepare_variant, rk4_step, run_closed_loop, verdict, ReferenceSchedule, SimConfig, VerdictOptions};
use ucmpc::tightening::{f16_l1_config, run_algorithm1, TighteningOptions};

pub struct CheckResult {
    pub name: &'static str,
    pub outcome: Result<(), String>,
}

type Check = fn() -> Result<(), String>;

fn close(what: &str, got: f64, want: f64, tol: f64) -> Result<(), String> {
    if (got - want).abs() <= tol {
        Ok(())
    } else {
        Err(format!("{what}: got {got:.10}, want {want:.10} ± {tol:e}"))
    }
}

fn e<E: std::fmt::Display>(err: E) -> String {
    err.to_string()
}

fn scalar_exponential() -> Result<(), String> {
    let sys = StateSpaceModel::strictly_proper(Mat::from_element(1, 1, -1.0), Mat::from_element(1, 1, 1.0), Mat::from_element(1, 1, 1.0))
        .map_err(e)?;
    for (t, h) in impulse_response(&sys, 0.01, 1.0).map_err(e)? {
        close("h(t)", h[(0, 0)], (-t).exp(), 1e-12)?;
    }
    Ok(())
}

fn diagonal_exponentials() -> Result<(), String> {
    let a = Mat::from_diagonal(&Vector::from_column_slice(&[-1.0, -3.0]));
    let e_at = expm(&a, 0.7).map_err(e)?;
    close("e^{-0.7}", e_at[(0, 0)], (-0.7f64).exp(), 1e-14)?;
    close("e^{-2.1}", e_at[(1, 1)], (-2.1f64).exp(), 1e-14)?;
    close("off-diagonal", e_at[(0, 1)], 0.0, 0.0)
}

fn first_order_norms() -> Result<(), String> {
    for k in [1.0, 200.0] {
        let g = l1_norm(&FilterBank::uniform(1, k).map_err(e)?.realization(), 1e-9).map_err(e)?;
        close("filter gain", g.max, 1.0, 1e-6)?;
    }
    let sys = StateSpaceModel::strictly_proper(Mat::from_element(1, 1, -1.0), Mat::from_element(1, 1, 1.0), Mat::from_element(1, 1, 1.0))
        .map_err(e)?;
    close("1/(s+1)", l1_norm(&sys, 1e-9).map_err(e)?.max, 1.0, 1e-6)
}

fn initial_condition_term() -> Result<(), String> {
    let a = Mat::from_element(1, 1, -1.0);
    close("X0 = {0}", rho_in(&a, &HyperRect::point(&[0.0])).map_err(e)?, 0.0, 0.0)?;
    close("s/(s+1)", rho_in(&a, &HyperRect::symmetric(&[1.0]).map_err(e)?).map_err(e)?, 2.0, 1e-5)
}

fn box_sums() -> Result<(), String> {
    let a = HyperRect::new(vec![-1.0, 2.0], vec![3.0, 5.0]).map_err(e)?;
    if a.minkowski_sum(&HyperRect::point(&[0.0, 0.0])).map_err(e)? != a {
        return Err("A ⊕ {0} differs from A".into());
    }
    let u = HyperRect::new(vec![0.0], vec![1.0]).map_err(e)?;
    let s = u.minkowski_sum(&u).map_err(e)?;
    close("lower", s.lower()[0], 0.0, 0.0)?;
    close("upper", s.upper()[0], 2.0, 0.0)
}

fn quiet_filter() -> Result<(), String> {
    let plant = f16::plant();
    let mut l1 = L1Adaptive::new(f16_l1_config(), plant.a_m(), plant.b.clone(), plant.b_pinv(), &Vector::zeros(3)).map_err(e)?;
    for _ in 0..100 {
        l1.estimation_update(&Vector::zeros(3), 0.0);
        l1.advance_filter(1e-4);
    }
    close("u_a", l1.adaptive_control().amax(), 0.0, 0.0)
}

fn alpha_closed_forms() -> Result<(), String> {
    let a = 10.0;
    let t = 1e-3;
    let plant = f16::plant();
    let c = alpha_constants(&Mat::from_diagonal_element(3, 3, -a), &plant.b, &plant.b_u, t).map_err(e)?;
    let b_inf = plant.b.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    close("alpha0", c.alpha0, b_inf * (1.0 - (-a * t).exp()) / a, 1e-10)?;
    close("alpha2", c.alpha2, 1.0, 1e-12)?;
    close("alpha3", c.alpha3, (-a * t).exp(), 1e-8)
}

fn zero_bounds() -> Result<(), String> {
    let plant = f16::plant();
    let c = alpha_constants(&Mat::from_diagonal_element(3, 3, -10.0), &plant.b, &plant.b_u, 1e-7).map_err(e)?;
    close("gamma0", gamma0(&c, 0.0, 0.0), 0.0, 0.0)?;
    if gamma0(&c, 2.0, 1.0) <= gamma0(&c, 1.0, 1.0) {
        return Err("gamma0 does not increase with b_f".into());
    }
    close("gamma2", gamma2(1.0, 0.5, 0.0, 3.0, 0.0), 0.0, 0.0)?;
    close("gamma2 filter term", gamma2(1.0, 0.5, 0.02, 3.0, 0.0), 0.01, 1e-15)
}

fn scalar_qp() -> Result<(), String> {
    let one = Mat::from_element(1, 1, 1.0);
    let p = QpProblem::inequality(one.clone() * 2.0, Vector::zeros(1), one, Vector::from_element(1, 1.0), Vector::from_element(1, f64::INFINITY))
        .map_err(e)?;
    let s = solve_qp(&p, &QpSettings::default()).map_err(e)?;
    close("z", s.z[0], 1.0, 1e-9)
}

fn invariant_boxes() -> Result<(), String> {
    let w = HyperRect::symmetric(&[1.0]).map_err(e)?;
    let z = rpi_outer_box_discrete(&Mat::from_element(1, 1, 0.5), &w, 1e-9, 10_000).map_err(e)?;
    close("scalar Z", z.upper()[0], 2.0, 1e-6)?;
    let zero = rpi_outer_box_discrete(&Mat::from_element(1, 1, 0.5), &HyperRect::point(&[0.0]), 1e-9, 100).map_err(e)?;
    close("W = {0}", zero.max_abs(), 0.0, 0.0)
}

fn rk4_steps() -> Result<(), String> {
    let x = rk4_step(|_, x| -x, &Vector::from_element(1, 1.0), 0.0, 0.1).map_err(e)?;
    close("e^{-0.1}", x[0], 0.9048375, 1e-7)?;
    let x = rk4_step(|_, x| x * 0.0, &Vector::from_column_slice(&[1.0, -2.0]), 0.0, 0.1).map_err(e)?;
    close("frozen", (x - Vector::from_column_slice(&[1.0, -2.0])).amax(), 0.0, 0.0)
}

fn quiet_closed_loop() -> Result<(), String> {
    let plant = f16::plant();
    let unc = UncertaintySpec::new(Arc::new(NoUncertainty { channels: 2 }), Unmatched::Zero { channels: 1 }, 0.0).map_err(e)?;
    let design = run_algorithm1(&plant, &unc, &f16_l1_config(), &TighteningOptions::default()).map_err(e)?;
    let rpi = rpi_outer_box(&plant, &unc, 1e-6).map_err(e)?;
    let sim = SimConfig {
        t_end_s: 0.5,
        reference: ReferenceSchedule::constant(vec![0.0, 0.0]),
        ..SimConfig::f16_default()
    };
    for v in Variant::ALL {
        let (c, l) = prepare_variant(&plant, v, &Default::default(), &f16_l1_config(), &design, Some(&rpi), &sim).map_err(e)?;
        let log = run_closed_loop(&plant, &unc, c, l, &sim).map_err(e)?;
        if log.records.iter().any(|r| r.x.iter().chain(&r.u).any(|v| *v != 0.0)) {
            return Err(format!("{v}: trajectory left the origin"));
        }
        let verdict = verdict(&log, Some(&design), &plant.x_set, &plant.u_set, &VerdictOptions::default());
        if !verdict.pass {
            return Err(format!("{v}: verdict failed on a quiet run"));
        }
    }
    Ok(())
}

const CHECKS: &[(&str, Check)] = &[
    ("impulse response of 1/(s+1) is e^-t", scalar_exponential),
    ("diagonal expm is per-channel exponentials", diagonal_exponentials),
    ("first-order filters have unit L1 norm", first_order_norms),
    ("initial-condition term closed forms", initial_condition_term),
    ("box sums", box_sums),
    ("zero estimate gives zero adaptive input", quiet_filter),
    ("alpha constants for A_e = -aI", alpha_closed_forms),
    ("gamma0 and gamma2 vanish with their inputs", zero_bounds),
    ("scalar QP min z^2 s.t. z >= 1", scalar_qp),
    ("invariant box of x+ = 0.5x + w", invariant_boxes),
    ("RK4 step closed forms", rk4_steps),
    ("quiet plant stays at the origin for every variant", quiet_closed_loop),
];

pub fn run_all() -> Vec<CheckResult> {
    CHECKS
        .iter()
        .map(|(name, check)| CheckResult {
            name,
            outcome: check(),
        })
        .collect()
}
