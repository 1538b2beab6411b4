//! Fixed-step closed-loop simulation of `ẋ = A x + B(u + f(t, x)) + B_u w(t)`.
//!
//! The plant and the adaptive predictor are integrated together with RK4 at
//! `dt_plant`; the uncertainty and the filter output are evaluated at each
//! stage. The estimate is refreshed every `dt_l1`. The MPC is re-solved every
//! `dt_ctrl` and its plan is applied sample by sample in between; the nominal
//! model is advanced exactly with the same `u_opt`.

mod log;
mod verdict;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::l1ac::{L1Adaptive, L1Config, L1Error};
use crate::lti::{zoh_discretize, FilterBank, LtiError, Vector};
use crate::model::{PlantSpec, UncertaintySpec};
use crate::mpc::{ConstraintSets, MpcConfig, MpcController, MpcError, RpiSet, Variant};
use crate::tightening::TighteningResult;

pub use log::{Record, TrajectoryLog};
pub use verdict::{verdict, AxisCheck, Verdict, VerdictOptions};

/// States beyond this magnitude abort the run.
pub const BLOWUP_LIMIT: f64 = 1e6;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Mpc(#[from] MpcError),
    #[error(transparent)]
    Lti(#[from] LtiError),
    #[error(transparent)]
    L1(#[from] L1Error),
    #[error("invalid simulation configuration: {0}")]
    Config(String),
    #[error("non-finite derivative at t = {t:.6} s")]
    NonFinite { t: f64 },
    #[error("state blow-up at t = {t:.6} s (|x| = {norm:.3e})")]
    Blowup { t: f64, norm: f64 },
}

/// Classical fourth-order Runge-Kutta step.
pub fn rk4_step<F>(field: F, x: &Vector, t: f64, dt: f64) -> Result<Vector, SimError>
where
    F: Fn(f64, &Vector) -> Vector,
{
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(SimError::Config(format!("step must be positive, got {dt}")));
    }
    let check = |v: Vector, s: f64| {
        if v.iter().all(|e| e.is_finite()) {
            Ok(v)
        } else {
            Err(SimError::NonFinite { t: s })
        }
    };
    let k1 = check(field(t, x), t)?;
    let k2 = check(field(t + 0.5 * dt, &(x + &k1 * (0.5 * dt))), t + 0.5 * dt)?;
    let k3 = check(field(t + 0.5 * dt, &(x + &k2 * (0.5 * dt))), t + 0.5 * dt)?;
    let k4 = check(field(t + dt, &(x + &k3 * dt)), t + dt)?;
    Ok(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
}

/// Piecewise-constant reference, each segment active from its start time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSegment {
    pub start_s: f64,
    pub value: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ReferenceSchedule {
    segments: Vec<ReferenceSegment>,
}

impl ReferenceSchedule {
    pub fn new(mut segments: Vec<ReferenceSegment>) -> Result<Self, SimError> {
        if segments.is_empty() {
            return Err(SimError::Config("reference schedule is empty".into()));
        }
        segments.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
        let dim = segments[0].value.len();
        if segments.iter().any(|s| s.value.len() != dim || !s.start_s.is_finite() || s.value.iter().any(|v| !v.is_finite())) {
            return Err(SimError::Config("reference segments must be finite and of equal length".into()));
        }
        Ok(Self { segments })
    }

    pub fn constant(value: Vec<f64>) -> Self {
        Self {
            segments: vec![ReferenceSegment { start_s: 0.0, value }],
        }
    }

    pub fn segments(&self) -> &[ReferenceSegment] {
        &self.segments
    }

    pub fn dim(&self) -> usize {
        self.segments[0].value.len()
    }

    /// Value of the last segment starting at or before `t`; the first
    /// segment also covers earlier times.
    pub fn at(&self, t: f64) -> Vector {
        let seg = self
            .segments
            .iter()
            .rev()
            .find(|s| s.start_s <= t + 1e-12)
            .unwrap_or(&self.segments[0]);
        Vector::from_column_slice(&seg.value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub dt_plant_s: f64,
    pub dt_l1_s: f64,
    pub dt_ctrl_s: f64,
    pub t_end_s: f64,
    pub reference: ReferenceSchedule,
    pub x0: Vec<f64>,
}

impl SimConfig {
    /// 15 s run with the pitch/flight-path step schedule, starting at rest.
    pub fn f16_default() -> Self {
        Self {
            dt_plant_s: 1e-4,
            dt_l1_s: 1e-4,
            dt_ctrl_s: 0.01,
            t_end_s: 15.0,
            reference: ReferenceSchedule::new(vec![
                ReferenceSegment {
                    start_s: 0.0,
                    value: vec![9.0, 6.5],
                },
                ReferenceSegment {
                    start_s: 7.5,
                    value: vec![0.0, 0.0],
                },
            ])
            .expect("static schedule"),
            x0: vec![0.0; 3],
        }
    }

    pub(crate) fn ratio(big: f64, small: f64) -> Option<usize> {
        let r = big / small;
        let k = r.round();
        ((r - k).abs() <= 1e-6 * r.max(1.0) && k >= 1.0).then_some(k as usize)
    }

    /// Checks the rate ladder and returns `(l1_every, ctrl_every, total)` in
    /// plant steps.
    pub fn step_counts(&self) -> Result<(usize, usize, usize), SimError> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !pos(self.dt_plant_s) || !pos(self.dt_l1_s) || !pos(self.dt_ctrl_s) || !pos(self.t_end_s) {
            return Err(SimError::Config("time steps and duration must be positive".into()));
        }
        if !(self.dt_plant_s <= self.dt_l1_s && self.dt_l1_s <= self.dt_ctrl_s) {
            return Err(SimError::Config("need dt_plant ≤ dt_l1 ≤ dt_ctrl".into()));
        }
        let l1 = Self::ratio(self.dt_l1_s, self.dt_plant_s)
            .ok_or_else(|| SimError::Config("dt_l1 must be an integer multiple of dt_plant".into()))?;
        let ctrl = Self::ratio(self.dt_ctrl_s, self.dt_l1_s)
            .ok_or_else(|| SimError::Config("dt_ctrl must be an integer multiple of dt_l1".into()))?;
        let total = Self::ratio(self.t_end_s, self.dt_ctrl_s)
            .ok_or_else(|| SimError::Config("t_end must be an integer multiple of dt_ctrl".into()))?;
        Ok((l1, l1 * ctrl, total * ctrl * l1))
    }
}

/// Controller and, for the UC variant, the adaptive loop sampled at
/// `dt_l1` with the filter bandwidths chosen by the design.
pub fn prepare_variant(
    plant: &PlantSpec,
    variant: Variant,
    mpc: &MpcConfig,
    design_l1: &L1Config,
    tightening: &TighteningResult,
    rpi: Option<&RpiSet>,
    sim: &SimConfig,
) -> Result<(MpcController, Option<L1Adaptive>), SimError> {
    let sets = match variant {
        Variant::Uc => ConstraintSets::uc(tightening),
        Variant::Vanilla => ConstraintSets::vanilla(plant),
        Variant::Tube => {
            let rpi = rpi.ok_or_else(|| SimError::Config("tube variant needs an invariant set".into()))?;
            ConstraintSets::tube(plant, rpi)?
        }
    };
    let controller = MpcController::new(plant, variant, mpc, sets)?;
    let l1 = if variant == Variant::Uc {
        let cfg = design_l1
            .with_sample_time(sim.dt_l1_s)?
            .with_filters(FilterBank::new(tightening.k_f_final.clone())?);
        let x0 = Vector::from_column_slice(&sim.x0);
        Some(L1Adaptive::new(cfg, plant.a_m(), plant.b.clone(), plant.b_pinv(), &x0)?)
    } else {
        None
    };
    Ok((controller, l1))
}

/// Advances plant, nominal model, predictor and filter for one run.
pub fn run_closed_loop(
    plant: &PlantSpec,
    unc: &UncertaintySpec,
    mut controller: MpcController,
    mut l1: Option<L1Adaptive>,
    cfg: &SimConfig,
) -> Result<TrajectoryLog, SimError> {
    let (l1_every, ctrl_every, total) = cfg.step_counts()?;
    unc.check_against(plant).map_err(|e| SimError::Config(e.to_string()))?;
    let n = plant.states();
    let m = plant.inputs();
    if cfg.x0.len() != n {
        return Err(SimError::Config(format!("x0 has {} entries, plant has {n} states", cfg.x0.len())));
    }
    if cfg.reference.dim() != plant.outputs() {
        return Err(SimError::Config("reference and output dimensions differ".into()));
    }
    if let Some(l1) = &l1 {
        let ts = l1.config().t_sample;
        if (ts - cfg.dt_l1_s).abs() > 1e-12 * ts {
            return Err(SimError::Config(format!(
                "adaptive sample time {ts} s differs from dt_l1 {} s",
                cfg.dt_l1_s
            )));
        }
    }
    let update = controller.config().update_period_s;
    if (update - cfg.dt_ctrl_s).abs() > 1e-9 * update {
        return Err(SimError::Config(format!(
            "MPC update period {update} s differs from dt_ctrl {} s",
            cfg.dt_ctrl_s
        )));
    }
    let variant = controller.variant();
    let dt = cfg.dt_plant_s;
    let a_m = plant.a_m();
    let (nom_a, nom_b) = zoh_discretize(&a_m, &plant.b, dt)?;
    let b_pinv = plant.b_pinv();
    let reference = |t: f64| cfg.reference.at(t);

    let x0 = Vector::from_column_slice(&cfg.x0);
    if let Some(l1) = l1.as_mut() {
        l1.set_predictor(x0.clone());
    }
    // Joint state [x; x̂].
    let mut z = Vector::zeros(2 * n);
    z.rows_mut(0, n).copy_from(&x0);
    z.rows_mut(n, n).copy_from(&x0);
    let mut x_n = x0.clone();
    let mut u_opt = Vector::zeros(m);
    let mut plan = vec![u_opt.clone()];
    let mut solved_at = 0;
    let sample_every = SimConfig::ratio(controller.config().dt_s, dt).ok_or_else(|| {
        SimError::Config("MPC step must be an integer multiple of dt_plant".into())
    })?;
    let mut log = TrajectoryLog::new(cfg.dt_l1_s);
    log.records.reserve(total / l1_every + 1);

    for i in 0..=total {
        let t = i as f64 * dt;
        let x = z.rows(0, n).into_owned();
        if i % l1_every == 0 {
            if let Some(l1) = l1.as_mut() {
                l1.set_predictor(z.rows(n, n).into_owned());
                l1.estimation_update(&x, t);
            }
        }
        if i % ctrl_every == 0 {
            let start = match variant {
                Variant::Vanilla => &x,
                Variant::Uc | Variant::Tube => &x_n,
            };
            plan = controller.solve(t, start, reference)?.plan;
            solved_at = i;
        }
        let sample = (i - solved_at) / sample_every;
        u_opt = plan[sample.min(plan.len() - 1)].clone();
        if i % l1_every == 0 {
            log.push(record(plant, unc, l1.as_ref(), &b_pinv, t, &z, &x_n, &u_opt, &reference(t)));
        }
        if i == total {
            break;
        }

        let field = |s: f64, zs: &Vector| -> Vector {
            let xs = zs.rows(0, n).into_owned();
            let u_a = l1.as_ref().map_or_else(|| Vector::zeros(m), |l| l.filter_output_at(s - t));
            let f = Vector::from_vec(unc.matched.eval(s, xs.as_slice()));
            let w = Vector::from_vec(unc.unmatched.eval(s));
            let u = &plant.k_x * &xs + &u_opt + &u_a;
            let dx = &plant.a * &xs + &plant.b * (u + f) + &plant.b_u * w;
            let mut out = Vector::zeros(2 * n);
            out.rows_mut(0, n).copy_from(&dx);
            if let Some(l) = l1.as_ref() {
                let xh = zs.rows(n, n).into_owned();
                out.rows_mut(n, n).copy_from(&l.predictor_derivative(&xh, &xs, &u_opt, &u_a));
            }
            out
        };
        z = rk4_step(field, &z, t, dt)?;
        if let Some(l1) = l1.as_mut() {
            l1.advance_filter(dt);
        }
        x_n = &nom_a * &x_n + &nom_b * &u_opt;
        let norm = z.rows(0, n).amax();
        if !(norm <= BLOWUP_LIMIT) {
            return Err(SimError::Blowup { t: t + dt, norm });
        }
    }
    Ok(log)
}

#[allow(clippy::too_many_arguments)]
fn record(
    plant: &PlantSpec,
    unc: &UncertaintySpec,
    l1: Option<&L1Adaptive>,
    b_pinv: &crate::lti::Mat,
    t: f64,
    z: &Vector,
    x_n: &Vector,
    u_opt: &Vector,
    r: &Vector,
) -> Record {
    let n = plant.states();
    let m = plant.inputs();
    let x = z.rows(0, n).into_owned();
    let (x_hat, sigma_hat, u_a) = match l1 {
        Some(l) => {
            let s = l.state();
            (z.rows(n, n).into_owned(), s.sigma_hat.clone(), s.u_a.clone())
        }
        None => (x.clone(), Vector::zeros(n), Vector::zeros(m)),
    };
    let u = &plant.k_x * &x + u_opt + &u_a;
    Record {
        t,
        x_tilde: (&x_hat - &x).as_slice().to_vec(),
        matched_estimate: (b_pinv * &sigma_hat).as_slice().to_vec(),
        f: unc.matched.eval(t, x.as_slice()),
        w: unc.unmatched.eval(t),
        y: (&plant.c * &x).as_slice().to_vec(),
        x: x.as_slice().to_vec(),
        x_n: x_n.as_slice().to_vec(),
        x_hat: x_hat.as_slice().to_vec(),
        sigma_hat: sigma_hat.as_slice().to_vec(),
        u_opt: u_opt.as_slice().to_vec(),
        u_a: u_a.as_slice().to_vec(),
        u: u.as_slice().to_vec(),
        r: r.as_slice().to_vec(),
    }
}
