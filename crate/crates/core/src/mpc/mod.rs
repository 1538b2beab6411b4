//! Receding-horizon control of the nominal closed loop `ẋ = A_m x + B u_opt`.
//!
//! The continuous problem is discretized with a zero-order hold and condensed
//! onto the input samples, then solved by [`qp::solve_qp`]. Three variants
//! share the transcription and differ in the state they start from, the sets
//! they enforce and how state constraints are treated.

pub mod qp;
pub mod rpi;
mod transcribe;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lti::{LtiError, Mat, Vector};
use crate::model::PlantSpec;
use crate::sets::{HyperRect, SetError};
use crate::tightening::TighteningResult;

pub use qp::{solve_qp, QpError, QpProblem, QpSettings, QpSolution, QpStatus};
pub use rpi::{rpi_outer_box, rpi_outer_box_discrete, RpiSet};
pub use transcribe::{RowKind, Transcription};

#[derive(Debug, Error)]
pub enum MpcError {
    #[error(transparent)]
    Lti(#[from] LtiError),
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error(transparent)]
    Set(#[from] SetError),
    #[error("invalid MPC configuration: {0}")]
    Config(String),
    #[error("{variant} MPC infeasible at t = {time:.4} s: {kind} constraint at node {node}")]
    Infeasible {
        variant: Variant,
        time: f64,
        node: usize,
        kind: RowKind,
    },
    #[error("{variant} MPC infeasible at t = {time:.4} s")]
    InfeasibleStart { variant: Variant, time: f64 },
    #[error("QP iteration limit reached at t = {time:.4} s")]
    MaxIterations { time: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Nominal state, tightened sets `X_n`, `U_n`, adaptive compensation.
    Uc,
    /// Measured state, original sets, softened state constraints.
    Vanilla,
    /// Nominal state, sets shrunk by an invariant error box.
    Tube,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Uc, Variant::Vanilla, Variant::Tube];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Uc => "uc",
            Variant::Vanilla => "vanilla",
            Variant::Tube => "tube",
        }
    }

    pub fn soft_states(self) -> bool {
        matches!(self, Variant::Vanilla)
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "uc" => Ok(Variant::Uc),
            "vanilla" => Ok(Variant::Vanilla),
            "tube" => Ok(Variant::Tube),
            other => Err(format!("unknown variant `{other}` (expected uc, vanilla or tube)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MpcWeights {
    pub tracking: f64,
    pub effort: f64,
    pub rate: f64,
}

impl Default for MpcWeights {
    fn default() -> Self {
        Self {
            tracking: 100.0,
            effort: 1e-3,
            rate: 1e-2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MpcConfig {
    pub horizon_s: f64,
    pub dt_s: f64,
    /// `t_δ`: how long each solution's first sample is applied.
    pub update_period_s: f64,
    pub weights: MpcWeights,
    /// Quadratic slack weight of the soft variant.
    pub soft_penalty: f64,
    /// Linear slack weight; large enough values make the softening exact.
    pub soft_penalty_linear: f64,
    /// Use future reference samples inside the horizon instead of holding
    /// the current one.
    pub reference_preview: bool,
    pub qp_tol: f64,
    pub qp_max_iter: usize,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            horizon_s: 0.2,
            dt_s: 0.01,
            update_period_s: 0.01,
            weights: MpcWeights::default(),
            soft_penalty: 1e4,
            soft_penalty_linear: 1e4,
            reference_preview: false,
            qp_tol: 1e-9,
            qp_max_iter: 2000,
        }
    }
}

impl MpcConfig {
    pub fn steps(&self) -> usize {
        (self.horizon_s / self.dt_s).round() as usize
    }

    /// Number of planned samples applied before the next solve.
    pub fn samples_per_update(&self) -> usize {
        ((self.update_period_s / self.dt_s) - 1e-9).ceil().max(1.0) as usize
    }

    pub fn validate(&self) -> Result<(), MpcError> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !pos(self.horizon_s) || !pos(self.dt_s) || !pos(self.update_period_s) {
            return Err(MpcError::Config("horizon, step and update period must be positive".into()));
        }
        let n = self.horizon_s / self.dt_s;
        if (n - n.round()).abs() > 1e-9 * n.max(1.0) || n.round() < 1.0 {
            return Err(MpcError::Config(format!(
                "step {} s does not divide horizon {} s",
                self.dt_s, self.horizon_s
            )));
        }
        if self.update_period_s > self.horizon_s * (1.0 + 1e-12) {
            return Err(MpcError::Config("update period exceeds the horizon".into()));
        }
        let w = &self.weights;
        if [w.tracking, w.effort, w.rate, self.soft_penalty, self.soft_penalty_linear]
            .iter()
            .any(|v| !(*v >= 0.0 && v.is_finite()))
        {
            return Err(MpcError::Config("weights and penalties must be nonnegative".into()));
        }
        if w.effort == 0.0 && w.rate == 0.0 {
            return Err(MpcError::Config("effort or rate weight must be positive".into()));
        }
        if self.soft_penalty == 0.0 {
            return Err(MpcError::Config("soft penalty must be positive".into()));
        }
        if !pos(self.qp_tol) || self.qp_max_iter == 0 {
            return Err(MpcError::Config("QP tolerance and iteration limit must be positive".into()));
        }
        Ok(())
    }

    pub fn qp_settings(&self) -> QpSettings {
        QpSettings {
            tol: self.qp_tol,
            max_iter: self.qp_max_iter,
            ..QpSettings::default()
        }
    }
}

/// State and input sets enforced by a controller, with `K_x x + u_opt ∈ inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSets {
    pub states: HyperRect,
    pub inputs: HyperRect,
}

impl ConstraintSets {
    pub fn uc(t: &TighteningResult) -> Self {
        Self {
            states: t.x_n.clone(),
            inputs: t.u_n.clone(),
        }
    }

    pub fn vanilla(plant: &PlantSpec) -> Self {
        Self {
            states: plant.x_set.clone(),
            inputs: plant.u_set.clone(),
        }
    }

    pub fn tube(plant: &PlantSpec, z: &RpiSet) -> Result<Self, MpcError> {
        let states = plant
            .x_set
            .pontryagin_diff(&z.z)?
            .into_box()
            .ok_or_else(|| MpcError::Config("X ⊖ Z is empty".into()))?;
        let inputs = plant
            .u_set
            .pontryagin_diff(&z.kx_z)?
            .into_box()
            .ok_or_else(|| MpcError::Config("U ⊖ K_x Z is empty".into()))?;
        Ok(Self { states, inputs })
    }
}

/// Result of one receding-horizon solve.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcStep {
    /// First planned sample.
    pub u_opt: Vector,
    /// Planned samples covering one update period, each held for `dt_s`.
    pub plan: Vec<Vector>,
    pub iterations: usize,
    pub objective: f64,
    /// Largest state slack; zero for hard variants.
    pub max_slack: f64,
}

/// One controller instance; owns its transcription and the last applied input.
#[derive(Debug, Clone)]
pub struct MpcController {
    variant: Variant,
    cfg: MpcConfig,
    tr: Transcription,
    last_u: Vector,
}

impl MpcController {
    pub fn new(plant: &PlantSpec, variant: Variant, cfg: &MpcConfig, sets: ConstraintSets) -> Result<Self, MpcError> {
        cfg.validate()?;
        let tr = Transcription::new(plant, cfg, sets, variant.soft_states())?;
        Ok(Self {
            variant,
            cfg: cfg.clone(),
            last_u: Vector::zeros(plant.inputs()),
            tr,
        })
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn config(&self) -> &MpcConfig {
        &self.cfg
    }

    pub fn transcription(&self) -> &Transcription {
        &self.tr
    }

    pub fn last_input(&self) -> &Vector {
        &self.last_u
    }

    /// Reference samples for nodes `1..=N` starting at time `t`.
    pub fn preview<R: Fn(f64) -> Vector>(&self, t: f64, reference: R) -> Vec<Vector> {
        let n = self.tr.steps();
        if self.cfg.reference_preview {
            (1..=n).map(|k| reference(t + k as f64 * self.cfg.dt_s)).collect()
        } else {
            vec![reference(t); n]
        }
    }

    /// Builds the QP for state `x` at time `t` without solving it.
    pub fn problem<R: Fn(f64) -> Vector>(&self, t: f64, x: &Vector, reference: R) -> Result<QpProblem, MpcError> {
        let refs = self.preview(t, reference);
        self.tr.problem(x, &refs, &self.last_u)
    }

    /// Solves at time `t` from `x` (nominal or measured, per variant) and
    /// returns the plan to apply over the next update period.
    pub fn solve<R: Fn(f64) -> Vector>(&mut self, t: f64, x: &Vector, reference: R) -> Result<MpcStep, MpcError> {
        let p = self.problem(t, x, reference)?;
        let sol = solve_qp(&p, &self.cfg.qp_settings())?;
        match sol.status {
            QpStatus::Optimal => {}
            QpStatus::MaxIterations => return Err(MpcError::MaxIterations { time: t }),
            QpStatus::Infeasible => {
                return Err(match sol.blocking.map(|r| self.tr.row_info(r)) {
                    Some((kind, node)) => MpcError::Infeasible {
                        variant: self.variant,
                        time: t,
                        node,
                        kind,
                    },
                    None => MpcError::InfeasibleStart {
                        variant: self.variant,
                        time: t,
                    },
                })
            }
        }
        let plan = self.tr.inputs(&sol.z, self.cfg.samples_per_update());
        let max_slack = self.tr.max_slack(&sol.z);
        self.last_u = plan.last().expect("at least one sample").clone();
        Ok(MpcStep {
            u_opt: plan[0].clone(),
            plan,
            iterations: sol.iterations,
            objective: sol.objective,
            max_slack,
        })
    }

    /// Predicted nominal states `x_0..x_N` for a decision vector.
    pub fn predict(&self, x: &Vector, z: &Vector) -> Vec<Vector> {
        self.tr.predicted_states(x, z)
    }
}

/// Convenience: `K_x x + u_opt`.
pub fn total_nominal_input(k_x: &Mat, x: &Vector, u_opt: &Vector) -> Vector {
    k_x * x + u_opt
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::f16;

    #[test]
    fn config_validation() {
        assert!(MpcConfig::default().validate().is_ok());
        let bad = MpcConfig {
            dt_s: 0.03,
            ..MpcConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = MpcConfig {
            update_period_s: 0.5,
            ..MpcConfig::default()
        };
        assert!(bad.validate().is_err());
        assert_eq!(MpcConfig::default().steps(), 20);
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert!("foo".parse::<Variant>().is_err());
    }

    #[test]
    fn origin_is_an_equilibrium_for_every_variant() {
        let plant = f16::plant();
        let zero = |_t: f64| Vector::zeros(2);
        for v in Variant::ALL {
            let mut c = MpcController::new(&plant, v, &MpcConfig::default(), ConstraintSets::vanilla(&plant)).unwrap();
            let step = c.solve(0.0, &Vector::zeros(3), zero).unwrap();
            assert!(step.u_opt.amax() < 1e-12, "{v}");
            assert!(step.objective.abs() < 1e-12);
        }
    }

    #[test]
    fn solution_respects_sets_at_every_node() {
        let plant = f16::plant();
        let sets = ConstraintSets {
            states: HyperRect::symmetric(&[9.92, 99.17, 3.91]).unwrap(),
            inputs: HyperRect::symmetric(&[18.98, 18.16]).unwrap(),
        };
        let mut c = MpcController::new(&plant, Variant::Uc, &MpcConfig::default(), sets.clone()).unwrap();
        let r = |_t: f64| Vector::from_column_slice(&[9.0, 6.5]);
        let mut x = Vector::zeros(3);
        let (a_d, b_d) = crate::lti::zoh_discretize(&plant.a_m(), &plant.b, 0.01).unwrap();
        for k in 0..400 {
            let p = c.problem(k as f64 * 0.01, &x, r).unwrap();
            let sol = solve_qp(&p, &QpSettings::default()).unwrap();
            assert_eq!(sol.status, QpStatus::Optimal);
            for (node, xk) in c.predict(&x, &sol.z).iter().enumerate() {
                assert!(sets.states.contains_tol(xk.as_slice(), 1e-7).unwrap(), "state node {node} at step {k}");
            }
            let u = c.solve(k as f64 * 0.01, &x, r).unwrap().u_opt;
            assert!(sets.inputs.contains_tol((&plant.k_x * &x + &u).as_slice(), 1e-7).unwrap());
            x = &a_d * &x + &b_d * &u;
        }
        // The flaperon saturates near the tightened bound at this reference,
        // so θ settles close to its target and γ slightly above.
        let y = &plant.c * &x;
        assert!((y[0] - 9.0).abs() < 0.05 && (y[1] - 6.5).abs() < 0.1, "{y}");
    }
}
