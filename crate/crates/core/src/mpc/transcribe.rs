//! Condensed transcription onto the input samples `u_0..u_{N-1}`.
//!
//! With `x_{k+1} = A_d x_k + B_d u_k`, every predicted state is affine in the
//! stacked inputs, `x_k = S_x,k x_0 + S_u,k u`. The cost is
//!
//! `dt Σ_{k=1}^{N} w_t‖C x_k - r_k‖² + dt Σ_{k=0}^{N-1} w_u‖u_k‖²
//!  + (w_r/dt) Σ_{k=0}^{N-1} ‖u_k - u_{k-1}‖²`
//!
//! where `u_{-1}` is the previously applied input. Soft variants append one
//! nonnegative slack per state and node.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::{ConstraintSets, MpcConfig, MpcError, QpProblem};
use crate::lti::{zoh_discretize, Mat, Vector};
use crate::model::PlantSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowKind {
    State,
    Input,
    Slack,
}

impl fmt::Display for RowKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RowKind::State => "state",
            RowKind::Input => "input",
            RowKind::Slack => "slack",
        })
    }
}

#[derive(Debug, Clone)]
pub struct Transcription {
    n: usize,
    m: usize,
    steps: usize,
    dt: f64,
    soft: bool,
    sets: ConstraintSets,
    a_d: Mat,
    b_d: Mat,
    /// Rows `k = 1..N` of the state prediction.
    sx: Mat,
    su: Mat,
    /// `K_x x_k + u_k` for `k = 0..N-1`.
    ix: Mat,
    iu: Mat,
    /// Tracking gradient pieces: `2 dt w_t S_uᵀ C̄ᵀ`.
    track_g: Mat,
    c_bar_sx: Mat,
    h: Mat,
    rate_scale: f64,
    slack_linear: f64,
}

impl Transcription {
    pub fn new(plant: &PlantSpec, cfg: &MpcConfig, sets: ConstraintSets, soft: bool) -> Result<Self, MpcError> {
        cfg.validate()?;
        let n = plant.states();
        let m = plant.inputs();
        let p = plant.outputs();
        if sets.states.dim() != n || sets.inputs.dim() != m {
            return Err(MpcError::Config("constraint sets do not match the plant".into()));
        }
        let steps = cfg.steps();
        let dt = cfg.dt_s;
        let (a_d, b_d) = zoh_discretize(&plant.a_m(), &plant.b, dt)?;

        let mut sx = Mat::zeros(n * steps, n);
        let mut su = Mat::zeros(n * steps, m * steps);
        let mut ix = Mat::zeros(m * steps, n);
        let mut iu = Mat::zeros(m * steps, m * steps);
        // Row block k of the prediction for x_k, k = 0..N.
        let mut pow = Mat::identity(n, n);
        let mut conv: Vec<Mat> = Vec::with_capacity(steps);
        for k in 0..=steps {
            if k < steps {
                ix.view_mut((k * m, 0), (m, n)).copy_from(&(&plant.k_x * &pow));
                for i in 0..k {
                    let block = &plant.k_x * &conv[k - 1 - i];
                    iu.view_mut((k * m, i * m), (m, m)).copy_from(&block);
                }
                iu.view_mut((k * m, k * m), (m, m)).copy_from(&Mat::identity(m, m));
            }
            if k > 0 {
                sx.view_mut(((k - 1) * n, 0), (n, n)).copy_from(&pow);
                for i in 0..k {
                    su.view_mut(((k - 1) * n, i * m), (n, m)).copy_from(&conv[k - 1 - i]);
                }
            }
            // conv[j] = A_d^j B_d
            conv.push(&pow * &b_d);
            pow = &a_d * pow;
        }

        let mut c_bar = Mat::zeros(p * steps, n * steps);
        for k in 0..steps {
            c_bar.view_mut((k * p, k * n), (p, n)).copy_from(&plant.c);
        }
        let w = cfg.weights;
        let c_su = &c_bar * &su;
        let mut diff = Mat::identity(m * steps, m * steps);
        for k in 1..steps {
            for j in 0..m {
                diff[(k * m + j, (k - 1) * m + j)] = -1.0;
            }
        }
        let rate_scale = w.rate / dt;
        let mut h_u = c_su.transpose() * &c_su * (2.0 * dt * w.tracking)
            + Mat::identity(m * steps, m * steps) * (2.0 * dt * w.effort)
            + diff.transpose() * &diff * (2.0 * rate_scale);
        h_u = (&h_u + h_u.transpose()) * 0.5;
        let nz = if soft { m * steps + n * steps } else { m * steps };
        let mut h = Mat::zeros(nz, nz);
        h.view_mut((0, 0), (m * steps, m * steps)).copy_from(&h_u);
        if soft {
            for i in m * steps..nz {
                h[(i, i)] = 2.0 * cfg.soft_penalty;
            }
        }
        let track_g = c_su.transpose() * (2.0 * dt * w.tracking);
        let c_bar_sx = &c_bar * &sx;
        Ok(Self {
            n,
            m,
            steps,
            dt,
            soft,
            sets,
            a_d,
            b_d,
            sx,
            su,
            ix,
            iu,
            track_g,
            c_bar_sx,
            h,
            rate_scale,
            slack_linear: cfg.soft_penalty_linear,
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn sets(&self) -> &ConstraintSets {
        &self.sets
    }

    pub fn discrete(&self) -> (&Mat, &Mat) {
        (&self.a_d, &self.b_d)
    }

    pub fn vars(&self) -> usize {
        self.h.nrows()
    }

    /// QP for initial state `x0`, references for nodes `1..=N` and the input
    /// applied before this solve.
    pub fn problem(&self, x0: &Vector, refs: &[Vector], u_prev: &Vector) -> Result<QpProblem, MpcError> {
        let (n, m, steps) = (self.n, self.m, self.steps);
        if x0.len() != n || u_prev.len() != m || refs.len() != steps {
            return Err(MpcError::Config(format!(
                "expected state of length {n}, input of length {m} and {steps} reference samples"
            )));
        }
        let p = self.c_bar_sx.nrows() / steps;
        let mut r = Vector::zeros(p * steps);
        for (k, rk) in refs.iter().enumerate() {
            if rk.len() != p {
                return Err(MpcError::Config(format!("reference has {} entries, expected {p}", rk.len())));
            }
            r.rows_mut(k * p, p).copy_from(rk);
        }
        let nu = m * steps;
        let nz = self.vars();
        let mut g = Vector::zeros(nz);
        let mut gu = &self.track_g * (&self.c_bar_sx * x0 - r);
        for j in 0..m {
            gu[j] -= 2.0 * self.rate_scale * u_prev[j];
        }
        g.rows_mut(0, nu).copy_from(&gu);
        if self.soft {
            for i in nu..nz {
                g[i] = self.slack_linear;
            }
        }

        let free_x = &self.sx * x0;
        let free_u = &self.ix * x0;
        let lo_x = self.sets.states.lower();
        let hi_x = self.sets.states.upper();
        let lo_u = self.sets.inputs.lower();
        let hi_u = self.sets.inputs.upper();
        let nx = n * steps;
        let rows = if self.soft { 3 * nx + nu } else { nx + nu };
        let mut a = Mat::zeros(rows, nz);
        let mut lower = Vector::from_element(rows, f64::NEG_INFINITY);
        let mut upper = Vector::from_element(rows, f64::INFINITY);
        let input_base = if self.soft { 2 * nx } else { nx };
        for i in 0..nx {
            let (lo, hi) = (lo_x[i % n] - free_x[i], hi_x[i % n] - free_x[i]);
            if self.soft {
                a.view_mut((i, 0), (1, nu)).copy_from(&self.su.row(i));
                a[(i, nu + i)] = 1.0;
                lower[i] = lo;
                a.view_mut((nx + i, 0), (1, nu)).copy_from(&self.su.row(i));
                a[(nx + i, nu + i)] = -1.0;
                upper[nx + i] = hi;
            } else {
                a.view_mut((i, 0), (1, nu)).copy_from(&self.su.row(i));
                lower[i] = lo;
                upper[i] = hi;
            }
        }
        for i in 0..nu {
            let row = input_base + i;
            a.view_mut((row, 0), (1, nu)).copy_from(&self.iu.row(i));
            lower[row] = lo_u[i % m] - free_u[i];
            upper[row] = hi_u[i % m] - free_u[i];
        }
        if self.soft {
            for i in 0..nx {
                let row = input_base + nu + i;
                a[(row, nu + i)] = 1.0;
                lower[row] = 0.0;
            }
        }
        Ok(QpProblem::inequality(self.h.clone(), g, a, lower, upper)?)
    }

    /// Constraint family and node (`x_k` or `u_k` index) of inequality row `r`.
    pub fn row_info(&self, r: usize) -> (RowKind, usize) {
        let nx = self.n * self.steps;
        let nu = self.m * self.steps;
        let input_base = if self.soft { 2 * nx } else { nx };
        if r < input_base {
            (RowKind::State, (r % nx) / self.n + 1)
        } else if r < input_base + nu {
            (RowKind::Input, (r - input_base) / self.m)
        } else {
            (RowKind::Slack, (r - input_base - nu) / self.n + 1)
        }
    }

    pub fn first_input(&self, z: &Vector) -> Vector {
        z.rows(0, self.m).into_owned()
    }

    /// The first `count` input samples (at most `N`).
    pub fn inputs(&self, z: &Vector, count: usize) -> Vec<Vector> {
        (0..count.min(self.steps)).map(|k| z.rows(k * self.m, self.m).into_owned()).collect()
    }

    pub fn max_slack(&self, z: &Vector) -> f64 {
        let nu = self.m * self.steps;
        z.rows(nu, z.len() - nu).iter().copied().fold(0.0, f64::max)
    }

    /// `x_0..x_N` for the input part of `z`.
    pub fn predicted_states(&self, x0: &Vector, z: &Vector) -> Vec<Vector> {
        let u = z.rows(0, self.m * self.steps);
        let stacked = &self.sx * x0 + &self.su * u;
        let mut out = vec![x0.clone()];
        for k in 0..self.steps {
            out.push(stacked.rows(k * self.n, self.n).into_owned());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mpc::{solve_qp, MpcWeights, QpSettings, QpStatus};
    use crate::sets::HyperRect;

    fn scalar_plant(a: f64, b: f64) -> PlantSpec {
        // One state, one input, no unmatched channel, K_x = 0.
        PlantSpec::new(
            Mat::from_element(1, 1, a),
            Mat::from_element(1, 1, b),
            Mat::zeros(1, 0),
            Mat::identity(1, 1),
            Mat::zeros(1, 1),
            HyperRect::symmetric(&[1e6]).unwrap(),
            HyperRect::symmetric(&[1e6]).unwrap(),
            HyperRect::symmetric(&[1.0]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn single_step_matches_normal_equation() {
        let plant = scalar_plant(-1.0, 2.0);
        let cfg = MpcConfig {
            horizon_s: 0.1,
            dt_s: 0.1,
            update_period_s: 0.1,
            weights: MpcWeights {
                tracking: 3.0,
                effort: 0.5,
                rate: 0.2,
            },
            ..MpcConfig::default()
        };
        let tr = Transcription::new(&plant, &cfg, ConstraintSets::vanilla(&plant), false).unwrap();
        let (x0, r, u_prev) = (0.7, 1.3, -0.4);
        let p = tr
            .problem(&Vector::from_element(1, x0), &[Vector::from_element(1, r)], &Vector::from_element(1, u_prev))
            .unwrap();
        let s = solve_qp(&p, &QpSettings::default()).unwrap();
        assert_eq!(s.status, QpStatus::Optimal);
        // x1 = ad x0 + bd u; minimize dt wt (x1-r)² + dt wu u² + (wr/dt)(u-u_prev)²
        let dt: f64 = 0.1;
        let ad = (-dt).exp();
        let bd = 2.0 * (1.0 - ad);
        let num = dt * 3.0 * bd * (r - ad * x0) + (0.2 / dt) * u_prev;
        let den = dt * 3.0 * bd * bd + dt * 0.5 + 0.2 / dt;
        assert!((s.z[0] - num / den).abs() < 1e-12, "{} vs {}", s.z[0], num / den);
    }

    #[test]
    fn prediction_matches_recursion() {
        let plant = crate::f16::plant();
        let tr = Transcription::new(&plant, &MpcConfig::default(), ConstraintSets::vanilla(&plant), true).unwrap();
        let x0 = Vector::from_column_slice(&[0.3, -1.0, 0.2]);
        let z = Vector::from_fn(tr.vars(), |i, _| ((i * 7) % 5) as f64 - 2.0);
        let pred = tr.predicted_states(&x0, &z);
        let (a_d, b_d) = tr.discrete();
        let mut x = x0.clone();
        for k in 0..tr.steps() {
            x = a_d * &x + b_d * z.rows(2 * k, 2);
            assert!((&x - &pred[k + 1]).amax() < 1e-9);
        }
    }

    #[test]
    fn row_info_maps_nodes() {
        let plant = crate::f16::plant();
        let hard = Transcription::new(&plant, &MpcConfig::default(), ConstraintSets::vanilla(&plant), false).unwrap();
        assert_eq!(hard.row_info(0), (RowKind::State, 1));
        assert_eq!(hard.row_info(59), (RowKind::State, 20));
        assert_eq!(hard.row_info(60), (RowKind::Input, 0));
        assert_eq!(hard.row_info(99), (RowKind::Input, 19));
        let soft = Transcription::new(&plant, &MpcConfig::default(), ConstraintSets::vanilla(&plant), true).unwrap();
        assert_eq!(soft.row_info(61), (RowKind::State, 1));
        assert_eq!(soft.row_info(120), (RowKind::Input, 0));
        assert_eq!(soft.row_info(160), (RowKind::Slack, 1));
    }
}
