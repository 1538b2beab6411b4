//! Induced `L∞ → L∞` gain of a stable realization.
//!
//! Row `i` of the gain is `Σ_j (∫_0^∞ |h_ij(t)| dt + |D_ij|)` with
//! `h(t) = C e^{At} B`. The integral is split into panels whose width grows
//! geometrically; each panel is integrated by adaptive Simpson on `|h|`, and
//! marching stops once a Lyapunov decay envelope certifies that the remaining
//! tail is below half of the requested tolerance.

use super::{ensure_hurwitz, expm, LtiError, Mat, StateSpaceModel};

pub const DEFAULT_L1_TOL: f64 = 1e-6;

const MAX_DEPTH: u32 = 40;
const MAX_PANELS: usize = 100_000;

/// Solves `Aᵀ P + P A = -Q` for symmetric `P`.
pub fn lyapunov(a: &Mat, q: &Mat) -> Result<Mat, LtiError> {
    let n = a.nrows();
    if !a.is_square() {
        return Err(LtiError::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    if q.nrows() != n || q.ncols() != n {
        return Err(LtiError::Dimension(format!("Q must be {n}x{n}")));
    }
    let id = Mat::identity(n, n);
    let at = a.transpose();
    let lhs = id.kronecker(&at) + at.kronecker(&id);
    let rhs = -Mat::from_column_slice(n * n, 1, q.as_slice());
    let vec_p = lhs
        .lu()
        .solve(&rhs)
        .ok_or(LtiError::Singular("Lyapunov operator"))?;
    let p = Mat::from_column_slice(n, n, vec_p.as_slice());
    Ok((&p + p.transpose()) * 0.5)
}

/// Bound `‖e^{At}‖₂ ≤ κ e^{-μ t}` for Hurwitz `A`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayEnvelope {
    pub kappa: f64,
    pub mu: f64,
}

impl DecayEnvelope {
    /// From `AᵀP + PA = -I`: `V = xᵀPx` decays at rate `1/λmax(P)`.
    pub fn from_lyapunov(a: &Mat) -> Result<Self, LtiError> {
        ensure_hurwitz(a)?;
        let n = a.nrows();
        let p = lyapunov(a, &Mat::identity(n, n))?;
        let eig = p.symmetric_eigenvalues();
        let lmax = eig.max();
        let lmin = eig.min();
        if !(lmin > 0.0 && lmax.is_finite()) {
            return Err(LtiError::Singular("Lyapunov solution is not positive definite"));
        }
        Ok(Self {
            kappa: (lmax / lmin).sqrt(),
            mu: 0.5 / lmax,
        })
    }

    pub fn bound(&self, t: f64) -> f64 {
        self.kappa * (-self.mu * t).exp()
    }
}

/// Row-wise induced gains and their maximum.
#[derive(Debug, Clone, PartialEq)]
pub struct L1Norm {
    pub rows: Vec<f64>,
    pub max: f64,
    /// `∫|h_ij| + |D_ij|` per entry; rows sum to `rows`.
    pub entries: Mat,
}

/// Samples `C e^{A k dt} B` for `k = 0..=horizon/dt`.
pub fn impulse_response(sys: &StateSpaceModel, dt: f64, horizon: f64) -> Result<Vec<(f64, Mat)>, LtiError> {
    if !(dt > 0.0 && dt.is_finite()) || !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(LtiError::InvalidArgument(format!(
            "need dt > 0 and finite horizon, got dt={dt}, horizon={horizon}"
        )));
    }
    ensure_hurwitz(&sys.a)?;
    let steps = (horizon / dt + 1e-9).floor() as usize;
    let step = expm(&sys.a, dt)?;
    let mut x = sys.b.clone();
    let mut out = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        out.push((k as f64 * dt, &sys.c * &x));
        x = &step * x;
    }
    Ok(out)
}

/// Per-entry `|h(t)|` evaluator anchored at a panel start.
struct Panel<'a> {
    sys: &'a StateSpaceModel,
    /// `e^{A t0} B`
    start: Mat,
}

impl Panel<'_> {
    fn abs_at(&self, offset: f64) -> Result<Mat, LtiError> {
        let x = expm(&self.sys.a, offset)? * &self.start;
        Ok((&self.sys.c * x).abs())
    }
}

/// Error measure of a panel estimate: worst row sum of per-entry errors.
fn row_error(diff: &Mat) -> f64 {
    diff.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

#[allow(clippy::too_many_arguments)]
fn simpson_recurse(
    panel: &Panel<'_>,
    a: f64,
    b: f64,
    fa: &Mat,
    fm: &Mat,
    fb: &Mat,
    whole: Mat,
    tol: f64,
    depth: u32,
) -> Result<Mat, LtiError> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = panel.abs_at(lm)?;
    let frm = panel.abs_at(rm)?;
    let h = b - a;
    let left = (fa + &flm * 4.0 + fm) * (h / 12.0);
    let right = (fm + &frm * 4.0 + fb) * (h / 12.0);
    let both = &left + &right;
    let diff = &both - &whole;
    if depth >= MAX_DEPTH || row_error(&diff) <= 15.0 * tol {
        return Ok(both + diff / 15.0);
    }
    let l = simpson_recurse(panel, a, m, fa, &flm, fm, left, 0.5 * tol, depth + 1)?;
    let r = simpson_recurse(panel, m, b, fm, &frm, fb, right, 0.5 * tol, depth + 1)?;
    Ok(l + r)
}

fn integrate_panel(panel: &Panel<'_>, width: f64, tol: f64) -> Result<Mat, LtiError> {
    let fa = panel.abs_at(0.0)?;
    let fm = panel.abs_at(0.5 * width)?;
    let fb = panel.abs_at(width)?;
    // Split once up front so a single coarse panel cannot alias an oscillation.
    let half = 0.5 * width;
    let fq1 = panel.abs_at(0.25 * width)?;
    let fq3 = panel.abs_at(0.75 * width)?;
    let left = (&fa + &fq1 * 4.0 + &fm) * (half / 6.0);
    let right = (&fm + &fq3 * 4.0 + &fb) * (half / 6.0);
    let l = simpson_recurse(panel, 0.0, half, &fa, &fq1, &fm, left, 0.5 * tol, 1)?;
    let r = simpson_recurse(panel, half, width, &fm, &fq3, &fb, right, 0.5 * tol, 1)?;
    Ok(l + r)
}

/// Induced `L∞ → L∞` gain per output row, with total absolute error ≤ `tol`.
pub fn l1_norm(sys: &StateSpaceModel, tol: f64) -> Result<L1Norm, LtiError> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(LtiError::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    let p = sys.outputs();
    let m = sys.inputs();
    let mut acc = sys.d.abs();
    if sys.states() == 0 || p == 0 || m == 0 {
        return Ok(finish(acc));
    }
    ensure_hurwitz(&sys.a)?;
    let env = DecayEnvelope::from_lyapunov(&sys.a)?;

    let eig = sys.a.complex_eigenvalues();
    let fastest = eig.iter().map(|l| l.norm()).fold(0.0, f64::max);
    let slowest = eig.iter().map(|l| l.norm()).fold(f64::INFINITY, f64::min);
    let max_imag = eig.iter().map(|l| l.im.abs()).fold(0.0, f64::max);
    let mut width_cap = 2.0 / slowest;
    if max_imag > 0.0 {
        width_cap = width_cap.min(std::f64::consts::FRAC_PI_4 / max_imag);
    }
    let mut width = (1.0 / fastest).min(width_cap);

    let c_norms: Vec<f64> = sys.c.row_iter().map(|r| r.norm()).collect();
    let b_norms: Vec<f64> = sys.b.column_iter().map(|c| c.norm()).collect();
    let c_max = c_norms.iter().copied().fold(0.0, f64::max);
    let b_max = b_norms.iter().copied().fold(0.0, f64::max);
    let tail_budget = 0.5 * tol;
    // Horizon after which the a-priori envelope alone certifies the tail; it
    // only sets the per-panel budget, marching stops earlier when it can.
    let a_priori = c_max * env.kappa * env.kappa * b_max * m as f64 / env.mu;
    let horizon_est = if a_priori > tail_budget {
        (a_priori / tail_budget).ln() / env.mu
    } else {
        width
    };
    let density = 0.5 * tol / horizon_est.max(width);

    let mut t = 0.0;
    let mut state = sys.b.clone();
    for _ in 0..MAX_PANELS {
        let tail = tail_bound(&c_norms, &state, &env);
        if tail <= tail_budget {
            return Ok(finish(acc));
        }
        let panel = Panel { sys, start: state.clone() };
        acc += integrate_panel(&panel, width, density * width)?;
        state = expm(&sys.a, width)? * state;
        t += width;
        width = (2.0 * width).min(width_cap);
    }
    Err(LtiError::InvalidArgument(format!(
        "impulse response tail not certified after {MAX_PANELS} panels (t = {t:.3e})"
    )))
}

/// Worst row of `Σ_j ‖C_i‖ κ ‖x_j‖ / μ`.
fn tail_bound(c_norms: &[f64], state: &Mat, env: &DecayEnvelope) -> f64 {
    let col_sum: f64 = state.column_iter().map(|c| c.norm()).sum();
    let c_max = c_norms.iter().copied().fold(0.0, f64::max);
    c_max * env.kappa * col_sum / env.mu
}

fn finish(acc: Mat) -> L1Norm {
    let rows: Vec<f64> = acc.row_iter().map(|r| r.sum()).collect();
    let max = rows.iter().copied().fold(0.0, f64::max);
    L1Norm { rows, max, entries: acc }
}
