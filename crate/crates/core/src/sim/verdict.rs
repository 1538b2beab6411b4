use serde::{Deserialize, Serialize};

use super::{Record, TrajectoryLog};
use crate::sets::HyperRect;
use crate::tightening::TighteningResult;

/// Pointwise check of one scalar signal against `[lower, upper]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisCheck {
    pub lower: f64,
    pub upper: f64,
    pub min: f64,
    pub max: f64,
    /// Smallest distance to either bound; negative when violated.
    pub margin: f64,
    /// Time of the smallest margin.
    pub worst_t: f64,
    /// Number of logged instants outside the bounds.
    pub violations: usize,
    pub holds: bool,
}

impl AxisCheck {
    fn evaluate<'a>(lower: f64, upper: f64, tol: f64, samples: impl Iterator<Item = (f64, f64)> + 'a) -> Self {
        let mut c = Self {
            lower,
            upper,
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
            margin: f64::INFINITY,
            worst_t: f64::NAN,
            violations: 0,
            holds: true,
        };
        for (t, v) in samples {
            c.min = c.min.min(v);
            c.max = c.max.max(v);
            let margin = (v - lower).min(upper - v);
            if margin < c.margin || margin.is_nan() {
                c.margin = margin;
                c.worst_t = t;
            }
            if !(margin >= -tol) {
                c.violations += 1;
            }
        }
        c.holds = c.violations == 0;
        c
    }

    fn per_axis<F>(set: &HyperRect, tol: f64, log: &TrajectoryLog, signal: F) -> Vec<Self>
    where
        F: Fn(&Record, usize) -> f64,
    {
        (0..set.dim())
            .map(|i| {
                AxisCheck::evaluate(
                    set.lower()[i],
                    set.upper()[i],
                    tol,
                    log.records.iter().map(|r| (r.t, signal(r, i))),
                )
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerdictOptions {
    /// Start-up interval excluded from the estimation error.
    pub transient_s: f64,
    /// Half-open `[start, end)` windows.
    pub rms_windows: Vec<(f64, f64)>,
    pub steady_window: (f64, f64),
    /// Slack allowed on every pointwise check.
    pub tol: f64,
}

impl Default for VerdictOptions {
    fn default() -> Self {
        Self {
            transient_s: 0.2,
            rms_windows: vec![(2.5, 7.5), (10.0, 15.0)],
            steady_window: (5.0, 7.5),
            tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    /// `|x_i - x_{n,i}| ≤ ρ̃ⁱ`
    pub state_error: Option<Vec<AxisCheck>>,
    /// `|u_{a,j}| ≤ ρ_uaʲ`
    pub adaptive_input: Option<Vec<AxisCheck>>,
    /// `|x_i| ≤ ρⁱ`
    pub state_bound: Option<Vec<AxisCheck>>,
    pub state_constraints: Vec<AxisCheck>,
    pub input_constraints: Vec<AxisCheck>,
    /// Per output over the union of the RMS windows.
    pub tracking_rms: Vec<f64>,
    /// Per output, largest `|y - r|` in the steady window.
    pub steady_state_error: Vec<f64>,
    /// `max ‖B†σ̂ - f‖∞` after the transient.
    pub estimation_error: f64,
    pub constraints_hold: bool,
    pub bounds_hold: bool,
    pub pass: bool,
}

/// Evaluates a log against the original sets and, when given, the design
/// bounds.
pub fn verdict(
    log: &TrajectoryLog,
    bounds: Option<&TighteningResult>,
    x_set: &HyperRect,
    u_set: &HyperRect,
    opts: &VerdictOptions,
) -> Verdict {
    let tol = opts.tol;
    let symmetric = |r: &[f64]| HyperRect::symmetric(r).ok();
    let state_error = bounds.and_then(|b| symmetric(&b.rho_tilde)).map(|set| {
        AxisCheck::per_axis(&set, tol, log, |r, i| r.x[i] - r.x_n[i])
    });
    let adaptive_input = bounds
        .and_then(|b| symmetric(&b.rho_ua))
        .map(|set| AxisCheck::per_axis(&set, tol, log, |r, i| r.u_a[i]));
    let state_bound = bounds
        .and_then(|b| symmetric(&b.rho))
        .map(|set| AxisCheck::per_axis(&set, tol, log, |r, i| r.x[i]));
    let state_constraints = AxisCheck::per_axis(x_set, tol, log, |r, i| r.x[i]);
    let input_constraints = AxisCheck::per_axis(u_set, tol, log, |r, i| r.u[i]);

    let p = log.records.first().map_or(0, |r| r.y.len());
    // Half-open windows so a reference switch at the right edge is excluded.
    let eps = 1e-9 * log.dt;
    let inside = |t: f64, (a, b): (f64, f64)| t >= a - eps && t < b - eps;
    let in_rms = |t: f64| opts.rms_windows.iter().any(|w| inside(t, *w));
    let tracking_rms = (0..p)
        .map(|i| {
            let (sum, count) = log
                .records
                .iter()
                .filter(|r| in_rms(r.t))
                .fold((0.0, 0usize), |(s, c), r| (s + (r.y[i] - r.r[i]).powi(2), c + 1));
            if count == 0 {
                0.0
            } else {
                (sum / count as f64).sqrt()
            }
        })
        .collect();
    let steady_state_error = (0..p)
        .map(|i| {
            log.records
                .iter()
                .filter(|r| inside(r.t, opts.steady_window))
                .map(|r| (r.y[i] - r.r[i]).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    let estimation_error = log
        .records
        .iter()
        .filter(|r| r.t >= opts.transient_s - 1e-12)
        .map(|r| {
            r.matched_estimate
                .iter()
                .zip(&r.f)
                .map(|(e, f)| (e - f).abs())
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max);

    let all = |v: &[AxisCheck]| v.iter().all(|c| c.holds);
    let constraints_hold = all(&state_constraints) && all(&input_constraints);
    let bounds_hold = [&state_error, &adaptive_input, &state_bound]
        .iter()
        .all(|c| c.as_deref().is_none_or(all));
    Verdict {
        state_error,
        adaptive_input,
        state_bound,
        state_constraints,
        input_constraints,
        tracking_rms,
        steady_state_error,
        estimation_error,
        constraints_hold,
        bounds_hold,
        pass: constraints_hold && bounds_hold,
    }
}
