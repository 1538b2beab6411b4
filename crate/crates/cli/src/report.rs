//! Text and JSON reports for `tighten` and `run`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use ucmpc::mpc::Variant;
use ucmpc::sets::HyperRect;
use ucmpc::sim::{AxisCheck, Verdict};
use ucmpc::tightening::TighteningResult;

use crate::scenario::{Expected, ExpectedBox, ExpectedVector};

/// One computed entry compared against a reference value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryCheck {
    pub quantity: String,
    pub computed: f64,
    pub expected: f64,
    pub tol: f64,
    pub pass: bool,
}

impl EntryCheck {
    fn new(quantity: String, computed: f64, expected: f64, tol: f64) -> Self {
        Self {
            quantity,
            computed,
            expected,
            tol,
            pass: (computed - expected).abs() <= tol,
        }
    }
}

fn vector_checks(name: &str, computed: &[f64], exp: &ExpectedVector, out: &mut Vec<EntryCheck>) {
    for (i, e) in exp.value.iter().enumerate() {
        let c = computed.get(i).copied().unwrap_or(f64::NAN);
        out.push(EntryCheck::new(format!("{name}[{i}]"), c, *e, exp.tol));
    }
}

fn box_checks(name: &str, computed: &HyperRect, exp: &ExpectedBox, out: &mut Vec<EntryCheck>) {
    for (i, (lo, hi)) in exp.lower.iter().zip(&exp.upper).enumerate() {
        let c_lo = computed.lower().get(i).copied().unwrap_or(f64::NAN);
        let c_hi = computed.upper().get(i).copied().unwrap_or(f64::NAN);
        out.push(EntryCheck::new(format!("{name}[{i}].lower"), c_lo, *lo, exp.tol));
        out.push(EntryCheck::new(format!("{name}[{i}].upper"), c_hi, *hi, exp.tol));
    }
}

pub fn expected_checks(result: &TighteningResult, expected: &Expected) -> Vec<EntryCheck> {
    let mut out = Vec::new();
    if let Some(e) = &expected.rho_tilde {
        vector_checks("rho_tilde", &result.rho_tilde, e, &mut out);
    }
    if let Some(e) = &expected.rho_ua {
        vector_checks("rho_ua", &result.rho_ua, e, &mut out);
    }
    if let Some(e) = &expected.rho_tilde_u {
        vector_checks("rho_tilde_u", &result.rho_tilde_u, e, &mut out);
    }
    if let Some(e) = &expected.x_n {
        box_checks("x_n", &result.x_n, e, &mut out);
    }
    if let Some(e) = &expected.u_n {
        box_checks("u_n", &result.u_n, e, &mut out);
    }
    out
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.4}")).collect();
    format!("[{}]", parts.join(", "))
}

fn fmt_box(b: &HyperRect) -> String {
    let parts: Vec<String> = b.lower().iter().zip(b.upper()).map(|(l, u)| format!("[{l:.4}, {u:.4}]")).collect();
    parts.join(" x ")
}

pub fn tighten_report(name: &str, r: &TighteningResult, checks: &[EntryCheck]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "scenario {name}");
    let _ = writeln!(s, "  T          {:.3e} s", r.t_final);
    let _ = writeln!(s, "  k_f        {}", fmt_vec(&r.k_f_final));
    let _ = writeln!(s, "  gamma0     {:.6e}", r.gamma0);
    let _ = writeln!(s, "  gamma1     {:.6}", r.gamma1);
    let _ = writeln!(s, "  gamma2     {:.6}", r.gamma2);
    let _ = writeln!(s, "  rho_r      {:.6}", r.rho_r);
    let _ = writeln!(s, "  rho_check  {}", fmt_vec(&r.rho_check));
    let _ = writeln!(s, "  rho        {}", fmt_vec(&r.rho));
    let _ = writeln!(s, "  rho_tilde  {}", fmt_vec(&r.rho_tilde));
    let _ = writeln!(s, "  rho_ur     {}", fmt_vec(&r.rho_ur));
    let _ = writeln!(s, "  rho_ua     {}", fmt_vec(&r.rho_ua));
    let _ = writeln!(s, "  rho_tilde_u {}", fmt_vec(&r.rho_tilde_u));
    let _ = writeln!(s, "  X_n        {}", fmt_box(&r.x_n));
    let _ = writeln!(s, "  U_n        {}", fmt_box(&r.u_n));
    let _ = writeln!(s, "conditions");
    for a in &r.audit {
        let mark = if a.holds { "ok  " } else { "FAIL" };
        let _ = writeln!(s, "  {mark} {:<28} {:<40} {:.6e} < {:.6e}", a.step, a.condition, a.lhs, a.rhs);
    }
    if !checks.is_empty() {
        let _ = writeln!(s, "expected values");
        let _ = writeln!(s, "  {:<20} {:>12} {:>12} {:>8}  status", "entry", "computed", "expected", "tol");
        for c in checks {
            let status = if c.pass { "pass" } else { "FAIL" };
            let _ = writeln!(
                s,
                "  {:<20} {:>12.4} {:>12.4} {:>8.3}  {status}",
                c.quantity, c.computed, c.expected, c.tol
            );
        }
        let failed = checks.iter().filter(|c| !c.pass).count();
        let _ = writeln!(s, "  {} of {} entries within tolerance", checks.len() - failed, checks.len());
    }
    s
}

/// One row of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub variant: Variant,
    /// Largest excursion outside the original state box (0 when inside).
    pub max_state_violation: f64,
    pub max_input_violation: f64,
    pub state_violations: usize,
    pub input_violations: usize,
    /// `max |x_i - x_{n,i}|` per state.
    pub max_state_error: Vec<f64>,
    pub rho_tilde: Vec<f64>,
    /// `max |u_{a,j}|` per input.
    pub max_adaptive_input: Vec<f64>,
    pub rho_ua: Vec<f64>,
    pub tracking_rms: Vec<f64>,
    pub steady_state_error: Vec<f64>,
    pub pass: bool,
    pub runtime_s: f64,
}

fn excursion(checks: &[AxisCheck]) -> (f64, usize) {
    let worst = checks.iter().map(|c| (-c.margin).max(0.0)).fold(0.0, f64::max);
    (worst, checks.iter().map(|c| c.violations).sum())
}

fn peaks(checks: &[AxisCheck]) -> Vec<f64> {
    checks.iter().map(|c| c.max.abs().max(c.min.abs())).collect()
}

impl SummaryRow {
    pub fn new(variant: Variant, v: &Verdict, design: &TighteningResult, max_state_error: Vec<f64>, runtime_s: f64) -> Self {
        let (max_state_violation, state_violations) = excursion(&v.state_constraints);
        let (max_input_violation, input_violations) = excursion(&v.input_constraints);
        let max_adaptive_input = v.adaptive_input.as_deref().map(peaks).unwrap_or_default();
        Self {
            variant,
            max_state_violation,
            max_input_violation,
            state_violations,
            input_violations,
            max_state_error,
            rho_tilde: design.rho_tilde.clone(),
            max_adaptive_input,
            rho_ua: design.rho_ua.clone(),
            tracking_rms: v.tracking_rms.clone(),
            steady_state_error: v.steady_state_error.clone(),
            pass: v.pass,
            runtime_s,
        }
    }
}

pub fn summary_table(name: &str, rows: &[SummaryRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "scenario {name}");
    let _ = writeln!(
        s,
        "{:<8} {:>12} {:>6} {:>12} {:>6}  {:<30} {:<24} {:<20} {:<20} {:>7}  verdict",
        "variant", "x viol", "#x", "u viol", "#u", "max|x-x_n| (rho_tilde)", "max|u_a| (rho_ua)", "rms", "steady", "time s"
    );
    for r in rows {
        let err = if r.variant == Variant::Uc {
            format!("{} ({})", fmt_vec(&r.max_state_error), fmt_vec(&r.rho_tilde))
        } else {
            fmt_vec(&r.max_state_error)
        };
        let ua = if r.max_adaptive_input.is_empty() {
            "-".to_string()
        } else {
            format!("{} ({})", fmt_vec(&r.max_adaptive_input), fmt_vec(&r.rho_ua))
        };
        let _ = writeln!(
            s,
            "{:<8} {:>12.4e} {:>6} {:>12.4e} {:>6}  {:<30} {:<24} {:<20} {:<20} {:>7.2}  {}",
            r.variant.name(),
            r.max_state_violation,
            r.state_violations,
            r.max_input_violation,
            r.input_violations,
            err,
            ua,
            fmt_vec(&r.tracking_rms),
            fmt_vec(&r.steady_state_error),
            r.runtime_s,
            if r.pass { "pass" } else { "FAIL" }
        );
    }
    s
}
