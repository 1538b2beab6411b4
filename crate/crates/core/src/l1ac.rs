//! L1 adaptive controller: state predictor, piecewise-constant estimation
//! law, low-pass filtered cancellation, and the constants that bound its
//! deviation from the reference system.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lti::{
    ensure_hurwitz, l1_norm, zoh_discretize, FilterBank, LtiError, Mat, StateSpaceModel, Vector,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum L1Error {
    #[error(transparent)]
    Lti(#[from] LtiError),
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Design parameters of the adaptive loop.
#[derive(Debug, Clone, PartialEq)]
pub struct L1Config {
    pub a_e: Mat,
    /// Estimation sample time `T`.
    pub t_sample: f64,
    pub filters: FilterBank,
    pub gamma1: f64,
}

impl L1Config {
    pub fn new(a_e: Mat, t_sample: f64, filters: FilterBank, gamma1: f64) -> Result<Self, L1Error> {
        ensure_hurwitz(&a_e)?;
        if !(t_sample > 0.0 && t_sample.is_finite()) {
            return Err(L1Error::Config(format!("sample time must be positive, got {t_sample}")));
        }
        if !(gamma1 > 0.0 && gamma1.is_finite()) {
            return Err(L1Error::Config(format!("gamma1 must be positive, got {gamma1}")));
        }
        Ok(Self {
            a_e,
            t_sample,
            filters,
            gamma1,
        })
    }

    pub fn with_sample_time(&self, t_sample: f64) -> Result<Self, L1Error> {
        Self::new(self.a_e.clone(), t_sample, self.filters.clone(), self.gamma1)
    }

    pub fn with_filters(&self, filters: FilterBank) -> Self {
        Self {
            filters,
            ..self.clone()
        }
    }
}

/// `Φ(T) = A_e⁻¹(e^{A_e T} - I) = ∫_0^T e^{A_e s} ds`, read off the
/// exponential of `[[A_e, I], [0, 0]]` so small `T` loses no digits.
pub fn phi(a_e: &Mat, t: f64) -> Result<Mat, L1Error> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(L1Error::Config(format!("sample time must be positive, got {t}")));
    }
    let n = a_e.nrows();
    let (_, integral) = zoh_discretize(a_e, &Mat::identity(n, n), t)?;
    Ok(integral)
}

/// `Φ(T)⁻¹ e^{A_e T}`, the gain of the estimation law.
pub fn estimation_gain(a_e: &Mat, t: f64) -> Result<Mat, L1Error> {
    let n = a_e.nrows();
    let (e, integral) = zoh_discretize(a_e, &Mat::identity(n, n), t)?;
    integral
        .lu()
        .solve(&e)
        .ok_or(L1Error::Lti(LtiError::Singular("Φ(T)")))
}

/// Runtime state of the adaptive loop.
#[derive(Debug, Clone, PartialEq)]
pub struct L1State {
    pub x_hat: Vector,
    pub sigma_hat: Vector,
    /// Filter outputs, i.e. the current `u_a`.
    pub u_a: Vector,
    pub last_sample_time: f64,
}

/// Predictor, estimator and filter with precomputed discrete gains.
#[derive(Debug, Clone)]
pub struct L1Adaptive {
    cfg: L1Config,
    a_m: Mat,
    b: Mat,
    b_pinv: Mat,
    gain: Mat,
    state: L1State,
}

impl L1Adaptive {
    /// Predictor starts at `x0`, so the initial prediction error is zero.
    pub fn new(cfg: L1Config, a_m: Mat, b: Mat, b_pinv: Mat, x0: &Vector) -> Result<Self, L1Error> {
        let n = a_m.nrows();
        let m = b.ncols();
        if cfg.a_e.nrows() != n || b.nrows() != n || b_pinv.nrows() != m || b_pinv.ncols() != n || x0.len() != n {
            return Err(L1Error::Config("dimension mismatch between plant and adaptive loop".into()));
        }
        if cfg.filters.channels() != m {
            return Err(L1Error::Config(format!(
                "{} filter channels for {m} inputs",
                cfg.filters.channels()
            )));
        }
        let gain = estimation_gain(&cfg.a_e, cfg.t_sample)?;
        Ok(Self {
            cfg,
            a_m,
            b,
            b_pinv,
            gain,
            state: L1State {
                x_hat: x0.clone(),
                sigma_hat: Vector::zeros(n),
                u_a: Vector::zeros(m),
                last_sample_time: 0.0,
            },
        })
    }

    pub fn config(&self) -> &L1Config {
        &self.cfg
    }

    pub fn state(&self) -> &L1State {
        &self.state
    }

    pub fn b_pinv(&self) -> &Mat {
        &self.b_pinv
    }

    /// `σ̂(iT) = -Φ(T)⁻¹ e^{A_e T} x̃(iT)`, held until the next sample.
    pub fn estimation_update(&mut self, x: &Vector, t: f64) -> &Vector {
        let x_tilde = &self.state.x_hat - x;
        self.state.sigma_hat = -(&self.gain * x_tilde);
        self.state.last_sample_time = t;
        &self.state.sigma_hat
    }

    /// `B†σ̂`, the matched part of the current estimate.
    pub fn matched_estimate(&self) -> Vector {
        &self.b_pinv * &self.state.sigma_hat
    }

    /// `dx̂/dt = A_m x + B(u_opt + u_a) + σ̂ + A_e(x̂ - x)`.
    pub fn predictor_derivative(&self, x_hat: &Vector, x: &Vector, u_opt: &Vector, u_a: &Vector) -> Vector {
        &self.a_m * x + &self.b * (u_opt + u_a) + &self.state.sigma_hat + &self.cfg.a_e * (x_hat - x)
    }

    /// One classical RK4 step of the predictor with `x`, `u_opt` and `u_a`
    /// frozen over the step.
    pub fn predictor_step(&mut self, x: &Vector, u_opt: &Vector, u_a: &Vector, dt: f64) -> &Vector {
        let x_hat = self.state.x_hat.clone();
        let f = |xh: &Vector| self.predictor_derivative(xh, x, u_opt, u_a);
        let k1 = f(&x_hat);
        let k2 = f(&(&x_hat + &k1 * (0.5 * dt)));
        let k3 = f(&(&x_hat + &k2 * (0.5 * dt)));
        let k4 = f(&(&x_hat + &k3 * dt));
        self.state.x_hat = x_hat + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        &self.state.x_hat
    }

    pub fn set_predictor(&mut self, x_hat: Vector) {
        self.state.x_hat = x_hat;
    }

    /// Filter output `tau` seconds into a step that starts at the current
    /// filter state, with the held input `-B†σ̂`: exact for first-order lags.
    pub fn filter_output_at(&self, tau: f64) -> Vector {
        let target = -self.matched_estimate();
        let k = self.cfg.filters.bandwidths();
        Vector::from_fn(self.state.u_a.len(), |j, _| {
            let decay = (-k[j] * tau).exp();
            target[j] + (self.state.u_a[j] - target[j]) * decay
        })
    }

    /// Advances `u̇_a = -K u_a - K B†σ̂` by `dt` (zero-order hold, exact).
    pub fn advance_filter(&mut self, dt: f64) -> &Vector {
        self.state.u_a = self.filter_output_at(dt);
        &self.state.u_a
    }

    /// Current adaptive input `u_a`.
    pub fn adaptive_control(&self) -> &Vector {
        &self.state.u_a
    }
}

/// `ᾱ0..ᾱ3` for a given sample time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaConstants {
    pub alpha0: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
}

fn inf_norm(m: &Mat) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Adaptive Simpson for a scalar integrand on `[a, b]` with absolute
/// tolerance `tol`.
pub fn adaptive_simpson<F>(f: F, a: f64, b: f64, tol: f64) -> Result<f64, LtiError>
where
    F: Fn(f64) -> Result<f64, LtiError>,
{
    fn recurse<F>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> Result<f64, LtiError>
    where
        F: Fn(f64) -> Result<f64, LtiError>,
    {
        let m = 0.5 * (a + b);
        let flm = f(0.5 * (a + m))?;
        let frm = f(0.5 * (m + b))?;
        let h = b - a;
        let left = h / 12.0 * (fa + 4.0 * flm + fm);
        let right = h / 12.0 * (fm + 4.0 * frm + fb);
        let diff = left + right - whole;
        if depth >= 40 || diff.abs() <= 15.0 * tol {
            return Ok(left + right + diff / 15.0);
        }
        Ok(recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth + 1)?
            + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth + 1)?)
    }
    let fa = f(a)?;
    let fm = f(0.5 * (a + b))?;
    let fb = f(b)?;
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    recurse(&f, a, b, fa, fm, fb, whole, tol, 0)
}

/// Relative accuracy of the α quadratures and the α2 line search.
pub const ALPHA_REL_TOL: f64 = 1e-9;
/// Grid points of the α2 line search before golden-section refinement.
const ALPHA2_GRID: usize = 200;

/// Computes `ᾱ0..ᾱ3` at sample time `t`.
///
/// `ᾱ3` is a maximum over `t' ∈ [0, T]` of an integral with a nonnegative
/// integrand on a growing interval, so it is attained at `t' = T`.
pub fn alpha_constants(a_e: &Mat, b: &Mat, b_u: &Mat, t: f64) -> Result<AlphaConstants, L1Error> {
    ensure_hurwitz(a_e)?;
    let gain = estimation_gain(a_e, t)?;
    let integral_of = |m: &Mat| -> Result<f64, LtiError> {
        if m.ncols() == 0 {
            return Ok(0.0);
        }
        let scale = inf_norm(m) * t;
        if scale == 0.0 {
            return Ok(0.0);
        }
        adaptive_simpson(
            |s| Ok(inf_norm(&(crate::lti::expm(a_e, s)? * m))),
            0.0,
            t,
            ALPHA_REL_TOL * scale,
        )
    };
    let alpha0 = integral_of(b)?;
    let alpha1 = integral_of(b_u)?;
    let alpha3 = integral_of(&gain)?;

    let norm_at = |s: f64| -> Result<f64, LtiError> { Ok(inf_norm(&crate::lti::expm(a_e, s)?)) };
    let mut best_s = 0.0;
    let mut best = norm_at(0.0)?;
    for k in 1..=ALPHA2_GRID {
        let s = t * k as f64 / ALPHA2_GRID as f64;
        let v = norm_at(s)?;
        if v > best {
            best = v;
            best_s = s;
        }
    }
    // Golden-section polish around the best grid point.
    let h = t / ALPHA2_GRID as f64;
    let (mut lo, mut hi) = ((best_s - h).max(0.0), (best_s + h).min(t));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    while hi - lo > ALPHA_REL_TOL * t {
        let c = hi - g * (hi - lo);
        let d = lo + g * (hi - lo);
        if norm_at(c)? >= norm_at(d)? {
            hi = d;
        } else {
            lo = c;
        }
    }
    let alpha2 = best.max(norm_at(0.5 * (lo + hi))?);

    Ok(AlphaConstants {
        alpha0,
        alpha1,
        alpha2,
        alpha3,
    })
}

/// `γ0(T) = (b_f ᾱ0 + ᾱ1 b_w)(ᾱ2 + ᾱ3 + 1)`.
pub fn gamma0(alpha: &AlphaConstants, b_f: f64, b_w: f64) -> f64 {
    (b_f * alpha.alpha0 + alpha.alpha1 * b_w) * (alpha.alpha2 + alpha.alpha3 + 1.0)
}

/// `γ2 = ‖C(s)‖ L_f γ1 + ‖C(s) B†(sI - A_e)‖ γ0`.
pub fn gamma2(filter_l1: f64, l_f: f64, gamma1: f64, cbd_l1: f64, gamma0: f64) -> f64 {
    filter_l1 * l_f * gamma1 + cbd_l1 * gamma0
}

/// Realization of `C(s) B† (sI - A_e)`.
pub fn filtered_inverse_realization(filters: &FilterBank, b_pinv: &Mat, a_e: &Mat) -> Result<StateSpaceModel, L1Error> {
    Ok(filters.times_differentiator(b_pinv, a_e)?)
}

/// Per-channel and overall `‖C(s)‖_{L1}`.
pub fn filter_norms(filters: &FilterBank, tol: f64) -> Result<Vec<f64>, L1Error> {
    Ok(l1_norm(&filters.realization(), tol)?.rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(a: f64, n: usize) -> Mat {
        Mat::from_diagonal_element(n, n, a)
    }

    #[test]
    fn phi_diagonal_closed_form() {
        let p = phi(&diag(-10.0, 3), 0.1).unwrap();
        let want = (1.0 - (-1.0f64).exp()) / 10.0;
        assert!((p - diag(want, 3)).amax() < 1e-15);
    }

    #[test]
    fn phi_small_time_limit() {
        let t = 1e-9;
        let p = phi(&diag(-10.0, 3), t).unwrap() / t;
        assert!((p - Mat::identity(3, 3)).amax() < 1e-6);
    }

    #[test]
    fn phi_matches_series() {
        let a = diag(-10.0, 3);
        let t = 1e-7;
        // T I + T² A/2 + T³ A²/6 + ...
        let mut term = Mat::identity(3, 3) * t;
        let mut series = term.clone();
        for k in 2..=10 {
            term = &term * &a * (t / k as f64);
            series += &term;
        }
        let p = phi(&a, t).unwrap();
        assert!((&p - &series).amax() <= 1e-12 * series.amax());
    }

    fn f16_loop(t: f64) -> L1Adaptive {
        let p = crate::f16::plant();
        let cfg = L1Config::new(diag(-10.0, 3), t, FilterBank::uniform(2, 200.0).unwrap(), 0.02).unwrap();
        L1Adaptive::new(cfg, p.a_m(), p.b.clone(), p.b_pinv(), &Vector::zeros(3)).unwrap()
    }

    #[test]
    fn zero_prediction_error_gives_zero_estimate() {
        let mut l1 = f16_loop(0.1);
        let x = Vector::from_vec(vec![0.3, -1.0, 0.2]);
        l1.set_predictor(x.clone());
        assert_eq!(l1.estimation_update(&x, 0.0), &Vector::zeros(3));
    }

    #[test]
    fn diagonal_estimation_gain() {
        let mut l1 = f16_loop(0.1);
        l1.set_predictor(Vector::from_vec(vec![1.0, 0.0, 0.0]));
        let s = l1.estimation_update(&Vector::zeros(3), 0.0).clone();
        let e = (-1.0f64).exp();
        let want = -10.0 * e / (1.0 - e);
        assert!((s[0] - want).abs() < 1e-12, "{}", s[0]);
        assert!((want + 5.8198).abs() < 1e-4);
        assert!(s[1].abs() < 1e-15 && s[2].abs() < 1e-15);
    }

    #[test]
    fn predictor_rests_at_equilibrium() {
        let mut l1 = f16_loop(1e-4);
        let z = Vector::zeros(3);
        let u = Vector::zeros(2);
        for _ in 0..100 {
            l1.predictor_step(&z, &u, &u, 1e-4);
        }
        assert_eq!(l1.state().x_hat, z);
    }

    #[test]
    fn filter_step_response() {
        let mut l1 = f16_loop(1e-4);
        let p = crate::f16::plant();
        // σ̂ = B c so that B†σ̂ = c
        let c = Vector::from_vec(vec![0.7, -1.2]);
        l1.state.sigma_hat = &p.b * &c;
        let dt = 1e-4;
        for k in 1..=500 {
            l1.advance_filter(dt);
            let t = k as f64 * dt;
            for j in 0..2 {
                let want = -c[j] * (1.0 - (-200.0 * t).exp());
                assert!((l1.adaptive_control()[j] - want).abs() < 1e-12);
            }
        }
        let mut steady = l1.clone();
        steady.advance_filter(10.0);
        assert!((steady.adaptive_control() + &c).amax() < 1e-12);
        let mut idle = f16_loop(1e-4);
        idle.advance_filter(1.0);
        assert_eq!(idle.adaptive_control(), &Vector::zeros(2));
    }

    #[test]
    fn alpha_constants_diagonal_closed_forms() {
        let p = crate::f16::plant();
        let a = 10.0;
        for t in [1e-7, 1e-4, 0.05] {
            let al = alpha_constants(&diag(-a, 3), &p.b, &p.b_u, t).unwrap();
            let bn = inf_norm(&p.b);
            let want0 = bn * (1.0 - (-a * t).exp()) / a;
            assert!((al.alpha0 - want0).abs() <= 1e-6 * want0);
            assert!((al.alpha2 - 1.0).abs() < 1e-12);
            let want3 = (-a * t).exp();
            assert!((al.alpha3 - want3).abs() <= 1e-6 * want3, "{} vs {want3}", al.alpha3);
        }
    }

    #[test]
    fn alpha2_finds_interior_maximum() {
        // Non-normal A_e: ‖e^{A t}‖∞ rises before decaying.
        let a = Mat::from_row_slice(2, 2, &[-1.0, 20.0, 0.0, -1.0]);
        let t = 2.0;
        let al = alpha_constants(&a, &Mat::identity(2, 2), &Mat::zeros(2, 0), t).unwrap();
        // ‖e^{At}‖∞ = e^{-t}(1 + 20t), maximal at t = 0.95
        let s = 0.95f64;
        let want = (-s).exp() * (1.0 + 20.0 * s);
        assert!((al.alpha2 - want).abs() < 1e-9 * want);
        assert_eq!(al.alpha1, 0.0);
    }

    #[test]
    fn gamma_formulas() {
        let al = AlphaConstants {
            alpha0: 0.1,
            alpha1: 0.2,
            alpha2: 1.0,
            alpha3: 0.5,
        };
        assert_eq!(gamma0(&al, 0.0, 0.0), 0.0);
        assert!(gamma0(&al, 2.0, 1.0) > gamma0(&al, 1.0, 1.0));
        assert!((gamma0(&al, 1.0, 1.0) - 0.3 * 2.5).abs() < 1e-15);
        assert_eq!(gamma2(1.0, 3.0, 0.0, 5.0, 0.0), 0.0);
        assert!((gamma2(1.0, 3.0, 0.02, 5.0, 0.0) - 0.06).abs() < 1e-15);
    }

    #[test]
    fn filter_norm_is_one() {
        let n = filter_norms(&FilterBank::new(vec![200.0, 3.0]).unwrap(), 1e-8).unwrap();
        for v in n {
            assert!((v - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn gamma0_decreases_with_sample_time() {
        let p = crate::f16::plant();
        let mut last = f64::INFINITY;
        for k in 3..=8 {
            let t = 10f64.powi(-k);
            let al = alpha_constants(&diag(-10.0, 3), &p.b, &p.b_u, t).unwrap();
            let g = gamma0(&al, 4.32, 1.0);
            assert!(g < last);
            last = g;
        }
        assert!(last < 1e-5);
    }
}
