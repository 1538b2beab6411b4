//! Dense linear-algebra and LTI-system primitives.
//!
//! Everything the bound computations need from linear systems theory lives
//! here: the matrix exponential, state-space realizations and their series
//! connections, first-order filter banks, and the induced `L∞ → L∞` gain
//! (the "L1 norm" of a transfer matrix) evaluated by certified quadrature of
//! the impulse response.

mod expm;
mod norm;

pub use expm::{expm, zoh_discretize};
pub use norm::{impulse_response, l1_norm, lyapunov, DecayEnvelope, L1Norm, DEFAULT_L1_TOL};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sets::HyperRect;

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Eigenvalues with real part above `-HURWITZ_MARGIN` are rejected.
pub const HURWITZ_MARGIN: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LtiError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("state matrix is not Hurwitz (spectral abscissa {abscissa:.3e})")]
    NotHurwitz { abscissa: f64 },
    #[error("singular matrix in {0}")]
    Singular(&'static str),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Largest real part among the eigenvalues of `a`.
pub fn spectral_abscissa(a: &Mat) -> Result<f64, LtiError> {
    if !a.is_square() {
        return Err(LtiError::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    if a.nrows() == 0 {
        return Ok(f64::NEG_INFINITY);
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(LtiError::NonFinite("matrix entries"));
    }
    Ok(a.complex_eigenvalues()
        .iter()
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

pub fn is_hurwitz(a: &Mat) -> bool {
    matches!(spectral_abscissa(a), Ok(s) if s < -HURWITZ_MARGIN)
}

pub fn ensure_hurwitz(a: &Mat) -> Result<(), LtiError> {
    let abscissa = spectral_abscissa(a)?;
    if abscissa < -HURWITZ_MARGIN {
        Ok(())
    } else {
        Err(LtiError::NotHurwitz { abscissa })
    }
}

/// Continuous-time realization `ẋ = Ax + Bu, y = Cx + Du`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceModel {
    pub a: Mat,
    pub b: Mat,
    pub c: Mat,
    pub d: Mat,
}

impl StateSpaceModel {
    pub fn new(a: Mat, b: Mat, c: Mat, d: Mat) -> Result<Self, LtiError> {
        if !a.is_square() {
            return Err(LtiError::NotSquare {
                rows: a.nrows(),
                cols: a.ncols(),
            });
        }
        let n = a.nrows();
        if b.nrows() != n || c.ncols() != n {
            return Err(LtiError::Dimension(format!(
                "A is {n}x{n}, B is {}x{}, C is {}x{}",
                b.nrows(),
                b.ncols(),
                c.nrows(),
                c.ncols()
            )));
        }
        if d.nrows() != c.nrows() || d.ncols() != b.ncols() {
            return Err(LtiError::Dimension(format!(
                "D is {}x{}, expected {}x{}",
                d.nrows(),
                d.ncols(),
                c.nrows(),
                b.ncols()
            )));
        }
        if [&a, &b, &c, &d].iter().any(|m| m.iter().any(|v| !v.is_finite())) {
            return Err(LtiError::NonFinite("realization entries"));
        }
        Ok(Self { a, b, c, d })
    }

    /// Realization with zero feedthrough.
    pub fn strictly_proper(a: Mat, b: Mat, c: Mat) -> Result<Self, LtiError> {
        let d = Mat::zeros(c.nrows(), b.ncols());
        Self::new(a, b, c, d)
    }

    /// `(sI - A)^{-1} B` with the full state as output.
    pub fn state_response(a: Mat, b: Mat) -> Result<Self, LtiError> {
        let n = a.nrows();
        Self::strictly_proper(a, b, Mat::identity(n, n))
    }

    pub fn states(&self) -> usize {
        self.a.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }

    /// Series connection `self · first`: the input drives `first`, whose
    /// output drives `self`.
    pub fn series(&self, first: &StateSpaceModel) -> Result<Self, LtiError> {
        if first.outputs() != self.inputs() {
            return Err(LtiError::Dimension(format!(
                "cannot cascade {} outputs into {} inputs",
                first.outputs(),
                self.inputs()
            )));
        }
        let n1 = first.states();
        let n2 = self.states();
        let mut a = Mat::zeros(n1 + n2, n1 + n2);
        a.view_mut((0, 0), (n1, n1)).copy_from(&first.a);
        a.view_mut((n1, 0), (n2, n1)).copy_from(&(&self.b * &first.c));
        a.view_mut((n1, n1), (n2, n2)).copy_from(&self.a);
        let mut b = Mat::zeros(n1 + n2, first.inputs());
        b.view_mut((0, 0), (n1, first.inputs()))
            .copy_from(&first.b);
        b.view_mut((n1, 0), (n2, first.inputs()))
            .copy_from(&(&self.b * &first.d));
        let mut c = Mat::zeros(self.outputs(), n1 + n2);
        c.view_mut((0, 0), (self.outputs(), n1))
            .copy_from(&(&self.d * &first.c));
        c.view_mut((0, n1), (self.outputs(), n2)).copy_from(&self.c);
        let d = &self.d * &first.d;
        Self::new(a, b, c, d)
    }

    /// Left-multiplies the output equation by `diag(scale)`.
    pub fn scale_outputs(&self, scale: &[f64]) -> Result<Self, LtiError> {
        if scale.len() != self.outputs() {
            return Err(LtiError::Dimension(format!(
                "{} scale factors for {} outputs",
                scale.len(),
                self.outputs()
            )));
        }
        let t = Mat::from_diagonal(&Vector::from_column_slice(scale));
        Self::new(self.a.clone(), self.b.clone(), &t * &self.c, &t * &self.d)
    }

    /// Keeps only the listed output rows.
    pub fn select_outputs(&self, rows: &[usize]) -> Result<Self, LtiError> {
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.outputs()) {
            return Err(LtiError::Dimension(format!("output row {bad} out of range")));
        }
        let c = self.c.select_rows(rows);
        let d = self.d.select_rows(rows);
        Self::new(self.a.clone(), self.b.clone(), c, d)
    }

    /// Transfer matrix `C (sI - A)^{-1} B + D` at a complex frequency.
    pub fn transfer_at(&self, s: Complex64) -> Result<DMatrix<Complex64>, LtiError> {
        let n = self.states();
        let to_c = |m: &Mat| m.map(|v| Complex64::new(v, 0.0));
        let lhs = DMatrix::<Complex64>::identity(n, n) * s - to_c(&self.a);
        let x = lhs
            .lu()
            .solve(&to_c(&self.b))
            .ok_or(LtiError::Singular("sI - A"))?;
        Ok(to_c(&self.c) * x + to_c(&self.d))
    }

    /// Static gain `D - C A^{-1} B`.
    pub fn dc_gain(&self) -> Result<Mat, LtiError> {
        let x = self
            .a
            .clone()
            .lu()
            .solve(&self.b)
            .ok_or(LtiError::Singular("A in dc gain"))?;
        Ok(&self.d - &self.c * x)
    }
}

/// Diagonal bank of first-order low-pass filters `k_j / (s + k_j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterBank {
    bandwidths: Vec<f64>,
}

impl FilterBank {
    pub fn new(bandwidths: Vec<f64>) -> Result<Self, LtiError> {
        if bandwidths.is_empty() {
            return Err(LtiError::InvalidArgument("empty filter bank".into()));
        }
        if let Some(bad) = bandwidths.iter().find(|k| !(k.is_finite() && **k > 0.0)) {
            return Err(LtiError::InvalidArgument(format!(
                "filter bandwidth {bad} is not positive"
            )));
        }
        Ok(Self { bandwidths })
    }

    pub fn uniform(channels: usize, bandwidth: f64) -> Result<Self, LtiError> {
        Self::new(vec![bandwidth; channels])
    }

    pub fn bandwidths(&self) -> &[f64] {
        &self.bandwidths
    }

    pub fn channels(&self) -> usize {
        self.bandwidths.len()
    }

    pub fn scaled(&self, factor: f64) -> Result<Self, LtiError> {
        Self::new(self.bandwidths.iter().map(|k| k * factor).collect())
    }

    pub fn max_bandwidth(&self) -> f64 {
        self.bandwidths.iter().copied().fold(0.0, f64::max)
    }

    fn gain_matrix(&self) -> Mat {
        Mat::from_diagonal(&Vector::from_column_slice(&self.bandwidths))
    }

    /// Realization of `C(s)` itself: `ż = -Kz + Ku, y = z`.
    pub fn realization(&self) -> StateSpaceModel {
        let k = self.gain_matrix();
        let m = self.channels();
        StateSpaceModel {
            a: -&k,
            b: k,
            c: Mat::identity(m, m),
            d: Mat::zeros(m, m),
        }
    }

    /// Realization of `C(s) N (sI - A_e)`, which is proper even though
    /// `sI - A_e` is not: `C(s) s = K - K C(s)` for a diagonal first-order bank.
    pub fn times_differentiator(&self, n_left: &Mat, a_e: &Mat) -> Result<StateSpaceModel, LtiError> {
        if n_left.nrows() != self.channels() || n_left.ncols() != a_e.nrows() {
            return Err(LtiError::Dimension(format!(
                "N is {}x{}, expected {}x{}",
                n_left.nrows(),
                n_left.ncols(),
                self.channels(),
                a_e.nrows()
            )));
        }
        let k = self.gain_matrix();
        let kn = &k * n_left;
        let b = -&k * (&kn + n_left * a_e);
        StateSpaceModel::new(-&k, b, Mat::identity(self.channels(), self.channels()), kn)
    }
}

/// Which filter product [`series_with_filter`] realizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterMode {
    /// `sys · (I - C(s))`
    IMinusC,
    /// `sys · C(s)`
    C,
}

/// Realization of `sys · (I - C(s))` or `sys · C(s)`, appending one filter
/// state per input channel.
pub fn series_with_filter(
    sys: &StateSpaceModel,
    filters: &FilterBank,
    mode: FilterMode,
) -> Result<StateSpaceModel, LtiError> {
    let m = sys.inputs();
    if filters.channels() != m {
        return Err(LtiError::Dimension(format!(
            "{} filter channels for {m} system inputs",
            filters.channels()
        )));
    }
    let n = sys.states();
    let k = filters.gain_matrix();
    let sign = match mode {
        FilterMode::IMinusC => -1.0,
        FilterMode::C => 1.0,
    };
    let mut a = Mat::zeros(n + m, n + m);
    a.view_mut((0, 0), (n, n)).copy_from(&sys.a);
    a.view_mut((0, n), (n, m)).copy_from(&(&sys.b * sign));
    a.view_mut((n, n), (m, m)).copy_from(&-&k);
    let mut b = Mat::zeros(n + m, m);
    if mode == FilterMode::IMinusC {
        b.view_mut((0, 0), (n, m)).copy_from(&sys.b);
    }
    b.view_mut((n, 0), (m, m)).copy_from(&k);
    let mut c = Mat::zeros(sys.outputs(), n + m);
    c.view_mut((0, 0), (sys.outputs(), n)).copy_from(&sys.c);
    c.view_mut((0, n), (sys.outputs(), m))
        .copy_from(&(&sys.d * sign));
    let d = match mode {
        FilterMode::IMinusC => sys.d.clone(),
        FilterMode::C => Mat::zeros(sys.outputs(), m),
    };
    StateSpaceModel::new(a, b, c, d)
}

/// `‖s (sI - A_m)^{-1}‖_{L1} · max_{x0 ∈ X0} ‖x0‖_∞`, optionally with the
/// output rows scaled by `scale` (the coordinate-scaled variant).
pub fn rho_in_scaled(a_m: &Mat, x0: &HyperRect, scale: Option<&[f64]>, tol: f64) -> Result<f64, LtiError> {
    let n = a_m.nrows();
    if x0.dim() != n {
        return Err(LtiError::Dimension(format!(
            "initial set has dimension {}, A_m is {n}x{n}",
            x0.dim()
        )));
    }
    ensure_hurwitz(a_m)?;
    let radius = x0.max_abs();
    if radius == 0.0 {
        return Ok(0.0);
    }
    // s (sI - A)^{-1} = I + A (sI - A)^{-1}
    let mut sys = StateSpaceModel::new(a_m.clone(), Mat::identity(n, n), a_m.clone(), Mat::identity(n, n))?;
    if let Some(scale) = scale {
        sys = sys.scale_outputs(scale)?;
    }
    Ok(l1_norm(&sys, tol)?.max * radius)
}

pub fn rho_in(a_m: &Mat, x0: &HyperRect) -> Result<f64, LtiError> {
    rho_in_scaled(a_m, x0, None, DEFAULT_L1_TOL)
}
