//! Constrained uncertain linear plant and its uncertainty description.

use std::fmt;
use std::sync::Arc;

use nalgebra::SVD;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lti::{is_hurwitz, Mat};
use crate::sets::HyperRect;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("B must have full column rank (rank {rank}, {cols} columns)")]
    RankDeficientB { rank: usize, cols: usize },
    #[error("[B B_u] must have rank n = {n}, got {rank}")]
    RankDeficientAugmented { rank: usize, n: usize },
    #[error("B_uᵀB must vanish, max entry {0:.3e}")]
    NotOrthogonal(f64),
    #[error("A + B K_x is not Hurwitz")]
    NotHurwitz,
    #[error("non-finite entries in {0}")]
    NonFinite(&'static str),
    #[error("uncertainty {0}")]
    Uncertainty(String),
}

const RANK_TOL: f64 = 1e-9;

fn rank(m: &Mat) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = SVD::new(m.clone(), false, false).singular_values;
    let top = sv.max();
    sv.iter().filter(|s| **s > RANK_TOL * top.max(1.0)).count()
}

/// `ẋ = A x + B (u + f(t, x)) + B_u w(t)`, `y = C x`, with the baseline
/// feedback `K_x` and box constraints on states, inputs and initial states.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantSpec {
    pub a: Mat,
    pub b: Mat,
    pub b_u: Mat,
    pub c: Mat,
    pub k_x: Mat,
    pub x_set: HyperRect,
    pub u_set: HyperRect,
    pub x0_set: HyperRect,
}

impl PlantSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        a: Mat,
        b: Mat,
        b_u: Mat,
        c: Mat,
        k_x: Mat,
        x_set: HyperRect,
        u_set: HyperRect,
        x0_set: HyperRect,
    ) -> Result<Self, ModelError> {
        let n = a.nrows();
        let m = b.ncols();
        let dim = |what: &str| ModelError::Dimension(what.to_string());
        if a.ncols() != n {
            return Err(dim("A must be square"));
        }
        if b.nrows() != n || b_u.nrows() != n || c.ncols() != n {
            return Err(dim("B, B_u and C must match the state dimension"));
        }
        if k_x.nrows() != m || k_x.ncols() != n {
            return Err(dim("K_x must be m x n"));
        }
        if x_set.dim() != n || x0_set.dim() != n || u_set.dim() != m {
            return Err(dim("constraint boxes must match the state/input dimensions"));
        }
        for (name, mat) in [("A", &a), ("B", &b), ("B_u", &b_u), ("C", &c), ("K_x", &k_x)] {
            if mat.iter().any(|v| !v.is_finite()) {
                return Err(ModelError::NonFinite(name));
            }
        }
        let rb = rank(&b);
        if rb != m {
            return Err(ModelError::RankDeficientB { rank: rb, cols: m });
        }
        let mut aug = Mat::zeros(n, m + b_u.ncols());
        aug.view_mut((0, 0), (n, m)).copy_from(&b);
        aug.view_mut((0, m), (n, b_u.ncols())).copy_from(&b_u);
        let ra = rank(&aug);
        if ra != n {
            return Err(ModelError::RankDeficientAugmented { rank: ra, n });
        }
        if b_u.ncols() > 0 {
            let cross = (b_u.transpose() * &b).amax();
            if cross > RANK_TOL {
                return Err(ModelError::NotOrthogonal(cross));
            }
        }
        let spec = Self {
            a,
            b,
            b_u,
            c,
            k_x,
            x_set,
            u_set,
            x0_set,
        };
        if !is_hurwitz(&spec.a_m()) {
            return Err(ModelError::NotHurwitz);
        }
        Ok(spec)
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

    pub fn unmatched_channels(&self) -> usize {
        self.b_u.ncols()
    }

    /// `A_m = A + B K_x`.
    pub fn a_m(&self) -> Mat {
        &self.a + &self.b * &self.k_x
    }

    /// Left inverse `(BᵀB)⁻¹Bᵀ`; exists because `B` has full column rank.
    pub fn b_pinv(&self) -> Mat {
        let btb = self.b.transpose() * &self.b;
        btb.try_inverse()
            .expect("BᵀB is invertible for full-column-rank B")
            * self.b.transpose()
    }
}

/// Matched uncertainty `f(t, x)` with set-dependent Lipschitz and bound
/// constants. Implementations must be monotone in set inclusion.
pub trait MatchedUncertainty: Send + Sync {
    fn channels(&self) -> usize;
    /// `L_{f_j, Z}` per channel.
    fn lipschitz(&self, z: &HyperRect) -> Vec<f64>;
    /// `b_{f_j, Z}` per channel.
    fn bound(&self, z: &HyperRect) -> Vec<f64>;
    /// `l_{f_j, Z}` per channel; carried for completeness, no bound uses it.
    fn time_lipschitz(&self, _z: &HyperRect) -> Vec<f64> {
        vec![0.0; self.channels()]
    }
    fn eval(&self, t: f64, x: &[f64]) -> Vec<f64>;
    fn name(&self) -> String;
}

/// Unmatched disturbance `w(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Unmatched {
    Zero { channels: usize },
    /// `amplitude · sin(omega t)` in every channel.
    Sine { channels: usize, amplitude: f64, omega_rad_s: f64 },
}

impl Unmatched {
    pub fn channels(&self) -> usize {
        match self {
            Unmatched::Zero { channels } | Unmatched::Sine { channels, .. } => *channels,
        }
    }

    /// `b_w ≥ ‖w(t)‖_∞`.
    pub fn bound(&self) -> f64 {
        match self {
            Unmatched::Zero { .. } => 0.0,
            Unmatched::Sine { amplitude, .. } => amplitude.abs(),
        }
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        match self {
            Unmatched::Zero { channels } => vec![0.0; *channels],
            Unmatched::Sine {
                channels,
                amplitude,
                omega_rad_s,
            } => vec![amplitude * (omega_rad_s * t).sin(); *channels],
        }
    }
}

/// Full uncertainty description. `b_w` may exceed the bound implied by `w`
/// (e.g. bounds designed for a disturbance that is switched off at run time).
#[derive(Clone)]
pub struct UncertaintySpec {
    pub matched: Arc<dyn MatchedUncertainty>,
    pub unmatched: Unmatched,
    pub b_w: f64,
}

impl fmt::Debug for UncertaintySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("UncertaintySpec")
            .field("matched", &self.matched.name())
            .field("unmatched", &self.unmatched)
            .field("b_w", &self.b_w)
            .finish()
    }
}

impl UncertaintySpec {
    pub fn new(matched: Arc<dyn MatchedUncertainty>, unmatched: Unmatched, b_w: f64) -> Result<Self, ModelError> {
        if !(b_w >= 0.0 && b_w.is_finite()) {
            return Err(ModelError::Uncertainty(format!("b_w must be nonnegative, got {b_w}")));
        }
        if b_w + 1e-12 < unmatched.bound() {
            return Err(ModelError::Uncertainty(format!(
                "b_w = {b_w} is below the disturbance amplitude {}",
                unmatched.bound()
            )));
        }
        Ok(Self { matched, unmatched, b_w })
    }

    pub fn check_against(&self, plant: &PlantSpec) -> Result<(), ModelError> {
        if self.matched.channels() != plant.inputs() {
            return Err(ModelError::Dimension(format!(
                "{} matched channels for {} inputs",
                self.matched.channels(),
                plant.inputs()
            )));
        }
        if self.unmatched.channels() != plant.unmatched_channels() {
            return Err(ModelError::Dimension(format!(
                "{} unmatched channels for B_u with {} columns",
                self.unmatched.channels(),
                plant.unmatched_channels()
            )));
        }
        Ok(())
    }

    /// Same bounds, disturbance switched off.
    pub fn without_unmatched(&self) -> Self {
        Self {
            matched: self.matched.clone(),
            unmatched: Unmatched::Zero {
                channels: self.unmatched.channels(),
            },
            b_w: self.b_w,
        }
    }

    /// `L_{f,Z} = max_j L_{f_j,Z}`.
    pub fn lipschitz_max(&self, z: &HyperRect) -> f64 {
        self.matched.lipschitz(z).into_iter().fold(0.0, f64::max)
    }

    /// `b_{f,Z} = max_j b_{f_j,Z}`.
    pub fn bound_max(&self, z: &HyperRect) -> f64 {
        self.matched.bound(z).into_iter().fold(0.0, f64::max)
    }
}

/// `f ≡ 0`.
#[derive(Debug, Clone)]
pub struct NoUncertainty {
    pub channels: usize,
}

impl MatchedUncertainty for NoUncertainty {
    fn channels(&self) -> usize {
        self.channels
    }
    fn lipschitz(&self, _z: &HyperRect) -> Vec<f64> {
        vec![0.0; self.channels]
    }
    fn bound(&self, _z: &HyperRect) -> Vec<f64> {
        vec![0.0; self.channels]
    }
    fn eval(&self, _t: f64, _x: &[f64]) -> Vec<f64> {
        vec![0.0; self.channels]
    }
    fn name(&self) -> String {
        "none".into()
    }
}

/// `f ≡ c`.
#[derive(Debug, Clone)]
pub struct ConstantUncertainty {
    pub values: Vec<f64>,
}

impl MatchedUncertainty for ConstantUncertainty {
    fn channels(&self) -> usize {
        self.values.len()
    }
    fn lipschitz(&self, _z: &HyperRect) -> Vec<f64> {
        vec![0.0; self.values.len()]
    }
    fn bound(&self, _z: &HyperRect) -> Vec<f64> {
        self.values.iter().map(|v| v.abs()).collect()
    }
    fn eval(&self, _t: f64, _x: &[f64]) -> Vec<f64> {
        self.values.clone()
    }
    fn name(&self) -> String {
        format!("constant {:?}", self.values)
    }
}
