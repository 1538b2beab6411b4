//! Axis-aligned box arithmetic.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lti::Mat;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SetError {
    #[error("dimension mismatch: {left} vs {right}")]
    Dimension { left: usize, right: usize },
    #[error("invalid box: {0}")]
    Invalid(String),
}

/// `[lower_0, upper_0] × … × [lower_{n-1}, upper_{n-1}]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRect", into = "RawRect")]
pub struct HyperRect {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawRect {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl TryFrom<RawRect> for HyperRect {
    type Error = SetError;

    fn try_from(raw: RawRect) -> Result<Self, SetError> {
        HyperRect::new(raw.lower, raw.upper)
    }
}

impl From<HyperRect> for RawRect {
    fn from(r: HyperRect) -> Self {
        RawRect {
            lower: r.lower,
            upper: r.upper,
        }
    }
}

/// Outcome of operations that can erase a box.
#[derive(Debug, Clone, PartialEq)]
pub enum BoxOrEmpty {
    Box(HyperRect),
    /// First axis on which the bounds crossed, with the crossed bounds.
    Empty { axis: usize, lower: f64, upper: f64 },
}

impl BoxOrEmpty {
    fn from_bounds(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        for (axis, (&lo, &hi)) in lower.iter().zip(&upper).enumerate() {
            if lo > hi {
                return BoxOrEmpty::Empty { axis, lower: lo, upper: hi };
            }
        }
        BoxOrEmpty::Box(HyperRect { lower, upper })
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, BoxOrEmpty::Empty { .. })
    }

    pub fn into_box(self) -> Option<HyperRect> {
        match self {
            BoxOrEmpty::Box(b) => Some(b),
            BoxOrEmpty::Empty { .. } => None,
        }
    }

    pub fn as_box(&self) -> Option<&HyperRect> {
        match self {
            BoxOrEmpty::Box(b) => Some(b),
            BoxOrEmpty::Empty { .. } => None,
        }
    }
}

impl HyperRect {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, SetError> {
        if lower.len() != upper.len() {
            return Err(SetError::Dimension {
                left: lower.len(),
                right: upper.len(),
            });
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(SetError::Invalid(format!("axis {i} has a non-finite bound")));
            }
            if lo > hi {
                return Err(SetError::Invalid(format!("axis {i}: lower {lo} exceeds upper {hi}")));
            }
        }
        Ok(Self { lower, upper })
    }

    /// `[-r_i, r_i]` per axis.
    pub fn symmetric(radii: &[f64]) -> Result<Self, SetError> {
        if let Some(r) = radii.iter().find(|r| !(**r >= 0.0)) {
            return Err(SetError::Invalid(format!("negative radius {r}")));
        }
        Self::new(radii.iter().map(|r| -r).collect(), radii.to_vec())
    }

    /// `Ω(ρ) = {z : ‖z‖_∞ ≤ ρ}`.
    pub fn inf_ball(rho: f64, n: usize) -> Result<Self, SetError> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(SetError::Invalid(format!("ball radius must be positive, got {rho}")));
        }
        Self::symmetric(&vec![rho; n])
    }

    pub fn point(x: &[f64]) -> Self {
        Self {
            lower: x.to_vec(),
            upper: x.to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn radii(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| 0.5 * (u - l))
            .collect()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| 0.5 * (u + l))
            .collect()
    }

    /// Largest `|z_i|` over the box, per axis.
    pub fn abs_max(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| l.abs().max(u.abs()))
            .collect()
    }

    /// `max_{z ∈ box} ‖z‖_∞`.
    pub fn max_abs(&self) -> f64 {
        self.abs_max().into_iter().fold(0.0, f64::max)
    }

    fn check_dim(&self, other: &HyperRect) -> Result<(), SetError> {
        if self.dim() != other.dim() {
            return Err(SetError::Dimension {
                left: self.dim(),
                right: other.dim(),
            });
        }
        Ok(())
    }

    /// `self ⊖ other`.
    pub fn pontryagin_diff(&self, other: &HyperRect) -> Result<BoxOrEmpty, SetError> {
        self.check_dim(other)?;
        let lower = self.lower.iter().zip(&other.lower).map(|(a, b)| a - b).collect();
        let upper = self.upper.iter().zip(&other.upper).map(|(a, b)| a - b).collect();
        Ok(BoxOrEmpty::from_bounds(lower, upper))
    }

    /// `self ⊕ other`.
    pub fn minkowski_sum(&self, other: &HyperRect) -> Result<HyperRect, SetError> {
        self.check_dim(other)?;
        Ok(HyperRect {
            lower: self.lower.iter().zip(&other.lower).map(|(a, b)| a + b).collect(),
            upper: self.upper.iter().zip(&other.upper).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn intersect(&self, other: &HyperRect) -> Result<BoxOrEmpty, SetError> {
        self.check_dim(other)?;
        let lower = self.lower.iter().zip(&other.lower).map(|(a, b)| a.max(*b)).collect();
        let upper = self.upper.iter().zip(&other.upper).map(|(a, b)| a.min(*b)).collect();
        Ok(BoxOrEmpty::from_bounds(lower, upper))
    }

    /// Membership with a per-axis slack `tol ≥ 0`.
    pub fn contains_tol(&self, x: &[f64], tol: f64) -> Result<bool, SetError> {
        if x.len() != self.dim() {
            return Err(SetError::Dimension {
                left: self.dim(),
                right: x.len(),
            });
        }
        Ok(x
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (l, u))| *v >= l - tol && *v <= u + tol))
    }

    pub fn contains(&self, x: &[f64]) -> Result<bool, SetError> {
        self.contains_tol(x, 0.0)
    }

    pub fn is_subset_of(&self, other: &HyperRect) -> Result<bool, SetError> {
        self.check_dim(other)?;
        Ok(self
            .lower
            .iter()
            .zip(&self.upper)
            .zip(other.lower.iter().zip(&other.upper))
            .all(|((l, u), (ol, ou))| l >= ol && u <= ou))
    }

    /// Smallest box containing `{M z : z ∈ self}`.
    pub fn linear_image(&self, m: &Mat) -> Result<HyperRect, SetError> {
        if m.ncols() != self.dim() {
            return Err(SetError::Dimension {
                left: m.ncols(),
                right: self.dim(),
            });
        }
        let c = self.center();
        let r = self.radii();
        let mut lower = Vec::with_capacity(m.nrows());
        let mut upper = Vec::with_capacity(m.nrows());
        for row in m.row_iter() {
            let mid: f64 = row.iter().zip(&c).map(|(a, b)| a * b).sum();
            let rad: f64 = row.iter().zip(&r).map(|(a, b)| a.abs() * b).sum();
            lower.push(mid - rad);
            upper.push(mid + rad);
        }
        Ok(HyperRect { lower, upper })
    }

    /// `{-z : z ∈ self}`.
    pub fn negated(&self) -> HyperRect {
        HyperRect {
            lower: self.upper.iter().map(|v| -v).collect(),
            upper: self.lower.iter().map(|v| -v).collect(),
        }
    }

    /// Hausdorff distance in the ∞-norm between two boxes.
    pub fn hausdorff(&self, other: &HyperRect) -> Result<f64, SetError> {
        self.check_dim(other)?;
        Ok(self
            .lower
            .iter()
            .zip(&other.lower)
            .chain(self.upper.iter().zip(&other.upper))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

impl std::fmt::Display for HyperRect {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self
            .lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| format!("[{l:.4}, {u:.4}]"))
            .collect();
        write!(f, "{}", parts.join("×"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn boxed(lo: &[f64], hi: &[f64]) -> HyperRect {
        HyperRect::new(lo.to_vec(), hi.to_vec()).unwrap()
    }

    fn state_box() -> HyperRect {
        boxed(&[-10.0, -100.0, -4.0], &[10.0, 100.0, 4.0])
    }

    #[test]
    fn difference_examples() {
        let a = boxed(&[-10.0], &[10.0]);
        let d = a.pontryagin_diff(&boxed(&[-0.08], &[0.08])).unwrap().into_box().unwrap();
        assert!((d.lower()[0] + 9.92).abs() < 1e-12 && (d.upper()[0] - 9.92).abs() < 1e-12);
        assert_eq!(a.pontryagin_diff(&HyperRect::point(&[0.0])).unwrap(), BoxOrEmpty::Box(a.clone()));
        let e = boxed(&[-1.0], &[1.0]).pontryagin_diff(&boxed(&[-2.0], &[2.0])).unwrap();
        assert!(matches!(e, BoxOrEmpty::Empty { axis: 0, .. }));
    }

    #[test]
    fn sum_examples() {
        let a = state_box();
        assert_eq!(a.minkowski_sum(&HyperRect::point(&[0.0; 3])).unwrap(), a);
        let s = boxed(&[0.0], &[1.0]).minkowski_sum(&boxed(&[0.0], &[1.0])).unwrap();
        assert_eq!(s, boxed(&[0.0], &[2.0]));
    }

    #[test]
    fn ball_and_intersection() {
        let ball = HyperRect::inf_ball(5.0, 3).unwrap();
        let i = ball.intersect(&state_box()).unwrap().into_box().unwrap();
        assert_eq!(i, boxed(&[-5.0, -5.0, -4.0], &[5.0, 5.0, 4.0]));
        assert!(state_box().contains(&[0.0; 3]).unwrap());
        assert_eq!(HyperRect::inf_ball(0.1, 3).unwrap(), boxed(&[-0.1; 3], &[0.1; 3]));
        assert!(HyperRect::inf_ball(0.0, 3).is_err());
        assert!(HyperRect::inf_ball(-1.0, 3).is_err());
    }

    #[test]
    fn dimension_mismatch_is_error() {
        let a = boxed(&[0.0], &[1.0]);
        assert!(a.minkowski_sum(&state_box()).is_err());
        assert!(a.pontryagin_diff(&state_box()).is_err());
        assert!(a.intersect(&state_box()).is_err());
        assert!(a.contains(&[0.0, 0.0]).is_err());
        assert!(HyperRect::new(vec![0.0], vec![]).is_err());
        assert!(HyperRect::new(vec![1.0], vec![0.0]).is_err());
    }

    #[test]
    fn linear_image_is_tight_for_boxes() {
        let m = Mat::from_row_slice(2, 2, &[1.0, -2.0, 0.5, 0.0]);
        let img = boxed(&[-1.0, 0.0], &[1.0, 2.0]).linear_image(&m).unwrap();
        assert_eq!(img, boxed(&[-5.0, -0.5], &[1.0, 0.5]));
    }

    #[test]
    fn serde_round_trip_validates() {
        let a = state_box();
        let json = serde_json::to_string(&a).unwrap();
        assert_eq!(serde_json::from_str::<HyperRect>(&json).unwrap(), a);
        assert!(serde_json::from_str::<HyperRect>(r#"{"lower":[1.0],"upper":[0.0]}"#).is_err());
    }

    fn arb_box(n: usize) -> impl Strategy<Value = HyperRect> {
        prop::collection::vec((-50.0f64..50.0, 0.0f64..20.0), n)
            .prop_map(|v| HyperRect::new(v.iter().map(|p| p.0).collect(), v.iter().map(|p| p.0 + p.1).collect()).unwrap())
    }

    proptest! {
        #[test]
        fn difference_then_sum_is_contained(a in arb_box(3), b in arb_box(3)) {
            if let BoxOrEmpty::Box(d) = a.pontryagin_diff(&b).unwrap() {
                let back = d.minkowski_sum(&b).unwrap();
                prop_assert!(back.hausdorff(&a).unwrap() < 1e-9);
            }
        }

        #[test]
        fn tightened_membership(a in arb_box(3), b in arb_box(3), s in prop::collection::vec(0.0f64..1.0, 6)) {
            if let BoxOrEmpty::Box(d) = a.pontryagin_diff(&b).unwrap() {
                let xn: Vec<f64> = (0..3).map(|i| d.lower()[i] + s[i] * (d.upper()[i] - d.lower()[i])).collect();
                let e: Vec<f64> = (0..3).map(|i| b.lower()[i] + s[i + 3] * (b.upper()[i] - b.lower()[i])).collect();
                let x: Vec<f64> = xn.iter().zip(&e).map(|(p, q)| p + q).collect();
                prop_assert!(a.contains_tol(&x, 1e-9).unwrap());
            }
        }

        #[test]
        fn intersection_laws(a in arb_box(2), b in arb_box(2), c in arb_box(2)) {
            prop_assert_eq!(a.intersect(&b).unwrap(), b.intersect(&a).unwrap());
            prop_assert_eq!(a.intersect(&a).unwrap(), BoxOrEmpty::Box(a.clone()));
            let left = match a.intersect(&b).unwrap() {
                BoxOrEmpty::Box(ab) => ab.intersect(&c).unwrap().into_box(),
                BoxOrEmpty::Empty { .. } => None,
            };
            let right = match b.intersect(&c).unwrap() {
                BoxOrEmpty::Box(bc) => a.intersect(&bc).unwrap().into_box(),
                BoxOrEmpty::Empty { .. } => None,
            };
            prop_assert_eq!(left, right);
        }
    }
}
