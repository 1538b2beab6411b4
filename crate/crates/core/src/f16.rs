//! Longitudinal F-16 short-period model with flight-path angle, pitch rate
//! and angle of attack as states (degrees), elevator and flaperon inputs.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::lti::Mat;
use crate::model::{MatchedUncertainty, PlantSpec, UncertaintySpec, Unmatched};
use crate::sets::HyperRect;

/// Index of the angle of attack in the state vector.
pub const ALPHA: usize = 2;

pub fn plant() -> PlantSpec {
    let a = Mat::from_row_slice(3, 3, &[0.0, 0.0067, 1.34, 0.0, -0.869, 43.2, 0.0, 0.993, -1.34]);
    let b = Mat::from_row_slice(3, 2, &[0.169, 0.252, -17.3, -1.58, -0.169, -0.252]);
    let b_u = Mat::from_column_slice(3, 1, &[0.1061, 0.0, 0.1061]);
    // θ = γ + α and γ
    let c = Mat::from_row_slice(2, 3, &[1.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
    let k_x = Mat::from_row_slice(2, 3, &[3.25, 0.891, 7.12, -6.10, -0.898, -10.0]);
    let x_set = HyperRect::symmetric(&[10.0, 100.0, 4.0]).expect("static box");
    let u_set = HyperRect::symmetric(&[25.0, 22.0]).expect("static box");
    let x0_set = HyperRect::inf_ball(0.1, 3).expect("static box");
    PlantSpec::new(a, b, b_u, c, k_x, x_set, u_set, x0_set).expect("F-16 data is consistent")
}

/// `f = [-1.44 sin(0.4πt) - 0.18α², 0.18 - 0.36α]`.
#[derive(Debug, Clone, Copy, Default)]
pub struct F16Uncertainty;

impl F16Uncertainty {
    fn alpha_max(z: &HyperRect) -> f64 {
        z.abs_max()[ALPHA]
    }
}

impl MatchedUncertainty for F16Uncertainty {
    fn channels(&self) -> usize {
        2
    }

    fn lipschitz(&self, z: &HyperRect) -> Vec<f64> {
        vec![0.36 * Self::alpha_max(z), 0.36]
    }

    fn bound(&self, z: &HyperRect) -> Vec<f64> {
        let a = Self::alpha_max(z);
        vec![1.44 + 0.18 * a * a, 0.18 + 0.36 * a]
    }

    fn time_lipschitz(&self, _z: &HyperRect) -> Vec<f64> {
        vec![1.44 * 0.4 * PI, 0.0]
    }

    fn eval(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let alpha = x[ALPHA];
        vec![-1.44 * (0.4 * PI * t).sin() - 0.18 * alpha * alpha, 0.18 - 0.36 * alpha]
    }

    fn name(&self) -> String {
        "f16".into()
    }
}

/// `w(t) = sin(0.6πt)`, `b_w = 1`.
pub fn unmatched() -> Unmatched {
    Unmatched::Sine {
        channels: 1,
        amplitude: 1.0,
        omega_rad_s: 0.6 * PI,
    }
}

pub fn uncertainty() -> UncertaintySpec {
    UncertaintySpec::new(Arc::new(F16Uncertainty), unmatched(), 1.0).expect("b_w covers w")
}
