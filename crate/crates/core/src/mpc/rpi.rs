//! Outer boxes of the minimal robust positively invariant set of
//! `ė = A_m e + B f + B_u w` with bounded `f`, `w`.

use serde::{Deserialize, Serialize};

use super::MpcError;
use crate::lti::{l1_norm, Mat, StateSpaceModel, Vector};
use crate::model::{PlantSpec, UncertaintySpec};
use crate::sets::HyperRect;

/// Error box `Z` and its input image `K_x Z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RpiSet {
    pub z: HyperRect,
    pub kx_z: HyperRect,
    /// Amplitude bound per column of `[B B_u]`.
    pub disturbance: Vec<f64>,
}

/// Continuous-time outer box. Each axis of `Z` (and of `K_x Z`) is the exact
/// supremum `Σ_j b_j ∫_0^∞ |(M e^{A_m t} [B B_u])_ij| dt` of the reachable set,
/// so correlations between axes are kept per axis.
pub fn rpi_outer_box(plant: &PlantSpec, unc: &UncertaintySpec, tol: f64) -> Result<RpiSet, MpcError> {
    let b_f = unc.matched.bound(&plant.x_set);
    let mut disturbance = b_f;
    disturbance.extend(std::iter::repeat_n(unc.b_w, plant.unmatched_channels()));
    let n = plant.states();
    let mut input = Mat::zeros(n, plant.inputs() + plant.unmatched_channels());
    input.view_mut((0, 0), (n, plant.inputs())).copy_from(&plant.b);
    input.view_mut((0, plant.inputs()), (n, plant.unmatched_channels())).copy_from(&plant.b_u);
    let bound = Vector::from_column_slice(&disturbance);
    let radii = |out: &Mat| -> Result<Vec<f64>, MpcError> {
        let sys = StateSpaceModel::new(plant.a_m(), input.clone(), out.clone(), Mat::zeros(out.nrows(), input.ncols()))?;
        let gain = l1_norm(&sys, tol)?;
        Ok((gain.entries * &bound).iter().map(|r| r + tol * bound.amax()).collect())
    };
    let z = HyperRect::symmetric(&radii(&Mat::identity(n, n))?)?;
    let kx_z = HyperRect::symmetric(&radii(&plant.k_x)?)?;
    Ok(RpiSet { z, kx_z, disturbance })
}

/// Discrete-time outer box for `e⁺ = A e + w`, `w ∈ W` with `W` symmetric
/// about the origin.
///
/// Sums the box hulls of `A^k W` until the increment drops below `tol` and
/// `γ = ‖A^K‖∞ < 1`, then inflates every axis by `γ max_i r_i / (1 - γ)`,
/// which bounds the neglected tail.
pub fn rpi_outer_box_discrete(a: &Mat, w: &HyperRect, tol: f64, max_terms: usize) -> Result<HyperRect, MpcError> {
    let n = a.nrows();
    if !a.is_square() || w.dim() != n {
        return Err(MpcError::Config("A must be square and match W".into()));
    }
    if w.center().iter().any(|c| c.abs() > 0.0) {
        return Err(MpcError::Config("W must be centred at the origin".into()));
    }
    let w_r = Vector::from_vec(w.radii());
    let mut sum = w_r.clone();
    let mut pow = a.clone();
    for _ in 1..max_terms {
        let term = pow.abs() * &w_r;
        sum += &term;
        let gamma = pow.row_iter().map(|r| r.abs().sum()).fold(0.0, f64::max);
        if term.amax() < tol && gamma < 1.0 {
            let pad = gamma * sum.amax() / (1.0 - gamma);
            let r: Vec<f64> = sum.iter().map(|s| s + pad).collect();
            return Ok(HyperRect::symmetric(&r)?);
        }
        pow = a * pow;
    }
    Err(MpcError::Config(format!(
        "disturbance series did not contract within {max_terms} terms"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::f16;

    #[test]
    fn scalar_geometric_series() {
        let a = Mat::from_element(1, 1, 0.5);
        let w = HyperRect::symmetric(&[1.0]).unwrap();
        let z = rpi_outer_box_discrete(&a, &w, 1e-12, 1000).unwrap();
        assert!((z.upper()[0] - 2.0).abs() < 1e-12);
        assert!((z.lower()[0] + 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_disturbance_gives_point() {
        let a = Mat::from_row_slice(2, 2, &[0.5, 0.2, -0.1, 0.3]);
        let w = HyperRect::symmetric(&[0.0, 0.0]).unwrap();
        let z = rpi_outer_box_discrete(&a, &w, 1e-12, 1000).unwrap();
        assert_eq!(z.radii(), vec![0.0, 0.0]);
    }

    #[test]
    fn diagonal_result_is_interval_invariant() {
        let a = Mat::from_diagonal(&Vector::from_column_slice(&[0.9, -0.5, 0.2]));
        let w = HyperRect::symmetric(&[1.0, 2.0, 0.5]).unwrap();
        let z = rpi_outer_box_discrete(&a, &w, 1e-10, 10_000).unwrap();
        let image = z.linear_image(&a).unwrap().minkowski_sum(&w).unwrap();
        assert!(image.is_subset_of(&z).unwrap());
        // Diagonal case: r_i = w_i / (1 - |a_i|) up to the inflation.
        for (r, want) in z.radii().iter().zip([10.0, 4.0, 0.625]) {
            assert!(*r >= want - 1e-9 && *r <= want + 1e-6, "{r} vs {want}");
        }
    }

    #[test]
    fn unstable_series_is_rejected() {
        let a = Mat::from_element(1, 1, 1.1);
        let w = HyperRect::symmetric(&[1.0]).unwrap();
        assert!(rpi_outer_box_discrete(&a, &w, 1e-9, 200).is_err());
    }

    #[test]
    fn f16_error_box_is_bounded_and_fits() {
        let plant = f16::plant();
        let set = rpi_outer_box(&plant, &f16::uncertainty(), 1e-6).unwrap();
        for (d, want) in set.disturbance.iter().zip([4.32, 1.62, 1.0]) {
            assert!((d - want).abs() < 1e-12);
        }
        let r = set.z.radii();
        assert!(r.iter().zip(plant.x_set.radii()).all(|(z, x)| *z > 0.0 && *z < x));
        let u = set.kx_z.radii();
        assert!(u.iter().zip(plant.u_set.radii()).all(|(z, x)| *z > 0.0 && *z < x));
        // Correlation-aware K_x Z is no larger than the hull of K_x applied to Z.
        let hull = set.z.linear_image(&plant.k_x).unwrap().radii();
        assert!(u.iter().zip(&hull).all(|(a, b)| a <= b));
    }
}
