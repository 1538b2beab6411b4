//! Matrix exponential by scaling and squaring with diagonal Padé approximants.
//!
//! Follows Higham's 2005 selection of the approximant degree from the 1-norm
//! of the argument: degrees 3, 5, 7 and 9 are used unscaled when the norm is
//! small enough, otherwise the degree-13 approximant is applied to `A / 2^s`
//! and the result squared `s` times.

use super::{LtiError, Mat};

const THETA_3: f64 = 1.495585217958292e-2;
const THETA_5: f64 = 2.539398330063230e-1;
const THETA_7: f64 = 9.504178996162932e-1;
const THETA_9: f64 = 2.097847961257068e0;
const THETA_13: f64 = 5.371920351148152e0;

const PADE_3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE_5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE_7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const PADE_9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE_13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

fn one_norm(a: &Mat) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Returns `e^{A t}`.
pub fn expm(a: &Mat, t: f64) -> Result<Mat, LtiError> {
    if !a.is_square() {
        return Err(LtiError::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    if !t.is_finite() {
        return Err(LtiError::NonFinite("time argument"));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(LtiError::NonFinite("matrix entries"));
    }
    let n = a.nrows();
    if n == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    let at = a * t;
    let norm = one_norm(&at);
    if norm == 0.0 {
        return Ok(Mat::identity(n, n));
    }

    let ident = Mat::identity(n, n);
    let a2 = &at * &at;
    let low_degree = |coeffs: &[f64]| -> Result<Mat, LtiError> {
        // U = A * sum(b_odd A^{2k}), V = sum(b_even A^{2k})
        let mut u = Mat::zeros(n, n);
        let mut v = Mat::zeros(n, n);
        let mut power = ident.clone();
        for k in 0..coeffs.len() / 2 {
            v += &power * coeffs[2 * k];
            u += &power * coeffs[2 * k + 1];
            power = &power * &a2;
        }
        let u = &at * u;
        solve_pade(&u, &v)
    };

    if norm <= THETA_3 {
        return low_degree(&PADE_3);
    }
    if norm <= THETA_5 {
        return low_degree(&PADE_5);
    }
    if norm <= THETA_7 {
        return low_degree(&PADE_7);
    }
    if norm <= THETA_9 {
        return low_degree(&PADE_9);
    }

    let s = ((norm / THETA_13).log2().ceil()).max(0.0) as i32;
    let scaled = &at / 2f64.powi(s);
    let b = &PADE_13;
    let a2 = &scaled * &scaled;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9])
        + &a6 * b[7]
        + &a4 * b[5]
        + &a2 * b[3]
        + &ident * b[1];
    let u = &scaled * u_inner;
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8])
        + &a6 * b[6]
        + &a4 * b[4]
        + &a2 * b[2]
        + &ident * b[0];
    let mut r = solve_pade(&u, &v)?;
    for _ in 0..s {
        r = &r * &r;
    }
    Ok(r)
}

fn solve_pade(u: &Mat, v: &Mat) -> Result<Mat, LtiError> {
    let p = v + u;
    let q = v - u;
    q.lu().solve(&p).ok_or(LtiError::Singular("Padé denominator"))
}

/// Zero-order-hold discretization `(e^{A dt}, ∫_0^dt e^{As} ds B)` computed
/// from the exponential of the augmented block matrix `[[A, B], [0, 0]]`.
pub fn zoh_discretize(a: &Mat, b: &Mat, dt: f64) -> Result<(Mat, Mat), LtiError> {
    let n = a.nrows();
    let m = b.ncols();
    if b.nrows() != n {
        return Err(LtiError::Dimension(format!(
            "B has {} rows, A is {n}x{n}",
            b.nrows()
        )));
    }
    let mut aug = Mat::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(a);
    aug.view_mut((0, n), (n, m)).copy_from(b);
    let e = expm(&aug, dt)?;
    Ok((
        e.view((0, 0), (n, n)).into_owned(),
        e.view((0, n), (n, m)).into_owned(),
    ))
}
