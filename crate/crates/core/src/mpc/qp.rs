//! Dense strictly convex QP solver.
//!
//! Dual active-set method of Goldfarb and Idnani: start from the
//! unconstrained minimizer and repeatedly add the most violated constraint,
//! dropping active ones whose multipliers would turn negative. The factors
//! `J = L⁻ᵀQ` and `R` are updated with Givens rotations when constraints
//! enter or leave the active set.

use std::fmt::Write as _;

use thiserror::Error;

use crate::lti::{Mat, Vector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("Hessian is not positive semidefinite (min eigenvalue {0:.3e})")]
    NotPsd(f64),
    #[error("non-finite problem data in {0}")]
    NonFinite(&'static str),
}

/// `min ½ zᵀHz + gᵀz` s.t. `lower ≤ A z ≤ upper`, `A_eq z = b_eq`.
/// Infinite bounds mark one-sided rows.
#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub h: Mat,
    pub g: Vector,
    pub a: Mat,
    pub lower: Vector,
    pub upper: Vector,
    pub a_eq: Mat,
    pub b_eq: Vector,
}

impl QpProblem {
    pub fn new(h: Mat, g: Vector, a: Mat, lower: Vector, upper: Vector, a_eq: Mat, b_eq: Vector) -> Result<Self, QpError> {
        let n = g.len();
        if h.nrows() != n || h.ncols() != n {
            return Err(QpError::Dimension(format!("H must be {n}x{n}")));
        }
        if a.ncols() != n || lower.len() != a.nrows() || upper.len() != a.nrows() {
            return Err(QpError::Dimension("inequality rows and bounds disagree".into()));
        }
        if a_eq.ncols() != n || b_eq.len() != a_eq.nrows() {
            return Err(QpError::Dimension("equality rows and right-hand side disagree".into()));
        }
        if h.iter().chain(g.iter()).chain(a.iter()).chain(a_eq.iter()).chain(b_eq.iter()).any(|v| !v.is_finite()) {
            return Err(QpError::NonFinite("matrices"));
        }
        if lower.iter().chain(upper.iter()).any(|v| v.is_nan()) {
            return Err(QpError::NonFinite("bounds"));
        }
        let sym = (&h - h.transpose()).amax();
        if sym > 1e-9 * h.amax().max(1.0) {
            return Err(QpError::Dimension(format!("H is not symmetric (asymmetry {sym:.3e})")));
        }
        let min_eig = if n == 0 { 0.0 } else { h.clone().symmetric_eigenvalues().min() };
        if min_eig < -1e-9 * h.amax().max(1.0) {
            return Err(QpError::NotPsd(min_eig));
        }
        Ok(Self {
            h,
            g,
            a,
            lower,
            upper,
            a_eq,
            b_eq,
        })
    }

    /// Inequality-only problem.
    pub fn inequality(h: Mat, g: Vector, a: Mat, lower: Vector, upper: Vector) -> Result<Self, QpError> {
        let n = g.len();
        Self::new(h, g, a, lower, upper, Mat::zeros(0, n), Vector::zeros(0))
    }

    pub fn vars(&self) -> usize {
        self.g.len()
    }

    pub fn objective(&self, z: &Vector) -> f64 {
        0.5 * z.dot(&(&self.h * z)) + self.g.dot(z)
    }

    /// Largest violation of any bound or equality.
    pub fn violation(&self, z: &Vector) -> f64 {
        let az = &self.a * z;
        let mut worst: f64 = 0.0;
        for i in 0..az.len() {
            worst = worst.max(self.lower[i] - az[i]).max(az[i] - self.upper[i]);
        }
        let eq = &self.a_eq * z - &self.b_eq;
        worst.max(eq.amax())
    }

    /// Plain-text dump for offline inspection.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let n = self.vars();
        let _ = writeln!(s, "# qp vars={n} ineq={} eq={}", self.a.nrows(), self.a_eq.nrows());
        let write_mat = |s: &mut String, name: &str, m: &Mat| {
            let _ = writeln!(s, "{name} {} {}", m.nrows(), m.ncols());
            for r in m.row_iter() {
                let row: Vec<String> = r.iter().map(|v| format!("{v:.17e}")).collect();
                let _ = writeln!(s, "{}", row.join(" "));
            }
        };
        let write_vec = |s: &mut String, name: &str, v: &Vector| {
            let row: Vec<String> = v.iter().map(|x| format!("{x:.17e}")).collect();
            let _ = writeln!(s, "{name} {}\n{}", v.len(), row.join(" "));
        };
        write_mat(&mut s, "H", &self.h);
        write_vec(&mut s, "g", &self.g);
        write_mat(&mut s, "A", &self.a);
        write_vec(&mut s, "lower", &self.lower);
        write_vec(&mut s, "upper", &self.upper);
        write_mat(&mut s, "A_eq", &self.a_eq);
        write_vec(&mut s, "b_eq", &self.b_eq);
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub z: Vector,
    pub status: QpStatus,
    pub objective: f64,
    pub iterations: usize,
    /// Multipliers of the rows of `A` (positive for an active lower bound,
    /// negative for an active upper bound) and of the equalities.
    pub y_ineq: Vector,
    pub y_eq: Vector,
    /// Row of `A` that could not be added when infeasibility was detected.
    pub blocking: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpSettings {
    pub tol: f64,
    pub max_iter: usize,
    /// Added to the diagonal when `H` is only semidefinite.
    pub regularization: f64,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 1000,
            regularization: 1e-10,
        }
    }
}

/// One constraint `nᵀz ≥ b` of the internal form.
#[derive(Debug, Clone, Copy)]
struct Row {
    source: usize,
    sign: f64,
    bound: f64,
    equality: bool,
}

struct Problem<'a> {
    p: &'a QpProblem,
    rows: Vec<Row>,
    norms: Vec<f64>,
}

impl Problem<'_> {
    fn normal(&self, k: usize) -> Vector {
        let r = self.rows[k];
        let src = if r.equality { &self.p.a_eq } else { &self.p.a };
        src.row(r.source).transpose() * r.sign
    }

    fn slack(&self, k: usize, z: &Vector) -> f64 {
        let r = self.rows[k];
        let src = if r.equality { &self.p.a_eq } else { &self.p.a };
        r.sign * src.row(r.source).transpose().dot(z) - r.bound
    }
}

fn givens(a: f64, b: f64) -> (f64, f64, f64) {
    let h = a.hypot(b);
    if h == 0.0 {
        (1.0, 0.0, 0.0)
    } else {
        (a / h, b / h, h)
    }
}

fn rotate_cols(j: &mut Mat, p: usize, q: usize, c: f64, s: f64) {
    for i in 0..j.nrows() {
        let a = j[(i, p)];
        let b = j[(i, q)];
        j[(i, p)] = c * a + s * b;
        j[(i, q)] = -s * a + c * b;
    }
}

/// Solves the QP. Deterministic: identical inputs give identical output.
pub fn solve_qp(problem: &QpProblem, settings: &QpSettings) -> Result<QpSolution, QpError> {
    let n = problem.vars();
    let tol = settings.tol;

    let mut rows = Vec::new();
    for i in 0..problem.a_eq.nrows() {
        rows.push(Row {
            source: i,
            sign: 1.0,
            bound: problem.b_eq[i],
            equality: true,
        });
    }
    for i in 0..problem.a.nrows() {
        if problem.lower[i].is_finite() {
            rows.push(Row {
                source: i,
                sign: 1.0,
                bound: problem.lower[i],
                equality: false,
            });
        }
        if problem.upper[i].is_finite() {
            rows.push(Row {
                source: i,
                sign: -1.0,
                bound: -problem.upper[i],
                equality: false,
            });
        }
    }
    let mut pr = Problem {
        p: problem,
        rows,
        norms: Vec::new(),
    };
    pr.norms = (0..pr.rows.len()).map(|k| pr.normal(k).norm().max(f64::MIN_POSITIVE)).collect();

    // H = L Lᵀ, regularized if only semidefinite.
    let mut h = problem.h.clone();
    let chol = loop {
        match h.clone().cholesky() {
            Some(c) => break c,
            None => {
                let shift = settings.regularization * problem.h.amax().max(1.0);
                for i in 0..n {
                    h[(i, i)] += shift;
                }
            }
        }
    };
    let l = chol.l();
    let mut j = l
        .transpose()
        .try_inverse()
        .ok_or(QpError::NotPsd(0.0))?;
    let mut z = -chol.solve(&problem.g);

    let mut r = Mat::zeros(n, n);
    let mut active: Vec<usize> = Vec::new();
    let mut u: Vec<f64> = Vec::new();
    let mut iterations = 0;

    let finish = |z: Vector, status: QpStatus, active: &[usize], u: &[f64], iterations: usize, pr: &Problem<'_>, blocking: Option<usize>| {
        let mut y_ineq = Vector::zeros(problem.a.nrows());
        let mut y_eq = Vector::zeros(problem.a_eq.nrows());
        for (k, &c) in active.iter().enumerate() {
            let row = pr.rows[c];
            if row.equality {
                y_eq[row.source] += u[k];
            } else {
                y_ineq[row.source] += row.sign * u[k];
            }
        }
        QpSolution {
            objective: problem.objective(&z),
            z,
            status,
            iterations,
            y_ineq,
            y_eq,
            blocking,
        }
    };

    // Adds constraint `c` with normal `np` to the factorization; returns
    // false if it is linearly dependent on the active set.
    let add = |j: &mut Mat, r: &mut Mat, q: usize, np: &Vector| -> bool {
        let mut d = j.transpose() * np;
        for k in (q + 1..n).rev() {
            let (c, s, hyp) = givens(d[k - 1], d[k]);
            if s == 0.0 {
                continue;
            }
            d[k - 1] = hyp;
            d[k] = 0.0;
            rotate_cols(j, k - 1, k, c, s);
        }
        if d[q].abs() <= 1e-14 * np.norm().max(1.0) {
            return false;
        }
        for i in 0..=q {
            r[(i, q)] = d[i];
        }
        true
    };

    let drop = |j: &mut Mat, r: &mut Mat, q: usize, k: usize| {
        for col in k..q - 1 {
            for i in 0..n {
                r[(i, col)] = r[(i, col + 1)];
            }
        }
        for i in 0..n {
            r[(i, q - 1)] = 0.0;
        }
        for col in k..q - 1 {
            let (c, s, hyp) = givens(r[(col, col)], r[(col + 1, col)]);
            if s == 0.0 {
                continue;
            }
            r[(col, col)] = hyp;
            r[(col + 1, col)] = 0.0;
            for jj in col + 1..q - 1 {
                let a = r[(col, jj)];
                let b = r[(col + 1, jj)];
                r[(col, jj)] = c * a + s * b;
                r[(col + 1, jj)] = -s * a + c * b;
            }
            rotate_cols(j, col, col + 1, c, s);
        }
    };

    // Direction pieces for the entering constraint.
    let directions = |j: &Mat, r: &Mat, q: usize, np: &Vector| -> (Vector, Vector) {
        let d = j.transpose() * np;
        let mut step = Vector::zeros(n);
        for k in q..n {
            step += j.column(k) * d[k];
        }
        let mut rv = Vector::zeros(q);
        for i in (0..q).rev() {
            let mut acc = d[i];
            for k in i + 1..q {
                acc -= r[(i, k)] * rv[k];
            }
            rv[i] = acc / r[(i, i)];
        }
        (step, rv)
    };

    // Equalities first: always enter with a full step, never leave.
    let n_eq = problem.a_eq.nrows();
    for c in 0..n_eq {
        let np = pr.normal(c);
        let (step, rv) = directions(&j, &r, active.len(), &np);
        let denom = step.dot(&np);
        let s = pr.slack(c, &z);
        if denom.abs() <= 1e-14 * np.norm_squared().max(1.0) {
            if s.abs() > tol * pr.norms[c] {
                return Ok(finish(z, QpStatus::Infeasible, &active, &u, iterations, &pr, None));
            }
            continue;
        }
        let t = -s / denom;
        z += &step * t;
        for (k, uk) in u.iter_mut().enumerate() {
            *uk -= t * rv[k];
        }
        if add(&mut j, &mut r, active.len(), &np) {
            active.push(c);
            u.push(t);
        }
    }

    loop {
        iterations += 1;
        if iterations > settings.max_iter {
            return Ok(finish(z, QpStatus::MaxIterations, &active, &u, iterations, &pr, None));
        }
        // Most violated (normalized) inequality.
        let mut entering = None;
        let mut worst = -tol;
        for c in n_eq..pr.rows.len() {
            if active.contains(&c) {
                continue;
            }
            let s = pr.slack(c, &z) / pr.norms[c];
            if s < worst {
                worst = s;
                entering = Some(c);
            }
        }
        let Some(p) = entering else {
            return Ok(finish(z, QpStatus::Optimal, &active, &u, iterations, &pr, None));
        };
        let np = pr.normal(p);
        let mut u_new = 0.0;
        loop {
            let q = active.len();
            let (step, rv) = directions(&j, &r, q, &np);
            // Partial step: largest dual step keeping active multipliers ≥ 0.
            let mut t1 = f64::INFINITY;
            let mut leave = None;
            for k in 0..q {
                if pr.rows[active[k]].equality || rv[k] <= 0.0 {
                    continue;
                }
                let ratio = u[k] / rv[k];
                if ratio < t1 {
                    t1 = ratio;
                    leave = Some(k);
                }
            }
            let denom = step.dot(&np);
            let t2 = if step.norm() > 1e-12 * np.norm().max(1.0) && denom > 0.0 {
                -pr.slack(p, &z) / denom
            } else {
                f64::INFINITY
            };
            if t1.is_infinite() && t2.is_infinite() {
                let blocking = Some(pr.rows[p].source);
                return Ok(finish(z, QpStatus::Infeasible, &active, &u, iterations, &pr, blocking));
            }
            if t2.is_infinite() {
                for k in 0..q {
                    u[k] -= t1 * rv[k];
                }
                u_new += t1;
                let k = leave.expect("finite partial step has a leaving constraint");
                drop(&mut j, &mut r, q, k);
                active.remove(k);
                u.remove(k);
                continue;
            }
            let t = t1.min(t2);
            z += &step * t;
            for k in 0..q {
                u[k] -= t * rv[k];
            }
            u_new += t;
            if t2 <= t1 {
                if add(&mut j, &mut r, q, &np) {
                    active.push(p);
                    u.push(u_new);
                }
                break;
            }
            let k = leave.expect("partial step has a leaving constraint");
            drop(&mut j, &mut r, q, k);
            active.remove(k);
            u.remove(k);
            iterations += 1;
            if iterations > settings.max_iter {
                return Ok(finish(z, QpStatus::MaxIterations, &active, &u, iterations, &pr, None));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(x: &[f64]) -> Vector {
        Vector::from_column_slice(x)
    }

    #[test]
    fn scalar_lower_bound() {
        let p = QpProblem::inequality(Mat::from_element(1, 1, 2.0), v(&[0.0]), Mat::identity(1, 1), v(&[1.0]), v(&[f64::INFINITY])).unwrap();
        let s = solve_qp(&p, &QpSettings::default()).unwrap();
        assert_eq!(s.status, QpStatus::Optimal);
        assert!((s.z[0] - 1.0).abs() < 1e-12);
        assert!((s.y_ineq[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn detects_infeasibility() {
        let a = Mat::from_row_slice(2, 1, &[1.0, 1.0]);
        let p = QpProblem::inequality(Mat::identity(1, 1), v(&[0.0]), a, v(&[1.0, f64::NEG_INFINITY]), v(&[f64::INFINITY, 0.0])).unwrap();
        assert_eq!(solve_qp(&p, &QpSettings::default()).unwrap().status, QpStatus::Infeasible);
    }

    #[test]
    fn rejects_indefinite_hessian() {
        let h = Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(
            QpProblem::inequality(h, v(&[0.0, 0.0]), Mat::zeros(0, 2), v(&[]), v(&[])),
            Err(QpError::NotPsd(_))
        ));
    }

    #[test]
    fn dump_lists_every_block() {
        let p = QpProblem::inequality(Mat::identity(2, 2), v(&[1.0, 2.0]), Mat::identity(2, 2), v(&[0.0, 0.0]), v(&[1.0, 1.0])).unwrap();
        let d = p.dump();
        for key in ["# qp vars=2 ineq=2 eq=0", "H 2 2", "g 2", "A 2 2", "lower 2", "upper 2", "A_eq 0 2", "b_eq 0"] {
            assert!(d.contains(key), "{key}");
        }
    }

    /// Dense KKT solve for an equality-constrained QP.
    fn kkt_oracle(h: &Mat, g: &Vector, a: &Mat, b: &Vector) -> Vector {
        let n = h.nrows();
        let m = a.nrows();
        let mut k = Mat::zeros(n + m, n + m);
        k.view_mut((0, 0), (n, n)).copy_from(h);
        k.view_mut((0, n), (n, m)).copy_from(&a.transpose());
        k.view_mut((n, 0), (m, n)).copy_from(a);
        let mut rhs = Vector::zeros(n + m);
        rhs.rows_mut(0, n).copy_from(&-g);
        rhs.rows_mut(n, m).copy_from(b);
        k.lu().solve(&rhs).unwrap().rows(0, n).into_owned()
    }

    /// Projected gradient on a box, run to a tight tolerance.
    fn pgd_oracle(h: &Mat, g: &Vector, lo: &Vector, hi: &Vector) -> Vector {
        let step = 1.0 / h.clone().symmetric_eigenvalues().max();
        let mut z = Vector::zeros(g.len());
        for _ in 0..200_000 {
            let grad = h * &z + g;
            let next = (&z - grad * step).zip_zip_map(lo, hi, |x, l, u| x.clamp(l, u));
            let delta = (&next - &z).amax();
            z = next;
            if delta < 1e-15 {
                break;
            }
        }
        z
    }

    fn random_pd(n: usize, seed: &[f64]) -> Mat {
        let m = Mat::from_fn(n, n, |i, j| seed[(i * n + j) % seed.len()]);
        &m * m.transpose() + Mat::identity(n, n) * 0.5
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn equality_qp_matches_kkt(n in 2usize..8, seed in prop::collection::vec(-1.0f64..1.0, 80)) {
            let m = n / 2;
            let h = random_pd(n, &seed);
            let g = Vector::from_fn(n, |i, _| seed[(7 * i + 3) % 80]);
            let a = Mat::from_fn(m, n, |i, j| seed[(11 * i + 5 * j + 1) % 80] + if i == j { 2.0 } else { 0.0 });
            let b = Vector::from_fn(m, |i, _| seed[(13 * i + 2) % 80]);
            let p = QpProblem::new(h.clone(), g.clone(), Mat::zeros(0, n), v(&[]), v(&[]), a.clone(), b.clone()).unwrap();
            let s = solve_qp(&p, &QpSettings::default()).unwrap();
            prop_assert_eq!(s.status, QpStatus::Optimal);
            let want = kkt_oracle(&h, &g, &a, &b);
            prop_assert!((&s.z - &want).amax() < 1e-8 * (1.0 + want.amax()));
        }

        #[test]
        fn box_qp_matches_projected_gradient(n in 1usize..8, seed in prop::collection::vec(-1.0f64..1.0, 80), width in 0.1f64..2.0) {
            let h = random_pd(n, &seed);
            let g = Vector::from_fn(n, |i, _| 3.0 * seed[(7 * i + 3) % 80]);
            let lo = Vector::from_fn(n, |i, _| -width + 0.3 * seed[(5 * i + 1) % 80]);
            let hi = &lo + Vector::from_element(n, width);
            let p = QpProblem::inequality(h.clone(), g.clone(), Mat::identity(n, n), lo.clone(), hi.clone()).unwrap();
            let s = solve_qp(&p, &QpSettings::default()).unwrap();
            prop_assert_eq!(s.status, QpStatus::Optimal);
            let oracle = pgd_oracle(&h, &g, &lo, &hi);
            let fo = p.objective(&oracle);
            prop_assert!((s.objective - fo).abs() <= 1e-6 * (1.0 + fo.abs()));
            prop_assert!(p.violation(&s.z) <= 1e-9);
        }

        #[test]
        fn general_qp_satisfies_kkt(n in 2usize..10, k in 1usize..15, seed in prop::collection::vec(-1.0f64..1.0, 120)) {
            let h = random_pd(n, &seed);
            let g = Vector::from_fn(n, |i, _| 2.0 * seed[(7 * i + 3) % 120]);
            let a = Mat::from_fn(k, n, |i, j| seed[(17 * i + 3 * j + 5) % 120]);
            // z = 0 is strictly feasible, so the problem is feasible.
            let lower = Vector::from_fn(k, |i, _| -0.1 - seed[(i + 40) % 120].abs());
            let upper = Vector::from_fn(k, |i, _| 0.1 + seed[(i + 80) % 120].abs());
            let p = QpProblem::inequality(h.clone(), g.clone(), a.clone(), lower.clone(), upper.clone()).unwrap();
            let s = solve_qp(&p, &QpSettings::default()).unwrap();
            prop_assert_eq!(s.status, QpStatus::Optimal);
            prop_assert!(p.violation(&s.z) <= 1e-9);
            // Stationarity: H z + g = Aᵀ y
            let resid = &h * &s.z + &g - a.transpose() * &s.y_ineq;
            prop_assert!(resid.amax() <= 1e-8 * (1.0 + g.amax()));
            // Sign and complementarity
            let az = &a * &s.z;
            for i in 0..k {
                let y = s.y_ineq[i];
                if y > 1e-9 { prop_assert!((az[i] - lower[i]).abs() < 1e-7); }
                if y < -1e-9 { prop_assert!((az[i] - upper[i]).abs() < 1e-7); }
            }
            // Deterministic
            let again = solve_qp(&p, &QpSettings::default()).unwrap();
            prop_assert_eq!(again.z, s.z);
        }
    }
}
