//! Strictly convex quadratic programs with linear inequality constraints,
//! solved by the Goldfarb–Idnani dual active-set method.
//!
//! Problem: minimize `½ xᵀQx − cᵀx` subject to `Aᵢ x ≥ bᵢ` for every row `i`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::spd_inverse;

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// Lagrange multipliers, one per constraint row (zero when inactive).
    pub multipliers: DVector<f64>,
    pub active: Vec<bool>,
    pub iterations: usize,
    pub kkt_residual: f64,
}

/// Scaled KKT residual: the largest of relative stationarity, primal
/// infeasibility, dual infeasibility and complementarity.
pub fn kkt_residual(q: &DMatrix<f64>, c: &DVector<f64>, a: &DMatrix<f64>, b: &DVector<f64>, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
    let grad = q * x - c;
    let stat = (&grad - a.transpose() * u).amax() / grad.amax().max(1.0);
    let slack = a * x - b;
    let primal = slack.iter().fold(0.0_f64, |m, s| m.max(-s));
    let dual = u.iter().fold(0.0_f64, |m, v| m.max(-v));
    let comp = slack.iter().zip(u.iter()).fold(0.0_f64, |m, (s, v)| m.max((s * v).abs()));
    stat.max(primal).max(dual).max(comp)
}

/// Solves the QP. `tol` is the feasibility tolerance used to pick violated constraints.
pub fn solve(q: &DMatrix<f64>, c: &DVector<f64>, a: &DMatrix<f64>, b: &DVector<f64>, tol: f64) -> Result<QpSolution> {
    let n = q.nrows();
    let m = a.nrows();
    let h = spd_inverse(q).ok_or_else(|| Error::QpInfeasible("objective matrix is not positive definite".into()))?;
    let mut x = &h * c;
    let mut active: Vec<usize> = Vec::new();
    let mut u: Vec<f64> = Vec::new();
    let max_iter = 50 * (n + m).max(10);
    let mut iterations = 0;
    let row = |i: usize| a.row(i).transpose();

    loop {
        // Most violated constraint, scaled by its norm.
        let mut worst: Option<(usize, f64)> = None;
        for i in 0..m {
            if active.contains(&i) {
                continue;
            }
            let norm = a.row(i).norm().max(1e-300);
            let s = (a.row(i).dot(&x.transpose()) - b[i]) / norm;
            if s < -tol && worst.is_none_or(|(_, w)| s < w) {
                worst = Some((i, s));
            }
        }
        let Some((p, _)) = worst else { break };
        let np = row(p);
        let mut up = 0.0;
        loop {
            iterations += 1;
            if iterations > max_iter {
                return Err(Error::QpInfeasible(format!("no convergence after {max_iter} active-set steps")));
            }
            // Primal direction z = (H − HN(NᵀHN)⁻¹NᵀH) n_p and dual direction r.
            let (z, r) = if active.is_empty() {
                (&h * &np, DVector::zeros(0))
            } else {
                let nmat = DMatrix::from_fn(n, active.len(), |i, j| a[(active[j], i)]);
                let hn = &h * &nmat;
                let gram = nmat.transpose() * &hn;
                let ginv = spd_inverse(&gram).ok_or_else(|| Error::QpInfeasible("dependent active constraints".into()))?;
                let r = &ginv * (hn.transpose() * &np);
                let z = &h * &np - &hn * &r;
                (z, r)
            };
            // Largest dual step keeping active multipliers nonnegative.
            let mut t1 = f64::INFINITY;
            let mut drop = None;
            for (j, rj) in r.iter().enumerate() {
                if *rj > 0.0 {
                    let t = u[j] / rj;
                    if t < t1 {
                        t1 = t;
                        drop = Some(j);
                    }
                }
            }
            let zn = z.dot(&np);
            let slack = np.dot(&x) - b[p];
            let t2 = if z.amax() <= 1e-14 * np.amax().max(1.0) || zn <= 0.0 { f64::INFINITY } else { -slack / zn };
            if t2.is_infinite() && t1.is_infinite() {
                return Err(Error::QpInfeasible(format!("constraint {p} cannot be satisfied")));
            }
            let t = t1.min(t2);
            if t2.is_finite() {
                x += &z * t;
            }
            for (uj, rj) in u.iter_mut().zip(r.iter()) {
                *uj -= t * rj;
            }
            up += t;
            if t2 <= t1 {
                active.push(p);
                u.push(up);
                break;
            }
            let j = drop.expect("finite t1 has a blocking constraint");
            active.remove(j);
            u.remove(j);
        }
    }

    // Polish: re-solve the equality-constrained problem on the final active set.
    let mut mult = DVector::zeros(m);
    if !active.is_empty() {
        let k = active.len();
        let mut kkt = DMatrix::zeros(n + k, n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(q);
        let mut rhs = DVector::zeros(n + k);
        rhs.rows_mut(0, n).copy_from(c);
        for (j, &i) in active.iter().enumerate() {
            for col in 0..n {
                kkt[(n + j, col)] = a[(i, col)];
                kkt[(col, n + j)] = -a[(i, col)];
            }
            rhs[n + j] = b[i];
        }
        if let Some(sol) = kkt.clone().lu().solve(&rhs) {
            let xp = sol.rows(0, n).into_owned();
            let up: Vec<f64> = (0..k).map(|j| sol[n + j]).collect();
            if xp.iter().all(|v| v.is_finite()) && up.iter().all(|v| *v >= -1e-10) {
                x = xp;
                u = up.into_iter().map(|v| v.max(0.0)).collect();
            }
        }
        for (j, &i) in active.iter().enumerate() {
            mult[i] = u[j];
        }
    }
    let kkt_residual = kkt_residual(q, c, a, b, &x, &mult);
    let mut flags = vec![false; m];
    for &i in &active {
        flags[i] = true;
    }
    Ok(QpSolution { x, multipliers: mult, active: flags, iterations, kkt_residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn unconstrained_optimum_when_feasible() {
        let q = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 2.0]);
        let c = DVector::from_vec(vec![2.0, 4.0]);
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let b = DVector::from_vec(vec![0.0]);
        let s = solve(&q, &c, &a, &b, 1e-12).unwrap();
        assert_relative_eq!(s.x[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(s.x[1], 2.0, epsilon = 1e-12);
        assert!(!s.active[0]);
    }

    #[test]
    fn box_projection() {
        // min ‖x − (2, −1, 0.5)‖² over [0, 1]³ is the clipped point.
        let q = DMatrix::identity(3, 3) * 2.0;
        let c = DVector::from_vec(vec![4.0, -2.0, 1.0]);
        let mut a = DMatrix::zeros(6, 3);
        let mut b = DVector::zeros(6);
        for i in 0..3 {
            a[(2 * i, i)] = 1.0;
            a[(2 * i + 1, i)] = -1.0;
            b[2 * i + 1] = -1.0;
        }
        let s = solve(&q, &c, &a, &b, 1e-12).unwrap();
        assert_relative_eq!(s.x[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(s.x[1], 0.0, epsilon = 1e-12);
        assert_relative_eq!(s.x[2], 0.5, epsilon = 1e-12);
        assert!(s.kkt_residual <= 1e-10);
    }

    #[test]
    fn infeasible_constraints() {
        let q = DMatrix::identity(1, 1);
        let c = DVector::zeros(1);
        let a = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
        let b = DVector::from_vec(vec![1.0, 0.0]);
        assert!(solve(&q, &c, &a, &b, 1e-12).is_err());
    }
}
