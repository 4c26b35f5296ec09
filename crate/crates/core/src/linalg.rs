//! Small dense and banded linear algebra used by the solvers.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

/// Solve a tridiagonal system. `lower[0]` and `upper[n-1]` are ignored.
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    if lower.len() != n || upper.len() != n || rhs.len() != n {
        return Err(Error::LinearSolve("tridiagonal bands have inconsistent lengths".into()));
    }
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut denom = diag[0];
    if denom == 0.0 {
        return Err(Error::LinearSolve("zero pivot at row 0".into()));
    }
    c[0] = upper[0] / denom;
    d[0] = rhs[0] / denom;
    for i in 1..n {
        denom = diag[i] - lower[i] * c[i - 1];
        if denom == 0.0 || !denom.is_finite() {
            return Err(Error::LinearSolve(format!("zero pivot at row {i}")));
        }
        c[i] = upper[i] / denom;
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    Ok(d)
}

/// Block tridiagonal solve by block elimination:
/// `L_i x_{i-1} + D_i x_i + U_i x_{i+1} = b_i`.
pub fn solve_block_tridiagonal(
    lower: &[DMatrix<f64>],
    diag: &[DMatrix<f64>],
    upper: &[DMatrix<f64>],
    rhs: &[DVector<f64>],
) -> Result<Vec<DVector<f64>>> {
    let n = diag.len();
    if n == 0 || lower.len() != n || upper.len() != n || rhs.len() != n {
        return Err(Error::LinearSolve("block bands have inconsistent lengths".into()));
    }
    let mut c: Vec<DMatrix<f64>> = Vec::with_capacity(n);
    let mut d: Vec<DVector<f64>> = Vec::with_capacity(n);
    for i in 0..n {
        let (piv, r) = if i == 0 {
            (diag[0].clone(), rhs[0].clone())
        } else {
            (&diag[i] - &lower[i] * &c[i - 1], &rhs[i] - &lower[i] * &d[i - 1])
        };
        let lu = piv.lu();
        let ci = lu
            .solve(&upper[i])
            .ok_or_else(|| Error::LinearSolve(format!("singular pivot block at row {i}")))?;
        let di = lu.solve(&r).ok_or_else(|| Error::LinearSolve(format!("singular pivot block at row {i}")))?;
        c.push(ci);
        d.push(di);
    }
    for i in (0..n - 1).rev() {
        let next = d[i + 1].clone();
        d[i] -= &c[i] * next;
    }
    Ok(d)
}

/// Diagonally preconditioned conjugate gradients for an SPD operator.
/// Returns the solution and the iteration count.
pub fn conjugate_gradient(
    apply: impl Fn(&[f64], &mut [f64]),
    precond_diag: &[f64],
    rhs: &[f64],
    rel_tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, usize)> {
    let n = rhs.len();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let bnorm = dot(rhs, rhs).sqrt();
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok((x, 0));
    }
    let mut r = rhs.to_vec();
    let mut z: Vec<f64> = r.iter().zip(precond_diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    for it in 1..=max_iter {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::LinearSolve(format!("operator not positive definite (p·Ap = {pap:e})")));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if dot(&r, &r).sqrt() <= rel_tol * bnorm {
            return Ok((x, it));
        }
        for i in 0..n {
            z[i] = r[i] / precond_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::LinearSolve(format!("conjugate gradients did not reach {rel_tol:e} in {max_iter} iterations")))
}

/// Largest deviation from Hermitian symmetry, relative to the largest entry.
pub fn hermitian_defect(a: &CMatrix) -> f64 {
    let scale = a.iter().fold(0.0_f64, |m, z| m.max(z.norm())).max(f64::MIN_POSITIVE);
    let mut worst = 0.0_f64;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst / scale
}

/// Eigenvalues of a Hermitian matrix by cyclic Jacobi rotations, ascending.
///
/// Sweeps stop once every off-diagonal entry satisfies
/// `|a_pq| <= tol * sqrt(|a_pp a_qq|)`, which keeps small eigenvalues of
/// badly scaled positive matrices accurate.
pub fn hermitian_eigenvalues(a: &CMatrix, tol: f64) -> Result<Vec<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::InvalidArgument("eigenvalues need a square matrix".into()));
    }
    let mut m = a.clone();
    for i in 0..n {
        m[(i, i)] = Complex64::new(m[(i, i)].re, 0.0);
    }
    for _sweep in 0..100 {
        let mut done = true;
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                let (app, aqq) = (m[(p, p)].re, m[(q, q)].re);
                if apq.norm() <= tol * (app * aqq).abs().sqrt() || apq.norm() == 0.0 {
                    continue;
                }
                done = false;
                // remove the phase of a_pq, then a real Jacobi rotation
                let phase = apq / apq.norm();
                let g = apq.norm();
                let tau = (aqq - app) / (2.0 * g);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let t = if tau == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // columns: col_p' = c col_p - s conj(phase) col_q, col_q' = s phase col_p + c col_q
                let sp = phase * s;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = mkp * c - mkq * sp.conj();
                    m[(k, q)] = mkp * sp + mkq * c;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = mpk * c - mqk * sp;
                    m[(q, k)] = mpk * sp.conj() + mqk * c;
                }
                m[(p, q)] = Complex64::new(0.0, 0.0);
                m[(q, p)] = Complex64::new(0.0, 0.0);
                m[(p, p)] = Complex64::new(m[(p, p)].re, 0.0);
                m[(q, q)] = Complex64::new(m[(q, q)].re, 0.0);
            }
        }
        if done {
            let mut ev: Vec<f64> = (0..n).map(|i| m[(i, i)].re).collect();
            ev.sort_by(|a, b| a.total_cmp(b));
            return Ok(ev);
        }
    }
    Err(Error::LinearSolve("Jacobi sweeps did not converge".into()))
}

/// Spectral norm by power iteration on `A*A`, started from the column of
/// largest norm. Returns the norm estimate and whether it converged within
/// `max_iter` iterations to relative Rayleigh-quotient stagnation `tol`.
pub fn spectral_norm(a: &CMatrix, max_iter: usize, tol: f64) -> (f64, bool) {
    let n = a.ncols();
    if n == 0 {
        return (0.0, true);
    }
    let start = (0..n)
        .max_by(|&i, &j| a.column(i).norm().total_cmp(&a.column(j).norm()))
        .unwrap_or(0);
    if a.column(start).norm() == 0.0 {
        return (0.0, true);
    }
    let ata = a.adjoint() * a;
    let mut v = DVector::<Complex64>::zeros(n);
    v[start] = Complex64::new(1.0, 0.0);
    let mut rayleigh = 0.0_f64;
    for _ in 0..max_iter {
        let w = &ata * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return (0.0, true);
        }
        let next = (v.adjoint() * &w)[(0, 0)].re;
        v = w / Complex64::new(norm, 0.0);
        if (next - rayleigh).abs() <= tol * next.abs() {
            return (next.max(0.0).sqrt(), true);
        }
        rayleigh = next;
    }
    (rayleigh.max(0.0).sqrt(), false)
}
