//! Small linear-algebra kernels.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::inner;

fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// BiCGSTAB for A x = b with A given as a matrix-vector product.
///
/// `x` holds the initial guess on entry. Stops at ‖b - Ax‖ ≤ tol·‖b‖.
pub fn bicgstab(
    apply: impl Fn(&[Complex64], &mut [Complex64]),
    b: &[Complex64],
    x: &mut [Complex64],
    tol: f64,
    max_iter: usize,
) -> Result<usize> {
    let n = b.len();
    let bn = norm(b);
    if bn == 0.0 {
        x.iter_mut().for_each(|z| *z = Complex64::default());
        return Ok(0);
    }
    let mut ax = vec![Complex64::default(); n];
    apply(x, &mut ax);
    let mut r: Vec<Complex64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    if norm(&r) <= tol * bn {
        return Ok(0);
    }
    let r0 = r.clone();
    let one = Complex64::new(1.0, 0.0);
    let (mut rho, mut alpha, mut omega) = (one, one, one);
    let mut v = vec![Complex64::default(); n];
    let mut p = vec![Complex64::default(); n];
    let mut s = vec![Complex64::default(); n];
    let mut t = vec![Complex64::default(); n];
    let mut res = norm(&r);
    for it in 1..=max_iter {
        let rho_new = inner(&r, &r0);
        if rho_new.norm() == 0.0 {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for k in 0..n {
            p[k] = r[k] + beta * (p[k] - omega * v[k]);
        }
        apply(&p, &mut v);
        alpha = rho / inner(&v, &r0);
        for k in 0..n {
            s[k] = r[k] - alpha * v[k];
        }
        if norm(&s) <= tol * bn {
            for k in 0..n {
                x[k] += alpha * p[k];
            }
            return Ok(it);
        }
        apply(&s, &mut t);
        let tt = inner(&t, &t);
        omega = inner(&s, &t) / tt;
        for k in 0..n {
            x[k] += alpha * p[k] + omega * s[k];
            r[k] = s[k] - omega * t[k];
        }
        res = norm(&r);
        if res <= tol * bn {
            return Ok(it);
        }
    }
    Err(Error::SolverDiverged {
        residual: res / bn,
        iterations: max_iter,
    })
}
