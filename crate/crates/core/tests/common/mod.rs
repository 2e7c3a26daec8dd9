//! Test oracles shared by the integration tests.

#![allow(dead_code)]

use ndarray::Array2;

/// Singular values by one-sided Jacobi rotations, sorted descending.
///
/// Column pairs are rotated until every pair is orthogonal to `1e-15`
/// relative; the column norms are then the singular values.
pub fn jacobi_singular_values(a: &Array2<f64>) -> Vec<f64> {
    let mut u = a.clone();
    let n = u.ncols();
    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (cp, cq) = (u.column(p), u.column(q));
                let alpha = cp.dot(&cp);
                let beta = cq.dot(&cq);
                let gamma = cp.dot(&cq);
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..u.nrows() {
                    let (x, y) = (u[[i, p]], u[[i, q]]);
                    u[[i, p]] = c * x - s * y;
                    u[[i, q]] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<f64> = (0..n).map(|j| u.column(j).dot(&u.column(j)).sqrt()).collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

pub fn top_singular_value(a: &Array2<f64>) -> f64 {
    let m = if a.nrows() < a.ncols() { a.t().to_owned() } else { a.clone() };
    jacobi_singular_values(&m)[0]
}
