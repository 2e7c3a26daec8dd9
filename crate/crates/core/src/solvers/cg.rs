//! Conjugate gradients for symmetric positive-definite systems.

use crate::error::{invalid, MuseError, Result};
use crate::tensor::Signal;

#[derive(Debug, Clone, PartialEq)]
pub struct CgSolution {
    pub x: Signal,
    pub iterations: usize,
    /// True relative residual `‖M x − rhs‖ / ‖rhs‖` of the returned `x`.
    pub relative_residual: f64,
}

/// Solve `M x = rhs` from a zero initial guess.
///
/// The recursive residual drives the iteration; once it meets `tol` the true
/// residual is recomputed and the iteration restarts from the current `x` if
/// rounding has let the two drift apart.
pub fn conjugate_gradient(
    apply: &dyn Fn(&Signal) -> Result<Signal>,
    rhs: &Signal,
    tol: f64,
    max_iter: usize,
) -> Result<CgSolution> {
    if !(tol > 0.0) || max_iter == 0 {
        return invalid("conjugate gradients needs tol > 0 and max_iter >= 1");
    }
    let rhs_norm = rhs.norm();
    let mut x = rhs.zeros_like();
    if rhs_norm == 0.0 {
        return Ok(CgSolution {
            x,
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let mut r = rhs.clone();
    let mut p = r.clone();
    let mut rr = r.dot(&r);
    let mut iterations = 0;
    let mut true_rel = 1.0;
    while iterations < max_iter {
        let mp = apply(&p)?;
        let pmp = p.dot(&mp);
        if !(pmp > 0.0) {
            return Err(MuseError::InvalidState(
                "conjugate gradients met a non-positive curvature direction".into(),
            ));
        }
        let alpha = rr / pmp;
        x = x.add_scaled(alpha, &p);
        r = r.add_scaled(-alpha, &mp);
        iterations += 1;
        let rr_new = r.dot(&r);
        if rr_new.sqrt() <= tol * rhs_norm {
            r = rhs.sub(&apply(&x)?);
            true_rel = r.norm() / rhs_norm;
            if true_rel <= tol {
                return Ok(CgSolution {
                    x,
                    iterations,
                    relative_residual: true_rel,
                });
            }
            rr = r.dot(&r);
            p = r.clone();
            continue;
        }
        true_rel = rr_new.sqrt() / rhs_norm;
        let beta = rr_new / rr;
        rr = rr_new;
        p = r.add_scaled(beta, &p);
    }
    Err(MuseError::SolverStalled {
        iterations,
        residual: true_rel,
    })
}
