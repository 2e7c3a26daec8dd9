//! Plug-and-play ISTA with a contractive residual denoiser.

use std::time::Instant;

use super::{Algorithm, RunTrace, Termination, TraceRecord};
use crate::energy::{ScoreBaseline, ScoreField};
use crate::error::{invalid, Result};
use crate::operators::LinearOperator;
use crate::tensor::Signal;

pub const PNP_DEFAULT_ITERS: usize = 500;

/// Slack on the per-layer spectral norms when checking contractiveness.
const CONTRACTION_TOL: f64 = 1e-6;

/// `x_{k+1} = D(x_k − A^H(A x_k − b))` with `D(x) = x − F(x)`.
///
/// The data step is the gradient of `‖Ax − b‖²/(2η²)` scaled by `η²`, i.e. a
/// unit step, which is admissible because `‖A‖ ≤ 1`. The trace has no energy
/// columns: `data_term` is `‖Ax − b‖²/(2η²)` and `grad_norm` holds the
/// fixed-point residual `‖x_{k+1} − x_k‖`.
pub fn pnp_ista(
    op: &LinearOperator,
    b: &Signal,
    eta2: f64,
    denoiser: &ScoreBaseline,
    iters: Option<usize>,
    x0: &Signal,
) -> Result<RunTrace> {
    let iters = iters.unwrap_or(PNP_DEFAULT_ITERS);
    if iters == 0 {
        return invalid("PnP-ISTA needs at least one iteration");
    }
    if !(eta2 > 0.0) {
        return invalid("eta² must be positive");
    }
    if !denoiser.is_contractive(CONTRACTION_TOL) {
        return invalid("PnP-ISTA requires a contractive denoiser");
    }
    if denoiser.input_dim() != op.domain().len() {
        return invalid("denoiser dimension does not match operator domain");
    }
    let start = Instant::now();
    let data_term = |x: &Signal| -> Result<f64> {
        let r = op.apply(x)?.sub(b);
        Ok(0.5 * r.dot(&r) / eta2)
    };
    let mut x = x0.clone();
    let mut records = vec![TraceRecord {
        iter: 0,
        f_map: None,
        data_term: data_term(&x)?,
        prior_term: None,
        grad_norm: 0.0,
        elapsed_ms: 0.0,
    }];
    let mut termination = Termination::Completed;
    let mut done = 0;
    for k in 1..=iters {
        let v = x.sub(&op.adjoint(&op.apply(&x)?.sub(b))?);
        let next = v.sub(&denoiser.score(&v)?);
        if !next.is_finite() {
            termination = Termination::Diverged;
            break;
        }
        let moved = next.distance(&x);
        x = next;
        done = k;
        records.push(TraceRecord {
            iter: k,
            f_map: None,
            data_term: data_term(&x)?,
            prior_term: None,
            grad_norm: moved,
            elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
        });
    }
    Ok(RunTrace {
        algorithm: Algorithm::PnpIsta,
        records,
        final_iterate: x,
        termination,
        iterations: done,
        backtracks: 0,
        cg_iterations: 0,
        max_cg_residual: 0.0,
        final_parameter: 1.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::ScoreVariant;
    use crate::nn::{Activation, Dense, MlpParams};
    use ndarray::{Array1, Array2};

    fn baseline(w: Array2<f64>, variant: ScoreVariant) -> ScoreBaseline {
        let n = w.nrows();
        let l = Dense::new(w, Array1::zeros(n), Activation::Identity).unwrap();
        ScoreBaseline::new(variant, MlpParams::new(vec![l], None).unwrap(), 0.1).unwrap()
    }

    #[test]
    fn zero_denoiser_returns_data() {
        let op = LinearOperator::identity(&[3], 1).unwrap();
        let b = Signal::from_vec(vec![1.0, -2.0, 0.5]).unwrap();
        let d = baseline(Array2::zeros((3, 3)), ScoreVariant::Contractive);
        let t = pnp_ista(&op, &b, 0.01, &d, None, &b.zeros_like()).unwrap();
        assert_eq!(t.iterations, PNP_DEFAULT_ITERS);
        assert!(t.final_iterate.distance(&b) < 1e-12);
        assert!(t.records.iter().all(|r| r.f_map.is_none()));
    }

    #[test]
    fn rejects_expansive_denoiser() {
        let op = LinearOperator::identity(&[2], 1).unwrap();
        let b = Signal::from_vec(vec![1.0, 0.0]).unwrap();
        let d = baseline(Array2::eye(2) * 3.0, ScoreVariant::Unconstrained);
        assert!(pnp_ista(&op, &b, 0.01, &d, Some(5), &b).is_err());
    }
}
