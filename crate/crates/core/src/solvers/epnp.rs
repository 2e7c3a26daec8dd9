//! Gradient descent and majorize-minimize on the MAP objective.

use std::time::Instant;

use super::{
    conjugate_gradient, default_step_size, evaluate, Algorithm, CgSolution, Evaluation,
    MapProblem, RunTrace, SolveConfig, Termination, TraceRecord, MAX_BACKTRACKS,
};
use crate::error::{invalid, Result};
use crate::tensor::Signal;

fn record(iter: usize, ev: &Evaluation, start: &Instant) -> TraceRecord {
    TraceRecord {
        iter,
        f_map: Some(ev.f.total),
        data_term: ev.f.data,
        prior_term: Some(ev.f.prior),
        grad_norm: ev.grad.norm(),
        elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
    }
}

fn finite(ev: &Evaluation) -> bool {
    ev.f.total.is_finite() && ev.grad.is_finite()
}

/// Outcome of one attempted update.
enum Step {
    Accept(Box<Evaluation>, Signal),
    Diverged,
    Stalled,
}

/// Shared loop: `propose(param, x_n, eval_n)` returns a candidate iterate;
/// `relax` loosens the parameter after an objective increase.
fn descend(
    p: &MapProblem,
    cfg: &SolveConfig,
    x0: &Signal,
    algorithm: Algorithm,
    mut param: f64,
    mut propose: impl FnMut(f64, &Signal, &Evaluation) -> Result<Signal>,
    relax: impl Fn(f64) -> f64,
) -> Result<RunTrace> {
    cfg.validate()?;
    let start = Instant::now();
    let mut x = x0.clone();
    let mut cur = evaluate(p, &x)?;
    let mut trace = RunTrace {
        algorithm,
        records: vec![record(0, &cur, &start)],
        final_iterate: x.clone(),
        termination: Termination::MaxIterations,
        iterations: 0,
        backtracks: 0,
        cg_iterations: 0,
        max_cg_residual: 0.0,
        final_parameter: param,
    };
    if !finite(&cur) {
        trace.termination = Termination::Diverged;
        return Ok(trace);
    }
    for n in 1..=cfg.max_iter {
        let mut tries = 0;
        let step = loop {
            let cand = propose(param, &x, &cur)?;
            if !cand.is_finite() {
                break Step::Diverged;
            }
            let ev = evaluate(p, &cand)?;
            if !finite(&ev) {
                break Step::Diverged;
            }
            if cfg.backtracking && ev.f.total > cur.f.total {
                if tries == MAX_BACKTRACKS {
                    break Step::Stalled;
                }
                tries += 1;
                trace.backtracks += 1;
                param = relax(param);
                continue;
            }
            break Step::Accept(Box::new(ev), cand);
        };
        match step {
            Step::Diverged => {
                trace.termination = Termination::Diverged;
                break;
            }
            Step::Stalled => {
                trace.termination = Termination::Stalled;
                break;
            }
            Step::Accept(ev, cand) => {
                let change = (ev.f.total - cur.f.total).abs();
                let converged = change <= cur.f.total.abs() * cfg.epsilon;
                x = cand;
                cur = *ev;
                trace.iterations = n;
                trace.records.push(record(n, &cur, &start));
                if converged {
                    trace.termination = Termination::Converged;
                    break;
                }
            }
        }
    }
    trace.final_iterate = x;
    trace.final_parameter = param;
    Ok(trace)
}

/// `x_{n+1} = x_n − γ ∇f(x_n)` with `γ = 1/(1/η² + L/σ²)` unless overridden.
pub fn epnp_gd(p: &MapProblem, cfg: &SolveConfig, x0: &Signal) -> Result<RunTrace> {
    if cfg.algorithm != Algorithm::Gd {
        return invalid("epnp_gd requires algorithm = gd");
    }
    cfg.validate()?;
    let gamma = match cfg.step_override {
        Some(g) => g,
        None => default_step_size(p.eta2(), p.sigma2(), cfg.lipschitz)?,
    };
    descend(
        p,
        cfg,
        x0,
        Algorithm::Gd,
        gamma,
        |step, x, ev| Ok(x.add_scaled(-step, &ev.grad)),
        |step| step / 2.0,
    )
}

fn mm_solve(
    p: &MapProblem,
    cfg: &SolveConfig,
    lipschitz: f64,
    x_n: &Signal,
    h_n: &Signal,
) -> Result<CgSolution> {
    let w = p.data_weight();
    let c = lipschitz / p.sigma2();
    let rhs = p
        .adjoint_image()?
        .scaled(w)
        .add_scaled(1.0 / p.sigma2(), &x_n.scaled(lipschitz).sub(h_n));
    let apply = |v: &Signal| -> Result<Signal> { Ok(p.op.normal(v)?.scaled(w).add_scaled(c, v)) };
    conjugate_gradient(&apply, &rhs, cfg.cg_tol, cfg.cg_max_iter)
}

/// Minimizer of the quadratic majorizer at `x_n`:
/// `(w A^H A + L/σ² I)^{-1} (w A^H b + (L x_n − H(x_n))/σ²)`, by CG.
pub fn mm_update(p: &MapProblem, cfg: &SolveConfig, x_n: &Signal) -> Result<Signal> {
    cfg.validate()?;
    p.check_point(x_n)?;
    let h_n = p.prior.score(x_n)?;
    Ok(mm_solve(p, cfg, cfg.lipschitz, x_n, &h_n)?.x)
}

/// Repeated [`mm_update`] with the same stopping rule as gradient descent.
pub fn epnp_mm(p: &MapProblem, cfg: &SolveConfig, x0: &Signal) -> Result<RunTrace> {
    if cfg.algorithm != Algorithm::Mm {
        return invalid("epnp_mm requires algorithm = mm");
    }
    let mut cg_iters = 0;
    let mut cg_max_res = 0.0_f64;
    let mut trace = descend(
        p,
        cfg,
        x0,
        Algorithm::Mm,
        cfg.lipschitz,
        |l, x, ev| {
            let sol = mm_solve(p, cfg, l, x, &ev.score)?;
            cg_iters += sol.iterations;
            cg_max_res = cg_max_res.max(sol.relative_residual);
            Ok(sol.x)
        },
        |l| 2.0 * l,
    )?;
    trace.cg_iterations = cg_iters;
    trace.max_cg_residual = cg_max_res;
    Ok(trace)
}

/// Dispatch to GD or MM according to `cfg.algorithm`.
pub fn solve(p: &MapProblem, cfg: &SolveConfig, x0: &Signal) -> Result<RunTrace> {
    match cfg.algorithm {
        Algorithm::Gd => epnp_gd(p, cfg, x0),
        Algorithm::Mm => epnp_mm(p, cfg, x0),
        Algorithm::PnpIsta => invalid("PnP-ISTA runs on a score denoiser, not a MAP problem"),
    }
}

#[cfg(test)]
mod tests {
    use super::super::{f_map_eval, surrogate_eval};
    use super::*;
    use crate::energy::{EnergyModel, EnergyVariant};
    use crate::gmm::{GmmEnergy, GmmPrior};
    use crate::nn::{Activation, Dense, MlpParams};
    use crate::operators::LinearOperator;
    use ndarray::{array, Array1, Array2};

    fn quadratic_prior() -> EnergyModel {
        let l = Dense::new(Array2::zeros((2, 2)), Array1::zeros(2), Activation::Identity).unwrap();
        EnergyModel::new(EnergyVariant::E1, MlpParams::new(vec![l], None).unwrap(), 1.0).unwrap()
    }

    fn cfg(algorithm: Algorithm) -> SolveConfig {
        SolveConfig {
            algorithm,
            epsilon: 1e-14,
            backtracking: false,
            ..SolveConfig::default()
        }
    }

    #[test]
    fn quadratic_closed_form() {
        let op = LinearOperator::identity(&[2], 1).unwrap();
        let b = Signal::from_vec(vec![2.0, 0.0]).unwrap();
        let prior = quadratic_prior();
        let p = MapProblem::new(&op, &b, 1.0, &prior, 1.0).unwrap();
        let x0 = Signal::from_vec(vec![0.0, 0.0]).unwrap();
        let target = Signal::from_vec(vec![1.0, 0.0]).unwrap();

        let gd = epnp_gd(&p, &cfg(Algorithm::Gd), &x0).unwrap();
        assert!(gd.final_iterate.distance(&target) < 1e-6);
        let f = gd.objectives();
        assert!(f.windows(2).all(|w| w[1] <= w[0]));

        let mm = epnp_mm(&p, &cfg(Algorithm::Mm), &x0).unwrap();
        assert!(mm.final_iterate.distance(&target) < 1e-6);
        assert!(mm.iterations <= 3, "{}", mm.iterations);

        let any = Signal::from_vec(vec![-5.0, 3.0]).unwrap();
        let one = mm_update(&p, &cfg(Algorithm::Mm), &any).unwrap();
        assert!(one.distance(&target) < 1e-10);
    }

    #[test]
    fn start_at_stationary_point() {
        let op = LinearOperator::identity(&[2], 1).unwrap();
        let b = Signal::from_vec(vec![2.0, 0.0]).unwrap();
        let prior = quadratic_prior();
        let p = MapProblem::new(&op, &b, 1.0, &prior, 1.0).unwrap();
        let x0 = Signal::from_vec(vec![1.0, 0.0]).unwrap();
        let gd = epnp_gd(&p, &cfg(Algorithm::Gd), &x0).unwrap();
        assert!(gd.iterations <= 2);
    }

    #[test]
    fn diagonal_dense_mm_matches_direct_solve() {
        let a = array![[0.5, 0.0], [0.0, 1.0]];
        let op = LinearOperator::dense(a, &mut crate::Rng::new(0)).unwrap();
        let a = crate::operators::dense_matrix(&op).unwrap();
        let b = Signal::from_vec(vec![1.0, -2.0]).unwrap();
        let prior = quadratic_prior();
        let (eta2, sigma2, l) = (0.3, 0.7, 1.5);
        let p = MapProblem::new(&op, &b, eta2, &prior, sigma2).unwrap();
        let xn = Signal::from_vec(vec![0.2, 0.4]).unwrap();
        let c = SolveConfig {
            lipschitz: l,
            ..cfg(Algorithm::Mm)
        };
        let x = mm_update(&p, &c, &xn).unwrap();
        // H(x) = x for the zero-net E1
        for i in 0..2 {
            let m = a[[i, i]] * a[[i, i]] / eta2 + l / sigma2;
            let rhs = a[[i, i]] * b.as_slice()[i] / eta2 + (l - 1.0) * xn.as_slice()[i] / sigma2;
            assert!((x.as_slice()[i] - rhs / m).abs() < 1e-10);
        }
    }

    #[test]
    fn oracle_prior_reaches_stationarity() {
        let prior = GmmEnergy::new(GmmPrior::four_cluster_toy(), 0.1).unwrap();
        let op = LinearOperator::identity(&[2], 1).unwrap();
        let b = Signal::from_vec(vec![0.9, 1.2]).unwrap();
        let p = MapProblem::new(&op, &b, 0.01, &prior, 0.01).unwrap();
        let c = SolveConfig {
            lipschitz: prior.curvature_bound(),
            epsilon: 1e-12,
            ..cfg(Algorithm::Gd)
        };
        let x0 = Signal::from_vec(vec![1.1, 0.9]).unwrap();
        let t = epnp_gd(&p, &c, &x0).unwrap();
        assert_eq!(t.termination, Termination::Converged);
        let g = super::super::grad_f_map(&p, &t.final_iterate).unwrap();
        assert!(g.norm() < 1e-5, "{}", g.norm());
    }

    #[test]
    fn mm_surrogate_touches_and_majorizes() {
        let prior = GmmEnergy::new(GmmPrior::four_cluster_toy(), 0.3).unwrap();
        let op = LinearOperator::dense_gaussian(2, 2, &mut crate::Rng::new(4)).unwrap();
        let b = Signal::from_vec(vec![0.4, -0.2]).unwrap();
        let p = MapProblem::new(&op, &b, 0.05, &prior, 0.09).unwrap();
        let c = SolveConfig {
            lipschitz: prior.curvature_bound(),
            epsilon: 1e-12,
            ..cfg(Algorithm::Mm)
        };
        let t = epnp_mm(&p, &c, &Signal::from_vec(vec![-1.0, 1.5]).unwrap()).unwrap();
        assert!(t.is_monotone(1e-12));
        let xn = Signal::from_vec(vec![0.3, 0.1]).unwrap();
        let f = f_map_eval(&p, &xn).unwrap().total;
        assert!((surrogate_eval(&p, c.lipschitz, &xn, &xn).unwrap() - f).abs() < 1e-12);
        let next = mm_update(&p, &c, &xn).unwrap();
        let g = surrogate_eval(&p, c.lipschitz, &next, &xn).unwrap();
        assert!(g >= f_map_eval(&p, &next).unwrap().total - 1e-10);
        assert!(g <= f + 1e-12);
    }

    #[test]
    fn wrong_algorithm_tag() {
        let op = LinearOperator::identity(&[2], 1).unwrap();
        let b = Signal::from_vec(vec![2.0, 0.0]).unwrap();
        let prior = quadratic_prior();
        let p = MapProblem::new(&op, &b, 1.0, &prior, 1.0).unwrap();
        assert!(epnp_gd(&p, &cfg(Algorithm::Mm), &b).is_err());
        assert!(solve(&p, &cfg(Algorithm::PnpIsta), &b).is_err());
    }
}
