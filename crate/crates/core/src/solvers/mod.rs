//! MAP reconstruction with a learned energy prior.
//!
//! ```text
//! f(x) = w ‖Ax − b‖² / 2 + E(x) / σ²        w = 1 / η²
//! ∇f(x) = w A^H (Ax − b) + H(x) / σ²
//! ```
//!
//! Gradient descent and majorize-minimize both decrease `f` monotonically
//! when `L` upper-bounds the Lipschitz constant of `H`.

mod cg;
mod epnp;
mod muse;
mod pnp;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use cg::{conjugate_gradient, CgSolution};
pub use epnp::{epnp_gd, epnp_mm, mm_update, solve};
pub use muse::{muse_solve, MuseSchedule, MuseStage};
pub use pnp::{pnp_ista, PNP_DEFAULT_ITERS};

use crate::energy::Prior;
use crate::error::{invalid, MuseError, Result};
use crate::io::fmt_sig;
use crate::operators::LinearOperator;
use crate::tensor::Signal;

/// A MAP problem `min_x w ‖Ax − b‖² / 2 + E(x) / σ²`.
#[derive(Clone, Copy)]
pub struct MapProblem<'a> {
    pub op: &'a LinearOperator,
    pub b: &'a Signal,
    pub prior: &'a dyn Prior,
    data_weight: f64,
    sigma2: f64,
}

impl<'a> MapProblem<'a> {
    pub fn new(
        op: &'a LinearOperator,
        b: &'a Signal,
        eta2: f64,
        prior: &'a dyn Prior,
        sigma2: f64,
    ) -> Result<Self> {
        if !(eta2 > 0.0 && eta2.is_finite()) {
            return invalid(format!(
                "eta² must be positive (got {eta2}); use with_data_weight for noiseless data"
            ));
        }
        Self::with_data_weight(op, b, 1.0 / eta2, prior, sigma2)
    }

    /// Use an explicit data weight `w` in place of `1 / η²`.
    pub fn with_data_weight(
        op: &'a LinearOperator,
        b: &'a Signal,
        data_weight: f64,
        prior: &'a dyn Prior,
        sigma2: f64,
    ) -> Result<Self> {
        if !(data_weight > 0.0 && data_weight.is_finite()) {
            return invalid("data weight must be positive and finite");
        }
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return invalid(format!("sigma² must be positive, got {sigma2}"));
        }
        let range = op.range();
        if b.len() != range.len() || b.channels() != range.channels {
            return invalid("measurements do not match the operator range");
        }
        if prior.input_dim() != op.domain().len() {
            return invalid(format!(
                "prior dimension {} does not match operator domain {}",
                prior.input_dim(),
                op.domain().len()
            ));
        }
        Ok(Self {
            op,
            b,
            prior,
            data_weight,
            sigma2,
        })
    }

    pub fn data_weight(&self) -> f64 {
        self.data_weight
    }

    pub fn eta2(&self) -> f64 {
        1.0 / self.data_weight
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// `A^H b`, the default starting point.
    pub fn adjoint_image(&self) -> Result<Signal> {
        self.op.adjoint(self.b)
    }

    pub fn check_point(&self, x: &Signal) -> Result<()> {
        let d = self.op.domain();
        if x.len() != d.len() || x.channels() != d.channels {
            return invalid("iterate does not match the operator domain");
        }
        Ok(())
    }
}

/// Objective split into its two terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FMap {
    pub total: f64,
    pub data: f64,
    pub prior: f64,
}

/// Objective, gradient and prior score at one point.
#[derive(Debug, Clone)]
pub(crate) struct Evaluation {
    pub f: FMap,
    pub score: Signal,
    pub grad: Signal,
}

pub(crate) fn evaluate(p: &MapProblem, x: &Signal) -> Result<Evaluation> {
    p.check_point(x)?;
    let resid = p.op.apply(x)?.sub(p.b);
    let (energy, score) = p.prior.energy_and_score(x)?;
    let data = 0.5 * p.data_weight * resid.dot(&resid);
    let prior = energy / p.sigma2;
    let grad = p
        .op
        .adjoint(&resid)?
        .scaled(p.data_weight)
        .add_scaled(1.0 / p.sigma2, &score);
    Ok(Evaluation {
        f: FMap {
            total: data + prior,
            data,
            prior,
        },
        score,
        grad,
    })
}

pub fn f_map_eval(p: &MapProblem, x: &Signal) -> Result<FMap> {
    p.check_point(x)?;
    let resid = p.op.apply(x)?.sub(p.b);
    let data = 0.5 * p.data_weight * resid.dot(&resid);
    let prior = p.prior.energy(x)? / p.sigma2;
    Ok(FMap {
        total: data + prior,
        data,
        prior,
    })
}

pub fn grad_f_map(p: &MapProblem, x: &Signal) -> Result<Signal> {
    Ok(evaluate(p, x)?.grad)
}

/// `γ = 1 / (1/η² + L/σ²)`.
pub fn default_step_size(eta2: f64, sigma2: f64, lipschitz: f64) -> Result<f64> {
    if !(eta2 > 0.0 && sigma2 > 0.0 && lipschitz > 0.0) {
        return invalid("step size needs positive eta², sigma² and L");
    }
    Ok(1.0 / (1.0 / eta2 + lipschitz / sigma2))
}

/// Quadratic majorizer of `f` built at `x_n`:
/// `w‖Ax − b‖²/2 + E(x_n)/σ² + L‖x − x_n‖²/(2σ²) + ⟨H(x_n), x − x_n⟩/σ²`.
pub fn surrogate_eval(p: &MapProblem, lipschitz: f64, x: &Signal, x_n: &Signal) -> Result<f64> {
    p.check_point(x)?;
    let (e_n, h_n) = p.prior.energy_and_score(x_n)?;
    surrogate_with(p, lipschitz, x, x_n, e_n, &h_n)
}

pub(crate) fn surrogate_with(
    p: &MapProblem,
    lipschitz: f64,
    x: &Signal,
    x_n: &Signal,
    e_n: f64,
    h_n: &Signal,
) -> Result<f64> {
    let resid = p.op.apply(x)?.sub(p.b);
    let dx = x.sub(x_n);
    Ok(0.5 * p.data_weight * resid.dot(&resid)
        + (e_n + 0.5 * lipschitz * dx.dot(&dx) + h_n.dot(&dx)) / p.sigma2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Gd,
    Mm,
    PnpIsta,
}

impl Algorithm {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "gd" => Some(Self::Gd),
            "mm" => Some(Self::Mm),
            "pnp-ista" => Some(Self::PnpIsta),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Gd => "gd",
            Self::Mm => "mm",
            Self::PnpIsta => "pnp-ista",
        }
    }
}

/// `mm` when `L η² / σ² < threshold` (1 by default), `gd` otherwise.
pub fn algorithm_select(p: &MapProblem, lipschitz: f64) -> Algorithm {
    algorithm_select_with(p, lipschitz, 1.0)
}

pub fn algorithm_select_with(p: &MapProblem, lipschitz: f64, threshold: f64) -> Algorithm {
    if lipschitz * p.eta2() / p.sigma2 < threshold {
        Algorithm::Mm
    } else {
        Algorithm::Gd
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveConfig {
    pub algorithm: Algorithm,
    /// Lipschitz constant `L` of the score.
    pub lipschitz: f64,
    pub step_override: Option<f64>,
    /// Relative stopping threshold `ε`.
    pub epsilon: f64,
    pub max_iter: usize,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    /// Halve the step (GD) or double `L` (MM) when the objective rises.
    pub backtracking: bool,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Gd,
            lipschitz: 1.0,
            step_override: None,
            epsilon: 1e-5,
            max_iter: 10_000,
            cg_tol: 1e-10,
            cg_max_iter: 200,
            backtracking: true,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || self.max_iter == 0 {
            return invalid("epsilon must be positive and max_iter at least 1");
        }
        if !(self.lipschitz > 0.0 && self.lipschitz.is_finite()) {
            return invalid("L must be positive and finite");
        }
        if let Some(s) = self.step_override {
            if !(s > 0.0 && s.is_finite()) {
                return invalid("step override must be positive");
            }
        }
        if !(self.cg_tol > 0.0) || self.cg_max_iter == 0 {
            return invalid("cg_tol must be positive and cg_max_iter at least 1");
        }
        Ok(())
    }
}

/// Backtracking retries before a step is abandoned.
pub const MAX_BACKTRACKS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    /// Relative objective change fell below `ε`.
    Converged,
    MaxIterations,
    /// The objective or iterate became non-finite.
    Diverged,
    /// Backtracking could not find a non-increasing step.
    Stalled,
    /// Fixed iteration budget used up (PnP-ISTA).
    Completed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    /// Absent for methods without an energy.
    pub f_map: Option<f64>,
    pub data_term: f64,
    pub prior_term: Option<f64>,
    pub grad_norm: f64,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub algorithm: Algorithm,
    pub records: Vec<TraceRecord>,
    pub final_iterate: Signal,
    pub termination: Termination,
    /// Number of updates taken.
    pub iterations: usize,
    pub backtracks: usize,
    pub cg_iterations: usize,
    /// Largest CG relative residual over all MM updates.
    pub max_cg_residual: f64,
    /// Step size (GD) or `L` (MM) in force at the end.
    pub final_parameter: f64,
}

impl RunTrace {
    pub fn final_objective(&self) -> Option<f64> {
        self.records.last().and_then(|r| r.f_map)
    }

    pub fn objectives(&self) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.f_map).collect()
    }

    /// True when every step satisfies `f_{n+1} ≤ f_n + rel · |f_n|`.
    pub fn is_monotone(&self, rel: f64) -> bool {
        self.objectives().windows(2).all(|w| w[1] <= w[0] + rel * w[0].abs())
    }

    /// CSV with header `iter,f_map,data_term,prior_term,grad_norm,elapsed_ms`.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(fmt_sig).unwrap_or_default();
        let mut out = String::from("iter,f_map,data_term,prior_term,grad_norm,elapsed_ms\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.iter,
                opt(r.f_map),
                fmt_sig(r.data_term),
                opt(r.prior_term),
                fmt_sig(r.grad_norm),
                fmt_sig(r.elapsed_ms)
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(self.to_csv().as_bytes()))
            .map_err(|e| MuseError::io(path, e))
    }
}
