//! Multiscale energy reconstruction: solve a sequence of MAP problems from
//! coarse to fine prior scale, each warm-started at the previous solution.

use super::{algorithm_select, solve, Algorithm, MapProblem, RunTrace, SolveConfig, Termination};
use crate::energy::Prior;
use crate::error::{invalid, MuseError, Result};
use crate::operators::LinearOperator;
use crate::tensor::Signal;

#[derive(Clone, Copy)]
pub struct MuseStage<'a> {
    pub eta: f64,
    pub sigma: f64,
    pub epsilon: f64,
    pub prior: &'a dyn Prior,
    /// Lipschitz constant of this stage's score.
    pub lipschitz: f64,
    /// Forces GD or MM instead of the automatic choice.
    pub algorithm: Option<Algorithm>,
}

#[derive(Clone)]
pub struct MuseSchedule<'a> {
    stages: Vec<MuseStage<'a>>,
}

impl<'a> MuseSchedule<'a> {
    pub fn new(stages: Vec<MuseStage<'a>>) -> Result<Self> {
        if stages.is_empty() {
            return invalid("schedule needs at least one stage");
        }
        if stages.windows(2).any(|w| !(w[1].sigma < w[0].sigma)) {
            return invalid("stage sigmas must be strictly decreasing");
        }
        for s in &stages {
            if !(s.eta > 0.0 && s.sigma > 0.0 && s.epsilon > 0.0 && s.lipschitz > 0.0) {
                return invalid("stage eta, sigma, epsilon and L must be positive");
            }
            if s.algorithm == Some(Algorithm::PnpIsta) {
                return invalid("stages run GD or MM");
            }
        }
        Ok(Self { stages })
    }

    /// Stages with `η_i = σ_i`; when the measurement noise `eta` is known and
    /// below the last scale, the last stage uses it instead.
    pub fn paired(
        scales: Vec<(f64, f64, &'a dyn Prior, f64)>,
        measurement_eta: Option<f64>,
    ) -> Result<Self> {
        let n = scales.len();
        let stages = scales
            .into_iter()
            .enumerate()
            .map(|(i, (sigma, epsilon, prior, lipschitz))| {
                let eta = match measurement_eta {
                    Some(e) if i + 1 == n && e > 0.0 && e < sigma => e,
                    _ => sigma,
                };
                MuseStage {
                    eta,
                    sigma,
                    epsilon,
                    prior,
                    lipschitz,
                    algorithm: None,
                }
            })
            .collect();
        Self::new(stages)
    }

    pub fn stages(&self) -> &[MuseStage<'a>] {
        &self.stages
    }
}

/// Run every stage in order. Returns the last stage's iterate and one trace
/// per stage.
pub fn muse_solve(
    schedule: &MuseSchedule,
    op: &LinearOperator,
    b: &Signal,
    base: &SolveConfig,
    x0: &Signal,
) -> Result<(Signal, Vec<RunTrace>)> {
    let mut x = x0.clone();
    let mut traces = Vec::with_capacity(schedule.stages.len());
    for (i, stage) in schedule.stages.iter().enumerate() {
        let wrap = |e: MuseError| MuseError::Stage {
            stage: i,
            source: Box::new(e),
        };
        let p = MapProblem::new(op, b, stage.eta * stage.eta, stage.prior, stage.sigma * stage.sigma)
            .map_err(wrap)?;
        let cfg = SolveConfig {
            algorithm: stage
                .algorithm
                .unwrap_or_else(|| algorithm_select(&p, stage.lipschitz)),
            lipschitz: stage.lipschitz,
            epsilon: stage.epsilon,
            ..base.clone()
        };
        let trace = solve(&p, &cfg, &x).map_err(wrap)?;
        if trace.termination == Termination::Diverged {
            return Err(wrap(MuseError::Diverged {
                iteration: trace.iterations + 1,
            }));
        }
        x = trace.final_iterate.clone();
        traces.push(trace);
    }
    Ok((x, traces))
}
