//! Multiscale solves: schedule validation, warm starts and agreement with a
//! plain solve when there is one stage.

use muse_core::energy::Prior;
use muse_core::gmm::{GmmEnergy, GmmPrior};
use muse_core::operators::LinearOperator;
use muse_core::solvers::{
    algorithm_select, f_map_eval, muse_solve, solve, Algorithm, MapProblem, MuseSchedule, MuseStage,
    SolveConfig,
};
use muse_core::Signal;

fn stage(sigma: f64, prior: &dyn Prior, lipschitz: f64) -> MuseStage<'_> {
    MuseStage {
        eta: sigma,
        sigma,
        epsilon: 1e-8,
        prior,
        lipschitz,
        algorithm: None,
    }
}

fn priors(sigmas: &[f64]) -> Vec<GmmEnergy> {
    sigmas
        .iter()
        .map(|&s| GmmEnergy::new(GmmPrior::four_cluster_toy(), s).unwrap())
        .collect()
}

fn base() -> SolveConfig {
    SolveConfig {
        backtracking: false,
        max_iter: 100_000,
        ..SolveConfig::default()
    }
}

#[test]
fn schedules_must_decrease_strictly() {
    let p = priors(&[0.5]);
    let l = p[0].lipschitz_bound().unwrap();
    assert!(MuseSchedule::new(vec![]).is_err());
    assert!(MuseSchedule::new(vec![stage(0.2, &p[0], l), stage(0.5, &p[0], l)]).is_err());
    assert!(MuseSchedule::new(vec![stage(0.2, &p[0], l), stage(0.2, &p[0], l)]).is_err());
    let mut pnp = stage(0.2, &p[0], l);
    pnp.algorithm = Some(Algorithm::PnpIsta);
    assert!(MuseSchedule::new(vec![pnp]).is_err());
    let mut bad = stage(0.2, &p[0], l);
    bad.epsilon = 0.0;
    assert!(MuseSchedule::new(vec![bad]).is_err());
}

#[test]
fn paired_schedule_restores_the_measurement_noise_last() {
    let p = priors(&[1.0, 0.5, 0.2]);
    let scales = p
        .iter()
        .zip([1.0, 0.5, 0.2])
        .map(|(q, s)| (s, 1e-6, q as &dyn Prior, q.lipschitz_bound().unwrap()))
        .collect::<Vec<_>>();
    let etas = |s: &MuseSchedule| s.stages().iter().map(|st| st.eta).collect::<Vec<_>>();
    let known = MuseSchedule::paired(scales.clone(), Some(0.05)).unwrap();
    assert_eq!(etas(&known), vec![1.0, 0.5, 0.05]);
    let unknown = MuseSchedule::paired(scales.clone(), None).unwrap();
    assert_eq!(etas(&unknown), vec![1.0, 0.5, 0.2]);
    let larger = MuseSchedule::paired(scales, Some(0.3)).unwrap();
    assert_eq!(etas(&larger), vec![1.0, 0.5, 0.2]);
}

#[test]
fn single_stage_matches_a_plain_solve() {
    let p = priors(&[0.3]);
    let l = p[0].lipschitz_bound().unwrap();
    let op = LinearOperator::identity(&[2], 1).unwrap();
    let b = Signal::from_vec(vec![0.7, -1.2]).unwrap();
    let schedule = MuseSchedule::new(vec![stage(0.3, &p[0], l)]).unwrap();
    let (x, traces) = muse_solve(&schedule, &op, &b, &base(), &b).unwrap();
    let problem = MapProblem::new(&op, &b, 0.09, &p[0], 0.09).unwrap();
    let cfg = SolveConfig {
        algorithm: algorithm_select(&problem, l),
        lipschitz: l,
        epsilon: 1e-8,
        ..base()
    };
    let direct = solve(&problem, &cfg, &b).unwrap();
    assert_eq!(traces.len(), 1);
    assert_eq!(x, direct.final_iterate);
    assert_eq!(traces[0].iterations, direct.iterations);
}

#[test]
fn each_stage_starts_where_the_last_one_stopped() {
    let sigmas = [1.0, 0.5, 0.2, 0.1];
    let p = priors(&sigmas);
    let stages = sigmas
        .iter()
        .zip(&p)
        .map(|(&s, q)| stage(s, q, q.lipschitz_bound().unwrap()))
        .collect();
    let schedule = MuseSchedule::new(stages).unwrap();
    let op = LinearOperator::identity(&[2], 1).unwrap();
    let b = Signal::from_vec(vec![0.8, 1.3]).unwrap();
    let x0 = Signal::from_vec(vec![-2.0, -2.0]).unwrap();
    let (x, traces) = muse_solve(&schedule, &op, &b, &base(), &x0).unwrap();
    assert_eq!(traces.len(), 4);
    for (i, t) in traces.iter().enumerate() {
        assert!(t.is_monotone(1e-12), "stage {i}");
        if i > 0 {
            // The first record of a stage is its starting point: the previous
            // stage's output evaluated under the new objective.
            let st = &schedule.stages()[i];
            let prev = &traces[i - 1].final_iterate;
            let p = MapProblem::new(&op, &b, st.eta * st.eta, st.prior, st.sigma * st.sigma).unwrap();
            let f0 = f_map_eval(&p, prev).unwrap().total;
            assert_eq!(t.records[0].f_map, Some(f0));
        }
    }
    assert_eq!(&x, &traces[3].final_iterate);
    // The data sit next to the (1, 1) cluster, so the final estimate does too.
    assert!(x.as_slice()[0] > 0.5 && x.as_slice()[1] > 0.5, "{:?}", x.as_slice());
}
