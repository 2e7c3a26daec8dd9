//! Randomized invariants of the solvers and of checkpoint storage.

use muse_core::checkpoint::{decode_model, encode_model, load_checkpoint, save_checkpoint};
use muse_core::energy::{EnergyVariant, ModelKind, ModelSpec, ScoreVariant};
use muse_core::gmm::{GmmEnergy, GmmPrior};
use muse_core::operators::LinearOperator;
use muse_core::solvers::conjugate_gradient;
use muse_core::solvers::{
    epnp_gd, epnp_mm, f_map_eval, grad_f_map, mm_update, surrogate_eval, Algorithm, MapProblem,
    SolveConfig,
};
use muse_core::{Result, Rng, Signal};
use ndarray::Array2;
use proptest::prelude::*;

/// Mixture toy seen through an identity or a square dense operator.
struct OracleInstance {
    prior: GmmEnergy,
    op: LinearOperator,
    b: Signal,
    eta: f64,
    sigma: f64,
}

impl OracleInstance {
    fn new(seed: u64, sigma: f64, eta: f64, dense: bool) -> Self {
        let mut rng = Rng::new(seed);
        let op = if dense {
            LinearOperator::dense_gaussian(2, 2, &mut rng).unwrap()
        } else {
            LinearOperator::identity(&[2], 1).unwrap()
        };
        let b = Signal::from_vec(vec![1.5 * rng.normal(), 1.5 * rng.normal()]).unwrap();
        let prior = GmmEnergy::new(GmmPrior::four_cluster_toy(), sigma).unwrap();
        Self {
            prior,
            op,
            b,
            eta,
            sigma,
        }
    }

    fn problem(&self) -> MapProblem<'_> {
        MapProblem::new(&self.op, &self.b, self.eta * self.eta, &self.prior, self.sigma * self.sigma)
            .unwrap()
    }

    fn config(&self, algorithm: Algorithm, epsilon: f64) -> SolveConfig {
        SolveConfig {
            algorithm,
            lipschitz: self.prior.lipschitz_bound().unwrap(),
            epsilon,
            max_iter: 200_000,
            backtracking: false,
            ..SolveConfig::default()
        }
    }
}

fn start(seed: u64) -> Signal {
    let mut rng = Rng::new(seed).fork(1);
    Signal::from_vec(vec![2.0 * rng.normal(), 2.0 * rng.normal()]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn gd_never_increases_the_objective(
        seed in any::<u64>(), sigma in 0.1f64..1.0, eta in 0.02f64..1.0, dense in any::<bool>(),
    ) {
        let inst = OracleInstance::new(seed, sigma, eta, dense);
        let t = epnp_gd(&inst.problem(), &inst.config(Algorithm::Gd, 1e-6), &start(seed)).unwrap();
        prop_assert!(t.is_monotone(1e-12));
        prop_assert_eq!(t.backtracks, 0);
    }

    #[test]
    fn mm_never_increases_the_objective(
        seed in any::<u64>(), sigma in 0.1f64..1.0, eta in 0.02f64..1.0, dense in any::<bool>(),
    ) {
        let inst = OracleInstance::new(seed, sigma, eta, dense);
        let t = epnp_mm(&inst.problem(), &inst.config(Algorithm::Mm, 1e-6), &start(seed)).unwrap();
        prop_assert!(t.is_monotone(1e-12));
    }

    #[test]
    fn mm_step_stays_between_objective_and_surrogate(
        seed in any::<u64>(), sigma in 0.1f64..1.0, eta in 0.02f64..1.0, dense in any::<bool>(),
    ) {
        let inst = OracleInstance::new(seed, sigma, eta, dense);
        let p = inst.problem();
        let cfg = inst.config(Algorithm::Mm, 1e-6);
        let x_n = start(seed);
        let x = mm_update(&p, &cfg, &x_n).unwrap();
        let f_n = f_map_eval(&p, &x_n).unwrap().total;
        let f = f_map_eval(&p, &x).unwrap().total;
        let g = surrogate_eval(&p, cfg.lipschitz, &x, &x_n).unwrap();
        prop_assert!((surrogate_eval(&p, cfg.lipschitz, &x_n, &x_n).unwrap() - f_n).abs() <= 1e-10);
        prop_assert!(f <= g + 1e-10, "f {f} above surrogate {g}");
        prop_assert!(g <= f_n + 1e-10, "surrogate {g} above previous objective {f_n}");
    }

    #[test]
    fn cg_solves_spd_systems(n in 1usize..16, seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let b = Array2::from_shape_fn((n, n), |_| rng.normal());
        let m = b.t().dot(&b) + Array2::<f64>::eye(n) * 0.5;
        let apply = |v: &Signal| -> Result<Signal> {
            Ok(v.with_data(m.dot(&ndarray::ArrayView1::from(v.as_slice())).to_vec()))
        };
        let rhs = Signal::from_vec(rng.normal_vec(n)).unwrap();
        let sol = conjugate_gradient(&apply, &rhs, 1e-10, 200).unwrap();
        prop_assert!(sol.relative_residual <= 1e-10);
        let resid = apply(&sol.x).unwrap().sub(&rhs).norm() / rhs.norm();
        prop_assert!(resid <= 1e-9);
    }

    #[test]
    fn checkpoints_round_trip_bit_exactly(
        code in 0u8..5, width in 1usize..12, depth in 1usize..4, dim in 1usize..6,
        sigma in 1e-3f64..2.0, seed in any::<u64>(),
    ) {
        let kind = ModelKind::from_code(code).unwrap();
        let model = ModelSpec::new(kind, width, depth).init(dim, sigma, seed).unwrap();
        let bytes = encode_model(&model);
        let back = decode_model(&bytes).unwrap();
        prop_assert_eq!(encode_model(&back), bytes);
        prop_assert_eq!(back.kind(), kind);
        prop_assert_eq!(back.sigma().to_bits(), sigma.to_bits());
        let flat: Vec<u64> = back.net().to_flat().iter().map(|v| v.to_bits()).collect();
        let orig: Vec<u64> = model.net().to_flat().iter().map(|v| v.to_bits()).collect();
        prop_assert_eq!(flat, orig);
    }
}

#[test]
fn checkpoint_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for kind in [
        ModelKind::Energy(EnergyVariant::E1),
        ModelKind::Energy(EnergyVariant::E3),
        ModelKind::Score(ScoreVariant::Contractive),
    ] {
        let model = ModelSpec::new(kind, 8, 2).init(3, 0.2, 7).unwrap();
        let path = dir.path().join(format!("{}.ckpt", kind.name()));
        save_checkpoint(&model, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), encode_model(&back));
    }
}

#[test]
fn corrupted_checkpoints_are_rejected() {
    let model = ModelSpec::new(ModelKind::Energy(EnergyVariant::E2), 4, 2)
        .init(2, 0.1, 1)
        .unwrap();
    let bytes = encode_model(&model);
    assert!(decode_model(&bytes[..bytes.len() - 3]).is_err());
    let mut bad_magic = bytes.clone();
    bad_magic[0] ^= 0xff;
    assert!(decode_model(&bad_magic).is_err());
    let mut trailing = bytes;
    trailing.push(0);
    assert!(decode_model(&trailing).is_err());
}

#[test]
fn terminal_gradient_is_small_on_oracle_instances() {
    let mut worst = 0.0_f64;
    for seed in 0..12 {
        for alg in [Algorithm::Gd, Algorithm::Mm] {
            let inst = OracleInstance::new(seed, 0.2 + 0.05 * seed as f64, 0.1, seed % 2 == 1);
            let p = inst.problem();
            let eps = 1e-10;
            let x0 = start(seed);
            let t = match alg {
                Algorithm::Gd => epnp_gd(&p, &inst.config(alg, eps), &x0),
                _ => epnp_mm(&p, &inst.config(alg, eps), &x0),
            }
            .unwrap();
            let g0 = grad_f_map(&p, &x0).unwrap().norm();
            let g = grad_f_map(&p, &t.final_iterate).unwrap().norm();
            worst = worst.max(g / (1.0 + g0));
        }
    }
    println!("worst terminal gradient ratio {worst:e}");
    assert!(worst <= 1e-3, "{worst:e}");
}
