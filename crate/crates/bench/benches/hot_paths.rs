//! Score evaluation, DSM gradients, operators and solver iterations.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

use muse_core::dsm::dsm_loss;
use muse_core::energy::{EnergyVariant, ModelKind, ModelSpec, Prior};
use muse_core::gmm::{GmmEnergy, GmmPrior};
use muse_core::operators::{generate_vd_mask, LinearOperator, MaskSpec};
use muse_core::solvers::{conjugate_gradient, epnp_gd, Algorithm, MapProblem, SolveConfig};
use muse_core::{Result, Rng, Signal};

fn scores(c: &mut Criterion) {
    let mut rng = Rng::new(1);
    let x = Signal::from_vec(rng.normal_vec(64)).unwrap();
    for variant in [EnergyVariant::E1, EnergyVariant::E2, EnergyVariant::E3] {
        let kind = ModelKind::Energy(variant);
        let model = ModelSpec::new(kind, 128, 4).init(64, 0.1, 2).unwrap();
        let m = model.as_energy().unwrap().clone();
        c.bench_function(&format!("energy_and_score/{}", kind.name()), |b| {
            b.iter(|| m.energy_and_score(black_box(&x)).unwrap())
        });
    }
}

fn dsm_gradients(c: &mut Criterion) {
    let mut rng = Rng::new(3);
    let batch: Vec<Signal> = (0..128)
        .map(|_| Signal::from_vec(rng.normal_vec(2)).unwrap())
        .collect();
    let model = ModelSpec::new(ModelKind::Energy(EnergyVariant::E1), 128, 4)
        .init(2, 0.2, 4)
        .unwrap();
    c.bench_function("dsm_loss/e1_batch128", |b| {
        b.iter_batched(
            || Rng::new(5),
            |mut r| dsm_loss(&model, black_box(&batch), 0.2, &mut r).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

fn operators(c: &mut Criterion) {
    let mask = generate_vd_mask(&MaskSpec {
        num_lines: 64,
        acceleration: 4.0,
        center_fraction: 0.08,
        seed: 1,
    })
    .unwrap();
    let op = LinearOperator::masked_dft(64, 64, mask).unwrap();
    let x = Signal::new(Rng::new(2).normal_vec(64 * 64 * 2), vec![64, 64], 2).unwrap();
    c.bench_function("masked_dft/normal_64x64", |b| {
        b.iter(|| op.normal(black_box(&x)).unwrap())
    });

    let n = 64;
    let mut rng = Rng::new(7);
    let m: Vec<f64> = rng.normal_vec(n * n);
    let apply = |v: &Signal| -> Result<Signal> {
        let s = v.as_slice();
        let mut out = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for k in 0..n {
                    acc += m[k * n + i] * m[k * n + j];
                }
                out[i] += acc * s[j];
            }
            out[i] += s[i];
        }
        Ok(v.with_data(out))
    };
    let rhs = Signal::from_vec(rng.normal_vec(n)).unwrap();
    c.bench_function("conjugate_gradient/dense64", |b| {
        b.iter(|| conjugate_gradient(&apply, black_box(&rhs), 1e-10, 200).unwrap())
    });
}

fn solvers(c: &mut Criterion) {
    let prior = GmmEnergy::new(GmmPrior::four_cluster_toy(), 0.2).unwrap();
    let op = LinearOperator::identity(&[2], 1).unwrap();
    let b = Signal::from_vec(vec![0.8, -0.6]).unwrap();
    let p = MapProblem::new(&op, &b, 0.01, &prior, 0.04).unwrap();
    let cfg = SolveConfig {
        algorithm: Algorithm::Gd,
        lipschitz: prior.lipschitz_bound().unwrap(),
        max_iter: 100,
        epsilon: 1e-300,
        backtracking: false,
        ..SolveConfig::default()
    };
    c.bench_function("epnp_gd/oracle_toy_100_iters", |bch| {
        bch.iter(|| epnp_gd(&p, &cfg, black_box(&b)).unwrap())
    });
}

criterion_group!(benches, scores, dsm_gradients, operators, solvers);
criterion_main!(benches);
