mod common;

use std::sync::Arc;

use magmap_core::gpr::{
    optimize_hyperparameters, GpComponent, Hyperparameters, NlmlProblem, NoisePlacement,
    OptimizeConfig,
};
use magmap_core::Point3;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn point(rng: &mut ChaCha8Rng) -> Point3 {
    [
        rng.gen_range(-2.0..2.0),
        rng.gen_range(-1.5..1.5),
        rng.gen_range(-2.25..-0.5),
    ]
}

fn cholesky(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                l[i][i] = (a[i][i] - s).sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    l
}

#[test]
fn prediction_matches_dense_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..25 {
        let n = rng.gen_range(1..=40);
        let x: Vec<Point3> = (0..n).map(|_| point(&mut rng)).collect();
        let y: Vec<f64> = (0..n).map(|_| 30.0 + rng.gen_range(-5.0..5.0)).collect();
        let q: Vec<Point3> = (0..10).map(|_| point(&mut rng)).collect();
        let hp = Hyperparameters::new(
            rng.gen_range(0.5..5.0),
            rng.gen_range(0.2..1.5),
            rng.gen_range(0.05..0.8),
        )
        .unwrap();
        let gp =
            GpComponent::fit(Arc::new(x.clone()), y.clone(), hp, NoisePlacement::Diagonal).unwrap();
        let p = gp.predict(&q);
        let (mean, sd) = common::oracle_predict(&x, &y, &hp, &q);
        for i in 0..q.len() {
            assert!(
                (p.mean[i] - mean[i]).abs() <= 1e-9 * mean[i].abs(),
                "{} vs {}",
                p.mean[i],
                mean[i]
            );
            assert!(
                (p.sd[i] - sd[i]).abs() <= 1e-9 * sd[i],
                "{} vs {}",
                p.sd[i],
                sd[i]
            );
        }
    }
}

#[test]
fn optimizer_recovers_generating_hyperparameters() {
    let truth = Hyperparameters::new(4.0, 0.6, 0.2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let x: Vec<Point3> = (0..200).map(|_| point(&mut rng)).collect();
    let k: Vec<Vec<f64>> = x
        .iter()
        .enumerate()
        .map(|(i, a)| {
            x.iter()
                .enumerate()
                .map(|(j, b)| {
                    let d2: f64 = (0..3).map(|c| (a[c] - b[c]).powi(2)).sum();
                    let kij = 16.0 * (-d2 / (2.0 * 0.36)).exp();
                    if i == j {
                        kij + 0.04
                    } else {
                        kij
                    }
                })
                .collect()
        })
        .collect();
    let l = cholesky(&k);
    let z: Vec<f64> = (0..200).map(|_| rng.sample(StandardNormal)).collect();
    let y: Vec<f64> = (0..200)
        .map(|i| 45.0 + (0..=i).map(|j| l[i][j] * z[j]).sum::<f64>())
        .collect();

    let problem = NlmlProblem::new(&x, &y, NoisePlacement::Diagonal).unwrap();
    let report = optimize_hyperparameters(&problem, &OptimizeConfig::default()).unwrap();
    let got = report.hyperparameters.to_log();
    let want = truth.to_log();
    for k in 0..3 {
        assert!(
            (got[k] - want[k]).abs() < 0.3,
            "{:?} vs {:?}",
            report.hyperparameters,
            truth
        );
    }
    for s in report.start_nlml.iter().flatten() {
        assert!(report.nlml <= *s);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn posterior_sd_never_exceeds_prior(seed in 0u64..10_000, n in 1usize..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<Point3> = (0..n).map(|_| point(&mut rng)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let hp = Hyperparameters::new(rng.gen_range(0.5..3.0), rng.gen_range(0.2..1.5), rng.gen_range(0.05..0.5)).unwrap();
        let gp = GpComponent::fit(Arc::new(x), y, hp, NoisePlacement::Diagonal).unwrap();
        let q: Vec<Point3> = (0..20).map(|_| point(&mut rng)).collect();
        let p = gp.predict(&q);
        for s in p.sd {
            prop_assert!(s >= 0.0 && s <= hp.sigma_f * (1.0 + 1e-12));
        }
    }

    #[test]
    fn adding_data_shrinks_variance(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<Point3> = (0..12).map(|_| point(&mut rng)).collect();
        let y: Vec<f64> = (0..12).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let hp = Hyperparameters::new(1.5, 0.7, 0.2).unwrap();
        let q: Vec<Point3> = (0..10).map(|_| point(&mut rng)).collect();
        let small = GpComponent::fit(Arc::new(x[..6].to_vec()), y[..6].to_vec(), hp, NoisePlacement::Diagonal).unwrap();
        let large = GpComponent::fit(Arc::new(x), y, hp, NoisePlacement::Diagonal).unwrap();
        let (a, b) = (small.predict(&q), large.predict(&q));
        for i in 0..q.len() {
            prop_assert!(b.sd[i] <= a.sd[i] + 1e-9);
        }
    }
}
