mod common;

use common::arb_case;
use nalgebra::{Cholesky, DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tlps_core::env::{reach_avoid_spec, Rollout, VehicleConfig, VehicleEnv};
use tlps_core::policy::Policy;
use tlps_core::search::{
    fit_distribution, improve_trajectory, softmax_from_log, train, AscentOptions, TrainConfig,
    Trainer,
};
use tlps_core::{build_dag, robustness, SmoothingParams, Trajectory};

fn batch_of(n: usize, len: usize, dim: usize) -> impl Strategy<Value = Vec<Trajectory>> {
    prop::collection::vec(prop::collection::vec(-3.0..3.0f64, len * dim), n)
        .prop_map(move |v| v.into_iter().map(|d| Trajectory::from_flat(dim, d).unwrap()).collect())
}

fn tiny_config() -> TrainConfig {
    TrainConfig {
        batch_size: 4,
        horizon: 10,
        iterations: 2,
        seed: 11,
        epsilon: 4.0,
        ..TrainConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn improvement_stays_in_the_trust_region_and_never_loses(
        (phi, tau) in arb_case(2, 3, 6),
        eps in prop_oneof![Just(1e-3), Just(0.5), Just(4.0), Just(100.0)],
        beta in prop_oneof![Just(1.0), Just(9.0)],
    ) {
        let dag = build_dag(&phi, tau.len()).unwrap();
        let params = SmoothingParams::new(beta).unwrap();
        let out = improve_trajectory(&tau, &dag, &params, eps, &AscentOptions::default());
        prop_assert!(out.shift_sq <= eps + 1e-9);
        prop_assert!((out.trajectory.distance_sq(&tau) - out.shift_sq).abs() < 1e-12);
        prop_assert!(out.value_after >= out.value_before);
        prop_assert_eq!(out.value_after, dag.smooth_value(&out.trajectory, &params));
    }

    #[test]
    fn weights_are_a_distribution(
        logs in prop::collection::vec(-1e6..10.0f64, 2..30),
        alpha in prop_oneof![Just(1e-6), 0.01..10.0f64],
    ) {
        let w = softmax_from_log(&logs, alpha);
        prop_assert!(w.iter().all(|x| *x >= 0.0));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn fit_matches_direct_summation(batch in batch_of(5, 4, 3)) {
        let ridge = 1e-6;
        let dist = fit_distribution(&batch, ridge);
        for t in 0..4 {
            for i in 0..3 {
                let mu: f64 = batch.iter().map(|b| b.state(t)[i]).sum::<f64>() / 5.0;
                prop_assert!((dist.means[t][i] - mu).abs() < 1e-12);
                for j in 0..3 {
                    let muj: f64 = batch.iter().map(|b| b.state(t)[j]).sum::<f64>() / 5.0;
                    let mut s: f64 = batch
                        .iter()
                        .map(|b| (b.state(t)[i] - mu) * (b.state(t)[j] - muj))
                        .sum::<f64>() / 5.0;
                    if i == j {
                        s += ridge;
                    }
                    prop_assert!((dist.covariances[t][(i, j)] - s).abs() < 1e-12);
                }
            }
            prop_assert!(Cholesky::new(dist.covariances[t].clone()).is_some());
        }
    }

    #[test]
    fn wml_update_keeps_covariances_positive_definite(
        seed in any::<u64>(),
        raw in prop::collection::vec(0.0..1.0f64, 6),
    ) {
        prop_assume!(raw.iter().sum::<f64>() > 1e-6);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let policy = Policy::initial(4, 3, 2, 0.1, 0.5, &mut rng).unwrap();
        let batch: Vec<Rollout> = (0..6)
            .map(|_| {
                let states: Vec<Vec<f64>> = (0..5)
                    .map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect())
                    .collect();
                Rollout {
                    trajectory: Trajectory::from_states(&states).unwrap(),
                    actions: (0..4).map(|t| policy.sample_action(&states[t], t, &mut rng)).collect(),
                }
            })
            .collect();
        let next = policy.wml_update(&batch, &raw).unwrap();
        for t in 0..4 {
            let c = next.covariance(t);
            prop_assert_eq!(c, &c.transpose());
            prop_assert!(Cholesky::new(c.clone()).is_some());
        }
        let text = next.to_text();
        prop_assert_eq!(Policy::from_text(&text).unwrap(), next);
    }
}

#[test]
fn one_hot_weights_copy_a_sample() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let policy = Policy::initial(2, 1, 1, 0.1, 0.5, &mut rng).unwrap();
    let batch: Vec<Rollout> = [0.3, -0.7]
        .iter()
        .map(|&a| Rollout {
            trajectory: Trajectory::scalar(&[0.0, 1.0, 2.0]).unwrap(),
            actions: vec![vec![a], vec![2.0 * a]],
        })
        .collect();
    let next = policy.wml_update(&batch, &[0.0, 1.0]).unwrap();
    assert_eq!(next.feedforward(0), &DVector::from_vec(vec![-0.7]));
    assert_eq!(next.feedforward(1), &DVector::from_vec(vec![-1.4]));
    assert_eq!(next.covariance(0), &DMatrix::from_element(1, 1, 1e-4));
}

fn task1() -> (VehicleConfig, tlps_core::Formula) {
    let vc = VehicleConfig::default();
    let phi = reach_avoid_spec(&vc).formula;
    (vc, phi)
}

#[test]
fn zero_iterations_return_the_initial_policy() {
    let (vc, phi) = task1();
    let cfg = TrainConfig { iterations: 0, ..tiny_config() };
    let env = VehicleEnv::new(vc, cfg.horizon).unwrap();
    let (policy, reports) = train(&cfg, &env, &phi).unwrap();
    assert!(reports.is_empty());
    assert_eq!(&policy, Trainer::new(cfg, &env, &phi).unwrap().policy());
}

#[test]
fn training_is_deterministic() {
    let (vc, phi) = task1();
    let cfg = tiny_config();
    let env = VehicleEnv::new(vc, cfg.horizon).unwrap();
    let strip = |r: Vec<tlps_core::search::IterationReport>| {
        r.into_iter()
            .map(|r| (r.iteration, r.mean_rho.to_bits(), r.max_rho.to_bits(), r.min_rho.to_bits(), r.mean_rho_smooth.to_bits(), r.frac_satisfied.to_bits()))
            .collect::<Vec<_>>()
    };
    let (p1, r1) = train(&cfg, &env, &phi).unwrap();
    let (p2, r2) = train(&cfg, &env, &phi).unwrap();
    assert_eq!(p1, p2);
    assert_eq!(strip(r1), strip(r2));
}

#[test]
fn reports_agree_with_the_stored_batch() {
    let (vc, phi) = task1();
    let cfg = tiny_config();
    let env = VehicleEnv::new(vc, cfg.horizon).unwrap();
    let mut trainer = Trainer::new(cfg.clone(), &env, &phi).unwrap();
    for _ in 0..cfg.iterations {
        let out = trainer.step().unwrap();
        let rhos: Vec<f64> = out.batch.iter().map(|r| robustness(&r.trajectory, &phi, 0)).collect();
        assert_eq!(out.report.mean_rho, rhos.iter().sum::<f64>() / rhos.len() as f64);
        assert!((out.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        assert!(out.max_shift_sq() <= cfg.epsilon + 1e-9);
        assert!(out.min_gain() >= 0.0);
    }
}

#[test]
fn invalid_configs_fail_before_rollouts() {
    let (vc, phi) = task1();
    let env = VehicleEnv::new(vc, 10).unwrap();
    for cfg in [
        TrainConfig { batch_size: 1, ..tiny_config() },
        TrainConfig { alpha: 0.0, ..tiny_config() },
        TrainConfig { epsilon: -1.0, ..tiny_config() },
        TrainConfig { horizon: 11, ..tiny_config() },
        TrainConfig { feedback_gain: Some(vec![0.0; 3]), ..tiny_config() },
    ] {
        assert!(Trainer::new(cfg, &env, &phi).is_err());
    }
}
