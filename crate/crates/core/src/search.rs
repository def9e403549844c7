//! Temporal logic policy search.
//!
//! Each iteration samples `N` rollouts from the current policy, pushes every
//! state trajectory uphill on the smoothed robustness inside a Euclidean
//! trust region, fits a Gaussian to the improved trajectories, weights the
//! original samples by their density under that fit and refits the policy
//! feed-forward terms by weighted maximum likelihood.

use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{rollout, EnvError, Environment, Rollout};
use crate::formula::Formula;
use crate::policy::{Policy, PolicyError};
use crate::semantics::robustness;
use crate::smoothing::{build_dag, SmoothingError, SmoothingParams, SoftDag};
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("invalid environment: {0}")]
    Env(#[from] EnvError),
    #[error("specification does not fit the environment: {0}")]
    Spec(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Smoothing(#[from] SmoothingError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Rollouts per iteration, `N >= 2`.
    pub batch_size: usize,
    /// States per trajectory.
    pub horizon: usize,
    /// Squared-norm trust-region radius for trajectory improvement.
    pub epsilon: f64,
    /// Softmax temperature applied to the sample log-densities.
    pub alpha: f64,
    pub beta: f64,
    pub iterations: usize,
    pub seed: u64,
    pub ascent: AscentOptions,
    /// Ridge added to every fitted state covariance.
    pub ridge: f64,
    /// Variance of the random initial feed-forward terms.
    pub init_feedforward_variance: f64,
    /// Initial action covariance scale `c0`.
    pub init_covariance: f64,
    /// Fixed feedback gain, row-major `action_dim × state_dim`; zero when
    /// absent.
    pub feedback_gain: Option<Vec<f64>>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 20,
            horizon: 50,
            epsilon: 1.0,
            alpha: 0.1,
            beta: 9.0,
            iterations: 40,
            seed: 0,
            ascent: AscentOptions::default(),
            ridge: 1e-6,
            init_feedforward_variance: 0.1,
            init_covariance: 0.5,
            feedback_gain: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let fail = |m: &str| Err(TrainError::Config(m.into()));
        if self.batch_size < 2 {
            return fail("batch_size must be at least 2 (N >= 2)");
        }
        if self.horizon < 2 {
            return fail("horizon must be at least 2");
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return fail("epsilon must be positive");
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return fail("alpha must be positive");
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return fail("beta must be positive");
        }
        if !(self.ridge.is_finite() && self.ridge > 0.0) {
            return fail("ridge must be positive");
        }
        if !(self.init_feedforward_variance.is_finite() && self.init_feedforward_variance >= 0.0) {
            return fail("init_feedforward_variance must be non-negative");
        }
        if !(self.init_covariance.is_finite() && self.init_covariance > 0.0) {
            return fail("init_covariance must be positive");
        }
        if self.ascent.max_steps == 0 {
            return fail("ascent.max_steps must be at least 1");
        }
        if !(self.ascent.initial_step.is_finite() && self.ascent.initial_step > 0.0) {
            return fail("ascent.initial_step must be positive");
        }
        Ok(())
    }
}

/// Settings of the projected gradient ascent used to improve trajectories.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AscentOptions {
    pub max_steps: usize,
    pub initial_step: f64,
    pub gradient_tolerance: f64,
}

impl Default for AscentOptions {
    fn default() -> Self {
        Self {
            max_steps: 30,
            initial_step: 1.0,
            gradient_tolerance: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Improvement {
    pub trajectory: Trajectory,
    pub value_before: f64,
    pub value_after: f64,
    /// Squared distance moved, `‖τ̄ - τ‖²`.
    pub shift_sq: f64,
    pub degenerate_leaves: usize,
}

const ARMIJO: f64 = 1e-4;
const MIN_STEP: f64 = 1e-12;

fn project(x0: &[f64], x: &mut [f64], radius: f64) {
    let norm = x.iter().zip(x0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    if norm > radius {
        let scale = radius / norm;
        for (a, b) in x.iter_mut().zip(x0) {
            *a = b + (*a - b) * scale;
        }
    }
}

/// Projected gradient ascent on the smoothed robustness, restricted to the
/// ball `‖τ̄ - τ‖² <= epsilon`. Steps are accepted only on sufficient
/// increase, so the smoothed value never decreases.
pub fn improve_trajectory(
    tau: &Trajectory,
    dag: &SoftDag,
    params: &SmoothingParams,
    epsilon: f64,
    opts: &AscentOptions,
) -> Improvement {
    let dim = tau.dim();
    let x0 = tau.as_flat();
    let radius = epsilon.max(0.0).sqrt();
    let eval = |x: &[f64]| {
        let t = Trajectory::from_flat(dim, x.to_vec()).expect("finite iterate");
        dag.smooth_value_and_gradient(&t, params)
    };
    let first = eval(x0);
    let value_before = first.value;
    let mut degenerate_leaves = first.degenerate_leaves;
    let mut x = x0.to_vec();
    let mut value = first.value;
    let mut grad = first.gradient;
    let mut step = opts.initial_step;
    let mut candidate = vec![0.0; x.len()];
    'outer: for _ in 0..opts.max_steps {
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if gnorm.is_nan() || gnorm < opts.gradient_tolerance {
            break;
        }
        loop {
            for ((c, xi), g) in candidate.iter_mut().zip(&x).zip(&grad) {
                *c = xi + step * g;
            }
            project(x0, &mut candidate, radius);
            let ascent: f64 = candidate
                .iter()
                .zip(&x)
                .zip(&grad)
                .map(|((c, xi), g)| (c - xi) * g)
                .sum();
            if ascent.is_nan() || ascent <= 0.0 {
                break 'outer;
            }
            let t = Trajectory::from_flat(dim, candidate.clone()).expect("finite iterate");
            let fwd = dag.forward(&t, params);
            if fwd.value() >= value + ARMIJO * ascent {
                x.copy_from_slice(&candidate);
                let e = dag.backward(&t, &fwd);
                value = e.value;
                grad = e.gradient;
                degenerate_leaves = degenerate_leaves.max(e.degenerate_leaves);
                step *= 2.0;
                break;
            }
            step *= 0.5;
            if step < MIN_STEP {
                break 'outer;
            }
        }
    }
    let shift_sq = x.iter().zip(x0).map(|(a, b)| (a - b) * (a - b)).sum();
    Improvement {
        trajectory: Trajectory::from_flat(dim, x).expect("finite iterate"),
        value_before,
        value_after: value,
        shift_sq,
        degenerate_leaves,
    }
}

/// Block-diagonal Gaussian over trajectories: one mean and covariance per
/// timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryDistribution {
    pub means: Vec<DVector<f64>>,
    pub covariances: Vec<DMatrix<f64>>,
}

/// Population mean and scatter of the improved trajectories at every
/// timestep, plus `ridge · I`.
pub fn fit_distribution(improved: &[Trajectory], ridge: f64) -> TrajectoryDistribution {
    assert!(!improved.is_empty(), "cannot fit an empty batch");
    let horizon = improved[0].len();
    let dim = improved[0].dim();
    let n = improved.len() as f64;
    let mut means = Vec::with_capacity(horizon);
    let mut covariances = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let mut mean = DVector::zeros(dim);
        for tau in improved {
            mean += DVector::from_column_slice(tau.state(t));
        }
        mean /= n;
        let mut cov = DMatrix::identity(dim, dim) * ridge;
        for tau in improved {
            let d = DVector::from_column_slice(tau.state(t)) - &mean;
            cov.ger(1.0 / n, &d, &d, 1.0);
        }
        means.push(mean);
        covariances.push((&cov + cov.transpose()) * 0.5);
    }
    TrajectoryDistribution { means, covariances }
}

impl TrajectoryDistribution {
    /// Cached factors for repeated density evaluation.
    pub fn factorize(&self) -> Vec<Cholesky<f64, Dyn>> {
        self.covariances
            .iter()
            .map(|c| Cholesky::new(c.clone()).expect("fitted covariance is positive definite"))
            .collect()
    }

    pub fn log_density(&self, tau: &Trajectory) -> f64 {
        log_density_with(&self.means, &self.factorize(), tau)
    }
}

fn log_density_with(means: &[DVector<f64>], factors: &[Cholesky<f64, Dyn>], tau: &Trajectory) -> f64 {
    let dim = tau.dim() as f64;
    let mut total = 0.0;
    for (t, (mean, chol)) in means.iter().zip(factors).enumerate() {
        let d = DVector::from_column_slice(tau.state(t)) - mean;
        let l = chol.l_dirty();
        let y = l
            .solve_lower_triangular(&d)
            .expect("non-singular triangular factor");
        let log_det: f64 = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        total += -0.5 * (y.norm_squared() + log_det + dim * (2.0 * std::f64::consts::PI).ln());
    }
    total
}

/// `w_i ∝ exp(α (ℓ_i - max_j ℓ_j))`.
pub fn softmax_from_log(log_densities: &[f64], alpha: f64) -> Vec<f64> {
    let max = log_densities.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = log_densities.iter().map(|l| (alpha * (l - max)).exp()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// Normalized weights of `samples` from their log-density under `dist`.
pub fn softmax_weights(samples: &[Trajectory], dist: &TrajectoryDistribution, alpha: f64) -> Vec<f64> {
    let factors = dist.factorize();
    let logs: Vec<f64> = samples
        .iter()
        .map(|tau| log_density_with(&dist.means, &factors, tau))
        .collect();
    softmax_from_log(&logs, alpha)
}

/// Batch statistics of one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationReport {
    pub iteration: usize,
    pub mean_rho: f64,
    pub max_rho: f64,
    pub min_rho: f64,
    pub mean_rho_smooth: f64,
    pub frac_satisfied: f64,
    pub wall_ms: u64,
    pub warnings: Vec<String>,
}

/// Everything one iteration produced, for inspection.
#[derive(Debug, Clone)]
pub struct IterationOutcome {
    pub report: IterationReport,
    pub batch: Vec<Rollout>,
    pub improvements: Vec<Improvement>,
    pub weights: Vec<f64>,
}

impl IterationOutcome {
    /// Largest `‖τ̄ - τ‖²` over the batch.
    pub fn max_shift_sq(&self) -> f64 {
        self.improvements.iter().map(|i| i.shift_sq).fold(0.0, f64::max)
    }

    /// Smallest `ρ̂(τ̄) - ρ̂(τ)` over the batch.
    pub fn min_gain(&self) -> f64 {
        self.improvements
            .iter()
            .map(|i| i.value_after - i.value_before)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Stream reserved for drawing the initial policy.
const POLICY_STREAM: u64 = u64::MAX;

/// Random source of rollout `sample` in `iteration`.
pub fn rollout_rng(seed: u64, iteration: usize, sample: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((iteration as u64) << 32) | sample as u64);
    rng
}

pub struct Trainer<'a, E: Environment + ?Sized> {
    cfg: TrainConfig,
    env: &'a E,
    formula: Formula,
    dag: SoftDag,
    params: SmoothingParams,
    policy: Policy,
    iteration: usize,
    smooth_history: Vec<f64>,
}

impl<'a, E: Environment + ?Sized> Trainer<'a, E> {
    pub fn new(cfg: TrainConfig, env: &'a E, formula: &Formula) -> Result<Self, TrainError> {
        cfg.validate()?;
        if env.horizon() != cfg.horizon {
            return Err(TrainError::Config(format!(
                "environment horizon {} differs from training horizon {}",
                env.horizon(),
                cfg.horizon
            )));
        }
        formula.check_dim(env.state_dim()).map_err(TrainError::Spec)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(POLICY_STREAM);
        let mut policy = Policy::initial(
            cfg.horizon - 1,
            env.state_dim(),
            env.action_dim(),
            cfg.init_feedforward_variance,
            cfg.init_covariance,
            &mut rng,
        )?;
        if let Some(gain) = &cfg.feedback_gain {
            let (m, n) = (env.action_dim(), env.state_dim());
            if gain.len() != m * n {
                return Err(TrainError::Config(format!(
                    "feedback_gain has {} entries, expected {}",
                    gain.len(),
                    m * n
                )));
            }
            policy = policy.with_gain(&DMatrix::from_row_slice(m, n, gain))?;
        }
        let dag = build_dag(formula, cfg.horizon)?.collapse();
        let params = SmoothingParams::new(cfg.beta)?;
        Ok(Self {
            cfg,
            env,
            formula: formula.clone(),
            dag,
            params,
            policy,
            iteration: 0,
            smooth_history: Vec::new(),
        })
    }

    pub fn policy(&self) -> &Policy {
        &self.policy
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn dag(&self) -> &SoftDag {
        &self.dag
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn into_policy(self) -> Policy {
        self.policy
    }

    /// Draws the rollouts of the current iteration without updating.
    pub fn sample_batch(&self) -> Vec<Rollout> {
        (0..self.cfg.batch_size)
            .map(|i| {
                let mut rng = rollout_rng(self.cfg.seed, self.iteration, i);
                let policy = &self.policy;
                rollout(self.env, |s, t, r| policy.sample_action(s, t, r), &mut rng)
            })
            .collect()
    }

    /// Runs one iteration and updates the policy.
    pub fn step(&mut self) -> Result<IterationOutcome, TrainError> {
        let start = Instant::now();
        let batch = self.sample_batch();
        let improvements: Vec<Improvement> = batch
            .iter()
            .map(|r| {
                improve_trajectory(
                    &r.trajectory,
                    &self.dag,
                    &self.params,
                    self.cfg.epsilon,
                    &self.cfg.ascent,
                )
            })
            .collect();
        let improved: Vec<Trajectory> = improvements.iter().map(|i| i.trajectory.clone()).collect();
        let dist = fit_distribution(&improved, self.cfg.ridge);
        let originals: Vec<Trajectory> = batch.iter().map(|r| r.trajectory.clone()).collect();
        let weights = softmax_weights(&originals, &dist, self.cfg.alpha);
        self.policy = self.policy.wml_update(&batch, &weights)?;

        let rhos: Vec<f64> = originals.iter().map(|t| robustness(t, &self.formula, 0)).collect();
        let n = rhos.len() as f64;
        let mean_rho_smooth = improvements.iter().map(|i| i.value_before).sum::<f64>() / n;
        let mut warnings = Vec::new();
        let degenerate: usize = improvements.iter().map(|i| i.degenerate_leaves).sum();
        if degenerate > 0 {
            warnings.push(format!(
                "{degenerate} predicate gradients were undefined and treated as zero"
            ));
        }
        self.smooth_history.push(mean_rho_smooth);
        if let [.., a, b, c] = self.smooth_history[..] {
            if b < a && c < b {
                warnings.push(format!(
                    "mean smoothed robustness decreased two iterations in a row ({a:.4} -> {b:.4} -> {c:.4})"
                ));
            }
        }
        let report = IterationReport {
            iteration: self.iteration,
            mean_rho: rhos.iter().sum::<f64>() / n,
            max_rho: rhos.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            min_rho: rhos.iter().copied().fold(f64::INFINITY, f64::min),
            mean_rho_smooth,
            frac_satisfied: rhos.iter().filter(|r| **r > 0.0).count() as f64 / n,
            wall_ms: start.elapsed().as_millis() as u64,
            warnings,
        };
        self.iteration += 1;
        Ok(IterationOutcome {
            report,
            batch,
            improvements,
            weights,
        })
    }
}

/// Runs `cfg.iterations` iterations and returns the final policy with one
/// report per iteration.
pub fn train<E: Environment + ?Sized>(
    cfg: &TrainConfig,
    env: &E,
    phi: &Formula,
) -> Result<(Policy, Vec<IterationReport>), TrainError> {
    let mut trainer = Trainer::new(cfg.clone(), env, phi)?;
    let mut reports = Vec::with_capacity(cfg.iterations);
    for _ in 0..cfg.iterations {
        reports.push(trainer.step()?.report);
    }
    Ok((trainer.into_policy(), reports))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{VehicleConfig, VehicleEnv};
    use crate::formula::VariableMap;
    use crate::parser::parse;

    fn s() -> VariableMap {
        VariableMap::from_names(["s"]).unwrap()
    }

    #[test]
    fn full_step_to_the_trust_region_boundary() {
        let phi = parse("F s > 5", &s()).unwrap();
        let dag = build_dag(&phi, 1).unwrap();
        let tau = Trajectory::scalar(&[0.0]).unwrap();
        let params = SmoothingParams::new(9.0).unwrap();
        let out = improve_trajectory(&tau, &dag, &params, 4.0, &AscentOptions::default());
        assert!((out.trajectory.as_flat()[0] - 2.0).abs() < 1e-12);
        assert!(out.shift_sq <= 4.0 + 1e-9);
        assert!(out.value_after > out.value_before);
    }

    #[test]
    fn empty_trust_region_keeps_the_trajectory() {
        let phi = parse("F s > 5", &s()).unwrap();
        let dag = build_dag(&phi, 3).unwrap();
        let tau = Trajectory::scalar(&[0.0, 1.0, 2.0]).unwrap();
        let params = SmoothingParams::new(9.0).unwrap();
        let out = improve_trajectory(&tau, &dag, &params, 1e-300, &AscentOptions::default());
        assert!(out.trajectory.distance_sq(&tau) < 1e-290);
    }

    #[test]
    fn stationary_point_is_kept() {
        // The smoothed band robustness peaks at the band center.
        let phi = parse("s > 0 & s < 2", &s()).unwrap();
        let dag = build_dag(&phi, 1).unwrap();
        let tau = Trajectory::scalar(&[1.0]).unwrap();
        let params = SmoothingParams::new(9.0).unwrap();
        let out = improve_trajectory(&tau, &dag, &params, 1.0, &AscentOptions::default());
        assert_eq!(out.trajectory, tau);
    }

    #[test]
    fn two_point_fit() {
        let batch = [Trajectory::scalar(&[0.0]).unwrap(), Trajectory::scalar(&[2.0]).unwrap()];
        let d = fit_distribution(&batch, 1e-6);
        assert_eq!(d.means[0][0], 1.0);
        assert!((d.covariances[0][(0, 0)] - (1.0 + 1e-6)).abs() < 1e-15);
        let same = [batch[0].clone(), batch[0].clone()];
        assert_eq!(fit_distribution(&same, 1e-6).covariances[0][(0, 0)], 1e-6);
    }

    #[test]
    fn softmax_oracle_and_limits() {
        let w = softmax_from_log(&[0.0, -1.0, -3.0], 1.0);
        let z = 1.0 + (-1f64).exp() + (-3f64).exp();
        let expected = [1.0 / z, (-1f64).exp() / z, (-3f64).exp() / z];
        for (a, b) in w.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        let w = softmax_from_log(&[0.0, -1.0, -3.0], 1e-12);
        assert!(w.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-11));
        let w = softmax_from_log(&[-1e6, -1e6 - 5000.0], 1.0);
        assert_eq!(w, vec![1.0, 0.0]);
    }

    #[test]
    fn equal_samples_get_uniform_weights() {
        let tau = Trajectory::from_states(&[[0.0, 1.0], [2.0, 3.0]]).unwrap();
        let batch = vec![tau.clone(); 4];
        let d = fit_distribution(&batch, 1e-6);
        assert_eq!(softmax_weights(&batch, &d, 1.0), vec![0.25; 4]);
    }

    #[test]
    fn log_density_of_standard_normal() {
        let d = TrajectoryDistribution {
            means: vec![DVector::zeros(1)],
            covariances: vec![DMatrix::identity(1, 1)],
        };
        let l = d.log_density(&Trajectory::scalar(&[1.0]).unwrap());
        assert!((l - (-0.5 - 0.5 * (2.0 * std::f64::consts::PI).ln())).abs() < 1e-15);
    }

    #[test]
    fn config_validation() {
        let cfg = TrainConfig {
            batch_size: 1,
            ..TrainConfig::default()
        };
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("N >= 2"), "{err}");
    }

    #[test]
    fn zero_iterations_return_the_initial_policy() {
        let cfg = TrainConfig {
            horizon: 10,
            batch_size: 4,
            iterations: 0,
            seed: 3,
            ..TrainConfig::default()
        };
        let env = VehicleEnv::new(VehicleConfig::default(), 10).unwrap();
        let phi = crate::env::reach_avoid_spec(&env.config).formula;
        let (policy, reports) = train(&cfg, &env, &phi).unwrap();
        assert!(reports.is_empty());
        assert_eq!(&policy, Trainer::new(cfg, &env, &phi).unwrap().policy());
    }
}
