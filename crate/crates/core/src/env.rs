//! Finite-horizon environments and the noisy kinematic vehicle.
//!
//! The vehicle state is `[x, y, θ, ẋ, ẏ, θ̇]` and the action is
//! `[a_v, a_φ]` (forward speed, steering angle). Each step clamps the action,
//! integrates the bicycle model with one Euler step, stores the rates that
//! were used in the derivative slots, adds Gaussian noise and wraps the
//! heading into `(-π, π]`.

use std::f64::consts::PI;

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formula::{Comparator, Formula, Predicate, PredicateFn, VariableMap};
use crate::parser::Spec;
use crate::trajectory::Trajectory;

pub const STATE_DIM: usize = 6;
pub const ACTION_DIM: usize = 2;

/// Names of the vehicle state components, in index order.
pub const STATE_NAMES: [&str; STATE_DIM] = ["x", "y", "theta", "dx", "dy", "dtheta"];

/// Finite-horizon MDP with a stochastic transition.
pub trait Environment {
    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn horizon(&self) -> usize;
    fn initial_state(&self, rng: &mut dyn RngCore) -> Vec<f64>;
    fn step(&self, state: &[f64], action: &[f64], rng: &mut dyn RngCore) -> Vec<f64>;
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnvError {
    #[error("{0} must be positive and finite")]
    NonPositive(&'static str),
    #[error("{0} must be finite")]
    NonFinite(&'static str),
    #[error("{0} must be finite and non-negative")]
    Negative(&'static str),
    #[error("goal {0} is empty: lower bounds must be below upper bounds")]
    EmptyGoal(usize),
    #[error("steering bound must lie in (0, pi/2), got {0}")]
    SteeringBound(f64),
    #[error("horizon must be at least 1")]
    Horizon,
}

/// Axis-aligned rectangle `[x_lo, x_hi] × [y_lo, y_hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rect {
    pub x_lo: f64,
    pub x_hi: f64,
    pub y_lo: f64,
    pub y_hi: f64,
}

impl Rect {
    pub fn new(x_lo: f64, x_hi: f64, y_lo: f64, y_hi: f64) -> Self {
        Self {
            x_lo,
            x_hi,
            y_lo,
            y_hi,
        }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x > self.x_lo && x < self.x_hi && y > self.y_lo && y < self.y_hi
    }

    pub fn center(&self) -> (f64, f64) {
        (0.5 * (self.x_lo + self.x_hi), 0.5 * (self.y_lo + self.y_hi))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Obstacle {
    pub x: f64,
    pub y: f64,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleConfig {
    /// Axle distance `L` in metres.
    pub axle_length: f64,
    /// Integration step in seconds.
    pub dt: f64,
    pub noise_sigma: [f64; STATE_DIM],
    pub initial_mean: [f64; STATE_DIM],
    pub initial_sigma: [f64; STATE_DIM],
    pub goals: Vec<Rect>,
    pub obstacle: Obstacle,
    pub max_speed: f64,
    pub max_steering: f64,
}

impl Default for VehicleConfig {
    fn default() -> Self {
        Self {
            axle_length: 1.0,
            dt: 0.1,
            noise_sigma: [0.01, 0.01, 0.005, 0.0, 0.0, 0.0],
            initial_mean: [0.0; STATE_DIM],
            initial_sigma: [0.05, 0.05, 0.05, 0.0, 0.0, 0.0],
            goals: vec![Rect::new(4.0, 5.0, 4.0, 5.0)],
            obstacle: Obstacle {
                x: 2.5,
                y: 2.5,
                radius: 0.7,
            },
            max_speed: 2.0,
            max_steering: 1.2,
        }
    }
}

impl VehicleConfig {
    /// Default arena with the three ordered goals of the sequencing task,
    /// placed counter-clockwise around the obstacle.
    pub fn three_goals() -> Self {
        Self {
            goals: vec![
                Rect::new(3.5, 4.5, 0.0, 1.0),
                Rect::new(4.0, 5.0, 4.0, 5.0),
                Rect::new(0.0, 1.0, 3.5, 4.5),
            ],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let positive = |v: f64, name| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(EnvError::NonPositive(name))
            }
        };
        positive(self.axle_length, "axle_length")?;
        positive(self.dt, "dt")?;
        positive(self.obstacle.radius, "obstacle.radius")?;
        positive(self.max_speed, "max_speed")?;
        if !(self.max_steering > 0.0 && self.max_steering < PI / 2.0) {
            return Err(EnvError::SteeringBound(self.max_steering));
        }
        if self.noise_sigma.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(EnvError::Negative("noise_sigma"));
        }
        if self.initial_sigma.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(EnvError::Negative("initial_sigma"));
        }
        if self.initial_mean.iter().any(|m| !m.is_finite()) {
            return Err(EnvError::NonFinite("initial_mean"));
        }
        for (i, g) in self.goals.iter().enumerate() {
            if !(g.x_lo < g.x_hi && g.y_lo < g.y_hi) {
                return Err(EnvError::EmptyGoal(i));
            }
        }
        if !(self.obstacle.x.is_finite() && self.obstacle.y.is_finite()) {
            return Err(EnvError::NonFinite("obstacle center"));
        }
        Ok(())
    }
}

/// Wraps an angle into `(-π, π]`; angles already in range are returned
/// unchanged.
pub fn wrap_angle(theta: f64) -> f64 {
    if theta > -PI && theta <= PI {
        theta
    } else {
        PI - (PI - theta).rem_euclid(2.0 * PI)
    }
}

/// One noisy Euler step of the kinematic bicycle model.
pub fn vehicle_step(
    state: &[f64],
    action: &[f64],
    rng: &mut dyn RngCore,
    cfg: &VehicleConfig,
) -> [f64; STATE_DIM] {
    let a_v = action[0].clamp(-cfg.max_speed, cfg.max_speed);
    let a_phi = action[1].clamp(-cfg.max_steering, cfg.max_steering);
    let theta = state[2];
    let dx = a_v * theta.cos();
    let dy = a_v * theta.sin();
    let dtheta = a_v / cfg.axle_length * a_phi.tan();
    let mut next = [
        state[0] + cfg.dt * dx,
        state[1] + cfg.dt * dy,
        theta + cfg.dt * dtheta,
        dx,
        dy,
        dtheta,
    ];
    for (v, sigma) in next.iter_mut().zip(cfg.noise_sigma) {
        if sigma > 0.0 {
            let z: f64 = rng.sample(StandardNormal);
            *v += sigma * z;
        }
    }
    next[2] = wrap_angle(next[2]);
    next
}

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleEnv {
    pub config: VehicleConfig,
    horizon: usize,
}

impl VehicleEnv {
    pub fn new(config: VehicleConfig, horizon: usize) -> Result<Self, EnvError> {
        config.validate()?;
        if horizon == 0 {
            return Err(EnvError::Horizon);
        }
        Ok(Self { config, horizon })
    }

    pub fn variables() -> VariableMap {
        VariableMap::from_names(STATE_NAMES).expect("distinct names")
    }
}

impl Environment for VehicleEnv {
    fn state_dim(&self) -> usize {
        STATE_DIM
    }

    fn action_dim(&self) -> usize {
        ACTION_DIM
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn initial_state(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let mut s: Vec<f64> = self.config.initial_mean.to_vec();
        for (v, sigma) in s.iter_mut().zip(self.config.initial_sigma) {
            if sigma > 0.0 {
                let z: f64 = rng.sample(StandardNormal);
                *v += sigma * z;
            }
        }
        s[2] = wrap_angle(s[2]);
        s
    }

    fn step(&self, state: &[f64], action: &[f64], rng: &mut dyn RngCore) -> Vec<f64> {
        vehicle_step(state, action, rng, &self.config).to_vec()
    }
}

/// States and the actions that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub trajectory: Trajectory,
    /// `T - 1` actions as sampled, before any clamping by the environment.
    pub actions: Vec<Vec<f64>>,
}

/// Samples `s_0`, then alternates policy and environment for `T - 1` steps.
pub fn rollout<E, P>(env: &E, mut policy: P, rng: &mut dyn RngCore) -> Rollout
where
    E: Environment + ?Sized,
    P: FnMut(&[f64], usize, &mut dyn RngCore) -> Vec<f64>,
{
    let horizon = env.horizon();
    let mut state = env.initial_state(rng);
    let mut flat = Vec::with_capacity(horizon * state.len());
    let mut actions = Vec::with_capacity(horizon.saturating_sub(1));
    flat.extend_from_slice(&state);
    for t in 0..horizon - 1 {
        let action = policy(&state, t, rng);
        state = env.step(&state, &action, rng);
        flat.extend_from_slice(&state);
        actions.push(action);
    }
    Rollout {
        trajectory: Trajectory::from_flat(env.state_dim(), flat).expect("finite rollout"),
        actions,
    }
}

fn bound(var: usize, cmp: Comparator, c: f64) -> Formula {
    let mut coeffs = vec![0.0; STATE_DIM];
    coeffs[var] = 1.0;
    Formula::pred(Predicate::new(PredicateFn::Affine { coeffs, offset: 0.0 }, cmp, c))
}

/// `x > x_lo & x < x_hi & y > y_lo & y < y_hi`.
pub fn goal_formula(goal: &Rect) -> Formula {
    Formula::conjunction([
        bound(0, Comparator::Gt, goal.x_lo),
        bound(0, Comparator::Lt, goal.x_hi),
        bound(1, Comparator::Gt, goal.y_lo),
        bound(1, Comparator::Lt, goal.y_hi),
    ])
    .expect("four bounds")
}

/// `dist(x, y; center) > r`.
pub fn clear_of(obstacle: &Obstacle) -> Formula {
    Formula::pred(Predicate::new(
        PredicateFn::Distance {
            i: 0,
            j: 1,
            center: (obstacle.x, obstacle.y),
        },
        Comparator::Gt,
        obstacle.radius,
    ))
}

/// Reach the first goal and always stay clear of the obstacle.
pub fn reach_avoid_spec(cfg: &VehicleConfig) -> Spec {
    let goal = cfg.goals.first().expect("at least one goal");
    Spec {
        vars: VehicleEnv::variables(),
        formula: Formula::and(
            Formula::eventually(goal_formula(goal)),
            Formula::always(clear_of(&cfg.obstacle)),
        ),
    }
}

/// Visit goals 1, 2, 3 in order, never entering a later goal early, never
/// revisiting a goal, and always staying clear of the obstacle.
pub fn sequence_spec(cfg: &VehicleConfig) -> Spec {
    assert!(cfg.goals.len() >= 3, "sequencing task needs three goals");
    let g: Vec<Formula> = cfg.goals[..3].iter().map(goal_formula).collect();
    let order = Formula::then(g[0].clone(), Formula::then(g[1].clone(), g[2].clone()));
    let first = Formula::until(
        Formula::not(Formula::or(g[1].clone(), g[2].clone())),
        g[0].clone(),
    );
    let second = Formula::until(Formula::not(g[2].clone()), g[1].clone());
    let no_revisit = g.iter().map(|gi| {
        Formula::always(Formula::implies(
            gi.clone(),
            Formula::next(Formula::always(Formula::not(gi.clone()))),
        ))
    });
    let parts = [order, first, second]
        .into_iter()
        .chain(no_revisit)
        .chain([Formula::always(clear_of(&cfg.obstacle))]);
    Spec {
        vars: VehicleEnv::variables(),
        formula: Formula::conjunction(parts).expect("non-empty"),
    }
}
