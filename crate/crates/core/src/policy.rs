//! Time-varying linear-Gaussian policies `a_t ~ N(K_t s_t + k_t, C_t)`.
//!
//! The feedback gains `K_t` stay fixed; [`Policy::wml_update`] refits the
//! feed-forward terms and covariances by weighted maximum likelihood.

use std::fmt::Write as _;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::env::Rollout;

/// Lower bound added to every refitted covariance.
pub const COVARIANCE_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("covariance at step {0} is not symmetric positive definite")]
    NotPositiveDefinite(usize),
    #[error("invalid weights: {0}")]
    Weights(String),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    gains: Vec<DMatrix<f64>>,
    feedforward: Vec<DVector<f64>>,
    covariances: Vec<DMatrix<f64>>,
    factors: Vec<DMatrix<f64>>,
}

impl Policy {
    /// Builds a policy with `gains.len()` decision steps. Every covariance
    /// must be symmetric positive definite.
    pub fn new(
        gains: Vec<DMatrix<f64>>,
        feedforward: Vec<DVector<f64>>,
        covariances: Vec<DMatrix<f64>>,
    ) -> Result<Self, PolicyError> {
        let steps = gains.len();
        if feedforward.len() != steps || covariances.len() != steps {
            return Err(PolicyError::Shape(format!(
                "{} gains, {} feed-forward terms, {} covariances",
                steps,
                feedforward.len(),
                covariances.len()
            )));
        }
        let (m, n) = gains.first().map_or((0, 0), |k| k.shape());
        let mut factors = Vec::with_capacity(steps);
        for t in 0..steps {
            if gains[t].shape() != (m, n)
                || feedforward[t].len() != m
                || covariances[t].shape() != (m, m)
            {
                return Err(PolicyError::Shape(format!("step {t} disagrees with step 0")));
            }
            let c = &covariances[t];
            if c.iter().any(|v| !v.is_finite()) || c != &c.transpose() {
                return Err(PolicyError::NotPositiveDefinite(t));
            }
            let chol = Cholesky::new(c.clone()).ok_or(PolicyError::NotPositiveDefinite(t))?;
            factors.push(chol.l());
        }
        Ok(Self {
            gains,
            feedforward,
            covariances,
            factors,
        })
    }

    /// Zero feedback, `k_t ~ N(0, ff_variance·I)`, `C_t = cov_scale·I`.
    pub fn initial(
        steps: usize,
        state_dim: usize,
        action_dim: usize,
        ff_variance: f64,
        cov_scale: f64,
        rng: &mut dyn RngCore,
    ) -> Result<Self, PolicyError> {
        let sd = ff_variance.sqrt();
        let feedforward = (0..steps)
            .map(|_| {
                DVector::from_fn(action_dim, |_, _| {
                    let z: f64 = rng.sample(StandardNormal);
                    sd * z
                })
            })
            .collect();
        Self::new(
            vec![DMatrix::zeros(action_dim, state_dim); steps],
            feedforward,
            vec![DMatrix::identity(action_dim, action_dim) * cov_scale; steps],
        )
    }

    /// Replaces every feedback gain with `gain`.
    pub fn with_gain(mut self, gain: &DMatrix<f64>) -> Result<Self, PolicyError> {
        if gain.shape() != (self.action_dim(), self.state_dim()) {
            return Err(PolicyError::Shape(format!(
                "gain is {:?}, expected {:?}",
                gain.shape(),
                (self.action_dim(), self.state_dim())
            )));
        }
        for k in &mut self.gains {
            k.copy_from(gain);
        }
        Ok(self)
    }

    /// Number of decision steps (`T - 1` for a horizon of `T` states).
    pub fn steps(&self) -> usize {
        self.gains.len()
    }

    pub fn state_dim(&self) -> usize {
        self.gains.first().map_or(0, |k| k.ncols())
    }

    pub fn action_dim(&self) -> usize {
        self.gains.first().map_or(0, |k| k.nrows())
    }

    pub fn gain(&self, t: usize) -> &DMatrix<f64> {
        &self.gains[t]
    }

    pub fn feedforward(&self, t: usize) -> &DVector<f64> {
        &self.feedforward[t]
    }

    pub fn covariance(&self, t: usize) -> &DMatrix<f64> {
        &self.covariances[t]
    }

    pub fn mean_action(&self, state: &[f64], t: usize) -> DVector<f64> {
        &self.gains[t] * DVector::from_column_slice(state) + &self.feedforward[t]
    }

    /// `K_t s + k_t + L_t z` with `z` standard normal and `L_t L_tᵀ = C_t`.
    pub fn sample_action(&self, state: &[f64], t: usize, rng: &mut dyn RngCore) -> Vec<f64> {
        let z = DVector::from_fn(self.action_dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
        let a = self.mean_action(state, t) + &self.factors[t] * z;
        a.as_slice().to_vec()
    }

    /// `a - K_t s`: the feed-forward term that reproduces `a` under the
    /// fixed feedback.
    pub fn effective_feedforward(&self, state: &[f64], action: &[f64], t: usize) -> DVector<f64> {
        DVector::from_column_slice(action) - &self.gains[t] * DVector::from_column_slice(state)
    }

    /// Weighted maximum-likelihood refit of `k_t` and `C_t`. Weights must be
    /// non-negative with a positive sum; they are normalized here.
    pub fn wml_update(&self, batch: &[Rollout], weights: &[f64]) -> Result<Policy, PolicyError> {
        if batch.is_empty() || batch.len() != weights.len() {
            return Err(PolicyError::Weights(format!(
                "{} weights for {} samples",
                weights.len(),
                batch.len()
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(PolicyError::Weights("weights must be finite and non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(PolicyError::Weights("all weights are zero".into()));
        }
        for (i, r) in batch.iter().enumerate() {
            if r.actions.len() != self.steps()
                || r.trajectory.len() != self.steps() + 1
                || r.trajectory.dim() != self.state_dim()
                || r.actions.iter().any(|a| a.len() != self.action_dim())
            {
                return Err(PolicyError::Shape(format!("sample {i} does not match the policy")));
            }
        }
        let m = self.action_dim();
        let mut feedforward = Vec::with_capacity(self.steps());
        let mut covariances = Vec::with_capacity(self.steps());
        for t in 0..self.steps() {
            let ks: Vec<DVector<f64>> = batch
                .iter()
                .map(|r| self.effective_feedforward(r.trajectory.state(t), &r.actions[t], t))
                .collect();
            let mut mean = DVector::zeros(m);
            for (k, w) in ks.iter().zip(weights) {
                mean.axpy(w / total, k, 1.0);
            }
            let mut cov = DMatrix::identity(m, m) * COVARIANCE_FLOOR;
            for (k, w) in ks.iter().zip(weights) {
                let d = k - &mean;
                cov.ger(w / total, &d, &d, 1.0);
            }
            cov = (&cov + cov.transpose()) * 0.5;
            feedforward.push(mean);
            covariances.push(cov);
        }
        Policy::new(self.gains.clone(), feedforward, covariances)
    }

    /// Plain-text checkpoint: a header line, then one line per step with
    /// `K_t` (row-major), `k_t` and `C_t` (row-major).
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "# tlps-policy state_dim={} action_dim={} steps={}\n",
            self.state_dim(),
            self.action_dim(),
            self.steps()
        );
        for t in 0..self.steps() {
            let mut fields = Vec::new();
            let k = &self.gains[t];
            let c = &self.covariances[t];
            for i in 0..k.nrows() {
                fields.extend(k.row(i).iter().map(f64::to_string));
            }
            fields.extend(self.feedforward[t].iter().map(f64::to_string));
            for i in 0..c.nrows() {
                fields.extend(c.row(i).iter().map(f64::to_string));
            }
            let _ = writeln!(out, "{}", fields.join(" "));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Policy, PolicyError> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(PolicyError::Format {
            line: 1,
            message: "empty input".into(),
        })?;
        let header_err = |message: &str| PolicyError::Format {
            line: 1,
            message: message.into(),
        };
        let mut fields = header.split_whitespace();
        if fields.next() != Some("#") || fields.next() != Some("tlps-policy") {
            return Err(header_err("missing `# tlps-policy` header"));
        }
        let mut dims = [None; 3];
        for field in fields {
            let (key, value) = field.split_once('=').ok_or_else(|| header_err("malformed header field"))?;
            let slot = match key {
                "state_dim" => 0,
                "action_dim" => 1,
                "steps" => 2,
                _ => return Err(header_err("unknown header field")),
            };
            dims[slot] = Some(value.parse::<usize>().map_err(|_| header_err("bad header value"))?);
        }
        let [Some(n), Some(m), Some(steps)] = dims else {
            return Err(header_err("header must give state_dim, action_dim and steps"));
        };
        let width = m * n + m + m * m;
        let (mut gains, mut feedforward, mut covariances) = (vec![], vec![], vec![]);
        for (index, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let err = |message: String| PolicyError::Format {
                line: index + 1,
                message,
            };
            let values = line
                .split_whitespace()
                .map(|v| v.parse::<f64>().map_err(|_| err(format!("cannot parse `{v}`"))))
                .collect::<Result<Vec<f64>, _>>()?;
            if values.len() != width {
                return Err(err(format!("expected {width} values, found {}", values.len())));
            }
            gains.push(DMatrix::from_row_slice(m, n, &values[..m * n]));
            feedforward.push(DVector::from_column_slice(&values[m * n..m * n + m]));
            covariances.push(DMatrix::from_row_slice(m, m, &values[m * n + m..]));
        }
        if gains.len() != steps {
            return Err(PolicyError::Format {
                line: 1,
                message: format!("header announces {steps} steps, found {}", gains.len()),
            });
        }
        Policy::new(gains, feedforward, covariances)
    }
}
