//! Fixed-horizon state trajectories and their CSV representation.

use std::io::{Read, Write};

use thiserror::Error;

use crate::formula::VariableMap;

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("trajectory must contain at least one state")]
    Empty,
    #[error("state {t} has {found} components, expected {expected}")]
    Dimension {
        t: usize,
        expected: usize,
        found: usize,
    },
    #[error("state {t} component {component} is not finite")]
    NonFinite { t: usize, component: usize },
    #[error("column mismatch: missing [{}], extra [{}]", .missing.join(", "), .extra.join(", "))]
    Columns {
        missing: Vec<String>,
        extra: Vec<String>,
    },
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Sequence of `T >= 1` states of a common dimension, stored state-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    dim: usize,
    data: Vec<f64>,
}

impl Trajectory {
    /// Wraps flat state-major data (`s_0` components, then `s_1`, ...).
    pub fn from_flat(dim: usize, data: Vec<f64>) -> Result<Self, TrajectoryError> {
        if dim == 0 || data.is_empty() {
            return Err(TrajectoryError::Empty);
        }
        if !data.len().is_multiple_of(dim) {
            return Err(TrajectoryError::Dimension {
                t: data.len() / dim,
                expected: dim,
                found: data.len() % dim,
            });
        }
        if let Some(k) = data.iter().position(|v| !v.is_finite()) {
            return Err(TrajectoryError::NonFinite {
                t: k / dim,
                component: k % dim,
            });
        }
        Ok(Self { dim, data })
    }

    pub fn from_states<S: AsRef<[f64]>>(states: &[S]) -> Result<Self, TrajectoryError> {
        let first = states.first().ok_or(TrajectoryError::Empty)?;
        let dim = first.as_ref().len();
        let mut data = Vec::with_capacity(dim * states.len());
        for (t, s) in states.iter().enumerate() {
            let s = s.as_ref();
            if s.len() != dim {
                return Err(TrajectoryError::Dimension {
                    t,
                    expected: dim,
                    found: s.len(),
                });
            }
            data.extend_from_slice(s);
        }
        Self::from_flat(dim, data)
    }

    /// One-dimensional trajectory from scalar samples.
    pub fn scalar(values: &[f64]) -> Result<Self, TrajectoryError> {
        Self::from_flat(1, values.to_vec())
    }

    /// Number of states `T`.
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn state(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn states(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.data
    }

    /// Squared Euclidean distance between two trajectories of equal shape.
    pub fn distance_sq(&self, other: &Trajectory) -> f64 {
        assert_eq!(self.data.len(), other.data.len(), "trajectory shapes differ");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    /// Writes the CSV form: a header of variable names ordered by state index,
    /// then one row per timestep.
    pub fn write_csv<W: Write>(&self, vars: &VariableMap, writer: W) -> Result<(), TrajectoryError> {
        if vars.dim() != self.dim {
            return Err(TrajectoryError::Dimension {
                t: 0,
                expected: vars.dim(),
                found: self.dim,
            });
        }
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(vars.names_by_index())?;
        for s in self.states() {
            w.write_record(s.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the CSV form. Columns may appear in any order but must name
    /// exactly the variables of `vars`.
    pub fn read_csv<R: Read>(vars: &VariableMap, reader: R) -> Result<Self, TrajectoryError> {
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        let missing: Vec<String> = vars
            .names_by_index()
            .into_iter()
            .filter(|n| !header.iter().any(|h| h == n))
            .map(str::to_string)
            .collect();
        let mut extra: Vec<String> = header
            .iter()
            .filter(|h| vars.index_of(h).is_none())
            .cloned()
            .collect();
        let mut seen = std::collections::HashSet::new();
        for h in &header {
            if !seen.insert(h) && !extra.contains(h) {
                extra.push(h.clone());
            }
        }
        if !missing.is_empty() || !extra.is_empty() {
            return Err(TrajectoryError::Columns { missing, extra });
        }
        let column_index: Vec<usize> = header
            .iter()
            .map(|h| vars.index_of(h).expect("checked above"))
            .collect();
        let dim = vars.dim();
        let mut data = Vec::new();
        for (row, record) in r.records().enumerate() {
            let record = record?;
            let mut state = vec![0.0; dim];
            for (field, &idx) in record.iter().zip(&column_index) {
                state[idx] = field.parse().map_err(|_| TrajectoryError::Row {
                    row: row + 1,
                    message: format!("cannot parse `{field}` as a number"),
                })?;
            }
            data.extend(state);
        }
        Self::from_flat(dim, data)
    }
}
