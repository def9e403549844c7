//! Temporal logic policy search.
//!
//! Parses TLTL task specifications, evaluates their exact and log-sum-exp
//! smoothed robustness over state trajectories, and learns time-varying
//! linear-Gaussian policies that maximize expected robustness.

pub mod env;
pub mod formula;
pub mod parser;
pub mod policy;
pub mod report;
pub mod search;
pub mod semantics;
pub mod smoothing;
pub mod trajectory;

pub use formula::{Comparator, Formula, Predicate, PredicateFn, VariableMap, RHO_MAX};
pub use parser::{parse, parse_spec, ParseError, Spec};
pub use semantics::{eval_boolean, robustness};
pub use smoothing::{build_dag, error_bound, smooth_gradient, smooth_robustness, SmoothingParams, SoftDag, SoftNode};
pub use trajectory::Trajectory;
