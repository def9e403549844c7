//! Log-sum-exp smoothed robustness.
//!
//! [`build_dag`] unrolls a formula over a fixed horizon into a DAG of soft
//! max/min nodes whose leaves are predicate margins at specific timesteps.
//! Negation is pushed to the leaves (`-max(a, b) = min(-a, -b)`), so the DAG
//! holds only [`SoftNode::Max`], [`SoftNode::Min`], leaves and constants.
//!
//! With a single smoothness `β` shared by all nodes:
//!
//! ```text
//! softmax(x) = m + (1/β) ln Σ exp(β (x_i - m)),   m = max x_i
//! softmin(x) = m - (1/β) ln Σ exp(-β (x_i - m)),  m = min x_i
//! ```
//!
//! The DAG itself is immutable; every evaluation allocates its own scratch
//! buffers, so one DAG can be evaluated on many trajectories concurrently.

use std::collections::HashMap;

use thiserror::Error;

use crate::formula::{Formula, Predicate, RHO_MAX};
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SmoothingError {
    #[error("beta must be positive and finite, got {0}")]
    Beta(f64),
    #[error("horizon must be at least 1")]
    Horizon,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingParams {
    pub beta: f64,
    pub rho_max: f64,
}

impl SmoothingParams {
    pub fn new(beta: f64) -> Result<Self, SmoothingError> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(SmoothingError::Beta(beta));
        }
        Ok(Self {
            beta,
            rho_max: RHO_MAX,
        })
    }
}

pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq)]
pub enum SoftNode {
    /// `sign * margin(pred, s_t)`.
    Leaf { pred: usize, t: usize, sign: f64 },
    /// `sign * rho_max`.
    Const { sign: f64 },
    Max(Vec<NodeId>),
    Min(Vec<NodeId>),
}

/// Approximation slack: `M - lower <= M̂ <= M + upper`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorBound {
    pub lower: f64,
    pub upper: f64,
}

/// Node values and edge weights of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub values: Vec<f64>,
    weights: Vec<f64>,
    starts: Vec<usize>,
}

impl Forward {
    /// Value at the root.
    pub fn value(&self) -> f64 {
        *self.values.last().expect("non-empty DAG")
    }
}

/// Smoothed value with its gradient w.r.t. the flattened trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothEval {
    pub value: f64,
    /// State-major, length `T * n`.
    pub gradient: Vec<f64>,
    /// Leaves whose predicate gradient is undefined (distance at its center);
    /// they contribute zero.
    pub degenerate_leaves: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DagStats {
    pub leaves: usize,
    pub constants: usize,
    pub max_nodes: usize,
    pub min_nodes: usize,
    pub edges: usize,
}

/// Soft robustness DAG of a formula over a fixed horizon.
///
/// Nodes are stored in topological order (children before parents); the
/// root is the last node.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftDag {
    nodes: Vec<SoftNode>,
    preds: Vec<Predicate>,
    horizon: usize,
}

/// Unrolls `phi` over a horizon of `horizon` states.
pub fn build_dag(phi: &Formula, horizon: usize) -> Result<SoftDag, SmoothingError> {
    if horizon == 0 {
        return Err(SmoothingError::Horizon);
    }
    let mut b = Builder::default();
    b.index(phi);
    let root = b.build(phi, 0, horizon, false);
    debug_assert_eq!(root, b.nodes.len() - 1);
    Ok(SoftDag {
        nodes: b.nodes,
        preds: b.preds,
        horizon,
    })
}

pub fn smooth_robustness(dag: &SoftDag, tau: &Trajectory, params: &SmoothingParams) -> f64 {
    dag.smooth_value(tau, params)
}

pub fn smooth_gradient(dag: &SoftDag, tau: &Trajectory, params: &SmoothingParams) -> SmoothEval {
    dag.smooth_value_and_gradient(tau, params)
}

pub fn error_bound(dag: &SoftDag, params: &SmoothingParams) -> ErrorBound {
    dag.error_bound(params)
}

#[derive(Default)]
struct Builder {
    nodes: Vec<SoftNode>,
    preds: Vec<Predicate>,
    pred_ids: HashMap<*const Predicate, usize>,
    temporal: HashMap<*const Formula, bool>,
    memo: HashMap<(*const Formula, usize, usize, bool), NodeId>,
    leaves: HashMap<(usize, usize, bool), NodeId>,
    consts: [Option<NodeId>; 2],
}

impl Builder {
    fn index(&mut self, phi: &Formula) -> bool {
        let mut temporal = phi.is_temporal_op();
        for c in phi.children() {
            temporal |= self.index(c);
        }
        if let Formula::Pred(p) = phi {
            let id = match self.preds.iter().position(|q| q == p) {
                Some(id) => id,
                None => {
                    self.preds.push(p.clone());
                    self.preds.len() - 1
                }
            };
            self.pred_ids.insert(p as *const _, id);
        }
        self.temporal.insert(phi as *const _, temporal);
        temporal
    }

    fn push(&mut self, node: SoftNode) -> NodeId {
        self.nodes.push(node);
        self.nodes.len() - 1
    }

    fn constant(&mut self, positive: bool) -> NodeId {
        let slot = usize::from(positive);
        if let Some(id) = self.consts[slot] {
            return id;
        }
        let id = self.push(SoftNode::Const {
            sign: if positive { 1.0 } else { -1.0 },
        });
        self.consts[slot] = Some(id);
        id
    }

    /// `Max` of the children, or `Min` when `is_max` is false; a single child
    /// is returned as is.
    fn extremum(&mut self, is_max: bool, children: Vec<NodeId>) -> NodeId {
        debug_assert!(!children.is_empty());
        if children.len() == 1 {
            return children[0];
        }
        self.push(if is_max {
            SoftNode::Max(children)
        } else {
            SoftNode::Min(children)
        })
    }

    fn build(&mut self, phi: &Formula, t: usize, end: usize, neg: bool) -> NodeId {
        let key_end = if self.temporal[&(phi as *const _)] {
            end
        } else {
            usize::MAX
        };
        let key = (phi as *const Formula, t, key_end, neg);
        if let Some(&id) = self.memo.get(&key) {
            return id;
        }
        let id = match phi {
            Formula::True => self.constant(!neg),
            Formula::Pred(p) => {
                let pred = self.pred_ids[&(p as *const _)];
                match self.leaves.get(&(pred, t, neg)) {
                    Some(&id) => id,
                    None => {
                        let id = self.push(SoftNode::Leaf {
                            pred,
                            t,
                            sign: if neg { -1.0 } else { 1.0 },
                        });
                        self.leaves.insert((pred, t, neg), id);
                        id
                    }
                }
            }
            Formula::Not(a) => self.build(a, t, end, !neg),
            Formula::And(a, b) | Formula::Or(a, b) => {
                let ca = self.build(a, t, end, neg);
                let cb = self.build(b, t, end, neg);
                let is_max = matches!(phi, Formula::Or(..)) != neg;
                self.extremum(is_max, vec![ca, cb])
            }
            Formula::Implies(a, b) => {
                let ca = self.build(a, t, end, !neg);
                let cb = self.build(b, t, end, neg);
                self.extremum(!neg, vec![ca, cb])
            }
            Formula::Next(a) => {
                if t + 1 < end {
                    self.build(a, t + 1, end, neg)
                } else {
                    self.constant(neg)
                }
            }
            Formula::Always(a) | Formula::Eventually(a) => {
                let children = (t..end).map(|k| self.build(a, k, end, neg)).collect();
                let is_max = matches!(phi, Formula::Eventually(_)) != neg;
                self.extremum(is_max, children)
            }
            Formula::Until(a, b) | Formula::Then(a, b) => {
                let until = matches!(phi, Formula::Until(..));
                let mut anchors = Vec::with_capacity(end - t);
                for anchor in t..end {
                    let psi = self.build(b, anchor, end, neg);
                    let node = if until {
                        // min(psi, min_k phi_k), flattened into one node.
                        let mut children = vec![psi];
                        if anchor == t {
                            children.push(self.constant(!neg));
                        } else {
                            for k in t..anchor {
                                children.push(self.build(a, k, anchor + 1, neg));
                            }
                        }
                        self.extremum(neg, children)
                    } else {
                        // min(psi, max_k phi_k).
                        let prefix = if anchor == t {
                            self.constant(neg)
                        } else {
                            let inner = (t..anchor)
                                .map(|k| self.build(a, k, anchor + 1, neg))
                                .collect();
                            self.extremum(!neg, inner)
                        };
                        self.extremum(neg, vec![psi, prefix])
                    };
                    anchors.push(node);
                }
                self.extremum(!neg, anchors)
            }
        };
        self.memo.insert(key, id);
        id
    }
}

impl SoftDag {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn root(&self) -> NodeId {
        self.nodes.len() - 1
    }

    pub fn nodes(&self) -> &[SoftNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &SoftNode {
        &self.nodes[id]
    }

    pub fn predicates(&self) -> &[Predicate] {
        &self.preds
    }

    pub fn stats(&self) -> DagStats {
        let mut s = DagStats::default();
        for n in &self.nodes {
            match n {
                SoftNode::Leaf { .. } => s.leaves += 1,
                SoftNode::Const { .. } => s.constants += 1,
                SoftNode::Max(c) => {
                    s.max_nodes += 1;
                    s.edges += c.len();
                }
                SoftNode::Min(c) => {
                    s.min_nodes += 1;
                    s.edges += c.len();
                }
            }
        }
        s
    }

    fn check(&self, tau: &Trajectory) {
        assert_eq!(
            tau.len(),
            self.horizon,
            "trajectory length does not match the DAG horizon"
        );
    }

    fn leaf_value(&self, tau: &Trajectory, pred: usize, t: usize, sign: f64) -> f64 {
        sign * self.preds[pred].margin(tau.state(t))
    }

    /// Per-node smoothed values, in node order.
    pub fn smooth_values(&self, tau: &Trajectory, params: &SmoothingParams) -> Vec<f64> {
        self.forward(tau, params).values
    }

    pub fn smooth_value(&self, tau: &Trajectory, params: &SmoothingParams) -> f64 {
        self.forward(tau, params).value()
    }

    /// Forward pass that also keeps the softmax (softmin) weight of every
    /// edge, so a later [`SoftDag::backward`] needs no exponentials.
    pub fn forward(&self, tau: &Trajectory, params: &SmoothingParams) -> Forward {
        self.check(tau);
        let beta = params.beta;
        let mut values: Vec<f64> = Vec::with_capacity(self.nodes.len());
        let mut starts = Vec::with_capacity(self.nodes.len());
        let mut weights = Vec::new();
        for node in &self.nodes {
            starts.push(weights.len());
            let v = match node {
                SoftNode::Leaf { pred, t, sign } => self.leaf_value(tau, *pred, *t, *sign),
                SoftNode::Const { sign } => sign * params.rho_max,
                SoftNode::Max(children) | SoftNode::Min(children) => {
                    let b = if matches!(node, SoftNode::Max(_)) { beta } else { -beta };
                    let m = children
                        .iter()
                        .map(|&c| b * values[c])
                        .fold(f64::NEG_INFINITY, f64::max);
                    let first = weights.len();
                    let mut s = 0.0_f64;
                    for &c in children {
                        let e = (b * values[c] - m).exp();
                        s += e;
                        weights.push(e);
                    }
                    for w in &mut weights[first..] {
                        *w /= s;
                    }
                    (m + s.ln()) / b
                }
            };
            values.push(v);
        }
        Forward {
            values,
            weights,
            starts,
        }
    }

    /// Reverse sweep over a forward pass of `tau`. Each soft node hands its
    /// adjoint to its children in proportion to their edge weights.
    pub fn backward(&self, tau: &Trajectory, fwd: &Forward) -> SmoothEval {
        let dim = tau.dim();
        let mut adjoint = vec![0.0; self.nodes.len()];
        let mut gradient = vec![0.0; tau.as_flat().len()];
        let mut degenerate_leaves = 0;
        adjoint[self.root()] = 1.0;
        for (id, node) in self.nodes.iter().enumerate().rev() {
            let a = adjoint[id];
            if a == 0.0 {
                continue;
            }
            match node {
                SoftNode::Leaf { pred, t, sign } => {
                    let out = &mut gradient[t * dim..(t + 1) * dim];
                    if !self.preds[*pred].accumulate_margin_gradient(tau.state(*t), a * sign, out) {
                        degenerate_leaves += 1;
                    }
                }
                SoftNode::Const { .. } => {}
                SoftNode::Max(children) | SoftNode::Min(children) => {
                    let w = &fwd.weights[fwd.starts[id]..fwd.starts[id] + children.len()];
                    for (&c, wc) in children.iter().zip(w) {
                        adjoint[c] += a * wc;
                    }
                }
            }
        }
        SmoothEval {
            value: fwd.value(),
            gradient,
            degenerate_leaves,
        }
    }

    pub fn smooth_value_and_gradient(&self, tau: &Trajectory, params: &SmoothingParams) -> SmoothEval {
        self.backward(tau, &self.forward(tau, params))
    }

    /// Per-node values with hard max/min in place of the soft nodes.
    pub fn hard_values(&self, tau: &Trajectory, rho_max: f64) -> Vec<f64> {
        self.check(tau);
        let mut values = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let v = match node {
                SoftNode::Leaf { pred, t, sign } => self.leaf_value(tau, *pred, *t, *sign),
                SoftNode::Const { sign } => sign * rho_max,
                SoftNode::Max(children) => children
                    .iter()
                    .map(|&c| values[c])
                    .fold(f64::NEG_INFINITY, f64::max),
                SoftNode::Min(children) => children
                    .iter()
                    .map(|&c| values[c])
                    .fold(f64::INFINITY, f64::min),
            };
            values.push(v);
        }
        values
    }

    pub fn hard_value(&self, tau: &Trajectory) -> f64 {
        *self.hard_values(tau, RHO_MAX).last().expect("non-empty DAG")
    }

    /// Sub-gradient of the exact robustness along the active path: each
    /// max/min node follows its first child attaining the extremum.
    pub fn hard_subgradient(&self, tau: &Trajectory) -> Vec<f64> {
        let values = self.hard_values(tau, RHO_MAX);
        let dim = tau.dim();
        let mut gradient = vec![0.0; tau.as_flat().len()];
        let mut id = self.root();
        loop {
            match &self.nodes[id] {
                SoftNode::Leaf { pred, t, sign } => {
                    let out = &mut gradient[t * dim..(t + 1) * dim];
                    self.preds[*pred].accumulate_margin_gradient(tau.state(*t), *sign, out);
                    break;
                }
                SoftNode::Const { .. } => break,
                SoftNode::Max(children) | SoftNode::Min(children) => {
                    id = *children
                        .iter()
                        .find(|&&c| values[c] == values[id])
                        .expect("extremum is attained by a child");
                }
            }
        }
        gradient
    }

    /// Smallest gap between the best and second-best child over all max/min
    /// nodes, using exact values. Ties between two constant children are
    /// ignored since neither carries gradient.
    pub fn min_active_gap(&self, tau: &Trajectory) -> f64 {
        let values = self.hard_values(tau, RHO_MAX);
        let mut constant = vec![false; self.nodes.len()];
        for (id, node) in self.nodes.iter().enumerate() {
            constant[id] = match node {
                SoftNode::Leaf { .. } => false,
                SoftNode::Const { .. } => true,
                SoftNode::Max(c) | SoftNode::Min(c) => c.iter().all(|&k| constant[k]),
            };
        }
        let mut gap = f64::INFINITY;
        for node in &self.nodes {
            let (children, is_max) = match node {
                SoftNode::Max(c) => (c, true),
                SoftNode::Min(c) => (c, false),
                _ => continue,
            };
            let mut order: Vec<NodeId> = children.clone();
            order.sort_by(|&a, &b| {
                let ord = values[a].total_cmp(&values[b]);
                if is_max {
                    ord.reverse()
                } else {
                    ord
                }
            });
            let (first, second) = (order[0], order[1]);
            if constant[first] && constant[second] {
                continue;
            }
            gap = gap.min((values[first] - values[second]).abs());
        }
        gap
    }

    /// Approximation slack accumulated along the DAG: each soft max node
    /// with `N` children adds `ln(N)/β` to the upper slack of every path
    /// through it, each soft min node adds the same to the lower slack, and
    /// a node's slack is its own term plus the worst slack among its
    /// children.
    pub fn error_bound(&self, params: &SmoothingParams) -> ErrorBound {
        let mut lower = vec![0.0f64; self.nodes.len()];
        let mut upper = vec![0.0f64; self.nodes.len()];
        for (id, node) in self.nodes.iter().enumerate() {
            let (children, is_max) = match node {
                SoftNode::Max(c) => (c, true),
                SoftNode::Min(c) => (c, false),
                _ => continue,
            };
            let own = (children.len() as f64).ln() / params.beta;
            let lo = children.iter().map(|&c| lower[c]).fold(0.0, f64::max);
            let up = children.iter().map(|&c| upper[c]).fold(0.0, f64::max);
            if is_max {
                lower[id] = lo;
                upper[id] = up + own;
            } else {
                lower[id] = lo + own;
                upper[id] = up;
            }
        }
        ErrorBound {
            lower: lower[self.root()],
            upper: upper[self.root()],
        }
    }

    /// Merges every soft node into a parent of the same kind. With a shared
    /// `β` this leaves the smoothed value unchanged, since
    /// `lse(a, lse(b, c)) = lse(a, b, c)`, but shortens the paths that the
    /// error bound accumulates over.
    pub fn collapse(&self) -> SoftDag {
        let mut nodes: Vec<SoftNode> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let merged = match node {
                SoftNode::Max(children) => SoftNode::Max(splice(&nodes, children, true)),
                SoftNode::Min(children) => SoftNode::Min(splice(&nodes, children, false)),
                other => other.clone(),
            };
            nodes.push(merged);
        }
        // Drop nodes that are no longer reachable from the root.
        let root = nodes.len() - 1;
        let mut reachable = vec![false; nodes.len()];
        reachable[root] = true;
        for id in (0..nodes.len()).rev() {
            if !reachable[id] {
                continue;
            }
            if let SoftNode::Max(c) | SoftNode::Min(c) = &nodes[id] {
                for &k in c {
                    reachable[k] = true;
                }
            }
        }
        let mut remap = vec![usize::MAX; nodes.len()];
        let mut compact = Vec::new();
        for (id, node) in nodes.into_iter().enumerate() {
            if !reachable[id] {
                continue;
            }
            remap[id] = compact.len();
            compact.push(match node {
                SoftNode::Max(c) => SoftNode::Max(c.iter().map(|&k| remap[k]).collect()),
                SoftNode::Min(c) => SoftNode::Min(c.iter().map(|&k| remap[k]).collect()),
                other => other,
            });
        }
        SoftDag {
            nodes: compact,
            preds: self.preds.clone(),
            horizon: self.horizon,
        }
    }
}

fn splice(nodes: &[SoftNode], children: &[NodeId], is_max: bool) -> Vec<NodeId> {
    let mut out = Vec::with_capacity(children.len());
    for &c in children {
        match (&nodes[c], is_max) {
            (SoftNode::Max(grand), true) | (SoftNode::Min(grand), false) => {
                out.extend_from_slice(grand)
            }
            _ => out.push(c),
        }
    }
    out
}
