//! Abstract syntax for truncated linear temporal logic (TLTL) formulas.
//!
//! A [`Formula`] is built over [`Predicate`]s of the form `f(s) < c` or
//! `f(s) > c`, where `f` is a [`PredicateFn`] of the state vector. Formulas
//! are plain trees; they are immutable once built and can be shared freely
//! between threads.

use std::collections::HashSet;
use std::fmt;

use thiserror::Error;

/// Robustness assigned to the constant `true`.
///
/// Finite so that the smoothed robustness stays bounded and differentiable.
pub const RHO_MAX: f64 = 1.0e4;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VariableMapError {
    #[error("variable `{0}` declared more than once")]
    DuplicateName(String),
    #[error("state index {index} bound to both `{first}` and `{second}`")]
    DuplicateIndex {
        index: usize,
        first: String,
        second: String,
    },
    #[error("state indices must cover 0..{dim} exactly; index {missing} is not bound")]
    Gap { dim: usize, missing: usize },
}

/// Ordered binding of variable names to state-vector components.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct VariableMap {
    entries: Vec<(String, usize)>,
}

impl VariableMap {
    /// Builds a map, checking that names and indices are unique and that the
    /// indices cover `0..n` with no gaps.
    pub fn new<S: Into<String>>(
        entries: impl IntoIterator<Item = (S, usize)>,
    ) -> Result<Self, VariableMapError> {
        let entries: Vec<(String, usize)> =
            entries.into_iter().map(|(n, i)| (n.into(), i)).collect();
        let mut names = HashSet::new();
        for (name, _) in &entries {
            if !names.insert(name.as_str()) {
                return Err(VariableMapError::DuplicateName(name.clone()));
            }
        }
        let dim = entries.len();
        let mut owner: Vec<Option<&str>> = vec![None; dim];
        for (name, index) in &entries {
            if *index >= dim {
                // Some index below `dim` is necessarily unbound.
                let missing = (0..dim)
                    .find(|i| !entries.iter().any(|(_, j)| j == i))
                    .unwrap_or(0);
                return Err(VariableMapError::Gap { dim, missing });
            }
            if let Some(first) = owner[*index] {
                return Err(VariableMapError::DuplicateIndex {
                    index: *index,
                    first: first.to_string(),
                    second: name.clone(),
                });
            }
            owner[*index] = Some(name);
        }
        Ok(Self { entries })
    }

    /// Builds a map that binds `names[i]` to index `i`.
    pub fn from_names<S: Into<String>>(
        names: impl IntoIterator<Item = S>,
    ) -> Result<Self, VariableMapError> {
        Self::new(names.into_iter().enumerate().map(|(i, n)| (n, i)))
    }

    /// State dimension `n`.
    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, i)| *i)
    }

    pub fn name_of(&self, index: usize) -> Option<&str> {
        self.entries
            .iter()
            .find(|(_, i)| *i == index)
            .map(|(n, _)| n.as_str())
    }

    /// Entries in declaration order.
    pub fn entries(&self) -> &[(String, usize)] {
        &self.entries
    }

    /// Variable names ordered by state index.
    pub fn names_by_index(&self) -> Vec<&str> {
        (0..self.dim())
            .map(|i| self.name_of(i).expect("indices cover 0..n"))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Comparator {
    Lt,
    Gt,
}

impl Comparator {
    pub fn symbol(self) -> &'static str {
        match self {
            Comparator::Lt => "<",
            Comparator::Gt => ">",
        }
    }
}

/// Real-valued function of the state that a predicate thresholds.
#[derive(Debug, Clone, PartialEq)]
pub enum PredicateFn {
    /// `w·s + b`.
    Affine { coeffs: Vec<f64>, offset: f64 },
    /// Planar Euclidean distance between `(s[i], s[j])` and `center`.
    Distance {
        i: usize,
        j: usize,
        center: (f64, f64),
    },
}

impl PredicateFn {
    pub fn value(&self, s: &[f64]) -> f64 {
        match self {
            PredicateFn::Affine { coeffs, offset } => {
                coeffs.iter().zip(s).map(|(w, x)| w * x).sum::<f64>() + offset
            }
            PredicateFn::Distance { i, j, center } => {
                let dx = s[*i] - center.0;
                let dy = s[*j] - center.1;
                (dx * dx + dy * dy).sqrt()
            }
        }
    }

    /// Adds `scale * ∇f(s)` into `out`. Returns `false` when the gradient is
    /// undefined (distance evaluated at its center), in which case nothing is
    /// added.
    pub fn accumulate_gradient(&self, s: &[f64], scale: f64, out: &mut [f64]) -> bool {
        match self {
            PredicateFn::Affine { coeffs, .. } => {
                for (o, w) in out.iter_mut().zip(coeffs) {
                    *o += scale * w;
                }
                true
            }
            PredicateFn::Distance { i, j, center } => {
                let dx = s[*i] - center.0;
                let dy = s[*j] - center.1;
                let d = (dx * dx + dy * dy).sqrt();
                if d == 0.0 {
                    return false;
                }
                out[*i] += scale * dx / d;
                out[*j] += scale * dy / d;
                true
            }
        }
    }

    /// Checks the function against a state dimension.
    pub fn check_dim(&self, dim: usize) -> Result<(), String> {
        match self {
            PredicateFn::Affine { coeffs, offset } => {
                if coeffs.len() != dim {
                    return Err(format!(
                        "affine predicate has {} coefficients but the state has {} components",
                        coeffs.len(),
                        dim
                    ));
                }
                if !offset.is_finite() || coeffs.iter().any(|w| !w.is_finite()) {
                    return Err("affine predicate has a non-finite coefficient".into());
                }
                Ok(())
            }
            PredicateFn::Distance { i, j, center } => {
                if i == j {
                    return Err(format!("distance predicate uses component {i} twice"));
                }
                if *i >= dim || *j >= dim {
                    return Err(format!(
                        "distance predicate reads component {} but the state has {} components",
                        (*i).max(*j),
                        dim
                    ));
                }
                if !center.0.is_finite() || !center.1.is_finite() {
                    return Err("distance predicate has a non-finite center".into());
                }
                Ok(())
            }
        }
    }
}

/// Atomic proposition `f(s) ⋈ c`.
#[derive(Debug, Clone, PartialEq)]
pub struct Predicate {
    pub func: PredicateFn,
    pub cmp: Comparator,
    pub threshold: f64,
}

impl Predicate {
    pub fn new(func: PredicateFn, cmp: Comparator, threshold: f64) -> Self {
        Self {
            func,
            cmp,
            threshold,
        }
    }

    /// `c - f(s)` for `<`, `f(s) - c` for `>`.
    pub fn margin(&self, s: &[f64]) -> f64 {
        let v = self.func.value(s);
        match self.cmp {
            Comparator::Lt => self.threshold - v,
            Comparator::Gt => v - self.threshold,
        }
    }

    pub fn holds(&self, s: &[f64]) -> bool {
        let v = self.func.value(s);
        match self.cmp {
            Comparator::Lt => v < self.threshold,
            Comparator::Gt => v > self.threshold,
        }
    }

    /// Adds `scale * ∇margin(s)` into `out`; see [`PredicateFn::accumulate_gradient`].
    pub fn accumulate_margin_gradient(&self, s: &[f64], scale: f64, out: &mut [f64]) -> bool {
        let signed = match self.cmp {
            Comparator::Lt => -scale,
            Comparator::Gt => scale,
        };
        self.func.accumulate_gradient(s, signed, out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Formula {
    True,
    Pred(Predicate),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Eventually(Box<Formula>),
    Always(Box<Formula>),
    Until(Box<Formula>, Box<Formula>),
    Then(Box<Formula>, Box<Formula>),
    Next(Box<Formula>),
}

impl Formula {
    pub fn pred(p: Predicate) -> Self {
        Formula::Pred(p)
    }
    #[allow(clippy::should_implement_trait)]
    pub fn not(f: Formula) -> Self {
        Formula::Not(Box::new(f))
    }
    pub fn and(a: Formula, b: Formula) -> Self {
        Formula::And(Box::new(a), Box::new(b))
    }
    pub fn or(a: Formula, b: Formula) -> Self {
        Formula::Or(Box::new(a), Box::new(b))
    }
    pub fn implies(a: Formula, b: Formula) -> Self {
        Formula::Implies(Box::new(a), Box::new(b))
    }
    pub fn eventually(f: Formula) -> Self {
        Formula::Eventually(Box::new(f))
    }
    pub fn always(f: Formula) -> Self {
        Formula::Always(Box::new(f))
    }
    pub fn until(a: Formula, b: Formula) -> Self {
        Formula::Until(Box::new(a), Box::new(b))
    }
    pub fn then(a: Formula, b: Formula) -> Self {
        Formula::Then(Box::new(a), Box::new(b))
    }
    pub fn next(f: Formula) -> Self {
        Formula::Next(Box::new(f))
    }

    /// Left-nested conjunction of a non-empty list.
    pub fn conjunction(parts: impl IntoIterator<Item = Formula>) -> Option<Formula> {
        parts.into_iter().reduce(Formula::and)
    }

    pub fn children(&self) -> Vec<&Formula> {
        match self {
            Formula::True | Formula::Pred(_) => vec![],
            Formula::Not(a)
            | Formula::Eventually(a)
            | Formula::Always(a)
            | Formula::Next(a) => vec![a],
            Formula::And(a, b)
            | Formula::Or(a, b)
            | Formula::Implies(a, b)
            | Formula::Until(a, b)
            | Formula::Then(a, b) => vec![a, b],
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Formula::True => "True",
            Formula::Pred(_) => "Pred",
            Formula::Not(_) => "Not",
            Formula::And(..) => "And",
            Formula::Or(..) => "Or",
            Formula::Implies(..) => "Implies",
            Formula::Eventually(_) => "Eventually",
            Formula::Always(_) => "Always",
            Formula::Until(..) => "Until",
            Formula::Then(..) => "Then",
            Formula::Next(_) => "Next",
        }
    }

    pub fn is_temporal_op(&self) -> bool {
        matches!(
            self,
            Formula::Eventually(_)
                | Formula::Always(_)
                | Formula::Until(..)
                | Formula::Then(..)
                | Formula::Next(_)
        )
    }

    /// Whether any temporal operator occurs in this subtree.
    pub fn has_temporal(&self) -> bool {
        self.is_temporal_op() || self.children().into_iter().any(Formula::has_temporal)
    }

    pub fn depth(&self) -> usize {
        1 + self
            .children()
            .into_iter()
            .map(Formula::depth)
            .max()
            .unwrap_or(0)
    }

    pub fn node_count(&self) -> usize {
        1 + self
            .children()
            .into_iter()
            .map(Formula::node_count)
            .sum::<usize>()
    }

    /// Predicates in left-to-right order.
    pub fn predicates(&self) -> Vec<&Predicate> {
        let mut out = Vec::new();
        self.collect_predicates(&mut out);
        out
    }

    fn collect_predicates<'a>(&'a self, out: &mut Vec<&'a Predicate>) {
        if let Formula::Pred(p) = self {
            out.push(p);
        }
        for c in self.children() {
            c.collect_predicates(out);
        }
    }

    pub fn temporal_count(&self) -> usize {
        usize::from(self.is_temporal_op())
            + self
                .children()
                .into_iter()
                .map(Formula::temporal_count)
                .sum::<usize>()
    }

    /// Checks every predicate against the state dimension.
    pub fn check_dim(&self, dim: usize) -> Result<(), String> {
        for p in self.predicates() {
            p.func.check_dim(dim)?;
            if !p.threshold.is_finite() {
                return Err("predicate threshold is not finite".into());
            }
        }
        Ok(())
    }

    /// Renders the formula in the concrete syntax accepted by
    /// [`crate::parser::parse_formula`].
    pub fn display<'a>(&'a self, vars: &'a VariableMap) -> FormulaDisplay<'a> {
        FormulaDisplay { formula: self, vars }
    }

    /// Indented one-node-per-line rendering.
    pub fn tree_string(&self, vars: &VariableMap) -> String {
        let mut out = String::new();
        self.write_tree(vars, 0, &mut out);
        out
    }

    fn write_tree(&self, vars: &VariableMap, indent: usize, out: &mut String) {
        out.push_str(&"  ".repeat(indent));
        match self {
            Formula::True => out.push_str("True"),
            Formula::Pred(p) => {
                out.push_str("Pred ");
                out.push_str(&PredDisplay { pred: p, vars }.to_string());
            }
            other => out.push_str(other.kind_name()),
        }
        out.push('\n');
        for c in self.children() {
            c.write_tree(vars, indent + 1, out);
        }
    }
}

// Binding strength used by the printer; mirrors the parser's grammar levels.
const PREC_IMPLIES: u8 = 1;
const PREC_OR: u8 = 2;
const PREC_AND: u8 = 3;
const PREC_UNARY: u8 = 4;

pub struct FormulaDisplay<'a> {
    formula: &'a Formula,
    vars: &'a VariableMap,
}

impl fmt::Display for FormulaDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_formula(self.formula, self.vars, 0, f)
    }
}

fn write_formula(
    phi: &Formula,
    vars: &VariableMap,
    min_prec: u8,
    f: &mut fmt::Formatter<'_>,
) -> fmt::Result {
    let (prec, op) = match phi {
        Formula::And(..) => (PREC_AND, " & "),
        Formula::Or(..) => (PREC_OR, " | "),
        Formula::Implies(..) => (PREC_IMPLIES, " -> "),
        _ => (PREC_UNARY, ""),
    };
    let wrap = prec < min_prec;
    if wrap {
        f.write_str("(")?;
    }
    match phi {
        Formula::True => f.write_str("true")?,
        Formula::Pred(p) => write!(f, "{}", PredDisplay { pred: p, vars })?,
        Formula::Not(a) => {
            f.write_str("!")?;
            write_formula(a, vars, PREC_UNARY, f)?;
        }
        Formula::Eventually(a) | Formula::Always(a) | Formula::Next(a) => {
            let kw = match phi {
                Formula::Eventually(_) => "F ",
                Formula::Always(_) => "G ",
                _ => "X ",
            };
            f.write_str(kw)?;
            write_formula(a, vars, PREC_UNARY, f)?;
        }
        Formula::And(a, b) | Formula::Or(a, b) => {
            // Left-associative.
            write_formula(a, vars, prec, f)?;
            f.write_str(op)?;
            write_formula(b, vars, prec + 1, f)?;
        }
        Formula::Implies(a, b) => {
            // Right-associative.
            write_formula(a, vars, prec + 1, f)?;
            f.write_str(op)?;
            write_formula(b, vars, prec, f)?;
        }
        Formula::Until(a, b) | Formula::Then(a, b) => {
            let kw = if matches!(phi, Formula::Until(..)) {
                " U "
            } else {
                " T "
            };
            f.write_str("(")?;
            write_formula(a, vars, 0, f)?;
            f.write_str(kw)?;
            write_formula(b, vars, 0, f)?;
            f.write_str(")")?;
        }
    }
    if wrap {
        f.write_str(")")?;
    }
    Ok(())
}

struct PredDisplay<'a> {
    pred: &'a Predicate,
    vars: &'a VariableMap,
}

fn var_name(vars: &VariableMap, i: usize) -> String {
    vars.name_of(i)
        .map(str::to_string)
        .unwrap_or_else(|| format!("s{i}"))
}

impl fmt::Display for PredDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.pred.func {
            PredicateFn::Affine { coeffs, offset } => {
                let any_coeff = coeffs.iter().any(|w| *w != 0.0);
                let mut first = true;
                let mut term = |f: &mut fmt::Formatter<'_>, value: f64, name: Option<String>| {
                    let neg = value < 0.0;
                    let mag = value.abs();
                    match (first, neg) {
                        (true, true) => f.write_str("-")?,
                        (true, false) => {}
                        (false, true) => f.write_str(" - ")?,
                        (false, false) => f.write_str(" + ")?,
                    }
                    first = false;
                    match name {
                        Some(n) if mag == 1.0 => write!(f, "{n}"),
                        Some(n) => write!(f, "{mag}*{n}"),
                        None => write!(f, "{mag}"),
                    }
                };
                for (i, w) in coeffs.iter().enumerate() {
                    if *w != 0.0 {
                        term(f, *w, Some(var_name(self.vars, i)))?;
                    }
                }
                if *offset != 0.0 || !any_coeff {
                    term(f, *offset, None)?;
                }
            }
            PredicateFn::Distance { i, j, center } => {
                write!(
                    f,
                    "dist({}, {}; {}, {})",
                    var_name(self.vars, *i),
                    var_name(self.vars, *j),
                    center.0,
                    center.1
                )?;
            }
        }
        write!(f, " {} {}", self.pred.cmp.symbol(), self.pred.threshold)
    }
}
