//! Nonlinear-program abstraction and a primal-dual interior-point solver.
//!
//! A problem is an ordered set of bounded scalar variables, a smooth
//! objective and a list of constraint blocks. Each block is a vector of
//! residuals tagged equality (`= 0`) or inequality (`<= 0`) with an analytic
//! sparse Jacobian. Blocks may also supply the curvature of their
//! multiplier-weighted residuals; blocks that do not are treated as linear by
//! the Newton model and the solver's regularization absorbs the difference.

mod derivcheck;
mod dump;
pub mod expr;
pub mod ldl;
mod solver;

use std::collections::HashSet;

use crate::error::{Error, Result};

pub use derivcheck::{check_derivatives, check_hessian, DerivativeEntry, DerivativeReport};
pub use dump::{NlpDump, NlpDumpBlock, NlpDumpVariable};
pub use expr::{Expr, ExprBlock, SumOfSquaresBlock, Term};
pub use solver::{solve, SolveOptions, SolveReport, SolveStatus};

#[derive(Debug, Clone, Default)]
pub struct VariableSet {
    names: Vec<String>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl VariableSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a variable and returns its index.
    pub fn add(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> usize {
        self.names.push(name.into());
        self.lower.push(lower);
        self.upper.push(upper);
        self.names.len() - 1
    }

    pub fn add_free(&mut self, name: impl Into<String>) -> usize {
        self.add(name, f64::NEG_INFINITY, f64::INFINITY)
    }

    pub fn add_fixed(&mut self, name: impl Into<String>, value: f64) -> usize {
        self.add(name, value, value)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Clamps a point into the box.
    pub fn project(&self, x: &mut [f64]) {
        for ((xi, &l), &u) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *xi = xi.max(l).min(u);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    /// Residual must vanish.
    Equality,
    /// Residual must be non-positive.
    Inequality,
}

impl ConstraintKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ConstraintKind::Equality => "equality",
            ConstraintKind::Inequality => "inequality",
        }
    }
}

/// A vector-valued residual function with analytic first derivatives.
///
/// `jacobian_structure` lists `(row, variable)` pairs; `jacobian` fills
/// values in that order. `hessian_structure` lists lower-triangular
/// `(i, j)` variable pairs with `i >= j`, and `hessian` fills
/// `sum_r multipliers[r] * d2 residual_r / dx_i dx_j` in that order.
pub trait ConstraintBlock: Send + Sync {
    fn name(&self) -> &str;
    fn kind(&self) -> ConstraintKind;
    fn len(&self) -> usize;
    fn jacobian_structure(&self) -> Vec<(usize, usize)>;
    fn evaluate(&self, x: &[f64], residual: &mut [f64]);
    fn jacobian(&self, x: &[f64], values: &mut [f64]);

    fn hessian_structure(&self) -> Vec<(usize, usize)> {
        Vec::new()
    }

    fn hessian(&self, _x: &[f64], _multipliers: &[f64], _values: &mut [f64]) {}

    fn row_label(&self, row: usize) -> String {
        format!("{}[{row}]", self.name())
    }

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Scalar objective with a dense gradient and optional sparse curvature.
pub trait Objective: Send + Sync {
    fn evaluate(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64], grad: &mut [f64]);

    fn hessian_structure(&self) -> Vec<(usize, usize)> {
        Vec::new()
    }

    fn hessian(&self, _x: &[f64], _values: &mut [f64]) {}
}

/// `sum_i quadratic_i x_i^2 + linear_i x_i + constant`.
#[derive(Debug, Clone, Default)]
pub struct SeparableQuadratic {
    pub terms: Vec<(usize, f64, f64)>,
    pub constant: f64,
}

impl Objective for SeparableQuadratic {
    fn evaluate(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(v, q, l)| q * x[v] * x[v] + l * x[v]).sum::<f64>()
    }

    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        grad.fill(0.0);
        for &(v, q, l) in &self.terms {
            grad[v] += 2.0 * q * x[v] + l;
        }
    }

    fn hessian_structure(&self) -> Vec<(usize, usize)> {
        self.terms.iter().filter(|t| t.1 != 0.0).map(|&(v, _, _)| (v, v)).collect()
    }

    fn hessian(&self, _x: &[f64], values: &mut [f64]) {
        for (slot, &(_, q, _)) in values.iter_mut().zip(self.terms.iter().filter(|t| t.1 != 0.0)) {
            *slot = 2.0 * q;
        }
    }
}

pub struct NlpProblem {
    pub variables: VariableSet,
    pub objective: Box<dyn Objective>,
    pub blocks: Vec<Box<dyn ConstraintBlock>>,
}

impl NlpProblem {
    pub fn new(variables: VariableSet, objective: Box<dyn Objective>) -> Self {
        Self { variables, objective, blocks: Vec::new() }
    }

    pub fn add_block(&mut self, block: impl ConstraintBlock + 'static) {
        self.blocks.push(Box::new(block));
    }

    pub fn n_variables(&self) -> usize {
        self.variables.len()
    }

    pub fn n_constraints(&self) -> usize {
        self.blocks.iter().map(|b| b.len()).sum()
    }

    pub fn block(&self, name: &str) -> Option<&dyn ConstraintBlock> {
        self.blocks.iter().find(|b| b.name() == name).map(|b| b.as_ref())
    }

    /// Structural checks: bounds ordered, names unique, derivative patterns
    /// within range.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_variables();
        let mut names = HashSet::new();
        for i in 0..n {
            let (l, u) = (self.variables.lower[i], self.variables.upper[i]);
            if l.is_nan() || u.is_nan() || l > u {
                return Err(Error::validation(self.variables.name(i), format!("bounds [{l}, {u}] are not ordered")));
            }
            if !names.insert(self.variables.name(i)) {
                return Err(Error::validation(self.variables.name(i), "duplicate variable name"));
            }
        }
        let mut blocks = HashSet::new();
        for b in &self.blocks {
            if !blocks.insert(b.name()) {
                return Err(Error::validation(b.name(), "duplicate constraint block name"));
            }
            if let Some(&(r, v)) = b.jacobian_structure().iter().find(|&&(r, v)| r >= b.len() || v >= n) {
                return Err(Error::validation(b.name(), format!("jacobian entry ({r}, {v}) out of range")));
            }
            if let Some(&(i, j)) = b.hessian_structure().iter().find(|&&(i, j)| i >= n || j > i) {
                return Err(Error::validation(b.name(), format!("hessian entry ({i}, {j}) not lower-triangular in range")));
            }
        }
        Ok(())
    }

    /// Residuals of every block, stacked in block order.
    pub fn evaluate_constraints(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_constraints()];
        let mut offset = 0;
        for b in &self.blocks {
            b.evaluate(x, &mut out[offset..offset + b.len()]);
            offset += b.len();
        }
        out
    }

    /// Largest bound or constraint violation at `x`, with the offending
    /// block (or `"bounds"`).
    pub fn max_violation(&self, x: &[f64]) -> (f64, String) {
        let mut worst = (0.0, String::from("none"));
        for i in 0..self.n_variables() {
            let v = (self.variables.lower[i] - x[i]).max(x[i] - self.variables.upper[i]);
            if v > worst.0 {
                worst = (v, "bounds".into());
            }
        }
        for b in &self.blocks {
            let mut r = vec![0.0; b.len()];
            b.evaluate(x, &mut r);
            let v = match b.kind() {
                ConstraintKind::Equality => r.iter().fold(0.0f64, |m, v| m.max(v.abs())),
                ConstraintKind::Inequality => r.iter().fold(0.0f64, |m, &v| m.max(v)),
            };
            if v > worst.0 {
                worst = (v, b.name().to_string());
            }
        }
        worst
    }
}
