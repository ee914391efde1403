//! Constraint rows built from a small vocabulary of smooth terms, with
//! exact first and second derivatives.
//!
//! Every power-flow style expression in the model is a sum of linear
//! terms, squares and products `x_a x_b (c cos(y_a - y_b) + s sin(y_a - y_b))`,
//! so one derivative routine serves the network equations, the generator
//! internal-voltage relations and the electrical-power rows alike.

use std::collections::HashMap;

use super::{ConstraintBlock, ConstraintKind};

const NONE: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Term {
    Constant(f64),
    Linear { var: usize, coef: f64 },
    /// `coef * x^2`
    Square { var: usize, coef: f64 },
    /// `x_ma * x_mb * (cos_coef * cos(x_ta - x_tb) + sin_coef * sin(x_ta - x_tb))`
    TrigProduct { ma: usize, mb: usize, ta: usize, tb: usize, cos_coef: f64, sin_coef: f64 },
}

/// Value, local variables, gradient and dense local Hessian of one term.
struct Local {
    vars: [usize; 4],
    n: usize,
    grad: [f64; 4],
    hess: [f64; 16],
}

impl Term {
    pub fn value(&self, x: &[f64]) -> f64 {
        match *self {
            Term::Constant(c) => c,
            Term::Linear { var, coef } => coef * x[var],
            Term::Square { var, coef } => coef * x[var] * x[var],
            Term::TrigProduct { ma, mb, ta, tb, cos_coef, sin_coef } => {
                let (s, c) = (x[ta] - x[tb]).sin_cos();
                x[ma] * x[mb] * (cos_coef * c + sin_coef * s)
            }
        }
    }

    fn var_list(&self) -> ([usize; 4], usize) {
        match *self {
            Term::Constant(_) => ([0; 4], 0),
            Term::Linear { var, .. } | Term::Square { var, .. } => ([var, 0, 0, 0], 1),
            Term::TrigProduct { ma, mb, ta, tb, .. } => ([ma, mb, ta, tb], 4),
        }
    }

    fn is_nonlinear(&self) -> bool {
        matches!(self, Term::Square { .. } | Term::TrigProduct { .. })
    }

    fn local(&self, x: &[f64]) -> Local {
        let (vars, n) = self.var_list();
        let mut grad = [0.0; 4];
        let mut hess = [0.0; 16];
        match *self {
            Term::Constant(_) => {}
            Term::Linear { coef, .. } => grad[0] = coef,
            Term::Square { var, coef } => {
                grad[0] = 2.0 * coef * x[var];
                hess[0] = 2.0 * coef;
            }
            Term::TrigProduct { ma, mb, ta, tb, cos_coef, sin_coef } => {
                let (s, c) = (x[ta] - x[tb]).sin_cos();
                let t = cos_coef * c + sin_coef * s;
                let dt = -cos_coef * s + sin_coef * c;
                let (a, b) = (x[ma], x[mb]);
                grad = [b * t, a * t, a * b * dt, -a * b * dt];
                let h = |i: usize, j: usize| i * 4 + j;
                let mut set = |i: usize, j: usize, v: f64| {
                    hess[h(i, j)] = v;
                    hess[h(j, i)] = v;
                };
                set(0, 1, t);
                set(0, 2, b * dt);
                set(0, 3, -b * dt);
                set(1, 2, a * dt);
                set(1, 3, -a * dt);
                set(2, 2, -a * b * t);
                set(2, 3, a * b * t);
                set(3, 3, -a * b * t);
            }
        }
        Local { vars, n, grad, hess }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Expr {
    pub terms: Vec<Term>,
}

impl Expr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, term: Term) -> &mut Self {
        self.terms.push(term);
        self
    }

    pub fn with(mut self, term: Term) -> Self {
        self.terms.push(term);
        self
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|t| t.value(x)).sum()
    }
}

/// Per-row sparsity bookkeeping shared by the block types below.
#[derive(Debug, Clone, Default)]
struct Layout {
    /// Row `r` owns Jacobian slots `jac_ptr[r]..jac_ptr[r + 1]`, one per
    /// local variable in ascending order.
    jac_ptr: Vec<usize>,
    jac_vars: Vec<usize>,
    /// Row `r` owns `hess_ptr[r]..hess_ptr[r + 1]` entries of `hess_map`,
    /// a packed lower triangle over its local variables.
    hess_ptr: Vec<usize>,
    hess_map: Vec<u32>,
    hess_structure: Vec<(usize, usize)>,
}

impl Layout {
    /// `rows[r]` lists the terms of row `r`; `dense[r]` requests a full local
    /// Hessian (needed when the row squares sub-expressions).
    fn build(rows: &[Vec<&Term>], dense: bool) -> Self {
        let mut layout = Layout { jac_ptr: vec![0], hess_ptr: vec![0], ..Default::default() };
        let mut slots: HashMap<(usize, usize), u32> = HashMap::new();
        for terms in rows {
            let mut vars: Vec<usize> = terms.iter().flat_map(|t| {
                let (v, n) = t.var_list();
                v.into_iter().take(n)
            }).collect();
            vars.sort_unstable();
            vars.dedup();
            let nl = vars.len();
            let mut map = vec![NONE; nl * (nl + 1) / 2];
            let mut claim = |a: usize, b: usize, map: &mut Vec<u32>| {
                let (a, b) = if a >= b { (a, b) } else { (b, a) };
                let key = (vars[a], vars[b]);
                let next = slots.len() as u32;
                let slot = *slots.entry(key).or_insert_with(|| {
                    layout.hess_structure.push(key);
                    next
                });
                map[a * (a + 1) / 2 + b] = slot;
            };
            if dense {
                for a in 0..nl {
                    for b in 0..=a {
                        claim(a, b, &mut map);
                    }
                }
            } else {
                for t in terms.iter().filter(|t| t.is_nonlinear()) {
                    let (tv, n) = t.var_list();
                    for p in 0..n {
                        for q in 0..n {
                            let a = vars.binary_search(&tv[p]).unwrap();
                            let b = vars.binary_search(&tv[q]).unwrap();
                            claim(a, b, &mut map);
                        }
                    }
                }
            }
            layout.jac_vars.extend_from_slice(&vars);
            layout.jac_ptr.push(layout.jac_vars.len());
            layout.hess_map.extend_from_slice(&map);
            layout.hess_ptr.push(layout.hess_map.len());
        }
        layout
    }

    fn row_vars(&self, r: usize) -> &[usize] {
        &self.jac_vars[self.jac_ptr[r]..self.jac_ptr[r + 1]]
    }

    fn jacobian_structure(&self) -> Vec<(usize, usize)> {
        (0..self.jac_ptr.len() - 1)
            .flat_map(|r| self.row_vars(r).iter().map(move |&v| (r, v)))
            .collect()
    }

    fn local_index(&self, r: usize, var: usize) -> usize {
        self.row_vars(r).binary_search(&var).expect("variable belongs to row")
    }

    fn hess_slot(&self, r: usize, a: usize, b: usize) -> u32 {
        let (a, b) = if a >= b { (a, b) } else { (b, a) };
        self.hess_map[self.hess_ptr[r] + a * (a + 1) / 2 + b]
    }

    /// Adds `scale * grad` of `term` into the row's Jacobian slots.
    fn add_gradient(&self, r: usize, local: &Local, scale: f64, values: &mut [f64]) {
        let base = self.jac_ptr[r];
        for p in 0..local.n {
            values[base + self.local_index(r, local.vars[p])] += scale * local.grad[p];
        }
    }

    /// Adds `scale * hess` of `term` into the block Hessian.
    fn add_hessian(&self, r: usize, local: &Local, scale: f64, values: &mut [f64]) {
        let mut idx = [0usize; 4];
        for p in 0..local.n {
            idx[p] = self.local_index(r, local.vars[p]);
        }
        for p in 0..local.n {
            for q in 0..local.n {
                let h = local.hess[p * 4 + q];
                if h == 0.0 || idx[p] < idx[q] {
                    continue;
                }
                let slot = self.hess_slot(r, idx[p], idx[q]);
                values[slot as usize] += scale * h;
            }
        }
    }
}

/// A constraint block whose rows are [`Expr`]s.
#[derive(Debug, Clone)]
pub struct ExprBlock {
    name: String,
    kind: ConstraintKind,
    rows: Vec<Expr>,
    labels: Vec<String>,
    layout: Layout,
}

impl ExprBlock {
    pub fn new(name: impl Into<String>, kind: ConstraintKind, rows: Vec<Expr>) -> Self {
        let refs: Vec<Vec<&Term>> = rows.iter().map(|e| e.terms.iter().collect()).collect();
        let layout = Layout::build(&refs, false);
        Self { name: name.into(), kind, rows, labels: Vec::new(), layout }
    }

    /// Attaches human-readable row labels used in diagnostics.
    pub fn with_labels(mut self, labels: Vec<String>) -> Self {
        assert_eq!(labels.len(), self.rows.len(), "one label per row");
        self.labels = labels;
        self
    }

    pub fn rows(&self) -> &[Expr] {
        &self.rows
    }
}

impl ConstraintBlock for ExprBlock {
    fn name(&self) -> &str {
        &self.name
    }

    fn kind(&self) -> ConstraintKind {
        self.kind
    }

    fn len(&self) -> usize {
        self.rows.len()
    }

    fn jacobian_structure(&self) -> Vec<(usize, usize)> {
        self.layout.jacobian_structure()
    }

    fn evaluate(&self, x: &[f64], residual: &mut [f64]) {
        for (r, e) in residual.iter_mut().zip(&self.rows) {
            *r = e.value(x);
        }
    }

    fn jacobian(&self, x: &[f64], values: &mut [f64]) {
        values.fill(0.0);
        for (r, e) in self.rows.iter().enumerate() {
            for t in &e.terms {
                self.layout.add_gradient(r, &t.local(x), 1.0, values);
            }
        }
    }

    fn hessian_structure(&self) -> Vec<(usize, usize)> {
        self.layout.hess_structure.clone()
    }

    fn hessian(&self, x: &[f64], multipliers: &[f64], values: &mut [f64]) {
        values.fill(0.0);
        for (r, e) in self.rows.iter().enumerate() {
            let lam = multipliers[r];
            if lam == 0.0 {
                continue;
            }
            for t in e.terms.iter().filter(|t| t.is_nonlinear()) {
                self.layout.add_hessian(r, &t.local(x), lam, values);
            }
        }
    }

    fn row_label(&self, row: usize) -> String {
        self.labels.get(row).cloned().unwrap_or_else(|| format!("{}[{row}]", self.name))
    }
}

/// Rows of the form `sum_k e_k(x)^2 - limit`, e.g. apparent-power limits
/// `P^2 + Q^2 - S_max^2 <= 0`.
#[derive(Debug, Clone)]
pub struct SumOfSquaresBlock {
    name: String,
    kind: ConstraintKind,
    rows: Vec<(Vec<Expr>, f64)>,
    labels: Vec<String>,
    layout: Layout,
}

impl SumOfSquaresBlock {
    pub fn new(name: impl Into<String>, kind: ConstraintKind, rows: Vec<(Vec<Expr>, f64)>) -> Self {
        let refs: Vec<Vec<&Term>> = rows.iter().map(|(parts, _)| parts.iter().flat_map(|e| e.terms.iter()).collect()).collect();
        let layout = Layout::build(&refs, true);
        Self { name: name.into(), kind, rows, labels: Vec::new(), layout }
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Self {
        assert_eq!(labels.len(), self.rows.len(), "one label per row");
        self.labels = labels;
        self
    }

    /// Dense local gradient of one part over the row's variables.
    fn part_gradient(&self, r: usize, part: &Expr, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for t in &part.terms {
            let l = t.local(x);
            for p in 0..l.n {
                out[self.layout.local_index(r, l.vars[p])] += l.grad[p];
            }
        }
    }
}

impl ConstraintBlock for SumOfSquaresBlock {
    fn name(&self) -> &str {
        &self.name
    }

    fn kind(&self) -> ConstraintKind {
        self.kind
    }

    fn len(&self) -> usize {
        self.rows.len()
    }

    fn jacobian_structure(&self) -> Vec<(usize, usize)> {
        self.layout.jacobian_structure()
    }

    fn evaluate(&self, x: &[f64], residual: &mut [f64]) {
        for (out, (parts, limit)) in residual.iter_mut().zip(&self.rows) {
            *out = parts.iter().map(|e| e.value(x).powi(2)).sum::<f64>() - limit;
        }
    }

    fn jacobian(&self, x: &[f64], values: &mut [f64]) {
        values.fill(0.0);
        for (r, (parts, _)) in self.rows.iter().enumerate() {
            let base = self.layout.jac_ptr[r];
            let nl = self.layout.row_vars(r).len();
            let mut g = vec![0.0; nl];
            for part in parts {
                let v = part.value(x);
                self.part_gradient(r, part, x, &mut g);
                for (slot, gi) in values[base..base + nl].iter_mut().zip(&g) {
                    *slot += 2.0 * v * gi;
                }
            }
        }
    }

    fn hessian_structure(&self) -> Vec<(usize, usize)> {
        self.layout.hess_structure.clone()
    }

    fn hessian(&self, x: &[f64], multipliers: &[f64], values: &mut [f64]) {
        values.fill(0.0);
        for (r, (parts, _)) in self.rows.iter().enumerate() {
            let lam = multipliers[r];
            if lam == 0.0 {
                continue;
            }
            let nl = self.layout.row_vars(r).len();
            let mut g = vec![0.0; nl];
            for part in parts {
                let v = part.value(x);
                self.part_gradient(r, part, x, &mut g);
                for a in 0..nl {
                    for b in 0..=a {
                        let slot = self.layout.hess_slot(r, a, b) as usize;
                        values[slot] += 2.0 * lam * g[a] * g[b];
                    }
                }
                for t in part.terms.iter().filter(|t| t.is_nonlinear()) {
                    self.layout.add_hessian(r, &t.local(x), 2.0 * lam * v, values);
                }
            }
        }
    }

    fn row_label(&self, row: usize) -> String {
        self.labels.get(row).cloned().unwrap_or_else(|| format!("{}[{row}]", self.name))
    }
}
