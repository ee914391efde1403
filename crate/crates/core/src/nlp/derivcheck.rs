//! Finite-difference verification of analytic derivatives.

use std::collections::HashMap;

use serde::Serialize;

use super::NlpProblem;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivativeEntry {
    pub block: String,
    pub row: String,
    pub variable: String,
    pub analytic: f64,
    pub finite_difference: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivativeReport {
    /// Largest `|analytic - fd| / max(1, |analytic|)` over every Jacobian
    /// and objective-gradient entry, including entries outside the declared
    /// pattern (analytic value zero).
    pub max_rel_error: f64,
    pub worst: Option<DerivativeEntry>,
    pub entries_checked: usize,
}

fn step(x: f64) -> f64 {
    1e-6 * (1.0 + x.abs())
}

fn rel(a: f64, fd: f64) -> f64 {
    (a - fd).abs() / a.abs().max(1.0)
}

fn check_in_bounds(problem: &NlpProblem, x: &[f64]) -> Result<()> {
    if x.len() != problem.n_variables() {
        return Err(Error::Mismatch(format!("point has {} entries, problem has {} variables", x.len(), problem.n_variables())));
    }
    let (lo, up) = (problem.variables.lower(), problem.variables.upper());
    for i in 0..x.len() {
        if !(x[i] >= lo[i] && x[i] <= up[i]) {
            return Err(Error::Domain(format!("variable {} = {} lies outside [{}, {}]", problem.variables.name(i), x[i], lo[i], up[i])));
        }
    }
    Ok(())
}

/// Row owner lookup: global row -> (block index, local row).
fn row_owners(problem: &NlpProblem) -> Vec<(usize, usize)> {
    problem.blocks.iter().enumerate().flat_map(|(bi, b)| (0..b.len()).map(move |r| (bi, r))).collect()
}

/// Compares every analytic first derivative against central differences
/// with step `1e-6 (1 + |x_i|)`. The point must satisfy the variable bounds.
pub fn check_derivatives(problem: &NlpProblem, x: &[f64]) -> Result<DerivativeReport> {
    check_in_bounds(problem, x)?;
    let n = problem.n_variables();
    let owners = row_owners(problem);
    // Analytic Jacobian by column.
    let mut cols: Vec<HashMap<usize, f64>> = vec![HashMap::new(); n];
    let mut offset = 0;
    for b in &problem.blocks {
        let s = b.jacobian_structure();
        let mut v = vec![0.0; s.len()];
        b.jacobian(x, &mut v);
        for (&(r, var), &val) in s.iter().zip(&v) {
            *cols[var].entry(offset + r).or_insert(0.0) += val;
        }
        offset += b.len();
    }
    let mut grad = vec![0.0; n];
    problem.objective.gradient(x, &mut grad);

    let mut report = DerivativeReport { max_rel_error: 0.0, worst: None, entries_checked: 0 };
    let consider = |block: String, row: String, var: usize, a: f64, fd: f64, report: &mut DerivativeReport| {
        report.entries_checked += 1;
        let e = rel(a, fd);
        if e > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = report.max_rel_error.max(e);
            if e >= report.max_rel_error {
                report.worst = Some(DerivativeEntry {
                    block,
                    row,
                    variable: problem.variables.name(var).to_string(),
                    analytic: a,
                    finite_difference: fd,
                    rel_error: e,
                });
            }
        }
    };
    let mut xp = x.to_vec();
    for j in 0..n {
        let h = step(x[j]);
        xp[j] = x[j] + h;
        let (fp, cp) = (problem.objective.evaluate(&xp), problem.evaluate_constraints(&xp));
        xp[j] = x[j] - h;
        let (fm, cm) = (problem.objective.evaluate(&xp), problem.evaluate_constraints(&xp));
        xp[j] = x[j];
        let gfd = (fp - fm) / (2.0 * h);
        consider("objective".into(), "objective".into(), j, grad[j], gfd, &mut report);
        for r in 0..cp.len() {
            let fd = (cp[r] - cm[r]) / (2.0 * h);
            let a = cols[j].get(&r).copied();
            if a.is_none() && fd == 0.0 {
                continue;
            }
            let (bi, lr) = owners[r];
            let b = &problem.blocks[bi];
            consider(b.name().to_string(), b.row_label(lr), j, a.unwrap_or(0.0), fd, &mut report);
        }
    }
    Ok(report)
}

/// Compares the analytic Hessian of `f + multipliers^T c` against central
/// differences of the analytic gradient. Returns the largest relative error.
pub fn check_hessian(problem: &NlpProblem, x: &[f64], multipliers: &[f64]) -> Result<DerivativeReport> {
    check_in_bounds(problem, x)?;
    if multipliers.len() != problem.n_constraints() {
        return Err(Error::Mismatch("one multiplier per constraint row required".into()));
    }
    let n = problem.n_variables();
    let lagrangian_gradient = |xx: &[f64]| {
        let mut g = vec![0.0; n];
        problem.objective.gradient(xx, &mut g);
        let mut offset = 0;
        for b in &problem.blocks {
            let s = b.jacobian_structure();
            let mut v = vec![0.0; s.len()];
            b.jacobian(xx, &mut v);
            for (&(r, var), &val) in s.iter().zip(&v) {
                g[var] += multipliers[offset + r] * val;
            }
            offset += b.len();
        }
        g
    };
    let mut h: HashMap<(usize, usize), f64> = HashMap::new();
    let os = problem.objective.hessian_structure();
    let mut ov = vec![0.0; os.len()];
    problem.objective.hessian(x, &mut ov);
    for (&(i, j), &v) in os.iter().zip(&ov) {
        *h.entry((i.max(j), i.min(j))).or_insert(0.0) += v;
    }
    let mut offset = 0;
    for b in &problem.blocks {
        let s = b.hessian_structure();
        let mut v = vec![0.0; s.len()];
        b.hessian(x, &multipliers[offset..offset + b.len()], &mut v);
        for (&(i, j), &val) in s.iter().zip(&v) {
            *h.entry((i.max(j), i.min(j))).or_insert(0.0) += val;
        }
        offset += b.len();
    }
    let mut report = DerivativeReport { max_rel_error: 0.0, worst: None, entries_checked: 0 };
    let mut xp = x.to_vec();
    for j in 0..n {
        let hstep = step(x[j]);
        xp[j] = x[j] + hstep;
        let gp = lagrangian_gradient(&xp);
        xp[j] = x[j] - hstep;
        let gm = lagrangian_gradient(&xp);
        xp[j] = x[j];
        for i in j..n {
            let fd = (gp[i] - gm[i]) / (2.0 * hstep);
            let a = h.get(&(i, j)).copied().unwrap_or(0.0);
            if fd == 0.0 && a == 0.0 {
                continue;
            }
            report.entries_checked += 1;
            let e = rel(a, fd);
            if report.worst.is_none() || e > report.max_rel_error {
                report.max_rel_error = e;
                report.worst = Some(DerivativeEntry {
                    block: "lagrangian".into(),
                    row: problem.variables.name(i).to_string(),
                    variable: problem.variables.name(j).to_string(),
                    analytic: a,
                    finite_difference: fd,
                    rel_error: e,
                });
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nlp::{ConstraintBlock, ConstraintKind, Expr, ExprBlock, SeparableQuadratic, Term, VariableSet};

    struct WrongBlock;

    impl ConstraintBlock for WrongBlock {
        fn name(&self) -> &str {
            "wrong"
        }
        fn kind(&self) -> ConstraintKind {
            ConstraintKind::Equality
        }
        fn len(&self) -> usize {
            1
        }
        fn jacobian_structure(&self) -> Vec<(usize, usize)> {
            vec![(0, 0)]
        }
        fn evaluate(&self, x: &[f64], r: &mut [f64]) {
            r[0] = x[0] * x[0] + 3.0 * x[1];
        }
        fn jacobian(&self, x: &[f64], v: &mut [f64]) {
            v[0] = 2.0 * x[0];
        }
    }

    fn problem() -> NlpProblem {
        let mut vars = VariableSet::new();
        vars.add("a", -2.0, 2.0);
        vars.add("b", -2.0, 2.0);
        NlpProblem::new(vars, Box::new(SeparableQuadratic { terms: vec![(0, 1.5, 0.2)], constant: 0.0 }))
    }

    #[test]
    fn correct_derivatives_pass() {
        let mut p = problem();
        p.add_block(ExprBlock::new(
            "ok",
            ConstraintKind::Equality,
            vec![Expr::new().with(Term::TrigProduct { ma: 0, mb: 1, ta: 1, tb: 0, cos_coef: 0.3, sin_coef: 1.2 })],
        ));
        let r = check_derivatives(&p, &[0.4, -0.7]).unwrap();
        assert!(r.max_rel_error < 1e-8, "{r:?}");
        let h = check_hessian(&p, &[0.4, -0.7], &[1.3]).unwrap();
        assert!(h.max_rel_error < 1e-6, "{h:?}");
    }

    #[test]
    fn missing_pattern_entry_is_reported() {
        let mut p = problem();
        p.add_block(WrongBlock);
        let r = check_derivatives(&p, &[0.4, -0.7]).unwrap();
        let w = r.worst.unwrap();
        assert_eq!((w.block.as_str(), w.variable.as_str()), ("wrong", "b"));
        assert!((w.finite_difference - 3.0).abs() < 1e-8);
        assert!(r.max_rel_error > 1.0);
    }

    #[test]
    fn point_outside_bounds_is_rejected() {
        let p = problem();
        assert!(matches!(check_derivatives(&p, &[3.0, 0.0]), Err(Error::Domain(_))));
    }
}
