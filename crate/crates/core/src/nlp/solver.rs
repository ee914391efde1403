//! Primal-dual interior-point method with a log barrier.
//!
//! Inequalities `g(x) <= 0` are rewritten as `g(x) + s = 0, s >= 0`, and
//! variables with equal bounds are removed. Each iteration solves the
//! regularized primal-dual Newton system with the block LDLᵀ, using inertia
//! correction, fraction-to-boundary step rules, a filter line search with
//! second-order corrections (falling back to an l1 exact-penalty merit when
//! the filter blocks every trial step), and a monotone barrier update. The objective is scaled by its initial gradient; every reported
//! residual is unscaled.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::ldl::{sym_mul, BlockLdl, Inertia};
use super::{ConstraintKind, NlpProblem};
use crate::error::{Error, Result};

const NONE: usize = usize::MAX;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SolveOptions {
    /// Overall scaled KKT tolerance.
    pub tol: f64,
    /// Largest constraint violation accepted at termination.
    pub constr_viol_tol: f64,
    /// Largest unscaled stationarity residual accepted at termination.
    pub dual_inf_tol: f64,
    /// Largest complementarity residual accepted at termination.
    pub compl_inf_tol: f64,
    pub max_iter: usize,
    pub mu_init: f64,
    /// Estimate initial constraint multipliers by least squares.
    pub least_squares_init: bool,
    /// Relative distance by which the start point is moved inside its bounds.
    pub bound_push: f64,
    /// Start bound and slack multipliers at `mu_init / slack` instead of 1,
    /// which suits start points already close to a solution.
    pub warm_start: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            constr_viol_tol: 1e-12,
            dual_inf_tol: 1e-4,
            compl_inf_tol: 1e-6,
            max_iter: 500,
            mu_init: 0.1,
            least_squares_init: true,
            bound_push: 1e-2,
            warm_start: false,
        }
    }
}

impl SolveOptions {
    /// Settings for a start point that is nearly feasible and close to the
    /// optimum: a small initial barrier, a negligible bound push and
    /// multipliers consistent with it.
    pub fn warm_started() -> Self {
        Self { mu_init: 1e-3, bound_push: 1e-8, warm_start: true, ..Self::default() }
    }

    /// The same tolerances with the default cold-start settings.
    pub fn cold(&self) -> Self {
        let d = Self::default();
        Self { mu_init: d.mu_init, bound_push: d.bound_push, warm_start: d.warm_start, ..self.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    /// Stopped short of `tol` but within a looser acceptable level after
    /// the line search could make no further progress.
    Acceptable,
    Infeasible,
    #[serde(rename = "iteration_limit")]
    MaxIterations,
    NumericalFailure,
}

impl SolveStatus {
    pub fn is_success(self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::Acceptable)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub message: String,
    pub x: Vec<f64>,
    pub objective_value: f64,
    /// One multiplier per constraint row, stacked in block order, for the
    /// Lagrangian `f + lambda^T c`. Inequality multipliers are non-negative.
    pub multipliers: Vec<f64>,
    pub bound_multipliers_lower: Vec<f64>,
    pub bound_multipliers_upper: Vec<f64>,
    pub kkt_stationarity: f64,
    pub kkt_feasibility: f64,
    pub kkt_complementarity: f64,
    pub iterations: usize,
    /// Wall time; left out of serialized reports so outputs stay reproducible.
    #[serde(skip)]
    pub solve_seconds: f64,
    /// Block with the largest violation when the solve did not succeed.
    pub infeasible_block: Option<String>,
    pub infeasible_row: Option<String>,
}

impl SolveReport {
    /// Converts a non-successful status into an error.
    pub fn into_result(self) -> Result<Self> {
        if self.status.is_success() {
            Ok(self)
        } else {
            Err(Error::Solver { status: self.status, summary: self.summary() })
        }
    }

    pub fn summary(&self) -> String {
        let mut s = format!("{:?} after {} iterations: {}", self.status, self.iterations, self.message);
        if let Some(b) = &self.infeasible_row {
            s.push_str(&format!(" (largest violation in {b})"));
        }
        s
    }
}

/// KKT index layout and the mapping from problem derivatives to entries.
struct Layout {
    n: usize,
    nf: usize,
    ns: usize,
    m: usize,
    free: Vec<usize>,
    kpos: Vec<usize>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    block_offset: Vec<usize>,
    slack_of_row: Vec<usize>,
    row_of_slack: Vec<usize>,
    entries: Vec<(usize, usize)>,
    obj_hess: Vec<(usize, usize)>,
    obj_hess_entry: Vec<usize>,
    block_hess: Vec<Vec<(usize, usize)>>,
    block_hess_entry: Vec<Vec<usize>>,
    block_jac: Vec<Vec<(usize, usize)>>,
    block_jac_entry: Vec<Vec<usize>>,
    slack_entry: Vec<usize>,
}

impl Layout {
    fn new(p: &NlpProblem) -> Self {
        let n = p.n_variables();
        let (lo, up) = (p.variables.lower(), p.variables.upper());
        let free: Vec<usize> = (0..n).filter(|&i| lo[i] != up[i]).collect();
        let mut kpos = vec![NONE; n];
        for (k, &v) in free.iter().enumerate() {
            kpos[v] = k;
        }
        let nf = free.len();
        let mut block_offset = Vec::new();
        let mut slack_of_row = Vec::new();
        let mut row_of_slack = Vec::new();
        let mut m = 0;
        for b in &p.blocks {
            block_offset.push(m);
            for r in 0..b.len() {
                if b.kind() == ConstraintKind::Inequality {
                    slack_of_row.push(row_of_slack.len());
                    row_of_slack.push(m + r);
                } else {
                    slack_of_row.push(NONE);
                }
            }
            m += b.len();
        }
        let ns = row_of_slack.len();
        let nk = nf + ns + m;
        let mut entries: Vec<(usize, usize)> = (0..nk).map(|k| (k, k)).collect();
        let map = |s: &[(usize, usize)], entries: &mut Vec<(usize, usize)>| -> Vec<usize> {
            s.iter()
                .map(|&(i, j)| {
                    if kpos[i] == NONE || kpos[j] == NONE {
                        NONE
                    } else {
                        entries.push((kpos[i].min(kpos[j]), kpos[i].max(kpos[j])));
                        entries.len() - 1
                    }
                })
                .collect()
        };
        let obj_hess = p.objective.hessian_structure();
        let obj_hess_entry = map(&obj_hess, &mut entries);
        let block_hess: Vec<_> = p.blocks.iter().map(|b| b.hessian_structure()).collect();
        let block_hess_entry: Vec<_> = block_hess.iter().map(|s| map(s, &mut entries)).collect();
        let block_jac: Vec<_> = p.blocks.iter().map(|b| b.jacobian_structure()).collect();
        let mut block_jac_entry = Vec::new();
        for (bi, s) in block_jac.iter().enumerate() {
            block_jac_entry.push(
                s.iter()
                    .map(|&(r, v)| {
                        if kpos[v] == NONE {
                            NONE
                        } else {
                            entries.push((kpos[v], nf + ns + block_offset[bi] + r));
                            entries.len() - 1
                        }
                    })
                    .collect(),
            );
        }
        let mut slack_entry = Vec::new();
        for (j, &r) in row_of_slack.iter().enumerate() {
            entries.push((nf + j, nf + ns + r));
            slack_entry.push(entries.len() - 1);
        }
        let lower = free.iter().map(|&v| lo[v]).collect();
        let upper = free.iter().map(|&v| up[v]).collect();
        Self {
            n,
            nf,
            ns,
            m,
            free,
            kpos,
            lower,
            upper,
            block_offset,
            slack_of_row,
            row_of_slack,
            entries,
            obj_hess,
            obj_hess_entry,
            block_hess,
            block_hess_entry,
            block_jac,
            block_jac_entry,
            slack_entry,
        }
    }

    fn nk(&self) -> usize {
        self.nf + self.ns + self.m
    }

    /// Pivot pairs: every inequality row with its slack, every equality
    /// row with a distinct free variable of large Jacobian weight.
    fn pivot_pairs(&self, jac: &[Vec<f64>]) -> Vec<(usize, usize)> {
        let (nf, ns, m) = (self.nf, self.ns, self.m);
        let mut pairs: Vec<(usize, usize)> = self.row_of_slack.iter().enumerate().map(|(j, &r)| (nf + j, nf + ns + r)).collect();
        // Candidate (row, free var, relative weight) for equality rows.
        let mut row_max = vec![0.0f64; m];
        let mut cand = Vec::new();
        for (bi, s) in self.block_jac.iter().enumerate() {
            for (&(r, v), &val) in s.iter().zip(&jac[bi]) {
                let row = self.block_offset[bi] + r;
                if self.slack_of_row[row] != NONE || self.kpos[v] == NONE {
                    continue;
                }
                row_max[row] = row_max[row].max(val.abs());
                cand.push((row, self.kpos[v], val.abs()));
            }
        }
        let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
        for &(row, k, w) in &cand {
            let rel = if row_max[row] > 0.0 { w / row_max[row] } else { 0.0 };
            adj[row].push((k, rel));
        }
        for a in adj.iter_mut() {
            a.sort_by(|x, y| y.1.total_cmp(&x.1));
            a.dedup_by_key(|e| e.0);
        }
        let mut var_match = vec![NONE; nf];
        let mut row_match = vec![NONE; m];
        // Greedy on strong entries, then augmenting paths for the rest.
        let mut order: Vec<(usize, usize, f64)> = Vec::new();
        for (row, a) in adj.iter().enumerate() {
            for &(k, rel) in a {
                order.push((row, k, rel));
            }
        }
        order.sort_by(|x, y| y.2.total_cmp(&x.2));
        for &(row, k, rel) in &order {
            if rel >= 0.1 && row_match[row] == NONE && var_match[k] == NONE {
                row_match[row] = k;
                var_match[k] = row;
            }
        }
        let mut visited = vec![usize::MAX; nf];
        for row in 0..m {
            if self.slack_of_row[row] != NONE || row_match[row] != NONE || adj[row].is_empty() {
                continue;
            }
            augment(row, row, &adj, &mut row_match, &mut var_match, &mut visited);
        }
        for row in 0..m {
            if row_match[row] != NONE {
                pairs.push((row_match[row], nf + ns + row));
            }
        }
        pairs
    }
}

/// Iterative augmenting-path search for bipartite matching.
fn augment(
    root: usize,
    stamp: usize,
    adj: &[Vec<(usize, f64)>],
    row_match: &mut [usize],
    var_match: &mut [usize],
    visited: &mut [usize],
) -> bool {
    // Stack of (row, next adjacency index); parent var that led to each row.
    let mut stack: Vec<(usize, usize)> = vec![(root, 0)];
    let mut via: Vec<usize> = Vec::new();
    while let Some(&mut (row, ref mut idx)) = stack.last_mut() {
        if *idx >= adj[row].len() {
            stack.pop();
            via.pop();
            continue;
        }
        let k = adj[row][*idx].0;
        *idx += 1;
        if visited[k] == stamp {
            continue;
        }
        visited[k] = stamp;
        if var_match[k] == NONE {
            // Flip the path.
            via.push(k);
            for (level, &(r, _)) in stack.iter().enumerate() {
                let v = via[level];
                row_match[r] = v;
                var_match[v] = r;
            }
            return true;
        }
        via.push(k);
        stack.push((var_match[k], 0));
    }
    false
}

struct Point {
    x: Vec<f64>,
    s: Vec<f64>,
    f: f64,
    /// Raw constraint values `c(x)` or `g(x)` per row.
    c: Vec<f64>,
}

impl Point {
    fn new(p: &NlpProblem, x: Vec<f64>, s: Vec<f64>) -> Self {
        let f = p.objective.evaluate(&x);
        let c = p.evaluate_constraints(&x);
        Self { x, s, f, c }
    }
}

struct Solver<'a> {
    p: &'a NlpProblem,
    lay: Layout,
    ldl: BlockLdl,
    values: Vec<f64>,
    obj_scale: f64,
    mu: f64,
    tau: f64,
    nu: f64,
    delta_w_last: f64,
}

impl<'a> Solver<'a> {
    fn residual(&self, pt: &Point) -> Vec<f64> {
        let mut r = pt.c.clone();
        for (j, &row) in self.lay.row_of_slack.iter().enumerate() {
            r[row] += pt.s[j];
        }
        r
    }

    fn theta(&self, pt: &Point) -> f64 {
        self.residual(pt).iter().map(|v| v.abs()).sum()
    }

    fn jacobian(&self, x: &[f64]) -> Vec<Vec<f64>> {
        self.p
            .blocks
            .iter()
            .zip(&self.lay.block_jac)
            .map(|(b, s)| {
                let mut v = vec![0.0; s.len()];
                b.jacobian(x, &mut v);
                v
            })
            .collect()
    }

    /// `J^T y` over all variables.
    fn jt_y(&self, jac: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.lay.n];
        for (bi, s) in self.lay.block_jac.iter().enumerate() {
            let off = self.lay.block_offset[bi];
            for (&(r, v), &val) in s.iter().zip(&jac[bi]) {
                out[v] += val * y[off + r];
            }
        }
        out
    }

    fn barrier_value(&self, pt: &Point) -> f64 {
        let mut phi = self.obj_scale * pt.f;
        for (k, &v) in self.lay.free.iter().enumerate() {
            let x = pt.x[v];
            if self.lay.lower[k].is_finite() {
                phi -= self.mu * (x - self.lay.lower[k]).ln();
            }
            if self.lay.upper[k].is_finite() {
                phi -= self.mu * (self.lay.upper[k] - x).ln();
            }
        }
        for &s in &pt.s {
            phi -= self.mu * s.ln();
        }
        phi
    }

    fn merit(&self, pt: &Point) -> f64 {
        self.barrier_value(pt) + self.nu * self.theta(pt)
    }

    /// Fills the KKT value array except for the regularized diagonal.
    fn assemble(&mut self, x: &[f64], y: &[f64], jac: &[Vec<f64>], sigma_x: &[f64], sigma_s: &[f64]) {
        let lay = &self.lay;
        let v = &mut self.values;
        v.fill(0.0);
        let (nf, ns) = (lay.nf, lay.ns);
        v[..nf].copy_from_slice(sigma_x);
        v[nf..nf + ns].copy_from_slice(sigma_s);
        let mut h = vec![0.0; lay.obj_hess.len()];
        self.p.objective.hessian(x, &mut h);
        for (&e, &val) in lay.obj_hess_entry.iter().zip(&h) {
            if e != NONE {
                v[e] += self.obj_scale * val;
            }
        }
        for (bi, b) in self.p.blocks.iter().enumerate() {
            let s = &lay.block_hess[bi];
            if s.is_empty() {
                continue;
            }
            let off = lay.block_offset[bi];
            let mut h = vec![0.0; s.len()];
            b.hessian(x, &y[off..off + b.len()], &mut h);
            for (&e, &val) in lay.block_hess_entry[bi].iter().zip(&h) {
                if e != NONE {
                    v[e] += val;
                }
            }
        }
        for (bi, vals) in jac.iter().enumerate() {
            for (&e, &val) in lay.block_jac_entry[bi].iter().zip(vals) {
                if e != NONE {
                    v[e] = val;
                }
            }
        }
        for &e in &lay.slack_entry {
            v[e] = 1.0;
        }
    }

    fn regularized(&self, delta_w: f64, delta_c: f64) -> Vec<f64> {
        let mut v = self.values.clone();
        let (nf, ns, m) = (self.lay.nf, self.lay.ns, self.lay.m);
        for k in 0..nf + ns {
            v[k] += delta_w;
        }
        for k in nf + ns..nf + ns + m {
            v[k] -= delta_c;
        }
        v
    }

    /// Factors with inertia correction. Returns the regularized values.
    fn factor(&mut self) -> Option<Vec<f64>> {
        let want = Inertia { positive: self.lay.nf + self.lay.ns, negative: self.lay.m, zero: 0 };
        let mut delta_w = 0.0;
        let mut delta_c = 0.0;
        for attempt in 0..60 {
            let vals = self.regularized(delta_w, delta_c);
            let inertia = self.ldl.factor(&vals);
            if inertia == want {
                if delta_w > 0.0 {
                    self.delta_w_last = delta_w;
                }
                return Some(vals);
            }
            if inertia.zero > 0 && delta_c == 0.0 && attempt == 0 {
                delta_c = 1e-8 * self.mu.powf(0.25);
                continue;
            }
            delta_w = if delta_w == 0.0 {
                if self.delta_w_last == 0.0 { 1e-4 } else { (self.delta_w_last / 3.0).max(1e-20) }
            } else if self.delta_w_last == 0.0 {
                delta_w * 100.0
            } else {
                delta_w * 8.0
            };
            if delta_w > 1e40 {
                return None;
            }
        }
        None
    }

    /// Solves with iterative refinement against `vals`.
    fn solve_kkt(&self, vals: &[f64], rhs: &[f64]) -> Vec<f64> {
        let nk = rhs.len();
        let mut sol = rhs.to_vec();
        self.ldl.solve(&mut sol);
        let scale = 1.0 + rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut ax = vec![0.0; nk];
        for _ in 0..5 {
            sym_mul(&self.lay.entries, vals, &sol, &mut ax);
            let res: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
            let norm = res.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if norm <= 1e-14 * scale {
                break;
            }
            let mut corr = res;
            self.ldl.solve(&mut corr);
            for (s, c) in sol.iter_mut().zip(&corr) {
                *s += c;
            }
        }
        sol
    }
}

/// Solves the problem from `x0` (projected into the bounds).
pub fn solve(problem: &NlpProblem, x0: &[f64], opts: &SolveOptions) -> Result<SolveReport> {
    problem.validate()?;
    if x0.len() != problem.n_variables() {
        return Err(Error::Mismatch(format!("start point has {} entries, problem has {} variables", x0.len(), problem.n_variables())));
    }
    let start = Instant::now();
    let lay = Layout::new(problem);
    let (nf, ns, m) = (lay.nf, lay.ns, lay.m);
    let nk = lay.nk();

    // Initial point pushed into the interior.
    let mut x = x0.to_vec();
    problem.variables.project(&mut x);
    let bp = opts.bound_push;
    for (k, &v) in lay.free.iter().enumerate() {
        let (l, u) = (lay.lower[k], lay.upper[k]);
        let width = u - l;
        if l.is_finite() {
            let push = (bp * l.abs().max(1.0)).min(if u.is_finite() { bp * width } else { f64::INFINITY });
            x[v] = x[v].max(l + push);
        }
        if u.is_finite() {
            let push = (bp * u.abs().max(1.0)).min(if l.is_finite() { bp * width } else { f64::INFINITY });
            x[v] = x[v].min(u - push);
        }
    }
    let c0 = problem.evaluate_constraints(&x);
    let s: Vec<f64> = lay.row_of_slack.iter().map(|&r| (-c0[r]).max(bp)).collect();
    let mut pt = Point::new(problem, x, s);

    let mut grad = vec![0.0; lay.n];
    problem.objective.gradient(&pt.x, &mut grad);
    let gmax = lay.free.iter().fold(0.0f64, |a, &v| a.max(grad[v].abs()));
    let obj_scale = if gmax > 100.0 { 100.0 / gmax } else { 1.0 };

    let jac0: Vec<Vec<f64>> = problem
        .blocks
        .iter()
        .zip(&lay.block_jac)
        .map(|(b, s)| {
            let mut v = vec![0.0; s.len()];
            b.jacobian(&pt.x, &mut v);
            v
        })
        .collect();
    let pairs = lay.pivot_pairs(&jac0);
    let ldl = BlockLdl::analyze(nk, &lay.entries, &pairs)?;
    log::debug!("kkt dimension {nk}, {} entries, {} pivot pairs, {} factor blocks", lay.entries.len(), pairs.len(), ldl.factor_blocks());
    let n_entries = lay.entries.len();
    let mut sv = Solver {
        p: problem,
        lay,
        ldl,
        values: vec![0.0; n_entries],
        obj_scale,
        mu: opts.mu_init,
        tau: (1.0 - opts.mu_init).max(0.99),
        nu: 1.0,
        delta_w_last: 0.0,
    };
    let finite_l: Vec<bool> = sv.lay.lower.iter().map(|l| l.is_finite()).collect();
    let finite_u: Vec<bool> = sv.lay.upper.iter().map(|u| u.is_finite()).collect();
    let mut zl: Vec<f64> = finite_l.iter().map(|&f| if f { 1.0 } else { 0.0 }).collect();
    let mut zu: Vec<f64> = finite_u.iter().map(|&f| if f { 1.0 } else { 0.0 }).collect();
    let mut zs = vec![1.0; ns];
    if opts.warm_start {
        for (k, &v) in sv.lay.free.iter().enumerate() {
            if finite_l[k] {
                zl[k] = opts.mu_init / (pt.x[v] - sv.lay.lower[k]);
            }
            if finite_u[k] {
                zu[k] = opts.mu_init / (sv.lay.upper[k] - pt.x[v]);
            }
        }
        for (z, s) in zs.iter_mut().zip(&pt.s) {
            *z = opts.mu_init / s;
        }
    }
    let mut y = vec![0.0; m];

    if opts.least_squares_init && m > 0 {
        // [I J^T; J 0] [w; y] = [-(grad - z); 0]
        let mut vals = vec![0.0; n_entries];
        for k in 0..nf + ns {
            vals[k] = 1.0;
        }
        for (bi, vv) in jac0.iter().enumerate() {
            for (&e, &val) in sv.lay.block_jac_entry[bi].iter().zip(vv) {
                if e != NONE {
                    vals[e] = val;
                }
            }
        }
        for &e in &sv.lay.slack_entry {
            vals[e] = 1.0;
        }
        let inertia = sv.ldl.factor(&vals);
        if inertia.zero == 0 {
            let mut rhs = vec![0.0; nk];
            for (k, &v) in sv.lay.free.iter().enumerate() {
                rhs[k] = -(obj_scale * grad[v] - zl[k] + zu[k]);
            }
            rhs[nf..nf + ns].copy_from_slice(&zs[..ns]);
            let sol = sv.solve_kkt(&vals, &rhs);
            let yls = &sol[nf + ns..];
            if yls.iter().all(|v| v.abs() <= 1e3 && v.is_finite()) {
                y.copy_from_slice(yls);
            }
        }
    }

    let free = sv.lay.free.clone();
    let lower = sv.lay.lower.clone();
    let upper = sv.lay.upper.clone();
    let mut iter = 0;
    let mut best_theta = f64::INFINITY;
    let mut best_theta_iter = 0;
    let mut filter: Vec<(f64, f64)> = Vec::new();
    let mut filter_mu = f64::NAN;
    let mut filter_theta_max = f64::NAN;
    let mut filter_theta_min = f64::NAN;
    let (status, message) = loop {
        let jac = sv.jacobian(&pt.x);
        problem.objective.gradient(&pt.x, &mut grad);
        let jty = sv.jt_y(&jac, &y);
        let mut dual = vec![0.0; nf + ns];
        for (k, &v) in free.iter().enumerate() {
            dual[k] = obj_scale * grad[v] + jty[v] - zl[k] + zu[k];
        }
        for j in 0..ns {
            dual[nf + j] = y[sv.lay.row_of_slack[j]] - zs[j];
        }
        let cres = sv.residual(&pt);
        let theta_inf = cres.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let slack_l = |k: usize, x: &[f64]| x[free[k]] - lower[k];
        let slack_u = |k: usize, x: &[f64]| upper[k] - x[free[k]];
        let compl = |mu: f64| {
            let mut e = 0.0f64;
            for k in 0..nf {
                if finite_l[k] {
                    e = e.max((slack_l(k, &pt.x) * zl[k] - mu).abs());
                }
                if finite_u[k] {
                    e = e.max((slack_u(k, &pt.x) * zu[k] - mu).abs());
                }
            }
            for j in 0..ns {
                e = e.max((pt.s[j] * zs[j] - mu).abs());
            }
            e
        };
        let zsum: f64 = zl.iter().chain(&zu).chain(&zs).map(|v| v.abs()).sum();
        let ysum: f64 = y.iter().map(|v| v.abs()).sum();
        let nz = (finite_l.iter().filter(|&&f| f).count() + finite_u.iter().filter(|&&f| f).count() + ns).max(1);
        let sd = ((ysum + zsum) / (m + nz) as f64).max(100.0) / 100.0;
        let sc = (zsum / nz as f64).max(100.0) / 100.0;
        let dual_inf = dual.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let err0 = (dual_inf / sd).max(theta_inf).max(compl(0.0) / sc);
        log::debug!(
            "iter {iter:4} obj {:.10e} inf_pr {theta_inf:.2e} inf_du {dual_inf:.2e} mu {:.1e} dw {:.1e}",
            pt.f,
            sv.mu,
            sv.delta_w_last
        );
        if err0 <= opts.tol && theta_inf <= opts.constr_viol_tol && dual_inf / obj_scale <= opts.dual_inf_tol && compl(0.0) <= opts.compl_inf_tol {
            break (SolveStatus::Optimal, "converged".to_string());
        }
        let mu_min = opts.tol / 10.0;
        loop {
            let err_mu = (dual_inf / sd).max(theta_inf).max(compl(sv.mu) / sc);
            if err_mu > 10.0 * sv.mu || sv.mu <= mu_min {
                break;
            }
            sv.mu = mu_min.max((0.2 * sv.mu).min(sv.mu.powf(1.5)));
            sv.tau = (1.0 - sv.mu).max(0.99);
        }
        if iter >= opts.max_iter {
            break (SolveStatus::MaxIterations, format!("iteration limit {} reached", opts.max_iter));
        }
        let theta1 = cres.iter().map(|v| v.abs()).sum::<f64>();
        if theta1 < 0.99 * best_theta {
            best_theta = theta1;
            best_theta_iter = iter;
        } else if iter - best_theta_iter > 100 && theta_inf > 1e-6 {
            break (SolveStatus::Infeasible, "constraint violation stopped decreasing".to_string());
        }

        // Newton system.
        let mut sigma_x = vec![0.0; nf];
        for k in 0..nf {
            if finite_l[k] {
                sigma_x[k] += zl[k] / slack_l(k, &pt.x);
            }
            if finite_u[k] {
                sigma_x[k] += zu[k] / slack_u(k, &pt.x);
            }
        }
        let sigma_s: Vec<f64> = (0..ns).map(|j| zs[j] / pt.s[j]).collect();
        sv.assemble(&pt.x.clone(), &y, &jac, &sigma_x, &sigma_s);
        let Some(vals) = sv.factor() else {
            break (SolveStatus::NumericalFailure, "could not regularize the KKT matrix".to_string());
        };
        let mu = sv.mu;
        let mut grad_phi = vec![0.0; nf + ns];
        for k in 0..nf {
            let v = free[k];
            let mut g = obj_scale * grad[v];
            if finite_l[k] {
                g -= mu / slack_l(k, &pt.x);
            }
            if finite_u[k] {
                g += mu / slack_u(k, &pt.x);
            }
            grad_phi[k] = g;
        }
        for j in 0..ns {
            grad_phi[nf + j] = -mu / pt.s[j];
        }
        let mut rhs = vec![0.0; nk];
        for k in 0..nf {
            rhs[k] = -(grad_phi[k] + jty[free[k]]);
        }
        for j in 0..ns {
            rhs[nf + j] = -(grad_phi[nf + j] + y[sv.lay.row_of_slack[j]]);
        }
        for r in 0..m {
            rhs[nf + ns + r] = -cres[r];
        }
        let d = sv.solve_kkt(&vals, &rhs);
        if d.iter().any(|v| !v.is_finite()) {
            break (SolveStatus::NumericalFailure, "non-finite search direction".to_string());
        }
        let (dxs, dy) = d.split_at(nf + ns);

        // Bound multiplier steps.
        let mut dzl = vec![0.0; nf];
        let mut dzu = vec![0.0; nf];
        for k in 0..nf {
            if finite_l[k] {
                let sl = slack_l(k, &pt.x);
                dzl[k] = mu / sl - zl[k] - zl[k] / sl * dxs[k];
            }
            if finite_u[k] {
                let su = slack_u(k, &pt.x);
                dzu[k] = mu / su - zu[k] + zu[k] / su * dxs[k];
            }
        }
        let dzs: Vec<f64> = (0..ns).map(|j| mu / pt.s[j] - zs[j] - zs[j] / pt.s[j] * dxs[nf + j]).collect();

        let tau = sv.tau;
        let max_step = |dx: &[f64], pt: &Point| {
            let mut a = 1.0f64;
            for k in 0..nf {
                if finite_l[k] && dx[k] < 0.0 {
                    a = a.min(-tau * slack_l(k, &pt.x) / dx[k]);
                }
                if finite_u[k] && dx[k] > 0.0 {
                    a = a.min(tau * slack_u(k, &pt.x) / dx[k]);
                }
            }
            for j in 0..ns {
                if dx[nf + j] < 0.0 {
                    a = a.min(-tau * pt.s[j] / dx[nf + j]);
                }
            }
            a
        };
        let alpha_max = max_step(dxs, &pt);
        let mut alpha_z = 1.0f64;
        for k in 0..nf {
            if dzl[k] < 0.0 {
                alpha_z = alpha_z.min(-tau * zl[k] / dzl[k]);
            }
            if dzu[k] < 0.0 {
                alpha_z = alpha_z.min(-tau * zu[k] / dzu[k]);
            }
        }
        for j in 0..ns {
            if dzs[j] < 0.0 {
                alpha_z = alpha_z.min(-tau * zs[j] / dzs[j]);
            }
        }

        // Penalty parameter and directional derivative of the merit.
        let gd: f64 = grad_phi.iter().zip(dxs).map(|(g, d)| g * d).sum();
        let mut primal = d.clone();
        primal[nf + ns..].fill(0.0);
        let mut kp = vec![0.0; nk];
        sym_mul(&sv.lay.entries, &vals, &primal, &mut kp);
        let curv: f64 = kp.iter().zip(&primal).map(|(a, b)| a * b).sum::<f64>().max(0.0);
        if theta1 > 0.0 {
            let need = (gd + 0.5 * curv) / (0.9 * theta1);
            if sv.nu < need {
                sv.nu = need + 1.0;
            }
        }
        let dphi = gd - sv.nu * theta1;
        let phi0 = sv.merit(&pt);

        let trial = |alpha: f64, dir: &[f64]| -> Point {
            let mut x = pt.x.clone();
            for k in 0..nf {
                x[free[k]] += alpha * dir[k];
            }
            let s: Vec<f64> = (0..ns).map(|j| pt.s[j] + alpha * dir[nf + j]).collect();
            Point::new(problem, x, s)
        };
        let tiny = (0..nf).all(|k| (dxs[k]).abs() <= 1e-15 * (1.0 + pt.x[free[k]].abs()));
        if filter_theta_max.is_nan() {
            filter_theta_max = 1e4 * theta1.max(1.0);
            filter_theta_min = 1e-4 * theta1.max(1.0);
        }
        if sv.mu != filter_mu {
            filter.clear();
            filter_mu = sv.mu;
        }
        let bar0 = sv.barrier_value(&pt);
        // Filter test: Some(true) for an Armijo step on the barrier function,
        // Some(false) for a step that only improves on the filter.
        let filter_accepts = |cand: &Point, alpha: f64, sv: &Solver| -> Option<bool> {
            let th = sv.theta(cand);
            let ph = sv.barrier_value(cand);
            if !ph.is_finite() || th > filter_theta_max || filter.iter().any(|&(ft, fp)| th >= ft && ph >= fp) {
                return None;
            }
            let switching = gd < 0.0 && alpha * (-gd).powf(2.3) > theta1.powf(1.1);
            if theta1 <= filter_theta_min && switching {
                (ph <= bar0 + 1e-4 * alpha * gd + 10.0 * f64::EPSILON * bar0.abs()).then_some(true)
            } else {
                (th <= (1.0 - 1e-5) * theta1 || ph <= bar0 - 1e-5 * theta1).then_some(false)
            }
        };
        let mut alpha = alpha_max;
        let mut accepted: Option<(Point, f64, Option<Vec<f64>>)> = None;
        let mut armijo = true;
        if tiny {
            accepted = Some((trial(alpha, dxs), alpha, None));
        }
        while accepted.is_none() && alpha > 1e-10 * alpha_max.max(1e-2) {
            let cand = trial(alpha, dxs);
            if let Some(kind) = filter_accepts(&cand, alpha, &sv) {
                armijo = kind;
                accepted = Some((cand, alpha, None));
                break;
            }
            if alpha == alpha_max && theta1 > 0.0 && sv.theta(&cand) >= theta1 {
                // Second-order corrections on the constraint residual.
                let mut c_soc: Vec<f64> = cres.clone();
                let mut cand = cand;
                let mut a_soc = alpha;
                let mut theta_prev = theta1;
                for _ in 0..4 {
                    let cres_trial = sv.residual(&cand);
                    let mut rhs_soc = rhs.clone();
                    for r in 0..m {
                        c_soc[r] = a_soc * c_soc[r] + cres_trial[r];
                        rhs_soc[nf + ns + r] = -c_soc[r];
                    }
                    let dsoc = sv.solve_kkt(&vals, &rhs_soc);
                    a_soc = max_step(&dsoc[..nf + ns], &pt);
                    cand = trial(a_soc, &dsoc[..nf + ns]);
                    if let Some(kind) = filter_accepts(&cand, alpha, &sv) {
                        armijo = kind;
                        accepted = Some((cand, a_soc, Some(dsoc[nf + ns..].to_vec())));
                        break;
                    }
                    let th = sv.theta(&cand);
                    if th > 0.99 * theta_prev {
                        break;
                    }
                    theta_prev = th;
                }
                if accepted.is_some() {
                    break;
                }
            }
            alpha *= 0.5;
        }
        if accepted.is_some() {
            if !armijo {
                filter.push(((1.0 - 1e-5) * theta1, bar0 - 1e-5 * theta1));
            }
        } else {
            // Fall back to the exact-penalty merit, which also serves to
            // leave a region the filter has blocked.
            filter.clear();
            alpha = alpha_max;
            let mut soc_tried = false;
            while alpha > 1e-14 {
                let cand = trial(alpha, dxs);
                let phi = sv.merit(&cand);
                if phi.is_finite() && phi <= phi0 + 1e-4 * alpha * dphi + 10.0 * f64::EPSILON * phi0.abs() {
                    accepted = Some((cand, alpha, None));
                    break;
                }
                if !soc_tried && alpha == alpha_max && theta1 > 0.0 {
                    soc_tried = true;
                    let cres_trial = sv.residual(&cand);
                    let mut rhs_soc = rhs.clone();
                    for r in 0..m {
                        rhs_soc[nf + ns + r] = -(alpha * cres[r] + cres_trial[r]);
                    }
                    let dsoc = sv.solve_kkt(&vals, &rhs_soc);
                    let a_soc = max_step(&dsoc[..nf + ns], &pt);
                    let cand = trial(a_soc, &dsoc[..nf + ns]);
                    let phi = sv.merit(&cand);
                    if phi.is_finite() && phi <= phi0 + 1e-4 * alpha * dphi + 10.0 * f64::EPSILON * phi0.abs() {
                        accepted = Some((cand, a_soc, Some(dsoc[nf + ns..].to_vec())));
                        break;
                    }
                }
                alpha *= 0.5;
            }
        }
        let Some((next, alpha, dy_soc)) = accepted else {
            let acceptable = err0 <= 1e3 * opts.tol && theta_inf <= 1e3 * opts.constr_viol_tol;
            if acceptable {
                break (SolveStatus::Acceptable, "line search stalled near a solution".to_string());
            }
            if theta_inf > 1e-6 {
                break (SolveStatus::Infeasible, "line search failed while constraints are violated".to_string());
            }
            break (SolveStatus::NumericalFailure, "line search failed".to_string());
        };
        log::trace!("alpha {alpha:.3e} (max {alpha_max:.3e}, soc {})", dy_soc.is_some());
        let dy = dy_soc.as_deref().unwrap_or(dy);
        for r in 0..m {
            y[r] += alpha * dy[r];
        }
        pt = next;
        let kappa = 1e10;
        for k in 0..nf {
            if finite_l[k] {
                let sl = slack_l(k, &pt.x);
                zl[k] = (zl[k] + alpha_z * dzl[k]).clamp(sv.mu / (kappa * sl), kappa * sv.mu / sl);
            }
            if finite_u[k] {
                let su = slack_u(k, &pt.x);
                zu[k] = (zu[k] + alpha_z * dzu[k]).clamp(sv.mu / (kappa * su), kappa * sv.mu / su);
            }
        }
        for j in 0..ns {
            let s = pt.s[j];
            zs[j] = (zs[j] + alpha_z * dzs[j]).clamp(sv.mu / (kappa * s), kappa * sv.mu / s);
        }
        iter += 1;
    };

    // Unscaled diagnostics at the final point.
    let jac = sv.jacobian(&pt.x);
    problem.objective.gradient(&pt.x, &mut grad);
    let lambda: Vec<f64> = y.iter().map(|v| v / obj_scale).collect();
    let jtl = sv.jt_y(&jac, &lambda);
    let mut stationarity = 0.0f64;
    let mut lower_mult = vec![0.0; sv.lay.n];
    let mut upper_mult = vec![0.0; sv.lay.n];
    for (k, &v) in sv.lay.free.iter().enumerate() {
        lower_mult[v] = zl[k] / obj_scale;
        upper_mult[v] = zu[k] / obj_scale;
        stationarity = stationarity.max((grad[v] + jtl[v] - lower_mult[v] + upper_mult[v]).abs());
    }
    for j in 0..ns {
        stationarity = stationarity.max((lambda[sv.lay.row_of_slack[j]] - zs[j] / obj_scale).abs());
    }
    let mut complementarity = 0.0f64;
    for (k, &v) in sv.lay.free.iter().enumerate() {
        if finite_l[k] {
            complementarity = complementarity.max((pt.x[v] - sv.lay.lower[k]) * zl[k] / obj_scale);
        }
        if finite_u[k] {
            complementarity = complementarity.max((sv.lay.upper[k] - pt.x[v]) * zu[k] / obj_scale);
        }
    }
    for j in 0..ns {
        complementarity = complementarity.max(pt.s[j] * zs[j] / obj_scale);
    }
    let (feasibility, worst_block) = problem.max_violation(&pt.x);
    let (infeasible_block, infeasible_row) = if status.is_success() {
        (None, None)
    } else {
        worst_row(problem, &pt.x, &sv.lay).map(|(b, r)| (Some(b), Some(r))).unwrap_or((Some(worst_block), None))
    };
    Ok(SolveReport {
        status,
        message,
        objective_value: pt.f,
        x: pt.x,
        multipliers: lambda,
        bound_multipliers_lower: lower_mult,
        bound_multipliers_upper: upper_mult,
        kkt_stationarity: stationarity,
        kkt_feasibility: feasibility,
        kkt_complementarity: complementarity,
        iterations: iter,
        solve_seconds: start.elapsed().as_secs_f64(),
        infeasible_block,
        infeasible_row,
    })
}

/// Block and row label with the largest violation at `x`.
fn worst_row(p: &NlpProblem, x: &[f64], lay: &Layout) -> Option<(String, String)> {
    let c = p.evaluate_constraints(x);
    let mut best: Option<(f64, usize, usize)> = None;
    for (bi, b) in p.blocks.iter().enumerate() {
        let off = lay.block_offset[bi];
        for r in 0..b.len() {
            let v = match b.kind() {
                ConstraintKind::Equality => c[off + r].abs(),
                ConstraintKind::Inequality => c[off + r].max(0.0),
            };
            if v > 0.0 && best.is_none_or(|(bv, _, _)| v > bv) {
                best = Some((v, bi, r));
            }
        }
    }
    best.map(|(_, bi, r)| (p.blocks[bi].name().to_string(), p.blocks[bi].row_label(r)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nlp::{Expr, ExprBlock, SeparableQuadratic, Term, VariableSet};

    fn quadratic(terms: &[(usize, f64, f64)]) -> Box<SeparableQuadratic> {
        Box::new(SeparableQuadratic { terms: terms.to_vec(), constant: 0.0 })
    }

    #[test]
    fn equality_constrained_quadratic() {
        // min x^2 + y^2 s.t. x + y = 1 -> (0.5, 0.5), lambda = -1
        let mut vars = VariableSet::new();
        vars.add_free("x");
        vars.add_free("y");
        let mut p = NlpProblem::new(vars, quadratic(&[(0, 1.0, 0.0), (1, 1.0, 0.0)]));
        p.add_block(ExprBlock::new(
            "sum",
            ConstraintKind::Equality,
            vec![Expr::new().with(Term::Linear { var: 0, coef: 1.0 }).with(Term::Linear { var: 1, coef: 1.0 }).with(Term::Constant(-1.0))],
        ));
        let r = solve(&p, &[0.0, 0.0], &SolveOptions::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.x[0] - 0.5).abs() < 1e-8 && (r.x[1] - 0.5).abs() < 1e-8);
        assert!((r.multipliers[0] + 1.0).abs() < 1e-6);
    }

    #[test]
    fn active_bound_and_inequality() {
        // min (x-2)^2 + (y-2)^2 s.t. x^2 + y^2 <= 1, x <= 0.5
        let mut vars = VariableSet::new();
        vars.add("x", f64::NEG_INFINITY, 0.5);
        vars.add_free("y");
        let mut p = NlpProblem::new(vars, quadratic(&[(0, 1.0, -4.0), (1, 1.0, -4.0)]));
        p.add_block(ExprBlock::new(
            "disk",
            ConstraintKind::Inequality,
            vec![Expr::new().with(Term::Square { var: 0, coef: 1.0 }).with(Term::Square { var: 1, coef: 1.0 }).with(Term::Constant(-1.0))],
        ));
        let r = solve(&p, &[0.0, 0.0], &SolveOptions::default()).unwrap();
        assert!(r.status.is_success(), "{}", r.summary());
        assert!((r.x[0] - 0.5).abs() < 1e-6, "{:?}", r.x);
        assert!((r.x[1] - 0.75f64.sqrt()).abs() < 1e-6, "{:?}", r.x);
        assert!(r.multipliers[0] > 0.0);
        assert!(r.bound_multipliers_upper[0] > 0.0);
    }

    #[test]
    fn nonconvex_trigonometric_constraint() {
        // min -x1 s.t. x0 * x1 * sin(x2 - x3) = 0.5, x3 fixed at 0, bounds on magnitudes
        let mut vars = VariableSet::new();
        vars.add("a", 0.9, 1.1);
        vars.add("b", 0.9, 1.1);
        vars.add("t", -1.0, 1.0);
        vars.add_fixed("r", 0.0);
        let mut p = NlpProblem::new(vars, quadratic(&[(1, 0.0, -1.0), (2, 1.0, 0.0)]));
        p.add_block(ExprBlock::new(
            "flow",
            ConstraintKind::Equality,
            vec![Expr::new()
                .with(Term::TrigProduct { ma: 0, mb: 1, ta: 2, tb: 3, cos_coef: 0.0, sin_coef: 1.0 })
                .with(Term::Constant(-0.5))],
        ));
        let r = solve(&p, &[1.0, 1.0, 0.0, 0.0], &SolveOptions::default()).unwrap();
        assert!(r.status.is_success(), "{}", r.summary());
        let v = r.x[0] * r.x[1] * (r.x[2] - r.x[3]).sin();
        assert!((v - 0.5).abs() < 1e-9);
        assert!((r.x[1] - 1.1).abs() < 1e-6);
        assert_eq!(r.x[3], 0.0);
    }

    #[test]
    fn infeasible_problem_is_detected() {
        // x^2 + y^2 <= 1 and x + y = 3 cannot both hold.
        let mut vars = VariableSet::new();
        vars.add_free("x");
        vars.add_free("y");
        let mut p = NlpProblem::new(vars, quadratic(&[(0, 1.0, 0.0)]));
        p.add_block(ExprBlock::new(
            "disk",
            ConstraintKind::Inequality,
            vec![Expr::new().with(Term::Square { var: 0, coef: 1.0 }).with(Term::Square { var: 1, coef: 1.0 }).with(Term::Constant(-1.0))],
        ));
        p.add_block(ExprBlock::new(
            "line",
            ConstraintKind::Equality,
            vec![Expr::new().with(Term::Linear { var: 0, coef: 1.0 }).with(Term::Linear { var: 1, coef: 1.0 }).with(Term::Constant(-3.0))],
        ));
        let r = solve(&p, &[0.0, 0.0], &SolveOptions { max_iter: 300, ..Default::default() }).unwrap();
        assert!(!r.status.is_success(), "{}", r.summary());
        assert!(r.infeasible_block.is_some());
    }
}
