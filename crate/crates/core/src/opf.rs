//! Pre-fault AC-OPF blocks and assembly of the plain and
//! transient-stability-constrained problems.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::admittance::{build_ybus, LoadVoltageAssumption};
use crate::case::Case;
use crate::contingency::ContingencySpec;
use crate::error::{Error, Result};
use crate::nlp::{solve, ConstraintBlock, ConstraintKind, Expr, ExprBlock, NlpProblem, SeparableQuadratic, SolveOptions, SolveReport, SumOfSquaresBlock, Term, VariableSet};
use crate::swing::{
    build_coi_constraints, build_electrical_power, build_trapezoidal_swing, center_of_inertia, electrical_power, link_initial_conditions, link_mechanical_power, DynamicVars, StageNetworks,
    TimeGrid,
};
use crate::tdsim::{simulate_on, TrajectorySet, TrajectorySource};

/// Bus voltage and generator dispatch variables.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyVars {
    pub v: Vec<usize>,
    pub theta: Vec<usize>,
    pub p: Vec<usize>,
    pub q: Vec<usize>,
}

impl SteadyVars {
    /// Adds voltages and dispatch with the case's bounds; the slack angle is fixed at zero.
    pub fn add(vars: &mut VariableSet, case: &Case) -> Self {
        let mut v = Vec::new();
        let mut theta = Vec::new();
        for b in &case.buses {
            v.push(vars.add(format!("v[{}]", b.id), b.v_min, b.v_max));
        }
        for b in &case.buses {
            theta.push(if b.is_slack { vars.add_fixed(format!("theta[{}]", b.id), 0.0) } else { vars.add(format!("theta[{}]", b.id), b.theta_min, b.theta_max) });
        }
        let p = case.generators.iter().enumerate().map(|(g, gen)| vars.add(format!("p[g{}]", g + 1), gen.p_min, gen.p_max)).collect();
        let q = case.generators.iter().enumerate().map(|(g, gen)| vars.add(format!("q[g{}]", g + 1), gen.q_min, gen.q_max)).collect();
        Self { v, theta, p, q }
    }
}

/// Internal EMF, initial rotor angle and initial speed deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct InternalVars {
    pub e: Vec<usize>,
    pub delta0: Vec<usize>,
    pub domega0: Vec<usize>,
}

impl InternalVars {
    pub fn add(vars: &mut VariableSet, case: &Case) -> Self {
        let e = case.generators.iter().enumerate().map(|(g, gen)| vars.add(format!("e[g{}]", g + 1), gen.e_min, gen.e_max)).collect();
        let delta0 = (0..case.n_generators()).map(|g| vars.add_free(format!("delta0[g{}]", g + 1))).collect();
        let domega0 = (0..case.n_generators()).map(|g| vars.add_fixed(format!("domega0[g{}]", g + 1), 0.0)).collect();
        Self { e, delta0, domega0 }
    }
}

/// Generation cost divided by the MVA base, so that the objective is of
/// order one when powers are in per unit.
pub fn build_objective(case: &Case, sv: &SteadyVars) -> SeparableQuadratic {
    let base = case.base_mva;
    SeparableQuadratic {
        terms: case.generators.iter().zip(&sv.p).map(|(g, &p)| (p, g.cost_quadratic * base, g.cost)).collect(),
        constant: case.generators.iter().map(|g| g.cost_constant).sum::<f64>() / base,
    }
}

fn lin(var: usize, coef: f64) -> Term {
    Term::Linear { var, coef }
}

/// Active and reactive balance per bus: generation minus load minus the
/// power injected into the network.
pub fn build_power_balance(case: &Case, sv: &SteadyVars) -> Vec<ExprBlock> {
    let y = build_ybus(case);
    let index = case.bus_index_map();
    let loads = case.bus_loads();
    let nb = case.n_buses();
    let mut p_rows = Vec::with_capacity(nb);
    let mut q_rows = Vec::with_capacity(nb);
    for k in 0..nb {
        let ykk = y.get(k, k);
        let mut pe = Expr::new().with(Term::Constant(-loads[k].0)).with(Term::Square { var: sv.v[k], coef: -ykk.re });
        let mut qe = Expr::new().with(Term::Constant(-loads[k].1)).with(Term::Square { var: sv.v[k], coef: ykk.im });
        for (g, gen) in case.generators.iter().enumerate() {
            if index[&gen.bus] == k {
                pe.push(lin(sv.p[g], 1.0));
                qe.push(lin(sv.q[g], 1.0));
            }
        }
        for m in (0..nb).filter(|&m| m != k) {
            let ykm = y.get(k, m);
            if ykm == Complex64::new(0.0, 0.0) {
                continue;
            }
            let (ma, mb, ta, tb) = (sv.v[k], sv.v[m], sv.theta[k], sv.theta[m]);
            pe.push(Term::TrigProduct { ma, mb, ta, tb, cos_coef: -ykm.re, sin_coef: -ykm.im });
            qe.push(Term::TrigProduct { ma, mb, ta, tb, cos_coef: ykm.im, sin_coef: -ykm.re });
        }
        p_rows.push(pe);
        q_rows.push(qe);
    }
    let labels = |s: &str| case.buses.iter().map(|b| format!("{s}[{}]", b.id)).collect();
    vec![
        ExprBlock::new("p_balance", ConstraintKind::Equality, p_rows).with_labels(labels("p_balance")),
        ExprBlock::new("q_balance", ConstraintKind::Equality, q_rows).with_labels(labels("q_balance")),
    ]
}

/// Active and reactive flow leaving bus `a` towards `b` with self admittance
/// `yaa` and mutual admittance `yab`.
fn flow_exprs(va: usize, vb: usize, ta: usize, tb: usize, yaa: Complex64, yab: Complex64) -> Vec<Expr> {
    vec![
        Expr::new()
            .with(Term::Square { var: va, coef: yaa.re })
            .with(Term::TrigProduct { ma: va, mb: vb, ta, tb, cos_coef: yab.re, sin_coef: yab.im }),
        Expr::new()
            .with(Term::Square { var: va, coef: -yaa.im })
            .with(Term::TrigProduct { ma: va, mb: vb, ta, tb, cos_coef: -yab.im, sin_coef: yab.re }),
    ]
}

/// Apparent-power limits on both branch ends and the angle-difference box.
/// Unrated branches and vacuous angle limits produce no rows.
pub fn build_operating_limits(case: &Case, sv: &SteadyVars) -> Vec<Box<dyn ConstraintBlock>> {
    let index = case.bus_index_map();
    let mut flows = Vec::new();
    let mut flow_labels = Vec::new();
    let mut angles = Vec::new();
    let mut angle_labels = Vec::new();
    for br in &case.branches {
        let (f, t) = (index[&br.from], index[&br.to]);
        let ys = Complex64::new(br.r, br.x).inv();
        let half_b = Complex64::new(0.0, 0.5 * br.b_charging);
        let yff = (ys + half_b) / (br.tap * br.tap);
        let ytt = ys + half_b;
        let yft = -ys / br.tap;
        if br.s_max.is_finite() && br.s_max > 0.0 {
            let lim = br.s_max * br.s_max;
            flows.push((flow_exprs(sv.v[f], sv.v[t], sv.theta[f], sv.theta[t], yff, yft), lim));
            flow_labels.push(format!("flow_limit[{}-{}]", br.from, br.to));
            flows.push((flow_exprs(sv.v[t], sv.v[f], sv.theta[t], sv.theta[f], ytt, yft), lim));
            flow_labels.push(format!("flow_limit[{}-{}]", br.to, br.from));
        }
        if br.theta_diff_max < PI {
            angles.push(Expr::new().with(lin(sv.theta[f], 1.0)).with(lin(sv.theta[t], -1.0)).with(Term::Constant(-br.theta_diff_max)));
            angle_labels.push(format!("angle_difference_upper[{}-{}]", br.from, br.to));
        }
        if br.theta_diff_min > -PI {
            angles.push(Expr::new().with(lin(sv.theta[f], -1.0)).with(lin(sv.theta[t], 1.0)).with(Term::Constant(br.theta_diff_min)));
            angle_labels.push(format!("angle_difference_lower[{}-{}]", br.from, br.to));
        }
    }
    let mut out: Vec<Box<dyn ConstraintBlock>> = Vec::new();
    if !flows.is_empty() {
        out.push(Box::new(SumOfSquaresBlock::new("flow_limit", ConstraintKind::Inequality, flows).with_labels(flow_labels)));
    }
    if !angles.is_empty() {
        out.push(Box::new(ExprBlock::new("angle_difference", ConstraintKind::Inequality, angles).with_labels(angle_labels)));
    }
    out
}

/// `P x' - E V sin(delta0 - theta) = 0` and `Q x' + V^2 - E V cos(delta0 - theta) = 0`.
pub fn build_generator_init(case: &Case, sv: &SteadyVars, iv: &InternalVars) -> ExprBlock {
    let index = case.bus_index_map();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (g, gen) in case.generators.iter().enumerate() {
        let k = index[&gen.bus];
        let (ma, mb, ta, tb) = (iv.e[g], sv.v[k], iv.delta0[g], sv.theta[k]);
        rows.push(Expr::new().with(lin(sv.p[g], gen.x_d_prime)).with(Term::TrigProduct { ma, mb, ta, tb, cos_coef: 0.0, sin_coef: -1.0 }));
        labels.push(format!("internal_p[g{}]", g + 1));
        rows.push(
            Expr::new()
                .with(lin(sv.q[g], gen.x_d_prime))
                .with(Term::Square { var: sv.v[k], coef: 1.0 })
                .with(Term::TrigProduct { ma, mb, ta, tb, cos_coef: -1.0, sin_coef: 0.0 }),
        );
        labels.push(format!("internal_q[g{}]", g + 1));
    }
    ExprBlock::new("generator_init", ConstraintKind::Equality, rows).with_labels(labels)
}

/// Closed-form internal EMF and rotor angle behind the transient reactance:
/// `E e^{j(delta - theta)} = V + x'Q/V + j x'P/V`.
pub fn internal_voltages(case: &Case, v: &[f64], theta: &[f64], p: &[f64], q: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let index = case.bus_index_map();
    let mut e = Vec::with_capacity(case.n_generators());
    let mut d = Vec::with_capacity(case.n_generators());
    for (g, gen) in case.generators.iter().enumerate() {
        let k = index[&gen.bus];
        if !(v[k] > 0.0) {
            return Err(Error::Domain(format!("generator {} terminal voltage must be positive", g + 1)));
        }
        let z = Complex64::new(v[k] + gen.x_d_prime * q[g] / v[k], gen.x_d_prime * p[g] / v[k]);
        e.push(z.norm());
        d.push(theta[k] + z.arg());
    }
    Ok((e, d))
}

/// Pre-fault operating point: bus voltages, dispatch, generator internal
/// states and the generation cost in currency per hour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchSolution {
    pub bus_ids: Vec<usize>,
    pub v: Vec<f64>,
    pub theta: Vec<f64>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub e: Vec<f64>,
    pub delta0: Vec<f64>,
    pub objective: f64,
}

impl DispatchSolution {
    /// Builds a solution from bus and dispatch values, filling the internal
    /// states and cost from their closed forms.
    pub fn from_operating_point(case: &Case, v: Vec<f64>, theta: Vec<f64>, p: Vec<f64>, q: Vec<f64>) -> Result<Self> {
        let (e, delta0) = internal_voltages(case, &v, &theta, &p, &q)?;
        let objective = case.generation_cost(&p);
        Ok(Self { bus_ids: case.buses.iter().map(|b| b.id).collect(), v, theta, p, q, e, delta0, objective })
    }

    pub fn check_against(&self, case: &Case) -> Result<()> {
        let ids: Vec<usize> = case.buses.iter().map(|b| b.id).collect();
        let ng = case.n_generators();
        if self.bus_ids != ids || self.v.len() != ids.len() || self.theta.len() != ids.len() {
            return Err(Error::Mismatch("dispatch buses do not match the case".into()));
        }
        if self.p.len() != ng || self.q.len() != ng || self.e.len() != ng || self.delta0.len() != ng {
            return Err(Error::Mismatch(format!("dispatch must describe {ng} generators")));
        }
        Ok(())
    }

    /// Load-voltage assumption built from this solution's magnitudes.
    pub fn load_voltages(&self) -> LoadVoltageAssumption {
        LoadVoltageAssumption::FromSolution(self.v.clone())
    }
}

/// How the dynamic variables of a warm start are initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryStart {
    /// `delta^k = delta0`, `dw^k = 0`.
    Flat,
    /// Trajectories simulated from the warm-start dispatch on the same
    /// networks and grid; falls back to flat if the simulation fails.
    #[default]
    Simulated,
}

/// An assembled NLP with the index maps needed to read its solution.
pub struct Formulation {
    pub problem: NlpProblem,
    pub steady: SteadyVars,
    pub internal: InternalVars,
    pub dynamic: Option<(DynamicVars, TimeGrid)>,
    /// Generator inertia constants, for the COI start values.
    pub inertia: Vec<f64>,
}

/// Plain AC-OPF with generator internal-state initialization.
pub fn acopf_problem(case: &Case) -> Result<Formulation> {
    case.validate()?;
    let mut vars = VariableSet::new();
    let steady = SteadyVars::add(&mut vars, case);
    let internal = InternalVars::add(&mut vars, case);
    let mut problem = NlpProblem::new(vars, Box::new(build_objective(case, &steady)));
    for b in build_power_balance(case, &steady) {
        problem.add_block(b);
    }
    problem.blocks.extend(build_operating_limits(case, &steady));
    problem.add_block(build_generator_init(case, &steady, &internal));
    Ok(Formulation { problem, steady, internal, dynamic: None, inertia: case.generators.iter().map(|g| g.h).collect() })
}

/// AC-OPF plus the discretized swing dynamics of one contingency and the
/// COI angle limit.
pub fn tscopf_problem(case: &Case, nets: &StageNetworks, grid: &TimeGrid, coi_limit: f64) -> Result<Formulation> {
    let mut f = acopf_problem(case)?;
    let dv = DynamicVars::add(&mut f.problem.variables, case.n_generators(), grid);
    for b in build_trapezoidal_swing(case, grid, &dv) {
        f.problem.add_block(b);
    }
    f.problem.add_block(build_electrical_power(nets, grid, &dv, &f.internal.e));
    let (def, lim) = build_coi_constraints(case, grid, &dv, coi_limit)?;
    f.problem.add_block(def);
    f.problem.add_block(lim);
    f.problem.add_block(link_initial_conditions(&dv, &f.internal.delta0, &f.internal.domega0));
    f.problem.add_block(link_mechanical_power(&dv, &f.steady.p));
    f.dynamic = Some((dv, *grid));
    Ok(f)
}

impl Formulation {
    /// Flat start: unit voltages, zero angles, mid-range dispatch.
    pub fn flat_start(&self, case: &Case) -> Vec<f64> {
        let v = vec![1.0; case.n_buses()];
        let theta = vec![0.0; case.n_buses()];
        let p: Vec<f64> = case.generators.iter().map(|g| 0.5 * (g.p_min + g.p_max)).collect();
        let q = vec![0.0; case.n_generators()];
        let (e, d) = internal_voltages(case, &v, &theta, &p, &q).expect("unit voltages are positive");
        let start = DispatchSolution { bus_ids: Vec::new(), v, theta, p, q, e, delta0: d, objective: 0.0 };
        self.start_from(case, &start, None, TrajectoryStart::Flat)
    }

    /// Start point from a steady-state solution. With dynamics and stage
    /// networks, trajectories are filled per `mode`.
    pub fn start_from(&self, case: &Case, d: &DispatchSolution, nets: Option<&StageNetworks>, mode: TrajectoryStart) -> Vec<f64> {
        let mut x = vec![0.0; self.problem.n_variables()];
        let sv = &self.steady;
        let iv = &self.internal;
        for k in 0..sv.v.len() {
            x[sv.v[k]] = d.v[k];
            x[sv.theta[k]] = d.theta[k];
        }
        for g in 0..sv.p.len() {
            x[sv.p[g]] = d.p[g];
            x[sv.q[g]] = d.q[g];
            x[iv.e[g]] = d.e[g];
            x[iv.delta0[g]] = d.delta0[g];
        }
        if let (Some((dv, grid)), Some(nets)) = (&self.dynamic, nets) {
            let n = dv.n_gen();
            let simulated = match mode {
                TrajectoryStart::Simulated => simulate_on(case, d, nets, grid, "", "").ok(),
                TrajectoryStart::Flat => None,
            };
            for k in 0..grid.n_points() {
                let (delta, omega): (Vec<f64>, Vec<f64>) = match &simulated {
                    Some(t) => ((0..n).map(|g| t.delta[g][k]).collect(), (0..n).map(|g| t.omega[g][k]).collect()),
                    None => (d.delta0.clone(), vec![0.0; n]),
                };
                let pe = electrical_power(nets.get(grid.stage_of(k)), &d.e, &delta);
                for g in 0..n {
                    x[dv.delta[k][g]] = delta[g];
                    x[dv.domega[k][g]] = omega[g];
                    x[dv.pe[k][g]] = pe[g];
                }
                x[dv.coi[k]] = center_of_inertia(&self.inertia, &delta);
            }
            for g in 0..n {
                x[dv.pmec[g]] = d.p[g];
            }
        }
        self.problem.variables.project(&mut x);
        x
    }

    /// Reads the steady-state part of a primal vector.
    pub fn dispatch(&self, case: &Case, x: &[f64]) -> DispatchSolution {
        let sv = &self.steady;
        let pick = |idx: &[usize]| idx.iter().map(|&i| x[i]).collect::<Vec<f64>>();
        let p = pick(&sv.p);
        DispatchSolution {
            bus_ids: case.buses.iter().map(|b| b.id).collect(),
            v: pick(&sv.v),
            theta: pick(&sv.theta),
            objective: case.generation_cost(&p),
            p,
            q: pick(&sv.q),
            e: pick(&self.internal.e),
            delta0: pick(&self.internal.delta0),
        }
    }

    /// The optimizer's rotor trajectories, if the problem has dynamics.
    pub fn trajectory(&self, case: &Case, x: &[f64], id: &str, correction: &str) -> Option<TrajectorySet> {
        let (dv, grid) = self.dynamic.as_ref()?;
        let n = dv.n_gen();
        Some(TrajectorySet {
            times: (0..grid.n_points()).map(|k| grid.time(k)).collect(),
            delta: (0..n).map(|g| dv.delta.iter().map(|row| x[row[g]]).collect()).collect(),
            omega: (0..n).map(|g| dv.domega.iter().map(|row| x[row[g]]).collect()).collect(),
            inertia: case.generators.iter().map(|g| g.h).collect(),
            dt: grid.dt,
            contingency_id: id.to_string(),
            source: TrajectorySource::Optimizer,
            correction: correction.to_string(),
        })
    }
}

/// A solved AC-OPF.
#[derive(Debug, Clone, Serialize)]
pub struct OpfOutcome {
    pub dispatch: DispatchSolution,
    pub report: SolveReport,
}

/// A solved TSC-OPF with its optimizer trajectories.
#[derive(Debug, Clone, Serialize)]
pub struct TscOpfOutcome {
    pub dispatch: DispatchSolution,
    pub trajectory: TrajectorySet,
    pub report: SolveReport,
    pub n_variables: usize,
    pub n_constraints: usize,
}

/// Solves the plain AC-OPF from a flat start.
pub fn solve_acopf(case: &Case, opts: &SolveOptions) -> Result<OpfOutcome> {
    let f = acopf_problem(case)?;
    let x0 = f.flat_start(case);
    let report = solve(&f.problem, &x0, opts)?.into_result()?;
    Ok(OpfOutcome { dispatch: f.dispatch(case, &report.x), report })
}

/// Solves the TSC-OPF for one contingency, warm-started from `warm`.
pub fn solve_tscopf(
    case: &Case,
    contingency: &ContingencySpec,
    assumption: &LoadVoltageAssumption,
    warm: &DispatchSolution,
    coi_limit: f64,
    start: TrajectoryStart,
    opts: &SolveOptions,
) -> Result<TscOpfOutcome> {
    warm.check_against(case)?;
    let grid = TimeGrid::new(contingency.dt, contingency.clearing_time, contingency.horizon)?;
    let nets = StageNetworks::build(case, contingency, assumption)?;
    let f = tscopf_problem(case, &nets, &grid, coi_limit)?;
    let warm = match start {
        TrajectoryStart::Simulated => stable_warm_start(case, &nets, &grid, warm, coi_limit, opts)?,
        TrajectoryStart::Flat => warm.clone(),
    };
    let x0 = f.start_from(case, &warm, Some(&nets), start);
    let report = match solve(&f.problem, &x0, opts)?.into_result() {
        // A warm start close to an active angle limit can stall. Retry from
        // the same point with the default barrier and zero multipliers.
        Err(e @ Error::Solver { .. }) if opts.warm_start => {
            log::info!("warm-started solve failed ({e}); retrying with a cold barrier start");
            let retry = SolveOptions { least_squares_init: false, ..opts.cold() };
            solve(&f.problem, &x0, &retry)?.into_result()?
        }
        r => r?,
    };
    let trajectory = f.trajectory(case, &report.x, &contingency.id, assumption.label()).expect("problem has dynamics");
    Ok(TscOpfOutcome {
        dispatch: f.dispatch(case, &report.x),
        trajectory,
        n_variables: f.problem.n_variables(),
        n_constraints: f.problem.n_constraints(),
        report,
    })
}

const BACKOFF_MARGIN: f64 = 0.9;
const BACKOFF_STEP: f64 = 0.1;
const BACKOFF_MAX_ROUNDS: usize = 30;

/// Returns `warm` if its simulated swing stays within the angle limit.
/// Otherwise the upper active-power bound of the critical machine (the one
/// that has gained the most speed relative to the COI by the clearing
/// instant) is lowered and the AC-OPF re-solved, until the simulated start
/// is stable. Only the start point changes; the TSC-OPF itself keeps the
/// case's bounds.
pub fn stable_warm_start(case: &Case, nets: &StageNetworks, grid: &TimeGrid, warm: &DispatchSolution, coi_limit: f64, opts: &SolveOptions) -> Result<DispatchSolution> {
    let h: Vec<f64> = case.generators.iter().map(|g| g.h).collect();
    let critical = |d: &DispatchSolution| -> Option<usize> {
        let Ok(t) = simulate_on(case, d, nets, grid, "", "") else {
            return Some((0..d.p.len()).max_by(|&a, &b| d.p[a].total_cmp(&d.p[b])).unwrap_or(0));
        };
        let worst = t.max_coi_deviation().into_iter().fold(0.0f64, f64::max);
        if worst <= BACKOFF_MARGIN * coi_limit {
            return None;
        }
        let k = grid.clearing_step().unwrap_or(0);
        let w: Vec<f64> = t.omega.iter().map(|s| s[k]).collect();
        let w_coi = center_of_inertia(&h, &w);
        (0..w.len()).max_by(|&a, &b| (w[a] - w_coi).total_cmp(&(w[b] - w_coi)))
    };
    let mut d = warm.clone();
    let mut capped = case.clone();
    for round in 0..BACKOFF_MAX_ROUNDS {
        let Some(g) = critical(&d) else {
            if round > 0 {
                log::info!("stable warm start after {round} backoff rounds, P = {:?}", d.p);
            }
            return Ok(d);
        };
        log::debug!("backoff round {round}: generator {} swings beyond the margin at P = {:?}", g + 1, d.p);
        let gen = &mut capped.generators[g];
        let new_max = (d.p[g] - BACKOFF_STEP * (gen.p_max - gen.p_min)).max(gen.p_min);
        if new_max >= gen.p_max {
            break;
        }
        gen.p_max = new_max;
        match solve_acopf(&capped, &opts.cold()) {
            Ok(o) => d = o.dispatch,
            Err(_) => break,
        }
    }
    log::info!("no stable warm start found; using the given dispatch");
    Ok(warm.clone())
}

const PF_TOL: f64 = 1e-12;
const PF_MAX_ITER: usize = 20;

/// Newton power flow holding generator voltages and non-slack active
/// dispatch at their values in `d`; the slack generator's active power and
/// the reactive outputs absorb the mismatch. Internal states and cost are
/// recomputed, so the result is an equilibrium of the swing model to
/// rounding precision.
pub fn polish_power_flow(case: &Case, d: &DispatchSolution) -> Result<DispatchSolution> {
    d.check_against(case)?;
    let mut vars = VariableSet::new();
    let sv = SteadyVars::add(&mut vars, case);
    let blocks = build_power_balance(case, &sv);
    let index = case.bus_index_map();
    let slack = case.slack_index();
    let nb = case.n_buses();

    let mut x = vec![0.0; vars.len()];
    for k in 0..nb {
        x[sv.v[k]] = d.v[k];
        x[sv.theta[k]] = d.theta[k];
    }
    for g in 0..case.n_generators() {
        x[sv.p[g]] = d.p[g];
        x[sv.q[g]] = d.q[g];
    }

    // One unknown per balance row: angles off the slack, magnitudes at buses
    // without generators, the first generator's Q at the others and its P at
    // the slack.
    let mut unknowns: Vec<usize> = (0..nb).filter(|&k| k != slack).map(|k| sv.theta[k]).collect();
    let mut first_gen = vec![None; nb];
    for (g, gen) in case.generators.iter().enumerate() {
        first_gen[index[&gen.bus]].get_or_insert(g);
    }
    for k in 0..nb {
        match first_gen[k] {
            Some(g) => unknowns.push(sv.q[g]),
            None => unknowns.push(sv.v[k]),
        }
    }
    let slack_gen = first_gen[slack].ok_or_else(|| Error::validation("buses", "slack bus has no generator"))?;
    unknowns.push(sv.p[slack_gen]);
    let col_of = |var: usize| unknowns.iter().position(|&u| u == var);

    let n = 2 * nb;
    let mut iterations = 0;
    let mut extra_done = false;
    loop {
        let mut r = DVector::<f64>::zeros(n);
        let mut jac = DMatrix::<f64>::zeros(n, n);
        for (bi, b) in blocks.iter().enumerate() {
            let mut res = vec![0.0; nb];
            b.evaluate(&x, &mut res);
            let structure = b.jacobian_structure();
            let mut vals = vec![0.0; structure.len()];
            b.jacobian(&x, &mut vals);
            for k in 0..nb {
                r[bi * nb + k] = res[k];
            }
            for (&(row, var), &val) in structure.iter().zip(&vals) {
                if let Some(c) = col_of(var) {
                    jac[(bi * nb + row, c)] += val;
                }
            }
        }
        let mismatch = r.amax();
        if !mismatch.is_finite() || iterations > PF_MAX_ITER {
            return Err(Error::PowerFlow { mismatch, iterations });
        }
        if mismatch <= PF_TOL {
            if extra_done {
                break;
            }
            extra_done = true;
        }
        let step = jac.lu().solve(&r).ok_or(Error::PowerFlow { mismatch, iterations })?;
        for (c, &var) in unknowns.iter().enumerate() {
            x[var] -= step[c];
        }
        iterations += 1;
    }
    let pick = |idx: &[usize]| idx.iter().map(|&i| x[i]).collect::<Vec<f64>>();
    DispatchSolution::from_operating_point(case, pick(&sv.v), pick(&sv.theta), pick(&sv.p), pick(&sv.q))
}
