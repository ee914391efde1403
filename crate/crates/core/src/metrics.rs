//! Interpolated trajectory errors and the end-to-end comparison procedure:
//! AC-OPF, TSC-OPF with flat load voltages, TSC-OPF with corrected load
//! admittances, benchmark simulation, and per-generator MAEs.

use std::fmt::Write as _;

use serde::Serialize;

use crate::admittance::LoadVoltageAssumption;
use crate::case::Case;
use crate::contingency::ContingencySpec;
use crate::error::{Error, Result};
use crate::nlp::{SolveOptions, SolveStatus};
use crate::opf::{solve_acopf, solve_tscopf, DispatchSolution, TrajectoryStart, TscOpfOutcome};
use crate::swing::DEFAULT_COI_LIMIT;
use crate::tdsim::{simulate, TrajectorySet};

/// Which series an error is computed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    /// Rotor angle relative to the COI, in degrees.
    DeltaCoi,
    /// Absolute rotor angle, in degrees.
    Delta,
    /// Speed deviation, in p.u.
    Omega,
}

fn series(t: &TrajectorySet, q: Quantity) -> Vec<Vec<f64>> {
    match q {
        Quantity::DeltaCoi => t.coi_relative().into_iter().map(|s| s.into_iter().map(f64::to_degrees).collect()).collect(),
        Quantity::Delta => t.delta.iter().map(|s| s.iter().map(|v| v.to_degrees()).collect()).collect(),
        Quantity::Omega => t.omega.clone(),
    }
}

/// Piecewise-linear interpolation of `(xs, ys)` at `x`; `xs` ascending and
/// `x` within its range.
fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let i = xs.partition_point(|&v| v <= x);
    if i == 0 {
        return ys[0];
    }
    if i == xs.len() {
        return ys[xs.len() - 1];
    }
    let (x0, x1) = (xs[i - 1], xs[i]);
    let w = (x - x0) / (x1 - x0);
    ys[i - 1] + w * (ys[i] - ys[i - 1])
}

/// Per-generator mean absolute difference. The coarser trajectory is
/// interpolated linearly onto the finer time axis over the common window.
pub fn mae(a: &TrajectorySet, b: &TrajectorySet, quantity: Quantity) -> Result<Vec<f64>> {
    if a.n_generators() != b.n_generators() {
        return Err(Error::Mismatch(format!("{} vs {} generators", a.n_generators(), b.n_generators())));
    }
    let (Some(&a0), Some(&a1), Some(&b0), Some(&b1)) = (a.times.first(), a.times.last(), b.times.first(), b.times.last()) else {
        return Err(Error::Mismatch("empty trajectory".into()));
    };
    let (t0, t1) = (a0.max(b0), a1.min(b1));
    if t0 > t1 {
        return Err(Error::Mismatch(format!("time windows [{a0}, {a1}] and [{b0}, {b1}] do not overlap")));
    }
    let eps = 1e-9 * t1.abs().max(1.0);
    let in_window = |t: &&f64| **t >= t0 - eps && **t <= t1 + eps;
    let count = |t: &TrajectorySet| t.times.iter().filter(in_window).count();
    let (fine, coarse) = if count(b) > count(a) { (b, a) } else { (a, b) };
    let (sf, sc) = (series(fine, quantity), series(coarse, quantity));
    let mut out = Vec::with_capacity(fine.n_generators());
    for g in 0..fine.n_generators() {
        let mut sum = 0.0;
        let mut n = 0usize;
        for (k, t) in fine.times.iter().enumerate() {
            if !in_window(&t) {
                continue;
            }
            sum += (sf[g][k] - interpolate(&coarse.times, &sc[g], *t)).abs();
            n += 1;
        }
        out.push(sum / n as f64);
    }
    Ok(out)
}

/// Settings of the comparison procedure.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonOptions {
    /// Time steps at which the TSC-OPF variants are solved.
    pub dts: Vec<f64>,
    /// Time step of the reference benchmark run.
    pub benchmark_dt: f64,
    /// Time step of the coarse benchmark run compared against the reference.
    pub benchmark_coarse_dt: f64,
    pub coi_limit: f64,
    /// Number of load-admittance correction passes after the flat solve.
    pub correction_iters: usize,
    pub start: TrajectoryStart,
    /// Options for the TSC-OPF solves; the AC-OPF uses their cold-start form.
    pub solver: SolveOptions,
}

impl Default for ComparisonOptions {
    fn default() -> Self {
        Self {
            dts: vec![0.01, 0.001],
            benchmark_dt: 0.001,
            benchmark_coarse_dt: 0.01,
            coi_limit: DEFAULT_COI_LIMIT,
            correction_iters: 1,
            start: TrajectoryStart::default(),
            solver: SolveOptions::warm_started(),
        }
    }
}

/// MAEs of one trajectory variant against the benchmark.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariantErrors {
    pub label: String,
    /// `flat_one_pu` (without correction), `from_solution` (with), or
    /// `benchmark` for the coarse simulator run.
    pub variant: String,
    pub dt: f64,
    pub delta_deg: Vec<f64>,
    pub omega: Vec<f64>,
}

/// One solved stage of the procedure.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: String,
    pub dt: Option<f64>,
    pub status: Option<SolveStatus>,
    pub iterations: Option<usize>,
    pub dispatch: DispatchSolution,
    /// Largest COI-relative rotor angle per generator, degrees.
    pub max_coi_deviation_deg: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub contingency: ContingencySpec,
    pub benchmark_dt: f64,
    pub delta_reference: Quantity,
    pub variants: Vec<VariantErrors>,
    pub steps: Vec<StepRecord>,
    /// Trajectories behind each variant, plus the benchmark last.
    #[serde(skip)]
    pub trajectories: Vec<(String, TrajectorySet)>,
}

fn ms(dt: f64) -> String {
    let v = dt * 1e3;
    if (v - v.round()).abs() < 1e-9 {
        format!("{} ms", v.round())
    } else {
        format!("{v} ms")
    }
}

/// Four significant digits, plain notation.
fn sig4(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let digits = (3 - x.abs().log10().floor() as i32).max(0) as usize;
    format!("{x:.digits$}")
}

impl ComparisonReport {
    /// Markdown table with one row per generator and quantity and one
    /// column per variant.
    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let id = if self.contingency.id.is_empty() { "contingency" } else { &self.contingency.id };
        writeln!(s, "## MAE against the benchmark ({id}, benchmark dt = {})\n", ms(self.benchmark_dt)).unwrap();
        s.push_str("| | |");
        for v in &self.variants {
            write!(s, " {} |", v.label).unwrap();
        }
        s.push_str("\n|---|---|");
        s.push_str(&"---:|".repeat(self.variants.len()));
        s.push('\n');
        let n = self.variants.first().map_or(0, |v| v.delta_deg.len());
        for (name, pick) in [("δ (deg, w.r.t. COI)", 0), ("Δω (p.u.)", 1)] {
            for g in 0..n {
                write!(s, "| {name} | G{} |", g + 1).unwrap();
                for v in &self.variants {
                    let x = if pick == 0 { v.delta_deg[g] } else { v.omega[g] };
                    write!(s, " {} |", sig4(x)).unwrap();
                }
                s.push('\n');
            }
        }
        s.push_str("\n| Step | dt | P (p.u.) | objective |\n|---|---|---|---:|\n");
        for st in &self.steps {
            let dt = st.dt.map(ms).unwrap_or_else(|| "-".into());
            let p: Vec<String> = st.dispatch.p.iter().map(|v| format!("{v:.4}")).collect();
            writeln!(s, "| {} | {dt} | [{}] | {:.2} |", st.step, p.join(", "), st.dispatch.objective).unwrap();
        }
        s
    }

    pub fn variant(&self, variant: &str, dt: f64) -> Option<&VariantErrors> {
        self.variants.iter().find(|v| v.variant == variant && (v.dt - dt).abs() < 1e-12)
    }

    pub fn step(&self, step: &str, dt: Option<f64>) -> Option<&StepRecord> {
        self.steps.iter().find(|s| s.step == step && s.dt.zip(dt).is_none_or(|(a, b)| (a - b).abs() < 1e-12) && s.dt.is_some() == dt.is_some())
    }
}

impl StepRecord {
    pub fn from_outcome(step: &str, o: &TscOpfOutcome) -> Self {
        Self {
            step: step.to_string(),
            dt: Some(o.trajectory.dt),
            status: Some(o.report.status),
            iterations: Some(o.report.iterations),
            dispatch: o.dispatch.clone(),
            max_coi_deviation_deg: Some(o.trajectory.max_coi_deviation().iter().map(|v| v.to_degrees()).collect()),
        }
    }
}

struct Chain {
    dt: f64,
    steps: Vec<StepRecord>,
    flat: TrajectorySet,
    corrected: TrajectorySet,
    final_dispatch: DispatchSolution,
}

/// Steps 2 and 3 for one contingency at its own time step: the TSC-OPF with
/// load admittances at 1.0 p.u., then `correction_passes` re-solves, each
/// with admittances at the voltages of the previous solution. Returns the
/// step names ("step2", "step3", "step3.2", ...) with their outcomes.
pub fn solve_steps(
    case: &Case,
    contingency: &ContingencySpec,
    step1: &DispatchSolution,
    correction_passes: usize,
    coi_limit: f64,
    start: TrajectoryStart,
    solver: &SolveOptions,
) -> Result<Vec<(String, TscOpfOutcome)>> {
    let stage = |name: &str| format!("{name} (dt = {})", ms(contingency.dt));
    let flat = solve_tscopf(case, contingency, &LoadVoltageAssumption::FlatOnePu, step1, coi_limit, start, solver)
        .map_err(|e| e.in_stage(stage("step 2: TSC-OPF without correction")))?;
    let mut out = vec![("step2".to_string(), flat)];
    for pass in 0..correction_passes {
        let prev = &out.last().expect("non-empty").1.dispatch;
        let next = solve_tscopf(case, contingency, &prev.load_voltages(), prev, coi_limit, start, solver)
            .map_err(|e| e.in_stage(stage("step 3: TSC-OPF with corrected load admittances")))?;
        let name = if pass == 0 { "step3".to_string() } else { format!("step3.{}", pass + 1) };
        out.push((name, next));
    }
    Ok(out)
}

fn run_chain(case: &Case, contingency: &ContingencySpec, step1: &DispatchSolution, dt: f64, opts: &ComparisonOptions) -> Result<Chain> {
    let c = contingency.with_dt(dt);
    let mut outcomes = solve_steps(case, &c, step1, opts.correction_iters.max(1), opts.coi_limit, opts.start, &opts.solver)?;
    let steps = outcomes.iter().map(|(name, o)| StepRecord::from_outcome(name, o)).collect();
    let last = outcomes.pop().expect("at least two steps").1;
    let flat = outcomes.swap_remove(0).1;
    Ok(Chain { dt, steps, flat: flat.trajectory, corrected: last.trajectory, final_dispatch: last.dispatch })
}

/// Runs the full procedure for one contingency. The benchmark simulates the
/// corrected dispatch from the finest TSC-OPF time step with load
/// admittances at that dispatch's voltages.
pub fn run_comparison(case: &Case, contingency: &ContingencySpec, opts: &ComparisonOptions) -> Result<ComparisonReport> {
    if opts.dts.is_empty() {
        return Err(Error::validation("dts", "at least one time step is required"));
    }
    for &dt in opts.dts.iter().chain([&opts.benchmark_dt, &opts.benchmark_coarse_dt]) {
        contingency.with_dt(dt).validate(case)?;
    }
    let step1 = solve_acopf(case, &opts.solver.cold()).map_err(|e| e.in_stage("step 1: AC-OPF"))?;
    let warm = &step1.dispatch;
    let chains: Vec<Result<Chain>> = std::thread::scope(|scope| {
        let handles: Vec<_> = opts.dts.iter().map(|&dt| scope.spawn(move || run_chain(case, contingency, warm, dt, opts))).collect();
        handles.into_iter().map(|h| h.join().expect("comparison worker panicked")).collect()
    });
    let chains = chains.into_iter().collect::<Result<Vec<_>>>()?;
    let finest = chains.iter().min_by(|a, b| a.dt.total_cmp(&b.dt)).expect("non-empty");
    let dispatch = &finest.final_dispatch;
    let assumption = dispatch.load_voltages();
    let bench = simulate(case, dispatch, &contingency.with_dt(opts.benchmark_dt), &assumption).map_err(|e| e.in_stage("step 4: benchmark simulation"))?;
    let bench_coarse = simulate(case, dispatch, &contingency.with_dt(opts.benchmark_coarse_dt), &assumption).map_err(|e| e.in_stage("step 4: coarse benchmark simulation"))?;

    let mut variants = Vec::new();
    let mut trajectories = Vec::new();
    let mut push = |label: String, variant: &str, dt: f64, t: &TrajectorySet| -> Result<()> {
        variants.push(VariantErrors {
            label: label.clone(),
            variant: variant.to_string(),
            dt,
            delta_deg: mae(t, &bench, Quantity::DeltaCoi)?,
            omega: mae(t, &bench, Quantity::Omega)?,
        });
        trajectories.push((label, t.clone()));
        Ok(())
    };
    for ch in &chains {
        push(format!("w/o {}", ms(ch.dt)), "flat_one_pu", ch.dt, &ch.flat)?;
    }
    for ch in &chains {
        push(format!("w {}", ms(ch.dt)), "from_solution", ch.dt, &ch.corrected)?;
    }
    push(format!("benchmark {}", ms(opts.benchmark_coarse_dt)), "benchmark", opts.benchmark_coarse_dt, &bench_coarse)?;
    trajectories.push((format!("benchmark {}", ms(opts.benchmark_dt)), bench));

    let mut steps = vec![StepRecord { step: "step1".into(), dt: None, status: Some(step1.report.status), iterations: Some(step1.report.iterations), dispatch: step1.dispatch.clone(), max_coi_deviation_deg: None }];
    for ch in chains {
        steps.extend(ch.steps);
    }
    Ok(ComparisonReport { contingency: contingency.clone(), benchmark_dt: opts.benchmark_dt, delta_reference: Quantity::DeltaCoi, variants, steps, trajectories })
}
