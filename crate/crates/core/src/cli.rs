//! Command-line front end. Studies come from a TOML or JSON config file;
//! flags override the file.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::admittance::{prefault_network, LoadVoltageAssumption, ReducedNetwork};
use crate::case::{import_matpower, parse_case, scale_loads, wecc9, Case, ImportOptions};
use crate::contingency::ContingencySpec;
use crate::error::{Error, Result};
use crate::metrics::{run_comparison, solve_steps, ComparisonOptions, ComparisonReport};
use crate::nlp::{NlpDump, SolveOptions, SolveStatus};
use crate::opf::{solve_acopf, tscopf_problem, DispatchSolution, TrajectoryStart};
use crate::plot::comparison_plots;
use crate::swing::{StageNetworks, TimeGrid, DEFAULT_COI_LIMIT};
use crate::tdsim::simulate;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "tscopf", version, about = "Transient stability-constrained OPF studies")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Increase log verbosity (-v info, -vv debug, -vvv trace).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the AC-OPF without stability constraints and write dispatch.json.
    Opf(StudyArgs),
    /// Solve the TSC-OPF for one contingency, with optional load-admittance correction.
    Tscopf(StudyArgs),
    /// Simulate one contingency for a dispatch and write its trajectory.
    Simulate(StudyArgs),
    /// Run the full comparison procedure and write MAE tables and plots.
    Compare(StudyArgs),
    /// Write the reduced admittance matrices of one contingency as JSON.
    Reduce(StudyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Correction {
    /// Load admittances at 1.0 p.u. only.
    None,
    /// One re-solve with admittances at the solved bus voltages.
    Once,
}

#[derive(Debug, Clone, Default, Args)]
pub struct StudyArgs {
    /// Study configuration (TOML or JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Case file: native JSON, or MATPOWER `.m` with a `<stem>_dynamics.json` sidecar.
    /// Without one, the built-in WECC 9-bus case with loads raised by 1.5.
    #[arg(long)]
    pub case: Option<PathBuf>,
    /// Multiply every load by this factor (default 1, or 1.5 for the built-in case).
    #[arg(long)]
    pub load_scale: Option<f64>,
    /// Contingency id from the config, a built-in (`1`, `2`), or a spec file.
    /// Repeat for `compare`.
    #[arg(long)]
    pub contingency: Vec<String>,
    /// Time step, e.g. `10ms` or `0.001`. `compare` accepts a comma-separated list.
    #[arg(long, value_parser = parse_seconds, value_delimiter = ',')]
    pub dt: Vec<f64>,
    /// Simulated time window, e.g. `5s`.
    #[arg(long, value_parser = parse_seconds)]
    pub horizon: Option<f64>,
    #[arg(long, value_enum)]
    pub correction: Option<Correction>,
    /// Number of correction passes; overrides `--correction`.
    #[arg(long)]
    pub correction_iters: Option<usize>,
    /// Dispatch JSON used by `simulate` and `reduce` instead of a fresh AC-OPF.
    #[arg(long)]
    pub dispatch: Option<PathBuf>,
    /// Also write the assembled TSC-OPF problem to nlp.json.
    #[arg(long)]
    pub dump_nlp: bool,
    /// Write into an existing, non-empty output directory.
    #[arg(long)]
    pub force: bool,
    /// Output directory; defaults to `out/<subcommand>`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Contents of a study configuration file. Relative paths are resolved
/// against the file's directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub case: Option<PathBuf>,
    /// Dynamics sidecar for MATPOWER cases.
    pub dynamics: Option<PathBuf>,
    pub load_scale: Option<f64>,
    pub contingencies: Vec<ContingencySpec>,
    pub correction: Option<Correction>,
    pub correction_iters: Option<usize>,
    pub coi_limit_deg: Option<f64>,
    /// TSC-OPF time steps compared by `compare`.
    pub dts: Option<Vec<f64>>,
    pub benchmark_dt: Option<f64>,
    pub benchmark_coarse_dt: Option<f64>,
    pub start: Option<TrajectoryStart>,
    pub solver: Option<SolveOptions>,
    pub dispatch: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl StudyConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Parse { path: path.into(), line: None, message: e.to_string() })?;
        let mut cfg: StudyConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| Error::Parse { path: path.into(), line: Some(e.line()), message: e.to_string() })?
        } else {
            toml::from_str(&text).map_err(|e| Error::Parse { path: path.into(), line: None, message: e.to_string() })?
        };
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.case, &mut cfg.dynamics, &mut cfg.dispatch, &mut cfg.out].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}

/// A study with config and flags merged.
#[derive(Debug, Clone)]
pub struct Study {
    pub case: Case,
    pub contingencies: Vec<ContingencySpec>,
    pub correction_passes: usize,
    pub coi_limit: f64,
    pub dts: Vec<f64>,
    pub benchmark_dt: f64,
    pub benchmark_coarse_dt: f64,
    pub start: TrajectoryStart,
    pub solver: SolveOptions,
    pub dispatch: Option<PathBuf>,
    pub out: PathBuf,
    pub force: bool,
    pub dump_nlp: bool,
}

/// Parses `10ms`, `0.01s` or a bare number of seconds.
pub fn parse_seconds(s: &str) -> std::result::Result<f64, String> {
    let t = s.trim();
    let (num, scale) = if let Some(v) = t.strip_suffix("ms") {
        (v, 1e-3)
    } else if let Some(v) = t.strip_suffix('s') {
        (v, 1.0)
    } else {
        (t, 1.0)
    };
    let v: f64 = num.trim().parse().map_err(|_| format!("not a duration: `{s}`"))?;
    let v = v * scale;
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(format!("duration must be positive: `{s}`"))
    }
}

/// Load factor of the stressed study case used when no case file is given.
pub const BUILTIN_LOAD_SCALE: f64 = 1.5;

fn builtin_contingency(name: &str) -> Option<ContingencySpec> {
    match name {
        "1" | "c1" | "contingency1" => Some(ContingencySpec::wecc9_contingency1(0.01)),
        "2" | "c2" | "contingency2" => Some(ContingencySpec::wecc9_contingency2(0.01)),
        _ => None,
    }
}

fn contingency_from_file(path: &Path) -> Result<ContingencySpec> {
    let text = fs::read_to_string(path)?;
    let mut c: ContingencySpec = if path.extension().is_some_and(|e| e == "toml") {
        toml::from_str(&text).map_err(|e| Error::Parse { path: path.into(), line: None, message: e.to_string() })?
    } else {
        serde_json::from_str(&text).map_err(|e| Error::Parse { path: path.into(), line: Some(e.line()), message: e.to_string() })?
    };
    if c.id.is_empty() {
        c.id = path.file_stem().and_then(|s| s.to_str()).unwrap_or("contingency").to_string();
    }
    Ok(c)
}

fn load_case(path: Option<&Path>, dynamics: Option<&Path>) -> Result<Case> {
    match path {
        None => Ok(wecc9()),
        Some(p) if p.extension().is_some_and(|e| e == "m") => {
            let opts = ImportOptions { sidecar: dynamics.map(Path::to_path_buf), allow_quadratic_cost: true, ..Default::default() };
            import_matpower(p, &opts)
        }
        Some(p) => parse_case(p),
    }
}

impl Study {
    /// Merges the config file (if any) with the flags; flags win.
    pub fn resolve(args: &StudyArgs, subcommand: &str) -> Result<Self> {
        let cfg = match &args.config {
            Some(p) => StudyConfig::load(p)?,
            None => StudyConfig::default(),
        };
        let case_path = args.case.clone().or(cfg.case.clone());
        let mut case = load_case(case_path.as_deref(), cfg.dynamics.as_deref())?;
        let default_scale = if case_path.is_none() { BUILTIN_LOAD_SCALE } else { 1.0 };
        let k = args.load_scale.or(cfg.load_scale).unwrap_or(default_scale);
        if k != 1.0 {
            case = scale_loads(&case, k)?;
        }

        let mut contingencies = Vec::new();
        for name in &args.contingency {
            let c = if let Some(c) = cfg.contingencies.iter().find(|c| &c.id == name) {
                c.clone()
            } else if let Some(c) = builtin_contingency(name) {
                c
            } else if Path::new(name).is_file() {
                contingency_from_file(Path::new(name))?
            } else {
                return Err(Error::validation("contingency", format!("`{name}` is not a configured id, a built-in (1, 2) or a file")));
            };
            contingencies.push(c);
        }
        if contingencies.is_empty() {
            contingencies = cfg.contingencies.clone();
        }
        let single_dt = subcommand != "compare";
        if single_dt && args.dt.len() > 1 {
            return Err(Error::validation("dt", format!("`{subcommand}` takes a single time step")));
        }
        for c in &mut contingencies {
            if single_dt {
                if let Some(&dt) = args.dt.first() {
                    c.dt = dt;
                }
            }
            if let Some(h) = args.horizon {
                c.horizon = h;
            }
            if c.id.is_empty() {
                c.id = format!("fault_bus{}", c.fault_bus);
            }
        }
        for c in &contingencies {
            c.validate(&case)?;
        }

        let correction_passes = match (args.correction_iters, args.correction, cfg.correction_iters, cfg.correction) {
            (Some(n), _, _, _) => n,
            (None, Some(c), _, _) => (c == Correction::Once) as usize,
            (None, None, Some(n), _) => n,
            (None, None, None, c) => (c.unwrap_or(Correction::Once) == Correction::Once) as usize,
        };
        let defaults = ComparisonOptions::default();
        let dts = if !single_dt && !args.dt.is_empty() { args.dt.clone() } else { cfg.dts.clone().unwrap_or(defaults.dts) };
        let benchmark_dt = cfg.benchmark_dt.unwrap_or(defaults.benchmark_dt);
        let benchmark_coarse_dt = cfg.benchmark_coarse_dt.unwrap_or(defaults.benchmark_coarse_dt);
        let out = args.out.clone().or(cfg.out.clone()).unwrap_or_else(|| PathBuf::from("out").join(subcommand));
        Ok(Study {
            case,
            contingencies,
            correction_passes,
            coi_limit: cfg.coi_limit_deg.map_or(DEFAULT_COI_LIMIT, f64::to_radians),
            dts,
            benchmark_dt,
            benchmark_coarse_dt,
            start: cfg.start.unwrap_or_default(),
            solver: cfg.solver.unwrap_or_else(SolveOptions::warm_started),
            dispatch: args.dispatch.clone().or(cfg.dispatch),
            out,
            force: args.force,
            dump_nlp: args.dump_nlp,
        })
    }

    fn single_contingency(&self) -> Result<&ContingencySpec> {
        match self.contingencies.as_slice() {
            [c] => Ok(c),
            [] => Err(Error::validation("contingency", "no contingency given; use --contingency or the config")),
            _ => Err(Error::validation("contingency", "this subcommand takes exactly one contingency")),
        }
    }

    fn comparison_options(&self) -> ComparisonOptions {
        ComparisonOptions {
            dts: self.dts.clone(),
            benchmark_dt: self.benchmark_dt,
            benchmark_coarse_dt: self.benchmark_coarse_dt,
            coi_limit: self.coi_limit,
            correction_iters: self.correction_passes.max(1),
            start: self.start,
            solver: self.solver.clone(),
        }
    }

    /// The dispatch from `--dispatch`, or a fresh AC-OPF.
    fn base_dispatch(&self) -> Result<DispatchSolution> {
        match &self.dispatch {
            Some(p) => {
                let d: DispatchSolution = serde_json::from_str(&fs::read_to_string(p)?)?;
                d.check_against(&self.case)?;
                Ok(d)
            }
            None => Ok(solve_acopf(&self.case, &self.solver.cold()).map_err(|e| e.in_stage("AC-OPF"))?.dispatch),
        }
    }

    fn assumption(&self, d: &DispatchSolution) -> LoadVoltageAssumption {
        if self.correction_passes == 0 {
            LoadVoltageAssumption::FlatOnePu
        } else {
            d.load_voltages()
        }
    }
}

/// Maps an error to the process exit code.
pub fn exit_code(e: &Error) -> i32 {
    match e.root() {
        Error::Solver { status: SolveStatus::Infeasible, .. } => EXIT_INFEASIBLE,
        Error::Solver { .. } | Error::Integration { .. } | Error::PowerFlow { .. } | Error::Singular { .. } => EXIT_NUMERICAL,
        _ => EXIT_USAGE,
    }
}

/// Creates `dir`, refusing a non-empty existing directory unless `force`.
pub fn prepare_output_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        let non_empty = dir.is_file() || fs::read_dir(dir)?.next().is_some();
        if non_empty && !force {
            return Err(Error::validation("out", format!("{} already exists; pass --force to overwrite", dir.display())));
        }
    }
    fs::create_dir_all(dir)?;
    Ok(())
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

/// Solver statistics of one TSC-OPF step.
#[derive(Debug, Clone, Serialize)]
pub struct StepStats {
    pub step: String,
    pub assumption: String,
    pub dt: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    pub objective: f64,
    pub n_variables: usize,
    pub n_constraints: usize,
    pub kkt_stationarity: f64,
    pub kkt_feasibility: f64,
    pub kkt_complementarity: f64,
    pub max_coi_deviation_deg: Vec<f64>,
}

fn cmd_opf(study: &Study) -> Result<()> {
    prepare_output_dir(&study.out, study.force)?;
    let o = solve_acopf(&study.case, &study.solver.cold())?;
    write_json(&study.out.join("dispatch.json"), &o.dispatch)?;
    println!("AC-OPF {:?} in {} iterations, objective {:.4} $/h", o.report.status, o.report.iterations, o.dispatch.objective);
    println!("P = {:?}", o.dispatch.p);
    Ok(())
}

fn cmd_tscopf(study: &Study) -> Result<()> {
    let c = study.single_contingency()?;
    prepare_output_dir(&study.out, study.force)?;
    let case = &study.case;
    let step1 = solve_acopf(case, &study.solver.cold()).map_err(|e| e.in_stage("step 1: AC-OPF"))?;
    write_json(&study.out.join("step1_dispatch.json"), &step1.dispatch)?;
    if study.dump_nlp {
        let grid = TimeGrid::new(c.dt, c.clearing_time, c.horizon)?;
        let nets = StageNetworks::build(case, c, &LoadVoltageAssumption::FlatOnePu)?;
        let f = tscopf_problem(case, &nets, &grid, study.coi_limit)?;
        let x0 = f.start_from(case, &step1.dispatch, Some(&nets), study.start);
        write_json(&study.out.join("nlp.json"), &NlpDump::new(&f.problem, &x0))?;
    }
    let steps = solve_steps(case, c, &step1.dispatch, study.correction_passes, study.coi_limit, study.start, &study.solver)?;
    let mut stats = Vec::new();
    for (name, o) in &steps {
        stats.push(StepStats {
            step: name.clone(),
            assumption: o.trajectory.correction.clone(),
            dt: c.dt,
            status: o.report.status,
            iterations: o.report.iterations,
            objective: o.dispatch.objective,
            n_variables: o.n_variables,
            n_constraints: o.n_constraints,
            kkt_stationarity: o.report.kkt_stationarity,
            kkt_feasibility: o.report.kkt_feasibility,
            kkt_complementarity: o.report.kkt_complementarity,
            max_coi_deviation_deg: o.trajectory.max_coi_deviation().iter().map(|v| v.to_degrees()).collect(),
        });
        write_json(&study.out.join(format!("{name}_dispatch.json")), &o.dispatch)?;
        o.trajectory.write_csv(&study.out.join(format!("{name}_trajectory.csv")))?;
        println!("{name}: {:?} in {} iterations, objective {:.4} $/h, P = {:?}", o.report.status, o.report.iterations, o.dispatch.objective, o.dispatch.p);
    }
    let (_, last) = steps.last().expect("at least one step");
    write_json(&study.out.join("dispatch.json"), &last.dispatch)?;
    last.trajectory.write_csv(&study.out.join("trajectory.csv"))?;
    write_json(&study.out.join("nlp_stats.json"), &stats)?;
    Ok(())
}

fn cmd_simulate(study: &Study) -> Result<()> {
    let c = study.single_contingency()?;
    prepare_output_dir(&study.out, study.force)?;
    let d = study.base_dispatch()?;
    let t = simulate(&study.case, &d, c, &study.assumption(&d))?;
    write_json(&study.out.join("dispatch.json"), &d)?;
    t.write_csv(&study.out.join("trajectory.csv"))?;
    let dev: Vec<f64> = t.max_coi_deviation().iter().map(|v| v.to_degrees()).collect();
    println!("simulated {} steps; max COI-relative angle per generator (deg) = {dev:?}", t.len());
    Ok(())
}

#[derive(Serialize)]
struct ReduceOutput {
    assumption: String,
    load_voltages: Vec<f64>,
    prefault: ReducedNetwork,
    during_fault: ReducedNetwork,
    post_fault: ReducedNetwork,
}

fn cmd_reduce(study: &Study) -> Result<()> {
    let c = study.single_contingency()?;
    prepare_output_dir(&study.out, study.force)?;
    let assumption = if study.correction_passes == 0 { LoadVoltageAssumption::FlatOnePu } else { study.assumption(&study.base_dispatch()?) };
    let nets = StageNetworks::build(&study.case, c, &assumption)?;
    let load_voltages = match &assumption {
        LoadVoltageAssumption::FlatOnePu => vec![1.0; study.case.n_buses()],
        LoadVoltageAssumption::FromSolution(v) => v.clone(),
    };
    let out = ReduceOutput {
        assumption: assumption.label().to_string(),
        load_voltages,
        prefault: prefault_network(&study.case, &assumption)?,
        during_fault: nets.during,
        post_fault: nets.post,
    };
    write_json(&study.out.join("reduced.json"), &out)?;
    println!("wrote {}", study.out.join("reduced.json").display());
    Ok(())
}

fn file_label(label: &str) -> String {
    label.replace("w/o", "wo").chars().map(|c| if c.is_ascii_alphanumeric() { c } else { '_' }).collect::<String>().replace("__", "_")
}

fn write_report(dir: &Path, report: &ComparisonReport) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("report.md"), report.to_markdown())?;
    write_json(&dir.join("report.json"), report)?;
    for (label, t) in &report.trajectories {
        t.write_csv(&dir.join(format!("{}.csv", file_label(label))))?;
    }
    for (name, svg) in comparison_plots(report) {
        fs::write(dir.join(name), svg)?;
    }
    Ok(())
}

fn cmd_compare(study: &Study) -> Result<()> {
    if study.contingencies.is_empty() {
        return Err(Error::validation("contingency", "compare needs at least one contingency"));
    }
    prepare_output_dir(&study.out, study.force)?;
    let opts = study.comparison_options();
    let results: Vec<Result<ComparisonReport>> = std::thread::scope(|scope| {
        let handles: Vec<_> = study
            .contingencies
            .iter()
            .map(|c| {
                let opts = &opts;
                scope.spawn(move || {
                    let r = run_comparison(&study.case, c, opts).map_err(|e| e.in_stage(c.id.clone()))?;
                    write_report(&study.out.join(&c.id), &r)?;
                    Ok(r)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("comparison worker panicked")).collect()
    });
    let mut summary = String::new();
    let mut first_err = None;
    for r in results {
        match r {
            Ok(r) => {
                summary.push_str(&r.to_markdown());
                summary.push('\n');
            }
            Err(e) => {
                eprintln!("error: {e}");
                first_err.get_or_insert(e);
            }
        }
    }
    fs::write(study.out.join("summary.md"), &summary)?;
    print!("{summary}");
    first_err.map_or(Ok(()), Err)
}

/// Runs a parsed command line and returns the exit code.
pub fn run(cli: Cli) -> i32 {
    let (name, args) = match &cli.command {
        Command::Opf(a) => ("opf", a),
        Command::Tscopf(a) => ("tscopf", a),
        Command::Simulate(a) => ("simulate", a),
        Command::Compare(a) => ("compare", a),
        Command::Reduce(a) => ("reduce", a),
    };
    let result = Study::resolve(args, name).and_then(|study| match &cli.command {
        Command::Opf(_) => cmd_opf(&study),
        Command::Tscopf(_) => cmd_tscopf(&study),
        Command::Simulate(_) => cmd_simulate(&study),
        Command::Compare(_) => cmd_compare(&study),
        Command::Reduce(_) => cmd_reduce(&study),
    });
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Parses `args` and runs; usage errors exit with [`EXIT_USAGE`].
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => {
            let level = match cli.verbose {
                0 => log::LevelFilter::Warn,
                1 => log::LevelFilter::Info,
                2 => log::LevelFilter::Debug,
                _ => log::LevelFilter::Trace,
            };
            let _ = env_logger::Builder::new().filter_level(level).parse_default_env().try_init();
            run(cli)
        }
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn durations() {
        assert_eq!(parse_seconds("10ms").unwrap(), 0.01);
        assert_eq!(parse_seconds("1 ms").unwrap(), 0.001);
        assert_eq!(parse_seconds("5s").unwrap(), 5.0);
        assert_eq!(parse_seconds("0.5").unwrap(), 0.5);
        assert!(parse_seconds("-1ms").is_err());
        assert!(parse_seconds("ten").is_err());
    }

    #[test]
    fn exit_codes_follow_root_cause() {
        let inf = Error::Solver { status: SolveStatus::Infeasible, summary: String::new() };
        assert_eq!(exit_code(&inf.in_stage("x")), EXIT_INFEASIBLE);
        let num = Error::Solver { status: SolveStatus::NumericalFailure, summary: String::new() };
        assert_eq!(exit_code(&num), EXIT_NUMERICAL);
        assert_eq!(exit_code(&Error::validation("dt", "bad")), EXIT_USAGE);
    }

    #[test]
    fn file_labels_are_plain() {
        assert_eq!(file_label("w/o 10 ms"), "wo_10_ms");
        assert_eq!(file_label("benchmark 1 ms"), "benchmark_1_ms");
    }

    #[test]
    fn flags_override_config() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("study.toml");
        fs::write(
            &cfg,
            "load_scale = 1.5\ncorrection = \"none\"\n[[contingencies]]\nid = \"c1\"\nfault_bus = 4\ncleared_branch = [4, 5]\nclearing_time = 0.15\ndt = 0.01\nhorizon = 5.0\n",
        )
        .unwrap();
        let args = StudyArgs { config: Some(cfg), dt: vec![0.001], correction: Some(Correction::Once), ..Default::default() };
        let s = Study::resolve(&args, "tscopf").unwrap();
        assert_eq!(s.contingencies[0].dt, 0.001);
        assert_eq!(s.correction_passes, 1);
        assert!((s.case.loads[0].p - 1.5 * wecc9().loads[0].p).abs() < 1e-12);
    }
}
