//! Finite-difference check of every analytic Jacobian and gradient entry of
//! the assembled TSC-OPF for the first contingency.

use tscopf::admittance::LoadVoltageAssumption;
use tscopf::case::{scale_loads, wecc9};
use tscopf::contingency::ContingencySpec;
use tscopf::nlp::{check_derivatives, SolveOptions};
use tscopf::opf::{solve_acopf, tscopf_problem, TrajectoryStart};
use tscopf::swing::{StageNetworks, TimeGrid, DEFAULT_COI_LIMIT};

fn main() -> tscopf::error::Result<()> {
    let case = scale_loads(&wecc9(), 1.5)?;
    let c = ContingencySpec::wecc9_contingency1(0.01);
    let grid = TimeGrid::new(c.dt, c.clearing_time, c.horizon)?;
    let nets = StageNetworks::build(&case, &c, &LoadVoltageAssumption::FlatOnePu)?;
    let f = tscopf_problem(&case, &nets, &grid, DEFAULT_COI_LIMIT)?;
    let d = solve_acopf(&case, &SolveOptions::default())?.dispatch;
    let x = f.start_from(&case, &d, Some(&nets), TrajectoryStart::Simulated);
    let r = check_derivatives(&f.problem, &x)?;
    println!("{} entries checked, max relative error {:.2e}", r.entries_checked, r.max_rel_error);
    if let Some(w) = r.worst {
        println!("worst: {} / {} wrt {}: analytic {:.6e}, fd {:.6e}", w.block, w.row, w.variable, w.analytic, w.finite_difference);
    }
    Ok(())
}
