//! The trapezoidal benchmark simulator: a fault simulation, an undisturbed
//! run that must stay at equilibrium, and an observed order of accuracy.

use tscopf::admittance::LoadVoltageAssumption;
use tscopf::case::{scale_loads, wecc9};
use tscopf::contingency::ContingencySpec;
use tscopf::nlp::SolveOptions;
use tscopf::opf::{polish_power_flow, solve_acopf};
use tscopf::tdsim::{refine_check, simulate};

fn main() -> tscopf::error::Result<()> {
    let case = scale_loads(&wecc9(), 1.5)?;
    let dispatch = polish_power_flow(&case, &solve_acopf(&case, &SolveOptions::default())?.dispatch)?;
    let loads = dispatch.load_voltages();

    let c1 = ContingencySpec::wecc9_contingency1(0.001);
    let t = simulate(&case, &dispatch, &c1, &loads)?;
    let dev: Vec<f64> = t.max_coi_deviation().iter().map(|v| v.to_degrees()).collect();
    println!("contingency 1 at 1 ms: {} points, max COI-relative angle {dev:.2?} deg", t.len());

    let quiet = ContingencySpec { id: "no fault".into(), cleared_branch: None, fault_shunt: 0.0, clearing_time: 0.0, ..c1.clone() };
    let t = simulate(&case, &dispatch, &quiet.with_dt(0.01), &loads)?;
    let drift = (0..t.n_generators()).flat_map(|g| t.delta[g].iter().map(move |d| (d, g))).map(|(d, g)| (d - t.delta[g][0]).abs()).fold(0.0, f64::max);
    println!("no fault over 5 s: largest angle drift {drift:.2e} rad");

    // Post-fault only, so the solution is smooth on the whole window.
    let smooth = ContingencySpec { id: "post-fault".into(), clearing_time: 0.0, horizon: 1.0, ..c1 };
    let runs = [0.004, 0.002, 0.001].map(|dt| simulate(&case, &dispatch, &smooth.with_dt(dt), &LoadVoltageAssumption::FlatOnePu));
    let runs = runs.into_iter().collect::<Result<Vec<_>, _>>()?;
    let r = refine_check(&runs, None)?;
    println!("observed order {:.3} (differences {:.2e}, {:.2e})", r.order, r.coarse_difference, r.fine_difference);
    Ok(())
}
