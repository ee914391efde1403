//! Kron-reduced networks of the first contingency, with load admittances at
//! 1.0 p.u. and at the AC-OPF voltages.

use tscopf::admittance::LoadVoltageAssumption;
use tscopf::case::{scale_loads, wecc9};
use tscopf::contingency::ContingencySpec;
use tscopf::nlp::SolveOptions;
use tscopf::opf::solve_acopf;
use tscopf::swing::StageNetworks;

fn main() -> tscopf::error::Result<()> {
    let case = scale_loads(&wecc9(), 1.5)?;
    let c = ContingencySpec::wecc9_contingency1(0.01);
    let dispatch = solve_acopf(&case, &SolveOptions::default())?.dispatch;
    for assumption in [LoadVoltageAssumption::FlatOnePu, dispatch.load_voltages()] {
        let nets = StageNetworks::build(&case, &c, &assumption)?;
        println!("{}", assumption.label());
        for net in [&nets.during, &nets.post] {
            println!("  {}:", net.stage.as_str());
            for i in 0..net.n() {
                let row: Vec<String> = (0..net.n()).map(|j| format!("{:>8.4}{:+.4}j", net.y_red[(i, j)].re, net.y_red[(i, j)].im)).collect();
                println!("    {}", row.join("  "));
            }
        }
    }
    Ok(())
}
