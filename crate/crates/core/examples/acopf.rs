//! Step 1 of the study: the AC-OPF of the WECC 9-bus system with loads
//! raised by 50 %, without stability constraints.

use tscopf::case::{scale_loads, wecc9};
use tscopf::nlp::SolveOptions;
use tscopf::opf::solve_acopf;

fn main() -> tscopf::error::Result<()> {
    let case = scale_loads(&wecc9(), 1.5)?;
    let o = solve_acopf(&case, &SolveOptions::default())?;
    println!("status {:?} after {} iterations", o.report.status, o.report.iterations);
    println!("objective {:.4} $/h", o.dispatch.objective);
    for (g, (p, q)) in o.dispatch.p.iter().zip(&o.dispatch.q).enumerate() {
        println!("G{}: P = {p:.4} p.u., Q = {q:.4} p.u.", g + 1);
    }
    let v: Vec<String> = o.dispatch.v.iter().map(|v| format!("{v:.4}")).collect();
    println!("V = [{}]", v.join(", "));
    Ok(())
}
