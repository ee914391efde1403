//! TSC-OPF for one contingency, without and with the load-admittance
//! correction.
//!
//! ```text
//! cargo run --release --example tscopf -- 2 0.001
//! ```

use tscopf::case::{scale_loads, wecc9};
use tscopf::contingency::ContingencySpec;
use tscopf::metrics::solve_steps;
use tscopf::nlp::SolveOptions;
use tscopf::opf::{solve_acopf, TrajectoryStart};
use tscopf::swing::DEFAULT_COI_LIMIT;

fn main() -> tscopf::error::Result<()> {
    let mut args = std::env::args().skip(1);
    let which = args.next().unwrap_or_else(|| "1".into());
    let dt: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0.01);
    let c = match which.as_str() {
        "2" => ContingencySpec::wecc9_contingency2(dt),
        _ => ContingencySpec::wecc9_contingency1(dt),
    };
    let case = scale_loads(&wecc9(), 1.5)?;
    let step1 = solve_acopf(&case, &SolveOptions::default())?;
    println!("step1: objective {:.4} $/h, P = {:.4?}", step1.dispatch.objective, step1.dispatch.p);

    let start = std::time::Instant::now();
    let steps = solve_steps(&case, &c, &step1.dispatch, 1, DEFAULT_COI_LIMIT, TrajectoryStart::Simulated, &SolveOptions::warm_started())?;
    for (name, o) in &steps {
        let dev: Vec<f64> = o.trajectory.max_coi_deviation().iter().map(|v| v.to_degrees()).collect();
        println!(
            "{name}: {:?} in {} iterations, objective {:.4} $/h, {} variables",
            o.report.status, o.report.iterations, o.dispatch.objective, o.n_variables
        );
        println!("  P = {:.4?}\n  Q = {:.4?}\n  max |delta - delta_coi| = {dev:.3?} deg", o.dispatch.p, o.dispatch.q);
    }
    println!("solved in {:.2?}", start.elapsed());
    Ok(())
}
