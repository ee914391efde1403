//! Imports the MATPOWER version of the WECC 9-bus case with its dynamics
//! sidecar and checks it against the bundled JSON case.

use tscopf::case::{import_matpower, wecc9, ImportOptions};

fn main() -> tscopf::error::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/wecc9.m");
    let opts = ImportOptions { allow_quadratic_cost: true, ..Default::default() };
    let case = import_matpower(path, &opts)?;
    println!("{} buses, {} branches, {} generators, {} loads", case.n_buses(), case.branches.len(), case.n_generators(), case.loads.len());
    for g in &case.generators {
        println!("bus {}: x'd = {}, H = {} s, P in [{}, {}] p.u.", g.bus, g.x_d_prime, g.h, g.p_min, g.p_max);
    }
    println!("matches bundled JSON: {}", case == wecc9());
    Ok(())
}
