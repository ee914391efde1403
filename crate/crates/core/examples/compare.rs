//! The full comparison procedure for both contingencies: MAE tables in
//! Markdown and one SVG per generator and quantity.
//!
//! ```text
//! cargo run --release --example compare -- target/plots
//! ```

use std::path::PathBuf;

use tscopf::case::{scale_loads, wecc9};
use tscopf::contingency::ContingencySpec;
use tscopf::metrics::{run_comparison, ComparisonOptions};
use tscopf::plot::comparison_plots;

fn main() -> tscopf::error::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from);
    let case = scale_loads(&wecc9(), 1.5)?;
    for c in [ContingencySpec::wecc9_contingency1(0.01), ContingencySpec::wecc9_contingency2(0.01)] {
        let report = run_comparison(&case, &c, &ComparisonOptions::default())?;
        println!("{}", report.to_markdown());
        if let Some(dir) = &out {
            let dir = dir.join(&c.id);
            std::fs::create_dir_all(&dir)?;
            for (name, svg) in comparison_plots(&report) {
                std::fs::write(dir.join(name), svg)?;
            }
            println!("plots written to {}", dir.display());
        }
    }
    Ok(())
}
