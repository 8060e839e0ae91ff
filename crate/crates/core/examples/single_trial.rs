//! One estimation trial: the baseline, dual and joint filters on the same record.
//! Writes CSV paths and an SVG figure to the directory given as first argument.
use std::path::PathBuf;

use opo_estim::harness::experiment::write_single_trial;
use opo_estim::harness::{run_single_trial, ExperimentConfig};
use opo_estim::metrics::{Method, Quantity};

fn main() -> opo_estim::Result<()> {
    let out = PathBuf::from(
        std::env::args()
            .nth(1)
            .unwrap_or_else(|| "out/single_trial".into()),
    );
    let run = run_single_trial(&ExperimentConfig::default(), 0)?;
    if let Some(r) = run.outcome.rpis() {
        for m in Method::ALL {
            let v: Vec<String> = Quantity::ALL
                .iter()
                .map(|&q| format!("{q} {:6.2}%", 100.0 * r.get(m, q)))
                .collect();
            println!("{m:<10} {}", v.join("  "));
        }
    }
    let files = write_single_trial(&run, &out)?;
    println!("figure: {}", files.svg.display());
    Ok(())
}
