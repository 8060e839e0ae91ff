//! Invariant report for the default model and for the literal noise normalization.
use opo_estim::harness::{check_invariants, ExperimentConfig};
use opo_estim::model::BNormalization;

fn main() -> opo_estim::Result<()> {
    for b_normalization in [BNormalization::Consistent, BNormalization::Paper] {
        let cfg = ExperimentConfig {
            b_normalization,
            ..Default::default()
        };
        println!("== {b_normalization:?}\n{}\n", check_invariants(&cfg)?);
    }
    Ok(())
}
