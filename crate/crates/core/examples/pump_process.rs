//! Simulates the Ornstein–Uhlenbeck pump and compares its statistics with theory.
use opo_estim::harness::invariants::ou_sample_variance;
use opo_estim::sde::{simulate_pump, NoiseStream, PumpProcess, SimGrid, TrialSeed};

fn main() -> opo_estim::Result<()> {
    let pump = PumpProcess::default();
    let grid = SimGrid::from_horizon(0.01, 1000.0)?;
    let path = simulate_pump(
        &pump,
        &grid,
        &mut TrialSeed::new(2021, 0).rng(NoiseStream::Pump),
    );
    for k in (0..grid.len()).step_by(grid.n_steps / 10) {
        println!("t = {:7.1}  eps = {:.4}", grid.time(k), path[k]);
    }
    let var = ou_sample_variance(&pump, 2021, 50, 5000.0, 0.01, 500.0)?;
    println!(
        "pooled variance {var:.5}, stationary g^2/(2|mu|) = {:.5}",
        pump.stationary_variance()
    );
    Ok(())
}
