//! Runs the fixed-pump Kalman–Bucy filter on a simulated single-channel record and
//! reports its tracking error against the complete-record reference estimate.
use opo_estim::filters::{kf_baseline_run, steady_state_riccati};
use opo_estim::harness::{ExperimentConfig, TrialContext};
use opo_estim::sde::Trajectory;

fn main() -> opo_estim::Result<()> {
    let cfg = ExperimentConfig {
        pump: opo_estim::sde::PumpProcess {
            g: 0.0,
            ..Default::default()
        },
        ..Default::default()
    };
    let ctx = TrialContext::new(&cfg)?;
    let prior = cfg.state_prior();
    let traj = Trajectory::simulate(
        &ctx.models,
        &cfg.pump,
        &ctx.grid,
        &prior,
        cfg.physical.hbar,
        ctx.seed(0),
    )?;
    let kf = kf_baseline_run(
        &traj.single_channel(),
        &ctx.models.single,
        cfg.pump.c,
        &prior,
        ctx.grid.dt,
    )
    .map_err(|d| opo_estim::Error::Numerical {
        message: format!("diverged at step {}", d.step),
        residual: f64::NAN,
    })?;

    let n = traj.x_truth.len();
    let mse: f64 = (0..n)
        .map(|k| (kf.means[k] - traj.x_truth[k]).norm_squared())
        .sum::<f64>()
        / n as f64;
    println!("mean squared distance to the complete-record estimate: {mse:.4}");
    println!("final covariance {}", kf.covs[n - 1]);
    println!(
        "stationary solution {}",
        steady_state_riccati(&ctx.models.single)?
    );
    Ok(())
}
