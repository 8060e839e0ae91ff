use std::fmt;

use crate::error::{Error, Result};
use crate::filters::{
    build_joint_model, dual_kf_run, joint_ekf_run, kf_baseline_run, Diverged, EstimatePath,
    JointBelief, JointModel,
};
use crate::harness::config::ExperimentConfig;
use crate::metrics::{rpi_with_burn_in, Method, Quantity, TrialRpis};
use crate::sde::{ModelSet, SimGrid, Trajectory, TrialSeed};

/// Models and grid shared by every trial of one configuration.
#[derive(Clone, Debug)]
pub struct TrialContext {
    pub config: ExperimentConfig,
    pub grid: SimGrid,
    /// Models evaluated at the tendency constant (the baseline's assumption).
    pub models: ModelSet,
    pub joint: JointModel,
}

impl TrialContext {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let grid = config.grid()?;
        let c = config.pump.c;
        let models = ModelSet::new(
            &config.physical,
            c,
            config.theta_lb(),
            config.theta_lc(),
            config.b_normalization,
        )?;
        let joint = build_joint_model(&config.physical, &config.pump, c, config.b_normalization)?;
        Ok(Self {
            config: config.clone(),
            grid,
            models,
            joint,
        })
    }

    pub fn seed(&self, trial: u64) -> TrialSeed {
        TrialSeed::new(self.config.master_seed, trial)
    }
}

/// Which estimator failed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Estimator {
    Baseline,
    DualKf,
    JointEkf,
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            Estimator::Baseline => "kf",
            Estimator::DualKf => "dual-kf",
            Estimator::JointEkf => "joint-ekf",
        })
    }
}

/// How a trial ended.
#[derive(Clone, Debug, PartialEq)]
pub enum TrialOutcome {
    Completed(TrialRpis),
    /// An estimator produced a non-finite belief at `step`.
    Diverged {
        estimator: Estimator,
        step: usize,
    },
    /// The RPI was undefined (zero baseline error); the trial is left out.
    Undefined(String),
}

impl TrialOutcome {
    pub fn rpis(&self) -> Option<&TrialRpis> {
        match self {
            TrialOutcome::Completed(r) => Some(r),
            _ => None,
        }
    }
}

/// Everything one trial produced.
#[derive(Clone, Debug)]
pub struct TrialRun {
    pub index: u64,
    pub trajectory: Trajectory,
    pub baseline: std::result::Result<EstimatePath, Diverged>,
    pub dual: std::result::Result<EstimatePath, Diverged>,
    pub joint: std::result::Result<EstimatePath, Diverged>,
    pub outcome: TrialOutcome,
}

/// Simulates one realisation and runs the reference filter, the baseline, the
/// dual filter and the joint EKF on the same records.
pub fn run_trial(ctx: &TrialContext, index: u64) -> Result<TrialRun> {
    let cfg = &ctx.config;
    let dt = ctx.grid.dt;
    let prior = cfg.state_prior();
    let trajectory = Trajectory::simulate(
        &ctx.models,
        &cfg.pump,
        &ctx.grid,
        &prior,
        cfg.physical.hbar,
        ctx.seed(index),
    )?;
    let dy = trajectory.single_channel();

    let baseline = kf_baseline_run(&dy, &ctx.models.single, cfg.pump.c, &prior, dt);
    let dual = dual_kf_run(
        &dy,
        &ctx.models.single,
        &cfg.pump,
        &prior,
        &cfg.pump_prior(),
        dt,
    );
    let joint_init = JointBelief::from_parts(&prior, &cfg.pump_prior(), cfg.pump.c);
    let joint = joint_ekf_run(&dy, &ctx.joint, &joint_init, dt);

    let outcome = score(&trajectory, &baseline, &dual, &joint, cfg.burn_in)?;
    if let TrialOutcome::Diverged { estimator, step } = &outcome {
        log::warn!("trial {index}: {estimator} diverged at step {step}");
    }
    Ok(TrialRun {
        index,
        trajectory,
        baseline,
        dual,
        joint,
        outcome,
    })
}

/// Convenience wrapper building the context for a single trial.
pub fn run_single_trial(config: &ExperimentConfig, index: u64) -> Result<TrialRun> {
    run_trial(&TrialContext::new(config)?, index)
}

fn score(
    traj: &Trajectory,
    baseline: &std::result::Result<EstimatePath, Diverged>,
    dual: &std::result::Result<EstimatePath, Diverged>,
    joint: &std::result::Result<EstimatePath, Diverged>,
    burn_in: f64,
) -> Result<TrialOutcome> {
    let paths = [
        (Estimator::Baseline, baseline),
        (Estimator::DualKf, dual),
        (Estimator::JointEkf, joint),
    ];
    for (estimator, path) in paths {
        if let Err(d) = path {
            return Ok(TrialOutcome::Diverged {
                estimator,
                step: d.step,
            });
        }
    }
    let (Ok(base), Ok(dual), Ok(joint)) = (baseline, dual, joint) else {
        unreachable!("checked above")
    };
    let dt = traj.grid.dt;
    let truth_q: Vec<f64> = traj.x_truth.iter().map(|x| x[0]).collect();
    let truth_p: Vec<f64> = traj.x_truth.iter().map(|x| x[1]).collect();
    let (base_q, base_p) = (base.q(), base.p());

    let mut rpis = TrialRpis::default();
    for (method, path) in [(Method::DualKf, dual), (Method::JointEkf, joint)] {
        let values = [
            (
                Quantity::Epsilon,
                rpi_with_burn_in(
                    &path.epsilon,
                    &traj.epsilon_true,
                    &base.epsilon,
                    dt,
                    burn_in,
                ),
            ),
            (
                Quantity::Q,
                rpi_with_burn_in(&path.q(), &truth_q, &base_q, dt, burn_in),
            ),
            (
                Quantity::P,
                rpi_with_burn_in(&path.p(), &truth_p, &base_p, dt, burn_in),
            ),
        ];
        for (quantity, value) in values {
            match value {
                Ok(v) => rpis.set(method, quantity, v),
                Err(Error::UndefinedMetric(msg)) => {
                    return Ok(TrialOutcome::Undefined(format!(
                        "{method} {quantity}: {msg}"
                    )));
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok(TrialOutcome::Completed(rpis))
}
