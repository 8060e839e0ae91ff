use std::fmt;

use nalgebra::{Matrix2, SVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::Result;
use crate::filters::{kalman_bucy_step, steady_state_riccati, GaussianBelief};
use crate::harness::config::ExperimentConfig;
use crate::linalg::solve_lyapunov2;
use crate::model::{
    check_fluctuation_dissipation, check_fluctuation_observation, check_uncertainty,
    BNormalization, PhysicalParams, StateSpaceModel,
};
use crate::sde::{simulate_pump, NoiseStream, PumpProcess, SimGrid, TrialSeed};

pub const VACUUM_TOL: f64 = 1e-10;
pub const RICCATI_AGREEMENT_TOL: f64 = 1e-8;
pub const OU_RELATIVE_TOL: f64 = 0.05;
pub const SWEEP_POINTS: usize = 100;

const OU_PATHS: u64 = 100;
const OU_HORIZON: f64 = 1e4;
const OU_DT: f64 = 1e-2;
const OU_BURN_IN: f64 = 500.0;
const INTEGRATION_DT: f64 = 1e-2;
const INTEGRATION_MAX_STEPS: usize = 2_000_000;

/// What a check is expected to do under the configured noise normalization.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Expectation {
    Pass,
    /// Must fail; passing is a regression.
    Fail,
    /// Reported but not gating.
    Either,
}

#[derive(Clone, Debug)]
pub struct CheckItem {
    pub name: String,
    pub passed: bool,
    pub expected: Expectation,
    pub detail: String,
}

impl CheckItem {
    pub fn ok(&self) -> bool {
        match self.expected {
            Expectation::Pass => self.passed,
            Expectation::Fail => !self.passed,
            Expectation::Either => true,
        }
    }

    fn label(&self) -> &'static str {
        match (self.expected, self.passed) {
            (Expectation::Pass, true) => "PASS",
            (Expectation::Pass, false) => "FAIL",
            (Expectation::Fail, false) => "XFAIL",
            (Expectation::Fail, true) => "XPASS",
            (Expectation::Either, true) => "pass (not gating)",
            (Expectation::Either, false) => "fail (not gating)",
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct InvariantReport {
    pub items: Vec<CheckItem>,
}

impl InvariantReport {
    pub fn all_ok(&self) -> bool {
        self.items.iter().all(CheckItem::ok)
    }

    pub fn get(&self, name: &str) -> Option<&CheckItem> {
        self.items.iter().find(|i| i.name == name)
    }

    fn push(
        &mut self,
        name: impl Into<String>,
        passed: bool,
        expected: Expectation,
        detail: String,
    ) {
        self.items.push(CheckItem {
            name: name.into(),
            passed,
            expected,
            detail,
        });
    }
}

impl fmt::Display for InvariantReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for item in &self.items {
            writeln!(f, "{:<18} {:<40} {}", item.label(), item.name, item.detail)?;
        }
        let failed = self.items.iter().filter(|i| !i.ok()).count();
        write!(f, "{} checks, {} unexpected", self.items.len(), failed)
    }
}

/// The literal normalization breaks the noise relations unless ħ = 2, where
/// both normalizations coincide.
fn normalization_is_unphysical(params: &PhysicalParams, norm: BNormalization) -> bool {
    norm == BNormalization::Paper && (params.hbar - 2.0).abs() > 1e-12
}

/// Iterates the filter covariance update (which does not depend on the record)
/// until it stops moving.
pub fn integrate_riccati<const K: usize>(
    model: &StateSpaceModel<K>,
    v0: &Matrix2<f64>,
    dt: f64,
) -> Matrix2<f64> {
    let mut belief = GaussianBelief {
        mean: Default::default(),
        cov: *v0,
    };
    let zero = SVector::<f64, K>::zeros();
    for _ in 0..INTEGRATION_MAX_STEPS {
        let next = kalman_bucy_step(&belief, model, model.epsilon, &zero, dt);
        let change = (next.cov - belief.cov).amax();
        belief = next;
        if change < 1e-16 * (1.0 + belief.cov.amax()) {
            break;
        }
    }
    belief.cov
}

/// Pooled sample variance of `n_paths` OU paths after a burn-in window.
pub fn ou_sample_variance(
    pump: &PumpProcess,
    master_seed: u64,
    n_paths: u64,
    horizon: f64,
    dt: f64,
    burn_in: f64,
) -> Result<f64> {
    let grid = SimGrid::from_horizon(dt, horizon)?;
    let start = (burn_in / dt).ceil() as usize;
    let (mut n, mut sum, mut sum_sq) = (0usize, 0.0, 0.0);
    for i in 0..n_paths {
        let mut rng = TrialSeed::new(master_seed, i).rng(NoiseStream::Pump);
        let path = simulate_pump(pump, &grid, &mut rng);
        for &e in &path[start..] {
            let d = e - pump.c;
            n += 1;
            sum += d;
            sum_sq += d * d;
        }
    }
    let mean = sum / n as f64;
    Ok((sum_sq - n as f64 * mean * mean) / (n as f64 - 1.0))
}

fn models(
    params: &PhysicalParams,
    eps: f64,
    lb: f64,
    lc: f64,
    norm: BNormalization,
) -> Result<(StateSpaceModel<1>, StateSpaceModel<3>)> {
    Ok((
        StateSpaceModel::single(params, eps, norm)?,
        StateSpaceModel::complete(params, eps, lb, lc, norm)?,
    ))
}

/// Runs the physical-consistency and oracle suites for `config`.
pub fn check_invariants(config: &ExperimentConfig) -> Result<InvariantReport> {
    config.validate()?;
    let p = &config.physical;
    let norm = config.b_normalization;
    let hbar = p.hbar;
    let noise_expect = if normalization_is_unphysical(p, norm) {
        Expectation::Either
    } else {
        Expectation::Pass
    };
    let observation_expect = if normalization_is_unphysical(p, norm) {
        Expectation::Fail
    } else {
        Expectation::Pass
    };
    let mut report = InvariantReport::default();
    let eps = config.pump.c;
    let (single, complete) = models(p, eps, config.theta_lb(), config.theta_lc(), norm)?;

    // uncertainty relation on the stationary conditional states
    for (name, v) in [
        (
            "heisenberg steady state (single)",
            steady_state_riccati(&single),
        ),
        (
            "heisenberg steady state (complete)",
            steady_state_riccati(&complete),
        ),
    ] {
        match v {
            Ok(v) => {
                let out = check_uncertainty(&v, hbar)?;
                report.push(
                    name,
                    out.pass,
                    noise_expect,
                    format!("det V - hbar^2/4 = {:.3e}", out.margin),
                );
            }
            Err(e) => report.push(name, false, noise_expect, format!("no steady state: {e}")),
        }
    }

    let fd = check_fluctuation_dissipation(&single.a, &single.d, hbar);
    report.push(
        "fluctuation-dissipation",
        fd.pass,
        noise_expect,
        format!("min eigenvalue {:.3e}", fd.margin),
    );
    let fo1 = check_fluctuation_observation(&single.d, &single.gamma_corr, &single.c, hbar);
    report.push(
        "fluctuation-observation (single)",
        fo1.pass,
        observation_expect,
        format!("min eigenvalue {:.3e}", fo1.margin),
    );
    let fo3 = check_fluctuation_observation(&complete.d, &complete.gamma_corr, &complete.c, hbar);
    report.push(
        "fluctuation-observation (complete)",
        fo3.pass,
        observation_expect,
        format!("min eigenvalue {:.3e}", fo3.margin),
    );

    let vacuum_model = single.with_epsilon(0.0);
    let vacuum = solve_lyapunov2(&vacuum_model.a, &vacuum_model.d);
    let vacuum_err = vacuum.map_or(f64::INFINITY, |v| {
        (v - Matrix2::identity() * (0.5 * hbar)).amax()
    });
    report.push(
        "vacuum steady state",
        vacuum_err <= VACUUM_TOL,
        noise_expect,
        format!("max |V - (hbar/2)I| = {vacuum_err:.3e}"),
    );

    // random physical parameters
    let mut rng = ChaCha12Rng::seed_from_u64(config.master_seed);
    let mut worst = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
    let mut sweep_ok = true;
    for _ in 0..SWEEP_POINTS {
        let q = PhysicalParams {
            gamma1: rng.random_range(0.05..2.0),
            gamma2: rng.random_range(0.01..1.0),
            transmittance: rng.random_range(0.0..=1.0),
            theta_m: rng.random_range(0.0..std::f64::consts::TAU),
            hbar,
        };
        let e = rng.random_range(-0.9..0.9) * q.total_decay();
        let (lb, lc) = (
            rng.random_range(0.0..std::f64::consts::TAU),
            rng.random_range(0.0..std::f64::consts::TAU),
        );
        let (s, c) = models(&q, e, lb, lc, norm)?;
        let fd = check_fluctuation_dissipation(&s.a, &s.d, hbar);
        let fo1 = check_fluctuation_observation(&s.d, &s.gamma_corr, &s.c, hbar);
        let fo3 = check_fluctuation_observation(&c.d, &c.gamma_corr, &c.c, hbar);
        sweep_ok &= fd.pass && fo1.pass && fo3.pass;
        worst = (
            worst.0.min(fd.margin),
            worst.1.min(fo1.margin),
            worst.2.min(fo3.margin),
        );
    }
    report.push(
        format!("random parameter sweep ({SWEEP_POINTS} points)"),
        sweep_ok,
        if normalization_is_unphysical(p, norm) {
            Expectation::Either
        } else {
            Expectation::Pass
        },
        format!(
            "worst margins: dissipation {:.3e}, observation {:.3e} / {:.3e}",
            worst.0, worst.1, worst.2
        ),
    );

    // stationary solver against the time-stepped filter
    let start = Matrix2::identity() * (0.5 * hbar);
    for (name, solved, integrated) in [
        (
            "riccati vs integration (single)",
            steady_state_riccati(&single),
            integrate_riccati(&single, &start, INTEGRATION_DT),
        ),
        (
            "riccati vs integration (complete)",
            steady_state_riccati(&complete),
            integrate_riccati(&complete, &start, INTEGRATION_DT),
        ),
    ] {
        match solved {
            Ok(v) => {
                let diff = (v - integrated).amax();
                report.push(
                    name,
                    diff <= RICCATI_AGREEMENT_TOL,
                    Expectation::Pass,
                    format!("max difference {diff:.3e}"),
                );
            }
            Err(e) => report.push(
                name,
                false,
                Expectation::Pass,
                format!("solver failed: {e}"),
            ),
        }
    }

    let pump = PumpProcess {
        epsilon0: None,
        ..config.pump
    };
    let target = pump.stationary_variance();
    if target > 0.0 {
        let var = ou_sample_variance(
            &pump,
            config.master_seed,
            OU_PATHS,
            OU_HORIZON,
            OU_DT,
            OU_BURN_IN,
        )?;
        let rel = (var - target).abs() / target;
        report.push(
            "pump stationary variance",
            rel <= OU_RELATIVE_TOL,
            Expectation::Pass,
            format!(
                "sample {var:.5} vs g^2/(2|mu|) = {target:.5} ({:.2}% off)",
                100.0 * rel
            ),
        );
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integration_reaches_the_stationary_solution() {
        let p = PhysicalParams {
            transmittance: 0.5,
            ..PhysicalParams::default()
        };
        let m = StateSpaceModel::single(&p, 0.3, BNormalization::Consistent).unwrap();
        let v = integrate_riccati(&m, &Matrix2::identity(), 0.05);
        assert!((v - steady_state_riccati(&m).unwrap()).amax() < 1e-9);
    }

    #[test]
    fn ou_variance_short_run() {
        let pump = PumpProcess::default();
        let v = ou_sample_variance(&pump, 7, 20, 2000.0, 0.05, 300.0).unwrap();
        assert!((v / pump.stationary_variance() - 1.0).abs() < 0.2, "{v}");
    }

    #[test]
    fn expectation_labels() {
        let item = |passed, expected| CheckItem {
            name: "x".into(),
            passed,
            expected,
            detail: String::new(),
        };
        assert!(item(false, Expectation::Fail).ok());
        assert!(!item(true, Expectation::Fail).ok());
        assert!(item(false, Expectation::Either).ok());
        assert!(!item(false, Expectation::Pass).ok());
    }

    #[test]
    fn normalizations_coincide_at_hbar_two() {
        let p = PhysicalParams {
            hbar: 2.0,
            ..PhysicalParams::default()
        };
        assert!(!normalization_is_unphysical(&p, BNormalization::Paper));
        assert!(normalization_is_unphysical(
            &PhysicalParams::default(),
            BNormalization::Paper
        ));
    }
}
