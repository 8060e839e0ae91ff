//! Euler–Maruyama simulation of the pump process, the latent quadratures and the
//! homodyne records, plus the complete-record reference filter.
//!
//! Seeding: a trial's randomness comes from ChaCha12 keyed by the master seed,
//! with the stream id `4·trial + s` where `s` selects the pump (0) or optical (1)
//! noise. Streams never overlap, so trials are reproducible in any order.

use std::io::Write;

use nalgebra::{Matrix2, SVector, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::{kalman_bucy_step, GaussianBelief};
use crate::model::{BNormalization, CompleteModel, PhysicalParams, SingleChannelModel, NOISE_DIM};

/// Ornstein–Uhlenbeck pump law `dε = μ(ε − c)dt + g dv_ε`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PumpProcess {
    pub mu: f64,
    /// Tendency constant: the level the pump reverts to.
    pub c: f64,
    pub g: f64,
    /// Initial pump value; `None` starts the pump at `c`.
    pub epsilon0: Option<f64>,
}

impl Default for PumpProcess {
    fn default() -> Self {
        Self {
            mu: -0.01,
            c: 0.5,
            g: 0.028,
            epsilon0: None,
        }
    }
}

impl PumpProcess {
    pub fn initial(&self) -> f64 {
        self.epsilon0.unwrap_or(self.c)
    }

    /// Stationary variance `g² / (2|μ|)`.
    pub fn stationary_variance(&self) -> f64 {
        self.g * self.g / (2.0 * self.mu.abs())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu < 0.0) {
            return Err(Error::Config(format!(
                "pump drift mu must be < 0, got {}",
                self.mu
            )));
        }
        if !(self.g >= 0.0) {
            return Err(Error::Config(format!(
                "pump diffusion g must be >= 0, got {}",
                self.g
            )));
        }
        if !self.c.is_finite() || !self.initial().is_finite() {
            return Err(Error::Config(
                "pump tendency and initial value must be finite".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimGrid {
    pub dt: f64,
    pub n_steps: usize,
}

impl SimGrid {
    pub fn new(dt: f64, n_steps: usize) -> Result<Self> {
        if !(dt > 0.0) || n_steps == 0 {
            return Err(Error::Config(format!(
                "invalid grid: dt = {dt}, n_steps = {n_steps}"
            )));
        }
        Ok(Self { dt, n_steps })
    }

    /// Grid covering `[0, t_final]` with step `dt` (rounded to whole steps).
    pub fn from_horizon(dt: f64, t_final: f64) -> Result<Self> {
        if !(dt > 0.0) || !(t_final > 0.0) {
            return Err(Error::Config(format!(
                "invalid grid: dt = {dt}, t_final = {t_final}"
            )));
        }
        Self::new(dt, (t_final / dt).round().max(1.0) as usize)
    }

    pub fn t_final(&self) -> f64 {
        self.dt * self.n_steps as f64
    }

    /// Number of grid nodes, `n_steps + 1`.
    pub fn len(&self) -> usize {
        self.n_steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn time(&self, k: usize) -> f64 {
        self.dt * k as f64
    }
}

/// Which noise source a random stream feeds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseStream {
    Pump = 0,
    Optical = 1,
}

/// Per-trial seed: master seed plus trial index.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TrialSeed {
    pub master: u64,
    pub trial: u64,
}

impl TrialSeed {
    pub fn new(master: u64, trial: u64) -> Self {
        Self { master, trial }
    }

    pub fn rng(&self, stream: NoiseStream) -> ChaCha12Rng {
        let mut rng = ChaCha12Rng::seed_from_u64(self.master);
        rng.set_stream(self.trial.wrapping_mul(4).wrapping_add(stream as u64));
        rng
    }
}

/// Euler–Maruyama OU path with `n_steps + 1` nodes starting at `ε0`.
pub fn simulate_pump<R: Rng + ?Sized>(pump: &PumpProcess, grid: &SimGrid, rng: &mut R) -> Vec<f64> {
    let sqrt_dt = grid.dt.sqrt();
    let mut path = Vec::with_capacity(grid.len());
    let mut eps = pump.initial();
    path.push(eps);
    for _ in 0..grid.n_steps {
        let xi: f64 = rng.sample(StandardNormal);
        eps += pump.mu * (eps - pump.c) * grid.dt + pump.g * sqrt_dt * xi;
        path.push(eps);
    }
    path
}

/// The single-channel and complete-record models of one experiment.
///
/// Both share `B` and the first measurement row, which is what lets a single
/// noise draw drive every record.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelSet {
    pub single: SingleChannelModel,
    pub complete: CompleteModel,
}

impl ModelSet {
    pub fn new(
        params: &PhysicalParams,
        epsilon: f64,
        theta_lb: f64,
        theta_lc: f64,
        norm: BNormalization,
    ) -> Result<Self> {
        let single = SingleChannelModel::single(params, epsilon, norm)?;
        let complete = CompleteModel::complete(params, epsilon, theta_lb, theta_lc, norm)?;
        Ok(Self { single, complete })
    }

    fn check_shared_channel(&self) -> Result<()> {
        let same_b = self.single.b == self.complete.b;
        let same_row = self.single.c.row(0) == self.complete.c.row(0)
            && self.single.m.row(0) == self.complete.m.row(0);
        if same_b && same_row && self.single.gamma_total == self.complete.gamma_total {
            Ok(())
        } else {
            Err(Error::Config(
                "single-channel model is not the first row of the complete model".into(),
            ))
        }
    }
}

/// Latent path and the three homodyne records of one realisation.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentRecord {
    /// `n_steps + 1` nodes.
    pub x_latent: Vec<Vector2<f64>>,
    /// `n_steps` increments `y·dt` over `[t_k, t_{k+1}]`, channels `(m, lb, lc)`.
    pub y_increments: Vec<Vector3<f64>>,
}

/// Draws the initial state from `N(x0, v0)`, then advances
/// `dx = A(ε_k)x dt + B dv` and emits `y dt = C x dt + M dv` for all three channels
/// from the same six-dimensional vacuum increment `dv ~ N(0, (ħ/2)dt I)`.
pub fn simulate_latent<R: Rng + ?Sized>(
    models: &ModelSet,
    pump_path: &[f64],
    grid: &SimGrid,
    x0: &Vector2<f64>,
    v0: &Matrix2<f64>,
    hbar: f64,
    rng: &mut R,
) -> Result<LatentRecord> {
    if pump_path.len() != grid.len() {
        return Err(Error::Config(format!(
            "pump path has {} nodes but grid has {}",
            pump_path.len(),
            grid.len()
        )));
    }
    models.check_shared_channel()?;
    let chol = v0
        .cholesky()
        .map(|c| c.l())
        .or_else(|| (v0.amax() == 0.0).then(Matrix2::zeros))
        .ok_or_else(|| Error::Config("initial covariance is not positive definite".into()))?;

    let m = &models.complete;
    let dt = grid.dt;
    let noise_scale = (0.5 * hbar * dt).sqrt();

    let xi0 = Vector2::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
    let mut x = x0 + chol * xi0;

    let mut x_latent = Vec::with_capacity(grid.len());
    let mut y_increments = Vec::with_capacity(grid.n_steps);
    x_latent.push(x);
    for &eps in &pump_path[..grid.n_steps] {
        let dv = SVector::<f64, NOISE_DIM>::from_fn(|_, _| {
            rng.sample::<f64, _>(StandardNormal) * noise_scale
        });
        y_increments.push(m.c * x * dt + m.m * dv);
        x += m.drift(eps) * x * dt + m.b * dv;
        x_latent.push(x);
    }
    Ok(LatentRecord {
        x_latent,
        y_increments,
    })
}

/// Conditional means and covariances, one per grid node.
pub type FilterPath = (Vec<Vector2<f64>>, Vec<Matrix2<f64>>);

/// Complete-record Kalman–Bucy filter with the true pump known at each step.
pub fn ground_truth_filter(
    model: &CompleteModel,
    y3: &[Vector3<f64>],
    epsilon_true: &[f64],
    grid: &SimGrid,
    init: &GaussianBelief,
) -> Result<FilterPath> {
    if y3.len() != grid.n_steps || epsilon_true.len() != grid.len() {
        return Err(Error::Config(format!(
            "record lengths ({} increments, {} pump nodes) do not match grid of {} steps",
            y3.len(),
            epsilon_true.len(),
            grid.n_steps
        )));
    }
    let mut means = Vec::with_capacity(grid.len());
    let mut covs = Vec::with_capacity(grid.len());
    let mut belief = *init;
    means.push(belief.mean);
    covs.push(belief.cov);
    for (dy, &eps) in y3.iter().zip(epsilon_true) {
        belief = kalman_bucy_step(&belief, model, eps, dy, grid.dt);
        means.push(belief.mean);
        covs.push(belief.cov);
    }
    Ok((means, covs))
}

/// One simulated realisation plus its reference estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub grid: SimGrid,
    pub epsilon_true: Vec<f64>,
    pub x_latent: Vec<Vector2<f64>>,
    pub y_increments: Vec<Vector3<f64>>,
    pub x_truth: Vec<Vector2<f64>>,
    pub v_truth: Vec<Matrix2<f64>>,
}

impl Trajectory {
    /// Simulates pump, latent state and records for one trial, then runs the
    /// reference filter from the same prior as the latent initial state.
    pub fn simulate(
        models: &ModelSet,
        pump: &PumpProcess,
        grid: &SimGrid,
        prior: &GaussianBelief,
        hbar: f64,
        seed: TrialSeed,
    ) -> Result<Self> {
        let epsilon_true = simulate_pump(pump, grid, &mut seed.rng(NoiseStream::Pump));
        let rec = simulate_latent(
            models,
            &epsilon_true,
            grid,
            &prior.mean,
            &prior.cov,
            hbar,
            &mut seed.rng(NoiseStream::Optical),
        )?;
        let (x_truth, v_truth) = ground_truth_filter(
            &models.complete,
            &rec.y_increments,
            &epsilon_true,
            grid,
            prior,
        )?;
        Ok(Self {
            grid: *grid,
            epsilon_true,
            x_latent: rec.x_latent,
            y_increments: rec.y_increments,
            x_truth,
            v_truth,
        })
    }

    /// The measured channel alone: `y_m dt` per step.
    pub fn single_channel(&self) -> Vec<f64> {
        self.y_increments.iter().map(|y| y[0]).collect()
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.grid.len()).map(|k| self.grid.time(k))
    }

    /// Writes one row per step `k = 0..n_steps`; the `y_*` columns hold the
    /// increment over `[t_k, t_{k+1}]`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "t,eps_true,q_latent,p_latent,y_m,y_lb,y_lc,q_truth,p_truth,det_V"
        )?;
        for k in 0..self.grid.n_steps {
            let x = &self.x_latent[k];
            let y = &self.y_increments[k];
            let xt = &self.x_truth[k];
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{}",
                self.grid.time(k),
                self.epsilon_true[k],
                x[0],
                x[1],
                y[0],
                y[1],
                y[2],
                xt[0],
                xt[1],
                self.v_truth[k].determinant()
            )?;
        }
        Ok(())
    }
}
