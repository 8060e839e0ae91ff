//! Continuous-time estimators discretised with explicit Euler steps.
//!
//! Every step function is pure: it takes a belief and one measurement increment
//! `dy = y·dt` and returns the next belief. Four estimators are provided:
//!
//! * [`kalman_bucy_step`]: the conditioned-moment filter for a known pump amplitude,
//!   used for the baseline (pump fixed at its tendency constant) and for the
//!   complete-record reference filter.
//! * [`dual_kf_step`]: a state filter and a scalar pump filter run side by side,
//!   each linearised around the other's current estimate.
//! * [`joint_ekf_step`]: an EKF over the augmented state `(q, p, ε − c)`.
//! * [`steady_state_riccati`]: the algebraic fixed point of the covariance flow,
//!   solved by Newton–Kleinman iteration rather than by time stepping.

use nalgebra::{Matrix2, Matrix3, SMatrix, SVector, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::linalg::{
    cholesky_shift_ok3, clip_negative_eigenvalues2, clip_negative_eigenvalues3, solve_lyapunov2,
    sym2_eigenvalues, symmetrize, EIGEN_FLOOR,
};
use crate::model::{
    drift_sensitivity, BNormalization, PhysicalParams, SingleChannelModel, StateSpaceModel,
    NOISE_DIM,
};
use crate::sde::PumpProcess;

/// Gaussian belief over the quadratures.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianBelief {
    pub mean: Vector2<f64>,
    pub cov: Matrix2<f64>,
}

impl GaussianBelief {
    pub fn new(mean: Vector2<f64>, cov: Matrix2<f64>) -> Result<Self> {
        if (cov - cov.transpose()).amax() > 1e-12 * (1.0 + cov.amax()) {
            return Err(Error::Contract("belief covariance is not symmetric".into()));
        }
        let (low, _) = sym2_eigenvalues(&cov);
        if low < EIGEN_FLOOR {
            return Err(Error::Contract(format!(
                "belief covariance has eigenvalue {low:.3e} < 0"
            )));
        }
        Ok(Self { mean, cov })
    }

    /// Coherent-state prior: the given mean with vacuum covariance `(ħ/2)I`.
    pub fn coherent(mean: Vector2<f64>, hbar: f64) -> Self {
        Self {
            mean,
            cov: Matrix2::identity() * (0.5 * hbar),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.mean
            .iter()
            .chain(self.cov.iter())
            .all(|v| v.is_finite())
    }
}

/// Scalar Gaussian belief over the pump amplitude.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParamBelief {
    pub mean: f64,
    pub var: f64,
}

/// Gaussian belief over `z = (q, p, ε − c)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JointBelief {
    pub mean: Vector3<f64>,
    pub cov: Matrix3<f64>,
}

impl JointBelief {
    /// Stacks a quadrature belief and a pump belief with no cross-covariance.
    pub fn from_parts(state: &GaussianBelief, param: &ParamBelief, tendency: f64) -> Self {
        let mut cov = Matrix3::zeros();
        cov.fixed_view_mut::<2, 2>(0, 0).copy_from(&state.cov);
        cov[(2, 2)] = param.var;
        Self {
            mean: Vector3::new(state.mean[0], state.mean[1], param.mean - tendency),
            cov,
        }
    }

    pub fn state(&self) -> GaussianBelief {
        GaussianBelief {
            mean: self.mean.fixed_rows::<2>(0).into_owned(),
            cov: self.cov.fixed_view::<2, 2>(0, 0).into_owned(),
        }
    }

    pub fn pump_estimate(&self, tendency: f64) -> f64 {
        self.mean[2] + tendency
    }

    pub fn is_finite(&self) -> bool {
        self.mean
            .iter()
            .chain(self.cov.iter())
            .all(|v| v.is_finite())
    }
}

/// Symmetrise and, if Euler drift has pushed an eigenvalue below the floor,
/// clip the negative part.
#[inline]
pub fn covariance_hygiene2(cov: &Matrix2<f64>) -> Matrix2<f64> {
    let sym = symmetrize(cov);
    let (low, _) = sym2_eigenvalues(&sym);
    if low >= EIGEN_FLOOR {
        return sym;
    }
    let (fixed, lowest) = clip_negative_eigenvalues2(&sym);
    log::debug!("clipped covariance eigenvalue {lowest:.3e}");
    fixed
}

#[inline]
pub fn covariance_hygiene3(cov: &Matrix3<f64>) -> Matrix3<f64> {
    let sym = symmetrize(cov);
    if cholesky_shift_ok3(&sym, -EIGEN_FLOOR) {
        return sym;
    }
    let (fixed, lowest) = clip_negative_eigenvalues3(&sym);
    if lowest < EIGEN_FLOOR {
        log::debug!("clipped joint covariance eigenvalue {lowest:.3e}");
        fixed
    } else {
        sym
    }
}

/// State gain `K = (V Cᵀ + Γᵀ) R⁻¹`.
#[inline]
pub fn kalman_gain<const K: usize>(
    cov: &Matrix2<f64>,
    model: &StateSpaceModel<K>,
) -> SMatrix<f64, 2, K> {
    (cov * model.c.transpose() + model.gamma_corr.transpose()) * model.r_inv
}

/// Classical Runge–Kutta step for the deterministic covariance equations.
/// Explicit Euler drifts below the uncertainty bound when a filter starts from a
/// pure state; RK4 keeps that error at the rounding level and has the same
/// fixed points as the differential equation.
#[inline]
fn rk4<T>(y: &T, dt: f64, f: impl Fn(&T) -> T) -> T
where
    T: Copy + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
{
    let k1 = f(y);
    let k2 = f(&(*y + k1 * (0.5 * dt)));
    let k3 = f(&(*y + k2 * (0.5 * dt)));
    let k4 = f(&(*y + k3 * dt));
    *y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}

/// One step of the Kalman–Bucy filter with the drift evaluated at `epsilon`:
/// Euler–Maruyama for the mean (gain from the current covariance), RK4 for the
/// Riccati equation.
#[inline]
pub fn kalman_bucy_step<const K: usize>(
    belief: &GaussianBelief,
    model: &StateSpaceModel<K>,
    epsilon: f64,
    dy: &SVector<f64, K>,
    dt: f64,
) -> GaussianBelief {
    let a = model.drift(epsilon);
    let gain = kalman_gain(&belief.cov, model);
    let innovation = dy - model.c * belief.mean * dt;
    let mean = belief.mean + a * belief.mean * dt + gain * innovation;
    let cov = rk4(&belief.cov, dt, |v| {
        let k = kalman_gain(v, model);
        a * v + v * a.transpose() + model.d - k * model.r * k.transpose()
    });
    GaussianBelief {
        mean,
        cov: covariance_hygiene2(&cov),
    }
}

/// A filter that produced a non-finite belief.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Diverged {
    pub step: usize,
}

/// Output path of a state estimator: one entry per grid node.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EstimatePath {
    pub means: Vec<Vector2<f64>>,
    pub covs: Vec<Matrix2<f64>>,
    pub epsilon: Vec<f64>,
}

impl EstimatePath {
    fn with_capacity(n: usize) -> Self {
        Self {
            means: Vec::with_capacity(n),
            covs: Vec::with_capacity(n),
            epsilon: Vec::with_capacity(n),
        }
    }

    fn push(&mut self, state: &GaussianBelief, epsilon: f64) {
        self.means.push(state.mean);
        self.covs.push(state.cov);
        self.epsilon.push(epsilon);
    }

    pub fn q(&self) -> Vec<f64> {
        self.means.iter().map(|m| m[0]).collect()
    }

    pub fn p(&self) -> Vec<f64> {
        self.means.iter().map(|m| m[1]).collect()
    }
}

/// Kalman–Bucy filter with the pump pinned at the tendency constant `c`.
pub fn kf_baseline_run(
    dy: &[f64],
    model: &SingleChannelModel,
    tendency: f64,
    init: &GaussianBelief,
    dt: f64,
) -> std::result::Result<EstimatePath, Diverged> {
    let mut path = EstimatePath::with_capacity(dy.len() + 1);
    let mut state = *init;
    path.push(&state, tendency);
    for (k, &y) in dy.iter().enumerate() {
        state = kalman_bucy_step(&state, model, tendency, &SVector::<f64, 1>::new(y), dt);
        if !state.is_finite() {
            return Err(Diverged { step: k + 1 });
        }
        path.push(&state, tendency);
    }
    Ok(path)
}

/// Linearisation coefficient `C_ε = C (∂A/∂ε) x_c` of the pump filter.
#[inline]
pub fn pump_sensitivity(model: &SingleChannelModel, state_mean: &Vector2<f64>) -> f64 {
    (model.c * drift_sensitivity() * state_mean)[0]
}

/// One step of the dual filter.
///
/// Both halves read the same pre-update `(x_c, ε_c)`: the state filter runs with
/// the drift at `ε_c`, the pump filter linearises around `x_c`, and the two new
/// beliefs are committed together.
#[inline]
pub fn dual_kf_step(
    state: &GaussianBelief,
    param: &ParamBelief,
    model: &SingleChannelModel,
    pump: &PumpProcess,
    dy: f64,
    dt: f64,
) -> (GaussianBelief, ParamBelief) {
    let c_eps = pump_sensitivity(model, &state.mean);
    let innovation = dy - (model.c * state.mean)[0] * dt;
    let r = model.r[(0, 0)];
    let r_inv = model.r_inv[(0, 0)];

    let next_state = kalman_bucy_step(state, model, param.mean, &SVector::<f64, 1>::new(dy), dt);

    // Γ_ε vanishes: the pump noise is independent of the optical vacuum.
    let gain = param.var * c_eps * r_inv;
    let mean = param.mean + pump.mu * (param.mean - pump.c) * dt + gain * innovation;
    let var = rk4(&param.var, dt, |&v| {
        let k = v * c_eps * r_inv;
        2.0 * pump.mu * v + pump.g * pump.g - k * r * k
    })
    .max(0.0);

    (next_state, ParamBelief { mean, var })
}

pub fn dual_kf_run(
    dy: &[f64],
    model: &SingleChannelModel,
    pump: &PumpProcess,
    init_state: &GaussianBelief,
    init_param: &ParamBelief,
    dt: f64,
) -> std::result::Result<EstimatePath, Diverged> {
    let mut path = EstimatePath::with_capacity(dy.len() + 1);
    let (mut state, mut param) = (*init_state, *init_param);
    path.push(&state, param.mean);
    for (k, &y) in dy.iter().enumerate() {
        (state, param) = dual_kf_step(&state, &param, model, pump, y, dt);
        if !state.is_finite() || !param.mean.is_finite() || !param.var.is_finite() {
            return Err(Diverged { step: k + 1 });
        }
        path.push(&state, param.mean);
    }
    Ok(path)
}

pub const JOINT_NOISE_DIM: usize = NOISE_DIM + 1;

/// Augmented model over `z = (q, p, ε − c)` with a seven-component noise
/// `v_z = (v_1..v_6, v_ε)` of covariance rate `blockdiag((ħ/2)I₆, 1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JointModel {
    pub gamma_total: f64,
    pub mu: f64,
    pub tendency: f64,
    /// `A_z` at the pump amplitude the model was built for.
    pub a_z: Matrix3<f64>,
    pub b_z: SMatrix<f64, 3, JOINT_NOISE_DIM>,
    pub c_z: SMatrix<f64, 1, 3>,
    pub m_z: SMatrix<f64, 1, JOINT_NOISE_DIM>,
    /// `R^z`: process noise of the augmented state.
    pub r_z: Matrix3<f64>,
    /// `R^{zy}`: augmented process/measurement correlation.
    pub r_zy: Vector3<f64>,
    /// `R^{y_z}`: measurement noise.
    pub r_y: f64,
}

impl JointModel {
    #[inline]
    pub fn drift(&self, epsilon: f64) -> Matrix3<f64> {
        Matrix3::new(
            epsilon - self.gamma_total,
            0.0,
            0.0,
            0.0,
            -epsilon - self.gamma_total,
            0.0,
            0.0,
            0.0,
            self.mu,
        )
    }

    /// Jacobian of `z ↦ A_z(z) z` at `z`.
    #[inline]
    pub fn jacobian(&self, z: &Vector3<f64>) -> Matrix3<f64> {
        let eps = z[2] + self.tendency;
        Matrix3::new(
            eps - self.gamma_total,
            0.0,
            z[0],
            0.0,
            -eps - self.gamma_total,
            -z[1],
            0.0,
            0.0,
            self.mu,
        )
    }
}

pub fn build_joint_model(
    params: &PhysicalParams,
    pump: &PumpProcess,
    epsilon_for_drift: f64,
    norm: BNormalization,
) -> Result<JointModel> {
    let base = SingleChannelModel::single(params, epsilon_for_drift, norm)?;
    let mut b_z = SMatrix::<f64, 3, JOINT_NOISE_DIM>::zeros();
    b_z.fixed_view_mut::<2, NOISE_DIM>(0, 0).copy_from(&base.b);
    b_z[(2, NOISE_DIM)] = pump.g;
    let c_z = SMatrix::<f64, 1, 3>::new(base.c[(0, 0)], base.c[(0, 1)], 0.0);
    let mut m_z = SMatrix::<f64, 1, JOINT_NOISE_DIM>::zeros();
    m_z.fixed_view_mut::<1, NOISE_DIM>(0, 0).copy_from(&base.m);

    let mut w = SMatrix::<f64, JOINT_NOISE_DIM, JOINT_NOISE_DIM>::identity() * (0.5 * params.hbar);
    w[(NOISE_DIM, NOISE_DIM)] = 1.0;
    let r_z = symmetrize(&(b_z * w * b_z.transpose()));
    let r_zy = b_z * w * m_z.transpose();
    let r_y = (m_z * w * m_z.transpose())[(0, 0)];
    if !(r_y > 0.0) {
        return Err(Error::Config(
            "joint measurement noise R^{y_z} is not positive".into(),
        ));
    }

    let mut model = JointModel {
        gamma_total: params.total_decay(),
        mu: pump.mu,
        tendency: pump.c,
        a_z: Matrix3::zeros(),
        b_z,
        c_z,
        m_z,
        r_z,
        r_zy,
        r_y,
    };
    model.a_z = model.drift(epsilon_for_drift);
    Ok(model)
}

/// One step of the joint EKF. The mean moves with `A_z` evaluated at the current
/// estimate, the covariance with the Jacobian of `A_z(z) z`.
#[inline]
pub fn joint_ekf_step(belief: &JointBelief, model: &JointModel, dy: f64, dt: f64) -> JointBelief {
    let z = &belief.mean;
    let v = &belief.cov;
    let a = model.drift(z[2] + model.tendency);
    let jac = model.jacobian(z);
    let gain = (v * model.c_z.transpose() + model.r_zy) / model.r_y;
    let innovation = dy - (model.c_z * z)[0] * dt;
    let mean = z + a * z * dt + gain * innovation;
    let cov = rk4(v, dt, |v| {
        let k = (v * model.c_z.transpose() + model.r_zy) / model.r_y;
        jac * v + v * jac.transpose() + model.r_z - k * k.transpose() * model.r_y
    });
    JointBelief {
        mean,
        cov: covariance_hygiene3(&cov),
    }
}

pub fn joint_ekf_run(
    dy: &[f64],
    model: &JointModel,
    init: &JointBelief,
    dt: f64,
) -> std::result::Result<EstimatePath, Diverged> {
    let mut path = EstimatePath::with_capacity(dy.len() + 1);
    let mut belief = *init;
    path.push(&belief.state(), belief.pump_estimate(model.tendency));
    for (k, &y) in dy.iter().enumerate() {
        belief = joint_ekf_step(&belief, model, y, dt);
        if !belief.is_finite() {
            return Err(Diverged { step: k + 1 });
        }
        path.push(&belief.state(), belief.pump_estimate(model.tendency));
    }
    Ok(path)
}

/// Residual of the filter Riccati equation
/// `AV + VAᵀ + D − (VCᵀ + Γᵀ)R⁻¹(CV + Γ)` at the model's nominal pump.
pub fn riccati_residual<const K: usize>(
    model: &StateSpaceModel<K>,
    v: &Matrix2<f64>,
) -> Matrix2<f64> {
    let gain = kalman_gain(v, model);
    model.a * v + v * model.a.transpose() + model.d - gain * model.r * gain.transpose()
}

const RICCATI_TOL: f64 = 1e-10;
const RICCATI_MAX_ITER: usize = 100_000;

fn is_hurwitz2(m: &Matrix2<f64>) -> bool {
    m.trace() < 0.0 && m.determinant() > 0.0
}

/// Stationary conditional covariance of the Kalman–Bucy filter.
///
/// With `Ã = A − ΓᵀR⁻¹C`, `D̃ = D − ΓᵀR⁻¹Γ`, `S = CᵀR⁻¹C` the equation becomes
/// `ÃV + VÃᵀ + D̃ − VSV = 0`. Each Newton–Kleinman sweep solves the Lyapunov
/// equation of the closed loop `Ã − V_k S`; the update is damped by half whenever
/// the closed loop would lose stability. Starts from the unconditioned stationary
/// covariance, so the drift must be Hurwitz.
pub fn steady_state_riccati<const K: usize>(model: &StateSpaceModel<K>) -> Result<Matrix2<f64>> {
    if !is_hurwitz2(&model.a) {
        return Err(Error::Config(format!(
            "steady state requires a stable drift (epsilon {} >= gamma {})",
            model.epsilon, model.gamma_total
        )));
    }
    let gt_rinv = model.gamma_corr.transpose() * model.r_inv;
    let a_t = model.a - gt_rinv * model.c;
    let d_t = symmetrize(&(model.d - gt_rinv * model.gamma_corr));
    let s = symmetrize(&(model.c.transpose() * model.r_inv * model.c));

    let mut v = solve_lyapunov2(&model.a, &model.d).ok_or_else(|| Error::Numerical {
        message: "singular Lyapunov operator".into(),
        residual: f64::NAN,
    })?;
    let mut residual = riccati_residual(model, &v).amax();
    // keep polishing past the tolerance until Newton stops improving
    for _ in 0..RICCATI_MAX_ITER {
        if residual < RICCATI_TOL * 1e-6 {
            return Ok(v);
        }
        let closed = a_t - v * s;
        let q = d_t + v * s * v;
        let candidate = solve_lyapunov2(&closed, &q);
        let mut step = 1.0;
        let mut accepted = false;
        if let Some(target) = candidate {
            while step > 1e-6 {
                let trial = symmetrize(&(v + (target - v) * step));
                let r = riccati_residual(model, &trial).amax();
                if is_hurwitz2(&(a_t - trial * s)) && r < residual {
                    v = trial;
                    residual = r;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
        }
        if !accepted {
            break;
        }
    }
    if residual < RICCATI_TOL {
        return Ok(v);
    }
    Err(Error::Numerical {
        message: "algebraic Riccati iteration did not converge".into(),
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{check_uncertainty, CompleteModel};

    fn case_model(eps: f64) -> SingleChannelModel {
        SingleChannelModel::single(&PhysicalParams::default(), eps, BNormalization::Consistent)
            .unwrap()
    }

    fn case_pump() -> PumpProcess {
        PumpProcess::default()
    }

    #[test]
    fn riccati_without_measurement_is_lyapunov() {
        let p = PhysicalParams {
            gamma1: 0.5,
            gamma2: 0.5,
            transmittance: 0.0,
            ..Default::default()
        };
        let mut model = SingleChannelModel::single(&p, 0.0, BNormalization::Consistent).unwrap();
        // remove the cross-correlation as well so the measurement carries nothing
        model.gamma_corr = SMatrix::zeros();
        let v = steady_state_riccati(&model).unwrap();
        assert!((v - Matrix2::identity() * 0.5).amax() < 1e-10);
    }

    #[test]
    fn riccati_case_study_is_physical() {
        let v = steady_state_riccati(&case_model(0.5)).unwrap();
        assert!(riccati_residual(&case_model(0.5), &v).amax() < 1e-10);
        assert!(check_uncertainty(&v, 1.0).unwrap().margin >= -1e-9);
    }

    #[test]
    fn riccati_rejects_above_threshold() {
        assert!(matches!(
            steady_state_riccati(&case_model(1.2)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn complete_record_saturates_heisenberg_when_lossless() {
        let p = PhysicalParams::default();
        let m = CompleteModel::complete(&p, 0.5, p.theta_m, p.theta_m, BNormalization::Consistent)
            .unwrap();
        let v = steady_state_riccati(&m).unwrap();
        assert!(
            check_uncertainty(&v, 1.0).unwrap().margin.abs() < 1e-6,
            "{v}"
        );
    }

    #[test]
    fn no_measurement_filter_follows_unconditioned_moments() {
        let p = PhysicalParams {
            transmittance: 0.0,
            ..Default::default()
        };
        let model = SingleChannelModel::single(&p, 0.5, BNormalization::Consistent).unwrap();
        let mut b = GaussianBelief::coherent(Vector2::new(1.0, 1.0), 1.0);
        // With T = 0, C = 0 and Γ = 0: the filter ignores y entirely.
        assert_eq!(model.c, SMatrix::<f64, 1, 2>::zeros());
        assert!(model.gamma_corr.amax() < 1e-15);
        let dt = 1e-3;
        for _ in 0..20_000 {
            b = kalman_bucy_step(&b, &model, 0.5, &SVector::<f64, 1>::new(0.37), dt);
        }
        let lyap = solve_lyapunov2(&model.a, &model.d).unwrap();
        assert!((b.cov - lyap).amax() < 1e-3, "{} vs {}", b.cov, lyap);
        assert!((b.mean[0] - (-0.5f64 * 20.0).exp()).abs() < 1e-4);
    }

    #[test]
    fn zero_innovation_mean_is_linear() {
        let model = case_model(0.5);
        let dt = 1e-3;
        let b0 = GaussianBelief::coherent(Vector2::new(0.7, -0.4), 1.0);
        let gain = kalman_gain(&b0.cov, &model);
        // choose dy so that the innovation vanishes
        let dy = (model.c * b0.mean)[0] * dt;
        let b1 = kalman_bucy_step(&b0, &model, 0.5, &SVector::<f64, 1>::new(dy), dt);
        let expect = b0.mean + model.a * b0.mean * dt;
        assert!((b1.mean - expect).amax() < 1e-15);
        // and with a zero record the closed loop (A − K C) drives the mean
        let b2 = kalman_bucy_step(&b0, &model, 0.5, &SVector::<f64, 1>::new(0.0), dt);
        let expect = b0.mean + (model.a - gain * model.c) * b0.mean * dt;
        assert!((b2.mean - expect).amax() < 1e-15);
    }

    #[test]
    fn dual_kf_zero_state_is_pure_mean_reversion() {
        let model = case_model(0.5);
        let pump = case_pump();
        let state = GaussianBelief::coherent(Vector2::zeros(), 1.0);
        let param = ParamBelief {
            mean: 0.8,
            var: 0.2,
        };
        let (_, next) = dual_kf_step(&state, &param, &model, &pump, 0.123, 1e-3);
        let expect = 0.8 + pump.mu * (0.8 - pump.c) * 1e-3;
        assert!((next.mean - expect).abs() < 1e-15);
        // linear variance equation: exact solution up to the RK4 truncation
        let decay = (2.0 * pump.mu * 1e-3).exp();
        let expect_var = 0.2 * decay + pump.g * pump.g * (decay - 1.0) / (2.0 * pump.mu);
        assert!((next.var - expect_var).abs() < 1e-15);
    }

    #[test]
    fn parameter_variance_fixed_point() {
        let model = case_model(0.5);
        let pump = case_pump();
        let state = GaussianBelief::coherent(Vector2::zeros(), 1.0);
        let mut param = ParamBelief {
            mean: pump.c,
            var: 0.0,
        };
        let dt = 0.05;
        for _ in 0..40_000 {
            (_, param) = dual_kf_step(&state, &param, &model, &pump, 0.0, dt);
        }
        let fixed = pump.g * pump.g / (2.0 * pump.mu.abs());
        assert!((param.var - fixed).abs() < 1e-6, "{} vs {fixed}", param.var);
    }

    #[test]
    fn joint_model_correlations() {
        let p = PhysicalParams::default();
        let pump = case_pump();
        let jm = build_joint_model(&p, &pump, pump.c, BNormalization::Consistent).unwrap();
        assert!((jm.r_y - 1.0).abs() < 1e-12);
        assert!((jm.r_z[(2, 2)] - pump.g * pump.g).abs() < 1e-15);
        assert_eq!(jm.r_zy[2], 0.0);
        assert_eq!(jm.m_z[(0, NOISE_DIM)], 0.0);
        let base = case_model(0.5);
        assert!((jm.r_z.fixed_view::<2, 2>(0, 0) - base.d).amax() < 1e-14);
        assert!((jm.r_zy.fixed_rows::<2>(0) - base.gamma_corr.transpose()).amax() < 1e-14);
        assert_eq!(jm.a_z[(0, 0)], 0.5 - 1.0);
        assert_eq!(jm.a_z[(2, 2)], pump.mu);
    }

    #[test]
    fn joint_ekf_zero_state_decouples() {
        let p = PhysicalParams::default();
        let pump = case_pump();
        let jm = build_joint_model(&p, &pump, pump.c, BNormalization::Consistent).unwrap();
        let z = Vector3::new(0.0, 0.0, 0.1);
        let jac = jm.jacobian(&z);
        assert_eq!(jac.column(2).into_owned(), Vector3::new(0.0, 0.0, pump.mu));

        let state = GaussianBelief::coherent(Vector2::zeros(), 1.0);
        let belief = JointBelief::from_parts(
            &state,
            &ParamBelief {
                mean: pump.c + 0.1,
                var: 0.01,
            },
            pump.c,
        );
        let next = joint_ekf_step(&belief, &jm, 0.05, 1e-3);
        let decay = (2.0 * pump.mu * 1e-3).exp();
        let expect = 0.01 * decay + pump.g * pump.g * (decay - 1.0) / (2.0 * pump.mu);
        assert!((next.cov[(2, 2)] - expect).abs() < 1e-15);
        assert_eq!(next.cov[(0, 2)], 0.0);
        assert_eq!(next.cov[(1, 2)], 0.0);
    }

    #[test]
    fn joint_belief_round_trip() {
        let state = GaussianBelief::coherent(Vector2::new(0.2, 0.3), 1.0);
        let jb = JointBelief::from_parts(
            &state,
            &ParamBelief {
                mean: 0.7,
                var: 0.04,
            },
            0.5,
        );
        assert!((jb.pump_estimate(0.5) - 0.7).abs() < 1e-15);
        assert_eq!(jb.state(), state);
    }

    #[test]
    fn belief_constructor_validates() {
        assert!(GaussianBelief::new(Vector2::zeros(), Matrix2::new(1.0, 0.5, 0.0, 1.0)).is_err());
        assert!(GaussianBelief::new(Vector2::zeros(), Matrix2::new(-1.0, 0.0, 0.0, 1.0)).is_err());
        assert!(GaussianBelief::new(Vector2::zeros(), Matrix2::identity()).is_ok());
    }

    #[test]
    fn hygiene_clips_negative_direction() {
        let bad = Matrix2::new(1.0, 0.0, 0.0, -1e-6);
        let fixed = covariance_hygiene2(&bad);
        assert!(sym2_eigenvalues(&fixed).0 >= 0.0);
        let bad3 = Matrix3::from_diagonal(&Vector3::new(1.0, -1e-6, 2.0));
        let fixed3 = covariance_hygiene3(&bad3);
        assert!(fixed3.symmetric_eigenvalues().min() >= -1e-15);
    }
}
