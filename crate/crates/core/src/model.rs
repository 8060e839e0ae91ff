//! Linear state-space model of the degenerate OPO cavity with homodyne detection.
//!
//! The latent state is the quadrature pair `x = (q, p)` driven by a six-component
//! vacuum noise vector `v = (v1..v6)`: channel 1 (measured port), channel 2 (loss
//! port) and the beamsplitter's vacuum input. Every noise component has covariance
//! rate `ħ/2`, so the correlation matrices are
//!
//! ```text
//! D  = (ħ/2) B Bᵀ      (process noise)
//! Γᵀ = (ħ/2) B Mᵀ      (process/measurement cross term)
//! R  = (ħ/2) M Mᵀ      (measurement noise)
//! ```
//!
//! Two measurement configurations are built: the single homodyne channel `m`, and
//! the complete three-channel record `(m, lb, lc)` used for the reference filter.

use nalgebra::{Matrix2, SMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    hermitian2_min_eigenvalue, max_asymmetry, psd_tolerance, sym2_eigenvalues, symmetrize,
};

/// Number of vacuum noise components feeding the cavity and beamsplitter.
pub const NOISE_DIM: usize = 6;

pub type InputMatrix = SMatrix<f64, 2, NOISE_DIM>;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhysicalParams {
    /// Decay rate of the measured channel (rad/s).
    pub gamma1: f64,
    /// Decay rate of the loss channel (rad/s).
    pub gamma2: f64,
    /// Beamsplitter transmittance, i.e. the measurement efficiency.
    pub transmittance: f64,
    /// Homodyne phase (rad).
    pub theta_m: f64,
    pub hbar: f64,
}

impl Default for PhysicalParams {
    /// Case-study values: γ1 = 0.95, γ2 = 0.05, T = 1, θ_m = π/12, ħ = 1.
    fn default() -> Self {
        Self {
            gamma1: 0.95,
            gamma2: 0.05,
            transmittance: 1.0,
            theta_m: std::f64::consts::PI / 12.0,
            hbar: 1.0,
        }
    }
}

impl PhysicalParams {
    pub fn total_decay(&self) -> f64 {
        self.gamma1 + self.gamma2
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma1 > 0.0) {
            return Err(Error::Config(format!(
                "gamma1 must be > 0, got {}",
                self.gamma1
            )));
        }
        if !(self.gamma2 >= 0.0) {
            return Err(Error::Config(format!(
                "gamma2 must be >= 0, got {}",
                self.gamma2
            )));
        }
        if !(0.0..=1.0).contains(&self.transmittance) {
            return Err(Error::Config(format!(
                "transmittance must lie in [0, 1], got {}",
                self.transmittance
            )));
        }
        if !(self.hbar > 0.0) {
            return Err(Error::Config(format!(
                "hbar must be > 0, got {}",
                self.hbar
            )));
        }
        if !self.theta_m.is_finite() {
            return Err(Error::Config("theta_m must be finite".into()));
        }
        Ok(())
    }
}

/// Normalisation of the cavity input matrix `B`.
///
/// `Consistent` couples each channel with `√(2γ)`, which reproduces the vacuum
/// steady state `(ħ/2)I` and satisfies both physical-consistency relations.
/// `Paper` keeps the alternative `√(ħγ)` entries for side-by-side comparison; it
/// breaks the fluctuation-observation relation at the case-study parameters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BNormalization {
    #[default]
    Consistent,
    Paper,
}

/// The symplectic form for one mode, `[[0, 1], [-1, 0]]`.
pub fn symplectic() -> Matrix2<f64> {
    Matrix2::new(0.0, 1.0, -1.0, 0.0)
}

/// `A(ε) = diag(ε − γ, −ε − γ)`.
pub fn build_drift(epsilon: f64, params: &PhysicalParams) -> Matrix2<f64> {
    let gamma = params.total_decay();
    Matrix2::new(epsilon - gamma, 0.0, 0.0, -epsilon - gamma)
}

/// `∂A/∂ε`, constant for this model.
pub fn drift_sensitivity() -> Matrix2<f64> {
    Matrix2::new(1.0, 0.0, 0.0, -1.0)
}

pub fn build_input_matrix(params: &PhysicalParams, norm: BNormalization) -> InputMatrix {
    let (k1, k2) = match norm {
        BNormalization::Consistent => ((2.0 * params.gamma1).sqrt(), (2.0 * params.gamma2).sqrt()),
        BNormalization::Paper => (
            (params.hbar * params.gamma1).sqrt(),
            (params.hbar * params.gamma2).sqrt(),
        ),
    };
    let mut b = InputMatrix::zeros();
    b[(0, 0)] = k1;
    b[(1, 1)] = k1;
    b[(0, 2)] = k2;
    b[(1, 3)] = k2;
    b
}

/// Single homodyne channel on the transmitted beam: `(C, M)`.
pub fn build_measurement_single(
    params: &PhysicalParams,
) -> (SMatrix<f64, 1, 2>, SMatrix<f64, 1, NOISE_DIM>) {
    let (c_row, m_row) = homodyne_row_m(params, params.theta_m);
    (c_row, m_row)
}

/// Complete record: homodyne on the transmitted (`m`), reflected (`lb`) and
/// loss-port (`lc`) beams, rows in that order.
pub fn build_measurement_complete(
    params: &PhysicalParams,
    theta_lb: f64,
    theta_lc: f64,
) -> (SMatrix<f64, 3, 2>, SMatrix<f64, 3, NOISE_DIM>) {
    let hbar = params.hbar;
    let t = params.transmittance;
    let mut c = SMatrix::<f64, 3, 2>::zeros();
    let mut m = SMatrix::<f64, 3, NOISE_DIM>::zeros();

    let (c_m, m_m) = homodyne_row_m(params, params.theta_m);
    c.set_row(0, &c_m);
    m.set_row(0, &m_m);

    let (cos_b, sin_b) = (theta_lb.cos(), theta_lb.sin());
    let sig_b = 2.0 * (params.gamma1 * (1.0 - t) / hbar).sqrt();
    c[(1, 0)] = sig_b * cos_b;
    c[(1, 1)] = sig_b * sin_b;
    let nscale = -(2.0 / hbar).sqrt();
    m[(1, 0)] = nscale * (1.0 - t).sqrt() * cos_b;
    m[(1, 1)] = nscale * (1.0 - t).sqrt() * sin_b;
    m[(1, 4)] = -nscale * t.sqrt() * cos_b;
    m[(1, 5)] = -nscale * t.sqrt() * sin_b;

    let (cos_c, sin_c) = (theta_lc.cos(), theta_lc.sin());
    let sig_c = 2.0 * (params.gamma2 / hbar).sqrt();
    c[(2, 0)] = sig_c * cos_c;
    c[(2, 1)] = sig_c * sin_c;
    m[(2, 2)] = nscale * cos_c;
    m[(2, 3)] = nscale * sin_c;

    (c, m)
}

fn homodyne_row_m(
    params: &PhysicalParams,
    theta: f64,
) -> (SMatrix<f64, 1, 2>, SMatrix<f64, 1, NOISE_DIM>) {
    let hbar = params.hbar;
    let t = params.transmittance;
    let (cos, sin) = (theta.cos(), theta.sin());
    let sig = 2.0 * (t * params.gamma1 / hbar).sqrt();
    let c = SMatrix::<f64, 1, 2>::new(sig * cos, sig * sin);
    let nscale = -(2.0 / hbar).sqrt();
    let (st, sr) = (t.sqrt(), (1.0 - t).sqrt());
    let m = SMatrix::<f64, 1, NOISE_DIM>::from_row_slice(&[
        nscale * st * cos,
        nscale * st * sin,
        0.0,
        0.0,
        nscale * sr * cos,
        nscale * sr * sin,
    ]);
    (c, m)
}

/// `D`, `Γ` and `R` for a `K`-channel measurement.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseCorrelations<const K: usize> {
    pub d: Matrix2<f64>,
    /// `Γ`, shape `K×2` (so `Γᵀ = (ħ/2) B Mᵀ`).
    pub gamma_corr: SMatrix<f64, K, 2>,
    pub r: SMatrix<f64, K, K>,
}

/// Correlation rates for unit-rate vacuum noise of covariance `(ħ/2)I`.
///
/// Matrix shapes are fixed by the types, so a column-count mismatch between
/// `b` and `m` cannot be expressed.
pub fn derive_noise_correlations<const K: usize>(
    b: &InputMatrix,
    m: &SMatrix<f64, K, NOISE_DIM>,
    hbar: f64,
) -> NoiseCorrelations<K> {
    let half = 0.5 * hbar;
    NoiseCorrelations {
        d: symmetrize(&(b * b.transpose() * half)),
        gamma_corr: (b * m.transpose() * half).transpose(),
        r: symmetrize(&(m * m.transpose() * half)),
    }
}

/// A fully assembled `K`-channel model at a nominal pump amplitude.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StateSpaceModel<const K: usize> {
    pub epsilon: f64,
    pub gamma_total: f64,
    pub a: Matrix2<f64>,
    pub b: InputMatrix,
    pub c: SMatrix<f64, K, 2>,
    pub m: SMatrix<f64, K, NOISE_DIM>,
    pub d: Matrix2<f64>,
    pub gamma_corr: SMatrix<f64, K, 2>,
    pub r: SMatrix<f64, K, K>,
    pub r_inv: SMatrix<f64, K, K>,
    /// Set when `ε ≥ γ`: the drift is not Hurwitz and the cavity is above threshold.
    pub above_threshold: bool,
}

pub type SingleChannelModel = StateSpaceModel<1>;
pub type CompleteModel = StateSpaceModel<3>;

impl<const K: usize> StateSpaceModel<K> {
    fn assemble(
        params: &PhysicalParams,
        epsilon: f64,
        norm: BNormalization,
        c: SMatrix<f64, K, 2>,
        m: SMatrix<f64, K, NOISE_DIM>,
    ) -> Result<Self> {
        params.validate()?;
        let b = build_input_matrix(params, norm);
        let corr = derive_noise_correlations(&b, &m, params.hbar);
        let r_inv = corr
            .r
            .try_inverse()
            .ok_or_else(|| Error::Config("measurement noise covariance R is singular".into()))?;
        let gamma_total = params.total_decay();
        let above_threshold = epsilon >= gamma_total;
        if above_threshold {
            log::warn!(
                "pump amplitude {epsilon} >= total decay {gamma_total}: drift is not Hurwitz"
            );
        }
        Ok(Self {
            epsilon,
            gamma_total,
            a: build_drift(epsilon, params),
            b,
            c,
            m,
            d: corr.d,
            gamma_corr: corr.gamma_corr,
            r: corr.r,
            r_inv,
            above_threshold,
        })
    }

    /// `A(ε)` for this model's decay rate.
    #[inline]
    pub fn drift(&self, epsilon: f64) -> Matrix2<f64> {
        Matrix2::new(
            epsilon - self.gamma_total,
            0.0,
            0.0,
            -epsilon - self.gamma_total,
        )
    }

    /// Same model with the drift re-evaluated at another pump amplitude.
    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        Self {
            epsilon,
            a: self.drift(epsilon),
            above_threshold: epsilon >= self.gamma_total,
            ..*self
        }
    }

    pub fn noise_correlations(&self) -> NoiseCorrelations<K> {
        NoiseCorrelations {
            d: self.d,
            gamma_corr: self.gamma_corr,
            r: self.r,
        }
    }
}

impl SingleChannelModel {
    pub fn single(params: &PhysicalParams, epsilon: f64, norm: BNormalization) -> Result<Self> {
        let (c, m) = build_measurement_single(params);
        Self::assemble(params, epsilon, norm, c, m)
    }
}

impl CompleteModel {
    pub fn complete(
        params: &PhysicalParams,
        epsilon: f64,
        theta_lb: f64,
        theta_lc: f64,
        norm: BNormalization,
    ) -> Result<Self> {
        let (c, m) = build_measurement_complete(params, theta_lb, theta_lc);
        Self::assemble(params, epsilon, norm, c, m)
    }
}

/// Outcome of a matrix-inequality check: the signed margin and the verdict.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CheckOutcome {
    pub margin: f64,
    pub pass: bool,
}

/// Heisenberg bound `det V ≥ ħ²/4`. The margin is `det V − ħ²/4`.
pub fn check_uncertainty(v: &Matrix2<f64>, hbar: f64) -> Result<CheckOutcome> {
    let scale = 1.0 + v.amax();
    if max_asymmetry(v) > 1e-9 * scale {
        return Err(Error::Contract(format!(
            "covariance is not symmetric (off-diagonal {} vs {})",
            v[(0, 1)],
            v[(1, 0)]
        )));
    }
    let margin = v.determinant() - 0.25 * hbar * hbar;
    Ok(CheckOutcome {
        margin,
        pass: margin >= -psd_tolerance(v.trace()),
    })
}

/// Fluctuation-dissipation relation `D − iħ(AΣ − ΣᵀAᵀ)/2 ≥ 0`.
/// The margin is the smallest eigenvalue of that Hermitian matrix.
pub fn check_fluctuation_dissipation(
    a: &Matrix2<f64>,
    d: &Matrix2<f64>,
    hbar: f64,
) -> CheckOutcome {
    let sigma = symplectic();
    let anti = a * sigma - sigma.transpose() * a.transpose();
    // anti = [[0, k], [-k, 0]]; the Hermitian matrix is D + i·(−ħ/2)·anti
    let k = -0.5 * hbar * 0.5 * (anti[(0, 1)] - anti[(1, 0)]);
    let margin = hermitian2_min_eigenvalue(&symmetrize(d), k);
    CheckOutcome {
        margin,
        pass: margin >= -psd_tolerance(d.trace()),
    }
}

/// Fluctuation-observation relation `D − ΓᵀΓ − (ħ²/4) Σ Cᵀ C Σᵀ ≥ 0`.
pub fn check_fluctuation_observation<const K: usize>(
    d: &Matrix2<f64>,
    gamma_corr: &SMatrix<f64, K, 2>,
    c: &SMatrix<f64, K, 2>,
    hbar: f64,
) -> CheckOutcome {
    let sigma = symplectic();
    let lhs = d
        - gamma_corr.transpose() * gamma_corr
        - sigma * c.transpose() * c * sigma.transpose() * (0.25 * hbar * hbar);
    let (margin, _) = sym2_eigenvalues(&symmetrize(&lhs));
    CheckOutcome {
        margin,
        pass: margin >= -psd_tolerance(d.trace()),
    }
}
