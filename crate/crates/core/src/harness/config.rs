use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::{GaussianBelief, ParamBelief};
use crate::model::{BNormalization, PhysicalParams};
use crate::sde::{PumpProcess, SimGrid};

/// Parameters a sweep can vary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParam {
    /// Beamsplitter transmittance (measurement efficiency).
    #[serde(rename = "T")]
    Transmittance,
    /// Pump diffusion coefficient.
    #[serde(rename = "g")]
    Diffusion,
    /// Pump tendency constant.
    #[serde(rename = "c")]
    Tendency,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Transmittance => "T",
            SweepParam::Diffusion => "g",
            SweepParam::Tendency => "c",
        }
    }

    /// Default grid: T ∈ {0, 0.1, …, 1}, g ∈ {0.005, …, 0.035}, c ∈ {0.3, …, 0.7}.
    pub fn default_grid(self) -> Vec<f64> {
        let (start, step, count) = match self {
            SweepParam::Transmittance => (0.0, 0.1, 11),
            SweepParam::Diffusion => (0.005, 0.005, 7),
            SweepParam::Tendency => (0.3, 0.1, 5),
        };
        // integer steps avoid accumulating rounding error in the labels
        (0..count)
            .map(|i| ((start + step * i as f64) * 1e6).round() / 1e6)
            .collect()
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "T" | "t" | "transmittance" => Ok(SweepParam::Transmittance),
            "g" | "diffusion" => Ok(SweepParam::Diffusion),
            "c" | "tendency" => Ok(SweepParam::Tendency),
            other => Err(Error::Config(format!(
                "unknown sweep parameter '{other}' (expected T, g or c)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub param: SweepParam,
    #[serde(default)]
    pub values: Vec<f64>,
    /// Diffusion used for every point of a tendency sweep (0.025 by default).
    #[serde(default)]
    pub fixed_g: Option<f64>,
}

impl SweepSpec {
    pub fn with_default_grid(param: SweepParam) -> Self {
        Self {
            param,
            values: param.default_grid(),
            fixed_g: (param == SweepParam::Tendency).then_some(0.025),
        }
    }
}

/// Everything a Monte Carlo run needs. Every field has a default, so `{}` is a
/// valid configuration file describing the case study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub physical: PhysicalParams,
    pub pump: PumpProcess,
    pub dt: f64,
    pub t_final: f64,
    pub n_trials: usize,
    pub master_seed: u64,
    /// Initial window (seconds) left out of the RPI integrals.
    pub burn_in: f64,
    #[serde(alias = "b-normalization")]
    pub b_normalization: BNormalization,
    /// Initial quadrature mean, shared by the latent state prior and every filter.
    pub x0: [f64; 2],
    /// Initial quadrature covariance (row-major); `None` is the vacuum `(ħ/2)I`.
    pub initial_cov: Option<[[f64; 2]; 2]>,
    /// Initial variance of the pump estimate in both adaptive filters.
    pub pump_var0: f64,
    /// Homodyne phases of the two auxiliary channels; `None` uses `theta_m`.
    pub theta_lb: Option<f64>,
    pub theta_lc: Option<f64>,
    pub sweep: Option<SweepSpec>,
    pub output_dir: PathBuf,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
    /// Trial whose paths are drawn in the case-study figure.
    pub figure_trial: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            physical: PhysicalParams::default(),
            pump: PumpProcess::default(),
            dt: 1e-3,
            t_final: 100.0,
            n_trials: 1000,
            master_seed: 2021,
            burn_in: 0.0,
            b_normalization: BNormalization::Consistent,
            x0: [0.0, 0.0],
            initial_cov: None,
            pump_var0: 0.0,
            theta_lb: None,
            theta_lc: None,
            sweep: None,
            output_dir: PathBuf::from("out"),
            workers: 0,
            figure_trial: 0,
        }
    }
}

/// Trial count used by `--fast`.
pub const FAST_TRIALS: usize = 200;

impl ExperimentConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.physical.validate()?;
        self.pump.validate()?;
        self.grid()?;
        if self.n_trials < 1 {
            return Err(Error::Config("n_trials must be at least 1".into()));
        }
        if !(self.burn_in >= 0.0) || self.burn_in >= self.t_final {
            return Err(Error::Config(format!(
                "burn_in must lie in [0, t_final), got {}",
                self.burn_in
            )));
        }
        if !(self.pump_var0 >= 0.0) {
            return Err(Error::Config("pump_var0 must be >= 0".into()));
        }
        GaussianBelief::new(Vector2::from(self.x0), self.initial_covariance())?;
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return Err(Error::Config("sweep grid is empty".into()));
            }
            for &v in &sweep.values {
                self.at_sweep_point(sweep, v).map_err(|e| {
                    Error::Config(format!("sweep value {}={v} is invalid: {e}", sweep.param))
                })?;
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<SimGrid> {
        SimGrid::from_horizon(self.dt, self.t_final)
    }

    pub fn theta_lb(&self) -> f64 {
        self.theta_lb.unwrap_or(self.physical.theta_m)
    }

    pub fn theta_lc(&self) -> f64 {
        self.theta_lc.unwrap_or(self.physical.theta_m)
    }

    pub fn initial_covariance(&self) -> Matrix2<f64> {
        match self.initial_cov {
            Some([[a, b], [c, d]]) => Matrix2::new(a, b, c, d),
            None => Matrix2::identity() * (0.5 * self.physical.hbar),
        }
    }

    /// Prior over the quadratures, shared by the simulator and every filter.
    pub fn state_prior(&self) -> GaussianBelief {
        GaussianBelief {
            mean: Vector2::from(self.x0),
            cov: self.initial_covariance(),
        }
    }

    pub fn pump_prior(&self) -> ParamBelief {
        ParamBelief {
            mean: self.pump.initial(),
            var: self.pump_var0,
        }
    }

    /// Applies `--fast` (N = 200) and `--seed` overrides.
    pub fn with_overrides(mut self, seed: Option<u64>, fast: bool) -> Self {
        if let Some(s) = seed {
            self.master_seed = s;
        }
        if fast {
            self.n_trials = FAST_TRIALS;
        }
        self
    }

    /// The configuration of one sweep grid point.
    pub fn at_sweep_point(&self, sweep: &SweepSpec, value: f64) -> Result<Self> {
        let mut cfg = self.clone();
        cfg.sweep = None;
        match sweep.param {
            SweepParam::Transmittance => cfg.physical.transmittance = value,
            SweepParam::Diffusion => cfg.pump.g = value,
            SweepParam::Tendency => {
                cfg.pump.c = value;
                if let Some(g) = sweep.fixed_g {
                    cfg.pump.g = g;
                }
            }
        }
        cfg.physical.validate()?;
        cfg.pump.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_the_case_study() {
        let cfg = ExperimentConfig::from_json_str("{}").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.physical.gamma1, 0.95);
        assert_eq!(cfg.pump.g, 0.028);
        assert_eq!(cfg.grid().unwrap().n_steps, 100_000);
    }

    #[test]
    fn partial_documents_merge_with_defaults() {
        let cfg = ExperimentConfig::from_json_str(
            r#"{"physical": {"transmittance": 0.5}, "pump": {"g": 0.0}, "b-normalization": "paper",
                "sweep": {"param": "g", "values": [0.01, 0.02]}}"#,
        )
        .unwrap();
        assert_eq!(cfg.physical.transmittance, 0.5);
        assert_eq!(cfg.physical.gamma1, 0.95);
        assert_eq!(cfg.pump.g, 0.0);
        assert_eq!(cfg.b_normalization, BNormalization::Paper);
        assert_eq!(cfg.sweep.unwrap().param, SweepParam::Diffusion);
    }

    #[test]
    fn invalid_documents_are_rejected() {
        for doc in [
            r#"{"n_trials": 0}"#,
            r#"{"pump": {"mu": 0.01}}"#,
            r#"{"physical": {"transmittance": 2.0}}"#,
            r#"{"sweep": {"param": "T", "values": []}}"#,
            r#"{"sweep": {"param": "T", "values": [1.5]}}"#,
            r#"{"dt": -1}"#,
            r#"{"initial_cov": [[1.0, 0.0], [0.0, -1.0]]}"#,
        ] {
            let err = ExperimentConfig::from_json_str(doc).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{doc}: {err}");
        }
        assert!(matches!(
            ExperimentConfig::from_json_str("{not json"),
            Err(Error::Json(_))
        ));
    }

    #[test]
    fn default_grids() {
        assert_eq!(SweepParam::Transmittance.default_grid().len(), 11);
        assert_eq!(
            SweepParam::Diffusion.default_grid(),
            vec![0.005, 0.01, 0.015, 0.02, 0.025, 0.03, 0.035]
        );
        assert_eq!(
            SweepParam::Tendency.default_grid(),
            vec![0.3, 0.4, 0.5, 0.6, 0.7]
        );
        let spec = SweepSpec::with_default_grid(SweepParam::Tendency);
        let cfg = ExperimentConfig::default()
            .at_sweep_point(&spec, 0.7)
            .unwrap();
        assert_eq!((cfg.pump.c, cfg.pump.g), (0.7, 0.025));
        assert_eq!(cfg.pump.initial(), 0.7);
    }

    #[test]
    fn overrides() {
        let cfg = ExperimentConfig::default().with_overrides(Some(9), true);
        assert_eq!((cfg.master_seed, cfg.n_trials), (9, FAST_TRIALS));
    }
}
