//! Relative performance improvement (RPI) and its cross-trial statistics.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `1 − ∫(est − truth)² / ∫(baseline − truth)²` with left-endpoint Riemann sums.
///
/// When both integrals vanish the estimate equals the baseline and the result is
/// 0; a zero baseline integral against a nonzero estimate error is undefined.
///
/// Paths hold node values; the sums run over the first `len − 1` nodes. `dt`
/// cancels in the ratio but is kept so the integrals are well defined on their own.
pub fn rpi(estimate: &[f64], truth: &[f64], baseline: &[f64], dt: f64) -> Result<f64> {
    rpi_with_burn_in(estimate, truth, baseline, dt, 0.0)
}

/// As [`rpi`], skipping the nodes with `t < burn_in`.
pub fn rpi_with_burn_in(
    estimate: &[f64],
    truth: &[f64],
    baseline: &[f64],
    dt: f64,
    burn_in: f64,
) -> Result<f64> {
    let n = truth.len();
    if estimate.len() != n || baseline.len() != n {
        return Err(Error::Config(format!(
            "path lengths differ: estimate {}, truth {}, baseline {}",
            estimate.len(),
            n,
            baseline.len()
        )));
    }
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    let start = if burn_in > 0.0 {
        (burn_in / dt).ceil() as usize
    } else {
        0
    };
    if start >= n - 1 {
        return Err(Error::Config(format!(
            "burn-in {burn_in} covers the whole path"
        )));
    }
    let mut est_err = 0.0;
    let mut base_err = 0.0;
    for k in start..n - 1 {
        est_err += (estimate[k] - truth[k]).powi(2);
        base_err += (baseline[k] - truth[k]).powi(2);
    }
    est_err *= dt;
    base_err *= dt;
    if base_err == 0.0 && est_err == 0.0 {
        // both estimators are exact: no improvement either way
        return Ok(0.0);
    }
    if !(base_err > 0.0) {
        return Err(Error::UndefinedMetric(
            "baseline error integral is zero".into(),
        ));
    }
    Ok(1.0 - est_err / base_err)
}

/// Sample mean and standard error of the mean `√(Σ(x − m)² / (N(N − 1)))`.
pub fn mean_sem(values: &[f64]) -> Result<(f64, f64)> {
    let n = values.len();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    let nf = n as f64;
    let mean = values.iter().sum::<f64>() / nf;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    Ok((mean, (ss / (nf * (nf - 1.0))).sqrt()))
}

/// Ranks starting at 1; ties share their average rank.
fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation (Pearson correlation of the average ranks).
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Config(format!(
            "lengths differ: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: x.len(),
        });
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let m = (x.len() as f64 + 1.0) / 2.0;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - m) * (b - m);
        sxx += (a - m).powi(2);
        syy += (b - m).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedMetric(
            "rank correlation of a constant sequence".into(),
        ));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    DualKf,
    JointEkf,
}

impl Method {
    pub const ALL: [Method; 2] = [Method::DualKf, Method::JointEkf];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::DualKf => "dual-kf",
            Method::JointEkf => "joint-ekf",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Quantity {
    Epsilon,
    Q,
    P,
}

impl Quantity {
    pub const ALL: [Quantity; 3] = [Quantity::Epsilon, Quantity::Q, Quantity::P];

    pub fn as_str(self) -> &'static str {
        match self {
            Quantity::Epsilon => "eps",
            Quantity::Q => "q",
            Quantity::P => "p",
        }
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

/// The six RPIs of one trial, indexed `[method][quantity]`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TrialRpis(pub [[f64; 3]; 2]);

impl TrialRpis {
    pub fn get(&self, method: Method, quantity: Quantity) -> f64 {
        self.0[method as usize][quantity as usize]
    }

    pub fn set(&mut self, method: Method, quantity: Quantity, value: f64) {
        self.0[method as usize][quantity as usize] = value;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RpiStat {
    pub mean: f64,
    pub sem: f64,
    pub n: usize,
}

/// Mean RPI and SEM for every method and quantity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RpiSummary {
    stats: [[RpiStat; 3]; 2],
}

impl RpiSummary {
    /// Aggregates per-trial RPIs; needs at least two trials.
    pub fn from_trials(trials: &[TrialRpis]) -> Result<Self> {
        let mut stats = [[RpiStat {
            mean: 0.0,
            sem: 0.0,
            n: 0,
        }; 3]; 2];
        for method in Method::ALL {
            for quantity in Quantity::ALL {
                let values: Vec<f64> = trials.iter().map(|t| t.get(method, quantity)).collect();
                let (mean, sem) = mean_sem(&values)?;
                stats[method as usize][quantity as usize] = RpiStat {
                    mean,
                    sem,
                    n: values.len(),
                };
            }
        }
        Ok(Self { stats })
    }

    pub fn get(&self, method: Method, quantity: Quantity) -> RpiStat {
        self.stats[method as usize][quantity as usize]
    }

    pub fn iter(&self) -> impl Iterator<Item = (Method, Quantity, RpiStat)> + '_ {
        Method::ALL.into_iter().flat_map(move |m| {
            Quantity::ALL
                .into_iter()
                .map(move |q| (m, q, self.get(m, q)))
        })
    }

    pub fn max_sem(&self) -> f64 {
        self.iter().map(|(_, _, s)| s.sem).fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rpi_examples() {
        let truth = [0.0, 1.0, 2.0, 3.0];
        let base = [1.0, 2.0, 1.0, 2.0];
        assert_eq!(rpi(&truth, &truth, &base, 0.1).unwrap(), 1.0);
        assert_eq!(rpi(&base, &truth, &base, 0.1).unwrap(), 0.0);
        let double: Vec<f64> = truth
            .iter()
            .zip(&base)
            .map(|(t, b)| t + 2.0 * (b - t))
            .collect();
        assert!((rpi(&double, &truth, &base, 0.1).unwrap() + 3.0).abs() < 1e-12);
    }

    #[test]
    fn rpi_zero_baseline_is_undefined() {
        let truth = [1.0, 1.0, 1.0];
        assert!(matches!(
            rpi(&[0.0; 3], &truth, &truth, 0.1),
            Err(Error::UndefinedMetric(_))
        ));
        assert_eq!(rpi(&truth, &truth, &truth, 0.1).unwrap(), 0.0);
    }

    #[test]
    fn rpi_uses_left_endpoints() {
        // the last node never enters the sums
        let truth = [0.0, 0.0, 0.0];
        let base = [1.0, 1.0, 100.0];
        let est = [0.5, 0.5, -50.0];
        assert!((rpi(&est, &truth, &base, 1.0).unwrap() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn rpi_burn_in_skips_transient() {
        let truth = [0.0; 5];
        let base = [10.0, 1.0, 1.0, 1.0, 1.0];
        let est = [0.0, 0.5, 0.5, 0.5, 0.5];
        let plain = rpi(&est, &truth, &base, 1.0).unwrap();
        let burned = rpi_with_burn_in(&est, &truth, &base, 1.0, 1.0).unwrap();
        assert!((burned - 0.75).abs() < 1e-15);
        assert!(plain > burned);
        assert!(rpi_with_burn_in(&est, &truth, &base, 1.0, 10.0).is_err());
    }

    #[test]
    fn mean_sem_examples() {
        assert_eq!(mean_sem(&[0.5, 0.5, 0.5]).unwrap(), (0.5, 0.0));
        let (m, s) = mean_sem(&[0.4, 0.6]).unwrap();
        assert!((m - 0.5).abs() < 1e-15);
        assert!((s - 0.1).abs() < 1e-15);
        assert!(matches!(
            mean_sem(&[1.0]),
            Err(Error::InsufficientData { needed: 2, got: 1 })
        ));
    }

    #[test]
    fn spearman_examples() {
        assert_eq!(
            spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 90.0]).unwrap(),
            1.0
        );
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
        // x = 1..5, y ranks (1,2,3,5,4): 1 − 6·2/(5·24) = 0.9
        let r = spearman(&[1.0, 2.0, 3.0, 4.0, 5.0], &[0.1, 0.2, 0.3, 0.5, 0.4]).unwrap();
        assert!((r - 0.9).abs() < 1e-12);
        assert_eq!(ranks(&[2.0, 1.0, 2.0]), vec![2.5, 1.0, 2.5]);
        assert!(spearman(&[1.0, 2.0], &[1.0, 1.0]).is_err());
    }

    fn path(len: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-10.0f64..10.0, len)
    }

    proptest! {
        #[test]
        fn rpi_is_scale_free_in_time(
            (est, truth, base) in (3usize..40).prop_flat_map(|n| (path(n), path(n), path(n))),
            dt in 1e-4f64..10.0,
            factor in 1e-3f64..1e3,
        ) {
            if let Ok(a) = rpi(&est, &truth, &base, dt) {
                let b = rpi(&est, &truth, &base, dt * factor).unwrap();
                prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
                prop_assert!(a <= 1.0);
            }
        }

        #[test]
        fn mean_sem_ignores_order(mut v in prop::collection::vec(-1.0f64..1.0, 2..50), seed in any::<u64>()) {
            let (m1, s1) = mean_sem(&v).unwrap();
            // deterministic shuffle
            let n = v.len();
            let mut state = seed | 1;
            for i in (1..n).rev() {
                state ^= state << 13; state ^= state >> 7; state ^= state << 17;
                v.swap(i, (state % (i as u64 + 1)) as usize);
            }
            let (m2, s2) = mean_sem(&v).unwrap();
            prop_assert!((m1 - m2).abs() < 1e-12);
            prop_assert!((s1 - s2).abs() < 1e-12);
            prop_assert!(s1 >= 0.0);
        }
    }
}
