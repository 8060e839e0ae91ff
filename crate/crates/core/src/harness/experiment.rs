use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::harness::config::{ExperimentConfig, SweepParam, SweepSpec};
use crate::harness::plot::{decimate, render, Panel, Series};
use crate::harness::trial::{run_trial, TrialContext, TrialOutcome, TrialRun};
use crate::metrics::{Method, Quantity, RpiSummary, TrialRpis};

/// Share of excluded trials above which outputs carry a warning banner.
pub const DIVERGENCE_WARNING_FRACTION: f64 = 0.01;

const FIGURE_POINTS: usize = 1500;

/// A trial left out of the statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct Exclusion {
    pub trial: u64,
    pub reason: String,
}

/// Aggregate of one Monte Carlo batch.
#[derive(Clone, Debug)]
pub struct MonteCarloResult {
    pub n_requested: usize,
    /// Per-trial RPIs of the completed trials, in trial order.
    pub trials: Vec<TrialRpis>,
    pub excluded: Vec<Exclusion>,
    pub summary: RpiSummary,
}

impl MonteCarloResult {
    pub fn n_completed(&self) -> usize {
        self.trials.len()
    }

    pub fn n_excluded(&self) -> usize {
        self.excluded.len()
    }

    pub fn warning(&self) -> Option<String> {
        let frac = self.n_excluded() as f64 / self.n_requested as f64;
        (frac > DIVERGENCE_WARNING_FRACTION).then(|| {
            format!(
                "warning: {} of {} trials diverged or were undefined and are excluded",
                self.n_excluded(),
                self.n_requested
            )
        })
    }
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

/// Runs trials `0..n_trials` in parallel. Results are gathered by trial index,
/// so the outcome does not depend on scheduling.
pub fn run_monte_carlo(ctx: &TrialContext) -> Result<MonteCarloResult> {
    let n = ctx.config.n_trials;
    let outcomes: Vec<TrialOutcome> = pool(ctx.config.workers)?.install(|| {
        (0..n as u64)
            .into_par_iter()
            .map(|i| run_trial(ctx, i).map(|run| run.outcome))
            .collect::<Result<Vec<_>>>()
    })?;

    let mut trials = Vec::with_capacity(n);
    let mut excluded = Vec::new();
    for (i, outcome) in outcomes.into_iter().enumerate() {
        let trial = i as u64;
        match outcome {
            TrialOutcome::Completed(r) => trials.push(r),
            TrialOutcome::Diverged { estimator, step } => excluded.push(Exclusion {
                trial,
                reason: format!("{estimator} diverged at step {step}"),
            }),
            TrialOutcome::Undefined(msg) => excluded.push(Exclusion {
                trial,
                reason: format!("undefined rpi: {msg}"),
            }),
        }
    }
    let summary = RpiSummary::from_trials(&trials)?;
    let result = MonteCarloResult {
        n_requested: n,
        trials,
        excluded,
        summary,
    };
    if let Some(w) = result.warning() {
        log::warn!("{w}");
    }
    Ok(result)
}

fn summary_rows(out: &mut String, prefix: &str, mc: &MonteCarloResult) {
    for (method, quantity, stat) in mc.summary.iter() {
        let _ = writeln!(
            out,
            "{prefix}{method},{quantity},{},{},{},{}",
            stat.mean,
            stat.sem,
            mc.n_completed(),
            mc.n_excluded()
        );
    }
}

fn exclusion_rows(out: &mut String, prefix: &str, mc: &MonteCarloResult) {
    for e in &mc.excluded {
        let _ = writeln!(out, "{prefix}{},{}", e.trial, e.reason);
    }
}

/// Case-study table as CSV.
pub fn case_study_csv(mc: &MonteCarloResult) -> String {
    let mut out = String::from("method,quantity,mean_rpi,sem,n_trials,n_diverged\n");
    summary_rows(&mut out, "", mc);
    out
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, contents)?;
    Ok(path)
}

/// Three panels (ε, q, p) with the truth and every estimator of one trial.
pub fn trial_figure(run: &TrialRun, banner: Option<&str>) -> String {
    let traj = &run.trajectory;
    let t: Vec<f64> = traj.times().collect();
    let truth = [
        traj.epsilon_true.clone(),
        traj.x_truth.iter().map(|x| x[0]).collect(),
        traj.x_truth.iter().map(|x| x[1]).collect(),
    ];
    let estimators = [
        ("KF", "#888888", &run.baseline),
        ("dual-KF", "#d62728", &run.dual),
        ("joint-EKF", "#1f77b4", &run.joint),
    ];
    let titles = [
        ("(a) pump ε", "ε"),
        ("(b) quadrature q", "q"),
        ("(c) quadrature p", "p"),
    ];

    let panels: Vec<Panel> = (0..3)
        .map(|k| {
            let mut series = Vec::new();
            let (x, y) = decimate(&t, &truth[k], FIGURE_POINTS);
            series.push(Series::line("truth", "black", x, y));
            for (label, color, path) in estimators {
                if let Ok(path) = path {
                    let ys = match k {
                        0 => path.epsilon.clone(),
                        1 => path.q(),
                        _ => path.p(),
                    };
                    let (x, y) = decimate(&t, &ys, FIGURE_POINTS);
                    series.push(Series::line(label, color, x, y));
                }
            }
            Panel {
                title: titles[k].0.into(),
                y_label: titles[k].1.into(),
                series,
            }
        })
        .collect();
    render(
        &format!("Estimation trial {}", run.index),
        "t (s)",
        &panels,
        banner,
    )
}

/// Estimator paths of one trial, one row per grid node.
pub fn estimates_csv(run: &TrialRun) -> String {
    let mut out = String::from("t,kf_q,kf_p,dual_eps,dual_q,dual_p,joint_eps,joint_q,joint_p\n");
    let paths = [&run.baseline, &run.dual, &run.joint];
    for (k, t) in run.trajectory.times().enumerate() {
        let _ = write!(out, "{t}");
        for (j, path) in paths.iter().enumerate() {
            let row = path
                .as_ref()
                .ok()
                .and_then(|p| p.means.get(k).map(|m| (p.epsilon[k], m[0], m[1])));
            let (e, q, p) = row.unwrap_or((f64::NAN, f64::NAN, f64::NAN));
            if j == 0 {
                let _ = write!(out, ",{q},{p}");
            } else {
                let _ = write!(out, ",{e},{q},{p}");
            }
        }
        out.push('\n');
    }
    out
}

/// Files written by [`write_single_trial`].
#[derive(Clone, Debug)]
pub struct SingleTrialOutput {
    pub trajectory: PathBuf,
    pub estimates: PathBuf,
    pub rpis: PathBuf,
    pub svg: PathBuf,
}

/// Writes `trajectory_<i>.csv`, `estimates_<i>.csv`, `rpi_<i>.csv` and
/// `trial_<i>.svg` for one trial.
pub fn write_single_trial(run: &TrialRun, out_dir: &Path) -> Result<SingleTrialOutput> {
    let i = run.index;
    let mut traj = Vec::new();
    run.trajectory.write_csv(&mut traj)?;
    let traj = String::from_utf8(traj).map_err(|e| Error::Config(e.to_string()))?;
    let trajectory = write_file(out_dir, &format!("trajectory_{i}.csv"), &traj)?;
    let estimates = write_file(out_dir, &format!("estimates_{i}.csv"), &estimates_csv(run))?;

    let mut rpi = String::from("method,quantity,rpi\n");
    match &run.outcome {
        TrialOutcome::Completed(r) => {
            for m in Method::ALL {
                for q in Quantity::ALL {
                    let _ = writeln!(rpi, "{m},{q},{}", r.get(m, q));
                }
            }
        }
        other => log::warn!("trial {i} has no RPIs: {other:?}"),
    }
    let rpis = write_file(out_dir, &format!("rpi_{i}.csv"), &rpi)?;
    let svg = write_file(out_dir, &format!("trial_{i}.svg"), &trial_figure(run, None))?;
    Ok(SingleTrialOutput {
        trajectory,
        estimates,
        rpis,
        svg,
    })
}

/// Files written by [`run_case_study`].
#[derive(Clone, Debug)]
pub struct CaseStudyOutput {
    pub result: MonteCarloResult,
    pub csv: PathBuf,
    pub svg: PathBuf,
    pub exclusions: PathBuf,
}

/// Monte Carlo over `n_trials` trials, writing `case_study.csv`,
/// `case_study_excluded.csv` and `case_study.svg` into `out_dir`.
pub fn run_case_study(config: &ExperimentConfig, out_dir: &Path) -> Result<CaseStudyOutput> {
    let ctx = TrialContext::new(config)?;
    let result = run_monte_carlo(&ctx)?;
    let csv = write_file(out_dir, "case_study.csv", &case_study_csv(&result))?;

    let mut excl = String::from("trial,reason\n");
    exclusion_rows(&mut excl, "", &result);
    let exclusions = write_file(out_dir, "case_study_excluded.csv", &excl)?;

    let figure = run_trial(&ctx, config.figure_trial)?;
    let svg = write_file(
        out_dir,
        "case_study.svg",
        &trial_figure(&figure, result.warning().as_deref()),
    )?;
    Ok(CaseStudyOutput {
        result,
        csv,
        svg,
        exclusions,
    })
}

#[derive(Clone, Debug)]
pub struct SweepPoint {
    pub value: f64,
    pub result: MonteCarloResult,
}

#[derive(Clone, Debug)]
pub struct SweepResult {
    pub param: SweepParam,
    pub points: Vec<SweepPoint>,
}

impl SweepResult {
    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.value).collect()
    }

    pub fn means(&self, method: Method, quantity: Quantity) -> Vec<f64> {
        self.points
            .iter()
            .map(|p| p.result.summary.get(method, quantity).mean)
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "param_name,param_value,method,quantity,mean_rpi,sem,n_trials,n_diverged\n",
        );
        for p in &self.points {
            summary_rows(&mut out, &format!("{},{},", self.param, p.value), &p.result);
        }
        out
    }

    pub fn to_svg(&self) -> String {
        let xs = self.values();
        let panels: Vec<Panel> = Quantity::ALL
            .into_iter()
            .map(|q| {
                let series = [(Method::DualKf, "#d62728"), (Method::JointEkf, "#1f77b4")]
                    .into_iter()
                    .map(|(m, color)| {
                        let stats: Vec<_> = self
                            .points
                            .iter()
                            .map(|p| p.result.summary.get(m, q))
                            .collect();
                        Series::line(
                            m.as_str(),
                            color,
                            xs.clone(),
                            stats.iter().map(|s| s.mean).collect(),
                        )
                        .with_errors(stats.iter().map(|s| s.sem).collect())
                    })
                    .collect();
                Panel {
                    title: format!("RPI of {q}"),
                    y_label: "RPI".into(),
                    series,
                }
            })
            .collect();
        let excluded: usize = self.points.iter().map(|p| p.result.n_excluded()).sum();
        let requested: usize = self.points.iter().map(|p| p.result.n_requested).sum();
        let banner = (excluded as f64 > DIVERGENCE_WARNING_FRACTION * requested as f64)
            .then(|| format!("warning: {excluded} of {requested} trials excluded"));
        render(
            &format!("RPI versus {}", self.param),
            self.param.name(),
            &panels,
            banner.as_deref(),
        )
    }
}

#[derive(Clone, Debug)]
pub struct SweepOutput {
    pub result: SweepResult,
    pub csv: PathBuf,
    pub svg: PathBuf,
}

/// Runs the sweep without writing files.
pub fn sweep(config: &ExperimentConfig, spec: &SweepSpec) -> Result<SweepResult> {
    if spec.values.is_empty() {
        return Err(Error::Config("sweep grid is empty".into()));
    }
    let mut points = Vec::with_capacity(spec.values.len());
    for &value in &spec.values {
        let cfg = config.at_sweep_point(spec, value)?;
        log::info!("sweep {}={value}: {} trials", spec.param, cfg.n_trials);
        let result = run_monte_carlo(&TrialContext::new(&cfg)?)?;
        points.push(SweepPoint { value, result });
    }
    Ok(SweepResult {
        param: spec.param,
        points,
    })
}

/// Runs the configured sweep (or the default grid of `param`) and writes
/// `sweep_<param>.csv`, `sweep_<param>_excluded.csv` and `sweep_<param>.svg`.
pub fn run_sweep(
    config: &ExperimentConfig,
    param: Option<SweepParam>,
    out_dir: &Path,
) -> Result<SweepOutput> {
    let spec = match (&config.sweep, param) {
        (Some(s), None) => s.clone(),
        (Some(s), Some(p)) if s.param == p => s.clone(),
        (_, Some(p)) => SweepSpec::with_default_grid(p),
        (None, None) => {
            return Err(Error::Config(
                "no sweep specified in the config or on the command line".into(),
            ))
        }
    };
    let result = sweep(config, &spec)?;
    let stem = format!("sweep_{}", spec.param);
    let csv = write_file(out_dir, &format!("{stem}.csv"), &result.to_csv())?;

    let mut excl = String::from("param_name,param_value,trial,reason\n");
    for p in &result.points {
        exclusion_rows(
            &mut excl,
            &format!("{},{},", spec.param, p.value),
            &p.result,
        );
    }
    write_file(out_dir, &format!("{stem}_excluded.csv"), &excl)?;
    let svg = write_file(out_dir, &format!("{stem}.svg"), &result.to_svg())?;
    Ok(SweepOutput { result, csv, svg })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            t_final: 2.0,
            dt: 1e-2,
            n_trials: 4,
            workers: 2,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn monte_carlo_is_independent_of_worker_count() {
        let mut cfg = small();
        let a = run_monte_carlo(&TrialContext::new(&cfg).unwrap()).unwrap();
        cfg.workers = 1;
        let b = run_monte_carlo(&TrialContext::new(&cfg).unwrap()).unwrap();
        assert_eq!(a.trials, b.trials);
        assert_eq!(a.summary, b.summary);
        assert_eq!(a.n_completed() + a.n_excluded(), cfg.n_trials);
    }

    #[test]
    fn two_trials_give_finite_sem() {
        let cfg = ExperimentConfig {
            n_trials: 2,
            ..small()
        };
        let mc = run_monte_carlo(&TrialContext::new(&cfg).unwrap()).unwrap();
        assert!(mc
            .summary
            .iter()
            .all(|(_, _, s)| s.sem.is_finite() && s.n == 2));
        let csv = case_study_csv(&mc);
        assert_eq!(csv.lines().count(), 7);
        assert!(csv.starts_with("method,quantity,mean_rpi,sem,n_trials,n_diverged\n"));
    }

    #[test]
    fn warning_threshold() {
        let cfg = small();
        let mut mc = run_monte_carlo(&TrialContext::new(&cfg).unwrap()).unwrap();
        assert!(mc.warning().is_none());
        mc.excluded.push(Exclusion {
            trial: 9,
            reason: "x".into(),
        });
        assert!(mc.warning().is_some());
    }

    #[test]
    fn sweep_requires_a_parameter() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            run_sweep(&small(), None, dir.path()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn sweep_csv_layout() {
        let spec = SweepSpec {
            param: SweepParam::Transmittance,
            values: vec![0.0, 1.0],
            fixed_g: None,
        };
        let res = sweep(&small(), &spec).unwrap();
        let csv = res.to_csv();
        assert_eq!(csv.lines().count(), 13);
        assert!(csv.lines().nth(1).unwrap().starts_with("T,0,dual-kf,eps,"));
        // no information channel: the adaptive filters reproduce the baseline
        assert!(res.means(Method::DualKf, Quantity::Epsilon)[0].abs() < 1e-12);
        assert!(res.to_svg().contains("<circle"));
    }
}
