use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use opo_estim::harness::experiment::write_single_trial;
use opo_estim::harness::{
    check_invariants, run_case_study, run_single_trial, run_sweep, ExperimentConfig, SweepParam,
};
use opo_estim::metrics::RpiSummary;
use opo_estim::Error;

#[derive(Parser)]
#[command(
    name = "opo-estim",
    version,
    about = "Pump and quadrature estimation for a degenerate OPO"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON configuration; omitted fields take the case-study defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Use 200 trials per Monte Carlo batch.
    #[arg(long)]
    fast: bool,
    /// Output directory (defaults to the config's `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one trial and write its paths.
    SingleTrial {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        trial: u64,
    },
    /// Monte Carlo mean RPIs of both adaptive filters.
    CaseStudy {
        #[command(flatten)]
        common: Common,
    },
    /// Monte Carlo over a grid of T, g or c.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Parameter to sweep over its default grid when the config has no sweep.
        #[arg(long)]
        param: Option<SweepParam>,
    },
    /// Physical-consistency and oracle checks.
    CheckInvariants {
        #[command(flatten)]
        common: Common,
    },
}

fn load(common: &Common) -> Result<(ExperimentConfig, PathBuf), Error> {
    let cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let cfg = cfg.with_overrides(common.seed, common.fast);
    let out = common.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    Ok((cfg, out))
}

fn print_summary(summary: &RpiSummary) {
    println!(
        "{:<10} {:<4} {:>9} {:>8}",
        "method", "qty", "mean RPI", "SEM"
    );
    for (m, q, s) in summary.iter() {
        println!(
            "{:<10} {:<4} {:>8.2}% {:>7.2}%",
            m.as_str(),
            q.as_str(),
            100.0 * s.mean,
            100.0 * s.sem
        );
    }
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::SingleTrial { common, trial } => {
            let (cfg, out) = load(&common)?;
            let run = run_single_trial(&cfg, trial)?;
            let files = write_single_trial(&run, &out)?;
            println!("{:?}", run.outcome);
            println!(
                "wrote {} and {}",
                files.trajectory.display(),
                files.estimates.display()
            );
        }
        Command::CaseStudy { common } => {
            let (cfg, out) = load(&common)?;
            let res = run_case_study(&cfg, &out)?;
            print_summary(&res.result.summary);
            println!(
                "{} trials completed, {} excluded; wrote {}",
                res.result.n_completed(),
                res.result.n_excluded(),
                res.csv.display()
            );
        }
        Command::Sweep { common, param } => {
            let (cfg, out) = load(&common)?;
            let res = run_sweep(&cfg, param, &out)?;
            for p in &res.result.points {
                println!("{} = {}", res.result.param, p.value);
                print_summary(&p.result.summary);
            }
            println!("wrote {}", res.csv.display());
        }
        Command::CheckInvariants { common } => {
            let (cfg, _) = load(&common)?;
            let report = check_invariants(&cfg)?;
            println!("{report}");
            if !report.all_ok() {
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
