//! Monte Carlo case study. Arguments: trial count (default 100) and horizon in
//! seconds (default 100).
use opo_estim::harness::{run_case_study, ExperimentConfig};

fn main() -> opo_estim::Result<()> {
    let mut args = std::env::args().skip(1);
    let n_trials = args.next().map_or(100, |s| s.parse().expect("trial count"));
    let t_final = args.next().map_or(100.0, |s| s.parse().expect("horizon"));
    let dt = if t_final > 100.0 { 1e-2 } else { 1e-3 };
    let cfg = ExperimentConfig {
        n_trials,
        t_final,
        dt,
        ..Default::default()
    };
    let out = run_case_study(&cfg, &cfg.output_dir.join("case_study"))?;
    for (m, q, s) in out.result.summary.iter() {
        println!(
            "{m:<10} {q:<4} {:6.2}% ± {:.2}%",
            100.0 * s.mean,
            100.0 * s.sem
        );
    }
    println!("{}", out.csv.display());
    Ok(())
}
