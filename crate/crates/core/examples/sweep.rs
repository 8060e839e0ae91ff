//! Parameter sweep over T, g or c (first argument, default T) with a small trial count.
use opo_estim::harness::{run_sweep, ExperimentConfig, SweepParam};
use opo_estim::metrics::{spearman, Method, Quantity};

fn main() -> opo_estim::Result<()> {
    let param: SweepParam = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "T".into())
        .parse()?;
    let cfg = ExperimentConfig {
        n_trials: 40,
        ..Default::default()
    };
    let out = run_sweep(&cfg, Some(param), &cfg.output_dir.join("sweep"))?;
    let xs = out.result.values();
    for m in Method::ALL {
        let ys = out.result.means(m, Quantity::Epsilon);
        let cells: Vec<String> = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| format!("{x}:{:.1}%", 100.0 * y))
            .collect();
        println!("{m:<10} {}", cells.join(" "));
        println!("{m:<10} spearman {:.3}", spearman(&xs, &ys)?);
    }
    println!("{}", out.svg.display());
    Ok(())
}
