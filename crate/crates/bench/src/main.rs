use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use emac_bench::{run_experiment, write_report, ExperimentConfig, ExperimentId};

/// Runs one experiment and writes its CSVs, gnuplot scripts and manifest.
#[derive(Parser, Debug)]
#[command(name = "bench", version)]
struct Cli {
    /// convergence, lattice-vortex or cylinder
    experiment: ExperimentId,
    /// JSON experiment configuration
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to the configured one, then `out/<experiment>`
    #[arg(long)]
    out: Option<PathBuf>,
    /// Exit with status 1 when any threshold is violated
    #[arg(long)]
    check: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(passed) if passed || !cli.check => ExitCode::SUCCESS,
        Ok(_) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: &Cli) -> emac_bench::Result<bool> {
    let cfg = ExperimentConfig::load(&cli.config)?;
    if cfg.experiment != cli.experiment {
        return Err(emac_bench::BenchError::Config(format!(
            "{} names experiment '{}', not '{}'",
            cli.config.display(),
            cfg.experiment,
            cli.experiment
        )));
    }
    let out = match (&cli.out, &cfg.output) {
        (Some(dir), _) => dir.clone(),
        (None, Some(dir)) => cfg.resolve(dir),
        (None, None) => PathBuf::from("out").join(cfg.experiment.name()),
    };
    let report = run_experiment(&cfg)?;
    let written = write_report(&out, &cfg, &report)?;
    print!("{}", report.summary);
    for n in &report.notes {
        println!("note: {n}");
    }
    print!("{}", report.checks_table());
    println!("wrote {} files to {}", written.len(), out.display());
    println!("{}", if report.passed() { "all thresholds met" } else { "thresholds violated" });
    Ok(report.passed())
}
