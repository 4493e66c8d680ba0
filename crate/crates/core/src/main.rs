use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use opclt::experiment::{load_config, run, Suite, SUMMARY_FILE};

#[derive(Parser)]
#[command(name = "opclt", version, about = "CLT laboratory for products of random matrix exponentials")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the suites of a TOML config and write CSV tables plus a JSON summary.
    Run {
        config: PathBuf,
        /// Master seed, overriding `master_seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory, overriding `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated subset of clt,lemma_speed,martingale,doob,covariance.
        #[arg(long, value_delimiter = ',')]
        suites: Option<Vec<Suite>>,
        /// Worker threads (default: $OPCLT_WORKERS, then all cores).
        #[arg(long)]
        workers: Option<usize>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Command::Run {
        config,
        seed,
        out,
        suites,
        workers,
    } = cli.command;
    let cfg = match load_config(&config).and_then(|c| c.with_overrides(seed, out, suites, workers)) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    println!(
        "family {:?}, d = {}, rho = {}, digest {}",
        cfg.ensemble().expect("validated").kind(),
        cfg.dim,
        cfg.rho,
        cfg.digest()
    );
    let report = match run(&cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    for s in &report.suites {
        let label = match s.status {
            opclt::experiment::SuiteStatus::Passed => "PASS",
            opclt::experiment::SuiteStatus::Failed => "FAIL",
            opclt::experiment::SuiteStatus::Error => "ERROR",
        };
        println!("{label} {} ({:.2}s)", s.suite, s.seconds);
        for c in s.checks.iter().filter(|c| !c.passed) {
            println!("    failed {} = {} ({:?})", c.name, c.measured, c.criterion);
        }
        for m in &s.markers {
            println!("    note {m}");
        }
        if let Some(err) = &s.error {
            println!("    error {err}");
        }
    }
    println!("summary: {}", cfg.output_dir.join(SUMMARY_FILE).display());
    if report.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
