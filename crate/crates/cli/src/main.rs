use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fraczakai_cli::suite::run_suite;
use fraczakai_cli::{parse_config, run_experiment, OUT_ENV};

#[derive(Parser)]
#[command(name = "fraczakai", version, about = "Fractional Zakai filtering experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        config: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (beats the environment and the config).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the built-in acceptance suite.
    Check {
        #[arg(long, default_value_t = fraczakai::checks::DEFAULT_SEED)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated check ids (1-11); all when omitted.
        #[arg(long, value_delimiter = ',')]
        only: Vec<usize>,
    },
}

fn output_dir(flag: Option<PathBuf>, config: Option<PathBuf>, fallback: &str) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from)).or(config).unwrap_or_else(|| PathBuf::from(fallback))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, seed, out } => {
            let text = match std::fs::read_to_string(&config) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("cannot read {}: {e}", config.display());
                    return ExitCode::from(2);
                }
            };
            let mut cfg = match parse_config(&text) {
                Ok(c) => c,
                Err(errors) => {
                    eprintln!("{}: invalid config", config.display());
                    eprintln!("{errors}");
                    return ExitCode::from(2);
                }
            };
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let dir = output_dir(out, cfg.output.clone(), "out");
            match run_experiment(&cfg, &dir) {
                Ok(summary) => {
                    for c in &summary.checks {
                        println!("{} {} = {:.6e} (tolerance {:.1e})", if c.pass { "PASS" } else { "FAIL" }, c.name, c.value, c.tolerance);
                    }
                    println!("wrote {} files to {}", summary.files.len(), dir.display());
                    if summary.passed() {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(1)
                    }
                }
                Err(e) => {
                    eprintln!("{e}");
                    ExitCode::from(e.exit_code() as u8)
                }
            }
        }
        Command::Check { seed, out, only } => {
            let dir = output_dir(out, None, "check-out");
            match run_suite(&dir, seed, &only, |line| println!("{line}")) {
                Ok(report) => {
                    println!("summary written to {}", dir.join("check_summary.txt").display());
                    if report.passed() {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(1)
                    }
                }
                Err(e) => {
                    eprintln!("{e}");
                    ExitCode::from(e.exit_code() as u8)
                }
            }
        }
    }
}
