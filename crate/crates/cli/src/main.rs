mod catalog;
mod config;
mod error;
mod experiments;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use crate::config::ExperimentConfig;
use crate::error::RunError;

#[derive(Parser)]
#[command(name = "mourre", version, about = "Run finite-section commutator experiments from a config file")]
struct Cli {
    /// Worker threads for dense linear algebra (1 = sequential).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run {
        config: PathBuf,
        /// Overrides output.dir from the config.
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// List experiment kinds with their parameters and defaults.
    List {
        /// Emit the catalog as JSON.
        #[arg(long)]
        json: bool,
    },
}

fn run(config: PathBuf, output_dir: Option<PathBuf>, seed: Option<u64>) -> Result<bool, RunError> {
    let mut cfg = ExperimentConfig::load(&config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let dir = output_dir.unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    let start = Instant::now();
    let out = experiments::run(&cfg)?;
    let secs = start.elapsed().as_secs_f64();
    let mut files: Vec<(String, Vec<u8>)> = out.series.iter().map(|s| (format!("{}.csv", s.name), s.to_csv())).collect();
    files.push(("report.json".into(), report::report_json(&cfg, &out, secs)));
    report::write_all(&dir, &files)?;
    for c in &out.checks {
        let tag = if c.passed { "pass" } else { "FAIL" };
        println!("{tag}  {}: {:.6e} {} {:.6e}", c.name, c.value, c.comparison, c.threshold);
    }
    println!("{} checks, report in {}", out.checks.len(), dir.join("report.json").display());
    Ok(out.passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        let par = if n <= 1 { faer::Par::Seq } else { faer::Par::rayon(n) };
        faer::set_global_parallelism(par);
    }
    match cli.command {
        Command::List { json } => {
            let cat = catalog::catalog();
            if json {
                println!("{}", serde_json::to_string_pretty(&cat).expect("catalog serializes"));
            } else {
                print!("{}", catalog::render_text(&cat));
            }
            ExitCode::SUCCESS
        }
        Command::Run { config, output_dir, seed } => match run(config, output_dir, seed) {
            Ok(true) => ExitCode::SUCCESS,
            Ok(false) => ExitCode::from(1),
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(e.exit_code() as u8)
            }
        },
    }
}
