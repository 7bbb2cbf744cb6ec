mod config;
mod error;
mod experiments;
mod output;
mod plotdata;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use config::ExperimentConfig;
use error::CliError;
use output::ResultWriter;

#[derive(Parser)]
#[command(name = "incentive-lab", version, about = "Runs incentive-core experiments from declarative configs")]
struct Cli {
    /// Worker threads (default: logical cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write results.csv, summary.json and config.json.
    Run { config: PathBuf },
    /// Check a config without running it.
    Validate { config: PathBuf },
    /// Turn a result directory into plot-ready CSV.
    Plotdata {
        results: PathBuf,
        #[arg(long)]
        figure: String,
        /// Keep only rows where COLUMN equals VALUE; repeatable.
        #[arg(long, value_name = "COLUMN=VALUE", value_parser = parse_select)]
        select: Vec<(String, String)>,
        /// Output file (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_select(s: &str) -> Result<(String, String), String> {
    s.split_once('=').map(|(k, v)| (k.to_string(), v.to_string())).ok_or_else(|| format!("expected COLUMN=VALUE, got '{s}'"))
}

fn load_valid(path: &PathBuf) -> Result<ExperimentConfig, CliError> {
    let cfg = ExperimentConfig::load(path)?;
    let diags = cfg.validate();
    if diags.is_empty() {
        Ok(cfg)
    } else {
        Err(CliError::Validation(diags))
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("--jobs: {e}")))?;
    }
    match cli.command {
        Command::Validate { config } => {
            let cfg = load_valid(&config)?;
            println!("ok: {} config {}", cfg.kind, cfg.hash());
        }
        Command::Run { config } => {
            let cfg = load_valid(&config)?;
            let mut w = ResultWriter::create(&cfg, experiments::header(cfg.kind))?;
            let highlights = experiments::run(&cfg, &mut w)?;
            let dir = w.dir().to_path_buf();
            let s = w.finish(highlights)?;
            println!("{}: {} rows in {} ({:.1}s)", cfg.kind, s.rows, dir.display(), s.wall_time_s);
        }
        Command::Plotdata { results, figure, select, out } => match out {
            Some(p) => {
                let mut f = std::fs::File::create(&p)?;
                plotdata::emit(&results, &figure, &select, &mut f)?;
            }
            None => plotdata::emit(&results, &figure, &select, &mut std::io::stdout().lock())?,
        },
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = execute(cli) {
        eprintln!("error: {e}");
        if let CliError::Validation(diags) = &e {
            for d in diags {
                eprintln!("  {d}");
            }
        }
        std::process::exit(e.exit_code());
    }
}
