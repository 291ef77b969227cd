use std::path::PathBuf;
use std::process::ExitCode;

use bsearch::{exit_code, in_pool, open_sut, run_campaign, Loaded, Mode, RunOptions};
use bsearch_core::{Execution, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(version, about = "Targeted decision-boundary search campaigns")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the built-in classifier and write its weights
    TrainSut {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Training threads; 1 trains sequentially (default: logical cores)
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Run the guided search campaign
    Search(CampaignArgs),
    /// Run the random-genome baseline over the same seeds
    Baseline(CampaignArgs),
    /// Compute metrics.csv and summary.json for run directories
    Evaluate(ReportArgs),
    /// Write genome usage histograms for run directories
    UsageReport(ReportArgs),
}

#[derive(Args)]
struct CampaignArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Campaign root; cells go to <out>/search or <out>/baseline
    #[arg(long)]
    out: PathBuf,
    /// Worker threads (default: logical cores)
    #[arg(long)]
    workers: Option<usize>,
    /// Write per-evaluation trace.jsonl files
    #[arg(long)]
    trace: bool,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(required = true)]
    dirs: Vec<PathBuf>,
    /// Output directory (default: the first run directory)
    #[arg(long)]
    out: Option<PathBuf>,
}

fn campaign(args: CampaignArgs, mode: Mode) -> Result<()> {
    let loaded = Loaded::from_path(args.config.as_deref())?;
    let sut = open_sut(&loaded, Execution::Sequential)?;
    let opts = RunOptions {
        out: args.out,
        workers: args.workers,
        trace: args.trace,
    };
    let report = run_campaign(&loaded, sut.as_ref(), mode, &opts)?;
    println!(
        "{}: {} completed, {} failed, {} already present",
        mode.dir_name(),
        report.completed,
        report.failed,
        report.skipped
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::TrainSut { config, workers } => {
            let loaded = Loaded::from_path(config.as_deref())?;
            let execution = if workers == Some(1) {
                Execution::Sequential
            } else {
                Execution::Parallel
            };
            let report = in_pool(workers, || bsearch::train_sut(&loaded, execution))??;
            println!(
                "holdout accuracy {:.4}; weights written to {}",
                report.holdout_accuracy,
                loaded.weights_path().display()
            );
        }
        Command::Search(args) => campaign(args, Mode::Search)?,
        Command::Baseline(args) => campaign(args, Mode::Baseline)?,
        Command::Evaluate(args) => {
            let out = args.out.unwrap_or_else(|| args.dirs[0].clone());
            let summary = bsearch::evaluate(&args.dirs, &out)?;
            if let Some(c) = &summary.comparison {
                println!(
                    "guided search significantly better in {}/{} classes",
                    c.significant_classes,
                    c.per_class.len()
                );
            }
            println!("wrote {}", out.join(bsearch::evaluate::SUMMARY_FILE).display());
        }
        Command::UsageReport(args) => {
            let out = args.out.unwrap_or_else(|| args.dirs[0].clone());
            bsearch::usage_report_cmd(&args.dirs, &out)?;
            println!("wrote {}", out.join(bsearch::evaluate::USAGE_FILE).display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("BS_LOG", "info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
