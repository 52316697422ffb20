use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use privileged_rl::harness::gen::{gen_pomdp, observability_report, InstanceKind};
use privileged_rl::harness::oracles::{check_inequalities, OracleCase};
use privileged_rl::harness::plot::emit_plots;
use privileged_rl::harness::runner::{run_experiment, summarize, ExperimentConfig};
use privileged_rl::model::ModelFile;
use privileged_rl::Error;

#[derive(Parser)]
#[command(name = "privileged-rl", version, about = "Instances, oracle checks, experiment sweeps and plots")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a random POMDP as JSON and print its per-step observability.
    Gen {
        #[arg(long)]
        kind: InstanceKind,
        #[arg(long = "S")]
        states: usize,
        #[arg(long = "A")]
        actions: usize,
        #[arg(long = "O")]
        observations: usize,
        #[arg(long = "H")]
        horizon: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an experiment config and write results.csv into the output directory.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Randomized check of an l1 inequality.
    Check {
        #[arg(long = "case")]
        case: OracleCase,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// One SVG of learning curves per case in a results CSV.
    Plot {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Oracle(_) => 3,
        Error::InvalidModel(_) | Error::InvalidArgument(_) | Error::Json(_) | Error::Csv(_) => 2,
        _ => 1,
    }
}

fn run(cli: Cli) -> privileged_rl::Result<()> {
    match cli.command {
        Command::Gen { kind, states, actions, observations, horizon, seed, out } => {
            let model = gen_pomdp(kind, states, actions, observations, horizon, seed)?;
            for (h, obs) in observability_report(&model)?.iter().enumerate() {
                println!("h={} gamma={:.6}{}", h + 1, obs.gamma, if obs.exact { "" } else { " (upper bound)" });
            }
            fs::write(&out, serde_json::to_string_pretty(&ModelFile::Pomdp(model))?)?;
        }
        Command::Run { config, out } => {
            let mut cfg: ExperimentConfig = serde_json::from_str(&fs::read_to_string(&config)?)?;
            cfg.out_dir = Some(out);
            let result = run_experiment(&cfg)?;
            for (kind, algo, mean, std) in summarize(&result.records) {
                println!("{kind} {algo} {mean:.4} ± {std:.4}");
            }
            if let Some(p) = &result.csv_path {
                println!("wrote {}", p.display());
            }
            if !result.failures.is_empty() {
                eprintln!("{} runs failed, see failures.log", result.failures.len());
            }
        }
        Command::Check { case, trials, seed } => {
            let report = check_inequalities(case, trials, seed)?;
            println!("{}", serde_json::to_string(&report)?);
            if !report.passed() {
                return Err(Error::Oracle(format!("{} of {} {case} trials failed", report.failures, report.trials)));
            }
        }
        Command::Plot { csv, out } => {
            for p in emit_plots(&csv, &out)? {
                println!("wrote {}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
