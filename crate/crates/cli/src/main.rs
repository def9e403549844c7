use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tlps_cli::commands;

#[derive(Parser)]
#[command(name = "tlps", version, about = "Temporal logic policy search")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy from a run config.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; overrides `[output] dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        dump_trajectories: bool,
        #[arg(long)]
        quiet: bool,
    },
    /// Evaluate a trajectory CSV against a spec. Exits 0 if satisfied,
    /// 10 if violated, 11 on the boundary.
    Monitor {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        traj: PathBuf,
        #[arg(long)]
        beta: Option<f64>,
    },
    /// Print a spec's syntax tree.
    Parse {
        #[arg(long)]
        spec: PathBuf,
    },
    /// Compare smoothed and exact robustness over several beta values.
    BetaSweep {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        traj: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        beta: Vec<f64>,
        /// Also write the table as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Roll out a saved policy under a run config.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            eprintln!("error[usage]: {}", first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::Train {
            config,
            seed,
            out,
            dump_trajectories,
            quiet,
        } => commands::train(
            &config,
            &commands::TrainArgs {
                seed,
                out,
                dump_trajectories,
                quiet,
            },
        ),
        Command::Monitor { spec, traj, beta } => commands::monitor(&spec, &traj, beta),
        Command::Parse { spec } => commands::parse(&spec),
        Command::BetaSweep {
            spec,
            traj,
            beta,
            out,
        } => commands::beta_sweep(&spec, &traj, &beta, out.as_deref()),
        Command::Eval {
            config,
            policy,
            seed,
        } => commands::eval(&config, &policy, seed),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("{}", e.line());
            ExitCode::from(e.exit_code())
        }
    }
}
