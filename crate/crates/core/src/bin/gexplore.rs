//! Command-line entry point: single runs, grid searches, plot emission,
//! and the exact chain oracle.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gexplore::agents::{value_iteration, TabularMdp};
use gexplore::harness::{
    emit_plot, grid_search, run_experiment, ExperimentConfig, GridSpec, PlotKind,
};

#[derive(Parser)]
#[command(name = "gexplore", about = "Exploration experiments on desk-scale control tasks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute one seeded experiment and persist its metrics.
    Run {
        /// Flat key = value config file.
        #[arg(long)]
        config: PathBuf,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a hyper-parameter grid over several seeds and rank the cells.
    Grid {
        #[arg(long)]
        config: PathBuf,
        /// Grid axes file (keys rho, log10_sigma, alpha; comma lists).
        #[arg(long)]
        grid: PathBuf,
        /// Number of seeds per cell, numbered 0..K.
        #[arg(long)]
        seeds: u64,
    },
    /// Render an SVG figure from one or more finished runs.
    Plot {
        /// Run directories containing metrics.csv.
        #[arg(long, required = true, num_args = 1..)]
        runs: Vec<PathBuf>,
        /// reward, visits, or trajectory.
        #[arg(long)]
        kind: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the exact discounted Q*-table for a chain.
    Oracle {
        /// Environment family; only `chain` has an exact oracle.
        #[arg(long)]
        env: String,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        gamma: f64,
    },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(message) => {
            eprintln!("gexplore: {message}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), String> {
    match cli.command {
        Command::Run { config, seed, out } => {
            let mut config = ExperimentConfig::from_file(&config).map_err(|e| e.to_string())?;
            if let Some(seed) = seed {
                config.seed = seed;
            }
            if let Some(out) = out {
                config.out = Some(out);
            }
            let outcome = run_experiment(&config).map_err(|e| e.to_string())?;
            println!(
                "completed {} episodes; final moving-average reward {}",
                outcome.rows.len(),
                outcome.final_moving_average
            );
            if let Some(dir) = outcome.dir {
                println!("metrics written to {}", dir.display());
            }
            Ok(())
        }
        Command::Grid { config, grid, seeds } => {
            if seeds == 0 {
                return Err("need at least one seed".into());
            }
            let base = ExperimentConfig::from_file(&config).map_err(|e| e.to_string())?;
            let text = std::fs::read_to_string(&grid).map_err(|e| e.to_string())?;
            let spec = GridSpec::from_text(&text, &base).map_err(|e| e.to_string())?;
            let seed_list: Vec<u64> = (0..seeds).collect();
            let ranked = grid_search(&base, &spec, &seed_list).map_err(|e| e.to_string())?;
            println!("rank  rho      log10_sigma  alpha      mean_final");
            for (i, cell) in ranked.iter().enumerate() {
                match (&cell.mean_final, &cell.error) {
                    (Some(mean), _) => println!(
                        "{:<5} {:<8} {:<12} {:<10} {mean}",
                        i + 1,
                        cell.rho,
                        cell.log10_sigma,
                        cell.alpha
                    ),
                    (None, Some(err)) => println!(
                        "{:<5} {:<8} {:<12} {:<10} failed: {err}",
                        i + 1,
                        cell.rho,
                        cell.log10_sigma,
                        cell.alpha
                    ),
                    (None, None) => {}
                }
            }
            Ok(())
        }
        Command::Plot { runs, kind, out } => {
            let kind = PlotKind::parse(&kind)
                .ok_or_else(|| format!("unknown plot kind {kind:?}; use reward, visits, or trajectory"))?;
            emit_plot(&runs, kind, &out).map_err(|e| e.to_string())?;
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::Oracle { env, n, gamma } => {
            if env != "chain" {
                return Err(format!("no exact oracle for {env:?}; only chain is supported"));
            }
            let result =
                value_iteration(&TabularMdp::chain(n), gamma, 1e-12).map_err(|e| e.to_string())?;
            println!("state  Q*(s,left)  Q*(s,right)  greedy");
            for s in 1..=n {
                let row = &result.q[s - 1];
                let greedy = if result.greedy(s - 1) == 0 { "left" } else { "right" };
                println!("{s:<6} {:<11.6} {:<12.6} {greedy}", row[0], row[1]);
            }
            Ok(())
        }
    }
}
