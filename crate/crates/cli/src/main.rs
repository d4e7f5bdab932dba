//! `graphnlp`: solve generated or file-based instances, benchmark solver
//! strategies across horizons, and plot the resulting timing tables.

mod config;
mod output;
mod plot;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use graphnlp::linalg::KktSolver;
use graphnlp::nlp::NlpProblem;

use config::{RunConfig, SolverArgs, SolverKind, SourceArgs};
use output::{append_row, read_rows, run_one, ResultRow};

#[derive(Parser, Debug)]
#[command(name = "graphnlp", version, about = "Graph-structured nonlinear programming with overlapping Schwarz linear solves")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve one instance and write run.csv, iterations.log and solution.json.
    Run {
        #[command(flatten)]
        source: SourceArgs,
        #[arg(long, default_value_t = 24, value_parser = clap::value_parser!(u64).range(2..))]
        horizon: u64,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run every (linear solver, horizon) pair serially, then write run.csv and bench.svg.
    Bench {
        #[command(flatten)]
        source: SourceArgs,
        /// Comma-separated horizons.
        #[arg(long, value_delimiter = ',', default_value = "12,24,48", value_parser = clap::value_parser!(u64).range(2..))]
        horizons: Vec<u64>,
        /// Comma-separated linear solvers.
        #[arg(long, value_enum, value_delimiter = ',', default_value = "direct,ras")]
        linear_solvers: Vec<SolverKind>,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long, default_value = "bench")]
        out: PathBuf,
    },
    /// Write the subdomain layout of the `ras` solver to partition.txt.
    Partition {
        #[command(flatten)]
        source: SourceArgs,
        #[arg(long, default_value_t = 24, value_parser = clap::value_parser!(u64).range(2..))]
        horizon: u64,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Render an SVG timing plot from a run.csv file.
    Plot {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode> {
    match command {
        Command::Run {
            source,
            horizon,
            solver,
            out,
        } => {
            let cfg = RunConfig::new(&source, &solver, horizon as usize, solver.linear_solver);
            run(&cfg, &out)
        }
        Command::Bench {
            source,
            horizons,
            linear_solvers,
            solver,
            out,
        } => {
            let configs: Vec<RunConfig> = linear_solvers
                .iter()
                .flat_map(|&ls| horizons.iter().map(move |&t| (ls, t as usize)))
                .map(|(ls, t)| RunConfig::new(&source, &solver, t, ls))
                .collect();
            bench(&configs, &out)
        }
        Command::Partition {
            source,
            horizon,
            solver,
            out,
        } => {
            let cfg = RunConfig::new(&source, &solver, horizon as usize, SolverKind::Ras);
            partition(&cfg, &out)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Plot { csv, out } => {
            plot_file(&csv, &out)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn run(cfg: &RunConfig, out: &Path) -> Result<ExitCode> {
    let outcome = run_one(cfg, out)?;
    append_row(&out.join("run.csv"), &outcome.row)?;
    let r = &outcome.row;
    println!(
        "{} T={} {}: {} in {} iterations, objective {:.10e}, total {:.3}s (linear {:.3}s, function {:.3}s)",
        r.instance, r.horizon, r.strategy, r.status, r.iterations, r.objective, r.time_total, r.time_linear, r.time_function
    );
    match outcome.diagnostic {
        None => Ok(ExitCode::SUCCESS),
        Some(d) => {
            eprintln!("error: {d}");
            Ok(ExitCode::FAILURE)
        }
    }
}

fn bench(configs: &[RunConfig], out: &Path) -> Result<ExitCode> {
    if configs.is_empty() {
        bail!("empty benchmark matrix");
    }
    fs::create_dir_all(out)?;
    let csv = out.join("run.csv");
    if csv.exists() {
        fs::remove_file(&csv)?;
    }
    let mut failures = 0;
    for cfg in configs {
        let dir = out.join(format!("{}-T{}", cfg.strategy(), cfg.horizon));
        let row = match run_one(cfg, &dir) {
            Ok(outcome) => {
                if let Some(d) = outcome.diagnostic {
                    eprintln!("{} T={}: {d}", cfg.strategy(), cfg.horizon);
                    failures += 1;
                }
                outcome.row
            }
            Err(e) => {
                eprintln!("{} T={}: {e:#}", cfg.strategy(), cfg.horizon);
                failures += 1;
                ResultRow::echo(cfg, 0, 0)
            }
        };
        append_row(&csv, &row)?;
        println!(
            "{} T={}: {} {} iterations, {:.3}s",
            row.strategy, row.horizon, row.status, row.iterations, row.time_total
        );
    }
    plot_file(&csv, &out.join("bench.svg"))?;
    Ok(if failures == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn partition(cfg: &RunConfig, out: &Path) -> Result<()> {
    let nlp = cfg.build_problem()?;
    let solver = KktSolver::new(cfg.linear_solver_config(), nlp.structure())?;
    let map = solver.subdomains().context("ras solver has no subdomain map")?;
    fs::create_dir_all(out)?;
    let text = map.dump();
    fs::write(out.join("partition.txt"), &text)?;
    print!("{text}");
    Ok(())
}

fn plot_file(csv: &Path, out: &Path) -> Result<()> {
    let rows = read_rows(csv)?;
    fs::write(out, plot::render(&rows)).with_context(|| format!("writing {}", out.display()))?;
    Ok(())
}
