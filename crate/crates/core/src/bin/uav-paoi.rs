use std::fmt::Write as _;
use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use uav_paoi::allocation;
use uav_paoi::bcd::{self, BcdSettings};
use uav_paoi::experiments::{self, SweepParam, SweepSpec};
use uav_paoi::model::peak_aoi;
use uav_paoi::Error;

/// Minimum average peak-AoI schedules for a UAV relay.
///
/// Exit codes: 0 success, 2 infeasible scenario, 3 solver stall.
#[derive(Parser)]
#[command(name = "uav-paoi", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Jointly optimise trajectory, energies and service times.
    Solve {
        /// TOML scenario file.
        config: PathBuf,
        /// Directory for trajectory.csv, trace.csv and solution.json.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Fractional-decrease stopping threshold.
        #[arg(long, default_value_t = 1e-3)]
        eps: f64,
    },
    /// Sweep one parameter and tabulate the average PAoI.
    Sweep {
        config: PathBuf,
        #[arg(long, value_parser = parse_param)]
        param: SweepParam,
        /// Comma-separated, strictly increasing.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// Also evaluate the straight trajectory.
        #[arg(long)]
        baseline: bool,
        /// Directory for sweep.csv and per-point trajectories; stdout if absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Allocation only, on the straight trajectory.
    Baseline {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_param(s: &str) -> Result<SweepParam, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn run(cli: Cli, out_buf: &mut String) -> Result<i32, Error> {
    match cli.command {
        Command::Solve { config, out, eps } => {
            let scn = experiments::load_scenario(&config)?;
            let settings = BcdSettings {
                eps,
                ..BcdSettings::default()
            };
            let sol = bcd::run_from_baseline(&scn, &settings)?;
            if let Some(dir) = &out {
                experiments::write_solution_files(dir, &sol)?;
            }
            let _ = writeln!(
                out_buf,
                "{}",
                json!({
                    "avg_paoi_s": sol.avg_paoi_s,
                    "iterations": sol.iterations,
                    "converged": sol.converged,
                    "degraded": sol.degraded,
                    "objective_trace": sol.objective_trace,
                })
            );
            if out.is_none() {
                out_buf.push_str(&experiments::trajectory_csv(
                    &sol.trajectory,
                    &sol.allocation,
                )?);
            }
            Ok(if sol.degraded { 3 } else { 0 })
        }
        Command::Sweep {
            config,
            param,
            values,
            baseline,
            out,
        } => {
            let scn = experiments::load_scenario(&config)?;
            let spec = SweepSpec {
                parameter: param,
                values,
                baseline,
                out_dir: out.clone(),
            };
            let table = experiments::run_sweep(&spec, &scn, &BcdSettings::default())?;
            if out.is_none() {
                out_buf.push_str(&table.to_csv()?);
            }
            Ok(0)
        }
        Command::Baseline { config, out } => {
            let scn = experiments::load_scenario(&config)?;
            let traj = experiments::straight_baseline(&scn);
            let alloc = allocation::solve_p2(&scn, &traj)?;
            let paoi = peak_aoi(&alloc)?;
            let _ = writeln!(out_buf, "{}", json!({ "avg_paoi_s": paoi }));
            let csv = experiments::trajectory_csv(&traj, &alloc)?;
            match out {
                Some(dir) => {
                    std::fs::create_dir_all(&dir)?;
                    std::fs::write(dir.join("trajectory.csv"), csv)?;
                }
                None => out_buf.push_str(&csv),
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let mut text = String::new();
    let result = run(Cli::parse(), &mut text);
    // A closed pipe (e.g. `| head`) is not an error worth reporting.
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
