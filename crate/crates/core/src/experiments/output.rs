//! CSV and JSON result files. Floats are written with Rust's shortest
//! round-trip formatting, so parsing a file back gives identical values.

use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{Allocation, Phase, Point, Solution, Trajectory};

/// One row per phase: 1-based packet index, `up`/`down`, hover point,
/// service time and energy.
pub const TRAJECTORY_HEADER: &str = "i,phase,x_m,y_m,d_s,E_j";
pub const TRACE_HEADER: &str = "iteration,avg_paoi_s";
pub const SWEEP_HEADER: &str =
    "param_value,paoi_optimized,paoi_straight,outer_iters,wall_time_s,status";

fn header(h: &str) -> Vec<&str> {
    h.split(',').collect()
}

fn into_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    String::from_utf8(bytes).map_err(|e| Error::Numeric(e.to_string()))
}

pub fn trajectory_csv(traj: &Trajectory, alloc: &Allocation) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header(TRAJECTORY_HEADER))?;
    for i in 0..traj.len() {
        for ph in [Phase::Up, Phase::Down] {
            let q = traj.point(i, ph);
            w.write_record([
                (i + 1).to_string(),
                ph.as_str().to_string(),
                q.x.to_string(),
                q.y.to_string(),
                alloc.times(ph)[i].to_string(),
                alloc.energies(ph)[i].to_string(),
            ])?;
        }
    }
    into_string(w)
}

/// Parses a file written by [`trajectory_csv`].
pub fn read_trajectory_csv(text: &str) -> Result<(Trajectory, Allocation)> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    if r.headers()?.iter().collect::<Vec<_>>() != header(TRAJECTORY_HEADER) {
        return Err(Error::Config("unexpected trajectory header".into()));
    }
    let mut rows: Vec<(usize, Phase, Point, f64, f64)> = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let num = |k: usize| -> Result<f64> {
            rec[k]
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("column {k}: {e}")))
        };
        let i: usize = rec[0]
            .parse()
            .map_err(|e| Error::Config(format!("packet index: {e}")))?;
        rows.push((
            i,
            rec[1].parse()?,
            Point::new(num(2)?, num(3)?),
            num(4)?,
            num(5)?,
        ));
    }
    if !rows.len().is_multiple_of(2) {
        return Err(Error::Config("odd number of phase rows".into()));
    }
    let n = rows.len() / 2;
    let mut waypoints = vec![[Point::default(); 2]; n];
    let mut alloc = Allocation {
        d_up: vec![0.0; n],
        d_down: vec![0.0; n],
        e_up: vec![0.0; n],
        e_down: vec![0.0; n],
    };
    for (k, (i, ph, q, d, e)) in rows.into_iter().enumerate() {
        if i != k / 2 + 1 || ph.slot() != k % 2 {
            return Err(Error::Config(format!("row {} out of order", k + 1)));
        }
        waypoints[i - 1][ph.slot()] = q;
        match ph {
            Phase::Up => {
                alloc.d_up[i - 1] = d;
                alloc.e_up[i - 1] = e;
            }
            Phase::Down => {
                alloc.d_down[i - 1] = d;
                alloc.e_down[i - 1] = e;
            }
        }
    }
    Ok((Trajectory::new(waypoints)?, alloc))
}

pub fn trace_csv(trace: &[f64]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header(TRACE_HEADER))?;
    for (k, v) in trace.iter().enumerate() {
        w.write_record([k.to_string(), v.to_string()])?;
    }
    into_string(w)
}

/// Writes `trajectory.csv`, `trace.csv` and `solution.json` into `dir`.
pub fn write_solution_files(dir: &Path, sol: &Solution) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(
        dir.join("trajectory.csv"),
        trajectory_csv(&sol.trajectory, &sol.allocation)?,
    )?;
    std::fs::write(dir.join("trace.csv"), trace_csv(&sol.objective_trace)?)?;
    std::fs::write(
        dir.join("solution.json"),
        serde_json::to_string_pretty(sol)? + "\n",
    )?;
    Ok(())
}
