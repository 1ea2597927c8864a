//! Scenario ingestion, the straight-line baseline, parameter sweeps and
//! result files.

mod config;
mod output;
mod sweep;

pub use config::{load_scenario, parse_scenario};
pub use output::{
    read_trajectory_csv, trace_csv, trajectory_csv, write_solution_files, SWEEP_HEADER,
    TRACE_HEADER, TRAJECTORY_HEADER,
};
pub use sweep::{
    run_sweep, worker_count, SweepParam, SweepRow, SweepSpec, SweepTable, WORKERS_ENV,
};

use crate::model::{Scenario, Trajectory};

/// Evenly spaced waypoints on the segment from launch to landing point:
/// `q_{i,1}` sits at fraction `(2i−2)/(2N−1)` and `q_{i,2}` at
/// `(2i−1)/(2N−1)` (1-based `i`).
pub fn straight_baseline(scn: &Scenario) -> Trajectory {
    let n = scn.n_packets;
    let segments = (2 * n - 1) as f64;
    let at = |k: usize| scn.uav_start.lerp(&scn.uav_end, k as f64 / segments);
    let mut waypoints: Vec<_> = (0..n).map(|i| [at(2 * i), at(2 * i + 1)]).collect();
    // Exact endpoints regardless of rounding in the interpolation.
    waypoints[0][0] = scn.uav_start;
    waypoints[n - 1][1] = scn.uav_end;
    Trajectory { waypoints }
}
