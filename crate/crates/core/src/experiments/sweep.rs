use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::allocation;
use crate::bcd::{self, BcdSettings};
use crate::error::{Error, Result};
use crate::experiments::straight_baseline;
use crate::model::{peak_aoi, Scenario, Solution};

/// Worker-count override for sweeps.
pub const WORKERS_ENV: &str = "UAV_PAOI_WORKERS";

pub fn worker_count() -> Option<usize> {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    /// Source energy budget `E_S` (J).
    ESource,
    /// Both budgets, `E_S = E_U` (J).
    EBoth,
    /// Packet size `S` (bits).
    PacketSize,
}

impl SweepParam {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepParam::ESource => "e_source",
            SweepParam::EBoth => "e_both",
            SweepParam::PacketSize => "packet_size",
        }
    }

    pub fn apply(&self, base: &Scenario, value: f64) -> Scenario {
        let mut s = base.clone();
        match self {
            SweepParam::ESource => s.e_source_j = value,
            SweepParam::EBoth => {
                s.e_source_j = value;
                s.e_uav_j = value;
            }
            SweepParam::PacketSize => s.packet_size_bits = value,
        }
        s
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "e_source" => Ok(SweepParam::ESource),
            "e_both" => Ok(SweepParam::EBoth),
            "packet_size" => Ok(SweepParam::PacketSize),
            other => Err(Error::Config(format!(
                "unknown sweep parameter `{other}` (expected e_source, e_both or packet_size)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub parameter: SweepParam,
    pub values: Vec<f64>,
    /// Also evaluate the straight trajectory (allocation only).
    pub baseline: bool,
    /// Where `sweep.csv` and per-point trajectories go, if anywhere.
    pub out_dir: Option<PathBuf>,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Config("sweep needs at least one value".into()));
        }
        if self.values.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config(
                "sweep values must be strictly increasing".into(),
            ));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("sweep values must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub param_value: f64,
    pub paoi_optimized: Option<f64>,
    pub paoi_straight: Option<f64>,
    pub outer_iters: usize,
    pub wall_time_s: f64,
    /// `ok`, `degraded`, or an error description.
    pub status: String,
}

impl SweepRow {
    pub fn record(&self) -> [String; 6] {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        [
            self.param_value.to_string(),
            opt(self.paoi_optimized),
            opt(self.paoi_straight),
            self.outer_iters.to_string(),
            self.wall_time_s.to_string(),
            self.status.clone(),
        ]
    }
}

#[derive(Clone, Debug)]
pub struct SweepTable {
    pub parameter: SweepParam,
    pub rows: Vec<SweepRow>,
    /// Optimised solution per row, when the solve succeeded.
    pub solutions: Vec<Option<Solution>>,
}

impl SweepTable {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(super::SWEEP_HEADER.split(','))?;
        for row in &self.rows {
            w.write_record(row.record())?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
        String::from_utf8(bytes).map_err(|e| Error::Numeric(e.to_string()))
    }

    /// Writes `sweep.csv` plus `trajectory_<k>.csv` for every solved point.
    pub fn write(&self, dir: &std::path::Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("sweep.csv"), self.to_csv()?)?;
        for (k, sol) in self.solutions.iter().enumerate() {
            if let Some(sol) = sol {
                std::fs::write(
                    dir.join(format!("trajectory_{k}.csv")),
                    super::trajectory_csv(&sol.trajectory, &sol.allocation)?,
                )?;
            }
        }
        Ok(())
    }
}

fn run_point(
    spec: &SweepSpec,
    base: &Scenario,
    settings: &BcdSettings,
    value: f64,
) -> (SweepRow, Option<Solution>) {
    let started = Instant::now();
    let scn = spec.parameter.apply(base, value);
    let mut status = Vec::new();
    let solved = bcd::run_from_baseline(&scn, settings);
    let (paoi_optimized, outer_iters, solution) = match solved {
        Ok(sol) => {
            if sol.degraded {
                status.push("degraded".to_string());
            }
            (Some(sol.avg_paoi_s), sol.iterations, Some(sol))
        }
        Err(e) => {
            status.push(format!("optimized: {e}"));
            (None, 0, None)
        }
    };
    let paoi_straight = if spec.baseline {
        match allocation::solve_p2(&scn, &straight_baseline(&scn)).and_then(|a| peak_aoi(&a)) {
            Ok(v) => Some(v),
            Err(e) => {
                status.push(format!("straight: {e}"));
                None
            }
        }
    } else {
        None
    };
    let row = SweepRow {
        param_value: value,
        paoi_optimized,
        paoi_straight,
        outer_iters,
        wall_time_s: started.elapsed().as_secs_f64(),
        status: if status.is_empty() {
            "ok".into()
        } else {
            status.join("; ")
        },
    };
    (row, solution)
}

/// Solves every sweep point in a worker pool; rows come back in parameter
/// order. Per-point failures are recorded in the row's status.
pub fn run_sweep(spec: &SweepSpec, base: &Scenario, settings: &BcdSettings) -> Result<SweepTable> {
    spec.validate()?;
    base.validate()?;
    let work = || -> Vec<(SweepRow, Option<Solution>)> {
        spec.values
            .par_iter()
            .map(|&v| run_point(spec, base, settings, v))
            .collect()
    };
    let results = match worker_count() {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(work),
        None => work(),
    };
    let (rows, solutions) = results.into_iter().unzip();
    let table = SweepTable {
        parameter: spec.parameter,
        rows,
        solutions,
    };
    if let Some(dir) = &spec.out_dir {
        table.write(dir)?;
    }
    Ok(table)
}
