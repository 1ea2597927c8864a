//! Alternating optimisation of allocation and trajectory.
//!
//! Each round solves the allocation problem on the current trajectory, then
//! refines the trajectory for that allocation. The refined trajectory keeps
//! the previous allocation feasible with throughput to spare, so the next
//! allocation solve can only shorten service times: the average PAoI is
//! non-increasing and bounded below, and the loop stops once its
//! fractional decrease falls under `eps`.

use crate::allocation::{self, DualSettings};
use crate::error::{Error, Result};
use crate::experiments::straight_baseline;
use crate::model::{peak_aoi, Allocation, Scenario, Solution, Trajectory};
use crate::trajectory::{self, ScaSettings};

#[derive(Clone, Debug, PartialEq)]
pub struct BcdSettings {
    /// Fractional-decrease threshold on the average PAoI.
    pub eps: f64,
    pub max_outer: usize,
    pub sca: ScaSettings,
    pub dual: DualSettings,
}

impl Default for BcdSettings {
    fn default() -> Self {
        BcdSettings {
            eps: 1e-3,
            max_outer: 30,
            sca: ScaSettings::default(),
            dual: DualSettings::default(),
        }
    }
}

impl BcdSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0) || self.max_outer == 0 {
            return Err(Error::Domain(format!(
                "need eps > 0 and max_outer >= 1 (got {}, {})",
                self.eps, self.max_outer
            )));
        }
        Ok(())
    }
}

fn allocate(scn: &Scenario, traj: &Trajectory, s: &BcdSettings) -> Result<(Allocation, f64)> {
    let alloc = allocation::solve_p2_detailed(scn, traj, &s.dual)?.allocation();
    let paoi = peak_aoi(&alloc)?;
    Ok((alloc, paoi))
}

/// Runs the alternating scheme from `traj0`.
///
/// Allocation failures on the initial trajectory are returned as errors.
/// Later inner-solver failures end the loop early with the last consistent
/// (trajectory, allocation) pair and `degraded` set.
pub fn run(scn: &Scenario, traj0: &Trajectory, s: &BcdSettings) -> Result<Solution> {
    scn.validate()?;
    s.validate()?;
    let mut traj = traj0.clone();
    let (mut alloc, mut paoi) = allocate(scn, &traj, s)?;
    let mut trace = vec![paoi];
    let mut converged = false;
    let mut degraded = false;
    let mut rounds = 0;

    while rounds < s.max_outer {
        let refined = match trajectory::solve_p3(&traj, &alloc, scn, &s.sca) {
            Ok(out) => out,
            Err(_) => {
                degraded = true;
                break;
            }
        };
        let (next_alloc, next_paoi) = match allocate(scn, &refined.trajectory, s) {
            Ok(v) => v,
            Err(_) => {
                degraded = true;
                break;
            }
        };
        rounds += 1;
        if next_paoi > paoi {
            // Only possible through inner-solver tolerances; the previous
            // pair is at least as good.
            converged = true;
            break;
        }
        let decrease = (paoi - next_paoi) / paoi;
        traj = refined.trajectory;
        alloc = next_alloc;
        paoi = next_paoi;
        trace.push(paoi);
        if decrease < s.eps {
            converged = true;
            break;
        }
    }

    Ok(Solution {
        trajectory: traj,
        allocation: alloc,
        avg_paoi_s: paoi,
        iterations: rounds,
        objective_trace: trace,
        converged,
        degraded,
    })
}

/// Runs from the straight-line trajectory between the endpoints.
pub fn run_from_baseline(scn: &Scenario, s: &BcdSettings) -> Result<Solution> {
    scn.validate()?;
    run(scn, &straight_baseline(scn), s)
}
