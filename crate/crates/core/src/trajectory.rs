//! Trajectory refinement for a fixed allocation.
//!
//! With service times and energies fixed, the best trajectory maximises the
//! smallest per-phase throughput `R̄` subject to the speed limit and the
//! fixed endpoints. Each throughput is convex in the squared horizontal
//! distance `‖q − L‖²`, so its tangent in that variable is a global lower
//! bound that is concave quadratic in `q`. Replacing every throughput by its
//! tangent at the current trajectory gives a convex QCQP; solving it and
//! re-expanding repeats until `R̄` stops improving.

use std::f64::consts::LOG2_E;

use serde::Serialize;

use crate::convex_kernel::{self, BarrierSettings, Qcqp, QuadConstraint};
use crate::error::{Error, Result};
use crate::model::{rate, Allocation, Phase, Point, Scenario, Trajectory};

/// Concave quadratic lower bound on one phase's throughput,
/// `R^lb(q) = C1 − C2 (‖q − L‖² − ‖q_ref − L‖²)`, tight at `q_ref`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TaylorBound {
    pub c1: f64,
    pub c2: f64,
    /// `h² + ‖q_ref − L‖²`.
    pub c3: f64,
    pub reference: Point,
    pub ground: Point,
}

impl TaylorBound {
    pub fn eval(&self, q: &Point) -> f64 {
        self.c1 - self.c2 * (q.dist_sq(&self.ground) - self.reference.dist_sq(&self.ground))
    }
}

pub fn taylor_bound(
    q_ref: &Point,
    ground: &Point,
    d: f64,
    energy: f64,
    scn: &Scenario,
) -> Result<TaylorBound> {
    if !(d > 0.0) {
        return Err(Error::Domain(format!(
            "service time must be positive, got {d}"
        )));
    }
    if !(energy >= 0.0) {
        return Err(Error::Domain(format!(
            "energy must be non-negative, got {energy}"
        )));
    }
    let nu0 = scn.gain_ref;
    let floor = scn.noise_floor();
    let c3 = scn.altitude_m * scn.altitude_m + q_ref.dist_sq(ground);
    let snr = nu0 * energy / (floor * c3 * d);
    let c1 = d * snr.ln_1p() * LOG2_E;
    let c2 = nu0 * LOG2_E * d * energy / (c3 * (floor * c3 * d + nu0 * energy));
    Ok(TaylorBound {
        c1,
        c2,
        c3,
        reference: *q_ref,
        ground: *ground,
    })
}

/// Throughput of every phase, `[up, down]` per packet.
pub fn phase_throughputs(scn: &Scenario, traj: &Trajectory, alloc: &Allocation) -> Vec<[f64; 2]> {
    (0..traj.len())
        .map(|i| {
            [Phase::Up, Phase::Down].map(|ph| {
                let d = alloc.times(ph)[i];
                let e = alloc.energies(ph)[i];
                if d > 0.0 {
                    rate(d, e, scn.gamma(&traj.point(i, ph), ph))
                } else {
                    0.0
                }
            })
        })
        .collect()
}

pub fn min_throughput(scn: &Scenario, traj: &Trajectory, alloc: &Allocation) -> f64 {
    phase_throughputs(scn, traj, alloc)
        .iter()
        .flatten()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// SCA iterate: the expansion point and the best `R̄` so far.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScaState {
    pub current: Trajectory,
    pub r_bar: f64,
    pub iteration: usize,
    pub r_bar_trace: Vec<f64>,
}

impl ScaState {
    pub fn new(scn: &Scenario, traj: Trajectory, alloc: &Allocation) -> Self {
        let r_bar = min_throughput(scn, &traj, alloc);
        ScaState {
            current: traj,
            r_bar,
            iteration: 0,
            r_bar_trace: vec![r_bar],
        }
    }
}

/// Variable layout of the subproblem: `z[0] = R̄`, then `(x, y)` of the
/// 2N waypoints in flight order. The first and last waypoint are pinned.
pub struct Layout {
    pub n: usize,
}

impl Layout {
    pub fn dim(&self) -> usize {
        1 + 4 * self.n
    }

    pub fn r_bar(&self) -> usize {
        0
    }

    /// Index of the x coordinate of waypoint `(i, phase)`; y follows it.
    pub fn x(&self, i: usize, phase: Phase) -> usize {
        1 + 2 * (2 * i + phase.slot())
    }

    pub fn encode(&self, traj: &Trajectory, r_bar: f64) -> Vec<f64> {
        let mut z = vec![0.0; self.dim()];
        z[0] = r_bar;
        for (i, w) in traj.waypoints.iter().enumerate() {
            for ph in [Phase::Up, Phase::Down] {
                let k = self.x(i, ph);
                z[k] = w[ph.slot()].x;
                z[k + 1] = w[ph.slot()].y;
            }
        }
        z
    }

    pub fn decode(&self, z: &[f64]) -> Trajectory {
        Trajectory {
            waypoints: (0..self.n)
                .map(|i| {
                    [Phase::Up, Phase::Down].map(|ph| {
                        let k = self.x(i, ph);
                        Point::new(z[k], z[k + 1])
                    })
                })
                .collect(),
        }
    }
}

fn squared_hop(ax: usize, bx: usize, radius: f64) -> QuadConstraint {
    let mut c = QuadConstraint::new().constant(-radius * radius);
    for off in 0..2 {
        c = c
            .quad(ax + off, ax + off, 1.0)
            .quad(bx + off, bx + off, 1.0)
            .quad(ax + off, bx + off, -1.0);
    }
    c
}

/// The convex subproblem at the state's expansion point.
///
/// Constraints: `R̄ ≤ R^lb_{i,j}(q_{i,j})` for all 2N phases, then the N
/// squared uplink hops, then the N−1 squared downlink hops.
pub fn build_subproblem(state: &ScaState, alloc: &Allocation, scn: &Scenario) -> Result<Qcqp> {
    let traj = &state.current;
    let n = traj.len();
    let layout = Layout { n };
    let mut qp = Qcqp::new(layout.dim()).maximize(layout.r_bar(), 1.0);

    for i in 0..n {
        for ph in [Phase::Up, Phase::Down] {
            let ground = scn.ground(ph);
            let tb = taylor_bound(
                &traj.point(i, ph),
                &ground,
                alloc.times(ph)[i],
                alloc.energies(ph)[i],
                scn,
            )?;
            let k = layout.x(i, ph);
            let c2 = tb.c2;
            let c = QuadConstraint::new()
                .lin(layout.r_bar(), 1.0)
                .quad(k, k, c2)
                .quad(k + 1, k + 1, c2)
                .lin(k, -2.0 * c2 * ground.x)
                .lin(k + 1, -2.0 * c2 * ground.y)
                .constant(c2 * (ground.x * ground.x + ground.y * ground.y))
                .constant(-c2 * tb.reference.dist_sq(&ground) - tb.c1);
            qp.push(c);
        }
    }
    for i in 0..n {
        qp.push(squared_hop(
            layout.x(i, Phase::Up),
            layout.x(i, Phase::Down),
            alloc.d_up[i] * scn.v_max,
        ));
    }
    for i in 0..n - 1 {
        qp.push(squared_hop(
            layout.x(i, Phase::Down),
            layout.x(i + 1, Phase::Up),
            alloc.d_down[i] * scn.v_max,
        ));
    }

    let first = layout.x(0, Phase::Up);
    let last = layout.x(n - 1, Phase::Down);
    qp.fix(first, scn.uav_start.x);
    qp.fix(first + 1, scn.uav_start.y);
    qp.fix(last, scn.uav_end.x);
    qp.fix(last + 1, scn.uav_end.y);
    Ok(qp)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScaSettings {
    /// Stop when `R̄` improves by less than this fraction.
    pub eps: f64,
    pub max_iter: usize,
    pub barrier: BarrierSettings,
}

impl Default for ScaSettings {
    fn default() -> Self {
        ScaSettings {
            eps: 1e-4,
            max_iter: 50,
            // A step is kept only if the true minimum throughput does not
            // drop, so the subproblem gap must sit below that test's slack.
            barrier: BarrierSettings {
                eps: 1e-10,
                ..BarrierSettings::default()
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScaOutcome {
    pub trajectory: Trajectory,
    /// True minimum throughput after each accepted step, starting at the
    /// input trajectory.
    pub r_bar_trace: Vec<f64>,
    pub iterations: usize,
    /// The speed limits leave no room to move (empty interior), so the
    /// input trajectory was returned untouched.
    pub pinned: bool,
}

fn mobility_excess(scn: &Scenario, traj: &Trajectory, alloc: &Allocation) -> f64 {
    let w = &traj.waypoints;
    let up = w
        .iter()
        .zip(&alloc.d_up)
        .map(|(p, d)| p[0].dist(&p[1]) - d * scn.v_max);
    let down = w
        .windows(2)
        .zip(&alloc.d_down)
        .map(|(p, d)| p[0][1].dist(&p[1][0]) - d * scn.v_max);
    up.chain(down).fold(f64::NEG_INFINITY, f64::max)
}

/// Successive convex approximation of the max-min throughput trajectory.
pub fn solve_p3(
    traj0: &Trajectory,
    alloc: &Allocation,
    scn: &Scenario,
    s: &ScaSettings,
) -> Result<ScaOutcome> {
    let n = scn.n_packets;
    if traj0.len() != n || alloc.len() != n {
        return Err(Error::InvalidScenario(
            "trajectory/allocation length mismatch".into(),
        ));
    }
    let mut traj = traj0.clone();
    traj.waypoints[0][0] = scn.uav_start;
    traj.waypoints[n - 1][1] = scn.uav_end;
    let excess = mobility_excess(scn, &traj, alloc);
    if excess > 1e-7 * scn.v_max {
        return Err(Error::Infeasible(format!(
            "starting trajectory exceeds the speed limit by {excess:e} m"
        )));
    }

    let layout = Layout { n };
    let mut state = ScaState::new(scn, traj, alloc);
    let mut pinned = false;
    while state.iteration < s.max_iter {
        let qp = build_subproblem(&state, alloc, scn)?;
        let delta = (1e-3 * state.r_bar.abs()).max(1e-6);
        let hint = layout.encode(&state.current, state.r_bar - delta);
        let start = match convex_kernel::strictly_feasible_start(&qp, &hint) {
            Ok(z) => z,
            Err(Error::InfeasibleSubproblem { .. }) => {
                pinned = true;
                break;
            }
            Err(e) => return Err(e),
        };
        let report = convex_kernel::solve(&qp, &s.barrier, &start)?;
        let next = layout.decode(&report.z);
        let r_next = min_throughput(scn, &next, alloc);
        state.iteration += 1;
        // The endpoints can hold the minimum fixed, so a step that keeps it
        // up to rounding is still worth taking: it frees the other links.
        if !(r_next >= state.r_bar - 1e-10 * state.r_bar.abs()) {
            // Lower bound maximised only to solver accuracy; keep Q^n.
            break;
        }
        let gain = r_next - state.r_bar;
        state.current = next;
        state.r_bar = r_next;
        state.r_bar_trace.push(r_next);
        if gain < s.eps * state.r_bar.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    Ok(ScaOutcome {
        trajectory: state.current,
        r_bar_trace: state.r_bar_trace,
        iterations: state.iteration,
        pinned,
    })
}
