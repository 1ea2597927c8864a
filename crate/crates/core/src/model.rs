//! System model: scenario data, trajectories, allocations and the closed-form
//! quantities they induce (AoI, channel gains, throughputs, minimum energy).
//!
//! Everything here is SI: seconds, joules, watts, meters and linear power
//! ratios. Throughputs are in bits/Hz so they compare directly against the
//! normalised packet size `S / B`.

use std::f64::consts::LN_2;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point on the ground plane, in meters.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dist_sq(&self, other: &Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn dist(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Point at fraction `t` of the way from `self` to `other`.
    pub fn lerp(&self, other: &Point, t: f64) -> Point {
        Point::new(
            self.x + t * (other.x - self.x),
            self.y + t * (other.y - self.y),
        )
    }
}

impl From<[f64; 2]> for Point {
    fn from(v: [f64; 2]) -> Self {
        Point::new(v[0], v[1])
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// Uplink (source → UAV) or downlink (UAV → destination) half of a packet's
/// service time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Up,
    Down,
}

impl Phase {
    pub fn as_str(&self) -> &'static str {
        match self {
            Phase::Up => "up",
            Phase::Down => "down",
        }
    }

    /// Index into `[up, down]` pairs.
    pub fn slot(&self) -> usize {
        match self {
            Phase::Up => 0,
            Phase::Down => 1,
        }
    }
}

impl std::str::FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "up" => Ok(Phase::Up),
            "down" => Ok(Phase::Down),
            other => Err(Error::Config(format!("unknown phase `{other}`"))),
        }
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// A complete problem instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub n_packets: usize,
    pub packet_size_bits: f64,
    pub bandwidth_hz: f64,
    pub source_pos: Point,
    pub dest_pos: Point,
    pub uav_start: Point,
    pub uav_end: Point,
    pub altitude_m: f64,
    pub v_max: f64,
    pub e_source_j: f64,
    pub e_uav_j: f64,
    /// Channel power gain at 1 m, linear.
    pub gain_ref: f64,
    /// SNR gap of the modulation and coding scheme, linear.
    pub snr_gap: f64,
    /// Receiver noise power in watts.
    pub noise_w: f64,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario::reference()
    }
}

impl Scenario {
    /// The reference setup: nodes at (∓800, 800) m, the UAV flying from
    /// (−800, 0) to (800, 0) at 100 m and at most 50 m/s, ten 1 Mbit packets
    /// over 1 MHz, 1.25 J at each transmitter, ν₀ = −47 dB, Γ = 10 dB and
    /// σ² = −100 dBm.
    pub fn reference() -> Self {
        Scenario {
            n_packets: 10,
            packet_size_bits: 1e6,
            bandwidth_hz: 1e6,
            source_pos: Point::new(-800.0, 800.0),
            dest_pos: Point::new(800.0, 800.0),
            uav_start: Point::new(-800.0, 0.0),
            uav_end: Point::new(800.0, 0.0),
            altitude_m: 100.0,
            v_max: 50.0,
            e_source_j: 1.25,
            e_uav_j: 1.25,
            gain_ref: db_to_linear(-47.0),
            snr_gap: db_to_linear(10.0),
            noise_w: dbm_to_watts(-100.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidScenario(what.to_string()));
        if self.n_packets < 2 {
            return bad("n_packets must be at least 2");
        }
        let positive = [
            ("packet_size_bits", self.packet_size_bits),
            ("bandwidth_hz", self.bandwidth_hz),
            ("altitude_m", self.altitude_m),
            ("v_max", self.v_max),
            ("gain_ref", self.gain_ref),
            ("noise_w", self.noise_w),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return bad(&format!("{name} must be positive and finite, got {v}"));
            }
        }
        for (name, v) in [("e_source_j", self.e_source_j), ("e_uav_j", self.e_uav_j)] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(&format!("{name} must be non-negative and finite, got {v}"));
            }
        }
        if !(self.snr_gap >= 1.0 && self.snr_gap.is_finite()) {
            return bad(&format!("snr_gap must be >= 1, got {}", self.snr_gap));
        }
        for (name, p) in [
            ("source_pos", self.source_pos),
            ("dest_pos", self.dest_pos),
            ("uav_start", self.uav_start),
            ("uav_end", self.uav_end),
        ] {
            if !(p.x.is_finite() && p.y.is_finite()) {
                return bad(&format!("{name} must be finite"));
            }
        }
        Ok(())
    }

    /// Normalised packet size `S / B` in bits/Hz.
    pub fn s_bar(&self) -> f64 {
        self.packet_size_bits / self.bandwidth_hz
    }

    /// `Γσ²`, the denominator turning a channel gain into an SNR coefficient.
    pub fn noise_floor(&self) -> f64 {
        self.snr_gap * self.noise_w
    }

    /// Ground node served in the given phase.
    pub fn ground(&self, phase: Phase) -> Point {
        match phase {
            Phase::Up => self.source_pos,
            Phase::Down => self.dest_pos,
        }
    }

    pub fn budget(&self, phase: Phase) -> f64 {
        match phase {
            Phase::Up => self.e_source_j,
            Phase::Down => self.e_uav_j,
        }
    }

    /// SNR coefficient `γ = g / (Γσ²)` in 1/J for a UAV hovering at `q`.
    pub fn gamma(&self, q: &Point, phase: Phase) -> f64 {
        channel_gain(q, &self.ground(phase), self.altitude_m, self.gain_ref) / self.noise_floor()
    }

    /// SNR coefficients for every waypoint of one phase.
    pub fn gammas(&self, traj: &Trajectory, phase: Phase) -> Vec<f64> {
        traj.phase_points(phase)
            .map(|q| self.gamma(&q, phase))
            .collect()
    }
}

/// Ordered hover points `[q_{i,1}, q_{i,2}]` for each packet.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub waypoints: Vec<[Point; 2]>,
}

impl Trajectory {
    pub fn new(waypoints: Vec<[Point; 2]>) -> Result<Self> {
        if waypoints.len() < 2 {
            return Err(Error::InvalidScenario(format!(
                "trajectory needs at least 2 packets, got {}",
                waypoints.len()
            )));
        }
        Ok(Trajectory { waypoints })
    }

    /// Every waypoint at the same point.
    pub fn stationary(at: Point, n: usize) -> Self {
        Trajectory {
            waypoints: vec![[at, at]; n],
        }
    }

    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }

    pub fn point(&self, i: usize, phase: Phase) -> Point {
        self.waypoints[i][phase.slot()]
    }

    pub fn phase_points(&self, phase: Phase) -> impl Iterator<Item = Point> + '_ {
        self.waypoints.iter().map(move |w| w[phase.slot()])
    }

    /// All 2N points in flight order.
    pub fn flight_order(&self) -> impl Iterator<Item = Point> + '_ {
        self.waypoints.iter().flat_map(|w| w.iter().copied())
    }

    pub fn first(&self) -> Point {
        self.waypoints[0][0]
    }

    pub fn last(&self) -> Point {
        self.waypoints[self.len() - 1][1]
    }
}

/// Per-packet service times (s) and energies (J) for both phases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub d_up: Vec<f64>,
    pub d_down: Vec<f64>,
    pub e_up: Vec<f64>,
    pub e_down: Vec<f64>,
}

impl Allocation {
    pub fn len(&self) -> usize {
        self.d_up.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d_up.is_empty()
    }

    pub fn times(&self, phase: Phase) -> &[f64] {
        match phase {
            Phase::Up => &self.d_up,
            Phase::Down => &self.d_down,
        }
    }

    pub fn energies(&self, phase: Phase) -> &[f64] {
        match phase {
            Phase::Up => &self.e_up,
            Phase::Down => &self.e_down,
        }
    }

    /// Total service time `d_i = d_{i,1} + d_{i,2}` of each packet.
    pub fn service_times(&self) -> Vec<f64> {
        self.d_up
            .iter()
            .zip(&self.d_down)
            .map(|(u, d)| u + d)
            .collect()
    }

    pub fn total_energy(&self, phase: Phase) -> f64 {
        self.energies(phase).iter().sum()
    }
}

/// Output of the joint optimisation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub trajectory: Trajectory,
    pub allocation: Allocation,
    pub avg_paoi_s: f64,
    /// Completed allocation/trajectory rounds.
    pub iterations: usize,
    /// Average PAoI after each allocation solve, starting with the initial
    /// trajectory.
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    /// Set when an inner solver failed and the best earlier iterate was kept.
    pub degraded: bool,
}

/// Average peak AoI of an allocation.
pub fn peak_aoi(alloc: &Allocation) -> Result<f64> {
    if alloc.d_down.len() != alloc.d_up.len() {
        return Err(Error::InvalidScenario(
            "uplink and downlink time vectors differ in length".into(),
        ));
    }
    average_peak_aoi(&alloc.service_times())
}

/// `(1/(N−1)) Σ_{i<N} (d_i + d_{i+1})` for total service times `d`.
pub fn average_peak_aoi(service_times: &[f64]) -> Result<f64> {
    let n = service_times.len();
    if n < 2 {
        return Err(Error::InvalidScenario(format!(
            "average peak AoI needs at least 2 packets, got {n}"
        )));
    }
    let sum: f64 = service_times.windows(2).map(|w| w[0] + w[1]).sum();
    Ok(sum / (n - 1) as f64)
}

/// Instantaneous AoI at time `t` under the just-in-time policy.
pub fn aoi_trace(alloc: &Allocation, t: f64) -> Result<f64> {
    aoi_at(&alloc.service_times(), t)
}

/// Sawtooth AoI for service times `d`: `a(t) = t` until the first delivery,
/// then it drops to `d_i` at each delivery instant `t_i = Σ_{j≤i} d_j` and
/// grows with unit slope.
pub fn aoi_at(service_times: &[f64], t: f64) -> Result<f64> {
    let horizon: f64 = service_times.iter().sum();
    if !(t >= 0.0 && t <= horizon) {
        return Err(Error::Domain(format!("time {t} outside [0, {horizon}]")));
    }
    let mut last_reset = 0.0;
    let mut age_at_reset = 0.0;
    let mut elapsed = 0.0;
    for &d in service_times {
        elapsed += d;
        if elapsed > t {
            break;
        }
        last_reset = elapsed;
        age_at_reset = d;
    }
    Ok(age_at_reset + (t - last_reset))
}

/// Line-of-sight power gain `ν₀ / (h² + ‖q − ground‖²)`.
pub fn channel_gain(q: &Point, ground: &Point, h: f64, gain_ref: f64) -> f64 {
    debug_assert!(h > 0.0);
    gain_ref / (h * h + q.dist_sq(ground))
}

/// Shannon throughput `d log₂(1 + γE/d)` in bits/Hz.
pub fn throughput(d: f64, energy: f64, gamma: f64) -> Result<f64> {
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
    if !(gamma > 0.0) {
        return Err(Error::Domain(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    Ok(rate(d, energy, gamma))
}

pub(crate) fn rate(d: f64, energy: f64, gamma: f64) -> f64 {
    d * (gamma * energy / d).ln_1p() / LN_2
}

/// Energy that makes the throughput exactly `s_bar` in time `d`:
/// `d/γ (2^{S̄/d} − 1)`. Unchecked; `d > 0` is the caller's job.
pub(crate) fn energy_at(d: f64, gamma: f64, s_bar: f64) -> f64 {
    d / gamma * (LN_2 * s_bar / d).exp_m1()
}

/// Minimum service times imposed by the speed limit.
///
/// Uplink entry `i` is the hop inside packet `i`; downlink entry `i` is the
/// hop to packet `i+1`, and the last downlink entry is zero since nothing
/// follows it.
pub fn theta_sequence(traj: &Trajectory, v_max: f64, phase: Phase) -> Vec<f64> {
    let w = &traj.waypoints;
    match phase {
        Phase::Up => w.iter().map(|p| p[0].dist(&p[1]) / v_max).collect(),
        Phase::Down => {
            let mut out: Vec<f64> = w
                .windows(2)
                .map(|p| p[0][1].dist(&p[1][0]) / v_max)
                .collect();
            out.push(0.0);
            out
        }
    }
}

/// Total energy needed to serve every packet at its minimum time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MinEnergy {
    Finite(f64),
    /// Some packet has zero minimum time; its energy diverges.
    Infinite,
}

impl MinEnergy {
    pub fn is_finite(&self) -> bool {
        matches!(self, MinEnergy::Finite(_))
    }

    pub fn value(&self) -> f64 {
        match self {
            MinEnergy::Finite(v) => *v,
            MinEnergy::Infinite => f64::INFINITY,
        }
    }

    /// True when a budget covers the minimum-time allocation.
    pub fn covered_by(&self, budget: f64) -> bool {
        match self {
            MinEnergy::Finite(v) => budget >= *v,
            MinEnergy::Infinite => false,
        }
    }
}

pub fn min_energy(thetas: &[f64], gammas: &[f64], s_bar: f64) -> MinEnergy {
    assert_eq!(thetas.len(), gammas.len(), "theta/gamma length mismatch");
    let mut total = 0.0;
    for (&theta, &gamma) in thetas.iter().zip(gammas) {
        if theta <= 0.0 {
            return MinEnergy::Infinite;
        }
        total += energy_at(theta, gamma, s_bar);
    }
    if total.is_finite() {
        MinEnergy::Finite(total)
    } else {
        MinEnergy::Infinite
    }
}

/// One constraint family of the joint problem.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    Throughput(Phase),
    Energy(Phase),
    NonNegativeEnergy(Phase),
    PositiveTime(Phase),
    Mobility(Phase),
    StartPoint,
    EndPoint,
    Dimension,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConstraintCheck {
    pub kind: ConstraintKind,
    /// Packet index for per-packet constraints.
    pub index: Option<usize>,
    /// Amount by which the constraint is exceeded (≤ 0 means satisfied).
    pub violation: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FeasibilityReport {
    pub checks: Vec<ConstraintCheck>,
    pub worst_violation: f64,
}

impl FeasibilityReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ConstraintCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn find(&self, kind: ConstraintKind, index: Option<usize>) -> Option<&ConstraintCheck> {
        self.checks
            .iter()
            .find(|c| c.kind == kind && c.index == index)
    }
}

pub const DEFAULT_FEASIBILITY_TOL: f64 = 1e-7;

/// Checks every constraint of the joint problem.
///
/// `tol` is relative: throughput may fall short of `S̄` by `tol·S̄`, energy
/// sums may exceed their budget by `tol·max(budget, 1)`, hops may exceed
/// `d·V_max` by `tol·V_max`, and endpoints may be off by `tol·(1 + ‖q‖)`.
pub fn check_feasible(
    scn: &Scenario,
    traj: &Trajectory,
    alloc: &Allocation,
    tol: f64,
) -> FeasibilityReport {
    let n = scn.n_packets;
    let mut checks = Vec::new();
    let mut push = |kind, index, violation: f64, allowed: f64| {
        checks.push(ConstraintCheck {
            kind,
            index,
            violation,
            passed: violation <= allowed,
        });
    };

    let dims_ok = traj.len() == n
        && [&alloc.d_up, &alloc.d_down, &alloc.e_up, &alloc.e_down]
            .iter()
            .all(|v| v.len() == n);
    if !dims_ok {
        push(ConstraintKind::Dimension, None, f64::INFINITY, 0.0);
        return finish(checks);
    }

    let s_bar = scn.s_bar();
    for phase in [Phase::Up, Phase::Down] {
        let times = alloc.times(phase);
        let energies = alloc.energies(phase);
        for i in 0..n {
            let d = times[i];
            let e = energies[i];
            push(
                ConstraintKind::PositiveTime(phase),
                Some(i),
                -d,
                -f64::MIN_POSITIVE,
            );
            push(ConstraintKind::NonNegativeEnergy(phase), Some(i), -e, 0.0);
            let gamma = scn.gamma(&traj.point(i, phase), phase);
            let r = if d > 0.0 && e >= 0.0 {
                rate(d, e, gamma)
            } else {
                0.0
            };
            push(
                ConstraintKind::Throughput(phase),
                Some(i),
                s_bar - r,
                tol * s_bar,
            );
        }
        let budget = scn.budget(phase);
        let used: f64 = energies.iter().sum();
        push(
            ConstraintKind::Energy(phase),
            None,
            used - budget,
            tol * budget.max(1.0),
        );
    }

    for (i, w) in traj.waypoints.iter().enumerate() {
        let hop = w[0].dist(&w[1]);
        push(
            ConstraintKind::Mobility(Phase::Up),
            Some(i),
            hop - alloc.d_up[i] * scn.v_max,
            tol * scn.v_max,
        );
        if i + 1 < n {
            let hop = w[1].dist(&traj.waypoints[i + 1][0]);
            push(
                ConstraintKind::Mobility(Phase::Down),
                Some(i),
                hop - alloc.d_down[i] * scn.v_max,
                tol * scn.v_max,
            );
        }
    }

    let start_err = traj.first().dist(&scn.uav_start);
    let end_err = traj.last().dist(&scn.uav_end);
    let start_scale = 1.0 + scn.uav_start.x.hypot(scn.uav_start.y);
    let end_scale = 1.0 + scn.uav_end.x.hypot(scn.uav_end.y);
    push(
        ConstraintKind::StartPoint,
        None,
        start_err,
        tol * start_scale,
    );
    push(ConstraintKind::EndPoint, None, end_err, tol * end_scale);

    finish(checks)
}

fn finish(checks: Vec<ConstraintCheck>) -> FeasibilityReport {
    let worst_violation = checks
        .iter()
        .map(|c| c.violation)
        .fold(f64::NEG_INFINITY, f64::max);
    FeasibilityReport {
        checks,
        worst_violation,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn alloc_from_times(d: &[f64]) -> Allocation {
        Allocation {
            d_up: d.iter().map(|v| v * 0.3).collect(),
            d_down: d.iter().map(|v| v * 0.7).collect(),
            e_up: vec![0.0; d.len()],
            e_down: vec![0.0; d.len()],
        }
    }

    #[test]
    fn peak_aoi_examples() {
        assert!((peak_aoi(&alloc_from_times(&[1.0, 2.0, 3.0])).unwrap() - 4.0).abs() < 1e-12);
        assert!((average_peak_aoi(&[5.0, 5.0]).unwrap() - 10.0).abs() < 1e-12);
        let mut d = vec![3.3684; 10];
        d[9] = 1.6842;
        let v = average_peak_aoi(&d).unwrap();
        assert!((v - (17.0 * 3.3684 + 1.6842) / 9.0).abs() < 1e-12);
        assert!((v - 6.5497).abs() < 1e-4);
    }

    #[test]
    fn peak_aoi_rejects_single_packet() {
        assert!(matches!(
            average_peak_aoi(&[1.0]),
            Err(Error::InvalidScenario(_))
        ));
    }

    #[test]
    fn aoi_trace_examples() {
        let d = [2.0, 3.0];
        assert_eq!(aoi_at(&d, 1.5).unwrap(), 1.5);
        assert_eq!(aoi_at(&d, 2.0).unwrap(), 2.0);
        assert_eq!(aoi_at(&d, 4.0).unwrap(), 4.0);
        assert_eq!(aoi_at(&d, 5.0).unwrap(), 3.0);
        assert_eq!(aoi_at(&d, 0.0).unwrap(), 0.0);
        assert!(matches!(aoi_at(&d, 5.5), Err(Error::Domain(_))));
        assert!(matches!(aoi_at(&d, -0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn channel_gain_examples() {
        let g = channel_gain(
            &Point::new(3.0, 4.0),
            &Point::new(3.0, 4.0),
            100.0,
            db_to_linear(-47.0),
        );
        assert!((g - 1.9952623149688795e-9).abs() < 1e-20);
        assert_eq!(
            channel_gain(&Point::default(), &Point::default(), 1.0, 1.0),
            1.0
        );
        let near = channel_gain(&Point::new(100.0, 0.0), &Point::default(), 100.0, 1.0);
        let far = channel_gain(&Point::new(200.0, 0.0), &Point::default(), 100.0, 1.0);
        assert!((far / near - 0.4).abs() < 1e-15);
    }

    #[test]
    fn throughput_examples() {
        assert!((throughput(1.0, 1.0, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((throughput(2.0, 2.0, 1.0).unwrap() - 2.0).abs() < 1e-15);
        let scn = Scenario::reference();
        let above = scn.gamma(&scn.source_pos, Phase::Up);
        assert!((above - 1995.2623149688795).abs() < 1e-9);
        let r = throughput(0.5, 0.01, above).unwrap();
        assert!((r - 0.5 * (1.0 + above * 0.02).log2()).abs() < 1e-14);
        assert!((r - 2.678).abs() < 1e-3);
        assert!(matches!(throughput(0.0, 1.0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(throughput(-1.0, 1.0, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn theta_examples() {
        let t = Trajectory::stationary(Point::new(1.0, 2.0), 4);
        assert!(theta_sequence(&t, 10.0, Phase::Up)
            .iter()
            .all(|&v| v == 0.0));
        assert!(theta_sequence(&t, 10.0, Phase::Down)
            .iter()
            .all(|&v| v == 0.0));

        let scn = Scenario::reference();
        let q = crate::experiments::straight_baseline(&scn);
        let up = theta_sequence(&q, scn.v_max, Phase::Up);
        let down = theta_sequence(&q, scn.v_max, Phase::Down);
        let expected = 1600.0 / 19.0 / 50.0;
        assert!(up.iter().all(|v| (v - expected).abs() < 1e-12));
        assert!(down[..9].iter().all(|v| (v - expected).abs() < 1e-12));
        assert_eq!(down[9], 0.0);
        assert!((expected - 1.68421).abs() < 1e-5);
    }

    #[test]
    fn min_energy_examples() {
        assert_eq!(
            min_energy(&[1.0; 4], &[1.0; 4], 1.0),
            MinEnergy::Finite(4.0)
        );
        assert_eq!(
            min_energy(&[1.0, 0.0], &[1.0, 1.0], 1.0),
            MinEnergy::Infinite
        );
        assert!(!MinEnergy::Infinite.covered_by(1e300));
    }

    #[test]
    fn min_energy_reference_uplink_regression() {
        // Frozen from an independent 256-bit summation (see the formula
        // oracle in tests/formulas.rs).
        let scn = Scenario::reference();
        let q = crate::experiments::straight_baseline(&scn);
        let thetas = theta_sequence(&q, scn.v_max, Phase::Up);
        let gammas = scn.gammas(&q, Phase::Up);
        let e = min_energy(&thetas, &gammas, scn.s_bar()).value();
        assert!(
            (e - REFERENCE_UPLINK_EMIN).abs() <= 1e-12 * REFERENCE_UPLINK_EMIN,
            "{e:.17e}"
        );
    }

    pub(crate) const REFERENCE_UPLINK_EMIN: f64 = 6.268_120_784_297_921e-1;

    fn feasible_pair() -> (Scenario, Trajectory, Allocation) {
        let scn = Scenario::reference();
        let traj = crate::experiments::straight_baseline(&scn);
        let alloc = crate::allocation::solve_p2(&scn, &traj).unwrap();
        (scn, traj, alloc)
    }

    #[test]
    fn check_feasible_accepts_solver_output() {
        let (scn, traj, alloc) = feasible_pair();
        let report = check_feasible(&scn, &traj, &alloc, DEFAULT_FEASIBILITY_TOL);
        assert!(
            report.passed(),
            "{:?}",
            report.failures().collect::<Vec<_>>()
        );
        for i in 0..scn.n_packets {
            let c = report
                .find(ConstraintKind::Throughput(Phase::Up), Some(i))
                .unwrap();
            assert!(c.violation.abs() < 1e-9);
        }
    }

    #[test]
    fn check_feasible_flags_short_uplink() {
        let (scn, traj, mut alloc) = feasible_pair();
        alloc.d_up[3] *= 0.5;
        let report = check_feasible(&scn, &traj, &alloc, DEFAULT_FEASIBILITY_TOL);
        let c = report
            .find(ConstraintKind::Throughput(Phase::Up), Some(3))
            .unwrap();
        assert!(!c.passed);
        assert!(!report.passed());
    }

    #[test]
    fn check_feasible_flags_moved_endpoint() {
        let (scn, mut traj, alloc) = feasible_pair();
        traj.waypoints[0][0].x += 1.0;
        let report = check_feasible(&scn, &traj, &alloc, DEFAULT_FEASIBILITY_TOL);
        assert!(
            !report
                .find(ConstraintKind::StartPoint, None)
                .unwrap()
                .passed
        );
    }

    #[test]
    fn scenario_validation() {
        let mut s = Scenario::reference();
        assert!(s.validate().is_ok());
        s.n_packets = 1;
        assert!(s.validate().is_err());
        let mut s = Scenario::reference();
        s.snr_gap = 0.5;
        assert!(s.validate().is_err());
        let mut s = Scenario::reference();
        s.altitude_m = 0.0;
        assert!(s.validate().is_err());
    }

    proptest! {
        #[test]
        fn throughput_increasing(d in 1e-3f64..100.0, e in 1e-6f64..10.0, g in 1e-2f64..1e4) {
            let r = rate(d, e, g);
            let h = 1e-6;
            prop_assert!(rate(d * (1.0 + h), e, g) > r);
            prop_assert!(rate(d, e * (1.0 + h), g) > r);
        }

        #[test]
        fn throughput_jointly_concave(
            d1 in 1e-3f64..50.0, e1 in 0.0f64..5.0,
            d2 in 1e-3f64..50.0, e2 in 0.0f64..5.0,
            t in 0.01f64..0.99, g in 1e-2f64..1e3,
        ) {
            let mid = rate(t * d1 + (1.0 - t) * d2, t * e1 + (1.0 - t) * e2, g);
            let chord = t * rate(d1, e1, g) + (1.0 - t) * rate(d2, e2, g);
            prop_assert!(mid >= chord - 1e-12 * (1.0 + chord.abs()));
        }

        #[test]
        fn gain_decreases_with_distance(r1 in 0.0f64..5e3, dr in 1e-3f64..5e3, h in 1.0f64..500.0) {
            let g = |r: f64| channel_gain(&Point::new(r, 0.0), &Point::default(), h, 1.0);
            prop_assert!(g(r1 + dr) < g(r1));
        }

        #[test]
        fn peak_aoi_ignores_split(d in proptest::collection::vec(0.01f64..10.0, 2..20), s in 0.0f64..1.0) {
            let a = Allocation {
                d_up: d.iter().map(|v| v * s).collect(),
                d_down: d.iter().map(|v| v * (1.0 - s)).collect(),
                e_up: vec![0.0; d.len()],
                e_down: vec![0.0; d.len()],
            };
            let direct = average_peak_aoi(&d).unwrap();
            prop_assert!((peak_aoi(&a).unwrap() - direct).abs() <= 1e-12 * direct);
        }
    }
}
