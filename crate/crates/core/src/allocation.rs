//! Energy and service-time allocation for a fixed trajectory.
//!
//! For a fixed trajectory the problem separates into an uplink and a
//! downlink problem of identical shape:
//!
//! ```text
//! minimise   (1/(N−1)) Σ c_i d_i          c_1 = c_N = 1, c_i = 2 otherwise
//! subject to d_i log₂(1 + γ_i E_i / d_i) ≥ S̄,  d_i ≥ θ_i,  Σ E_i ≤ budget
//! ```
//!
//! At the optimum every throughput constraint is tight, so `E_i` is a
//! function of `d_i` and only the service times remain. When the budget
//! covers the minimum-time energy every packet runs at `θ_i`. Otherwise the
//! budget binds and the optimal times come from the Lagrangian stationarity
//! condition `f(S̄/d_i) = c_i γ_i / (λ(N−1))`, with
//! `f(x) = 2^x (x ln2 − 1) + 1`; the multiplier `λ` is found by bisection on
//! the energy residual, which is non-increasing in `λ`.

use std::f64::consts::LN_2;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{
    self, energy_at, min_energy, theta_sequence, Allocation, MinEnergy, Phase, Scenario, Trajectory,
};

/// One half (uplink or downlink) of the allocation problem.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseProblem {
    pub thetas: Vec<f64>,
    pub gammas: Vec<f64>,
    pub s_bar: f64,
    pub budget: f64,
}

impl PhaseProblem {
    pub fn new(thetas: Vec<f64>, gammas: Vec<f64>, s_bar: f64, budget: f64) -> Result<Self> {
        if thetas.len() != gammas.len() {
            return Err(Error::InvalidScenario(format!(
                "{} thetas but {} gammas",
                thetas.len(),
                gammas.len()
            )));
        }
        if thetas.len() < 2 {
            return Err(Error::InvalidScenario("phase problem needs N >= 2".into()));
        }
        if let Some(g) = gammas.iter().find(|g| !(**g > 0.0 && g.is_finite())) {
            return Err(Error::Domain(format!("gamma must be positive, got {g}")));
        }
        if let Some(t) = thetas.iter().find(|t| !(**t >= 0.0 && t.is_finite())) {
            return Err(Error::Domain(format!(
                "theta must be non-negative, got {t}"
            )));
        }
        if !(s_bar > 0.0) || budget.is_nan() || budget < 0.0 {
            return Err(Error::Domain(format!(
                "bad s_bar {s_bar} or budget {budget}"
            )));
        }
        Ok(PhaseProblem {
            thetas,
            gammas,
            s_bar,
            budget,
        })
    }

    /// Builds the uplink or downlink problem for a trajectory.
    pub fn for_phase(scn: &Scenario, traj: &Trajectory, phase: Phase) -> Result<Self> {
        PhaseProblem::new(
            theta_sequence(traj, scn.v_max, phase),
            scn.gammas(traj, phase),
            scn.s_bar(),
            scn.budget(phase),
        )
    }

    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }

    /// Objective weight: packets at either end appear in one peak, the
    /// rest in two.
    pub fn weight(&self, i: usize) -> f64 {
        if i == 0 || i + 1 == self.len() {
            1.0
        } else {
            2.0
        }
    }

    pub fn min_energy(&self) -> MinEnergy {
        min_energy(&self.thetas, &self.gammas, self.s_bar)
    }

    /// This phase's contribution to the average peak AoI.
    pub fn objective(&self, d: &[f64]) -> f64 {
        let n = self.len();
        d.iter()
            .enumerate()
            .map(|(i, v)| self.weight(i) * v)
            .sum::<f64>()
            / (n - 1) as f64
    }

    /// Infimum of the energy needed as service times grow without bound,
    /// `Σ S̄ ln2 / γ_i`. Budgets at or below it cannot be met.
    pub fn energy_floor(&self) -> f64 {
        self.gammas.iter().map(|g| self.s_bar * LN_2 / g).sum()
    }

    fn energies(&self, d: &[f64]) -> Vec<f64> {
        d.iter()
            .zip(&self.gammas)
            .map(|(&d, &g)| energy_at(d, g, self.s_bar))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    MinTime,
    Dual,
}

/// Progress of the multiplier search. `residual` is the energy sub-gradient
/// `Σ E_i(λ) − budget`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DualState {
    pub lambda: f64,
    pub bracket: (f64, f64),
    pub residual: f64,
    pub iterations: usize,
    pub residual_history: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhaseSolution {
    pub d: Vec<f64>,
    pub e: Vec<f64>,
    /// `None` on the closed-form branch.
    pub lambda: Option<f64>,
    pub branch: Branch,
    pub dual: Option<DualState>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DualSettings {
    /// Stop when `|Σ E − budget| ≤ energy_tol · budget`.
    pub energy_tol: f64,
    /// Stop when the multiplier bracket is narrower than `width_tol · λ_hi`.
    pub width_tol: f64,
    pub lambda_lo: f64,
    /// Cap on `λ_hi` while bracketing.
    pub lambda_cap: f64,
    pub max_iter: usize,
    /// Relative tolerance for the inner `f(x) = ψ` solves.
    pub root_tol: f64,
}

impl Default for DualSettings {
    fn default() -> Self {
        DualSettings {
            energy_tol: 1e-8,
            width_tol: 1e-12,
            lambda_lo: 1e-12,
            lambda_cap: 2f64.powi(100),
            max_iter: 500,
            root_tol: 1e-12,
        }
    }
}

/// Minimum energy to deliver `s_bar` bits/Hz in time `d`.
pub fn energy_for_time(d: f64, gamma: f64, s_bar: f64) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::Domain(format!(
            "service time must be positive, got {d}"
        )));
    }
    if !(gamma > 0.0) {
        return Err(Error::Domain(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    Ok(energy_at(d, gamma, s_bar))
}

/// `f(x) = 2^x (x ln2 − 1) + 1`, strictly increasing on `x ≥ 0` with
/// `f(0) = 0`.
pub fn stationarity_f(x: f64) -> f64 {
    let u = x * LN_2;
    if u.abs() < 0.5 {
        // e^u (u − 1) + 1 = Σ_{k≥2} (k−1) u^k / k!
        let mut term = u; // u^k / k! for k = 1
        let mut sum = 0.0;
        for k in 2..40 {
            term *= u / k as f64;
            let add = (k - 1) as f64 * term;
            sum += add;
            if add.abs() <= 1e-18 * sum.abs() {
                break;
            }
        }
        sum
    } else {
        u * u.exp() - u.exp_m1()
    }
}

/// Solves `f(x) = ψ` for the unique `x > 0`.
///
/// Bisection on `[0, x_hi]`, with `x_hi` doubled until `f(x_hi) ≥ ψ`. Stops
/// when `|f(x) − ψ| ≤ tol · ψ`, when the bracket collapses to adjacent
/// floats, or after 200 halvings.
pub fn root_find_f(psi: f64, tol: f64) -> Result<f64> {
    if !(psi > 0.0) || !psi.is_finite() {
        return Err(Error::Domain(format!(
            "psi must be positive and finite, got {psi}"
        )));
    }
    let mut hi = 1.0;
    while stationarity_f(hi) < psi {
        hi *= 2.0;
    }
    let mut lo = if hi > 1.0 { hi / 2.0 } else { 0.0 };
    let mut best = hi;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = stationarity_f(mid);
        best = mid;
        if (fm - psi).abs() <= tol * psi {
            return Ok(mid);
        }
        if fm < psi {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // Bracket exhausted: pick the closer end.
    let pick = [lo, hi, best]
        .into_iter()
        .filter(|x| *x > 0.0)
        .min_by(|a, b| {
            (stationarity_f(*a) - psi)
                .abs()
                .total_cmp(&(stationarity_f(*b) - psi).abs())
        })
        .unwrap_or(hi);
    Ok(pick)
}

fn times_for(p: &PhaseProblem, lambda: f64, root_tol: f64) -> Result<Vec<f64>> {
    let scale = lambda * (p.len() - 1) as f64;
    (0..p.len())
        .map(|i| {
            let psi = p.weight(i) * p.gammas[i] / scale;
            let d = if psi.is_finite() {
                p.s_bar / root_find_f(psi, root_tol)?
            } else {
                0.0
            };
            Ok(p.thetas[i].max(d))
        })
        .collect::<Result<Vec<_>>>()
        .and_then(|d| {
            if d.iter().all(|v| *v > 0.0) {
                Ok(d)
            } else {
                Err(Error::Numeric(format!(
                    "multiplier {lambda} too small to resolve"
                )))
            }
        })
}

/// Minimisers of the Lagrangian for a fixed multiplier:
/// `d_i = max{θ_i, S̄ / x_i}` with `f(x_i) = c_i γ_i / (λ(N−1))`.
pub fn times_given_lambda(p: &PhaseProblem, lambda: f64) -> Result<Vec<f64>> {
    if !(lambda > 0.0) {
        return Err(Error::Domain(format!(
            "multiplier must be positive, got {lambda}"
        )));
    }
    times_for(p, lambda, DualSettings::default().root_tol)
}

/// Closed form when the budget covers the minimum-time energy: every packet
/// is served at its mobility-limited minimum time.
pub fn solve_min_time(p: &PhaseProblem) -> Result<PhaseSolution> {
    match p.min_energy() {
        MinEnergy::Finite(required) if p.budget >= required => Ok(PhaseSolution {
            d: p.thetas.clone(),
            e: p.energies(&p.thetas),
            lambda: None,
            branch: Branch::MinTime,
            dual: None,
        }),
        other => Err(Error::BudgetBelowMinimum {
            required: other.value(),
            budget: p.budget,
        }),
    }
}

/// Multiplier search for the energy-limited case.
///
/// When the budget turns out not to bind (it covers the minimum-time
/// energy) the multiplier is zero and the result coincides with
/// [`solve_min_time`], except that it is labelled as the dual branch.
pub fn solve_phase_dual(p: &PhaseProblem, s: &DualSettings) -> Result<PhaseSolution> {
    if !(p.budget > 0.0) {
        return Err(Error::Infeasible(format!(
            "energy budget {} leaves no way to deliver a packet",
            p.budget
        )));
    }
    let floor = p.energy_floor();
    if p.budget <= floor {
        return Err(Error::Infeasible(format!(
            "energy budget {} does not exceed {floor}, the least any service times can use",
            p.budget
        )));
    }
    if p.min_energy().covered_by(p.budget) {
        return Ok(PhaseSolution {
            d: p.thetas.clone(),
            e: p.energies(&p.thetas),
            lambda: Some(0.0),
            branch: Branch::Dual,
            dual: Some(DualState {
                lambda: 0.0,
                bracket: (0.0, 0.0),
                residual: p.min_energy().value() - p.budget,
                iterations: 0,
                residual_history: Vec::new(),
            }),
        });
    }

    let mut history = Vec::new();
    let mut eval = |lambda: f64| -> Result<(Vec<f64>, f64)> {
        let d = times_for(p, lambda, s.root_tol)?;
        let used: f64 = p.energies(&d).iter().sum();
        let r = used - p.budget;
        history.push(r);
        Ok((d, r))
    };

    let target = s.energy_tol * p.budget;

    // Lower end: energy use must exceed the budget.
    let mut lo = s.lambda_lo;
    let (mut d_lo, mut r_lo) = eval(lo)?;
    while r_lo < 0.0 && lo > 1e-290 {
        lo *= 1e-4;
        (d_lo, r_lo) = eval(lo)?;
    }
    if r_lo < 0.0 {
        // The budget binds only by a sliver that λ cannot resolve; the
        // smallest multiplier already fits.
        return Ok(finish(p, d_lo, lo, (lo, lo), r_lo, 0, history));
    }

    let mut hi = 1.0f64.max(lo);
    let (mut d_hi, mut r_hi) = eval(hi)?;
    while r_hi > 0.0 {
        if hi >= s.lambda_cap {
            return Err(Error::SolverStall {
                reason: format!("energy residual {r_hi} still positive at multiplier cap"),
                outer: 0,
                newton: 0,
                decrement: r_hi,
            });
        }
        lo = hi;
        d_lo = std::mem::take(&mut d_hi);
        r_lo = r_hi;
        hi *= 2.0;
        (d_hi, r_hi) = eval(hi)?;
    }
    if r_lo.abs() <= target {
        return Ok(finish(p, d_lo, lo, (lo, hi), r_lo, 0, history));
    }
    if r_hi.abs() <= target {
        return Ok(finish(p, d_hi, hi, (lo, hi), r_hi, 0, history));
    }

    let mut iterations = 0;
    while iterations < s.max_iter && hi - lo > s.width_tol * hi {
        iterations += 1;
        let mid = if hi / lo > 4.0 {
            (lo * hi).sqrt()
        } else {
            0.5 * (lo + hi)
        };
        let (d_mid, r_mid) = eval(mid)?;
        if r_mid.abs() <= target {
            return Ok(finish(p, d_mid, mid, (lo, hi), r_mid, iterations, history));
        }
        if r_mid > 0.0 {
            lo = mid;
        } else {
            hi = mid;
            d_hi = d_mid;
            r_hi = r_mid;
        }
    }
    // Bracket exhausted: the upper end never overspends.
    Ok(finish(p, d_hi, hi, (lo, hi), r_hi, iterations, history))
}

fn finish(
    p: &PhaseProblem,
    d: Vec<f64>,
    lambda: f64,
    bracket: (f64, f64),
    residual: f64,
    iterations: usize,
    residual_history: Vec<f64>,
) -> PhaseSolution {
    PhaseSolution {
        e: p.energies(&d),
        d,
        lambda: Some(lambda),
        branch: Branch::Dual,
        dual: Some(DualState {
            lambda,
            bracket,
            residual,
            iterations,
            residual_history,
        }),
    }
}

/// Closed form when it applies (including a budget exactly at the
/// minimum-time energy), multiplier search otherwise.
pub fn solve_phase(p: &PhaseProblem, s: &DualSettings) -> Result<PhaseSolution> {
    if p.min_energy().covered_by(p.budget) {
        solve_min_time(p)
    } else {
        solve_phase_dual(p, s)
    }
}

/// Stationarity residual `c_i + λ(N−1)/γ_i [2^{S̄/d_i}(1 − ln2 S̄/d_i) − 1]`
/// for each packet not pinned at its minimum time; `None` for pinned ones.
pub fn kkt_residuals(p: &PhaseProblem, sol: &PhaseSolution, clamp_tol: f64) -> Vec<Option<f64>> {
    let lambda = sol.lambda.unwrap_or(0.0);
    let scale = lambda * (p.len() - 1) as f64;
    (0..p.len())
        .map(|i| {
            let d = sol.d[i];
            if d <= p.thetas[i] + clamp_tol {
                return None;
            }
            let x = p.s_bar / d;
            // 2^x (1 − x ln2) − 1 = −f(x)
            Some(p.weight(i) - scale / p.gammas[i] * stationarity_f(x))
        })
        .collect()
}

/// Both phase solutions for a trajectory.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct P2Solution {
    pub up: PhaseSolution,
    pub down: PhaseSolution,
}

impl P2Solution {
    pub fn allocation(&self) -> Allocation {
        Allocation {
            d_up: self.up.d.clone(),
            d_down: self.down.d.clone(),
            e_up: self.up.e.clone(),
            e_down: self.down.e.clone(),
        }
    }
}

/// Optimal energies and service times for a fixed trajectory.
pub fn solve_p2(scn: &Scenario, traj: &Trajectory) -> Result<Allocation> {
    solve_p2_detailed(scn, traj, &DualSettings::default()).map(|s| s.allocation())
}

pub fn solve_p2_detailed(
    scn: &Scenario,
    traj: &Trajectory,
    s: &DualSettings,
) -> Result<P2Solution> {
    scn.validate()?;
    if traj.len() != scn.n_packets {
        return Err(Error::InvalidScenario(format!(
            "trajectory has {} packets, scenario has {}",
            traj.len(),
            scn.n_packets
        )));
    }
    let up = PhaseProblem::for_phase(scn, traj, Phase::Up)?;
    let down = PhaseProblem::for_phase(scn, traj, Phase::Down)?;
    let (up, down) = rayon::join(|| solve_phase(&up, s), || solve_phase(&down, s));
    let tag = |phase: Phase| {
        move |e: Error| match e {
            Error::Infeasible(msg) => Error::Infeasible(format!("{} phase: {msg}", phase.as_str())),
            other => other,
        }
    };
    Ok(P2Solution {
        up: up.map_err(tag(Phase::Up))?,
        down: down.map_err(tag(Phase::Down))?,
    })
}

/// Average PAoI of the optimal allocation on a trajectory.
pub fn p2_objective(scn: &Scenario, traj: &Trajectory) -> Result<f64> {
    model::peak_aoi(&solve_p2(scn, traj)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::straight_baseline;
    use crate::model::rate;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn phase(thetas: &[f64], gammas: &[f64], s_bar: f64, budget: f64) -> PhaseProblem {
        PhaseProblem::new(thetas.to_vec(), gammas.to_vec(), s_bar, budget).unwrap()
    }

    #[test]
    fn energy_for_time_examples() {
        assert!((energy_for_time(2.5, 1.0, 2.5).unwrap() - 2.5).abs() < 1e-14);
        let s = 1.7;
        let g = 3.0;
        let far = energy_for_time(1e6 * s, g, s).unwrap();
        let limit = s * LN_2 / g;
        assert!((far - limit).abs() <= 1e-4 * limit);
        for &(d, g, s) in &[(0.3, 10.0, 1.0), (5.0, 0.2, 2.0), (1e-2, 1e3, 0.05)] {
            let e = energy_for_time(d, g, s).unwrap();
            assert!((rate(d, e, g) - s).abs() <= 1e-12 * s);
        }
        assert!(matches!(
            energy_for_time(0.0, 1.0, 1.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn stationarity_f_series_matches_closed_form() {
        for &x in &[0.5 / LN_2 * 0.999, 0.5 / LN_2 * 1.001] {
            let u = x * LN_2;
            let closed = u * u.exp() - u.exp_m1();
            assert!((stationarity_f(x) - closed).abs() <= 1e-14 * closed);
        }
        assert_eq!(stationarity_f(0.0), 0.0);
    }

    #[test]
    fn root_find_examples() {
        let psi1 = 2.0 * LN_2 - 1.0;
        assert!((root_find_f(psi1, 1e-12).unwrap() - 1.0).abs() < 1e-10);
        let psi5 = 32.0 * (5.0 * LN_2 - 1.0) + 1.0;
        assert!((psi5 - 79.9035).abs() < 1e-4);
        assert!((root_find_f(psi5, 1e-12).unwrap() - 5.0).abs() < 1e-10);
        let x = root_find_f(1e-9, 1e-12).unwrap();
        assert!(x > 0.0 && (stationarity_f(x) - 1e-9).abs() <= 1e-12 * 1e-9);
        assert!(matches!(root_find_f(0.0, 1e-12), Err(Error::Domain(_))));
        assert!(matches!(root_find_f(-1.0, 1e-12), Err(Error::Domain(_))));
    }

    #[test]
    fn min_time_examples() {
        let p = phase(&[1.0, 1.0], &[1.0, 1.0], 1.0, 2.0);
        let sol = solve_min_time(&p).unwrap();
        assert_eq!(sol.d, vec![1.0, 1.0]);
        assert!(sol.e.iter().all(|e| (e - 1.0).abs() < 1e-15));
        assert_eq!(sol.branch, Branch::MinTime);

        let p = phase(&[1.0, 0.0], &[1.0, 1.0], 1.0, 100.0);
        assert!(matches!(
            solve_min_time(&p),
            Err(Error::BudgetBelowMinimum { .. })
        ));
    }

    #[test]
    fn min_time_reference_uplink() {
        let scn = Scenario {
            e_source_j: 100.0,
            ..Scenario::reference()
        };
        let q = straight_baseline(&scn);
        let p = PhaseProblem::for_phase(&scn, &q, Phase::Up).unwrap();
        let sol = solve_phase(&p, &DualSettings::default()).unwrap();
        assert_eq!(sol.branch, Branch::MinTime);
        assert!(sol.d.iter().all(|d| (d - 1.68421).abs() < 1e-5));
    }

    #[test]
    fn times_given_lambda_limits() {
        let p = phase(&[0.5, 0.2, 0.1], &[3.0, 1.0, 7.0], 1.0, 1.0);
        let small = times_given_lambda(&p, 1e-9).unwrap();
        assert!(small
            .iter()
            .zip(&p.thetas)
            .all(|(d, t)| (d - t).abs() < 1e-12));
        assert!(matches!(times_given_lambda(&p, 0.0), Err(Error::Domain(_))));

        let p = phase(&[0.0, 0.0], &[5.0, 2.0], 1.0, 1.0);
        let d = times_given_lambda(&p, 0.3).unwrap();
        assert!(d[0] < d[1]);
    }

    #[test]
    fn times_increase_with_lambda() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let n = rng.random_range(2..8);
            let thetas: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
            let gammas: Vec<f64> = (0..n)
                .map(|_| 10f64.powf(rng.random_range(-1.0..3.0)))
                .collect();
            let p = phase(&thetas, &gammas, rng.random_range(0.2..3.0), 1.0);
            let mut prev: Option<(Vec<f64>, f64)> = None;
            for k in 0..50 {
                let lambda = 10f64.powf(-4.0 + 8.0 * k as f64 / 49.0);
                let d = times_given_lambda(&p, lambda).unwrap();
                let used: f64 = p.energies(&d).iter().sum();
                if let Some((pd, pe)) = &prev {
                    assert!(d.iter().zip(pd).all(|(a, b)| *a >= *b));
                    assert!(used <= *pe * (1.0 + 1e-12));
                }
                prev = Some((d, used));
            }
        }
    }

    #[test]
    fn dual_symmetric_two_packets() {
        let p = phase(&[0.0, 0.0], &[1.0, 1.0], 1.0, 1.5);
        let sol = solve_phase_dual(&p, &DualSettings::default()).unwrap();
        assert_eq!(sol.branch, Branch::Dual);
        assert!((sol.d[0] - sol.d[1]).abs() < 1e-9);
        assert!((sol.e[0] - 0.75).abs() < 1e-8 && (sol.e[1] - 0.75).abs() < 1e-8);
        // d (2^{1/d} − 1) = 0.75, solved independently by bisection on d.
        let (mut lo, mut hi) = (0.5f64, 50.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid * (2f64.powf(1.0 / mid) - 1.0) > 0.75 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((sol.d[0] - lo).abs() < 1e-7, "{} vs {}", sol.d[0], lo);

        // Budget 2 gives d (2^{1/d} − 1) = 1, whose root is d = 1.
        let sol = solve_phase_dual(
            &phase(&[0.0, 0.0], &[1.0, 1.0], 1.0, 2.0),
            &DualSettings::default(),
        )
        .unwrap();
        assert!(
            (sol.d[0] - 1.0).abs() < 1e-7 && (sol.d[1] - 1.0).abs() < 1e-7,
            "{:?}",
            sol.d
        );
    }

    #[test]
    fn dual_rejects_budget_at_shannon_floor() {
        // Each packet needs more than ln2 however long it is served.
        let p = phase(&[0.0, 0.0], &[1.0, 1.0], 1.0, 1.0);
        assert!(matches!(
            solve_phase_dual(&p, &DualSettings::default()),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn dual_meets_budget_and_tight_throughput() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..30 {
            let n = rng.random_range(2..12);
            let thetas: Vec<f64> = (0..n)
                .map(|_| {
                    if rng.random_bool(0.2) {
                        0.0
                    } else {
                        rng.random_range(0.3..2.0)
                    }
                })
                .collect();
            let gammas: Vec<f64> = (0..n)
                .map(|_| 10f64.powf(rng.random_range(0.0..3.0)))
                .collect();
            let s_bar = rng.random_range(0.5..2.0);
            let emin = min_energy(&thetas, &gammas, s_bar).value();
            let floor = phase(&thetas, &gammas, s_bar, 1.0).energy_floor();
            let budget = if emin.is_finite() {
                floor + (emin - floor) * rng.random_range(0.05..0.95)
            } else {
                floor * rng.random_range(1.01..3.0)
            };
            let p = phase(&thetas, &gammas, s_bar, budget);
            let sol = solve_phase_dual(&p, &DualSettings::default()).unwrap();
            let used: f64 = sol.e.iter().sum();
            assert!((used - budget).abs() <= 1e-8 * budget, "{used} vs {budget}");
            for i in 0..n {
                assert!(sol.d[i] >= thetas[i]);
                assert!((rate(sol.d[i], sol.e[i], gammas[i]) - s_bar).abs() <= 1e-10 * s_bar);
            }
            for r in kkt_residuals(&p, &sol, 1e-9).into_iter().flatten() {
                assert!(r.abs() <= 1e-6, "kkt residual {r}");
            }
        }
    }

    #[test]
    fn dual_rejects_empty_budget() {
        let p = phase(&[0.0, 0.0], &[1.0, 1.0], 1.0, 0.0);
        assert!(matches!(
            solve_phase_dual(&p, &DualSettings::default()),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn scaling_gamma_and_budget() {
        let p = phase(&[0.1, 0.4, 0.0], &[2.0, 9.0, 4.0], 1.3, 1.5);
        let k = 37.0;
        let q = phase(
            &p.thetas,
            &p.gammas.iter().map(|g| g * k).collect::<Vec<_>>(),
            1.3,
            1.5 / k,
        );
        let a = solve_phase(&p, &DualSettings::default()).unwrap();
        let b = solve_phase(&q, &DualSettings::default()).unwrap();
        for (x, y) in a.d.iter().zip(&b.d) {
            assert!((x - y).abs() <= 1e-7 * x);
        }
    }

    #[test]
    fn p2_reference_branches() {
        let scn = Scenario {
            e_source_j: 100.0,
            e_uav_j: 100.0,
            ..Scenario::reference()
        };
        let q = straight_baseline(&scn);
        let sol = solve_p2_detailed(&scn, &q, &DualSettings::default()).unwrap();
        assert_eq!(sol.up.branch, Branch::MinTime);
        assert_eq!(sol.down.branch, Branch::Dual);
        let report = model::check_feasible(&scn, &q, &sol.allocation(), 1e-7);
        assert!(report.passed());
    }

    #[test]
    fn p2_infeasible_budget() {
        let scn = Scenario {
            e_uav_j: 0.0,
            ..Scenario::reference()
        };
        let q = straight_baseline(&scn);
        assert!(matches!(solve_p2(&scn, &q), Err(Error::Infeasible(_))));
    }
}
