//! Small dense log-barrier solver for convex QCQPs of the form
//!
//! ```text
//! maximise cᵀz   subject to   zᵀA_k z + b_kᵀz + d_k ≤ 0,  A_k ⪰ 0
//! ```
//!
//! with some components of `z` pinned to fixed values. Pinned components are
//! substituted out before solving. Each centering step is a damped Newton
//! iteration on `t·(−cᵀz) − Σ log(−g_k(z))` with a backtracking line search
//! that never leaves the strict interior; `t` grows by `μ` until the duality
//! gap bound `m/t` drops below `ε`.
//!
//! Matrices are stored sparsely (upper-triangle triplets) because the
//! trajectory subproblems only couple pairs of coordinates, but every linear
//! solve is a dense Cholesky on the free variables.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// `zᵀAz + bᵀz + d ≤ 0`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct QuadConstraint {
    /// Upper-triangular entries `(i, j, a_ij)` with `i ≤ j`; off-diagonal
    /// entries stand for both `a_ij` and `a_ji`.
    pub quad: Vec<(usize, usize, f64)>,
    pub lin: Vec<(usize, f64)>,
    pub constant: f64,
}

impl QuadConstraint {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `v` to `a_ij` (and `a_ji`).
    pub fn quad(mut self, i: usize, j: usize, v: f64) -> Self {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        self.quad.push((i, j, v));
        self
    }

    pub fn lin(mut self, i: usize, v: f64) -> Self {
        self.lin.push((i, v));
        self
    }

    pub fn constant(mut self, v: f64) -> Self {
        self.constant += v;
        self
    }

    pub fn eval(&self, z: &[f64]) -> f64 {
        let mut v = self.constant;
        for &(i, j, a) in &self.quad {
            v += if i == j {
                a * z[i] * z[i]
            } else {
                2.0 * a * z[i] * z[j]
            };
        }
        for &(i, b) in &self.lin {
            v += b * z[i];
        }
        v
    }

    fn max_index(&self) -> Option<usize> {
        self.quad
            .iter()
            .map(|&(_, j, _)| j)
            .chain(self.lin.iter().map(|&(i, _)| i))
            .max()
    }

    /// Smallest eigenvalue and Frobenius norm of `A` restricted to the
    /// coordinates it touches.
    fn spectrum_floor(&self) -> (f64, f64) {
        let mut idx: Vec<usize> = self.quad.iter().flat_map(|&(i, j, _)| [i, j]).collect();
        idx.sort_unstable();
        idx.dedup();
        if idx.is_empty() {
            return (0.0, 0.0);
        }
        let pos = |k: usize| idx.binary_search(&k).unwrap();
        let mut a = DMatrix::<f64>::zeros(idx.len(), idx.len());
        for &(i, j, v) in &self.quad {
            let (p, q) = (pos(i), pos(j));
            a[(p, q)] += v;
            if p != q {
                a[(q, p)] += v;
            }
        }
        let norm = a.norm();
        let min = a.symmetric_eigen().eigenvalues.min();
        (min, norm)
    }
}

/// Linear objective, convex quadratic constraints, optional pinned
/// components.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Qcqp {
    pub dim: usize,
    /// Maximised: `cᵀz`.
    pub objective: Vec<f64>,
    pub constraints: Vec<QuadConstraint>,
    pub fixed: BTreeMap<usize, f64>,
}

impl Qcqp {
    pub fn new(dim: usize) -> Self {
        Qcqp {
            dim,
            objective: vec![0.0; dim],
            constraints: Vec::new(),
            fixed: BTreeMap::new(),
        }
    }

    pub fn maximize(mut self, i: usize, c: f64) -> Self {
        self.objective[i] += c;
        self
    }

    pub fn push(&mut self, c: QuadConstraint) {
        self.constraints.push(c);
    }

    pub fn with(mut self, c: QuadConstraint) -> Self {
        self.push(c);
        self
    }

    pub fn fix(&mut self, i: usize, v: f64) {
        self.fixed.insert(i, v);
    }

    pub fn free_dim(&self) -> usize {
        self.dim - self.fixed.len()
    }

    /// Checks dimensions and that every `A_k` is positive semidefinite
    /// (smallest eigenvalue ≥ −1e−10·‖A_k‖).
    pub fn validate(&self) -> Result<()> {
        if self.objective.len() != self.dim {
            return Err(Error::Domain(
                "objective length differs from dimension".into(),
            ));
        }
        if self.fixed.keys().any(|&i| i >= self.dim) {
            return Err(Error::Domain("fixed index out of range".into()));
        }
        for (k, c) in self.constraints.iter().enumerate() {
            if c.max_index().is_some_and(|i| i >= self.dim) {
                return Err(Error::Domain(format!(
                    "constraint {k} indexes past dimension"
                )));
            }
            let (min, norm) = c.spectrum_floor();
            if min < -1e-10 * norm {
                return Err(Error::Domain(format!(
                    "constraint {k} is not convex (eigenvalue {min:e})"
                )));
            }
        }
        Ok(())
    }

    /// Constraint values at a full-length point.
    pub fn values(&self, z: &[f64]) -> Vec<f64> {
        self.constraints.iter().map(|c| c.eval(z)).collect()
    }

    pub fn objective_value(&self, z: &[f64]) -> f64 {
        self.objective.iter().zip(z).map(|(c, z)| c * z).sum()
    }

    /// Slack margin demanded of a strictly feasible point.
    pub fn slack_margin(c: &QuadConstraint) -> f64 {
        1e-9 * (1.0 + c.constant.abs())
    }

    fn reduce(&self) -> Reduced {
        let mut map = vec![usize::MAX; self.dim];
        let mut free = Vec::with_capacity(self.free_dim());
        for (i, slot) in map.iter_mut().enumerate() {
            if !self.fixed.contains_key(&i) {
                *slot = free.len();
                free.push(i);
            }
        }
        let constraints = self
            .constraints
            .iter()
            .map(|c| {
                let mut out = QuadConstraint::new().constant(c.constant);
                let mut lin: BTreeMap<usize, f64> = BTreeMap::new();
                for &(i, j, a) in &c.quad {
                    match (self.fixed.get(&i), self.fixed.get(&j)) {
                        (None, None) => out.quad.push((map[i], map[j], a)),
                        (None, Some(&zj)) => *lin.entry(map[i]).or_default() += 2.0 * a * zj,
                        (Some(&zi), None) => *lin.entry(map[j]).or_default() += 2.0 * a * zi,
                        (Some(&zi), Some(&zj)) => {
                            out.constant += if i == j {
                                a * zi * zi
                            } else {
                                2.0 * a * zi * zj
                            }
                        }
                    }
                }
                for &(i, b) in &c.lin {
                    match self.fixed.get(&i) {
                        None => *lin.entry(map[i]).or_default() += b,
                        Some(&zi) => out.constant += b * zi,
                    }
                }
                out.lin = lin.into_iter().collect();
                SparseRow::new(out)
            })
            .collect();
        Reduced {
            c: DVector::from_iterator(free.len(), free.iter().map(|&i| self.objective[i])),
            constraints,
            free,
        }
    }

    fn expand(&self, free: &[usize], y: &DVector<f64>) -> Vec<f64> {
        let mut z = vec![0.0; self.dim];
        for (&i, &v) in &self.fixed {
            z[i] = v;
        }
        for (k, &i) in free.iter().enumerate() {
            z[i] = y[k];
        }
        z
    }
}

struct SparseRow {
    c: QuadConstraint,
    support: Vec<usize>,
}

impl SparseRow {
    fn new(c: QuadConstraint) -> Self {
        let mut support: Vec<usize> = c
            .quad
            .iter()
            .flat_map(|&(i, j, _)| [i, j])
            .chain(c.lin.iter().map(|&(i, _)| i))
            .collect();
        support.sort_unstable();
        support.dedup();
        SparseRow { c, support }
    }

    fn eval(&self, y: &DVector<f64>) -> f64 {
        self.c.eval(y.as_slice())
    }

    /// Gradient entries on the support, in support order.
    fn grad(&self, y: &DVector<f64>, out: &mut Vec<f64>) {
        out.clear();
        out.resize(self.support.len(), 0.0);
        let pos = |k: usize| self.support.binary_search(&k).unwrap();
        for &(i, j, a) in &self.c.quad {
            if i == j {
                out[pos(i)] += 2.0 * a * y[i];
            } else {
                out[pos(i)] += 2.0 * a * y[j];
                out[pos(j)] += 2.0 * a * y[i];
            }
        }
        for &(i, b) in &self.c.lin {
            out[pos(i)] += b;
        }
    }
}

struct Reduced {
    c: DVector<f64>,
    constraints: Vec<SparseRow>,
    free: Vec<usize>,
}

impl Reduced {
    fn dim(&self) -> usize {
        self.c.len()
    }

    /// Barrier value, or `None` outside the strict interior.
    fn phi(&self, t: f64, y: &DVector<f64>) -> Option<f64> {
        let mut v = -t * self.c.dot(y);
        for row in &self.constraints {
            let g = row.eval(y);
            if !(g < 0.0) {
                return None;
            }
            v -= (-g).ln();
        }
        v.is_finite().then_some(v)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BarrierSettings {
    pub t0: f64,
    pub mu: f64,
    /// Target for the duality gap bound `m/t`.
    pub eps: f64,
    /// Centering stops when `λ²/2` falls below this.
    pub newton_tol: f64,
    pub max_newton: usize,
    /// Armijo fraction.
    pub alpha: f64,
    /// Backtracking factor.
    pub beta: f64,
}

impl Default for BarrierSettings {
    fn default() -> Self {
        BarrierSettings {
            t0: 1.0,
            mu: 10.0,
            eps: 1e-8,
            newton_tol: 1e-10,
            max_newton: 100,
            alpha: 0.25,
            beta: 0.5,
        }
    }
}

impl BarrierSettings {
    pub fn validate(&self) -> Result<()> {
        let ok = self.t0 > 0.0
            && self.mu > 1.0
            && self.eps > 0.0
            && self.newton_tol > 0.0
            && self.max_newton > 0
            && self.alpha > 0.0
            && self.alpha < 0.5
            && self.beta > 0.0
            && self.beta < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("invalid barrier settings {self:?}")))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BarrierReport {
    /// Full-length solution, fixed components included.
    pub z: Vec<f64>,
    pub objective: f64,
    /// Duality gap bound `m / t` at exit.
    pub gap: f64,
    pub outer_iterations: usize,
    pub newton_iterations: usize,
    /// Newton decrement `λ` at each step of each centering loop.
    pub decrements: Vec<Vec<f64>>,
}

enum Exit {
    Done,
    Stopped,
}

struct Centering {
    y: DVector<f64>,
    decrements: Vec<f64>,
    steps: usize,
    exit: Exit,
}

fn newton_direction(h: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    if let Some(ch) = h.clone().cholesky() {
        return Ok(ch.solve(rhs));
    }
    let n = h.nrows().max(1);
    let mut reg = (1e-12 * h.trace().abs() / n as f64).max(1e-300);
    for _ in 0..40 {
        let mut hr = h.clone();
        for i in 0..h.nrows() {
            hr[(i, i)] += reg;
        }
        if let Some(ch) = hr.cholesky() {
            return Ok(ch.solve(rhs));
        }
        reg *= 10.0;
    }
    Err(Error::Numeric(
        "Newton system could not be factorised".into(),
    ))
}

fn center(
    r: &Reduced,
    s: &BarrierSettings,
    t: f64,
    mut y: DVector<f64>,
    outer: usize,
    stop: &dyn Fn(&DVector<f64>) -> bool,
) -> Result<Centering> {
    let n = r.dim();
    let mut decrements = Vec::new();
    let mut grad_buf = Vec::new();
    for step in 0..s.max_newton {
        let mut grad = -t * &r.c;
        let mut hess = DMatrix::<f64>::zeros(n, n);
        for row in &r.constraints {
            let g = row.eval(&y);
            let inv = -1.0 / g;
            row.grad(&y, &mut grad_buf);
            for (a, &i) in row.support.iter().enumerate() {
                grad[i] += inv * grad_buf[a];
                for (b, &j) in row.support.iter().enumerate() {
                    hess[(i, j)] += inv * inv * grad_buf[a] * grad_buf[b];
                }
            }
            for &(i, j, a) in &row.c.quad {
                hess[(i, j)] += 2.0 * inv * a;
                if i != j {
                    hess[(j, i)] += 2.0 * inv * a;
                }
            }
        }
        if grad.iter().chain(hess.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite barrier derivatives at t = {t}"
            )));
        }
        let dir = newton_direction(&hess, &(-&grad))?;
        let lambda_sq = -grad.dot(&dir);
        if !lambda_sq.is_finite() {
            return Err(Error::Numeric("non-finite Newton decrement".into()));
        }
        let prev = decrements.last().map(|l: &f64| l * l);
        decrements.push(lambda_sq.max(0.0).sqrt());
        // Below 1e-6 the decrement is at the level of rounding in the
        // gradient once it stops shrinking quadratically.
        let stalled = lambda_sq < 1e-6 && prev.is_some_and(|p| lambda_sq > 0.25 * p);
        if lambda_sq / 2.0 <= s.newton_tol || stalled {
            return Ok(Centering {
                y,
                decrements,
                steps: step,
                exit: Exit::Done,
            });
        }

        // The log barrier is self-concordant: inside λ < 1/4 the full step
        // stays feasible and decreases φ, more reliably than φ can show.
        let full = &y + &dir;
        let accepted = if lambda_sq < 0.0625 && r.phi(t, &full).is_some() {
            Some(full)
        } else {
            let phi0 = r
                .phi(t, &y)
                .ok_or_else(|| Error::Numeric("iterate left the interior".into()))?;
            let slack = 1e-15 * (1.0 + phi0.abs());
            let mut size = 1.0;
            let mut found = None;
            while size > 1e-20 {
                let cand = &y + size * &dir;
                if let Some(phi) = r.phi(t, &cand) {
                    if phi <= phi0 - s.alpha * size * lambda_sq + slack {
                        found = Some(cand);
                        break;
                    }
                }
                size *= s.beta;
            }
            found
        };
        match accepted {
            Some(next) => y = next,
            // Roundoff floor reached close to the centre.
            None if lambda_sq < 1e-6 => {
                return Ok(Centering {
                    y,
                    decrements,
                    steps: step,
                    exit: Exit::Done,
                })
            }
            None => {
                return Err(Error::SolverStall {
                    reason: "line search found no decrease".into(),
                    outer,
                    newton: step,
                    decrement: lambda_sq.sqrt(),
                })
            }
        }
        if stop(&y) {
            return Ok(Centering {
                y,
                decrements,
                steps: step + 1,
                exit: Exit::Stopped,
            });
        }
    }
    Err(Error::SolverStall {
        reason: format!(
            "centering did not converge in {} Newton steps",
            s.max_newton
        ),
        outer,
        newton: s.max_newton,
        decrement: decrements.last().copied().unwrap_or(f64::NAN),
    })
}

struct PathResult {
    y: DVector<f64>,
    report: BarrierReport,
}

fn follow_path(
    r: &Reduced,
    s: &BarrierSettings,
    y0: DVector<f64>,
    stop: &dyn Fn(&DVector<f64>) -> bool,
) -> Result<PathResult> {
    let m = r.constraints.len() as f64;
    let mut t = s.t0;
    let mut y = y0;
    let mut report = BarrierReport {
        z: Vec::new(),
        objective: f64::NAN,
        gap: f64::INFINITY,
        outer_iterations: 0,
        newton_iterations: 0,
        decrements: Vec::new(),
    };
    loop {
        let c = match center(r, s, t, y.clone(), report.outer_iterations, stop) {
            Ok(c) => c,
            // Rounding can stall centering at very large t; an earlier
            // centre that is already accurate is reported with its own gap.
            Err(Error::SolverStall { .. }) if report.gap <= 1e-6 => {
                return Ok(PathResult { y, report });
            }
            Err(e) => return Err(e),
        };
        y = c.y;
        report.outer_iterations += 1;
        report.newton_iterations += c.steps;
        report.decrements.push(c.decrements);
        report.gap = m / t;
        if matches!(c.exit, Exit::Stopped) {
            return Ok(PathResult { y, report });
        }
        if m == 0.0 || m / t <= s.eps {
            return Ok(PathResult { y, report });
        }
        t *= s.mu;
        if report.outer_iterations > 200 {
            return Err(Error::SolverStall {
                reason: "barrier weight did not reach the gap target".into(),
                outer: report.outer_iterations,
                newton: report.newton_iterations,
                decrement: f64::NAN,
            });
        }
    }
}

/// Solves from a strictly feasible start.
pub fn solve(q: &Qcqp, s: &BarrierSettings, start: &[f64]) -> Result<BarrierReport> {
    s.validate()?;
    q.validate()?;
    if start.len() != q.dim {
        return Err(Error::Domain(format!(
            "start has length {}, expected {}",
            start.len(),
            q.dim
        )));
    }
    let r = q.reduce();
    let y0 = DVector::from_iterator(r.free.len(), r.free.iter().map(|&i| start[i]));
    if r.constraints.iter().any(|row| !(row.eval(&y0) < 0.0)) {
        return Err(Error::Domain("start point is not strictly feasible".into()));
    }
    let out = follow_path(&r, s, y0, &|_| false)?;
    let mut report = out.report;
    report.z = q.expand(&r.free, &out.y);
    report.objective = q.objective_value(&report.z);
    Ok(report)
}

/// A point with every constraint at most `−1e−9·(1 + |d_k|)`.
///
/// Tries the hint, then the hint pulled back against the objective
/// direction, then a phase-I barrier solve minimising the largest
/// (margin-adjusted) constraint value.
pub fn strictly_feasible_start(q: &Qcqp, hint: &[f64]) -> Result<Vec<f64>> {
    q.validate()?;
    if hint.len() != q.dim {
        return Err(Error::Domain(format!(
            "hint has length {}, expected {}",
            hint.len(),
            q.dim
        )));
    }
    let mut hint = hint.to_vec();
    for (&i, &v) in &q.fixed {
        hint[i] = v;
    }
    let margins: Vec<f64> = q.constraints.iter().map(Qcqp::slack_margin).collect();
    let strictly = |z: &[f64]| {
        q.constraints
            .iter()
            .zip(&margins)
            .all(|(c, m)| c.eval(z) <= -m)
    };
    if strictly(&hint) {
        return Ok(hint);
    }

    // Pull back along −c (only touches free components).
    let free_c: Vec<f64> = (0..q.dim)
        .map(|i| {
            if q.fixed.contains_key(&i) {
                0.0
            } else {
                q.objective[i]
            }
        })
        .collect();
    let c_norm = free_c.iter().map(|v| v * v).sum::<f64>().sqrt();
    if c_norm > 0.0 {
        let base = 1e-6 * (1.0 + hint.iter().fold(0.0f64, |a, v| a.max(v.abs())));
        for k in 0..60 {
            let delta = base * 2f64.powi(k);
            let cand: Vec<f64> = hint
                .iter()
                .zip(&free_c)
                .map(|(z, c)| z - delta * c / c_norm)
                .collect();
            if strictly(&cand) {
                return Ok(cand);
            }
        }
    }

    // Phase I: maximise −s subject to g_k(z) + margin_k − s ≤ 0.
    let n = q.dim;
    let mut phase1 = Qcqp::new(n + 1).maximize(n, -1.0);
    phase1.fixed = q.fixed.clone();
    for (c, m) in q.constraints.iter().zip(&margins) {
        phase1.push(c.clone().constant(*m).lin(n, -1.0));
    }
    // Ball around the hint keeps the phase-I barrier bounded in directions
    // no constraint limits (e.g. an auxiliary epigraph variable).
    let radius = 1e3 * (1.0 + hint.iter().fold(0.0f64, |a, v| a.max(v.abs())));
    let mut ball = QuadConstraint::new().constant(-radius * radius);
    for i in (0..n).filter(|i| !q.fixed.contains_key(i)) {
        ball = ball
            .quad(i, i, 1.0)
            .lin(i, -2.0 * hint[i])
            .constant(hint[i] * hint[i]);
    }
    phase1.push(ball);
    let worst = q
        .constraints
        .iter()
        .zip(&margins)
        .map(|(c, m)| c.eval(&hint) + m)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut start = hint.clone();
    start.push(worst + 1.0 + 0.5 * worst.abs());

    let r = phase1.reduce();
    let s_idx = r.free.len() - 1;
    let y0 = DVector::from_iterator(r.free.len(), r.free.iter().map(|&i| start[i]));
    let settings = BarrierSettings {
        max_newton: 200,
        ..BarrierSettings::default()
    };
    let stop = |y: &DVector<f64>| y[s_idx] < 0.0;
    let best = match follow_path(&r, &settings, y0, &stop) {
        Ok(out) => out.y,
        Err(Error::SolverStall { .. }) | Err(Error::Numeric(_)) => {
            return Err(Error::InfeasibleSubproblem {
                best_violation: worst,
            })
        }
        Err(e) => return Err(e),
    };
    let z: Vec<f64> = phase1.expand(&r.free, &best)[..n].to_vec();
    if strictly(&z) {
        Ok(z)
    } else {
        let best_violation = q
            .constraints
            .iter()
            .zip(&margins)
            .map(|(c, m)| c.eval(&z) + m)
            .fold(f64::NEG_INFINITY, f64::max);
        Err(Error::InfeasibleSubproblem { best_violation })
    }
}

/// Finds a strictly feasible start from `hint` and solves.
pub fn solve_from_hint(q: &Qcqp, s: &BarrierSettings, hint: &[f64]) -> Result<BarrierReport> {
    let start = strictly_feasible_start(q, hint)?;
    solve(q, s, &start)
}
