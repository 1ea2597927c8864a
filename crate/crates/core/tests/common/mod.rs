//! Test-only oracles: 256-bit reference arithmetic and a brute-force
//! minimiser for the single-phase allocation problem.
#![allow(dead_code)]

use astro_float::{BigFloat, Consts, RoundingMode};

const P: usize = 256;
const RM: RoundingMode = RoundingMode::ToEven;

pub struct Big {
    cc: Consts,
}

impl Default for Big {
    fn default() -> Self {
        Big {
            cc: Consts::new().expect("astro-float constants"),
        }
    }
}

pub type B = BigFloat;

impl Big {
    pub fn n(&self, x: f64) -> B {
        BigFloat::from_f64(x, P)
    }
    pub fn add(&self, a: &B, b: &B) -> B {
        a.add(b, P, RM)
    }
    pub fn sub(&self, a: &B, b: &B) -> B {
        a.sub(b, P, RM)
    }
    pub fn mul(&self, a: &B, b: &B) -> B {
        a.mul(b, P, RM)
    }
    pub fn div(&self, a: &B, b: &B) -> B {
        a.div(b, P, RM)
    }
    pub fn ln(&mut self, a: &B) -> B {
        a.ln(P, RM, &mut self.cc)
    }
    pub fn exp(&mut self, a: &B) -> B {
        a.exp(P, RM, &mut self.cc)
    }
    pub fn ln2(&mut self) -> B {
        let two = self.n(2.0);
        self.ln(&two)
    }
    pub fn f(&self, a: &B) -> f64 {
        format!("{a}")
            .parse()
            .expect("big float formats as a decimal")
    }

    /// `d log₂(1 + γE/d)`
    pub fn rate(&mut self, d: f64, e: f64, gamma: f64) -> f64 {
        let (d, e, g) = (self.n(d), self.n(e), self.n(gamma));
        let snr = self.div(&self.mul(&g, &e), &d);
        let one = self.n(1.0);
        let l = self.ln(&self.add(&one, &snr));
        let ln2 = self.ln2();
        let v = self.div(&self.mul(&d, &l), &ln2);
        self.f(&v)
    }

    /// `ν₀ / (h² + Δx² + Δy²)`
    pub fn gain(&self, dx: f64, dy: f64, h: f64, nu0: f64) -> f64 {
        let (dx, dy, h) = (self.n(dx), self.n(dy), self.n(h));
        let den = self.add(
            &self.add(&self.mul(&h, &h), &self.mul(&dx, &dx)),
            &self.mul(&dy, &dy),
        );
        self.f(&self.div(&self.n(nu0), &den))
    }

    /// `d/γ (2^{S̄/d} − 1)`
    pub fn energy(&mut self, d: f64, gamma: f64, s_bar: f64) -> f64 {
        let (d, g, s) = (self.n(d), self.n(gamma), self.n(s_bar));
        let ln2 = self.ln2();
        let pow = self.exp(&self.mul(&ln2, &self.div(&s, &d)));
        let v = self.div(&self.mul(&d, &self.sub(&pow, &self.n(1.0))), &g);
        self.f(&v)
    }

    fn f_big(&mut self, x: &B) -> B {
        let ln2 = self.ln2();
        let u = self.mul(x, &ln2);
        let e = self.exp(&u);
        self.add(&self.mul(&e, &self.sub(&u, &self.n(1.0))), &self.n(1.0))
    }

    /// `2^x (x ln2 − 1) + 1`
    pub fn stationarity(&mut self, x: f64) -> f64 {
        let x = self.n(x);
        let v = self.f_big(&x);
        self.f(&v)
    }

    /// Root of `f(x) = ψ` by 256-bit Newton steps. `f` is convex and
    /// increasing, so iterates started right of the root decrease to it.
    pub fn root(&mut self, psi: f64) -> f64 {
        let target = self.n(psi);
        let mut x = self.n(1.0);
        while self.f_big(&x) < target {
            x = self.mul(&x, &self.n(2.0));
        }
        let ln2 = self.ln2();
        let ln2_sq = self.mul(&ln2, &ln2);
        let tiny = self.n(1e-60);
        for _ in 0..200 {
            let fx = self.f_big(&x);
            let fx = self.sub(&fx, &target);
            // f'(x) = ln²2 · x · 2^x
            let u = self.mul(&x, &ln2);
            let pow = self.exp(&u);
            let slope = self.mul(&self.mul(&ln2_sq, &x), &pow);
            let step = self.div(&fx, &slope);
            x = self.sub(&x, &step);
            if self.div(&step, &x).abs() < tiny {
                break;
            }
        }
        self.f(&x)
    }

    /// Taylor coefficients `(C1, C2, C3)` and the bound at `(qx, qy)`.
    #[allow(clippy::too_many_arguments)]
    pub fn taylor(
        &mut self,
        rx: f64,
        ry: f64,
        lx: f64,
        ly: f64,
        qx: f64,
        qy: f64,
        d: f64,
        e: f64,
        h: f64,
        nu0: f64,
        noise_floor: f64,
    ) -> [f64; 4] {
        let sq = |s: &Self, a: f64, b: f64, c: f64, dd: f64| {
            let dx = s.sub(&s.n(a), &s.n(c));
            let dy = s.sub(&s.n(b), &s.n(dd));
            s.add(&s.mul(&dx, &dx), &s.mul(&dy, &dy))
        };
        let ref_sq = sq(self, rx, ry, lx, ly);
        let q_sq = sq(self, qx, qy, lx, ly);
        let (d, e, h, nu0, nf) = (
            self.n(d),
            self.n(e),
            self.n(h),
            self.n(nu0),
            self.n(noise_floor),
        );
        let c3 = self.add(&self.mul(&h, &h), &ref_sq);
        let ln2 = self.ln2();
        let snr = self.div(&self.mul(&nu0, &e), &self.mul(&self.mul(&nf, &c3), &d));
        let one = self.n(1.0);
        let l = self.ln(&self.add(&one, &snr));
        let c1 = self.div(&self.mul(&d, &l), &ln2);
        let num = self.div(&self.mul(&self.mul(&nu0, &d), &e), &ln2);
        let den = self.mul(
            &c3,
            &self.add(&self.mul(&self.mul(&nf, &c3), &d), &self.mul(&nu0, &e)),
        );
        let c2 = self.div(&num, &den);
        let bound = self.sub(&c1, &self.mul(&c2, &self.sub(&q_sq, &ref_sq)));
        [self.f(&c1), self.f(&c2), self.f(&c3), self.f(&bound)]
    }
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    if want == 0.0 {
        got.abs()
    } else {
        ((got - want) / want).abs()
    }
}

/// Brute-force single-phase allocation: minimise `Σ c_i d_i / (N−1)`
/// subject to `Σ d_i/γ_i (2^{S̄/d_i} − 1) ≤ budget`, `d_i ≥ θ_i`, for
/// N ∈ {2, 3}. The last time is eliminated through the energy equation
/// (solved by bisection) and the rest are searched on shrinking grids.
pub fn brute_force_phase(thetas: &[f64], gammas: &[f64], s_bar: f64, budget: f64) -> f64 {
    let n = thetas.len();
    assert!(n == 2 || n == 3);
    let energy = |d: f64, g: f64| d / g * ((s_bar / d) * std::f64::consts::LN_2).exp_m1();
    let weight = |i: usize| if i == 0 || i + 1 == n { 1.0 } else { 2.0 };
    // Smallest d ≥ θ meeting a residual energy, or None.
    let invert = |rest: f64, g: f64, theta: f64| -> Option<f64> {
        if rest <= 0.0 {
            return None;
        }
        let lo0 = theta.max(1e-12);
        if theta > 0.0 && energy(theta, g) <= rest {
            return Some(theta);
        }
        let (mut lo, mut hi) = (lo0, lo0.max(1e-3));
        while energy(hi, g) > rest {
            hi *= 2.0;
            if hi > 1e12 {
                return None;
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if energy(mid, g) > rest {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(hi)
    };
    let objective = |free: &[f64]| -> f64 {
        let spent: f64 = free.iter().zip(gammas).map(|(d, g)| energy(*d, *g)).sum();
        match invert(budget - spent, gammas[n - 1], thetas[n - 1]) {
            Some(last) => {
                let mut v: f64 = free.iter().enumerate().map(|(i, d)| weight(i) * d).sum();
                v += weight(n - 1) * last;
                v / (n - 1) as f64
            }
            None => f64::INFINITY,
        }
    };
    // Feasible upper end for each free time: all budget but a sliver.
    let span: Vec<(f64, f64)> = (0..n - 1)
        .map(|i| {
            let lo = thetas[i].max(1e-9);
            let hi = invert(budget * 1e-6, gammas[i], thetas[i])
                .unwrap_or(1e6)
                .max(lo * 2.0);
            (lo, hi)
        })
        .collect();
    let steps = 40usize;
    let grid = |b: (f64, f64), k: usize| {
        // log spacing while the box spans decades
        if b.1 / b.0 > 10.0 {
            b.0 * (b.1 / b.0).powf(k as f64 / steps as f64)
        } else {
            b.0 + (b.1 - b.0) * k as f64 / steps as f64
        }
    };
    let mut best = f64::INFINITY;
    let mut box_: Vec<(f64, f64)> = span.clone();
    for _round in 0..30 {
        let mut round = (f64::INFINITY, vec![0usize; n - 1]);
        let mut idx = vec![0usize; n - 1];
        loop {
            let x: Vec<f64> = idx.iter().zip(&box_).map(|(k, b)| grid(*b, *k)).collect();
            let v = objective(&x);
            if v < round.0 {
                round = (v, idx.clone());
            }
            // odometer over the grid
            let mut carry = 0;
            while carry < idx.len() {
                idx[carry] += 1;
                if idx[carry] <= steps {
                    break;
                }
                idx[carry] = 0;
                carry += 1;
            }
            if carry == idx.len() {
                break;
            }
        }
        best = best.min(round.0);
        // The reduced objective is convex; keep a few cells either side.
        box_ = round
            .1
            .iter()
            .zip(&box_)
            .map(|(&k, &b)| (grid(b, k.saturating_sub(4)), grid(b, (k + 4).min(steps))))
            .collect();
    }
    best
}
