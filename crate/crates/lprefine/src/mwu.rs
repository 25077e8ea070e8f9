//! Width-reduced multiplicative weights for the decision version of the
//! residual problem: find `Δ` with `AΔ = c`, `ΔᵀMᵀMΔ ≤ O(ζ)` and
//! `‖NΔ‖ₚᵖ ≤ O(ζ)` whenever some `Δ*` achieves `ζ`.

use log::trace;

use crate::error::{Error, Result};
use crate::inverse::{InverseState, InverseStats};
use crate::linalg::{min_quadratic_assembled, weighted_gram, Matrix, Minimizer, QuadraticForm, Vector};
use crate::refinement::{abs_pow, pnorm_pow, SolveStats};

/// Linear-solve backend for the oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Backend {
    #[default]
    Direct,
    InverseMaintenance,
}

/// Relative tolerance of the preconditioned solves in the maintained backend.
pub const MAINTAINED_TOL: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MwuParams {
    pub rho: f64,
    pub beta: f64,
    pub alpha: f64,
    pub tau: f64,
    /// Number of primal steps.
    pub t: usize,
    /// Width-step budget `K̄`.
    pub k_bar: usize,
    pub m1: usize,
    pub p: f64,
}

fn ceil_loose(v: f64) -> usize {
    (v * (1.0 - 1e-12)).ceil().max(1.0) as usize
}

pub fn compute_params(m1: usize, p: f64) -> Result<MwuParams> {
    if !(p > 2.0) || !p.is_finite() {
        return Err(Error::UnsupportedExponent(p));
    }
    if m1 < 2 {
        return Err(Error::InvalidInput(format!("MWU needs at least two rows, got {m1}")));
    }
    let m = m1 as f64;
    let den = p * (3.0 * p - 2.0);
    let rho = m.powf((p * p - 4.0 * p + 2.0) / den);
    let beta = 3f64.powf(p - 1.0) * m.powf((p - 2.0) / (3.0 * p - 2.0));
    let alpha = 3f64.powf(-(p - 1.0) / p) / p * m.powf(-(p * p - 5.0 * p + 2.0) / den);
    let tau = 3f64.powf(p) * m.powf((p - 1.0) * (p - 2.0) / (3.0 * p - 2.0));
    let t = ceil_loose(m.powf(1.0 / p) / alpha);
    let k_bar = ceil_loose(2f64.powf(-p / (p - 2.0)) * rho * rho * m.powf(2.0 / p) * beta.powf(-2.0 / (p - 2.0)));
    Ok(MwuParams {
        rho,
        beta,
        alpha,
        tau,
        t,
        k_bar,
        m1,
        p,
    })
}

impl MwuParams {
    /// Factor `2^{1/(p−2)}` applied to boosted weights.
    pub fn width_multiplier(&self) -> f64 {
        2f64.powf(1.0 / (self.p - 2.0))
    }

    /// `pᵖαᵖτ / (pα m1^{(p−1)/p})`; the potential argument wants this ≤ 1,
    /// the closed-form parameters give `3^{(2p−1)/p}`.
    pub fn step_condition_ratio(&self) -> f64 {
        let p = self.p;
        let m = self.m1 as f64;
        (p * self.alpha).powf(p) * self.tau / (p * self.alpha * m.powf((p - 1.0) / p))
    }

    /// Cap on `Φ` after `i` primal and `k` width steps.
    pub fn phi_cap(&self, i: usize, k: usize) -> f64 {
        let p = self.p;
        let m = self.m1 as f64;
        let base = (2.0 * self.alpha * i as f64 + m.powf(1.0 / p)).powf(p);
        let growth = 1.0 + 2f64.powf(p / (p - 2.0)) / (self.rho * self.rho * m.powf(2.0 / p) * self.beta.powf(-2.0 / (p - 2.0)));
        base * growth.powi(k as i32)
    }

    /// Ceiling on `Ψ` given the current `Φ`.
    pub fn psi_ceiling(&self, zeta: f64, phi: f64) -> f64 {
        let p = self.p;
        let m = self.m1 as f64;
        zeta.powf(2.0 / p) * (m.powf((p - 2.0) / p) + 3f64.powf(-(p - 2.0)) * phi.powf((p - 2.0) / p))
    }

    /// Guaranteed `Ψ` increase of a width step when both preconditions hold.
    pub fn width_gain(&self, zeta: f64) -> f64 {
        self.tau.powf(2.0 / self.p) * zeta.powf(2.0 / self.p) / 4.0
    }

    /// Whether the width-gain preconditions hold at energy `psi`.
    pub fn width_gain_applies(&self, zeta: f64, psi: f64) -> bool {
        let p = self.p;
        let c = 3f64.powf(p - 2.0);
        let first = self.tau.powf(2.0 / p) * zeta.powf(2.0 / p) >= 4.0 * c * psi / self.beta;
        let second = self.tau * zeta.powf(2.0 / p) >= 2.0 * c * psi * self.rho.powf(p - 2.0);
        first && second
    }
}

/// Oracle coefficients `(c₁, c₂)` so that the oracle minimizes
/// `c₁ΔᵀMᵀMΔ + c₂Σ rₑ(NΔ)ₑ²`.
pub fn oracle_coefficients(m1: usize, zeta: f64, p: f64) -> (f64, f64) {
    let e = (p - 2.0) / p;
    ((m1 as f64).powf(e) * zeta.powf(-e), 3f64.powf(-(p - 2.0)))
}

/// Mutable part of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct MwuState {
    pub w: Vector,
    pub x_accum: Vector,
    pub i: usize,
    pub k: usize,
}

/// One MWU problem `min ΔᵀMᵀMΔ + ‖NΔ‖ₚᵖ s.t. AΔ = c` at budget `ζ`.
#[derive(Debug, Clone, Copy)]
pub struct MwuProblem<'a> {
    pub a: &'a Matrix,
    pub m: &'a QuadraticForm,
    pub n: &'a Matrix,
    pub c: &'a Vector,
    pub zeta: f64,
    pub p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MwuOptions {
    pub backend: Backend,
    /// Record the potential trace.
    pub instrument: bool,
    /// `false` gives the diagnostic variant that only takes primal steps.
    pub width_reduction: bool,
}

impl Default for MwuOptions {
    fn default() -> Self {
        MwuOptions {
            backend: Backend::Direct,
            instrument: cfg!(test),
            width_reduction: true,
        }
    }
}

impl MwuOptions {
    pub fn with_backend(backend: Backend) -> Self {
        MwuOptions {
            backend,
            ..Default::default()
        }
    }
}

/// What happened in one iteration, with every quantity the potential
/// bounds talk about.
#[derive(Debug, Clone, PartialEq)]
pub struct MwuRecord {
    pub width: bool,
    /// Counters before the step.
    pub i: usize,
    pub k: usize,
    /// `Φ(w)` before and after the step.
    pub phi: f64,
    pub phi_after: f64,
    /// Oracle energy `Ψ(r)` at this iteration's resistances.
    pub psi: f64,
    /// `‖NΔ̃‖ₚᵖ`.
    pub norm_pp: f64,
    /// `Σ rₑ(NΔ̃)ₑ²` and `ζ^{2/p}‖w‖ₚ^{p−2}`.
    pub flow_energy: f64,
    pub flow_energy_cap: f64,
    /// Width steps: `Ψ(r) + c₂Σ(1 − rₑ/r'ₑ)rₑ(NΔ̃)ₑ²`, a lower bound on the
    /// next iteration's `Ψ`.
    pub psi_next_floor: f64,
    /// Primal steps: `maxₑ [(r⁺ₑ − rₑ)/rₑ − ((1 + α|NΔ̃|ₑ/ζ^{1/p})^{p−2} − 1)]`.
    pub resistance_excess: f64,
    pub boosted: usize,
    /// Extremes of `r/r̂` under the maintained backend.
    pub approx_ratio: Option<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct MwuOutput {
    /// `x_accum / T`.
    pub x: Vector,
    pub state: MwuState,
    pub params: MwuParams,
    pub trace: Vec<MwuRecord>,
    pub stats: SolveStats,
    pub inverse: Option<InverseStats>,
}

struct Oracle<'a> {
    a: &'a Matrix,
    n: &'a Matrix,
    c: &'a Vector,
    m_form: &'a QuadraticForm,
    m_gram: Matrix,
    c1: f64,
    c2: f64,
    backend: Backend,
    maint: Option<InverseState>,
    last_r: Option<Vector>,
    solves: usize,
}

impl<'a> Oracle<'a> {
    fn new(pr: &MwuProblem<'a>, m1: usize, backend: Backend) -> Self {
        let (c1, c2) = oracle_coefficients(m1, pr.zeta, pr.p);
        Oracle {
            a: pr.a,
            n: pr.n,
            c: pr.c,
            m_form: pr.m,
            m_gram: pr.m.gram(),
            c1,
            c2,
            backend,
            maint: None,
            last_r: None,
            solves: 0,
        }
    }

    fn solve(&mut self, r: &Vector) -> Result<Minimizer> {
        self.solves += 1;
        match self.backend {
            Backend::Direct => {
                let q = &self.m_gram * self.c1 + weighted_gram(self.n, r) * self.c2;
                min_quadratic_assembled(&q, self.a, self.c)
            }
            Backend::InverseMaintenance => {
                match (&mut self.maint, &self.last_r) {
                    (Some(st), Some(prev)) => {
                        st.update(prev, r)?;
                    }
                    _ => {
                        let form = self.m_form.scaled(self.c1 / self.c2);
                        self.maint = Some(InverseState::new(form, self.n.clone(), r.clone())?);
                    }
                }
                self.last_r = Some(r.clone());
                let st = self.maint.as_mut().expect("state initialized above");
                let sol = st.solve(self.a, self.c, r, MAINTAINED_TOL)?;
                Ok(Minimizer {
                    delta: sol.delta,
                    energy: sol.energy * self.c2,
                })
            }
        }
    }

    fn approx_ratio(&self, r: &Vector) -> Option<(f64, f64)> {
        let st = self.maint.as_ref()?;
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for (a, b) in r.iter().zip(st.r_hat().iter()) {
            lo = lo.min(a / b);
            hi = hi.max(a / b);
        }
        Some((lo, hi))
    }
}

fn resistances(w: &Vector, p: f64) -> Vector {
    w.map(|v| abs_pow(v, p - 2.0))
}

/// `Φ(w) = ‖w‖ₚᵖ`.
pub fn phi(w: &Vector, p: f64) -> f64 {
    pnorm_pow(w, p)
}

/// `Ψ(r)`: the oracle objective at its minimizer.
pub fn psi(r: &Vector, a: &Matrix, m: &QuadraticForm, n: &Matrix, c: &Vector, zeta: f64, p: f64) -> Result<f64> {
    let (c1, c2) = oracle_coefficients(n.nrows(), zeta, p);
    let q = m.gram() * c1 + weighted_gram(n, r) * c2;
    Ok(min_quadratic_assembled(&q, a, c)?.energy)
}

/// One oracle call at weights `w`.
pub fn oracle_step(a: &Matrix, m: &QuadraticForm, n: &Matrix, c: &Vector, w: &Vector, zeta: f64, p: f64, backend: Backend) -> Result<Vector> {
    if w.len() != n.nrows() {
        return Err(Error::DimensionMismatch(format!("w has length {}, N has {} rows", w.len(), n.nrows())));
    }
    if !(zeta > 0.0) {
        return Err(Error::InvalidInput(format!("zeta = {zeta} must be positive")));
    }
    let pr = MwuProblem { a, m, n, c, zeta, p };
    let mut o = Oracle::new(&pr, n.nrows(), backend);
    Ok(o.solve(&resistances(w, p))?.delta)
}

fn validate(pr: &MwuProblem) -> Result<()> {
    let dim = pr.n.ncols();
    if pr.a.ncols() != dim || pr.m.dim() != dim || pr.a.nrows() != pr.c.len() {
        return Err(Error::DimensionMismatch(format!(
            "A {}x{}, c {}, form {}, N {}x{}",
            pr.a.nrows(),
            pr.a.ncols(),
            pr.c.len(),
            pr.m.dim(),
            pr.n.nrows(),
            dim
        )));
    }
    if !(pr.zeta > 0.0) || !pr.zeta.is_finite() {
        return Err(Error::InvalidInput(format!("zeta = {} must be positive", pr.zeta)));
    }
    Ok(())
}

/// Runs the width-reduced MWU loop to `T` primal steps.
pub fn mwu_solve(pr: &MwuProblem, opts: &MwuOptions) -> Result<MwuOutput> {
    validate(pr)?;
    let p = pr.p;
    let m1 = pr.n.nrows();
    let params = compute_params(m1, p)?;
    let zeta = pr.zeta;
    let zroot = zeta.powf(1.0 / p);
    let (_, c2) = oracle_coefficients(m1, zeta, p);
    let mut st = MwuState {
        w: Vector::from_element(m1, 1.0),
        x_accum: Vector::zeros(pr.n.ncols()),
        i: 0,
        k: 0,
    };
    let mut oracle = Oracle::new(pr, m1, opts.backend);
    let mut trace = Vec::new();
    let mult = params.width_multiplier();
    while st.i < params.t {
        let r = resistances(&st.w, p);
        let sol = oracle.solve(&r)?;
        let nd = pr.n * &sol.delta;
        let norm_pp = pnorm_pow(&nd, p);
        let phi_before = if opts.instrument { phi(&st.w, p) } else { 0.0 };
        let (i0, k0) = (st.i, st.k);
        let primal = !opts.width_reduction || norm_pp <= params.tau * zeta;
        let mut rec = if opts.instrument {
            let flow_energy: f64 = r.iter().zip(nd.iter()).map(|(ri, di)| ri * di * di).sum();
            Some(MwuRecord {
                width: !primal,
                i: i0,
                k: k0,
                phi: phi_before,
                phi_after: 0.0,
                psi: sol.energy,
                norm_pp,
                flow_energy,
                flow_energy_cap: zeta.powf(2.0 / p) * phi_before.powf((p - 2.0) / p),
                psi_next_floor: f64::NAN,
                resistance_excess: f64::NAN,
                boosted: 0,
                approx_ratio: oracle.approx_ratio(&r),
            })
        } else {
            None
        };
        if primal {
            let inc = nd.map(|v| params.alpha * v.abs() / zroot);
            st.w += &inc;
            st.x_accum += &sol.delta;
            st.i += 1;
            if let Some(rec) = rec.as_mut() {
                let r_new = resistances(&st.w, p);
                let mut excess = f64::NEG_INFINITY;
                for e in 0..m1 {
                    let rel = (r_new[e] - r[e]) / r[e];
                    let bound = (1.0 + inc[e]).powf(p - 2.0) - 1.0;
                    excess = excess.max(rel - bound);
                }
                rec.resistance_excess = excess;
            }
        } else {
            let thresh = params.rho * zroot;
            let boost: Vec<usize> = (0..m1).filter(|&e| nd[e].abs() >= thresh && r[e] <= params.beta).collect();
            if boost.is_empty() {
                return Err(Error::WidthBudgetExceeded(st.k));
            }
            for &e in &boost {
                st.w[e] *= mult;
            }
            st.k += 1;
            trace!("width step {} boosted {} entries", st.k, boost.len());
            if let Some(rec) = rec.as_mut() {
                let r_new = resistances(&st.w, p);
                let gain: f64 = (0..m1).map(|e| (1.0 - r[e] / r_new[e]) * r[e] * nd[e] * nd[e]).sum();
                rec.psi_next_floor = sol.energy + c2 * gain;
                rec.boosted = boost.len();
            }
            if st.k > params.k_bar {
                return Err(Error::WidthBudgetExceeded(st.k));
            }
        }
        if let Some(mut rec) = rec {
            rec.phi_after = phi(&st.w, p);
            trace.push(rec);
        }
    }
    let x = &st.x_accum / params.t as f64;
    let inverse = oracle.maint.as_ref().map(|s| s.stats().clone());
    let stats = SolveStats {
        linear_solves: oracle.solves,
        primal_steps: st.i,
        width_steps: st.k,
        woodbury_updates: inverse.as_ref().map_or(0, |s| s.woodbury_updates),
        full_refreshes: inverse.as_ref().map_or(0, |s| s.full_refreshes),
        changed_entries: inverse.as_ref().map_or(0, |s| s.changed_total),
    };
    Ok(MwuOutput {
        x,
        state: st,
        params,
        trace,
        stats,
        inverse,
    })
}
