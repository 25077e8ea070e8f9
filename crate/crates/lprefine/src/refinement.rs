//! The objective, the residual problem and the iterative-refinement driver,
//! plus the smoothed `γₚ` function used by the small-`p` bounds.

use std::time::Instant;

use log::{debug, info};

use crate::error::{Error, Result};
use crate::linalg::{constrained_least_squares, scale_rows, solve_equality_qp, KernelProjector, Matrix, QuadraticForm, Vector};

/// Tolerance on `‖Ax − b‖∞` relative to `1 + ‖b‖∞`.
pub const FEASIBILITY_TOL: f64 = 1e-7;

/// `|t|ᵖ`, using integer powers when `p` is integral.
pub fn abs_pow(t: f64, p: f64) -> f64 {
    let a = t.abs();
    if p.fract() == 0.0 && p.abs() <= 64.0 {
        a.powi(p as i32)
    } else if a == 0.0 {
        0.0
    } else {
        a.powf(p)
    }
}

/// `‖v‖ₚᵖ`.
pub fn pnorm_pow(v: &Vector, p: f64) -> f64 {
    v.iter().map(|&t| abs_pow(t, p)).sum()
}

/// `min dᵀx + ‖Mx‖₂² + ‖Nx‖ₚᵖ  s.t.  Ax = b`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    a: Matrix,
    m: Matrix,
    n: Matrix,
    d: Vector,
    b: Vector,
    p: f64,
}

impl ProblemInstance {
    /// Checks shapes, finiteness, `d ≤ n`, `n − d ≤ max(m1, m2)`, `p ≥ 2` and that
    /// `b` lies in the range of `A`.
    pub fn new(a: Matrix, m: Matrix, n: Matrix, d: Vector, b: Vector, p: f64) -> Result<Self> {
        let dim = a.ncols();
        if m.ncols() != dim || n.ncols() != dim || d.len() != dim || b.len() != a.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "A {}x{}, M {}x{}, N {}x{}, d {}, b {}",
                a.nrows(),
                a.ncols(),
                m.nrows(),
                m.ncols(),
                n.nrows(),
                n.ncols(),
                d.len(),
                b.len()
            )));
        }
        let finite = |s: &[f64]| s.iter().all(|v| v.is_finite());
        if !(finite(a.as_slice()) && finite(m.as_slice()) && finite(n.as_slice()) && finite(d.as_slice()) && finite(b.as_slice())) {
            return Err(Error::InvalidInput("instance has non-finite entries".into()));
        }
        if !(p >= 2.0) || !p.is_finite() {
            return Err(Error::UnsupportedExponent(p));
        }
        if a.nrows() > dim || dim - a.nrows() > m.nrows().max(n.nrows()) {
            return Err(Error::DimensionMismatch(format!(
                "need d <= n and n - d <= max(m1, m2); got d = {}, n = {}, m1 = {}, m2 = {}",
                a.nrows(),
                dim,
                m.nrows(),
                n.nrows()
            )));
        }
        let inst = ProblemInstance { a, m, n, d, b, p };
        inst.min_norm_point()?;
        Ok(inst)
    }

    /// Same data with a different exponent.
    pub fn with_p(&self, p: f64) -> Result<Self> {
        if !(p >= 2.0) || !p.is_finite() {
            return Err(Error::UnsupportedExponent(p));
        }
        let mut out = self.clone();
        out.p = p;
        Ok(out)
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }
    pub fn m_mat(&self) -> &Matrix {
        &self.m
    }
    pub fn n_mat(&self) -> &Matrix {
        &self.n
    }
    pub fn d_vec(&self) -> &Vector {
        &self.d
    }
    pub fn b(&self) -> &Vector {
        &self.b
    }
    pub fn p(&self) -> f64 {
        self.p
    }
    pub fn dim(&self) -> usize {
        self.a.ncols()
    }
    pub fn m1(&self) -> usize {
        self.m.nrows()
    }
    pub fn m2(&self) -> usize {
        self.n.nrows()
    }
    pub fn m(&self) -> usize {
        self.m1().max(self.m2())
    }

    /// `d = 0` and `M` has no nonzero entries.
    pub fn is_pure(&self) -> bool {
        self.d.iter().all(|&v| v == 0.0) && self.m.iter().all(|&v| v == 0.0)
    }

    pub fn constraint_residual(&self, x: &Vector) -> f64 {
        (&self.a * x - &self.b).amax()
    }

    pub fn check_feasible(&self, x: &Vector) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!("x has length {}, expected {}", x.len(), self.dim())));
        }
        let r = self.constraint_residual(x);
        if !(r <= FEASIBILITY_TOL * (1.0 + self.b.amax())) {
            return Err(Error::InfeasiblePoint(r));
        }
        Ok(())
    }

    /// Least-norm solution of `Ax = b`.
    pub fn min_norm_point(&self) -> Result<Vector> {
        let n = self.dim();
        constrained_least_squares(&Matrix::identity(n, n), &Vector::zeros(n), &self.a, &self.b)
    }

    /// Minimizer of `dᵀx + ‖Mx‖² + ‖Nx‖²` under `Ax = b`: the exact optimum
    /// when `p = 2` and the usual starting point otherwise.
    pub fn quadratic_start(&self) -> Result<Vector> {
        let q = (self.m.tr_mul(&self.m) + self.n.tr_mul(&self.n)) * 2.0;
        Ok(solve_equality_qp(&q, &(-&self.d), &self.a, &self.b)?.x)
    }

    /// Objective split into `(dᵀx, ‖Mx‖², ‖Nx‖ₚᵖ)`.
    pub fn objective_terms(&self, x: &Vector) -> (f64, f64, f64) {
        (self.d.dot(x), (&self.m * x).norm_squared(), pnorm_pow(&(&self.n * x), self.p))
    }

    /// A finite lower bound on the optimum.
    ///
    /// Two bounds are combined: dropping `‖Nx‖ₚᵖ ≥ 0`, and replacing each
    /// `|t|ᵖ` by its quadratic minorant `t² − kₚ` with
    /// `kₚ = (1 − 2/p)(2/p)^{2/(p−2)}`. The first fails when `MᵀM` is
    /// singular on the constraint set, the second does not.
    pub fn objective_lower_bound(&self) -> Result<f64> {
        let mut best = f64::NEG_INFINITY;
        let dzero = self.d.iter().all(|&v| v == 0.0);
        if dzero {
            best = 0.0;
        }
        let mtm = self.m.tr_mul(&self.m);
        if self.m1() > 0 {
            if let Ok(sol) = solve_equality_qp(&(&mtm * 2.0), &(-&self.d), &self.a, &self.b) {
                let (lin, quad, _) = self.objective_terms(&sol.x);
                best = best.max(lin + quad);
            }
        }
        let p = self.p;
        let kp = if p > 2.0 { (1.0 - 2.0 / p) * (2.0 / p).powf(2.0 / (p - 2.0)) } else { 0.0 };
        let q = (&mtm + self.n.tr_mul(&self.n)) * 2.0;
        match solve_equality_qp(&q, &(-&self.d), &self.a, &self.b) {
            Ok(sol) => {
                let (lin, quad, _) = self.objective_terms(&sol.x);
                let nn = (&self.n * &sol.x).norm_squared();
                best = best.max(lin + quad + nn - self.m2() as f64 * kp);
            }
            Err(e) => {
                if !best.is_finite() {
                    return Err(e);
                }
            }
        }
        Ok(best)
    }
}

/// `dᵀx + ‖Mx‖₂² + ‖Nx‖ₚᵖ`.
pub fn objective(inst: &ProblemInstance, x: &Vector) -> Result<f64> {
    if x.len() != inst.dim() {
        return Err(Error::DimensionMismatch(format!("x has length {}, expected {}", x.len(), inst.dim())));
    }
    let (a, b, c) = inst.objective_terms(x);
    Ok(a + b + c)
}

/// `res_p(Δ) = gᵀΔ − ΔᵀRΔ − ‖NΔ‖ₚᵖ`, built at a feasible point.
#[derive(Debug, Clone)]
pub struct ResidualProblem {
    pub g: Vector,
    pub r: QuadraticForm,
    pub n: Matrix,
    pub a: Matrix,
    pub p: f64,
}

impl ResidualProblem {
    pub fn dim(&self) -> usize {
        self.g.len()
    }
}

/// Gradient scaled by `1/p` and the factor stack
/// `[√2/p·M ; √2·Diag(|Nx|^{(p−2)/2})·N]`.
pub fn build_residual(inst: &ProblemInstance, x: &Vector) -> Result<ResidualProblem> {
    inst.check_feasible(x)?;
    let p = inst.p();
    let nx = inst.n_mat() * x;
    let wgt = nx.map(|t| abs_pow(t, p - 2.0));
    let g = inst.d_vec() / p + inst.m_mat().tr_mul(&(inst.m_mat() * x)) * (2.0 / p) + inst.n_mat().tr_mul(&wgt.component_mul(&nx));
    let mut r = QuadraticForm::new(inst.dim());
    r.push(inst.m_mat().clone(), 2.0 / (p * p))?;
    let half = nx.map(|t| abs_pow(t, (p - 2.0) / 2.0));
    r.push(scale_rows(inst.n_mat(), &half), 2.0)?;
    Ok(ResidualProblem {
        g,
        r,
        n: inst.n_mat().clone(),
        a: inst.a().clone(),
        p,
    })
}

pub fn eval_residual(rp: &ResidualProblem, delta: &Vector) -> Result<f64> {
    if delta.len() != rp.dim() {
        return Err(Error::DimensionMismatch(format!("step has length {}, expected {}", delta.len(), rp.dim())));
    }
    Ok(rp.g.dot(delta) - rp.r.eval(delta) - pnorm_pow(&(&rp.n * delta), rp.p))
}

/// Counters a residual solve reports back to the driver.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SolveStats {
    pub linear_solves: usize,
    pub primal_steps: usize,
    pub width_steps: usize,
    pub woodbury_updates: usize,
    pub full_refreshes: usize,
    pub changed_entries: usize,
}

impl SolveStats {
    pub fn add(&mut self, o: &SolveStats) {
        self.linear_solves += o.linear_solves;
        self.primal_steps += o.primal_steps;
        self.width_steps += o.width_steps;
        self.woodbury_updates += o.woodbury_updates;
        self.full_refreshes += o.full_refreshes;
        self.changed_entries += o.changed_entries;
    }
}

/// An approximate residual maximizer together with the quality it claims.
#[derive(Debug, Clone)]
pub struct ResidualStep {
    pub delta: Vector,
    pub kappa: f64,
    pub stats: SolveStats,
}

pub trait ResidualSolver {
    /// Approximately maximize `res_p` built at `x` for the current `ν`.
    fn solve(&mut self, inst: &ProblemInstance, x: &Vector, rp: &ResidualProblem, nu: f64) -> Result<ResidualStep>;
}

/// Stopping rule for the refinement loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tolerance {
    /// Stop once `ν ≤ ε`.
    Absolute(f64),
    /// Stop once `ν ≤ r·|f(x)|`; `r = 1/2` yields a 2-approximation.
    Relative(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefinementOptions {
    pub tolerance: Tolerance,
    /// Fixed `κ`; `None` uses the value each residual solve reports.
    pub kappa: Option<f64>,
    /// Initial gap bound; `None` derives it from `objective_lower_bound`.
    pub nu0: Option<f64>,
    pub max_linear_solves: Option<usize>,
    pub max_iterations: usize,
}

impl RefinementOptions {
    pub fn absolute(eps: f64) -> Self {
        RefinementOptions {
            tolerance: Tolerance::Absolute(eps),
            kappa: None,
            nu0: None,
            max_linear_solves: None,
            max_iterations: 200_000,
        }
    }
}

/// One pass of the refinement loop.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub nu: f64,
    pub kappa: f64,
    pub residual: f64,
    pub decrease: f64,
    pub accepted: bool,
    /// Objective after this pass.
    pub objective: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolverReport {
    /// `f(x⁽⁰⁾)` followed by the objective after every accepted step.
    pub objective_trace: Vec<f64>,
    /// `ν` at the start of every pass.
    pub nu_trace: Vec<f64>,
    pub kappa_trace: Vec<f64>,
    pub steps: Vec<StepRecord>,
    pub nu0: f64,
    pub kappa_eff: f64,
    pub linear_solves: usize,
    pub primal_steps: usize,
    pub width_steps: usize,
    pub refinement_steps: usize,
    pub nu_halvings: usize,
    pub woodbury_updates: usize,
    pub full_refreshes: usize,
    pub converged: bool,
    pub wall_seconds: f64,
}

impl SolverReport {
    pub fn absorb(&mut self, s: &SolveStats) {
        self.linear_solves += s.linear_solves;
        self.primal_steps += s.primal_steps;
        self.width_steps += s.width_steps;
        self.woodbury_updates += s.woodbury_updates;
        self.full_refreshes += s.full_refreshes;
    }

    pub fn final_objective(&self) -> Option<f64> {
        self.objective_trace.last().copied()
    }
}

/// Magnitude below which objective differences are rounding noise.
pub(crate) fn objective_noise(inst: &ProblemInstance, x: &Vector) -> f64 {
    let (a, b, c) = inst.objective_terms(x);
    let scale = a.abs() + b + c;
    64.0 * f64::EPSILON * scale + f64::MIN_POSITIVE
}

/// Default `ν₀ = f(x₀) − f_lb`, padded slightly so rounding in the
/// lower-bound solve cannot make it an underestimate.
pub fn default_nu0(inst: &ProblemInstance, x0: &Vector) -> Result<f64> {
    let f0 = objective(inst, x0)?;
    let lb = inst.objective_lower_bound()?;
    let gap = (f0 - lb).max(0.0);
    Ok(gap * (1.0 + 1e-6) + 1e-12 * (1.0 + f0.abs()))
}

/// The refinement loop: accept `x ← x − Δ̃/p` when it makes progress at
/// least `ν/(32pκ)`, otherwise halve `ν`.
///
/// Progress is the objective decrease `f(x) − f(x − Δ̃/p)`, which is never
/// smaller than `res_p(Δ̃)`; decreases at rounding level count as none.
pub fn iterative_refinement<S: ResidualSolver + ?Sized>(
    inst: &ProblemInstance,
    x0: &Vector,
    solver: &mut S,
    opts: &RefinementOptions,
) -> Result<(Vector, SolverReport)> {
    let start = Instant::now();
    inst.check_feasible(x0)?;
    let p = inst.p();
    let mut x = x0.clone();
    let mut fx = objective(inst, &x)?;
    let mut report = SolverReport {
        objective_trace: vec![fx],
        ..Default::default()
    };
    let mut nu = match opts.nu0 {
        Some(v) => v,
        None => default_nu0(inst, &x)?,
    };
    if !(nu >= 0.0) || !nu.is_finite() {
        return Err(Error::InvalidInput(format!("initial gap bound {nu} is not a finite nonnegative number")));
    }
    report.nu0 = nu;
    let stop = |nu: f64, fx: f64| match opts.tolerance {
        Tolerance::Absolute(eps) => nu <= eps,
        Tolerance::Relative(r) => nu <= r * fx.abs() || nu < f64::MIN_POSITIVE,
    };
    // Steps are projected onto ker A so that rounding in the residual
    // solver cannot accumulate into constraint drift.
    let kernel = KernelProjector::new(inst.a());
    let mut passes = 0;
    while !stop(nu, fx) {
        if passes >= opts.max_iterations {
            return Err(Error::NoConvergence(passes));
        }
        if let Some(cap) = opts.max_linear_solves {
            if report.linear_solves >= cap {
                return Err(Error::BudgetExhausted(cap));
            }
        }
        passes += 1;
        report.nu_trace.push(nu);
        let rp = build_residual(inst, &x)?;
        let step = match solver.solve(inst, &x, &rp, nu) {
            Ok(s) => Some(s),
            Err(Error::AllProbesFailed) | Err(Error::DegenerateStep) => None,
            Err(e) => return Err(e),
        };
        let (delta, kappa) = match step {
            Some(s) => {
                report.absorb(&s.stats);
                let k = opts.kappa.unwrap_or(s.kappa);
                (kernel.project(&s.delta), k)
            }
            None => (Vector::zeros(inst.dim()), opts.kappa.unwrap_or(1.0)),
        };
        if delta.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("residual solver returned a non-finite step".into()));
        }
        report.kappa_trace.push(kappa);
        report.kappa_eff = report.kappa_eff.max(kappa);
        let threshold = nu / (32.0 * p * kappa);
        let residual = eval_residual(&rp, &delta)?;
        let cand = &x - &delta / p;
        let fc = objective(inst, &cand)?;
        let decrease = fx - fc;
        let accepted = decrease >= threshold && decrease > objective_noise(inst, &x);
        if accepted {
            if fc > fx + 1e-12 * (1.0 + fx.abs()) {
                return Err(Error::SolverContractViolation(fc - fx));
            }
            x = cand;
            fx = fc;
            report.refinement_steps += 1;
            report.objective_trace.push(fx);
            debug!("accepted step: nu = {nu:.3e}, kappa = {kappa:.3e}, f = {fx:.12e}");
        } else {
            nu /= 2.0;
            report.nu_halvings += 1;
            debug!("halved nu to {nu:.3e} (progress {decrease:.3e} < {threshold:.3e})");
        }
        report.steps.push(StepRecord {
            nu: *report.nu_trace.last().unwrap(),
            kappa,
            residual,
            decrease,
            accepted,
            objective: fx,
        });
    }
    report.converged = true;
    report.wall_seconds = start.elapsed().as_secs_f64();
    info!(
        "refinement finished: f = {fx:.12e}, {} steps, {} halvings, {} linear solves",
        report.refinement_steps, report.nu_halvings, report.linear_solves
    );
    Ok((x, report))
}

/// Smoothed `ℓp` function for `p ∈ (1, 2)`: quadratic for `|x| ≤ t`,
/// shifted `|x|ᵖ` beyond.
pub fn gamma_p(t: f64, x: f64, p: f64) -> f64 {
    let ax = x.abs();
    if ax <= t {
        0.5 * p * t.powf(p - 2.0) * x * x
    } else {
        ax.powf(p) - (1.0 - 0.5 * p) * t.powf(p)
    }
}

/// Residual solver for `p = 2` that jumps straight to the constrained
/// optimum: returns `Δ = p(x − x*)`, an exact (`κ = 1`) step.
#[derive(Debug, Clone, Default)]
pub struct ExactQuadraticStep;

impl ResidualSolver for ExactQuadraticStep {
    fn solve(&mut self, inst: &ProblemInstance, x: &Vector, _rp: &ResidualProblem, _nu: f64) -> Result<ResidualStep> {
        if inst.p() != 2.0 {
            return Err(Error::UnsupportedExponent(inst.p()));
        }
        let xs = inst.quadratic_start()?;
        Ok(ResidualStep {
            delta: (x - xs) * 2.0,
            kappa: 1.0,
            stats: SolveStats {
                linear_solves: 1,
                ..Default::default()
            },
        })
    }
}
