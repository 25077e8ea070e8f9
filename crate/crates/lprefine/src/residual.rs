//! Residual solvers built on the MWU routine: the binary search over `ζ`,
//! the reduction to a `q`-norm residual with `q ≈ ln m`, and the complete
//! solver that picks between them.

use log::debug;

use crate::error::{Error, Result};
use crate::linalg::{min_quadratic_assembled, KernelProjector, Matrix, Vector};
use crate::mwu::{mwu_solve, Backend, MwuOptions, MwuProblem};
use crate::refinement::{
    iterative_refinement, objective, pnorm_pow, ProblemInstance, RefinementOptions, ResidualProblem, ResidualSolver, ResidualStep,
    SolveStats, SolverReport,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeOutcome {
    Ok,
    WidthBudgetExceeded,
}

/// One `ζ` probe of the binary search.
#[derive(Debug, Clone, PartialEq)]
pub struct ZetaProbe {
    pub zeta: f64,
    /// Raw MWU output.
    pub delta: Option<Vector>,
    /// `a` from the binary-search scaling and `κ_eff = 100a²`.
    pub a: f64,
    pub kappa_eff: f64,
    /// Candidate steps derived from `delta`, in the order they were tried.
    pub candidates: Vec<Vector>,
    pub outcome: ProbeOutcome,
    /// Smallest `f(x − cand/p)` among the candidates.
    pub picked_objective: f64,
    pub stats: SolveStats,
}

#[derive(Debug, Clone)]
pub struct ResidualOutcome {
    pub delta: Vector,
    pub kappa: f64,
    pub probes: Vec<ZetaProbe>,
    pub stats: SolveStats,
}

/// `ν, ν/2, …` while `ζ > ν/(32p)`.
pub fn probe_zetas(nu: f64, p: f64) -> Vec<f64> {
    let floor = nu / (32.0 * p);
    let mut out = Vec::new();
    let mut z = nu;
    while z > floor {
        out.push(z);
        z /= 2.0;
    }
    out
}

/// `(Δ/(5a²), 100a²)` with
/// `a = max(√(ΔᵀRΔ/ζ), (‖NΔ‖ₚᵖ/ζ)^{1/p}, 1)`.
pub fn scale_per_lemma_binary(delta: &Vector, rp: &ResidualProblem, zeta: f64) -> (Vector, f64) {
    let a = binary_scale_a(rp.r.eval(delta), pnorm_pow(&(&rp.n * delta), rp.p), zeta, rp.p);
    (delta / (5.0 * a * a), 100.0 * a * a)
}

fn binary_scale_a(quad: f64, norm_pp: f64, zeta: f64, p: f64) -> f64 {
    (quad / zeta).sqrt().max((norm_pp / zeta).powf(1.0 / p)).max(1.0)
}

/// Probe constraints `AΔ = 0, gᵀΔ = ζ/2` in an equivalent well-conditioned
/// form: `g` is replaced by its unit-norm projection `ĝ` onto `ker A`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeConstraints {
    /// `[A; ĝᵀ]`.
    pub matrix: Matrix,
    /// `‖Pg‖`, so that `gᵀΔ = ζ/2` reads `ĝᵀΔ = ζ/(2‖Pg‖)`.
    pub g_norm: f64,
}

impl ProbeConstraints {
    pub fn rhs(&self, zeta: f64) -> Vector {
        let d = self.matrix.nrows() - 1;
        let mut c = Vector::zeros(d + 1);
        c[d] = zeta / (2.0 * self.g_norm);
        c
    }
}

/// `None` when `g` vanishes on `ker A` (relative to `‖g‖`), in which case
/// no step can make progress.
pub fn augmented_constraints(rp: &ResidualProblem) -> Option<ProbeConstraints> {
    let pg = KernelProjector::new(&rp.a).project(&rp.g);
    let g_norm = pg.norm();
    if !(g_norm > 1e-12 * rp.g.norm()) {
        return None;
    }
    let (d, n) = rp.a.shape();
    let mut matrix = Matrix::zeros(d + 1, n);
    matrix.rows_mut(0, d).copy_from(&rp.a);
    matrix.set_row(d, &(pg / g_norm).transpose());
    Some(ProbeConstraints { matrix, g_norm })
}

/// Smallest even integer `≥ max(4, ln m)`.
pub fn logm_exponent(m: usize) -> f64 {
    let l = (m.max(1) as f64).ln().ceil().max(4.0) as u64;
    (l + (l & 1)) as f64
}

/// Whether the complete solver should use the `q`-norm path.
pub fn use_logm_path(p: f64, m2: usize) -> bool {
    m2 >= 2 && p >= (m2 as f64).ln()
}

/// The `q`-norm residual problem whose norm term carries the coefficient
/// `¼ζ^{1−q/p}m^{min(q/p−1, 0)}`, folded into `N`.
#[derive(Debug, Clone)]
pub struct QResidual {
    pub problem: ResidualProblem,
    pub coefficient: f64,
    pub p: f64,
    pub m: usize,
}

impl QResidual {
    /// `α = (1/(256β))·m^{−(p/(p−1))|1/p−1/q|}`.
    pub fn back_scaling(&self, beta: f64) -> f64 {
        p2q_back_scaling(self.p, self.problem.p, self.m, beta)
    }
}

pub fn p2q_back_scaling(p: f64, q: f64, m: usize, beta: f64) -> f64 {
    (m as f64).powf(-(p / (p - 1.0)) * (1.0 / p - 1.0 / q).abs()) / (256.0 * beta)
}

pub fn p_to_q_residual(rp: &ResidualProblem, q: f64, zeta: f64) -> Result<QResidual> {
    let p = rp.p;
    if !(p >= 2.0 && q >= 2.0) {
        return Err(Error::UnsupportedExponent(p.min(q)));
    }
    let m = rp.n.nrows();
    let coefficient = 0.25 * zeta.powf(1.0 - q / p) * (m as f64).powf((q / p - 1.0).min(0.0));
    let mut problem = rp.clone();
    problem.n = &rp.n * coefficient.powf(1.0 / q);
    problem.p = q;
    Ok(QResidual { problem, coefficient, p, m })
}

fn best_candidate(inst: &ProblemInstance, x: &Vector, p: f64, cands: &[Vector]) -> Result<(usize, f64)> {
    let mut best = (0, f64::INFINITY);
    for (i, c) in cands.iter().enumerate() {
        let f = objective(inst, &(x - c / p))?;
        if f < best.1 {
            best = (i, f);
        }
    }
    Ok(best)
}

/// Runs one probe; `Ok(None)` means the probe constraint is infeasible,
/// i.e. `g` is orthogonal to the null space of `A`.
fn run_probe(
    rp: &ResidualProblem,
    cons: &ProbeConstraints,
    n_eff: &Matrix,
    q: f64,
    zeta: f64,
    opts: &MwuOptions,
) -> Result<Option<(Result<Vector>, SolveStats)>> {
    let a_aug = &cons.matrix;
    let c = cons.rhs(zeta);
    if q == 2.0 {
        let qm = rp.r.gram() + n_eff.tr_mul(n_eff);
        return match min_quadratic_assembled(&qm, a_aug, &c) {
            Ok(m) => Ok(Some((
                Ok(m.delta),
                SolveStats {
                    linear_solves: 1,
                    ..Default::default()
                },
            ))),
            Err(Error::InfeasibleConstraint(_)) => Ok(None),
            Err(e) => Err(e),
        };
    }
    let pr = MwuProblem {
        a: a_aug,
        m: &rp.r,
        n: n_eff,
        c: &c,
        zeta,
        p: q,
    };
    match mwu_solve(&pr, opts) {
        Ok(out) => Ok(Some((Ok(out.x), out.stats))),
        Err(Error::WidthBudgetExceeded(k)) => Ok(Some((
            Err(Error::WidthBudgetExceeded(k)),
            SolveStats {
                width_steps: k,
                ..Default::default()
            },
        ))),
        Err(Error::InfeasibleConstraint(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

fn zero_outcome(n: usize, probes: Vec<ZetaProbe>, stats: SolveStats) -> ResidualOutcome {
    ResidualOutcome {
        delta: Vector::zeros(n),
        kappa: 1.0,
        probes,
        stats,
    }
}

/// Binary search over `ζ`. Every successful probe contributes its raw
/// output and its rescaled version as candidates; the step returned is the
/// candidate with the smallest `f(x − Δ/p)`, and `κ` is the largest
/// `κ_eff` among successful probes.
pub fn residual_solve(inst: &ProblemInstance, x: &Vector, rp: &ResidualProblem, nu: f64, opts: &MwuOptions) -> Result<ResidualOutcome> {
    if !(nu > 0.0) {
        return Err(Error::InvalidInput(format!("nu = {nu} must be positive")));
    }
    let p = rp.p;
    let mut probes = Vec::new();
    let mut stats = SolveStats::default();
    let mut best: Option<(Vector, f64)> = None;
    let mut kappa = 0.0f64;
    let Some(cons) = augmented_constraints(rp) else {
        debug!("gradient vanishes on the null space");
        return Ok(zero_outcome(rp.dim(), probes, stats));
    };
    for zeta in probe_zetas(nu, p) {
        let Some((res, st)) = run_probe(rp, &cons, &rp.n, p, zeta, opts)? else {
            debug!("probe constraint infeasible; gradient vanishes on the null space");
            return Ok(zero_outcome(rp.dim(), probes, stats));
        };
        stats.add(&st);
        match res {
            Ok(delta) => {
                let (scaled, k_eff) = scale_per_lemma_binary(&delta, rp, zeta);
                let a = (k_eff / 100.0).sqrt();
                let candidates = vec![delta.clone(), scaled];
                let (i, f) = best_candidate(inst, x, p, &candidates)?;
                if best.as_ref().map_or(true, |b| f <= b.1) {
                    best = Some((candidates[i].clone(), f));
                }
                kappa = kappa.max(k_eff);
                probes.push(ZetaProbe {
                    zeta,
                    delta: Some(delta),
                    a,
                    kappa_eff: k_eff,
                    candidates,
                    outcome: ProbeOutcome::Ok,
                    picked_objective: f,
                    stats: st,
                });
            }
            Err(_) => probes.push(failed_probe(zeta, st)),
        }
    }
    match best {
        Some((delta, _)) => Ok(ResidualOutcome { delta, kappa, probes, stats }),
        None => Err(Error::AllProbesFailed),
    }
}

fn failed_probe(zeta: f64, stats: SolveStats) -> ZetaProbe {
    ZetaProbe {
        zeta,
        delta: None,
        a: f64::NAN,
        kappa_eff: f64::NAN,
        candidates: Vec::new(),
        outcome: ProbeOutcome::WidthBudgetExceeded,
        picked_objective: f64::NAN,
        stats,
    }
}

/// Residual solve through the `q`-norm problem with `q = logm_exponent(m₂)`.
///
/// Each probe solves the `q`-problem by MWU and offers `sΔ̃` for
/// `s ∈ {1, α, 1/(5a²), α/(5a²)}` with `α = m^{−1/(p−1)}`; `κ` is
/// `2¹⁴β²m^{1/(p−1)}` with `β = a²`.
pub fn logm_residual_solve(inst: &ProblemInstance, x: &Vector, rp: &ResidualProblem, nu: f64, opts: &MwuOptions) -> Result<ResidualOutcome> {
    if !(nu > 0.0) {
        return Err(Error::InvalidInput(format!("nu = {nu} must be positive")));
    }
    let p = rp.p;
    let m = rp.n.nrows();
    let q = logm_exponent(m);
    let alpha = (m as f64).powf(-1.0 / (p - 1.0));
    let mut probes = Vec::new();
    let mut stats = SolveStats::default();
    let mut best: Option<(Vector, f64)> = None;
    let mut kappa = 0.0f64;
    let Some(cons) = augmented_constraints(rp) else {
        return Ok(zero_outcome(rp.dim(), probes, stats));
    };
    for zeta in probe_zetas(nu, p) {
        let qr = p_to_q_residual(rp, q, zeta)?;
        let Some((res, st)) = run_probe(&qr.problem, &cons, &qr.problem.n, q, zeta, opts)? else {
            return Ok(zero_outcome(rp.dim(), probes, stats));
        };
        stats.add(&st);
        match res {
            Ok(delta) => {
                let (scaled, k_eff) = scale_per_lemma_binary(&delta, &qr.problem, zeta);
                let beta = k_eff / 100.0;
                let k_p = 16384.0 * beta * beta * (m as f64).powf(1.0 / (p - 1.0));
                let candidates = vec![&scaled * alpha, &delta * alpha, scaled, delta.clone()];
                let (i, f) = best_candidate(inst, x, p, &candidates)?;
                if best.as_ref().map_or(true, |b| f <= b.1) {
                    best = Some((candidates[i].clone(), f));
                }
                kappa = kappa.max(k_p);
                probes.push(ZetaProbe {
                    zeta,
                    delta: Some(delta),
                    a: beta.sqrt(),
                    kappa_eff: k_p,
                    candidates,
                    outcome: ProbeOutcome::Ok,
                    picked_objective: f,
                    stats: st,
                });
            }
            Err(_) => probes.push(failed_probe(zeta, st)),
        }
    }
    match best {
        Some((delta, _)) => Ok(ResidualOutcome { delta, kappa, probes, stats }),
        None => Err(Error::AllProbesFailed),
    }
}

/// Which residual routine the complete solver uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Path {
    /// `q`-norm path when `p ≥ ln m₂`, binary search otherwise.
    #[default]
    Auto,
    Binary,
    LogM,
}

/// `ResidualSolver` over the MWU-based routines.
#[derive(Debug, Clone, Default)]
pub struct MwuResidualSolver {
    pub path: Path,
    pub mwu: MwuOptions,
    /// Keep every outcome (probes included) for inspection.
    pub keep_outcomes: bool,
    pub outcomes: Vec<ResidualOutcome>,
}

impl MwuResidualSolver {
    pub fn new(path: Path, mwu: MwuOptions) -> Self {
        MwuResidualSolver {
            path,
            mwu,
            keep_outcomes: false,
            outcomes: Vec::new(),
        }
    }

    fn pick(&self, p: f64, m2: usize) -> Path {
        match self.path {
            Path::Auto if p > 2.0 && use_logm_path(p, m2) => Path::LogM,
            Path::Auto => Path::Binary,
            other => other,
        }
    }
}

impl ResidualSolver for MwuResidualSolver {
    fn solve(&mut self, inst: &ProblemInstance, x: &Vector, rp: &ResidualProblem, nu: f64) -> Result<ResidualStep> {
        let out = match self.pick(rp.p, rp.n.nrows()) {
            Path::LogM => logm_residual_solve(inst, x, rp, nu, &self.mwu)?,
            _ => residual_solve(inst, x, rp, nu, &self.mwu)?,
        };
        let step = ResidualStep {
            delta: out.delta.clone(),
            kappa: out.kappa,
            stats: out.stats,
        };
        if self.keep_outcomes {
            self.outcomes.push(out);
        }
        Ok(step)
    }
}

/// Settings of `complete_solve_with`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompleteOptions {
    pub refinement: RefinementOptions,
    pub path: Path,
    pub mwu: MwuOptions,
}

impl CompleteOptions {
    pub fn new(eps: f64, backend: Backend) -> Self {
        CompleteOptions {
            refinement: RefinementOptions::absolute(eps),
            path: Path::Auto,
            mwu: MwuOptions {
                backend,
                instrument: false,
                width_reduction: true,
            },
        }
    }
}

/// Refinement driven by the MWU residual solvers. For `p = 2` the start is
/// replaced by the exact constrained optimum, leaving only `ν` halvings.
pub fn complete_solve(inst: &ProblemInstance, x0: &Vector, eps: f64, backend: Backend) -> Result<(Vector, SolverReport)> {
    complete_solve_with(inst, x0, &CompleteOptions::new(eps, backend))
}

pub fn complete_solve_with(inst: &ProblemInstance, x0: &Vector, opts: &CompleteOptions) -> Result<(Vector, SolverReport)> {
    inst.check_feasible(x0)?;
    let mut ropts = opts.refinement.clone();
    let mut start = x0.clone();
    let mut extra = 0;
    if inst.p() == 2.0 {
        if ropts.nu0.is_none() {
            ropts.nu0 = Some(crate::refinement::default_nu0(inst, x0)?);
        }
        start = inst.quadratic_start()?;
        extra = 1;
    }
    let mut solver = MwuResidualSolver::new(opts.path, opts.mwu);
    let (x, mut report) = iterative_refinement(inst, &start, &mut solver, &ropts)?;
    if extra > 0 {
        report.linear_solves += extra;
        report.objective_trace.insert(0, objective(inst, x0)?);
    }
    Ok((x, report))
}
