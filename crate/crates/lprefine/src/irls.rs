//! Iteratively reweighted least squares: the padded, line-searched variant
//! that provably converges, and the classical fixed-point iteration.

use std::time::Instant;

use log::{debug, info};

use crate::error::{Error, Result};
use crate::linalg::{constrained_least_squares, scale_rows, solve_equality_qp, weighted_gram, KernelProjector, Matrix, Vector};
use crate::refinement::{abs_pow, objective_noise, pnorm_pow, ProblemInstance, SolverReport, StepRecord};

/// One padded weighted-least-squares step.
#[derive(Debug, Clone, PartialEq)]
pub struct IrlsStep {
    pub delta: Vector,
    pub k_ratio: f64,
    pub alpha0: f64,
    pub kappa: f64,
    /// Padding `s = (ν/m)^{(p−2)/p}`.
    pub s: f64,
}

/// `(ν/m)^{(p−2)/p}`.
pub fn padding(nu: f64, m: usize, p: f64) -> f64 {
    (nu / m as f64).powf((p - 2.0) / p)
}

/// Maximizes `gᵀNΔ − ΔᵀNᵀ(R + sI)NΔ` over `AΔ = 0`, with
/// `g = |Nx|^{p−2}∘Nx` and `R = 2Diag(|Nx|^{p−2})`.
pub fn irls_residual(x: &Vector, n: &Matrix, a: &Matrix, nu: f64, p: f64) -> Result<IrlsStep> {
    if x.len() != n.ncols() || a.ncols() != n.ncols() {
        return Err(Error::DimensionMismatch(format!("x {}, N {}x{}, A {}x{}", x.len(), n.nrows(), n.ncols(), a.nrows(), a.ncols())));
    }
    if !(nu > 0.0) {
        return Err(Error::InvalidInput(format!("nu = {nu} must be positive")));
    }
    let m = n.nrows();
    let nx = n * x;
    let wts = nx.map(|t| abs_pow(t, p - 2.0));
    let g = wts.component_mul(&nx);
    let s = padding(nu, m, p);
    let diag = wts.map(|w| 2.0 * w + s);
    let q = weighted_gram(n, &diag);
    let h = n.tr_mul(&g);
    if h.amax() == 0.0 {
        return Err(Error::DegenerateStep);
    }
    let sol = solve_equality_qp(&(&q * 2.0), &h, a, &Vector::zeros(a.nrows()))?;
    let delta = sol.x;
    let nd = n * &delta;
    let quad: f64 = nd.iter().zip(diag.iter()).map(|(v, d)| d * v * v).sum();
    if !(quad > 0.0) {
        return Err(Error::DegenerateStep);
    }
    let k_ratio = pnorm_pow(&nd, p) / quad;
    let alpha0 = (0.5f64).min(1.0 / (2.0 * k_ratio.powf(1.0 / (p - 1.0))));
    let kappa = 8192.0 * p * p / alpha0;
    Ok(IrlsStep {
        delta,
        k_ratio,
        alpha0,
        kappa,
        s,
    })
}

/// `argmin_{β ≥ 0} ‖N(x − βΔ)‖ₚᵖ`.
///
/// The bracket doubles from `[0, 1]` until the slope turns nonnegative,
/// golden-section search narrows it, and bisection on the slope finishes
/// to relative accuracy `1e-12`.
pub fn line_search(n: &Matrix, x: &Vector, delta: &Vector, p: f64) -> f64 {
    let u = n * x;
    let v = n * delta;
    line_search_1d(&u, &v, p)
}

fn line_search_1d(u: &Vector, v: &Vector, p: f64) -> f64 {
    let phi = |b: f64| -> f64 { u.iter().zip(v.iter()).map(|(ui, vi)| abs_pow(ui - b * vi, p)).sum() };
    let slope = |b: f64| -> f64 {
        -p * u
            .iter()
            .zip(v.iter())
            .map(|(ui, vi)| {
                let r = ui - b * vi;
                abs_pow(r, p - 2.0) * r * vi
            })
            .sum::<f64>()
    };
    if v.amax() == 0.0 || slope(0.0) >= 0.0 {
        return 0.0;
    }
    let mut hi = 1.0;
    let mut doublings = 0;
    while slope(hi) < 0.0 && doublings < 200 {
        hi *= 2.0;
        doublings += 1;
    }
    let mut lo = if doublings > 0 { hi / 2.0 } else { 0.0 };
    let gr = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = hi - gr * (hi - lo);
    let mut d = lo + gr * (hi - lo);
    let (mut fc, mut fd) = (phi(c), phi(d));
    while hi - lo > 1e-6 * hi.max(1e-300) {
        if fc <= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - gr * (hi - lo);
            fc = phi(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + gr * (hi - lo);
            fd = phi(d);
        }
    }
    // The minimizer may sit just outside the final golden bracket when
    // values are flat; widen to a slope-certified bracket.
    let mut span = (hi - lo).max(1e-300);
    while lo > 0.0 && slope(lo) > 0.0 {
        lo = (lo - span).max(0.0);
        span *= 2.0;
    }
    span = (hi - lo).max(1e-300);
    while slope(hi) < 0.0 {
        hi += span;
        span *= 2.0;
    }
    for _ in 0..200 {
        if hi - lo <= 1e-12 * hi.max(f64::MIN_POSITIVE) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if slope(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Padded IRLS with line search, started from the `ℓ2` minimizer. Stops once
/// `ν ≤ (ε/2)‖Nx‖ₚᵖ`.
pub fn irls_solve(a: &Matrix, n: &Matrix, b: &Vector, p: f64, eps: f64) -> Result<(Vector, SolverReport)> {
    let start = Instant::now();
    let dim = n.ncols();
    let inst = ProblemInstance::new(a.clone(), Matrix::zeros(0, dim), n.clone(), Vector::zeros(dim), b.clone(), p)?;
    if !(eps > 0.0) {
        return Err(Error::InvalidInput(format!("eps = {eps} must be positive")));
    }
    let mut x = inst.quadratic_start()?;
    let mut fx = pnorm_pow(&(n * &x), p);
    let mut report = SolverReport {
        objective_trace: vec![fx],
        linear_solves: 1,
        ..Default::default()
    };
    let mut nu = fx;
    report.nu0 = nu;
    if p == 2.0 {
        report.converged = true;
        report.wall_seconds = start.elapsed().as_secs_f64();
        return Ok((x, report));
    }
    let kernel = KernelProjector::new(a);
    let mut passes = 0usize;
    while nu > 0.5 * eps * fx && nu > f64::MIN_POSITIVE {
        passes += 1;
        if passes > 1_000_000 {
            return Err(Error::NoConvergence(passes));
        }
        report.nu_trace.push(nu);
        let step = match irls_residual(&x, n, a, nu, p) {
            Ok(s) => Some(s),
            Err(Error::DegenerateStep) => None,
            Err(e) => return Err(e),
        };
        report.linear_solves += 1;
        let (accepted, kappa, decrease, resid) = match &step {
            Some(st) => {
                let delta = kernel.project(&st.delta);
                let beta = line_search(n, &x, &delta, p);
                let cand = &x - &delta * beta;
                let fc = pnorm_pow(&(n * &cand), p);
                let decrease = fx - fc;
                let thr = nu / (32.0 * p * st.kappa);
                let ok = decrease >= thr && decrease > objective_noise(&inst, &x);
                if ok {
                    x = cand;
                    fx = fc;
                }
                (ok, st.kappa, decrease, f64::NAN)
            }
            None => (false, f64::NAN, 0.0, 0.0),
        };
        if accepted {
            report.refinement_steps += 1;
            report.objective_trace.push(fx);
        } else {
            nu /= 2.0;
            report.nu_halvings += 1;
        }
        if kappa.is_finite() {
            report.kappa_eff = report.kappa_eff.max(kappa);
        }
        report.kappa_trace.push(kappa);
        report.steps.push(StepRecord {
            nu: *report.nu_trace.last().unwrap(),
            kappa,
            residual: resid,
            decrease,
            accepted,
            objective: fx,
        });
        debug!("irls pass {passes}: nu = {nu:.3e}, f = {fx:.12e}");
    }
    report.converged = true;
    report.wall_seconds = start.elapsed().as_secs_f64();
    info!("irls finished: f = {fx:.12e} after {} steps", report.refinement_steps);
    Ok((x, report))
}

/// The classical iteration `x ← argmin_{Ax=b} Σ |Nxₜ|ₑ^{p−2}(Nx)ₑ²` without
/// padding or line search. Weights are floored at `1e-12·max`. Returns the
/// last iterate and `‖Nx‖ₚᵖ` after every iteration (starting point first);
/// stops early only if a weighted solve fails.
pub fn classic_irls(a: &Matrix, n: &Matrix, b: &Vector, p: f64, max_iters: usize) -> Result<(Vector, Vec<f64>)> {
    let dim = n.ncols();
    let inst = ProblemInstance::new(a.clone(), Matrix::zeros(0, dim), n.clone(), Vector::zeros(dim), b.clone(), p)?;
    let mut x = inst.quadratic_start()?;
    let mut trace = vec![pnorm_pow(&(n * &x), p)];
    let zero = Vector::zeros(n.nrows());
    for _ in 0..max_iters {
        let nx = n * &x;
        let mut w = nx.map(|t| abs_pow(t, p - 2.0));
        let top = w.max();
        if !(top > 0.0) {
            break;
        }
        w.iter_mut().for_each(|v| *v = v.max(1e-12 * top));
        let weighted = scale_rows(n, &w.map(f64::sqrt));
        match constrained_least_squares(&weighted, &zero, a, b) {
            Ok(next) => x = next,
            Err(e) => {
                debug!("classic IRLS stopped: {e}");
                break;
            }
        }
        trace.push(pnorm_pow(&(n * &x), p));
    }
    Ok((x, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn line_search_cancellation() {
        let n = Matrix::identity(1, 1);
        let b = line_search(&n, &Vector::from_element(1, 1.0), &Vector::from_element(1, 1.0), 4.0);
        assert_relative_eq!(b, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn line_search_zero_slope() {
        let n = Matrix::identity(2, 2);
        let b = line_search(&n, &Vector::from_vec(vec![1.0, -1.0]), &Vector::from_vec(vec![1.0, 1.0]), 2.0);
        assert_eq!(b, 0.0);
    }

    #[test]
    fn line_search_far_minimizer() {
        let n = Matrix::identity(1, 1);
        let b = line_search(&n, &Vector::from_element(1, 37.5), &Vector::from_element(1, 1.0), 3.0);
        assert_relative_eq!(b, 37.5, max_relative = 1e-12);
    }

    #[test]
    fn padding_is_one_at_nu_m() {
        assert_relative_eq!(padding(7.0, 7, 5.0), 1.0);
    }

    #[test]
    fn zero_gradient_is_degenerate() {
        let n = Matrix::identity(3, 3);
        let a = Matrix::zeros(0, 3);
        let err = irls_residual(&Vector::zeros(3), &n, &a, 3.0, 4.0).unwrap_err();
        assert_eq!(err, Error::DegenerateStep);
    }

    #[test]
    fn p2_is_immediate() {
        let a = Matrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let n = Matrix::identity(2, 2);
        let b = Vector::from_element(1, 2.0);
        let (x, rep) = irls_solve(&a, &n, &b, 2.0, 1e-10).unwrap();
        assert_relative_eq!(x[0], 1.0, epsilon = 1e-12);
        assert_eq!(rep.refinement_steps, 0);
        let (_, trace) = classic_irls(&a, &n, &b, 2.0, 3).unwrap();
        assert_relative_eq!(trace[0], trace[1], max_relative = 1e-12);
    }
}
