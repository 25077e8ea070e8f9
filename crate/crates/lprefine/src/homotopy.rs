//! Warm start for pure `ℓp` problems by doubling the exponent.

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::mwu::Backend;
use crate::refinement::{ProblemInstance, RefinementOptions, Tolerance};
use crate::residual::{complete_solve_with, CompleteOptions};

/// Exponents `2, 4, …, 2^{⌊log₂p − 1⌋}` visited by the warm start.
pub fn stage_exponents(p: f64) -> Vec<f64> {
    let top = 2f64.powi(((p.log2() - 1.0) + 1e-12).floor().max(1.0) as i32);
    let mut k = 2.0;
    let mut out = Vec::new();
    while k <= top {
        out.push(k);
        k *= 2.0;
    }
    out
}

/// Output of every stage, starting with the `ℓ2` minimizer.
pub fn homotopy_stages(a: &Matrix, n: &Matrix, b: &Vector, p: f64, backend: Backend) -> Result<Vec<(f64, Vector)>> {
    if !(p >= 2.0) {
        return Err(Error::UnsupportedExponent(p));
    }
    let dim = n.ncols();
    let inst = ProblemInstance::new(a.clone(), Matrix::zeros(0, dim), n.clone(), Vector::zeros(dim), b.clone(), 2.0)?;
    let mut x = inst.quadratic_start()?;
    let mut out = vec![(2.0, x.clone())];
    if p < 4.0 {
        return Ok(out);
    }
    for k in stage_exponents(p).into_iter().skip(1) {
        let ik = inst.with_p(k)?;
        let mut opts = CompleteOptions::new(0.0, backend);
        opts.refinement = RefinementOptions {
            tolerance: Tolerance::Relative(0.5),
            ..RefinementOptions::absolute(0.0)
        };
        x = complete_solve_with(&ik, &x, &opts)?.0;
        out.push((k, x.clone()));
    }
    Ok(out)
}

/// Starting point for exponent `p`: the last stage of the warm start.
pub fn start_solution(a: &Matrix, n: &Matrix, b: &Vector, p: f64, backend: Backend) -> Result<Vector> {
    let mut stages = homotopy_stages(a, n, b, p, backend)?;
    Ok(stages.pop().expect("at least the l2 stage").1)
}
