//! Dense kernels: pivoted Cholesky, equality-constrained quadratic
//! minimization, energies and the preconditioned Richardson iteration.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Condition estimate above which a factorization is rejected.
pub const MAX_CONDITION: f64 = 1e14;
/// Relative Tikhonov shift applied before inverting normal matrices.
pub const TIKHONOV: f64 = 1e-12;
/// Relative pivot threshold used to detect redundant constraint rows.
const RANK_TOL: f64 = 1e-12;

/// `Q = Σ cᵢ FᵢᵀFᵢ`, kept as its factors.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForm {
    dim: usize,
    blocks: Vec<(Matrix, f64)>,
}

impl QuadraticForm {
    pub fn new(dim: usize) -> Self {
        QuadraticForm {
            dim,
            blocks: Vec::new(),
        }
    }

    pub fn from_factor(factor: Matrix, scale: f64) -> Result<Self> {
        let mut q = QuadraticForm::new(factor.ncols());
        q.push(factor, scale)?;
        Ok(q)
    }

    /// Identity of size `n` as a single block.
    pub fn identity(n: usize) -> Self {
        QuadraticForm {
            dim: n,
            blocks: vec![(Matrix::identity(n, n), 1.0)],
        }
    }

    /// Diagonal form with nonnegative entries.
    pub fn diagonal(d: &Vector) -> Result<Self> {
        if d.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidInput("diagonal entries must be finite and >= 0".into()));
        }
        let f = Matrix::from_diagonal(&d.map(f64::sqrt));
        QuadraticForm::from_factor(f, 1.0)
    }

    pub fn push(&mut self, factor: Matrix, scale: f64) -> Result<()> {
        if factor.ncols() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "factor block has {} columns, form has dimension {}",
                factor.ncols(),
                self.dim
            )));
        }
        if !(scale >= 0.0) || !scale.is_finite() {
            return Err(Error::InvalidInput(format!("block multiplier {scale} must be finite and >= 0")));
        }
        if factor.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("factor block has non-finite entries".into()));
        }
        if factor.nrows() > 0 && scale > 0.0 {
            self.blocks.push((factor, scale));
        }
        Ok(())
    }

    pub fn with(mut self, factor: Matrix, scale: f64) -> Result<Self> {
        self.push(factor, scale)?;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn blocks(&self) -> &[(Matrix, f64)] {
        &self.blocks
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        for b in &mut out.blocks {
            b.1 *= s;
        }
        out.blocks.retain(|b| b.1 > 0.0);
        out
    }

    /// Assembled `Q`.
    pub fn gram(&self) -> Matrix {
        let mut q = Matrix::zeros(self.dim, self.dim);
        for (f, c) in &self.blocks {
            q += f.tr_mul(f) * *c;
        }
        q
    }

    /// `Qx` through the factors.
    pub fn apply(&self, x: &Vector) -> Vector {
        let mut y = Vector::zeros(self.dim);
        for (f, c) in &self.blocks {
            let fx = f * x;
            y += f.tr_mul(&fx) * *c;
        }
        y
    }

    /// `xᵀQx`.
    pub fn eval(&self, x: &Vector) -> f64 {
        self.blocks
            .iter()
            .map(|(f, c)| c * (f * x).norm_squared())
            .sum()
    }

    /// Rows `√cᵢ Fᵢ` stacked, so that `Q = FᵀF`.
    pub fn stacked_factor(&self) -> Matrix {
        let rows: usize = self.blocks.iter().map(|b| b.0.nrows()).sum();
        let mut out = Matrix::zeros(rows, self.dim);
        let mut at = 0;
        for (f, c) in &self.blocks {
            out.rows_mut(at, f.nrows()).copy_from(&(f * c.sqrt()));
            at += f.nrows();
        }
        out
    }
}

/// `NᵀDiag(r)N`.
pub fn weighted_gram(n: &Matrix, r: &Vector) -> Matrix {
    let mut scaled = n.clone();
    for (mut row, &ri) in scaled.row_iter_mut().zip(r.iter()) {
        row *= ri;
    }
    n.tr_mul(&scaled)
}

/// Rows of `n` multiplied by `s`.
pub fn scale_rows(n: &Matrix, s: &Vector) -> Matrix {
    let mut out = n.clone();
    for (mut row, &si) in out.row_iter_mut().zip(s.iter()) {
        row *= si;
    }
    out
}

/// Diagonally pivoted Cholesky `P A Pᵀ = L Lᵀ` of a symmetric PSD matrix,
/// truncated at the numerical rank.
#[derive(Debug, Clone)]
pub struct PivotedCholesky {
    l: Matrix,
    perm: Vec<usize>,
    rank: usize,
}

impl PivotedCholesky {
    /// Stops once the largest remaining pivot drops below `rel_tol` times
    /// the largest initial diagonal entry.
    pub fn new(a: &Matrix, rel_tol: f64) -> Self {
        let n = a.nrows();
        let mut w = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let max_diag = (0..n).map(|i| a[(i, i)]).fold(0.0, f64::max);
        let mut rank = n;
        for k in 0..n {
            let mut piv = k;
            for j in k + 1..n {
                if w[(j, j)] > w[(piv, piv)] {
                    piv = j;
                }
            }
            let d = w[(piv, piv)];
            if !(d > rel_tol * max_diag) || d <= 0.0 {
                rank = k;
                break;
            }
            if piv != k {
                w.swap_rows(k, piv);
                w.swap_columns(k, piv);
                perm.swap(k, piv);
            }
            let lkk = d.sqrt();
            w[(k, k)] = lkk;
            for i in k + 1..n {
                w[(i, k)] /= lkk;
            }
            // Full trailing update keeps both triangles valid for later swaps.
            for j in k + 1..n {
                let ljk = w[(j, k)];
                if ljk == 0.0 {
                    continue;
                }
                for i in k + 1..n {
                    let lik = w[(i, k)];
                    w[(i, j)] -= lik * ljk;
                }
            }
        }
        let mut l = Matrix::zeros(n, rank);
        for j in 0..rank {
            for i in j..n {
                l[(i, j)] = w[(i, j)];
            }
        }
        PivotedCholesky { l, perm, rank }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    /// Squared ratio of the extreme pivots; a cheap lower bound on the
    /// condition number of the factored block.
    pub fn condition_estimate(&self) -> f64 {
        if self.rank == 0 {
            return f64::INFINITY;
        }
        let first = self.l[(0, 0)];
        let last = self.l[(self.rank - 1, self.rank - 1)];
        (first / last).powi(2)
    }

    /// Basic solution of `A x = b`: exact when `A` has full rank, and a
    /// valid solution for consistent `b` otherwise.
    pub fn solve(&self, b: &Vector) -> Vector {
        let n = self.dim();
        let r = self.rank;
        let mut y = Vector::zeros(r);
        for i in 0..r {
            let mut s = b[self.perm[i]];
            for j in 0..i {
                s -= self.l[(i, j)] * y[j];
            }
            y[i] = s / self.l[(i, i)];
        }
        for i in (0..r).rev() {
            let mut s = y[i];
            for j in i + 1..r {
                s -= self.l[(j, i)] * y[j];
            }
            y[i] = s / self.l[(i, i)];
        }
        let mut x = Vector::zeros(n);
        for i in 0..r {
            x[self.perm[i]] = y[i];
        }
        x
    }

    pub fn solve_matrix(&self, b: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(self.dim(), b.ncols());
        for j in 0..b.ncols() {
            let col = self.solve(&b.column(j).into_owned());
            out.set_column(j, &col);
        }
        out
    }
}

/// Orthogonal projection onto `ker A`, through a pivoted factor of `AAᵀ`.
/// Two correction passes recover the accuracy lost to squaring.
#[derive(Debug, Clone)]
pub struct KernelProjector {
    a: Matrix,
    aat: PivotedCholesky,
}

impl KernelProjector {
    pub fn new(a: &Matrix) -> Self {
        KernelProjector {
            a: a.clone(),
            aat: PivotedCholesky::new(&(a * a.transpose()), RANK_TOL),
        }
    }

    pub fn project(&self, v: &Vector) -> Vector {
        let mut out = v.clone();
        if self.a.nrows() == 0 || self.aat.rank() == 0 {
            return out;
        }
        for _ in 0..2 {
            let y = self.aat.solve(&(&self.a * &out));
            out -= self.a.tr_mul(&y);
        }
        out
    }
}

/// Factorization of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct SpdSolver {
    chol: PivotedCholesky,
    shift: f64,
}

impl SpdSolver {
    /// Factors `Q + λI` with `λ = 1e-12·trace(Q)/n`.
    pub fn new(q: &Matrix) -> Result<Self> {
        let n = q.nrows();
        let shift = if n == 0 { 0.0 } else { TIKHONOV * q.trace() / n as f64 };
        let mut shifted = q.clone();
        for i in 0..n {
            shifted[(i, i)] += shift;
        }
        Self::factor(&shifted, shift)
    }

    /// Factors `Q` without regularization.
    pub fn exact(q: &Matrix) -> Result<Self> {
        Self::factor(q, 0.0)
    }

    fn factor(q: &Matrix, shift: f64) -> Result<Self> {
        if q.nrows() != q.ncols() {
            return Err(Error::DimensionMismatch("matrix is not square".into()));
        }
        if q.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("matrix has non-finite entries".into()));
        }
        let chol = PivotedCholesky::new(q, 0.0);
        if chol.rank() < q.nrows() {
            return Err(Error::SingularSystem(f64::INFINITY));
        }
        let cond = chol.condition_estimate();
        if q.nrows() > 0 && cond > MAX_CONDITION {
            return Err(Error::SingularSystem(cond));
        }
        Ok(SpdSolver { chol, shift })
    }

    pub fn dim(&self) -> usize {
        self.chol.dim()
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn condition_estimate(&self) -> f64 {
        self.chol.condition_estimate()
    }

    pub fn solve(&self, b: &Vector) -> Vector {
        self.chol.solve(b)
    }

    pub fn solve_matrix(&self, b: &Matrix) -> Matrix {
        self.chol.solve_matrix(b)
    }

    pub fn inverse(&self) -> Matrix {
        let n = self.dim();
        let mut z = self.solve_matrix(&Matrix::identity(n, n));
        symmetrize(&mut z);
        z
    }
}

pub fn symmetrize(a: &mut Matrix) {
    let n = a.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

pub fn feasibility_tolerance(rhs: &Vector) -> f64 {
    1e-8 * (1.0 + rhs.amax())
}

/// Solution of an equality-constrained quadratic program together with its
/// multipliers.
#[derive(Debug, Clone)]
pub struct KktSolution {
    pub x: Vector,
    pub multipliers: Vector,
}

/// Given `Y = Q⁻¹Cᵀ` and `Q⁻¹h`, finishes
/// `min ½xᵀQx − hᵀx  s.t.  Cx = d` by a Schur-complement solve.
pub fn finish_kkt(qinv_ct: &Matrix, qinv_h: &Vector, c: &Matrix, d: &Vector) -> Result<KktSolution> {
    if c.nrows() != d.len() || c.ncols() != qinv_h.len() || qinv_ct.ncols() != c.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "constraints {}x{} with rhs {} and dimension {}",
            c.nrows(),
            c.ncols(),
            d.len(),
            qinv_h.len()
        )));
    }
    if c.nrows() == 0 {
        return Ok(KktSolution {
            x: qinv_h.clone(),
            multipliers: Vector::zeros(0),
        });
    }
    let mut s = c * qinv_ct;
    symmetrize(&mut s);
    let rhs = d - c * qinv_h;
    let chol = PivotedCholesky::new(&s, RANK_TOL);
    let y = chol.solve(&rhs);
    let x = qinv_h + qinv_ct * &y;
    let resid = (c * &x - d).amax();
    if !resid.is_finite() || resid > feasibility_tolerance(d) {
        return Err(Error::InfeasibleConstraint(resid));
    }
    Ok(KktSolution { x, multipliers: y })
}

/// `min ½xᵀQx − hᵀx  s.t.  Cx = d` for an assembled `Q`.
pub fn solve_equality_qp(q: &Matrix, h: &Vector, c: &Matrix, d: &Vector) -> Result<KktSolution> {
    if q.nrows() != h.len() {
        return Err(Error::DimensionMismatch(format!(
            "Q is {}x{}, linear term has length {}",
            q.nrows(),
            q.ncols(),
            h.len()
        )));
    }
    let solver = SpdSolver::new(q)?;
    let y = solver.solve_matrix(&c.transpose());
    finish_kkt(&y, &solver.solve(h), c, d)
}

/// `argmin ‖Ax − b‖₂  s.t.  Cx = d`.
pub fn constrained_least_squares(a: &Matrix, b: &Vector, c: &Matrix, d: &Vector) -> Result<Vector> {
    if a.nrows() != b.len() || c.ncols() != a.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "A is {}x{}, b has length {}, C has {} columns",
            a.nrows(),
            a.ncols(),
            b.len(),
            c.ncols()
        )));
    }
    let q = a.tr_mul(a);
    let h = a.tr_mul(b);
    Ok(solve_equality_qp(&q, &h, c, d)?.x)
}

/// Minimizer of `ΔᵀQΔ` subject to `AΔ = c` and its value `cᵀ(AQ⁻¹Aᵀ)⁻¹c`.
#[derive(Debug, Clone)]
pub struct Minimizer {
    pub delta: Vector,
    pub energy: f64,
}

pub fn min_quadratic_assembled(q: &Matrix, a: &Matrix, c: &Vector) -> Result<Minimizer> {
    if q.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "Q has dimension {}, A has {} columns",
            q.nrows(),
            a.ncols()
        )));
    }
    let solver = SpdSolver::new(q)?;
    let y = solver.solve_matrix(&a.transpose());
    minimizer_from_solves(&y, a, c)
}

/// Completes the minimizer from `Y = Q⁻¹Aᵀ`, however it was obtained.
pub fn minimizer_from_solves(qinv_at: &Matrix, a: &Matrix, c: &Vector) -> Result<Minimizer> {
    let zero = Vector::zeros(a.ncols());
    let sol = finish_kkt(qinv_at, &zero, a, c)?;
    // ½ scaling in finish_kkt is irrelevant when h = 0; the energy is cᵀy.
    let energy = c.dot(&sol.multipliers).max(0.0);
    Ok(Minimizer {
        delta: sol.x,
        energy,
    })
}

pub fn min_quadratic_under_constraints(q: &QuadraticForm, a: &Matrix, c: &Vector) -> Result<Vector> {
    Ok(min_quadratic_assembled(&q.gram(), a, c)?.delta)
}

/// `Ψ = cᵀ(AQ⁻¹Aᵀ)⁻¹c`, the optimal value of `min ΔᵀQΔ s.t. AΔ = c`.
pub fn energy(q: &QuadraticForm, a: &Matrix, c: &Vector) -> Result<f64> {
    Ok(min_quadratic_assembled(&q.gram(), a, c)?.energy)
}

pub fn richardson_budget(tol: f64) -> usize {
    (100.0 * (1.0 / tol).ln()).ceil().max(1.0) as usize
}

/// Richardson iteration `x ← x − P(Qx − b)` from `x = 0`.
///
/// Returns the iterate and the number of updates taken; fails with
/// `NoConvergence` after `100·ln(1/tol)` updates.
pub fn preconditioned_solve<P>(precond: P, q: &QuadraticForm, b: &Vector, tol: f64) -> Result<(Vector, usize)>
where
    P: Fn(&Vector) -> Vector,
{
    if b.len() != q.dim() {
        return Err(Error::DimensionMismatch(format!(
            "rhs has length {}, form has dimension {}",
            b.len(),
            q.dim()
        )));
    }
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::InvalidInput(format!("tolerance {tol} must lie in (0, 1)")));
    }
    let target = tol * b.norm();
    let budget = richardson_budget(tol);
    let mut x = Vector::zeros(b.len());
    let mut resid = -b.clone();
    let mut iters = 0;
    loop {
        let norm = resid.norm();
        if !norm.is_finite() {
            return Err(Error::NoConvergence(iters));
        }
        if norm <= target {
            break;
        }
        if iters >= budget {
            return Err(Error::NoConvergence(iters));
        }
        x -= precond(&resid);
        resid = q.apply(&x) - b;
        iters += 1;
    }
    Ok((x, iters))
}
