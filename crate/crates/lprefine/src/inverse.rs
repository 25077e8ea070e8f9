//! Lazy inverse maintenance for the MWU oracle.
//!
//! Tracks reference resistances `r̂` with bucketed change counters, keeps
//! `Ẑ = (MᵀM + NᵀDiag(r̂)N)⁻¹` current through Woodbury updates on the
//! entries that moved enough, and solves the live system by preconditioned
//! Richardson iteration.

use log::debug;

use crate::error::{Error, Result};
use crate::linalg::{
    minimizer_from_solves, preconditioned_solve, scale_rows, symmetrize, weighted_gram, Matrix, Minimizer, PivotedCholesky,
    QuadraticForm, SpdSolver, Vector, MAX_CONDITION,
};

/// Counters reported after a run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InverseStats {
    pub updates: usize,
    pub woodbury_updates: usize,
    pub full_refreshes: usize,
    /// `Σᵢ |E_changed⁽ⁱ⁾|`.
    pub changed_total: usize,
    /// Entries moved into `E_changed` by each bucket `η`.
    pub bucket_totals: Vec<usize>,
    pub richardson_iterations: usize,
    pub solves: usize,
    /// Extremes of `rₑ/r̂ₑ` seen right after each update.
    pub min_ratio: f64,
    pub max_ratio: f64,
}

#[derive(Debug, Clone)]
pub struct InverseState {
    m_form: QuadraticForm,
    m_gram: Matrix,
    n: Matrix,
    r_hat: Vector,
    /// `counters[η][e]`.
    counters: Vec<Vec<u32>>,
    z_hat: Matrix,
    step_index: usize,
    stats: InverseStats,
}

/// `⌈log₂ m⌉`, the largest bucket index.
pub fn bucket_count(m: usize) -> usize {
    if m <= 1 {
        0
    } else {
        (usize::BITS - (m - 1).leading_zeros()) as usize
    }
}

/// Least `η ≥ 0` with `2^{−η} ≤ ratio`.
pub fn least_bucket(ratio: f64) -> Option<usize> {
    if !(ratio > 0.0) {
        return None;
    }
    if ratio >= 1.0 {
        return Some(0);
    }
    let mut eta = (-ratio.log2()).ceil().max(0.0) as usize;
    while eta > 0 && 2f64.powi(-(eta as i32 - 1)) <= ratio {
        eta -= 1;
    }
    while 2f64.powi(-(eta as i32)) > ratio {
        eta += 1;
    }
    Some(eta)
}

/// State with `M` given by its factor.
pub fn inverse_init(m: &Matrix, n: &Matrix, r0: &Vector) -> Result<InverseState> {
    InverseState::new(QuadraticForm::from_factor(m.clone(), 1.0)?, n.clone(), r0.clone())
}

impl InverseState {
    pub fn new(m_form: QuadraticForm, n: Matrix, r0: Vector) -> Result<Self> {
        if m_form.dim() != n.ncols() || r0.len() != n.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "form dimension {}, N {}x{}, r {}",
                m_form.dim(),
                n.nrows(),
                n.ncols(),
                r0.len()
            )));
        }
        if r0.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidInput("resistances must be finite and >= 0".into()));
        }
        let m_gram = m_form.gram();
        let levels = bucket_count(n.nrows()) + 1;
        let z_hat = invert(&(&m_gram + weighted_gram(&n, &r0)))?;
        Ok(InverseState {
            m_form,
            m_gram,
            counters: vec![vec![0; n.nrows()]; levels],
            n,
            r_hat: r0,
            z_hat,
            step_index: 0,
            stats: InverseStats {
                bucket_totals: vec![0; levels],
                min_ratio: 1.0,
                max_ratio: 1.0,
                ..Default::default()
            },
        })
    }

    pub fn r_hat(&self) -> &Vector {
        &self.r_hat
    }
    pub fn z_hat(&self) -> &Matrix {
        &self.z_hat
    }
    pub fn step_index(&self) -> usize {
        self.step_index
    }
    pub fn counters(&self) -> &[Vec<u32>] {
        &self.counters
    }
    pub fn stats(&self) -> &InverseStats {
        &self.stats
    }

    /// `MᵀM + NᵀDiag(r̂)N`, assembled.
    pub fn reference_matrix(&self) -> Matrix {
        &self.m_gram + weighted_gram(&self.n, &self.r_hat)
    }

    /// Re-inverts at `r` and clears every counter.
    pub fn refresh(&mut self, r: &Vector) -> Result<()> {
        self.r_hat = r.clone();
        for row in &mut self.counters {
            row.iter_mut().for_each(|c| *c = 0);
        }
        self.z_hat = invert(&self.reference_matrix())?;
        self.stats.full_refreshes += 1;
        Ok(())
    }

    /// Records the move `r_prev → r_cur` and refreshes `r̂`, `Ẑ` on the
    /// entries whose counters fire. Returns `E_changed`.
    pub fn update(&mut self, r_prev: &Vector, r_cur: &Vector) -> Result<Vec<usize>> {
        let m = self.n.nrows();
        if r_prev.len() != m || r_cur.len() != m {
            return Err(Error::DimensionMismatch(format!("resistance vectors must have length {m}")));
        }
        let top = self.counters.len() - 1;
        for e in 0..m {
            let change = r_cur[e] - r_prev[e];
            if change < 0.0 {
                return Err(Error::InvalidInput(format!("resistance {e} decreased")));
            }
            if let Some(eta) = least_bucket(change / self.r_hat[e]) {
                if eta <= top {
                    self.counters[eta][e] += 1;
                }
            }
        }
        self.step_index += 1;
        let mut changed = Vec::new();
        let mut seen = vec![false; m];
        for eta in 0..=top {
            if self.step_index % (1usize << eta) != 0 {
                continue;
            }
            let need = 1u32 << eta;
            for e in 0..m {
                if !seen[e] && self.counters[eta][e] >= need {
                    seen[e] = true;
                    changed.push(e);
                    self.stats.bucket_totals[eta] += 1;
                }
            }
        }
        changed.sort_unstable();
        let delta: Vec<f64> = changed.iter().map(|&e| r_cur[e] - self.r_hat[e]).collect();
        for &e in &changed {
            self.r_hat[e] = r_cur[e];
            for row in &mut self.counters {
                row[e] = 0;
            }
        }
        self.stats.updates += 1;
        self.stats.changed_total += changed.len();
        let live: Vec<(usize, f64)> = changed.iter().copied().zip(delta).filter(|&(_, d)| d > 0.0).collect();
        if !live.is_empty() {
            match self.woodbury(&live) {
                Ok(()) => self.stats.woodbury_updates += 1,
                Err(Error::SingularUpdate) => {
                    debug!("Woodbury update singular; re-inverting");
                    let r = self.r_hat.clone();
                    self.refresh(&r)?;
                }
                Err(e) => return Err(e),
            }
        }
        for e in 0..m {
            if self.r_hat[e] > 0.0 {
                let ratio = r_cur[e] / self.r_hat[e];
                self.stats.min_ratio = self.stats.min_ratio.min(ratio);
                self.stats.max_ratio = self.stats.max_ratio.max(ratio);
            }
        }
        Ok(changed)
    }

    /// `Ẑ ← Ẑ − ẐN_Sᵀ(Diag(Δr_S)⁻¹ + N_S Ẑ N_Sᵀ)⁻¹N_S Ẑ`.
    fn woodbury(&mut self, live: &[(usize, f64)]) -> Result<()> {
        let n = self.n.ncols();
        let s = live.len();
        let mut ns = Matrix::zeros(s, n);
        for (row, &(e, _)) in live.iter().enumerate() {
            ns.set_row(row, &self.n.row(e));
        }
        let u = &self.z_hat * ns.transpose();
        let mut mid = &ns * &u;
        for (j, &(_, d)) in live.iter().enumerate() {
            mid[(j, j)] += 1.0 / d;
        }
        symmetrize(&mut mid);
        let chol = PivotedCholesky::new(&mid, 0.0);
        if chol.rank() < s || chol.condition_estimate() > MAX_CONDITION {
            return Err(Error::SingularUpdate);
        }
        let corr = &u * chol.solve_matrix(&u.transpose());
        self.z_hat -= corr;
        symmetrize(&mut self.z_hat);
        Ok(())
    }

    /// Solves `min Δᵀ(MᵀM + NᵀDiag(r)N)Δ  s.t.  AΔ = c` with `Ẑ` as the
    /// preconditioner; on a stale preconditioner refreshes once and retries.
    pub fn solve(&mut self, a: &Matrix, c: &Vector, r: &Vector, tol: f64) -> Result<Minimizer> {
        let y = match self.precond_columns(a, r, tol) {
            Ok(y) => y,
            Err(Error::NoConvergence(_)) => {
                debug!("stale preconditioner; refreshing");
                self.refresh(r)?;
                self.precond_columns(a, r, tol)?
            }
            Err(e) => return Err(e),
        };
        self.stats.solves += 1;
        minimizer_from_solves(&y, a, c)
    }

    fn precond_columns(&mut self, a: &Matrix, r: &Vector, tol: f64) -> Result<Matrix> {
        let q = self.m_form.clone().with(scale_rows(&self.n, &r.map(f64::sqrt)), 1.0)?;
        // Spectrum of ẐQ lies in [lo, hi]; the damped step is optimal there.
        let (mut lo, mut hi) = (1.0f64, 1.0f64);
        for e in 0..r.len() {
            if self.r_hat[e] > 0.0 {
                let t = r[e] / self.r_hat[e];
                lo = lo.min(t);
                hi = hi.max(t);
            } else if r[e] > 0.0 {
                hi = f64::INFINITY;
            }
        }
        let omega = if hi.is_finite() { 2.0 / (lo + hi) } else { 1.0 };
        let z = &self.z_hat;
        let mut out = Matrix::zeros(a.ncols(), a.nrows());
        for j in 0..a.nrows() {
            let rhs = a.row(j).transpose();
            let (col, iters) = preconditioned_solve(|v| (z * v) * omega, &q, &rhs, tol)?;
            self.stats.richardson_iterations += iters;
            out.set_column(j, &col);
        }
        Ok(out)
    }
}

/// Applies the recorded move and returns the updated state.
pub fn update_inverse(mut state: InverseState, r_prev: &Vector, r_cur: &Vector) -> Result<InverseState> {
    state.update(r_prev, r_cur)?;
    Ok(state)
}

pub fn maintained_oracle_solve(state: &mut InverseState, a: &Matrix, c: &Vector, r_cur: &Vector, tol: f64) -> Result<Vector> {
    Ok(state.solve(a, c, r_cur, tol)?.delta)
}

fn invert(k: &Matrix) -> Result<Matrix> {
    Ok(SpdSolver::exact(k)?.inverse())
}
