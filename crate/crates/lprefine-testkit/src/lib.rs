//! Reference solvers and instance generators shared by the test suites.
//!
//! The reference solver is deliberately built from different machinery than
//! the library: an SVD null-space basis and damped Newton with an Armijo
//! line search on the reduced objective, run until the reduced gradient is
//! at rounding level.

use lprefine::graph::LabeledGraph;
use lprefine::linalg::QuadraticForm;
use lprefine::refinement::ResidualProblem;
use lprefine::rng::{synthetic_instance, SplitMix64, SyntheticSpec};
use lprefine::{Matrix, ProblemInstance, Vector};
use nalgebra::SVD;

#[derive(Debug, Clone)]
pub struct Reference {
    pub x: Vector,
    pub f: f64,
    /// `‖Zᵀ∇f‖∞` over the gradient's term magnitudes.
    pub kkt: f64,
    pub iterations: usize,
}

fn pow_abs(t: f64, p: f64) -> f64 {
    t.abs().powf(p)
}

fn eval(d: &Vector, m: &Matrix, n: &Matrix, p: f64, x: &Vector) -> f64 {
    d.dot(x) + (m * x).norm_squared() + (n * x).iter().map(|&t| pow_abs(t, p)).sum::<f64>()
}

/// Returns `(∇f, term scale)`.
fn gradient(d: &Vector, m: &Matrix, n: &Matrix, p: f64, x: &Vector) -> (Vector, f64) {
    let nx = n * x;
    let s = nx.map(|t| p * pow_abs(t, p - 2.0) * t);
    let gm = m.tr_mul(&(m * x)) * 2.0;
    let gn = n.tr_mul(&s);
    let scale = 1.0 + d.amax() + gm.amax() + gn.amax();
    (d + gm + gn, scale)
}

fn hessian(m: &Matrix, n: &Matrix, p: f64, x: &Vector) -> Matrix {
    let nx = n * x;
    let mut scaled = n.clone();
    for (i, mut row) in scaled.row_iter_mut().enumerate() {
        row *= p * (p - 1.0) * pow_abs(nx[i], p - 2.0);
    }
    m.tr_mul(m) * 2.0 + n.tr_mul(&scaled)
}

/// Orthonormal null-space basis of `A` and a particular solution of `Ax = b`.
pub fn null_space(a: &Matrix, b: &Vector) -> (Matrix, Vector) {
    let dim = a.ncols();
    if a.nrows() == 0 {
        return (Matrix::identity(dim, dim), Vector::zeros(dim));
    }
    let mut pad = Matrix::zeros(dim.max(a.nrows()), dim);
    pad.rows_mut(0, a.nrows()).copy_from(a);
    let svd = SVD::new(pad, true, true);
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let u = svd.u.as_ref().expect("u requested");
    let top = svd.singular_values.max();
    let tol = 1e-12 * top.max(1.0) * dim as f64;
    let mut x0 = Vector::zeros(dim);
    let mut basis = Vec::new();
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > tol {
            let ui = u.column(i).rows(0, a.nrows()).into_owned();
            x0 += vt.row(i).transpose() * (ui.dot(b) / s);
        } else {
            basis.push(vt.row(i).transpose());
        }
    }
    let z = if basis.is_empty() {
        Matrix::zeros(dim, 0)
    } else {
        Matrix::from_columns(&basis)
    };
    (z, x0)
}

/// `min dᵀx + ‖Mx‖² + ‖Nx‖ₚᵖ s.t. Ax = b` by projected Newton.
pub fn reference_solve(a: &Matrix, m: &Matrix, n: &Matrix, d: &Vector, b: &Vector, p: f64) -> Reference {
    let (z, x0) = null_space(a, b);
    let mut x = x0;
    if z.ncols() == 0 {
        let f = eval(d, m, n, p, &x);
        return Reference { x, f, kkt: 0.0, iterations: 0 };
    }
    let mut f = eval(d, m, n, p, &x);
    let mut stalled = 0;
    let mut it = 0;
    let mut kkt = f64::INFINITY;
    while it < 2000 {
        it += 1;
        let (g, scale) = gradient(d, m, n, p, &x);
        let gr = z.tr_mul(&g);
        kkt = gr.amax() / scale;
        if kkt <= 1e-14 {
            break;
        }
        let h = z.tr_mul(&(hessian(m, n, p, &x) * &z));
        let lam = 1e-15 * h.trace().abs().max(f64::MIN_POSITIVE);
        let step = match (h + Matrix::identity(z.ncols(), z.ncols()) * lam).cholesky() {
            Some(c) => -c.solve(&gr),
            None => -gr.clone(),
        };
        let dx = &z * &step;
        let slope = gr.dot(&step);
        let full = &x + &dx;
        let f_full = eval(d, m, n, p, &full);
        if f_full <= f + 1e-4 * slope {
            x = full;
            f = f_full;
            stalled = 0;
            continue;
        }
        // Near the optimum f is flat to rounding; Newton is trusted when the
        // reduced gradient shrinks.
        if f_full <= f + 1e-13 * (1.0 + f.abs()) {
            let (gc, sc) = gradient(d, m, n, p, &full);
            if z.tr_mul(&gc).amax() / sc < kkt {
                x = full;
                f = f_full;
                stalled = 0;
                continue;
            }
        }
        let mut t = 0.5;
        let mut moved = false;
        while t > 1e-12 {
            let cand = &x + &dx * t;
            let fc = eval(d, m, n, p, &cand);
            if fc <= f + 1e-4 * t * slope && fc < f {
                x = cand;
                f = fc;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if moved {
            stalled = 0;
        } else {
            stalled += 1;
            if stalled >= 3 {
                break;
            }
        }
    }
    let (g, scale) = gradient(d, m, n, p, &x);
    kkt = kkt.min(z.tr_mul(&g).amax() / scale);
    Reference { x, f, kkt, iterations: it }
}

pub fn reference_for(inst: &ProblemInstance) -> Reference {
    reference_solve(inst.a(), inst.m_mat(), inst.n_mat(), inst.d_vec(), inst.b(), inst.p())
}

/// `max res_p(Δ)` over `AΔ = 0`, returned as `(Δ*, res_p(Δ*))`.
pub fn reference_residual_max(rp: &ResidualProblem) -> (Vector, f64) {
    let f = rp.r.stacked_factor();
    let zeros = Vector::zeros(rp.a.nrows());
    let r = reference_solve(&rp.a, &f, &rp.n, &(-&rp.g), &zeros, rp.p);
    (r.x, -r.f)
}

/// An MWU instance with a known feasible point `Δ*` whose objective is `ζ`.
#[derive(Debug, Clone)]
pub struct PlantedMwu {
    pub a: Matrix,
    pub m: QuadraticForm,
    pub n: Matrix,
    pub c: Vector,
    pub zeta: f64,
    pub delta_star: Vector,
    pub p: f64,
}

pub fn planted_mwu(seed: u64, dim: usize, d: usize, m1: usize, m2: usize, p: f64) -> PlantedMwu {
    let mut rng = SplitMix64::new(seed);
    let a = rng.normal_matrix(d, dim);
    let mm = rng.normal_matrix(m1, dim);
    let n = rng.normal_matrix(m2, dim);
    let delta_star = rng.normal_vector(dim);
    let c = &a * &delta_star;
    let zeta = (&mm * &delta_star).norm_squared() + (&n * &delta_star).iter().map(|&t| pow_abs(t, p)).sum::<f64>();
    let m = if m1 == 0 {
        QuadraticForm::new(dim)
    } else {
        QuadraticForm::from_factor(mm, 1.0).expect("finite factor")
    };
    PlantedMwu { a, m, n, c, zeta, delta_star, p }
}

/// Connected graph: a random spanning tree plus `extra` random edges, weights
/// in `[0.5, 2]`, `labels` distinct labeled vertices with values in `[−1, 1]`.
pub fn random_graph(seed: u64, vertices: usize, extra: usize, labels: usize) -> LabeledGraph {
    let mut rng = SplitMix64::new(seed);
    let mut edges = Vec::new();
    let mut present = std::collections::HashSet::new();
    for v in 1..vertices {
        let u = rng.below(v);
        present.insert((u, v));
        edges.push((u, v, rng.uniform_in(0.5, 2.0)));
    }
    let mut tries = 0;
    while edges.len() < vertices - 1 + extra && tries < 100 * (extra + 1) {
        tries += 1;
        let (u, v) = (rng.below(vertices), rng.below(vertices));
        let key = (u.min(v), u.max(v));
        if u == v || !present.insert(key) {
            continue;
        }
        edges.push((key.0, key.1, rng.uniform_in(0.5, 2.0)));
    }
    let mut order: Vec<usize> = (0..vertices).collect();
    for i in (1..vertices).rev() {
        order.swap(i, rng.below(i + 1));
    }
    let labs = order.into_iter().take(labels.max(1)).map(|v| (v, rng.uniform_in(-1.0, 1.0))).collect();
    LabeledGraph::new(vertices, edges, labs).expect("generator produces valid graphs")
}

/// Instance with seeded shape: `n ∈ [8, 40]`, `d ∈ [1, n/3]`,
/// `m₂ ∈ [n, 120]`; every other seed adds `M` (up to 120 rows) and a linear
/// term. `pure` drops both.
pub fn random_instance(seed: u64, p: f64, pure: bool) -> ProblemInstance {
    let mut shape = SplitMix64::new(seed ^ 0x5EED_0F_5A17);
    let n = 8 + shape.below(33);
    let d = 1 + shape.below((n / 3).max(1));
    let m2 = n + shape.below(121 - n);
    let general = !pure && seed % 2 == 1;
    let m1 = if general { 1 + shape.below(120) } else { 0 };
    let spec = SyntheticSpec {
        n,
        d,
        m1,
        m2,
        p,
        linear: general,
    };
    synthetic_instance(&spec, seed).expect("generated instances are valid")
}

/// Relative gap `(f − f_ref)/max(|f_ref|, tiny)`.
pub fn relative_gap(f: f64, f_ref: f64) -> f64 {
    (f - f_ref) / f_ref.abs().max(1e-300)
}
