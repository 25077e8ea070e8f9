//! Labeled graphs and the rewrite of `p`-Laplacian label propagation into
//! regression form `min ‖Ax − b‖ₚ` over the unlabeled vertices.

use petgraph::unionfind::UnionFind;

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::refinement::{abs_pow, ProblemInstance};

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledGraph {
    pub n_vertices: usize,
    pub edges: Vec<(usize, usize, f64)>,
    pub labels: Vec<(usize, f64)>,
}

impl LabeledGraph {
    pub fn new(n_vertices: usize, edges: Vec<(usize, usize, f64)>, labels: Vec<(usize, f64)>) -> Result<Self> {
        let g = LabeledGraph {
            n_vertices,
            edges,
            labels,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        for &(u, v, w) in &self.edges {
            if u >= self.n_vertices || v >= self.n_vertices {
                return Err(Error::MalformedGraph(format!("edge ({u}, {v}) out of range")));
            }
            if u == v {
                return Err(Error::MalformedGraph(format!("self-loop at vertex {u}")));
            }
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::MalformedGraph(format!("edge ({u}, {v}) has weight {w}")));
            }
        }
        let mut seen = vec![false; self.n_vertices];
        for &(v, val) in &self.labels {
            if v >= self.n_vertices {
                return Err(Error::MalformedGraph(format!("label on missing vertex {v}")));
            }
            if std::mem::replace(&mut seen[v], true) {
                return Err(Error::MalformedGraph(format!("vertex {v} labeled twice")));
            }
            if !val.is_finite() {
                return Err(Error::MalformedGraph(format!("vertex {v} has label {val}")));
            }
        }
        Ok(())
    }

    /// Reads `u v weight` lines and `vertex value` lines; `#` starts a
    /// comment and a missing weight means 1.
    pub fn parse(edges: &str, labels: &str) -> Result<Self> {
        let mut es = Vec::new();
        let mut top = 0usize;
        for (ln, line) in content_lines(edges) {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() < 2 || f.len() > 3 {
                return Err(Error::MalformedGraph(format!("edge line {ln}: expected `u v weight`")));
            }
            let u = parse_index(f[0], ln)?;
            let v = parse_index(f[1], ln)?;
            let w = if f.len() == 3 { parse_real(f[2], ln)? } else { 1.0 };
            top = top.max(u + 1).max(v + 1);
            es.push((u, v, w));
        }
        let mut ls = Vec::new();
        for (ln, line) in content_lines(labels) {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 2 {
                return Err(Error::MalformedGraph(format!("label line {ln}: expected `vertex value`")));
            }
            let v = parse_index(f[0], ln)?;
            top = top.max(v + 1);
            ls.push((v, parse_real(f[1], ln)?));
        }
        LabeledGraph::new(top, es, ls)
    }
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.split('#').next().unwrap_or("").trim();
        (!l.is_empty()).then_some((i + 1, l))
    })
}

fn parse_index(s: &str, ln: usize) -> Result<usize> {
    s.parse().map_err(|_| Error::MalformedGraph(format!("line {ln}: bad vertex `{s}`")))
}

fn parse_real(s: &str, ln: usize) -> Result<f64> {
    s.parse().map_err(|_| Error::MalformedGraph(format!("line {ln}: bad number `{s}`")))
}

/// Edge-vertex incidence: `+1` at the lower endpoint, `−1` at the higher.
pub fn build_incidence(g: &LabeledGraph) -> Result<Matrix> {
    g.validate()?;
    let mut b = Matrix::zeros(g.edges.len(), g.n_vertices);
    for (row, &(u, v, _)) in g.edges.iter().enumerate() {
        b[(row, u.min(v))] = 1.0;
        b[(row, u.max(v))] = -1.0;
    }
    Ok(b)
}

/// `Σ wₑ|x_u − x_v|ᵖ`.
pub fn p_laplacian(g: &LabeledGraph, values: &Vector, p: f64) -> f64 {
    g.edges.iter().map(|&(u, v, w)| w * abs_pow(values[u] - values[v], p)).sum()
}

/// `A = W^{1/p}B_U`, `b = −W^{1/p}B_L g`.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphRegression {
    pub a: Matrix,
    pub b: Vector,
    /// Vertex behind each column of `A`.
    pub unlabeled: Vec<usize>,
    pub labeled: Vec<usize>,
    pub label_values: Vector,
    /// Column order of `[B_U, B_L]`: unlabeled vertices, then labeled.
    pub permutation: Vec<usize>,
    pub n_vertices: usize,
    pub p: f64,
}

pub fn laplacian_to_regression(g: &LabeledGraph, p: f64) -> Result<GraphRegression> {
    let inc = build_incidence(g)?;
    if g.labels.is_empty() {
        return Err(Error::MalformedGraph("no labeled vertex".into()));
    }
    if !(p >= 1.0) {
        return Err(Error::UnsupportedExponent(p));
    }
    let mut uf = UnionFind::<usize>::new(g.n_vertices);
    for &(u, v, w) in &g.edges {
        if w > 0.0 {
            uf.union(u, v);
        }
    }
    let mut anchored = vec![false; g.n_vertices];
    for &(v, _) in &g.labels {
        anchored[uf.find(v)] = true;
    }
    let mut is_label = vec![false; g.n_vertices];
    for &(v, _) in &g.labels {
        is_label[v] = true;
    }
    for v in 0..g.n_vertices {
        if !is_label[v] && !anchored[uf.find(v)] {
            return Err(Error::MalformedGraph(format!("vertex {v} cannot reach a labeled vertex")));
        }
    }
    let unlabeled: Vec<usize> = (0..g.n_vertices).filter(|&v| !is_label[v]).collect();
    let mut lab: Vec<(usize, f64)> = g.labels.clone();
    lab.sort_by_key(|l| l.0);
    let labeled: Vec<usize> = lab.iter().map(|l| l.0).collect();
    let label_values = Vector::from_iterator(lab.len(), lab.iter().map(|l| l.1));
    let scale = Vector::from_iterator(g.edges.len(), g.edges.iter().map(|e| e.2.powf(1.0 / p)));
    let mut a = Matrix::zeros(g.edges.len(), unlabeled.len());
    for (j, &v) in unlabeled.iter().enumerate() {
        a.set_column(j, &inc.column(v).component_mul(&scale));
    }
    let mut bl = Matrix::zeros(g.edges.len(), labeled.len());
    for (j, &v) in labeled.iter().enumerate() {
        bl.set_column(j, &inc.column(v));
    }
    let b = -(bl * &label_values).component_mul(&scale);
    let permutation = unlabeled.iter().chain(labeled.iter()).copied().collect();
    Ok(GraphRegression {
        a,
        b,
        unlabeled,
        labeled,
        label_values,
        permutation,
        n_vertices: g.n_vertices,
        p,
    })
}

impl GraphRegression {
    /// `‖Ax − b‖ₚᵖ`.
    pub fn residual_norm(&self, x: &Vector) -> f64 {
        (&self.a * x - &self.b).iter().map(|&t| abs_pow(t, self.p)).sum()
    }

    /// Homogenized constrained form over `z = (x, t)`: `N = [A, −b]`,
    /// constraint `t = 1`.
    pub fn to_instance(&self) -> Result<ProblemInstance> {
        let k = self.unlabeled.len();
        let rows = self.a.nrows();
        let mut n = Matrix::zeros(rows, k + 1);
        n.columns_mut(0, k).copy_from(&self.a);
        n.set_column(k, &(-&self.b));
        let mut a = Matrix::zeros(1, k + 1);
        a[(0, k)] = 1.0;
        ProblemInstance::new(a, Matrix::zeros(0, k + 1), n, Vector::zeros(k + 1), Vector::from_element(1, 1.0), self.p)
    }

    /// Unlabeled values from a solution `z = (x, t)` of `to_instance`.
    pub fn extract(&self, z: &Vector) -> Vector {
        let k = self.unlabeled.len();
        z.rows(0, k) / z[k]
    }

    /// Values on every vertex, labels included.
    pub fn assemble(&self, x: &Vector) -> Vector {
        let mut out = Vector::zeros(self.n_vertices);
        for (j, &v) in self.unlabeled.iter().enumerate() {
            out[v] = x[j];
        }
        for (j, &v) in self.labeled.iter().enumerate() {
            out[v] = self.label_values[j];
        }
        out
    }
}
