//! Embedding propagation over the social graph with the symmetrically
//! normalized adjacency `Ŝ = D^{-1/2} S D^{-1/2}`.
//!
//! Minimizing smoothness + `μ`·fitting gives the linear system
//! `(I − Ŝ/(1+μ)) P = μ/(1+μ) P⁰`, solved either densely or by the fixed-point
//! iteration `P ← (Ŝ P + μ P⁰)/(1+μ)`, which contracts because `ρ(Ŝ) ≤ 1`.

use crate::data::SocialGraph;
use crate::error::{Error, Result};
use crate::linalg::{dense_solve, Matrix};

/// Largest graph the dense solver accepts.
pub const DIRECT_SOLVER_LIMIT: usize = 2000;

/// Sparse symmetric matrix in adjacency-list form.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymmetric {
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseSymmetric {
    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, r: usize) -> &[(usize, f64)] {
        &self.rows[r]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.rows[r]
            .iter()
            .find(|&&(n, _)| n == c)
            .map_or(0.0, |&(_, v)| v)
    }

    /// `self · x` for a dense `n × k` matrix.
    pub fn mul(&self, x: &Matrix) -> Matrix {
        let k = x.cols();
        let mut out = Matrix::zeros(self.dim(), k);
        for (r, row) in self.rows.iter().enumerate() {
            let o = out.row_mut(r);
            for &(c, v) in row {
                for (od, xd) in o.iter_mut().zip(x.row(c)) {
                    *od += v * xd;
                }
            }
        }
        out
    }

    pub fn to_dense(&self) -> Matrix {
        let n = self.dim();
        let mut m = Matrix::zeros(n, n);
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, v) in row {
                m.set(r, c, v);
            }
        }
        m
    }
}

/// `Ŝ_ab = s_ab / √(d_a d_b)`; isolated vertices get an all-zero row and column.
pub fn normalized_adjacency(graph: &SocialGraph) -> SparseSymmetric {
    let d = graph.degrees();
    let rows = (0..graph.num_users())
        .map(|a| {
            graph
                .neighbors(a)
                .iter()
                .filter(|&&(b, _)| d[a] > 0.0 && d[b] > 0.0)
                .map(|&(b, w)| (b, w / (d[a] * d[b]).sqrt()))
                .collect()
        })
        .collect();
    SparseSymmetric { rows }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Solver {
    Direct,
    FixedPoint,
}

#[derive(Debug, Clone)]
pub struct PropagationProblem<'a> {
    pub graph: &'a SocialGraph,
    /// `P⁰`, one row per social user.
    pub anchors: &'a Matrix,
    pub tradeoff: f64,
    pub solver: Solver,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl<'a> PropagationProblem<'a> {
    /// Fixed-point solver with tolerance 1e-8 and at most 500 iterations.
    pub fn new(graph: &'a SocialGraph, anchors: &'a Matrix, tradeoff: f64) -> Self {
        Self {
            graph,
            anchors,
            tradeoff,
            solver: Solver::FixedPoint,
            tolerance: 1e-8,
            max_iterations: 500,
        }
    }

    pub fn with_solver(mut self, solver: Solver) -> Self {
        self.solver = solver;
        self
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn with_max_iterations(mut self, max_iterations: usize) -> Self {
        self.max_iterations = max_iterations;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.anchors.rows() != self.graph.num_users() {
            return Err(Error::DimensionMismatch {
                expected: self.graph.num_users(),
                got: self.anchors.rows(),
            });
        }
        if !(self.tradeoff > 0.0 && self.tradeoff.is_finite()) {
            return Err(Error::InvalidConfig("tradeoff mu must be positive".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidConfig("tolerance must be positive".into()));
        }
        if !self.anchors.is_finite() {
            return Err(Error::NumericFailure("non-finite propagation anchors".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Propagation {
    pub embeddings: Matrix,
    pub iterations: usize,
    /// Max-abs residual of the fixed-point equation at the returned solution.
    pub residual: f64,
    /// Frobenius norm of each fixed-point update, in order.
    pub update_norms: Vec<f64>,
}

/// `max |P − (Ŝ P + μ P⁰)/(1+μ)|`.
pub fn fixed_point_residual(s_hat: &SparseSymmetric, p: &Matrix, p0: &Matrix, mu: f64) -> f64 {
    let next = fixed_point_map(s_hat, p, p0, mu);
    next.max_abs_diff(p)
}

fn fixed_point_map(s_hat: &SparseSymmetric, p: &Matrix, p0: &Matrix, mu: f64) -> Matrix {
    let mut next = s_hat.mul(p);
    let inv = 1.0 / (1.0 + mu);
    for (n, a) in next.as_mut_slice().iter_mut().zip(p0.as_slice()) {
        *n = (*n + mu * a) * inv;
    }
    next
}

pub fn propagate(problem: &PropagationProblem<'_>) -> Result<Propagation> {
    problem.validate()?;
    let s_hat = normalized_adjacency(problem.graph);
    let mu = problem.tradeoff;
    let p0 = problem.anchors;
    match problem.solver {
        Solver::Direct => {
            let n = s_hat.dim();
            if n > DIRECT_SOLVER_LIMIT {
                return Err(Error::InvalidConfig(format!(
                    "direct solver limited to {DIRECT_SOLVER_LIMIT} vertices, graph has {n}"
                )));
            }
            let mut a = s_hat.to_dense();
            a.scale(-1.0 / (1.0 + mu));
            for d in 0..n {
                a.set(d, d, a.get(d, d) + 1.0);
            }
            let mut rhs = p0.clone();
            rhs.scale(mu / (1.0 + mu));
            let embeddings = dense_solve(a, rhs)
                .ok_or_else(|| Error::NumericFailure("singular propagation system".into()))?;
            let residual = fixed_point_residual(&s_hat, &embeddings, p0, mu);
            Ok(Propagation {
                embeddings,
                iterations: 0,
                residual,
                update_norms: Vec::new(),
            })
        }
        Solver::FixedPoint => {
            // The error to the exact solution is at most residual/μ, so the
            // stopping threshold is tightened for small μ.
            let threshold = problem.tolerance * mu.min(1.0);
            let mut p = p0.clone();
            let mut update_norms = Vec::new();
            let mut last = f64::INFINITY;
            for it in 0..problem.max_iterations {
                let next = fixed_point_map(&s_hat, &p, p0, mu);
                let residual = next.max_abs_diff(&p);
                let norm = next
                    .as_slice()
                    .iter()
                    .zip(p.as_slice())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                if residual < threshold {
                    return Ok(Propagation {
                        embeddings: p,
                        iterations: it,
                        residual,
                        update_norms,
                    });
                }
                update_norms.push(norm);
                last = residual;
                p = next;
            }
            Err(Error::NoConvergence {
                iterations: problem.max_iterations,
                change: last,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SocialObjective {
    pub smoothness: f64,
    pub fitting: f64,
}

impl SocialObjective {
    pub fn total(&self, tradeoff: f64) -> f64 {
        self.smoothness + tradeoff * self.fitting
    }
}

/// Smoothness `½ Σ_{a,b} s_ab ‖p_a/√d_a − p_b/√d_b‖²` over ordered pairs and
/// fitting `½ Σ_{bridge} ‖p − p⁰‖²`.
pub fn social_objective(
    graph: &SocialGraph,
    p: &Matrix,
    p0: &Matrix,
    bridge_social_users: &[usize],
) -> SocialObjective {
    let d = graph.degrees();
    let mut smoothness = 0.0;
    for (a, b, w) in graph.edges() {
        let (sa, sb) = (d[a].sqrt(), d[b].sqrt());
        let dist: f64 = p
            .row(a)
            .iter()
            .zip(p.row(b))
            .map(|(x, y)| {
                let t = x / sa - y / sb;
                t * t
            })
            .sum();
        // Each unordered edge appears twice in the ordered double sum.
        smoothness += w * dist;
    }
    let fitting = 0.5
        * bridge_social_users
            .iter()
            .map(|&v| {
                p.row(v)
                    .iter()
                    .zip(p0.row(v))
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
            })
            .sum::<f64>();
    SocialObjective {
        smoothness,
        fitting,
    }
}
