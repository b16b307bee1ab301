//! Independent oracles shared by the integration tests. Everything here is
//! computed by a different route than the library code it checks: closed-form
//! eliminations and a generic iterative minimizer, no ADMM and no Cholesky
//! subproblem factors.

#![allow(dead_code)]

use admm_audit::decentralized::ChainProblem;
use admm_audit::problem::QuadraticProblem;
use nalgebra::{DMatrix, DVector};

/// Effective curvature of the x-actor's objective as seen through the linked
/// coordinates: with x split into unlinked (first n-p) and linked (last p)
/// blocks, the x-update zeroes the unlinked partial derivatives, so the
/// gradient observed on the linked block is that of the partially minimized
/// objective, whose Hessian is the Schur complement
/// `2 (P_11 - P_10 P_00^{-1} P_01)`.
pub fn linked_curvature(problem: &QuadraticProblem) -> DMatrix<f64> {
    let n = problem.n();
    let p = problem.p();
    let np = n - p;
    let p11 = problem.p_cost.view((np, np), (p, p)).clone_owned();
    if np == 0 {
        return p11 * 2.0;
    }
    let p00 = problem.p_cost.view((0, 0), (np, np)).clone_owned();
    let p01 = problem.p_cost.view((0, np), (np, p)).clone_owned();
    let p10 = problem.p_cost.view((np, 0), (p, np)).clone_owned();
    let p00_inv_p01 = p00
        .lu()
        .solve(&p01)
        .expect("unlinked cost block must be invertible for the Schur oracle");
    (p11 - p10 * p00_inv_p01) * 2.0
}

/// Centralized optimum of a chain by variable elimination: consensus-linked
/// coordinates (last of each left node, first of its right neighbor) are
/// merged into one global variable, the combined quadratic is assembled, and
/// `w* = -1/2 Pi^{-1} kappa` is solved directly.
pub struct ChainCentral {
    /// Per-node optimal values in node-local coordinates.
    pub nodes: Vec<DVector<f64>>,
    pub objective: f64,
}

pub fn chain_central_solution(chain: &ChainProblem) -> ChainCentral {
    let num_nodes = chain.nodes.len();
    // Global offsets: node i+1 shares its first p coordinates with the last
    // p coordinates of node i (p from their link), so each node after the
    // first adds dim - p fresh coordinates.
    let mut offsets = Vec::with_capacity(num_nodes);
    let mut dim = 0usize;
    for (i, node) in chain.nodes.iter().enumerate() {
        if i == 0 {
            offsets.push(0);
            dim = node.dim();
        } else {
            let p = chain.links[i - 1].constraint.p();
            offsets.push(dim - p);
            dim += node.dim() - p;
        }
    }
    let mut pi = DMatrix::zeros(dim, dim);
    let mut kappa = DVector::zeros(dim);
    for (i, node) in chain.nodes.iter().enumerate() {
        let o = offsets[i];
        for r in 0..node.dim() {
            for c in 0..node.dim() {
                pi[(o + r, o + c)] += node.quad[(r, c)];
            }
            kappa[o + r] += node.lin[r];
        }
    }
    let w = pi
        .clone()
        .lu()
        .solve(&(&kappa * -0.5))
        .expect("combined chain cost must be invertible");
    let nodes: Vec<DVector<f64>> = chain
        .nodes
        .iter()
        .enumerate()
        .map(|(i, node)| DVector::from_fn(node.dim(), |r, _| w[offsets[i] + r]))
        .collect();
    let objective = (w.transpose() * &pi * &w)[(0, 0)] + kappa.dot(&w);
    ChainCentral { nodes, objective }
}

/// Minimizes `v' R v + r' v + sum_i rho/2 ||M_i v + gamma_i||^2` by conjugate
/// gradients on its normal equations, i.e. a purely iterative route with no
/// matrix factorization, run to machine-level residual.
pub fn minimize_numerically(
    quad: &DMatrix<f64>,
    lin: &DVector<f64>,
    penalties: &[(&DMatrix<f64>, &DVector<f64>)],
    rho: f64,
) -> DVector<f64> {
    let n = quad.nrows();
    let mut a = quad * 2.0;
    let mut b = -lin.clone();
    for (m, gamma) in penalties {
        a += m.transpose() * *m * rho;
        b -= m.transpose() * *gamma * rho;
    }
    let mut v = DVector::zeros(n);
    let mut r = &b - &a * &v;
    let mut p = r.clone();
    let mut rs = r.norm_squared();
    let floor = 1e-28 * b.norm_squared().max(1.0);
    for _ in 0..(8 * n + 32) {
        if rs <= floor {
            break;
        }
        let ap = &a * &p;
        let alpha = rs / p.dot(&ap);
        v += &p * alpha;
        r -= ap * alpha;
        let rs_new = r.norm_squared();
        p = &r + &p * (rs_new / rs);
        rs = rs_new;
    }
    v
}

/// Median of a sample; sorts a copy.
pub fn median(values: &[usize]) -> f64 {
    let mut v = values.to_vec();
    v.sort_unstable();
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid] as f64
    } else {
        (v[mid - 1] + v[mid]) as f64 / 2.0
    }
}
