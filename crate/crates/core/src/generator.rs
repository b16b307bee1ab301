//! Random quadratic-program generation with seeded reproducibility.
//!
//! Dimensions `n`, `m` are uniform integers on `[1, maxdim]`, `p` uniform on
//! `[1, min(n, m)]`. Costs are built as `P = L'L` with `L` entries uniform on
//! `[-S, S]`, so `P` is symmetric PSD by construction; linear costs draw from
//! `[-S^2, S^2]` to match the magnitude of the quadratic entries.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{LinkingConstraint, QuadraticProblem};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    /// Upper bound for the dimensions n and m.
    pub maxdim: usize,
    /// Entry magnitude for the factor matrices L_P, L_Q.
    pub scale: f64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            maxdim: 10,
            scale: 2.5,
            seed: 0,
        }
    }
}

/// Combined-cost matrices with a least eigenvalue below this fraction of
/// `S^2` (the natural eigenvalue scale of the factor construction) are
/// redrawn: they have no usable centralized optimum (solutions blow up) and
/// stall ADMM far past the experiment horizons.
pub const COMBINED_DEFINITENESS_FLOOR: f64 = 0.016;

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.maxdim < 1 {
            return Err(Error::Config("maxdim must be at least 1".into()));
        }
        if self.scale <= 0.0 {
            return Err(Error::Config("scale must be positive".into()));
        }
        Ok(())
    }
}

/// Deterministic per-instance stream derived from (seed, instance index), so
/// batches are order-independent under parallel execution.
pub fn instance_rng(seed: u64, instance: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(seed, instance))
}

/// splitmix64-style mixing of a seed with a stream index.
pub(crate) fn mix(seed: u64, stream: u64) -> u64 {
    let mut v = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    v = (v ^ (v >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    v = (v ^ (v >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    v ^ (v >> 31)
}

/// Coordinate-selector linking constraint: `A` picks the last `p` coordinates
/// of x and `B` the first `p` coordinates of z, with `B` negated so the
/// constraint reads `x_last - z_first = 0` and the central-solution oracle
/// (which merges those coordinates into one shared variable) is exact.
pub fn build_selectors(n: usize, m: usize, p: usize) -> Result<LinkingConstraint> {
    if p < 1 || p > n.min(m) {
        return Err(Error::Dimension(format!(
            "need 1 <= p <= min(n, m); got p={p}, n={n}, m={m}"
        )));
    }
    let mut a = DMatrix::zeros(p, n);
    let mut b = DMatrix::zeros(p, m);
    for r in 0..p {
        a[(r, n - p + r)] = 1.0;
        b[(r, r)] = -1.0;
    }
    LinkingConstraint::new(a, b, DVector::zeros(p))
}

/// Outcome of one generation, including how many PSD-verification retries
/// were needed (fresh draws are counted, never silently hidden).
#[derive(Debug, Clone)]
pub struct GeneratedProblem {
    pub problem: QuadraticProblem,
    pub retries: usize,
}

pub fn generate_problem(cfg: &GeneratorConfig, rng: &mut impl Rng) -> Result<GeneratedProblem> {
    cfg.validate()?;
    let n = rng.gen_range(1..=cfg.maxdim);
    let m = rng.gen_range(1..=cfg.maxdim);
    let p = rng.gen_range(1..=n.min(m));
    let link = build_selectors(n, m, p)?;
    let s = cfg.scale;
    let s2 = s * s;

    let mut retries = 0;
    loop {
        let l_p = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-s..=s));
        let l_q = DMatrix::from_fn(m, m, |_, _| rng.gen_range(-s..=s));
        let p_cost = l_p.transpose() * &l_p;
        let q_cost = l_q.transpose() * &l_q;
        let c_cost = DVector::from_fn(n, |_, _| rng.gen_range(-s2..=s2));
        let d_cost = DVector::from_fn(m, |_, _| rng.gen_range(-s2..=s2));
        match QuadraticProblem::new(p_cost, c_cost, q_cost, d_cost, link.clone())
            .and_then(|pr| check_combined_definiteness(pr, s))
        {
            Ok(problem) => return Ok(GeneratedProblem { problem, retries }),
            Err(_) if retries < 64 => retries += 1,
            Err(e) => return Err(e),
        }
    }
}

fn check_combined_definiteness(problem: QuadraticProblem, scale: f64) -> Result<QuadraticProblem> {
    let pi = crate::solver::CentralQP::from_problem(&problem)?.pi;
    let lambda_min = pi.symmetric_eigen().eigenvalues.min();
    if lambda_min < COMBINED_DEFINITENESS_FLOOR * scale * scale {
        return Err(Error::Numerical(format!(
            "combined cost least eigenvalue {lambda_min:.3e} below floor"
        )));
    }
    Ok(problem)
}
