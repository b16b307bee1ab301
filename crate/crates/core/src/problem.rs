//! Problem model: the two-actor separable QP, linking constraint, bound sets,
//! and the iterate trace shared by the solver, attacks, detector, and mitigator.
//!
//! The problem solved is
//!
//! ```text
//!   min  x' P x + c' x + z' Q z + d' z
//!   s.t. A x + B z = c_link
//! ```
//!
//! with `P`, `Q` symmetric positive semi-definite.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative floor on the least eigenvalue accepted as "positive semi-definite".
/// A strict `> 0` check is numerically brittle for matrices built as `L'L`.
pub const PSD_TOLERANCE: f64 = 1e-9;

/// The linking constraint `A x + B z = c_link` coupling the two actors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkingConstraint {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c_link: DVector<f64>,
}

impl LinkingConstraint {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c_link: DVector<f64>) -> Result<Self> {
        if a.nrows() != b.nrows() || a.nrows() != c_link.len() {
            return Err(Error::Dimension(format!(
                "linking constraint rows disagree: A is {}x{}, B is {}x{}, c has {}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols(),
                c_link.len()
            )));
        }
        Ok(Self { a, b, c_link })
    }

    /// Number of binding constraints.
    pub fn p(&self) -> usize {
        self.a.nrows()
    }

    pub fn check_dims(&self, n: usize, m: usize) -> Result<()> {
        if self.a.ncols() != n || self.b.ncols() != m {
            return Err(Error::Dimension(format!(
                "linking constraint expects x of length {} and z of length {}",
                self.a.ncols(),
                self.b.ncols()
            )));
        }
        Ok(())
    }

    /// For selector-structured constraints, the (column, value) of the single
    /// nonzero in each row of the given matrix. Errors if a row is not a
    /// single-nonzero selector row.
    pub fn selector_entries(mat: &DMatrix<f64>) -> Result<Vec<(usize, f64)>> {
        let mut out = Vec::with_capacity(mat.nrows());
        for r in 0..mat.nrows() {
            let mut found = None;
            for c in 0..mat.ncols() {
                if mat[(r, c)] != 0.0 {
                    if found.is_some() {
                        return Err(Error::Format(format!(
                            "row {r} has more than one nonzero; not a selector"
                        )));
                    }
                    found = Some((c, mat[(r, c)]));
                }
            }
            out.push(found.ok_or_else(|| {
                Error::Format(format!("row {r} is all zero; not a selector"))
            })?);
        }
        Ok(out)
    }
}

/// The two-actor quadratic program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticProblem {
    pub p_cost: DMatrix<f64>,
    pub c_cost: DVector<f64>,
    pub q_cost: DMatrix<f64>,
    pub d_cost: DVector<f64>,
    pub link: LinkingConstraint,
}

impl QuadraticProblem {
    pub fn new(
        p_cost: DMatrix<f64>,
        c_cost: DVector<f64>,
        q_cost: DMatrix<f64>,
        d_cost: DVector<f64>,
        link: LinkingConstraint,
    ) -> Result<Self> {
        let problem = Self {
            p_cost,
            c_cost,
            q_cost,
            d_cost,
            link,
        };
        problem.validate()?;
        Ok(problem)
    }

    pub fn n(&self) -> usize {
        self.p_cost.nrows()
    }

    pub fn m(&self) -> usize {
        self.q_cost.nrows()
    }

    pub fn p(&self) -> usize {
        self.link.p()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        let m = self.m();
        if !self.p_cost.is_square() || !self.q_cost.is_square() {
            return Err(Error::Dimension("cost matrices must be square".into()));
        }
        if self.c_cost.len() != n || self.d_cost.len() != m {
            return Err(Error::Dimension(
                "linear cost lengths disagree with quadratic costs".into(),
            ));
        }
        self.link.check_dims(n, m)?;
        let p = self.p();
        if p < 1 || p > n.min(m) {
            return Err(Error::Dimension(format!(
                "need 1 <= p <= min(n, m); got p={p}, n={n}, m={m}"
            )));
        }
        check_symmetric_psd(&self.p_cost, "P")?;
        check_symmetric_psd(&self.q_cost, "Q")?;
        Ok(())
    }

    /// Objective `W(x, z) = x'Px + c'x + z'Qz + d'z`.
    pub fn objective(&self, x: &DVector<f64>, z: &DVector<f64>) -> f64 {
        (x.transpose() * &self.p_cost * x)[(0, 0)]
            + self.c_cost.dot(x)
            + (z.transpose() * &self.q_cost * z)[(0, 0)]
            + self.d_cost.dot(z)
    }

    /// Analytic gradient of the x-actor objective at `x`: `2 P x + c`.
    pub fn x_gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.p_cost * x * 2.0 + &self.c_cost
    }
}

pub(crate) fn check_symmetric_psd(mat: &DMatrix<f64>, name: &str) -> Result<()> {
    let n = mat.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let diff = (mat[(i, j)] - mat[(j, i)]).abs();
            let scale = mat[(i, j)].abs().max(mat[(j, i)].abs()).max(1.0);
            if diff > 1e-12 * scale {
                return Err(Error::Numerical(format!("{name} is not symmetric")));
            }
        }
    }
    let eig = mat.clone().symmetric_eigen();
    let lambda_min = eig.eigenvalues.min();
    let lambda_max = eig.eigenvalues.max();
    if lambda_min < -PSD_TOLERANCE * lambda_max.max(1.0) {
        return Err(Error::Numerical(format!(
            "{name} is not positive semi-definite (least eigenvalue {lambda_min:.3e})"
        )));
    }
    Ok(())
}

/// Axis-aligned interval bounds on a vector variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Intervals {
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl Intervals {
    pub fn new(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Dimension("interval bound lengths differ".into()));
        }
        for i in 0..lower.len() {
            if lower[i] > upper[i] {
                return Err(Error::Config(format!(
                    "empty interval at dimension {i}: [{}, {}]",
                    lower[i], upper[i]
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// Symmetric box `center ± halfwidth`.
    pub fn around(center: &DVector<f64>, halfwidth: f64) -> Self {
        Self {
            lower: center.map(|v| v - halfwidth),
            upper: center.map(|v| v + halfwidth),
        }
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    /// Closed-set membership.
    pub fn contains(&self, v: &DVector<f64>) -> bool {
        self.violated_dims(v).is_empty()
    }

    /// Dimensions where `v` falls outside the closed interval.
    pub fn violated_dims(&self, v: &DVector<f64>) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| v[i] < self.lower[i] || v[i] > self.upper[i])
            .collect()
    }

    pub fn clamp(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(v.len(), |i, _| v[i].clamp(self.lower[i], self.upper[i]))
    }
}

/// Publicly knowable supersets of the actors' private feasible sets, with
/// per-dimension visibility flags for the public-variable-subset setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublicBounds {
    pub x: Intervals,
    pub z: Intervals,
    pub x_visible: Vec<bool>,
    pub z_visible: Vec<bool>,
}

impl PublicBounds {
    pub fn new(x: Intervals, z: Intervals) -> Self {
        let x_visible = vec![true; x.len()];
        let z_visible = vec![true; z.len()];
        Self {
            x,
            z,
            x_visible,
            z_visible,
        }
    }
}

/// Private feasible sets, held by the actors themselves. Used when
/// constructing infeasibility attacks and in tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivateSets {
    pub x: Intervals,
    pub z: Intervals,
}

/// Iterate state of a running solve. `u` is the scaled dual; the unscaled
/// dual is `rho * u` on demand and is not stored.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    pub x: DVector<f64>,
    pub z: DVector<f64>,
    pub u: DVector<f64>,
    pub k: usize,
}

impl AdmmState {
    pub fn unscaled_dual(&self, rho: f64) -> DVector<f64> {
        &self.u * rho
    }
}

/// Primal residual `r = A x + B z - c_link`.
pub fn primal_residual(state: &AdmmState, link: &LinkingConstraint) -> Result<DVector<f64>> {
    link.check_dims(state.x.len(), state.z.len())?;
    Ok(&link.a * &state.x + &link.b * &state.z - &link.c_link)
}

/// Dual residual `s = rho A' B (z_new - z_old)`.
pub fn dual_residual(
    z_new: &DVector<f64>,
    z_old: &DVector<f64>,
    link: &LinkingConstraint,
    rho: f64,
) -> Result<DVector<f64>> {
    if rho <= 0.0 {
        return Err(Error::Config(format!("rho must be positive, got {rho}")));
    }
    if z_new.len() != z_old.len() || z_new.len() != link.b.ncols() {
        return Err(Error::Dimension("dual residual z lengths disagree".into()));
    }
    Ok(link.a.transpose() * (&link.b * (z_new - z_old)) * rho)
}

/// Why a solve stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    IterationCap,
    DetectorAbort,
}

/// One recorded iterate. `x` is the value the z-actor and aggregator
/// consumed; when an attack or mitigation transformed it, the honest and
/// raw received values are kept alongside.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub k: usize,
    pub x: DVector<f64>,
    pub z: DVector<f64>,
    pub u: DVector<f64>,
    pub r: DVector<f64>,
    pub s: DVector<f64>,
    pub attacked: bool,
    pub mitigated: bool,
    /// Honest x-update output before the attack transformation, when attacked.
    pub x_honest: Option<DVector<f64>>,
    /// Received value before mitigation, when mitigation changed it.
    pub x_received: Option<DVector<f64>>,
}

impl TraceEntry {
    pub fn r_norm(&self) -> f64 {
        self.r.norm()
    }

    pub fn s_norm(&self) -> f64 {
        self.s.norm()
    }
}

/// Full iterate history of one solve, self-contained for offline auditing:
/// carries the linking constraint, dimensions, and the penalty used.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmTrace {
    pub n: usize,
    pub m: usize,
    pub rho: f64,
    pub link: LinkingConstraint,
    pub entries: Vec<TraceEntry>,
    pub termination: Termination,
}

impl AdmmTrace {
    /// Entry for iterate `k`. Entries are dense from 0, so this is an index.
    pub fn entry(&self, k: usize) -> Option<&TraceEntry> {
        self.entries.get(k)
    }

    /// Highest recorded iterate index.
    pub fn last_iterate(&self) -> usize {
        self.entries.len().saturating_sub(1)
    }

    /// Checks the structural invariants: monotone gap-free indices and
    /// `r^i` recomputable bit-for-bit from the stored `x^i`, `z^i`.
    pub fn check_integrity(&self) -> Result<()> {
        for (idx, e) in self.entries.iter().enumerate() {
            if e.k != idx {
                return Err(Error::Format(format!(
                    "trace entry {idx} carries iterate index {}",
                    e.k
                )));
            }
            let recomputed = &self.link.a * &e.x + &self.link.b * &e.z - &self.link.c_link;
            if recomputed != e.r {
                return Err(Error::Format(format!(
                    "stored primal residual at iterate {idx} does not match recomputation"
                )));
            }
        }
        Ok(())
    }
}
