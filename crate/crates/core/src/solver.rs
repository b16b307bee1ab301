//! Scaled-form ADMM with analytic QP subproblem updates, stopping criteria,
//! pluggable attack/detector/mitigator hooks, and the centralized oracle
//! used for verification.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::attack::{self, AttackSpec, AttackVector};
use crate::detector::{DetectionReport, DetectorConfig, OnlineAudit};
use crate::error::{Error, Result};
use crate::mitigator;
use crate::problem::{
    AdmmTrace, LinkingConstraint, PrivateSets, PublicBounds, QuadraticProblem, Termination,
    TraceEntry,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmmConfig {
    pub rho: f64,
    pub eps_pri: f64,
    pub eps_dual: f64,
    pub max_iterations: usize,
    /// Initial z; defaults to all ones.
    #[serde(default)]
    pub z0: Option<Vec<f64>>,
    /// Initial scaled dual; defaults to zeros.
    #[serde(default)]
    pub u0: Option<Vec<f64>>,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        Self {
            rho: 1.0,
            eps_pri: 1e-4,
            eps_dual: 1e-4,
            max_iterations: 500,
            z0: None,
            u0: None,
        }
    }
}

impl AdmmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rho <= 0.0 {
            return Err(Error::Config("rho must be positive".into()));
        }
        if self.eps_pri <= 0.0 || self.eps_dual <= 0.0 {
            return Err(Error::Config("convergence thresholds must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be positive".into()));
        }
        Ok(())
    }
}

/// Optional per-solve behaviors. Attack transforms the honest x-update before
/// it is "sent"; the mitigator projects the received value before the z-update
/// consumes it; the detector audits the trace as it grows.
#[derive(Default, Clone, Copy)]
pub struct Hooks<'a> {
    pub attack: Option<&'a AttackSpec>,
    pub detector: Option<&'a DetectorConfig>,
    pub mitigate: bool,
    pub bounds: Option<&'a PublicBounds>,
    pub private_sets: Option<&'a PrivateSets>,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub trace: AdmmTrace,
    pub detection: Option<DetectionReport>,
}

/// Cholesky factor of `2 R + rho * sum_i M_i' M_i`, reused across iterations
/// since the subproblem matrices are iterate-independent.
pub(crate) struct SubproblemFactor {
    chol: Cholesky<f64, Dyn>,
}

impl SubproblemFactor {
    pub(crate) fn new(quad: &DMatrix<f64>, penalties: &[&DMatrix<f64>], rho: f64) -> Result<Self> {
        let mut mat = quad * 2.0;
        for m in penalties {
            mat += m.transpose() * *m * rho;
        }
        let chol = Cholesky::new(mat.clone()).ok_or_else(|| {
            let cond = condition_estimate(&mat);
            Error::Numerical(format!(
                "subproblem matrix is not positive definite (condition estimate {cond:.3e})"
            ))
        })?;
        Ok(Self { chol })
    }

    /// Minimizer of `v'Rv + r'v + sum_i rho/2 ||M_i v + gamma_i||^2`, given
    /// the prefactored matrix: solves for `-r - rho * sum_i M_i' gamma_i`.
    pub(crate) fn minimize(
        &self,
        lin: &DVector<f64>,
        terms: &[(&DMatrix<f64>, &DVector<f64>)],
        rho: f64,
    ) -> DVector<f64> {
        let mut rhs = -lin.clone();
        for (m, gamma) in terms {
            rhs -= m.transpose() * *gamma * rho;
        }
        self.chol.solve(&rhs)
    }
}

pub(crate) fn condition_estimate(mat: &DMatrix<f64>) -> f64 {
    let svd = mat.clone().svd(false, false);
    let max = svd.singular_values.max();
    let min = svd.singular_values.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Exact minimizer of the x-subproblem:
/// `x = (2P + rho A'A)^{-1} (-c - rho A' gamma)` with `gamma = Bz - c_link + u`.
pub fn x_update(
    problem: &QuadraticProblem,
    z: &DVector<f64>,
    u: &DVector<f64>,
    rho: f64,
) -> Result<DVector<f64>> {
    let factor = SubproblemFactor::new(&problem.p_cost, &[&problem.link.a], rho)?;
    let gamma = &problem.link.b * z - &problem.link.c_link + u;
    Ok(factor.minimize(&problem.c_cost, &[(&problem.link.a, &gamma)], rho))
}

/// Exact minimizer of the z-subproblem:
/// `z = (2Q + rho B'B)^{-1} (-d - rho B' mu)` with `mu = Ax - c_link + u`.
pub fn z_update(
    problem: &QuadraticProblem,
    x: &DVector<f64>,
    u: &DVector<f64>,
    rho: f64,
) -> Result<DVector<f64>> {
    let factor = SubproblemFactor::new(&problem.q_cost, &[&problem.link.b], rho)?;
    let mu = &problem.link.a * x - &problem.link.c_link + u;
    Ok(factor.minimize(&problem.d_cost, &[(&problem.link.b, &mu)], rho))
}

/// Scaled dual update `u + (A x + B z - c_link)`.
pub fn u_update(
    u: &DVector<f64>,
    x: &DVector<f64>,
    z: &DVector<f64>,
    link: &LinkingConstraint,
) -> Result<DVector<f64>> {
    link.check_dims(x.len(), z.len())?;
    Ok(u + (&link.a * x + &link.b * z - &link.c_link))
}

/// Runs ADMM until both residual norms pass their thresholds, the iteration
/// cap is hit, or an enabled detector raises and aborts.
pub fn run_admm(problem: &QuadraticProblem, cfg: &AdmmConfig, hooks: Hooks) -> Result<SolveResult> {
    cfg.validate()?;
    problem.validate()?;
    let n = problem.n();
    let m = problem.m();
    let p = problem.p();
    let link = &problem.link;
    let rho = cfg.rho;

    if let Some(det) = hooks.detector {
        let l = det.mode.dimension(n, p);
        if cfg.max_iterations < l + 2 {
            return Err(Error::Config(format!(
                "detection needs max_iterations >= {}, got {}",
                l + 2,
                cfg.max_iterations
            )));
        }
    }

    // Objective distortion replaces the quadratic the x-actor minimizes.
    let distorted;
    let x_quad = match hooks.attack.map(|a| &a.vector) {
        Some(AttackVector::ObjectiveDistortion { scaling }) => {
            distorted = attack::distorted_quadratic(&problem.p_cost, *scaling)?;
            &distorted
        }
        _ => &problem.p_cost,
    };
    let x_factor = SubproblemFactor::new(x_quad, &[&link.a], rho)?;
    let honest_x_factor = SubproblemFactor::new(&problem.p_cost, &[&link.a], rho)?;
    let z_factor = SubproblemFactor::new(&problem.q_cost, &[&link.b], rho)?;

    let mut z = match &cfg.z0 {
        Some(v) if v.len() == m => DVector::from_vec(v.clone()),
        Some(_) => return Err(Error::Dimension("z0 length disagrees with m".into())),
        None => DVector::from_element(m, 1.0),
    };
    let mut u = match &cfg.u0 {
        Some(v) if v.len() == p => DVector::from_vec(v.clone()),
        Some(_) => return Err(Error::Dimension("u0 length disagrees with p".into())),
        None => DVector::zeros(p),
    };

    let mut entries: Vec<TraceEntry> = Vec::with_capacity(cfg.max_iterations + 1);
    let x0 = DVector::zeros(n);
    let r0 = &link.a * &x0 + &link.b * &z - &link.c_link;
    entries.push(TraceEntry {
        k: 0,
        x: x0,
        z: z.clone(),
        u: u.clone(),
        r: r0,
        s: DVector::zeros(n),
        attacked: false,
        mitigated: false,
        x_honest: None,
        x_received: None,
    });

    let mut audit = hooks
        .detector
        .map(|det| OnlineAudit::new(det.clone(), link.clone(), n, rho));

    let mut termination = Termination::IterationCap;
    for k in 1..=cfg.max_iterations {
        let attack_active = hooks
            .attack
            .map(|a| k >= a.start_iteration)
            .unwrap_or(false);

        // The distorted objective is itself the attack; the sent value is its
        // honest minimizer. Every other vector transforms the honest update.
        let factor = if attack_active { &x_factor } else { &honest_x_factor };
        let gamma = &link.b * &z - &link.c_link + &u;
        let x_star = factor.minimize(&problem.c_cost, &[(&link.a, &gamma)], rho);

        let mut attacked = false;
        let mut x_honest = None;
        let x_sent = match hooks.attack {
            Some(spec) if attack_active => {
                let sent = attack::apply(
                    spec,
                    &x_star,
                    k,
                    link,
                    hooks.bounds,
                    hooks.private_sets,
                )?;
                if sent != x_star {
                    attacked = true;
                    x_honest = Some(x_star.clone());
                } else if let AttackVector::ObjectiveDistortion { scaling } = spec.vector {
                    // The distortion lives in the subproblem, not the message.
                    attacked = scaling != 1.0;
                }
                sent
            }
            _ => x_star,
        };

        let mut mitigated = false;
        let mut x_received = None;
        let x_used = if hooks.mitigate {
            let bounds = hooks.bounds.ok_or_else(|| {
                Error::Config("mitigation requires public bounds".into())
            })?;
            let projected = mitigator::project_best_response(&x_sent, link, bounds)?;
            if projected != x_sent {
                mitigated = true;
                x_received = Some(x_sent);
            }
            projected
        } else {
            x_sent
        };

        let mu = &link.a * &x_used - &link.c_link + &u;
        let z_new = z_factor.minimize(&problem.d_cost, &[(&link.b, &mu)], rho);
        let s = link.a.transpose() * (&link.b * (&z_new - &z)) * rho;
        u += &link.a * &x_used + &link.b * &z_new - &link.c_link;
        let r = &link.a * &x_used + &link.b * &z_new - &link.c_link;
        z = z_new;

        entries.push(TraceEntry {
            k,
            x: x_used,
            z: z.clone(),
            u: u.clone(),
            r: r.clone(),
            s: s.clone(),
            attacked,
            mitigated,
            x_honest,
            x_received,
        });

        if let Some(a) = audit.as_mut() {
            if a.observe(&entries) && a.cfg().abort_on_detect {
                termination = Termination::DetectorAbort;
                break;
            }
        }

        if r.norm() <= cfg.eps_pri && s.norm() <= cfg.eps_dual {
            termination = Termination::Converged;
            break;
        }
    }

    let trace = AdmmTrace {
        n,
        m,
        rho,
        link: link.clone(),
        entries,
        termination,
    };
    let detection = audit.map(|a| a.finish());
    Ok(SolveResult { trace, detection })
}

/// Combined cost of the equivalent centralized problem, per the block layout
/// that merges the linked coordinates of x and z into one shared variable.
#[derive(Debug, Clone)]
pub struct CentralQP {
    pub pi: DMatrix<f64>,
    pub kappa: DVector<f64>,
    n: usize,
    m: usize,
    p: usize,
}

impl CentralQP {
    /// Requires the generated selector structure (`A = [0 I]`, `B = [-I 0]`,
    /// `c_link = 0`), which makes `x_last = z_first` the shared block.
    pub fn from_problem(problem: &QuadraticProblem) -> Result<Self> {
        let (n, m, p) = (problem.n(), problem.m(), problem.p());
        let expected = crate::generator::build_selectors(n, m, p)?;
        if problem.link != expected {
            return Err(Error::Config(
                "central oracle requires the generated coordinate-selector linking structure"
                    .into(),
            ));
        }
        let dim = n + m - p;
        let np = n - p;
        let mut pi = DMatrix::zeros(dim, dim);
        let mut kappa = DVector::zeros(dim);
        // x block occupies [0, n); z block occupies [np, np + m) with the
        // first p z-coordinates shared with the last p x-coordinates.
        for i in 0..n {
            for j in 0..n {
                pi[(i, j)] += problem.p_cost[(i, j)];
            }
            kappa[i] += problem.c_cost[i];
        }
        for i in 0..m {
            for j in 0..m {
                pi[(np + i, np + j)] += problem.q_cost[(i, j)];
            }
            kappa[np + i] += problem.d_cost[i];
        }
        Ok(Self { pi, kappa, n, m, p })
    }

    /// Maps the combined optimum back to `(x, z)`; the linking constraint is
    /// satisfied exactly by construction.
    pub fn split(&self, w: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let np = self.n - self.p;
        let x = DVector::from_fn(self.n, |i, _| w[i]);
        let z = DVector::from_fn(self.m, |i, _| w[np + i]);
        (x, z)
    }
}

#[derive(Debug, Clone)]
pub struct CentralSolution {
    pub w: DVector<f64>,
    pub x: DVector<f64>,
    pub z: DVector<f64>,
    pub objective: f64,
}

/// Solves the composed problem `min_w w' Pi w + kappa' w` as
/// `w* = -1/2 Pi^{-1} kappa`. Verification ground truth for the ADMM path.
pub fn central_solution(problem: &QuadraticProblem) -> Result<CentralSolution> {
    let central = CentralQP::from_problem(problem)?;
    let rhs = &central.kappa * -0.5;
    let w = match Cholesky::new(central.pi.clone()) {
        Some(chol) => chol.solve(&rhs),
        None => {
            let lu = central.pi.clone().lu();
            lu.solve(&rhs).ok_or_else(|| {
                Error::Numerical(format!(
                    "combined cost matrix is singular (condition estimate {:.3e})",
                    condition_estimate(&central.pi)
                ))
            })?
        }
    };
    let (x, z) = central.split(&w);
    let objective = problem.objective(&x, &z);
    Ok(CentralSolution { w, x, z, objective })
}
