//! Fully decentralized consensus ADMM on a path graph, with no aggregator:
//! each node holds a private quadratic cost over its own variable, consecutive
//! nodes share one linking constraint, and each link endpoint keeps a local
//! copy of that link's scaled dual.
//!
//! Updates run as a synchronous Gauss-Seidel sweep left to right: node `i`
//! minimizes its cost plus the augmented penalties of its incident links,
//! using the already-updated value of its left neighbor and the previous
//! value of its right neighbor. A two-node chain therefore executes exactly
//! the aggregator-coordinated x-then-z schedule.
//!
//! Every node can audit a neighbor across their shared link with the same
//! convexity machinery: the left endpoint of a link plays the x-role
//! (gradient implied by `-rho A'(u - B dz)`), the right endpoint the z-role
//! (`-rho B'u`). Soundness localizes to end nodes: an interior node's update
//! also feels its *other* link's moving penalty, so a single neighbor cannot
//! attribute curvature from its link alone and those audits stay
//! inconclusive.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::attack::{self, AttackSpec, AttackVector};
use crate::detector::{
    audit_samples, recover_gradient, recover_gradient_b_side, select_points, AuditRecord,
    DetectionReport, DetectorConfig, DetectorMode, GradientSample, ReportBuilder,
};
use crate::error::{Error, Result};
use crate::generator::GeneratorConfig;
use crate::problem::{
    check_symmetric_psd, AdmmTrace, LinkingConstraint, QuadraticProblem, Termination, TraceEntry,
};
use crate::solver::{AdmmConfig, SubproblemFactor};

#[derive(Debug, Clone, PartialEq)]
pub struct ChainNode {
    pub quad: DMatrix<f64>,
    pub lin: DVector<f64>,
}

impl ChainNode {
    pub fn dim(&self) -> usize {
        self.quad.nrows()
    }
}

/// Constraint `A v_left + B v_right = c` between nodes `left` and `left + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainLink {
    pub left: usize,
    pub right: usize,
    pub constraint: LinkingConstraint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainProblem {
    pub nodes: Vec<ChainNode>,
    pub links: Vec<ChainLink>,
}

impl ChainProblem {
    pub fn validate(&self) -> Result<()> {
        if self.nodes.len() < 2 {
            return Err(Error::Config("a chain needs at least two nodes".into()));
        }
        if self.links.len() != self.nodes.len() - 1 {
            return Err(Error::Config(format!(
                "a path over {} nodes needs {} links, got {}",
                self.nodes.len(),
                self.nodes.len() - 1,
                self.links.len()
            )));
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if !node.quad.is_square() || node.lin.len() != node.dim() {
                return Err(Error::Dimension(format!("node {i} cost shapes disagree")));
            }
            check_symmetric_psd(&node.quad, &format!("node {i} quadratic"))?;
        }
        for (e, link) in self.links.iter().enumerate() {
            if link.left != e || link.right != e + 1 {
                return Err(Error::Config(format!(
                    "link {e} must join nodes {e} and {}",
                    e + 1
                )));
            }
            link.constraint
                .check_dims(self.nodes[link.left].dim(), self.nodes[link.right].dim())?;
        }
        Ok(())
    }

    /// Views a two-actor problem as a two-node chain: x becomes node 0 and z
    /// node 1, with the same linking constraint.
    pub fn from_two_node(problem: &QuadraticProblem) -> Self {
        Self {
            nodes: vec![
                ChainNode {
                    quad: problem.p_cost.clone(),
                    lin: problem.c_cost.clone(),
                },
                ChainNode {
                    quad: problem.q_cost.clone(),
                    lin: problem.d_cost.clone(),
                },
            ],
            links: vec![ChainLink {
                left: 0,
                right: 1,
                constraint: problem.link.clone(),
            }],
        }
    }
}

/// Random chain: node dimensions uniform on `[1, maxdim]`, Gram-factor
/// quadratics, and one scalar consensus link per adjacent pair equating the
/// last coordinate of the left node with the first of the right.
pub fn generate_chain(
    num_nodes: usize,
    cfg: &GeneratorConfig,
    rng: &mut impl Rng,
) -> Result<ChainProblem> {
    cfg.validate()?;
    if num_nodes < 2 {
        return Err(Error::Config("a chain needs at least two nodes".into()));
    }
    let s = cfg.scale;
    let s2 = s * s;
    let mut nodes = Vec::with_capacity(num_nodes);
    for _ in 0..num_nodes {
        let dim = rng.gen_range(1..=cfg.maxdim);
        let l = DMatrix::from_fn(dim, dim, |_, _| rng.gen_range(-s..=s));
        nodes.push(ChainNode {
            quad: l.transpose() * &l,
            lin: DVector::from_fn(dim, |_, _| rng.gen_range(-s2..=s2)),
        });
    }
    let links = (0..num_nodes - 1)
        .map(|e| {
            let (dl, dr) = (nodes[e].dim(), nodes[e + 1].dim());
            let mut a = DMatrix::zeros(1, dl);
            let mut b = DMatrix::zeros(1, dr);
            a[(0, dl - 1)] = 1.0;
            b[(0, 0)] = -1.0;
            Ok(ChainLink {
                left: e,
                right: e + 1,
                constraint: LinkingConstraint::new(a, b, DVector::zeros(1))?,
            })
        })
        .collect::<Result<_>>()?;
    let chain = ChainProblem { nodes, links };
    chain.validate()?;
    Ok(chain)
}

#[derive(Default, Clone, Copy)]
pub struct ChainHooks<'a> {
    pub attack_node: Option<usize>,
    pub attack: Option<&'a AttackSpec>,
}

#[derive(Debug, Clone)]
pub struct NodeTrace {
    /// Value per iterate, index 0 holding the initial state.
    pub values: Vec<DVector<f64>>,
}

/// Shared-link history. Both endpoints run the dual update locally on the
/// values they exchanged; the two copies are maintained independently and
/// stay bit-identical on a correct run.
#[derive(Debug, Clone)]
pub struct LinkTrace {
    /// Left endpoint's local dual copy per iterate.
    pub u_left: Vec<DVector<f64>>,
    /// Right endpoint's local dual copy per iterate.
    pub u_right: Vec<DVector<f64>>,
    pub r: Vec<DVector<f64>>,
}

#[derive(Debug, Clone)]
pub struct ChainRun {
    pub nodes: Vec<NodeTrace>,
    pub links: Vec<LinkTrace>,
    pub rho: f64,
    pub termination: Termination,
}

impl ChainRun {
    pub fn last_iterate(&self) -> usize {
        self.nodes[0].values.len().saturating_sub(1)
    }
}

fn chain_attack(
    spec: &AttackSpec,
    v_star: &DVector<f64>,
    k: usize,
) -> Result<DVector<f64>> {
    spec.validate()?;
    match spec.vector {
        AttackVector::NoiseInjection => Ok(attack::noise_attack(v_star, spec, k)),
        // A compromised node with an infeasible private set repeats its fixed
        // (displaced) feasible point regardless of the consensus signal.
        AttackVector::PrivateInfeasibility { .. } => Ok(DVector::from_element(
            v_star.len(),
            1.0 + spec.magnitude,
        )),
        AttackVector::ObjectiveDistortion { .. } | AttackVector::LinkingInfeasibility => Err(
            Error::AttackInapplicable(
                "chain runs support noise and private-infeasibility vectors".into(),
            ),
        ),
    }
}

/// Runs the synchronous sweep until the stacked primal and dual residual
/// norms pass the thresholds or the iteration cap is reached.
pub fn run_decentralized(
    chain: &ChainProblem,
    cfg: &AdmmConfig,
    hooks: ChainHooks,
) -> Result<ChainRun> {
    cfg.validate()?;
    chain.validate()?;
    let rho = cfg.rho;
    let num_nodes = chain.nodes.len();
    if let Some(i) = hooks.attack_node {
        if i >= num_nodes {
            return Err(Error::Config(format!("attack node {i} out of range")));
        }
        if hooks.attack.is_none() {
            return Err(Error::Config("attack node set without an attack".into()));
        }
    }

    let factors: Vec<SubproblemFactor> = chain
        .nodes
        .iter()
        .enumerate()
        .map(|(i, node)| {
            let mut penalties: Vec<&DMatrix<f64>> = Vec::new();
            if i > 0 {
                penalties.push(&chain.links[i - 1].constraint.b);
            }
            if i < num_nodes - 1 {
                penalties.push(&chain.links[i].constraint.a);
            }
            SubproblemFactor::new(&node.quad, &penalties, rho)
        })
        .collect::<Result<_>>()?;

    // Node 0 starts at the origin like the implicit x^0; the rest start at
    // ones like z^0, so a two-node chain replays the aggregator run exactly.
    let mut v: Vec<DVector<f64>> = chain
        .nodes
        .iter()
        .enumerate()
        .map(|(i, node)| {
            if i == 0 {
                DVector::zeros(node.dim())
            } else {
                DVector::from_element(node.dim(), 1.0)
            }
        })
        .collect();
    let mut u_left: Vec<DVector<f64>> = chain
        .links
        .iter()
        .map(|l| DVector::zeros(l.constraint.p()))
        .collect();
    let mut u_right = u_left.clone();

    let mut node_traces: Vec<NodeTrace> = v
        .iter()
        .map(|val| NodeTrace {
            values: vec![val.clone()],
        })
        .collect();
    let mut link_traces: Vec<LinkTrace> = chain
        .links
        .iter()
        .map(|l| {
            let c = &l.constraint;
            let r0 = &c.a * &v[l.left] + &c.b * &v[l.right] - &c.c_link;
            LinkTrace {
                u_left: vec![DVector::zeros(c.p())],
                u_right: vec![DVector::zeros(c.p())],
                r: vec![r0],
            }
        })
        .collect();

    let mut termination = Termination::IterationCap;
    for k in 1..=cfg.max_iterations {
        let v_prev = v.clone();
        for i in 0..num_nodes {
            let mut terms: Vec<(&DMatrix<f64>, DVector<f64>)> = Vec::new();
            if i > 0 {
                let c = &chain.links[i - 1].constraint;
                terms.push((&c.b, &c.a * &v[i - 1] - &c.c_link + &u_right[i - 1]));
            }
            if i < num_nodes - 1 {
                let c = &chain.links[i].constraint;
                terms.push((&c.a, &c.b * &v[i + 1] - &c.c_link + &u_left[i]));
            }
            let term_refs: Vec<(&DMatrix<f64>, &DVector<f64>)> =
                terms.iter().map(|(m, g)| (*m, g)).collect();
            let star = factors[i].minimize(&chain.nodes[i].lin, &term_refs, rho);
            v[i] = match (hooks.attack_node, hooks.attack) {
                (Some(node), Some(spec)) if node == i && k >= spec.start_iteration => {
                    chain_attack(spec, &star, k)?
                }
                _ => star,
            };
        }

        let mut r_sq = 0.0;
        let mut s_sq = 0.0;
        for (e, link) in chain.links.iter().enumerate() {
            let c = &link.constraint;
            let r = &c.a * &v[link.left] + &c.b * &v[link.right] - &c.c_link;
            // Each endpoint advances its own dual copy from the exchanged
            // values; with honest exchanges the copies agree bit for bit.
            u_left[e] += &r;
            u_right[e] += &r;
            let s = c.a.transpose() * (&c.b * (&v[link.right] - &v_prev[link.right])) * rho;
            r_sq += r.norm_squared();
            s_sq += s.norm_squared();
            link_traces[e].u_left.push(u_left[e].clone());
            link_traces[e].u_right.push(u_right[e].clone());
            link_traces[e].r.push(r);
        }
        for (i, val) in v.iter().enumerate() {
            node_traces[i].values.push(val.clone());
        }

        if r_sq.sqrt() <= cfg.eps_pri && s_sq.sqrt() <= cfg.eps_dual {
            termination = Termination::Converged;
            break;
        }
    }

    Ok(ChainRun {
        nodes: node_traces,
        links: link_traces,
        rho,
        termination,
    })
}

/// Which endpoint of a link is being audited by its neighbor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuditSide {
    Left,
    Right,
}

/// Audits one endpoint of one link over a finished run. The auditor is the
/// opposite endpoint and uses only values it legitimately holds: both nodes'
/// exchanged iterates and the shared dual copy.
pub fn node_audit(
    run: &ChainRun,
    chain: &ChainProblem,
    link_index: usize,
    side: AuditSide,
    cfg: &DetectorConfig,
) -> Result<DetectionReport> {
    cfg.validate()?;
    let link = chain
        .links
        .get(link_index)
        .ok_or_else(|| Error::Config(format!("no link {link_index}")))?;
    let c = &link.constraint;
    let p = c.p();
    let audited_dim = match side {
        AuditSide::Left => chain.nodes[link.left].dim(),
        AuditSide::Right => chain.nodes[link.right].dim(),
    };
    // Per-link audits see one constraint, so only the linked coordinates of
    // the audited node are observable.
    let l = match cfg.mode {
        DetectorMode::Full => {
            return Err(Error::Config(
                "decentralized audits are per-link; use linked-only mode".into(),
            ))
        }
        DetectorMode::LinkedOnly => p,
    };
    let last = run.last_iterate();
    let mut builder = ReportBuilder::default();
    // A per-link audit is sound only for end nodes. An interior node's
    // update feels its other link's penalty, which moves every iteration, so
    // the recovered partial gradients sample a different implied function
    // each time and their differences say nothing about convexity. Such
    // audits stay inconclusive rather than risking false accusations.
    let audited_node = match side {
        AuditSide::Left => link.left,
        AuditSide::Right => link.right,
    };
    let is_end = audited_node == 0 || audited_node == chain.nodes.len() - 1;
    if !is_end {
        return Ok(builder.finish(audited_dim));
    }
    let horizons: Vec<usize> = match cfg.cadence {
        crate::detector::AuditCadence::EveryIteration => ((l + 2)..=last).collect(),
        crate::detector::AuditCadence::AtHorizon => {
            if last >= l + 2 {
                vec![last]
            } else {
                vec![]
            }
        }
    };
    match side {
        AuditSide::Left => {
            // Reuse the x-role recovery by viewing the link as a two-actor
            // trace: left values as x, right values as z, shared dual as u.
            let entries: Vec<TraceEntry> = (0..=last)
                .map(|k| TraceEntry {
                    k,
                    x: run.nodes[link.left].values[k].clone(),
                    z: run.nodes[link.right].values[k].clone(),
                    u: run.links[link_index].u_right[k].clone(),
                    r: run.links[link_index].r[k].clone(),
                    s: DVector::zeros(audited_dim),
                    attacked: false,
                    mitigated: false,
                    x_honest: None,
                    x_received: None,
                })
                .collect();
            let view = AdmmTrace {
                n: audited_dim,
                m: chain.nodes[link.right].dim(),
                rho: run.rho,
                link: c.clone(),
                entries,
                termination: run.termination,
            };
            for horizon in horizons {
                let record = audit_for_horizon(&view, horizon, l, cfg);
                builder.push(record);
            }
        }
        AuditSide::Right => {
            for horizon in horizons {
                let outcome = select_points(horizon, l + 1, &cfg.strategy)
                    .and_then(|indices| {
                        indices
                            .iter()
                            .map(|&i| {
                                recover_gradient_b_side(
                                    &run.nodes[link.right].values[i],
                                    &run.links[link_index].u_left[i],
                                    c,
                                    run.rho,
                                    i,
                                    DetectorMode::LinkedOnly,
                                )
                            })
                            .collect::<Result<Vec<GradientSample>>>()
                    })
                    .map(|samples| audit_samples(&samples, cfg))
                    .unwrap_or(crate::detector::AuditOutcome::Insufficient);
                builder.push(AuditRecord {
                    k: horizon,
                    outcome,
                });
            }
        }
    }
    Ok(builder.finish(audited_dim - l))
}

fn audit_for_horizon(
    view: &AdmmTrace,
    horizon: usize,
    l: usize,
    cfg: &DetectorConfig,
) -> AuditRecord {
    let outcome = select_points(horizon, l + 1, &cfg.strategy)
        .and_then(|indices| {
            indices
                .iter()
                .map(|&i| recover_gradient(view, i, DetectorMode::LinkedOnly))
                .collect::<Result<Vec<GradientSample>>>()
        })
        .map(|samples| audit_samples(&samples, cfg))
        .unwrap_or(crate::detector::AuditOutcome::Insufficient);
    AuditRecord {
        k: horizon,
        outcome,
    }
}
