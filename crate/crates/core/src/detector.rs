//! Noise-injection detection by convexity auditing.
//!
//! The auditor (aggregator or z-actor) cannot see the x-actor's objective,
//! but each x-update is a minimizer of the augmented Lagrangian, so the
//! objective's gradient at iterate `i` is implied by values the auditor
//! already holds:
//!
//! ```text
//!   grad f(x^i) = -A' rho (u^i - B (z^i - z^{i-1}))
//! ```
//!
//! Gradients at several iterates feed a finite-difference system for the
//! Hessian: stacking one block `I ⊗ (x^k - x^a)'` per comparison point gives
//! `D vec(H) = G`, exact for quadratics. A least eigenvalue of the
//! symmetrized solve below the tolerance means the implied objective is not
//! convex, which an honest actor cannot produce.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{AdmmTrace, LinkingConstraint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorMode {
    /// Audit all n x-dimensions (n+1 points, n^2 unknowns).
    Full,
    /// Audit only the linked (public) dimensions: p+1 points, p^2 unknowns.
    LinkedOnly,
}

impl DetectorMode {
    pub fn dimension(self, n: usize, p: usize) -> usize {
        match self {
            DetectorMode::Full => n,
            DetectorMode::LinkedOnly => p,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointStrategy {
    /// Points evenly spaced between iterate 2 and the reference iterate.
    EvenlySpaced,
    /// The most recent iterates; reproduces the elevated false-positive rate
    /// of poorly conditioned, nearly collinear late differences.
    MostRecent,
    Custom(Vec<usize>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditCadence {
    EveryIteration,
    AtHorizon,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub mode: DetectorMode,
    /// Relative eigenvalue floor: flag only when
    /// `lambda_min < -tau_scale * max(1, ||H||_F)`.
    pub tau_scale: f64,
    /// Condition cap on the difference system; audits beyond it are
    /// discarded as inconclusive, never counted as detections.
    pub kappa_max: f64,
    /// Pairs of difference vectors with `|cos| >= 1 - collinearity_tol`
    /// reject the audit.
    pub collinearity_tol: f64,
    pub strategy: PointStrategy,
    pub cadence: AuditCadence,
    pub abort_on_detect: bool,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            mode: DetectorMode::LinkedOnly,
            tau_scale: 1e-6,
            kappa_max: 1e8,
            collinearity_tol: 1e-9,
            strategy: PointStrategy::EvenlySpaced,
            cadence: AuditCadence::EveryIteration,
            abort_on_detect: true,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tau_scale < 0.0 {
            return Err(Error::Config("tau_scale must be nonnegative".into()));
        }
        if self.kappa_max <= 1.0 {
            return Err(Error::Config("kappa_max must exceed 1".into()));
        }
        Ok(())
    }
}

/// An audited point paired with the gradient implied by the trace.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSample {
    pub point: DVector<f64>,
    pub gradient: DVector<f64>,
    pub iterate: usize,
}

/// Recovers the implied gradient of the x-actor's objective at iterate `i`
/// from trace entries `i` and `i-1`.
pub fn recover_gradient(trace: &AdmmTrace, i: usize, mode: DetectorMode) -> Result<GradientSample> {
    if i < 1 {
        return Err(Error::InsufficientIterates { needed: 1, have: i });
    }
    let (prev, cur) = match (trace.entry(i - 1), trace.entry(i)) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(Error::InsufficientIterates {
                needed: i + 1,
                have: trace.entries.len(),
            })
        }
    };
    let dz = &cur.z - &prev.z;
    let t = &cur.u - &trace.link.b * dz;
    match mode {
        DetectorMode::Full => Ok(GradientSample {
            point: cur.x.clone(),
            gradient: trace.link.a.transpose() * t * -trace.rho,
            iterate: i,
        }),
        DetectorMode::LinkedOnly => {
            let sel = LinkingConstraint::selector_entries(&trace.link.a)?;
            let p = sel.len();
            let mut point = DVector::zeros(p);
            let mut gradient = DVector::zeros(p);
            for (r, &(col, val)) in sel.iter().enumerate() {
                point[r] = cur.x[col];
                gradient[r] = -trace.rho * val * t[r];
            }
            Ok(GradientSample {
                point,
                gradient,
                iterate: i,
            })
        }
    }
}

/// Implied gradient of the B-side (z-actor) objective at iterate `i`, used
/// when the auditor sits on the A-side of the constraint: `grad g(z^i) =
/// -B' rho u^i`.
pub fn recover_gradient_b_side(
    trace_z: &DVector<f64>,
    u: &DVector<f64>,
    link: &LinkingConstraint,
    rho: f64,
    iterate: usize,
    mode: DetectorMode,
) -> Result<GradientSample> {
    match mode {
        DetectorMode::Full => Ok(GradientSample {
            point: trace_z.clone(),
            gradient: link.b.transpose() * u * -rho,
            iterate,
        }),
        DetectorMode::LinkedOnly => {
            let sel = LinkingConstraint::selector_entries(&link.b)?;
            let p = sel.len();
            let mut point = DVector::zeros(p);
            let mut gradient = DVector::zeros(p);
            for (r, &(col, val)) in sel.iter().enumerate() {
                point[r] = trace_z[col];
                gradient[r] = -rho * val * u[r];
            }
            Ok(GradientSample {
                point,
                gradient,
                iterate,
            })
        }
    }
}

/// Chooses `count` iterate indices in `[2, horizon]`, reference (the most
/// recent of them) last.
pub fn select_points(
    horizon: usize,
    count: usize,
    strategy: &PointStrategy,
) -> Result<Vec<usize>> {
    if horizon < 2 || horizon - 1 < count {
        return Err(Error::InsufficientIterates {
            needed: count + 1,
            have: horizon.saturating_sub(1),
        });
    }
    let indices = match strategy {
        PointStrategy::EvenlySpaced => {
            let span = (horizon - 2) as f64;
            let steps = (count - 1).max(1) as f64;
            let mut out: Vec<usize> = (0..count)
                .map(|i| 2 + (span * i as f64 / steps).round() as usize)
                .collect();
            out.dedup();
            out
        }
        PointStrategy::MostRecent => ((horizon + 1 - count)..=horizon).collect(),
        PointStrategy::Custom(indices) => {
            let mut out = indices.clone();
            out.sort_unstable();
            out.dedup();
            if out.first().is_some_and(|&f| f < 2) || out.last() != Some(&horizon) {
                return Err(Error::Config(
                    "custom point indices must lie in [2, horizon] and include the horizon"
                        .into(),
                ));
            }
            out
        }
    };
    if indices.len() != count {
        return Err(Error::InsufficientIterates {
            needed: count,
            have: indices.len(),
        });
    }
    Ok(indices)
}

/// Builds the difference system `D vec(H) = G`: per comparison point one
/// block `I_l ⊗ (x_ref - x_a)'`, with `G` stacking the gradient differences
/// in the same order. Rejects collinear difference pairs.
pub fn assemble_system(
    samples: &[GradientSample],
    reference: &GradientSample,
    collinearity_tol: f64,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let l = reference.point.len();
    if samples.len() != l {
        return Err(Error::Dimension(format!(
            "need {l} comparison points for an {l}-dimensional Hessian, got {}",
            samples.len()
        )));
    }
    let diffs: Vec<DVector<f64>> = samples
        .iter()
        .map(|s| &reference.point - &s.point)
        .collect();
    for (i, di) in diffs.iter().enumerate() {
        if di.norm() == 0.0 {
            return Err(Error::Collinear {
                first: samples[i].iterate,
                second: reference.iterate,
            });
        }
        for (j, dj) in diffs.iter().enumerate().skip(i + 1) {
            let cos = di.dot(dj).abs() / (di.norm() * dj.norm());
            if cos >= 1.0 - collinearity_tol {
                return Err(Error::Collinear {
                    first: samples[i].iterate,
                    second: samples[j].iterate,
                });
            }
        }
    }
    let mut d = DMatrix::zeros(l * l, l * l);
    let mut g = DVector::zeros(l * l);
    for (a, (diff, sample)) in diffs.iter().zip(samples.iter()).enumerate() {
        for r in 0..l {
            let row = a * l + r;
            for s in 0..l {
                d[(row, r * l + s)] = diff[s];
            }
            g[row] = reference.gradient[r] - sample.gradient[r];
        }
    }
    Ok((d, g))
}

/// Finite-difference Hessian estimate from an accepted audit.
#[derive(Debug, Clone, PartialEq)]
pub struct HessianEstimate {
    /// Symmetrized solve `(H + H')/2`.
    pub h: DMatrix<f64>,
    pub lambda_min: f64,
    /// Condition estimate of the difference system.
    pub cond: f64,
    /// Eigenvalue floor this estimate was judged against.
    pub tau: f64,
    pub point_indices: Vec<usize>,
}

impl HessianEstimate {
    pub fn convexity_violated(&self) -> bool {
        self.lambda_min < -self.tau
    }
}

/// Solves `vec(H) = D^{-1} G`, unstacks row-major, symmetrizes, and takes
/// the least eigenvalue. Discards the audit when the difference system is
/// too ill-conditioned to trust.
pub fn solve_hessian(
    d: &DMatrix<f64>,
    g: &DVector<f64>,
    cfg: &DetectorConfig,
) -> Result<HessianEstimate> {
    let svd = d.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let cond = if smin == 0.0 { f64::INFINITY } else { smax / smin };
    if cond > cfg.kappa_max {
        return Err(Error::IllConditioned {
            cond,
            cap: cfg.kappa_max,
        });
    }
    let h_vec = d.clone().lu().solve(g).ok_or(Error::IllConditioned {
        cond: f64::INFINITY,
        cap: cfg.kappa_max,
    })?;
    let l = (d.nrows() as f64).sqrt().round() as usize;
    let h_raw = DMatrix::from_fn(l, l, |r, s, | h_vec[r * l + s]);
    let h = (&h_raw + h_raw.transpose()) / 2.0;
    let tau = cfg.tau_scale * h.norm().max(1.0);
    let lambda_min = h.clone().symmetric_eigen().eigenvalues.min();
    Ok(HessianEstimate {
        h,
        lambda_min,
        cond,
        tau,
        point_indices: Vec::new(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum AuditOutcome {
    Accepted(HessianEstimate),
    RejectedConditioning { cond: f64 },
    RejectedCollinearity { first: usize, second: usize },
    Insufficient,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditRecord {
    pub k: usize,
    pub outcome: AuditOutcome,
}

/// One audit over an explicit sample set; the last sample is the reference.
pub fn audit_samples(samples: &[GradientSample], cfg: &DetectorConfig) -> AuditOutcome {
    let Some((reference, rest)) = samples.split_last() else {
        return AuditOutcome::Insufficient;
    };
    match assemble_system(rest, reference, cfg.collinearity_tol) {
        Ok((d, g)) => match solve_hessian(&d, &g, cfg) {
            Ok(mut est) => {
                est.point_indices = samples.iter().map(|s| s.iterate).collect();
                AuditOutcome::Accepted(est)
            }
            Err(Error::IllConditioned { cond, .. }) => AuditOutcome::RejectedConditioning { cond },
            Err(_) => AuditOutcome::Insufficient,
        },
        Err(Error::Collinear { first, second }) => {
            AuditOutcome::RejectedCollinearity { first, second }
        }
        Err(_) => AuditOutcome::Insufficient,
    }
}

/// One audit of the trace with reference iterate `horizon`.
pub fn audit_iterate(trace: &AdmmTrace, horizon: usize, cfg: &DetectorConfig) -> AuditRecord {
    let p = trace.link.p();
    let l = cfg.mode.dimension(trace.n, p);
    let outcome = (|| -> Result<AuditOutcome> {
        let indices = select_points(horizon, l + 1, &cfg.strategy)?;
        let samples: Vec<GradientSample> = indices
            .iter()
            .map(|&i| recover_gradient(trace, i, cfg.mode))
            .collect::<Result<_>>()?;
        Ok(audit_samples(&samples, cfg))
    })()
    .unwrap_or(AuditOutcome::Insufficient);
    AuditRecord { k: horizon, outcome }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    AttackDetected,
    NoAttackDetected,
    Inconclusive,
}

/// Aggregated detection result. The verdict is sticky: once any accepted
/// audit violates convexity, later clean audits cannot clear it.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionReport {
    pub verdict: Verdict,
    pub first_detection: Option<usize>,
    pub audits: Vec<AuditRecord>,
    pub audits_total: usize,
    pub audits_rejected_conditioning: usize,
    pub audits_rejected_collinearity: usize,
    pub min_lambda_seen: Option<f64>,
    /// Set in linked-only mode when unlinked private dimensions exist: their
    /// activity is unaudited.
    pub unaudited_dimensions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub verdict: Verdict,
    pub first_detection_iterate: Option<usize>,
    pub audits_total: usize,
    pub audits_rejected_conditioning: usize,
    pub audits_rejected_collinearity: usize,
    pub min_lambda_seen: Option<f64>,
}

impl DetectionReport {
    pub fn summary(&self) -> ReportSummary {
        ReportSummary {
            verdict: self.verdict,
            first_detection_iterate: self.first_detection,
            audits_total: self.audits_total,
            audits_rejected_conditioning: self.audits_rejected_conditioning,
            audits_rejected_collinearity: self.audits_rejected_collinearity,
            min_lambda_seen: self.min_lambda_seen,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub(crate) struct ReportBuilder {
    audits: Vec<AuditRecord>,
    accepted: usize,
    rejected_conditioning: usize,
    rejected_collinearity: usize,
    min_lambda: Option<f64>,
    first_detection: Option<usize>,
}

impl ReportBuilder {
    pub(crate) fn push(&mut self, record: AuditRecord) -> bool {
        let mut detected = false;
        match &record.outcome {
            AuditOutcome::Accepted(est) => {
                self.accepted += 1;
                self.min_lambda = Some(match self.min_lambda {
                    Some(v) => v.min(est.lambda_min),
                    None => est.lambda_min,
                });
                if est.convexity_violated() && self.first_detection.is_none() {
                    self.first_detection = Some(record.k);
                }
                detected = est.convexity_violated();
            }
            AuditOutcome::RejectedConditioning { .. } => self.rejected_conditioning += 1,
            AuditOutcome::RejectedCollinearity { .. } => self.rejected_collinearity += 1,
            AuditOutcome::Insufficient => {}
        }
        self.audits.push(record);
        detected
    }

    pub(crate) fn finish(self, unaudited_dimensions: usize) -> DetectionReport {
        let verdict = if self.first_detection.is_some() {
            Verdict::AttackDetected
        } else if self.accepted > 0 {
            Verdict::NoAttackDetected
        } else {
            Verdict::Inconclusive
        };
        DetectionReport {
            verdict,
            first_detection: self.first_detection,
            audits_total: self.audits.len(),
            audits_rejected_conditioning: self.rejected_conditioning,
            audits_rejected_collinearity: self.rejected_collinearity,
            min_lambda_seen: self.min_lambda,
            audits: self.audits,
            unaudited_dimensions,
        }
    }
}

/// Audits a completed trace at the configured cadence.
pub fn detect(trace: &AdmmTrace, cfg: &DetectorConfig) -> Result<DetectionReport> {
    cfg.validate()?;
    let p = trace.link.p();
    let l = cfg.mode.dimension(trace.n, p);
    let last = trace.last_iterate();
    let mut builder = ReportBuilder::default();
    let horizons: Vec<usize> = match cfg.cadence {
        AuditCadence::EveryIteration => ((l + 2)..=last).collect(),
        AuditCadence::AtHorizon => {
            if last >= l + 2 {
                vec![last]
            } else {
                vec![]
            }
        }
    };
    for k in horizons {
        builder.push(audit_iterate(trace, k, cfg));
    }
    let unaudited = trace.n - l;
    Ok(builder.finish(unaudited))
}

/// Incremental auditor driven by the engine as the trace grows.
pub struct OnlineAudit {
    cfg: DetectorConfig,
    link: LinkingConstraint,
    n: usize,
    rho: f64,
    builder: ReportBuilder,
    detected: bool,
}

impl OnlineAudit {
    pub fn new(cfg: DetectorConfig, link: LinkingConstraint, n: usize, rho: f64) -> Self {
        Self {
            cfg,
            link,
            n,
            rho,
            builder: ReportBuilder::default(),
            detected: false,
        }
    }

    pub fn cfg(&self) -> &DetectorConfig {
        &self.cfg
    }

    /// Audits the most recent entry; returns true once an attack is detected.
    pub fn observe(&mut self, entries: &[crate::problem::TraceEntry]) -> bool {
        let horizon = entries.len() - 1;
        let l = self.cfg.mode.dimension(self.n, self.link.p());
        if horizon < l + 2 {
            return self.detected;
        }
        if self.cfg.cadence == AuditCadence::AtHorizon {
            // Horizon audits happen in finish() callers via detect(); online
            // cadence only makes sense per iteration.
        }
        // Borrow a lightweight view so audit_iterate can run mid-solve.
        let view = AdmmTrace {
            n: self.n,
            m: 0,
            rho: self.rho,
            link: self.link.clone(),
            entries: entries.to_vec(),
            termination: crate::problem::Termination::IterationCap,
        };
        let record = audit_iterate(&view, horizon, &self.cfg);
        if self.builder.push(record) {
            self.detected = true;
        }
        self.detected
    }

    pub fn finish(self) -> DetectionReport {
        let l = self.cfg.mode.dimension(self.n, self.link.p());
        self.builder.finish(self.n - l)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{build_selectors, generate_problem, instance_rng, GeneratorConfig};
    use crate::problem::QuadraticProblem;
    use crate::solver::{run_admm, AdmmConfig, Hooks};
    use nalgebra::{DMatrix, DVector};

    fn sample(point: &[f64], gradient: &[f64], iterate: usize) -> GradientSample {
        GradientSample {
            point: DVector::from_row_slice(point),
            gradient: DVector::from_row_slice(gradient),
            iterate,
        }
    }

    #[test]
    fn select_points_evenly_spaced() {
        assert_eq!(
            select_points(10, 3, &PointStrategy::EvenlySpaced).unwrap(),
            vec![2, 6, 10]
        );
    }

    #[test]
    fn select_points_most_recent() {
        assert_eq!(
            select_points(10, 3, &PointStrategy::MostRecent).unwrap(),
            vec![8, 9, 10]
        );
    }

    #[test]
    fn select_points_too_few_iterates() {
        // An l-dimensional audit needs l+1 points in [2, horizon].
        let l = 4;
        assert!(select_points(l + 1, l + 1, &PointStrategy::EvenlySpaced).is_err());
        assert!(select_points(l + 2, l + 1, &PointStrategy::EvenlySpaced).is_ok());
    }

    #[test]
    fn assemble_unit_offsets() {
        let reference = sample(&[0.0, 0.0], &[0.0, 0.0], 4);
        let samples = vec![
            sample(&[1.0, 0.0], &[0.0, 0.0], 2),
            sample(&[0.0, 1.0], &[0.0, 0.0], 3),
        ];
        let (d, _) = assemble_system(&samples, &reference, 1e-9).unwrap();
        let expected = DMatrix::from_row_slice(
            4,
            4,
            &[
                -1.0, 0.0, 0.0, 0.0, //
                0.0, 0.0, -1.0, 0.0, //
                0.0, -1.0, 0.0, 0.0, //
                0.0, 0.0, 0.0, -1.0,
            ],
        );
        assert_eq!(d, expected);
    }

    #[test]
    fn assemble_rejects_collinear_differences() {
        let reference = sample(&[2.0, 2.0], &[0.0, 0.0], 5);
        let samples = vec![
            sample(&[0.0, 0.0], &[0.0, 0.0], 2),
            sample(&[1.0, 1.0], &[0.0, 0.0], 3),
        ];
        assert!(matches!(
            assemble_system(&samples, &reference, 1e-9),
            Err(Error::Collinear { .. })
        ));
    }

    #[test]
    fn solve_identity_system() {
        let cfg = DetectorConfig::default();
        let d = DMatrix::identity(4, 4);
        let g = DVector::from_row_slice(&[1.0, 0.0, 0.0, 1.0]);
        let est = solve_hessian(&d, &g, &cfg).unwrap();
        assert_eq!(est.h, DMatrix::identity(2, 2));
        assert_eq!(est.lambda_min, 1.0);
        assert!(!est.convexity_violated());
    }

    #[test]
    fn indefinite_solution_violates_convexity() {
        let cfg = DetectorConfig::default();
        let d = DMatrix::identity(4, 4);
        let g = DVector::from_row_slice(&[1.0, 0.0, 0.0, -1.0]);
        let est = solve_hessian(&d, &g, &cfg).unwrap();
        assert_eq!(est.lambda_min, -1.0);
        assert!(est.convexity_violated());
    }

    #[test]
    fn conditioning_gate_discards_audit() {
        let cfg = DetectorConfig::default();
        let mut d = DMatrix::identity(4, 4);
        d[(3, 3)] = 1e-12;
        let g = DVector::from_row_slice(&[1.0, 0.0, 0.0, 1.0]);
        assert!(matches!(
            solve_hessian(&d, &g, &cfg),
            Err(Error::IllConditioned { .. })
        ));
    }

    fn one_dim_problem() -> QuadraticProblem {
        QuadraticProblem::new(
            DMatrix::identity(1, 1),
            DVector::zeros(1),
            DMatrix::identity(1, 1),
            DVector::zeros(1),
            build_selectors(1, 1, 1).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn gradient_recovery_one_dimensional_first_iterate() {
        let result = run_admm(&one_dim_problem(), &AdmmConfig::default(), Hooks::default())
            .unwrap();
        let g = recover_gradient(&result.trace, 1, DetectorMode::Full).unwrap();
        // x^1 = 1/3, analytic gradient 2Px + c = 2/3.
        assert!((g.point[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((g.gradient[0] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn gradient_recovery_matches_analytic_on_honest_runs() {
        for seed in 0..10 {
            let g = generate_problem(
                &GeneratorConfig::default(),
                &mut instance_rng(seed, 100),
            )
            .unwrap();
            let result = run_admm(&g.problem, &AdmmConfig::default(), Hooks::default()).unwrap();
            for i in 1..=result.trace.last_iterate() {
                let gs = recover_gradient(&result.trace, i, DetectorMode::Full).unwrap();
                let analytic = g.problem.x_gradient(&result.trace.entries[i].x);
                assert!(
                    (&gs.gradient - &analytic).amax() <= 1e-8,
                    "seed {seed}, iterate {i}"
                );
            }
        }
    }

    #[test]
    fn gradient_stationary_z_reduces_to_dual_term() {
        let result = run_admm(&one_dim_problem(), &AdmmConfig::default(), Hooks::default())
            .unwrap();
        let mut trace = result.trace;
        let i = 2;
        let z_prev = trace.entries[i - 1].z.clone();
        trace.entries[i].z = z_prev;
        let gs = recover_gradient(&trace, i, DetectorMode::Full).unwrap();
        let expected = trace.link.a.transpose() * &trace.entries[i].u * -trace.rho;
        assert_eq!(gs.gradient, expected);
    }

    #[test]
    fn recovered_gradients_lie_in_constraint_row_space() {
        let g = generate_problem(&GeneratorConfig::default(), &mut instance_rng(7, 55)).unwrap();
        let problem = &g.problem;
        let result = run_admm(problem, &AdmmConfig::default(), Hooks::default()).unwrap();
        // Column space of A' is spanned by the selector columns; every other
        // coordinate of the recovered gradient must vanish.
        let sel: Vec<usize> = LinkingConstraint::selector_entries(&problem.link.a)
            .unwrap()
            .iter()
            .map(|&(c, _)| c)
            .collect();
        for i in 1..=result.trace.last_iterate() {
            let gs = recover_gradient(&result.trace, i, DetectorMode::Full).unwrap();
            for c in 0..problem.n() {
                if !sel.contains(&c) {
                    assert!(gs.gradient[c].abs() <= 1e-8);
                }
            }
        }
    }

    #[test]
    fn difference_system_exact_for_quadratics() {
        // For a quadratic objective, D vec(2P) = G with no truncation error.
        let g = generate_problem(&GeneratorConfig::default(), &mut instance_rng(3, 21)).unwrap();
        let problem = &g.problem;
        let n = problem.n();
        if problem.p() != n {
            // Full-rank check needs n = p so differences span all of R^n.
            return;
        }
        let result = run_admm(problem, &AdmmConfig::default(), Hooks::default()).unwrap();
        let horizon = result.trace.last_iterate().min(n + 4);
        let indices = select_points(horizon, n + 1, &PointStrategy::EvenlySpaced).unwrap();
        let samples: Vec<_> = indices
            .iter()
            .map(|&i| recover_gradient(&result.trace, i, DetectorMode::Full).unwrap())
            .collect();
        let (reference, rest) = samples.split_last().unwrap();
        let (d, gvec) = assemble_system(rest, reference, 1e-9).unwrap();
        let two_p = &problem.p_cost * 2.0;
        let h_flat = DVector::from_fn(n * n, |idx, _| two_p[(idx / n, idx % n)]);
        assert!(((&d * h_flat) - gvec).amax() < 1e-8);
    }

    #[test]
    fn honest_trace_yields_no_detection() {
        let g = generate_problem(&GeneratorConfig::default(), &mut instance_rng(2, 8)).unwrap();
        let result = run_admm(&g.problem, &AdmmConfig::default(), Hooks::default()).unwrap();
        let report = detect(&result.trace, &DetectorConfig::default()).unwrap();
        assert_ne!(report.verdict, Verdict::AttackDetected);
    }

    #[test]
    fn noise_attacked_trace_is_flagged() {
        let g = generate_problem(&GeneratorConfig::default(), &mut instance_rng(2, 8)).unwrap();
        let spec = crate::attack::AttackSpec::noise(0.1, 13);
        let hooks = Hooks {
            attack: Some(&spec),
            ..Default::default()
        };
        let result = run_admm(&g.problem, &AdmmConfig::default(), hooks).unwrap();
        let report = detect(&result.trace, &DetectorConfig::default()).unwrap();
        assert_eq!(report.verdict, Verdict::AttackDetected);
        assert!(report.first_detection.is_some());
    }

    #[test]
    fn verdict_is_sticky_under_longer_horizons() {
        let g = generate_problem(&GeneratorConfig::default(), &mut instance_rng(2, 8)).unwrap();
        let spec = crate::attack::AttackSpec::noise(0.1, 13);
        let hooks = Hooks {
            attack: Some(&spec),
            ..Default::default()
        };
        let result = run_admm(&g.problem, &AdmmConfig::default(), hooks).unwrap();
        let cfg = DetectorConfig::default();
        let full = detect(&result.trace, &cfg).unwrap();
        if full.verdict == Verdict::AttackDetected {
            let first = full.first_detection.unwrap();
            // Auditing any longer prefix still detects.
            let mut shorter = result.trace.clone();
            shorter.entries.truncate(first + 3);
            let again = detect(&shorter, &cfg).unwrap();
            assert_eq!(again.verdict, Verdict::AttackDetected);
        }
    }
}
