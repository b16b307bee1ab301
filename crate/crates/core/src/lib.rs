//! Distributed quadratic optimization with ADMM under adversarial actors:
//! problem generation, aggregator-coordinated and fully decentralized
//! consensus solving, attack injection, convexity-audit detection of noise
//! injection, and projection-based mitigation of infeasibility attacks.

pub mod attack;
pub mod batch;
pub mod decentralized;
pub mod detector;
pub mod error;
pub mod generator;
pub mod io;
pub mod mitigator;
pub mod problem;
pub mod solver;

pub use attack::{AttackSpec, AttackVector, NoiseDistribution, PrivateMode};
pub use batch::{BatchConfig, BatchResults, ConfusionMatrix};
pub use detector::{
    detect, DetectionReport, DetectorConfig, DetectorMode, PointStrategy, Verdict,
};
pub use error::{Error, Result};
pub use generator::{generate_problem, instance_rng, GeneratorConfig};
pub use mitigator::{check_public_bounds, project_best_response, BoundCheck};
pub use problem::{
    AdmmTrace, Intervals, LinkingConstraint, PrivateSets, PublicBounds, QuadraticProblem,
    Termination, TraceEntry,
};
pub use solver::{central_solution, run_admm, AdmmConfig, CentralSolution, Hooks, SolveResult};
