//! Command-line harness: problem generation, single solves with optional
//! attack/detector/mitigator, batch experiments with report files, and
//! offline auditing of saved traces.
//!
//! Exit codes: 0 success, 2 configuration error, 3 runtime failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use admm_audit::attack::{AttackSpec, AttackVector, NoiseDistribution, PrivateMode};
use admm_audit::batch::{run_batch, BatchConfig};
use admm_audit::detector::{
    detect, AuditCadence, DetectorConfig, DetectorMode, PointStrategy,
};
use admm_audit::generator::{generate_problem, instance_rng, GeneratorConfig};
use admm_audit::io::{load_problem, load_trace, save_problem, save_trace, Provenance};
use admm_audit::problem::{Intervals, PrivateSets, PublicBounds, Termination};
use admm_audit::solver::{central_solution, run_admm, AdmmConfig, Hooks};
use admm_audit::Error;

/// Environment variable overriding the output directory; all other settings
/// come from flags or the config file.
const OUT_DIR_ENV: &str = "ADMM_AUDIT_OUT_DIR";

#[derive(Parser)]
#[command(name = "admm-audit", about = "ADMM consensus solver with attack injection and auditing", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate random problems and write them as JSON files.
    Generate(GenerateArgs),
    /// Solve one problem, optionally attacked, audited, and mitigated.
    Solve(SolveArgs),
    /// Run a batch experiment and emit report files.
    Batch(BatchArgs),
    /// Run the detector on a saved trace.
    Audit(AuditArgs),
}

#[derive(Args)]
struct GeneratorArgs {
    /// Upper bound for the dimensions n and m.
    #[arg(long, default_value_t = 10)]
    maxdim: usize,
    /// Entry magnitude for the random cost factors.
    #[arg(long, default_value_t = 2.5)]
    scale: f64,
    /// Master seed; every instance derives its stream from (seed, index).
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl GeneratorArgs {
    fn config(&self) -> GeneratorConfig {
        GeneratorConfig {
            maxdim: self.maxdim,
            scale: self.scale,
            seed: self.seed,
        }
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    generator: GeneratorArgs,
    /// How many problems to generate.
    #[arg(long, default_value_t = 1)]
    count: u64,
    /// Output directory for problem-<index>.json files.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum AttackKind {
    Noise,
    Linking,
    PrivateInside,
    PrivateOutside,
    Distortion,
}

#[derive(Args)]
struct AttackArgs {
    /// Attack vector to inject; omit for an honest run.
    #[arg(long, value_enum)]
    attack: Option<AttackKind>,
    /// Relative magnitude (noise level, displacement margin).
    #[arg(long, default_value_t = 0.1)]
    magnitude: f64,
    /// Objective-distortion scaling factor.
    #[arg(long, default_value_t = 4.0)]
    scaling: f64,
    /// First attacked iteration.
    #[arg(long, default_value_t = 1)]
    attack_start: usize,
    #[arg(long, default_value_t = 0)]
    attack_seed: u64,
    /// Draw uniform instead of fair-sign noise factors.
    #[arg(long)]
    uniform_noise: bool,
}

impl AttackArgs {
    fn spec(&self) -> Option<AttackSpec> {
        let vector = match self.attack? {
            AttackKind::Noise => AttackVector::NoiseInjection,
            AttackKind::Linking => AttackVector::LinkingInfeasibility,
            AttackKind::PrivateInside => AttackVector::PrivateInfeasibility {
                mode: PrivateMode::InsidePub,
            },
            AttackKind::PrivateOutside => AttackVector::PrivateInfeasibility {
                mode: PrivateMode::OutsidePub,
            },
            AttackKind::Distortion => AttackVector::ObjectiveDistortion {
                scaling: self.scaling,
            },
        };
        Some(AttackSpec {
            vector,
            magnitude: self.magnitude,
            distribution: if self.uniform_noise {
                NoiseDistribution::Uniform
            } else {
                NoiseDistribution::BernoulliSign
            },
            start_iteration: self.attack_start,
            seed: self.attack_seed,
        })
    }
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Full,
    LinkedOnly,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum StrategyArg {
    EvenlySpaced,
    MostRecent,
}

#[derive(Args)]
struct DetectorArgs {
    /// Enable the convexity auditor.
    #[arg(long)]
    detect: bool,
    #[arg(long, value_enum, default_value_t = ModeArg::LinkedOnly)]
    detector_mode: ModeArg,
    #[arg(long, value_enum, default_value_t = StrategyArg::EvenlySpaced)]
    strategy: StrategyArg,
    /// Condition cap on the difference system.
    #[arg(long, default_value_t = 1e8)]
    kappa_max: f64,
    /// Keep solving after a detection instead of aborting.
    #[arg(long)]
    no_abort: bool,
}

impl DetectorArgs {
    fn config(&self) -> Option<DetectorConfig> {
        self.detect.then(|| self.build())
    }

    fn build(&self) -> DetectorConfig {
        DetectorConfig {
            mode: match self.detector_mode {
                ModeArg::Full => DetectorMode::Full,
                ModeArg::LinkedOnly => DetectorMode::LinkedOnly,
            },
            strategy: match self.strategy {
                StrategyArg::EvenlySpaced => PointStrategy::EvenlySpaced,
                StrategyArg::MostRecent => PointStrategy::MostRecent,
            },
            kappa_max: self.kappa_max,
            cadence: AuditCadence::EveryIteration,
            abort_on_detect: !self.no_abort,
            ..Default::default()
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    /// Load the problem from a JSON file instead of generating it.
    #[arg(long)]
    problem: Option<PathBuf>,
    #[command(flatten)]
    generator: GeneratorArgs,
    /// Instance index within the generator stream.
    #[arg(long, default_value_t = 0)]
    instance: u64,
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    #[arg(long, default_value_t = 1e-4)]
    eps: f64,
    #[arg(long, default_value_t = 500)]
    max_iterations: usize,
    #[command(flatten)]
    attack: AttackArgs,
    #[command(flatten)]
    detector: DetectorArgs,
    /// Project received updates onto the public feasible set.
    #[arg(long)]
    mitigate: bool,
    /// Halfwidth of the public bound intervals around the centralized optimum.
    #[arg(long, default_value_t = 2.0)]
    bounds_halfwidth: f64,
    /// Write the full iterate trace as JSON Lines.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct BatchArgs {
    /// TOML file with the batch configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Instances per cohort; overrides the config file.
    #[arg(long)]
    count: Option<u64>,
    /// Large-population preset: 10,000 instances per cohort.
    #[arg(long)]
    long: bool,
    /// Output directory for the report files.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct AuditArgs {
    /// Trace file written by `solve --trace`.
    #[arg(long)]
    trace: PathBuf,
    #[command(flatten)]
    detector: DetectorArgs,
}

#[derive(Serialize)]
struct SolveSummary {
    n: usize,
    m: usize,
    p: usize,
    termination: Termination,
    iterations: usize,
    final_primal_residual: f64,
    final_dual_residual: f64,
    distance_to_central: Option<f64>,
    detection: Option<admm_audit::detector::ReportSummary>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Solve(args) => cmd_solve(args),
        Command::Batch(args) => cmd_batch(args),
        Command::Audit(args) => cmd_audit(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// Config errors exit 2, runtime failures 3.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Dimension(_) | Error::Format(_) => 2,
        _ => 3,
    }
}

fn out_dir(flag: &Path) -> PathBuf {
    std::env::var_os(OUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| flag.to_path_buf())
}

fn cmd_generate(args: GenerateArgs) -> Result<(), Error> {
    let cfg = args.generator.config();
    let dir = out_dir(&args.out);
    std::fs::create_dir_all(&dir)?;
    for i in 0..args.count {
        let g = generate_problem(&cfg, &mut instance_rng(cfg.seed, i))?;
        let provenance = Provenance {
            seed: cfg.seed,
            instance: i,
        };
        save_problem(
            &g.problem,
            Some(provenance),
            dir.join(format!("problem-{i}.json")),
        )?;
    }
    println!("wrote {} problem(s) to {}", args.count, dir.display());
    Ok(())
}

fn cmd_solve(args: SolveArgs) -> Result<(), Error> {
    let problem = match &args.problem {
        Some(path) => load_problem(path)?.0,
        None => {
            let cfg = args.generator.config();
            generate_problem(&cfg, &mut instance_rng(cfg.seed, args.instance))?.problem
        }
    };
    let admm = AdmmConfig {
        rho: args.rho,
        eps_pri: args.eps,
        eps_dual: args.eps,
        max_iterations: args.max_iterations,
        ..Default::default()
    };
    let spec = args.attack.spec();
    let detector = args.detector.config();

    // Bound sets are synthesized around the centralized optimum whenever any
    // hook needs them; the oracle also feeds the solution-quality field.
    let central = central_solution(&problem).ok();
    let needs_bounds = args.mitigate
        || matches!(
            spec.as_ref().map(|s| s.vector),
            Some(AttackVector::LinkingInfeasibility | AttackVector::PrivateInfeasibility { .. })
        );
    let bounds_sets = match (&central, needs_bounds) {
        (Some(c), true) => {
            let h = args.bounds_halfwidth;
            Some((
                PublicBounds::new(Intervals::around(&c.x, h), Intervals::around(&c.z, h)),
                PrivateSets {
                    x: Intervals::around(&c.x, h / 2.0),
                    z: Intervals::around(&c.z, h / 2.0),
                },
            ))
        }
        (None, true) => {
            return Err(Error::Config(
                "this attack or mitigation needs bound sets, and no centralized solution \
                 is available to anchor them"
                    .into(),
            ))
        }
        _ => None,
    };
    let hooks = Hooks {
        attack: spec.as_ref(),
        detector: detector.as_ref(),
        mitigate: args.mitigate,
        bounds: bounds_sets.as_ref().map(|(b, _)| b),
        private_sets: bounds_sets.as_ref().map(|(_, p)| p),
    };
    let result = run_admm(&problem, &admm, hooks)?;
    if let Some(path) = &args.trace {
        save_trace(&result.trace, path)?;
    }
    let last = result.trace.entries.last().expect("trace has an entry");
    let distance = central.as_ref().map(|c| {
        ((&last.x - &c.x).norm_squared() + (&last.z - &c.z).norm_squared()).sqrt()
    });
    let summary = SolveSummary {
        n: problem.n(),
        m: problem.m(),
        p: problem.p(),
        termination: result.trace.termination,
        iterations: result.trace.last_iterate(),
        final_primal_residual: last.r_norm(),
        final_dual_residual: last.s_norm(),
        distance_to_central: distance,
        detection: result.detection.as_ref().map(|d| d.summary()),
    };
    println!(
        "{}",
        serde_json::to_string_pretty(&summary).map_err(|e| Error::Format(e.to_string()))?
    );
    Ok(())
}

fn cmd_batch(args: BatchArgs) -> Result<(), Error> {
    let mut cfg: BatchConfig = match &args.config {
        Some(path) => toml::from_str(&std::fs::read_to_string(path)?)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?,
        None => BatchConfig::default(),
    };
    if args.long {
        cfg.count = 10_000;
    }
    if let Some(count) = args.count {
        cfg.count = count;
    }
    let results = run_batch(&cfg)?;
    let dir = out_dir(&args.out);
    results.emit_report(&dir)?;
    let c = &results.confusion;
    println!(
        "{} row(s); unattacked {}/{} flagged",
        results.rows.len(),
        c.unattacked_detected,
        c.unattacked_detected + c.unattacked_clear
    );
    if results.config.attack.is_some() {
        println!(
            "attacked {}/{} detected (tpr {:.3}, fpr {:.3})",
            c.attacked_detected,
            c.attacked_detected + c.attacked_missed,
            c.true_positive_rate(),
            c.false_positive_rate()
        );
    }
    println!("reports written to {}", dir.display());
    Ok(())
}

fn cmd_audit(args: AuditArgs) -> Result<(), Error> {
    let trace = load_trace(&args.trace)?;
    let cfg = args.detector.build();
    let report = detect(&trace, &cfg)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&report.summary())
            .map_err(|e| Error::Format(e.to_string()))?
    );
    Ok(())
}
