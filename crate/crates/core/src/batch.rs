//! Batch experiments: many generated instances solved with and without an
//! attack, aggregated into a detection confusion matrix and an
//! iterations-to-convergence histogram.
//!
//! Runs are a two-arm design: when an attack is configured, every instance id
//! is solved twice from the same problem seed, once clean and once attacked,
//! so the cohorts differ only in the attack. Instances run in parallel but
//! each derives its randomness from (seed, id) alone, making reports
//! byte-identical across replays and thread counts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attack::AttackSpec;
use crate::detector::{DetectorConfig, Verdict};
use crate::error::{Error, Result};
use crate::generator::{generate_problem, instance_rng, mix, GeneratorConfig};
use crate::problem::{Intervals, PrivateSets, PublicBounds, Termination};
use crate::solver::{central_solution, run_admm, AdmmConfig, Hooks};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchConfig {
    /// Instances per cohort.
    pub count: u64,
    #[serde(default)]
    pub generator: GeneratorConfig,
    #[serde(default)]
    pub admm: AdmmConfig,
    #[serde(default)]
    pub attack: Option<AttackSpec>,
    #[serde(default)]
    pub detector: Option<DetectorConfig>,
    #[serde(default)]
    pub mitigate: bool,
    /// Public bounds are intervals of this halfwidth around the centralized
    /// optimum; private sets use half of it, leaving a displacement gap.
    #[serde(default = "default_halfwidth")]
    pub bounds_halfwidth: f64,
}

fn default_halfwidth() -> f64 {
    2.0
}

impl Default for BatchConfig {
    fn default() -> Self {
        Self {
            count: 100,
            generator: GeneratorConfig::default(),
            admm: AdmmConfig::default(),
            attack: None,
            detector: None,
            mitigate: false,
            bounds_halfwidth: default_halfwidth(),
        }
    }
}

impl BatchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::Config("count must be positive".into()));
        }
        if self.bounds_halfwidth <= 0.0 {
            return Err(Error::Config("bounds_halfwidth must be positive".into()));
        }
        self.generator.validate()?;
        self.admm.validate()?;
        if let Some(a) = &self.attack {
            a.validate()?;
        }
        if let Some(d) = &self.detector {
            d.validate()?;
        }
        Ok(())
    }
}

/// One solved instance arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemRow {
    pub id: u64,
    /// Derived instance seed, sufficient to regenerate the problem.
    pub seed: u64,
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub attacked: bool,
    pub converged: bool,
    pub iterations: usize,
    pub verdict: Option<Verdict>,
    pub first_detection: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub attacked_detected: u64,
    pub attacked_missed: u64,
    pub unattacked_detected: u64,
    pub unattacked_clear: u64,
}

impl ConfusionMatrix {
    pub fn true_positive_rate(&self) -> f64 {
        let total = self.attacked_detected + self.attacked_missed;
        if total == 0 {
            0.0
        } else {
            self.attacked_detected as f64 / total as f64
        }
    }

    pub fn false_positive_rate(&self) -> f64 {
        let total = self.unattacked_detected + self.unattacked_clear;
        if total == 0 {
            0.0
        } else {
            self.unattacked_detected as f64 / total as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchResults {
    pub config: BatchConfig,
    pub rows: Vec<ProblemRow>,
    pub confusion: ConfusionMatrix,
    /// iterations -> (clean count, attacked count), converged runs only.
    pub histogram: BTreeMap<usize, (u64, u64)>,
}

fn run_one(cfg: &BatchConfig, id: u64, attacked: bool) -> Result<ProblemRow> {
    let seed = mix(cfg.generator.seed, id);
    let g = generate_problem(&cfg.generator, &mut instance_rng(cfg.generator.seed, id))?;
    let problem = &g.problem;
    let central = central_solution(problem)?;
    let h = cfg.bounds_halfwidth;
    let bounds = PublicBounds::new(
        Intervals::around(&central.x, h),
        Intervals::around(&central.z, h),
    );
    let private_sets = PrivateSets {
        x: Intervals::around(&central.x, h / 2.0),
        z: Intervals::around(&central.z, h / 2.0),
    };
    // Decorrelate the attack stream across instances while keeping it a pure
    // function of (attack seed, id).
    let spec = cfg.attack.clone().map(|mut a| {
        a.seed = mix(a.seed, id);
        a
    });
    let hooks = Hooks {
        attack: if attacked { spec.as_ref() } else { None },
        detector: cfg.detector.as_ref(),
        mitigate: cfg.mitigate,
        bounds: Some(&bounds),
        private_sets: Some(&private_sets),
    };
    let result = run_admm(problem, &cfg.admm, hooks)?;
    let detection = result.detection.as_ref();
    Ok(ProblemRow {
        id,
        seed,
        n: problem.n(),
        m: problem.m(),
        p: problem.p(),
        attacked,
        converged: result.trace.termination == Termination::Converged,
        iterations: result.trace.last_iterate(),
        verdict: detection.map(|d| d.verdict),
        first_detection: detection.and_then(|d| d.first_detection),
    })
}

pub fn run_batch(cfg: &BatchConfig) -> Result<BatchResults> {
    cfg.validate()?;
    let two_arm = cfg.attack.is_some();
    let mut rows: Vec<ProblemRow> = (0..cfg.count)
        .into_par_iter()
        .map(|id| {
            let mut out = vec![run_one(cfg, id, false)?];
            if two_arm {
                out.push(run_one(cfg, id, true)?);
            }
            Ok(out)
        })
        .collect::<Result<Vec<Vec<ProblemRow>>>>()?
        .into_iter()
        .flatten()
        .collect();
    rows.sort_by_key(|r| (r.id, r.attacked));

    let mut confusion = ConfusionMatrix::default();
    let mut histogram: BTreeMap<usize, (u64, u64)> = BTreeMap::new();
    for row in &rows {
        let detected = row.verdict == Some(Verdict::AttackDetected);
        match (row.attacked, detected) {
            (true, true) => confusion.attacked_detected += 1,
            (true, false) => confusion.attacked_missed += 1,
            (false, true) => confusion.unattacked_detected += 1,
            (false, false) => confusion.unattacked_clear += 1,
        }
        if row.converged {
            let slot = histogram.entry(row.iterations).or_default();
            if row.attacked {
                slot.1 += 1;
            } else {
                slot.0 += 1;
            }
        }
    }
    Ok(BatchResults {
        config: cfg.clone(),
        rows,
        confusion,
        histogram,
    })
}

fn verdict_label(v: Option<Verdict>) -> &'static str {
    match v {
        Some(Verdict::AttackDetected) => "attack_detected",
        Some(Verdict::NoAttackDetected) => "no_attack_detected",
        Some(Verdict::Inconclusive) => "inconclusive",
        None => "",
    }
}

impl BatchResults {
    pub fn confusion_csv(&self) -> String {
        let c = &self.confusion;
        let mut out = String::from("cohort,detected,not_detected,total\n");
        let _ = writeln!(
            out,
            "unattacked,{},{},{}",
            c.unattacked_detected,
            c.unattacked_clear,
            c.unattacked_detected + c.unattacked_clear
        );
        if self.config.attack.is_some() {
            let _ = writeln!(
                out,
                "attacked,{},{},{}",
                c.attacked_detected,
                c.attacked_missed,
                c.attacked_detected + c.attacked_missed
            );
        }
        out
    }

    pub fn problems_csv(&self) -> String {
        let mut out =
            String::from("id,seed,n,m,p,attacked,converged,iterations,verdict,first_detection\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.id,
                r.seed,
                r.n,
                r.m,
                r.p,
                r.attacked,
                r.converged,
                r.iterations,
                verdict_label(r.verdict),
                r.first_detection.map_or(String::new(), |v| v.to_string()),
            );
        }
        out
    }

    pub fn histogram_csv(&self) -> String {
        let mut out = String::from("iterations,count_unattacked,count_attacked\n");
        for (iters, (clean, attacked)) in &self.histogram {
            let _ = writeln!(out, "{iters},{clean},{attacked}");
        }
        out
    }

    /// Writes confusion.csv, problems.csv, histogram.csv, and a config echo
    /// into `dir`.
    pub fn emit_report(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("confusion.csv"), self.confusion_csv())?;
        std::fs::write(dir.join("problems.csv"), self.problems_csv())?;
        std::fs::write(dir.join("histogram.csv"), self.histogram_csv())?;
        let config = serde_json::to_string_pretty(&self.config)
            .map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(dir.join("config.json"), config)?;
        Ok(())
    }
}
