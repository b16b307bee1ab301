//! Attack taxonomy, implemented as transformations of the honest x-update.
//!
//! All transformations are deterministic given (spec, seed, iterate index),
//! so attacked runs are replayable.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::mix;
use crate::problem::{Intervals, LinkingConstraint, PrivateSets, PublicBounds};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrivateMode {
    /// Distorted point stays inside the public set: undetectable by bound checks.
    InsidePub,
    /// Distorted point leaves the public set: detectable by bound checks.
    OutsidePub,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum AttackVector {
    NoiseInjection,
    PrivateInfeasibility { mode: PrivateMode },
    LinkingInfeasibility,
    ObjectiveDistortion { scaling: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseDistribution {
    /// Entries multiplied by `1 +/- magnitude` with fair sign draws.
    BernoulliSign,
    /// Entries multiplied by `1 + U(-magnitude, magnitude)`. Retained to
    /// reproduce the negative result that uniform noise fails to stall
    /// convergence.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub vector: AttackVector,
    /// Relative magnitude, e.g. 0.10 for +/-10% noise; also the displacement
    /// margin (fraction of bound width) for infeasibility vectors.
    pub magnitude: f64,
    pub distribution: NoiseDistribution,
    pub start_iteration: usize,
    pub seed: u64,
}

impl AttackSpec {
    pub fn noise(magnitude: f64, seed: u64) -> Self {
        Self {
            vector: AttackVector::NoiseInjection,
            magnitude,
            distribution: NoiseDistribution::BernoulliSign,
            start_iteration: 1,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.magnitude <= 0.0 {
            return Err(Error::Config("attack magnitude must be positive".into()));
        }
        if self.start_iteration < 1 {
            return Err(Error::Config("start_iteration must be at least 1".into()));
        }
        if let AttackVector::ObjectiveDistortion { scaling } = self.vector {
            if scaling <= 0.0 {
                return Err(Error::Config(
                    "objective distortion must preserve convexity (scaling > 0)".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Dispatches the spec's vector at iterate `k`. Objective distortion is
/// applied inside the engine (it changes the subproblem, not the sent value),
/// so here it passes the update through unchanged.
pub fn apply(
    spec: &AttackSpec,
    x_star: &DVector<f64>,
    k: usize,
    link: &LinkingConstraint,
    bounds: Option<&PublicBounds>,
    private_sets: Option<&PrivateSets>,
) -> Result<DVector<f64>> {
    spec.validate()?;
    match spec.vector {
        AttackVector::NoiseInjection => Ok(noise_attack(x_star, spec, k)),
        AttackVector::LinkingInfeasibility => {
            let z_pub = &bounds
                .ok_or_else(|| {
                    Error::AttackInapplicable(
                        "linking infeasibility needs public z bounds".into(),
                    )
                })?
                .z;
            // The attacker's distorted constraint set is fixed for the whole
            // run, so the displacement side is drawn from the spec seed
            // alone; only per-iteration attacks use the iteration stream.
            let mut run_rng = ChaCha8Rng::seed_from_u64(spec.seed);
            linking_infeasibility_attack(x_star, link, z_pub, spec.magnitude, &mut run_rng)
        }
        AttackVector::PrivateInfeasibility { mode } => {
            let public = &bounds
                .ok_or_else(|| {
                    Error::AttackInapplicable(
                        "private infeasibility needs public x bounds".into(),
                    )
                })?
                .x;
            let private = &private_sets
                .ok_or_else(|| {
                    Error::AttackInapplicable(
                        "private infeasibility needs the private x set".into(),
                    )
                })?
                .x;
            private_infeasibility_attack(x_star, private, public, mode, spec.magnitude)
        }
        AttackVector::ObjectiveDistortion { .. } => Ok(x_star.clone()),
    }
}

fn iteration_rng(spec: &AttackSpec, k: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(spec.seed, k as u64))
}

/// Zero-mean multiplicative noise, fresh draws per entry per iteration.
pub fn noise_attack(x_star: &DVector<f64>, spec: &AttackSpec, k: usize) -> DVector<f64> {
    let mut rng = iteration_rng(spec, k);
    let factors: Vec<f64> = (0..x_star.len())
        .map(|_| match spec.distribution {
            NoiseDistribution::BernoulliSign => {
                if rng.gen_bool(0.5) {
                    spec.magnitude
                } else {
                    -spec.magnitude
                }
            }
            NoiseDistribution::Uniform => rng.gen_range(-spec.magnitude..=spec.magnitude),
        })
        .collect();
    apply_noise_factors(x_star, &factors)
}

pub(crate) fn apply_noise_factors(x_star: &DVector<f64>, factors: &[f64]) -> DVector<f64> {
    DVector::from_fn(x_star.len(), |i, _| x_star[i] * (1.0 + factors[i]))
}

/// The interval of values each linked x-coordinate can take while some
/// `z` in `z_pub` satisfies the constraint row: solving
/// `a x_j + b z_i = c` over `z_i` in its public interval.
pub fn reachable_intervals(
    link: &LinkingConstraint,
    z_pub: &Intervals,
) -> Result<Vec<(usize, f64, f64)>> {
    let a_sel = LinkingConstraint::selector_entries(&link.a)?;
    let b_sel = LinkingConstraint::selector_entries(&link.b)?;
    let mut out = Vec::with_capacity(a_sel.len());
    for (row, (&(xj, av), &(zi, bv))) in a_sel.iter().zip(b_sel.iter()).enumerate() {
        let lo_z = z_pub.lower[zi];
        let hi_z = z_pub.upper[zi];
        if !lo_z.is_finite() || !hi_z.is_finite() {
            return Err(Error::AttackInapplicable(format!(
                "public z bound unbounded on linked coordinate {zi}"
            )));
        }
        let e1 = (link.c_link[row] - bv * lo_z) / av;
        let e2 = (link.c_link[row] - bv * hi_z) / av;
        out.push((xj, e1.min(e2), e1.max(e2)));
    }
    Ok(out)
}

/// Displaces the linked coordinates of the update strictly outside the set
/// reachable by any `z` in the public z bounds, by `margin` of the interval
/// width past a randomly chosen end.
pub fn linking_infeasibility_attack(
    x_star: &DVector<f64>,
    link: &LinkingConstraint,
    z_pub: &Intervals,
    margin: f64,
    rng: &mut impl Rng,
) -> Result<DVector<f64>> {
    if margin <= 0.0 {
        return Err(Error::AttackInapplicable(
            "margin must be positive: the update must strictly exit the reachable set".into(),
        ));
    }
    let mut x = x_star.clone();
    for (xj, lo, hi) in reachable_intervals(link, z_pub)? {
        let width = (hi - lo).max(1.0);
        if rng.gen_bool(0.5) {
            x[xj] = hi + margin * width;
        } else {
            x[xj] = lo - margin * width;
        }
    }
    Ok(x)
}

/// Models a distorted private constraint set: the sent update sits in the gap
/// between the private and public sets (`inside_pub`, undetectable by bound
/// checks) or strictly outside the public set (`outside_pub`, detectable).
pub fn private_infeasibility_attack(
    x_star: &DVector<f64>,
    private_x: &Intervals,
    public_x: &Intervals,
    mode: PrivateMode,
    margin: f64,
) -> Result<DVector<f64>> {
    if private_x.len() != x_star.len() || public_x.len() != x_star.len() {
        return Err(Error::Dimension("bound lengths disagree with x".into()));
    }
    let mut x = x_star.clone();
    let mut displaced = false;
    for i in 0..x.len() {
        let (pl, pu) = (private_x.lower[i], private_x.upper[i]);
        let (ql, qu) = (public_x.lower[i], public_x.upper[i]);
        match mode {
            PrivateMode::InsidePub => {
                // Midpoint of the upper gap between private and public sets.
                if qu > pu {
                    x[i] = (pu + qu) / 2.0;
                    displaced = true;
                } else if ql < pl {
                    x[i] = (pl + ql) / 2.0;
                    displaced = true;
                }
            }
            PrivateMode::OutsidePub => {
                let width = (qu - ql).max(1.0);
                x[i] = qu + margin * width;
                displaced = true;
            }
        }
    }
    if !displaced {
        return Err(Error::AttackInapplicable(
            "private set equals the public set; no undetectable gap exists".into(),
        ));
    }
    Ok(x)
}

/// The quadratic the compromised x-actor minimizes instead of `P`.
pub fn distorted_quadratic(p_cost: &DMatrix<f64>, scaling: f64) -> Result<DMatrix<f64>> {
    if scaling <= 0.0 {
        return Err(Error::AttackInapplicable(
            "objective distortion must preserve convexity (scaling > 0)".into(),
        ));
    }
    Ok(p_cost * scaling)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::build_selectors;

    #[test]
    fn noise_definition_unrolled() {
        let x = DVector::from_vec(vec![1.0, 2.0]);
        let out = apply_noise_factors(&x, &[0.1, -0.1]);
        assert_eq!(out, DVector::from_vec(vec![1.1, 1.8]));
    }

    #[test]
    fn noise_fixes_origin() {
        let spec = AttackSpec::noise(0.1, 3);
        let out = noise_attack(&DVector::zeros(4), &spec, 5);
        assert_eq!(out, DVector::zeros(4));
    }

    #[test]
    fn noise_varies_with_iteration_and_is_replayable() {
        let spec = AttackSpec::noise(0.1, 3);
        let x = DVector::from_element(3, 1.0);
        let a = noise_attack(&x, &spec, 1);
        let b = noise_attack(&x, &spec, 2);
        assert_eq!(a, noise_attack(&x, &spec, 1));
        assert_ne!(a, b);
    }

    #[test]
    fn noise_is_zero_mean_monte_carlo() {
        let spec = AttackSpec::noise(0.1, 99);
        let x = DVector::from_element(2, 1.0);
        let samples = 10_000;
        let mut mean = DVector::zeros(2);
        for k in 1..=samples {
            let out = noise_attack(&x, &spec, k);
            mean += (out - &x).component_div(&x);
        }
        mean /= samples as f64;
        assert!(mean.amax() < 1e-2, "mean displacement {mean}");
    }

    #[test]
    fn linking_attack_exits_reachable_interval() {
        let link = build_selectors(1, 1, 1).unwrap();
        let z_pub = Intervals::new(DVector::from_element(1, -1.0), DVector::from_element(1, 1.0))
            .unwrap();
        let mut rng = crate::generator::instance_rng(1, 0);
        let x = linking_infeasibility_attack(
            &DVector::zeros(1),
            &link,
            &z_pub,
            0.1,
            &mut rng,
        )
        .unwrap();
        // Reachable set for x under x - z = 0, z in [-1, 1] is [-1, 1].
        assert!(x[0].abs() > 1.0);
    }

    #[test]
    fn linking_attack_rejects_zero_margin() {
        let link = build_selectors(1, 1, 1).unwrap();
        let z_pub = Intervals::new(DVector::from_element(1, -1.0), DVector::from_element(1, 1.0))
            .unwrap();
        let mut rng = crate::generator::instance_rng(1, 0);
        assert!(
            linking_infeasibility_attack(&DVector::zeros(1), &link, &z_pub, 0.0, &mut rng)
                .is_err()
        );
    }

    #[test]
    fn linking_attack_needs_bounded_z() {
        let link = build_selectors(1, 1, 1).unwrap();
        let z_pub = Intervals {
            lower: DVector::from_element(1, f64::NEG_INFINITY),
            upper: DVector::from_element(1, f64::INFINITY),
        };
        let mut rng = crate::generator::instance_rng(1, 0);
        assert!(
            linking_infeasibility_attack(&DVector::zeros(1), &link, &z_pub, 0.1, &mut rng)
                .is_err()
        );
    }

    #[test]
    fn private_attack_interval_geometry() {
        let private = Intervals::new(DVector::from_element(1, -1.0), DVector::from_element(1, 1.0))
            .unwrap();
        let public = Intervals::new(DVector::from_element(1, -2.0), DVector::from_element(1, 2.0))
            .unwrap();
        let x = DVector::zeros(1);
        let inside =
            private_infeasibility_attack(&x, &private, &public, PrivateMode::InsidePub, 0.1)
                .unwrap();
        assert_eq!(inside[0], 1.5);
        assert!(public.contains(&inside) && !private.contains(&inside));
        let outside =
            private_infeasibility_attack(&x, &private, &public, PrivateMode::OutsidePub, 0.125)
                .unwrap();
        assert_eq!(outside[0], 2.5);
        assert!(!public.contains(&outside));
    }

    #[test]
    fn private_attack_needs_a_gap() {
        let set = Intervals::new(DVector::from_element(1, -1.0), DVector::from_element(1, 1.0))
            .unwrap();
        assert!(private_infeasibility_attack(
            &DVector::zeros(1),
            &set,
            &set,
            PrivateMode::InsidePub,
            0.1
        )
        .is_err());
    }

    #[test]
    fn distortion_preserves_convexity_or_rejects() {
        let p = DMatrix::identity(2, 2);
        assert!(distorted_quadratic(&p, 4.0).is_ok());
        assert!(distorted_quadratic(&p, 0.0).is_err());
        assert!(distorted_quadratic(&p, -1.0).is_err());
    }
}
