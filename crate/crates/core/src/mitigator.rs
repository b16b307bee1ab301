//! Bound checking against public constraint sets and best-response projection
//! onto the feasible set.
//!
//! Feasible sets are axis-aligned intervals intersected with selector-structured
//! linking constraints, so the Euclidean projection is per-coordinate clamping.

use nalgebra::DVector;

use crate::attack::reachable_intervals;
use crate::error::{Error, Result};
use crate::problem::{Intervals, LinkingConstraint, PublicBounds};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BoundCheck {
    Within,
    Violated(Vec<usize>),
}

/// Reports every dimension of `x` outside the public x bounds (closed set).
pub fn check_public_bounds(x: &DVector<f64>, bounds: &PublicBounds) -> Result<BoundCheck> {
    check_intervals(x, &bounds.x)
}

pub fn check_intervals(v: &DVector<f64>, intervals: &Intervals) -> Result<BoundCheck> {
    if v.len() != intervals.len() {
        return Err(Error::Dimension("bound check length mismatch".into()));
    }
    let violated = intervals.violated_dims(v);
    Ok(if violated.is_empty() {
        BoundCheck::Within
    } else {
        BoundCheck::Violated(violated)
    })
}

/// Euclidean projection of a received x-update onto
/// `{x in X_pub : exists z in Z_pub with Ax + Bz = c}`.
///
/// Honest updates are fixed points; attacked updates are clamped onto the
/// boundary, which is the best response available to the receiver.
pub fn project_best_response(
    x_received: &DVector<f64>,
    link: &LinkingConstraint,
    bounds: &PublicBounds,
) -> Result<DVector<f64>> {
    if x_received.len() != bounds.x.len() {
        return Err(Error::Dimension("projection length mismatch".into()));
    }
    let mut out = bounds.x.clamp(x_received);
    for (xj, lo, hi) in reachable_intervals(link, &bounds.z)? {
        let lo = lo.max(bounds.x.lower[xj]);
        let hi = hi.min(bounds.x.upper[xj]);
        if lo > hi {
            return Err(Error::MitigationImpossible(format!(
                "no x in the public set can reach any public z on linked coordinate {xj}"
            )));
        }
        out[xj] = x_received[xj].clamp(lo, hi);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::build_selectors;

    fn bounds_1d(x_half: f64, z_half: f64) -> PublicBounds {
        PublicBounds::new(
            Intervals::around(&DVector::zeros(1), x_half),
            Intervals::around(&DVector::zeros(1), z_half),
        )
    }

    #[test]
    fn interior_point_within() {
        let b = PublicBounds::new(
            Intervals::around(&DVector::zeros(2), 2.0),
            Intervals::around(&DVector::zeros(2), 2.0),
        );
        assert_eq!(
            check_public_bounds(&DVector::zeros(2), &b).unwrap(),
            BoundCheck::Within
        );
    }

    #[test]
    fn violation_reports_dimension() {
        let b = PublicBounds::new(
            Intervals::around(&DVector::zeros(2), 2.0),
            Intervals::around(&DVector::zeros(2), 2.0),
        );
        assert_eq!(
            check_public_bounds(&DVector::from_vec(vec![2.5, 0.0]), &b).unwrap(),
            BoundCheck::Violated(vec![0])
        );
    }

    #[test]
    fn boundary_point_is_within() {
        let b = bounds_1d(2.0, 2.0);
        assert_eq!(
            check_public_bounds(&DVector::from_element(1, 2.0), &b).unwrap(),
            BoundCheck::Within
        );
    }

    #[test]
    fn projection_clamps_linked_coordinate() {
        let link = build_selectors(1, 1, 1).unwrap();
        let b = bounds_1d(5.0, 1.0);
        // Reachable interval for x is [-1, 1]; received 3 clamps to 1.
        let out = project_best_response(&DVector::from_element(1, 3.0), &link, &b).unwrap();
        assert_eq!(out[0], 1.0);
    }

    #[test]
    fn projection_fixes_feasible_points() {
        let link = build_selectors(2, 2, 1).unwrap();
        let b = PublicBounds::new(
            Intervals::around(&DVector::zeros(2), 2.0),
            Intervals::around(&DVector::zeros(2), 2.0),
        );
        let x = DVector::from_vec(vec![0.5, -1.5]);
        let out = project_best_response(&x, &link, &b).unwrap();
        assert_eq!(out, x);
    }

    #[test]
    fn projection_is_idempotent() {
        let link = build_selectors(2, 2, 2).unwrap();
        let b = PublicBounds::new(
            Intervals::around(&DVector::zeros(2), 1.5),
            Intervals::around(&DVector::zeros(2), 0.5),
        );
        let x = DVector::from_vec(vec![3.0, -9.0]);
        let once = project_best_response(&x, &link, &b).unwrap();
        let twice = project_best_response(&once, &link, &b).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn empty_feasible_set_is_signaled() {
        let link = build_selectors(1, 1, 1).unwrap();
        // x must equal z, but public x is [3,4] while z is reachable only in [-1,1].
        let b = PublicBounds::new(
            Intervals::new(DVector::from_element(1, 3.0), DVector::from_element(1, 4.0)).unwrap(),
            Intervals::around(&DVector::zeros(1), 1.0),
        );
        assert!(matches!(
            project_best_response(&DVector::from_element(1, 3.5), &link, &b),
            Err(Error::MitigationImpossible(_))
        ));
    }
}
