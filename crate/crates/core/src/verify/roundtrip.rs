use nalgebra::DVector;

use crate::model::ConstraintSystem;
use crate::policies::{PolicySolution, Region};
use crate::reduction::{disaggregate, NullspaceBasis};
use crate::{Error, Result};

use super::LpOracle;

/// Aggregation residuals above this are rejected.
pub const AGGREGATION_TOL: f64 = 1e-8;
/// Normalized inequality residuals above this are rejected.
pub const INEQUALITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct RoundTrip {
    pub xi: DVector<f64>,
    pub y: DVector<f64>,
    pub p: DVector<f64>,
    /// `max |D p + b(zeta) - p0|`.
    pub aggregation_residual: f64,
    /// Largest normalized residual of `W p <= z(zeta)`.
    pub inequality_residual: f64,
}

/// Recovers a device dispatch for `p0` under `zeta` through the stored
/// policy and checks it against the original constraints.
pub fn roundtrip(
    sol: &PolicySolution,
    sys: &ConstraintSystem,
    basis: &NullspaceBasis,
    p0: &DVector<f64>,
    zeta: &DVector<f64>,
) -> Result<RoundTrip> {
    let (region, policy) = match (&sol.region, &sol.policy) {
        (Some(r), Some(p)) => (r, p),
        _ => {
            return Err(Error::Invariant {
                path: "solution".into(),
                reason: format!("solution has status {} and no policy", sol.status),
            })
        }
    };
    if p0.len() != sys.periods {
        return Err(Error::Dimension {
            path: "p0".into(),
            expected: sys.periods,
            found: p0.len(),
        });
    }
    crate::model::check_uncertainty(zeta, sys.groups, sys.periods)?;

    let xi = match region {
        Region::Ellipsoid(e) => {
            let pinv = e
                .shape
                .clone()
                .pseudo_inverse(1e-12 * e.shape.norm().max(1.0))
                .map_err(|m| Error::Invariant {
                    path: "E".into(),
                    reason: m.into(),
                })?;
            let xi = pinv * (p0 - &e.center);
            let norm = xi.norm();
            // p0 must actually be an image of xi when E is singular
            let back = e.point(&xi);
            let miss = (&back - p0).amax();
            if norm > 1.0 + 1e-8 || miss > 1e-8 * (1.0 + p0.amax()) {
                return Err(Error::OutsideEllipsoid { norm: norm.max(1.0 + miss) });
            }
            xi
        }
        Region::Hyperbox(b) => {
            let d = b.half_widths();
            let xi = (p0 - b.center()).component_div(&d).map(|v| if v.is_finite() { v } else { 0.0 });
            let norm = xi.amax();
            if norm > 1.0 + 1e-8 {
                return Err(Error::OutsideEllipsoid { norm });
            }
            xi
        }
    };
    let y = policy.evaluate(&xi, zeta);
    let p = disaggregate(basis, sys, p0, &y, zeta)?;
    let (_, b) = sys.evaluate_rhs_unchecked(zeta);
    let aggregation_residual = (&sys.d * &p + b - p0).amax();
    let inequality_residual = LpOracle::new(sys).residuals(&p, zeta).max();
    if aggregation_residual > AGGREGATION_TOL {
        return Err(Error::Invariant {
            path: "roundtrip.aggregation".into(),
            reason: format!("residual {aggregation_residual:e}"),
        });
    }
    if inequality_residual > INEQUALITY_TOL {
        return Err(Error::Invariant {
            path: "roundtrip.inequalities".into(),
            reason: format!("normalized residual {inequality_residual:e}"),
        });
    }
    Ok(RoundTrip {
        xi,
        y,
        p,
        aggregation_residual,
        inequality_residual,
    })
}
