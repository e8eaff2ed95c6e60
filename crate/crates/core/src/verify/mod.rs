//! Independent checks of computed flexibility sets: Monte-Carlo
//! containment, exact projections of tiny instances, ellipse projections
//! for plotting, and disaggregation round trips.

mod ellipse;
mod oracle;
mod projection;
mod roundtrip;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::ConstraintSystem;
use crate::policies::{PolicySolution, Region};
use crate::reduction::ReducedSystem;
use crate::{Error, Result};

pub use ellipse::{project_box, project_ellipse, Ellipse2D, Rectangle};
pub use oracle::LpOracle;
pub use projection::{exact_projection_2d, mve_in_polygon, Polygon, ProjectionBudget};
pub use roundtrip::{roundtrip, RoundTrip};

/// Violations up to this value count as feasible.
pub const VIOLATION_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContainmentOptions {
    pub samples: usize,
    pub seed: u64,
    /// Also solve the phase-one LP per sample.
    pub lp_oracle: bool,
    pub tolerance: f64,
    /// Largest number of witnesses kept in the report.
    pub max_witnesses: usize,
}

impl Default for ContainmentOptions {
    fn default() -> Self {
        ContainmentOptions {
            samples: 1000,
            seed: 0,
            lp_oracle: true,
            tolerance: VIOLATION_TOL,
            max_witnesses: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub sample: usize,
    pub xi: Vec<f64>,
    pub zeta: Vec<f64>,
    pub p0: Vec<f64>,
    pub violation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContainmentReport {
    pub samples: usize,
    pub seed: u64,
    /// Largest violation over all samples, measured by the LP oracle when it
    /// is used and by the stored policy otherwise. Negative when every
    /// sample is strictly feasible.
    pub max_violation: f64,
    /// Largest normalized row residual of the stored policy.
    pub policy_max_violation: Option<f64>,
    /// Samples whose violation exceeds the tolerance.
    pub failure_count: usize,
    /// First failing samples in draw order.
    pub failures: Vec<Witness>,
    pub lp_oracle_used: bool,
    /// Samples for which the LP oracle did not return an optimum.
    pub lp_errors: Vec<String>,
    pub tolerance: f64,
}

impl ContainmentReport {
    pub fn passed(&self) -> bool {
        self.failure_count == 0 && self.lp_errors.is_empty() && self.max_violation <= self.tolerance
    }
}

/// Uniform point of the unit ball in `R^n` (normalized Gaussian direction,
/// radius `U^(1/n)`), or of the sphere when `surface` is set.
pub fn sample_ball<R: Rng>(rng: &mut R, n: usize, surface: bool) -> DVector<f64> {
    if n == 0 {
        return DVector::zeros(0);
    }
    let mut v = loop {
        let v = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        if v.norm() > 1e-12 {
            break v;
        }
    };
    v /= v.norm();
    if !surface {
        v *= rng.random::<f64>().powf(1.0 / n as f64);
    }
    v
}

/// Uniform point of the cube `[-1, 1]^n`, or of its surface when `surface`
/// is set.
pub fn sample_cube<R: Rng>(rng: &mut R, n: usize, surface: bool) -> DVector<f64> {
    let mut v = DVector::from_fn(n, |_, _| rng.random_range(-1.0..=1.0));
    if surface && n > 0 {
        let face = rng.random_range(0..n);
        v[face] = if rng.random::<bool>() { 1.0 } else { -1.0 };
    }
    v
}

/// One `zeta` with each period block uniform in the unit ball.
pub fn sample_zeta<R: Rng>(rng: &mut R, periods: usize, groups: usize) -> DVector<f64> {
    let mut z = DVector::zeros(periods * groups);
    for t in 0..periods {
        z.rows_mut(t * groups, groups)
            .copy_from(&sample_ball(rng, groups, false));
    }
    z
}

struct Sample {
    xi: DVector<f64>,
    zeta: DVector<f64>,
}

fn draw_samples(region: &Region, sys: &ConstraintSystem, opts: &ContainmentOptions) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let dim = region.dim();
    (0..opts.samples)
        .map(|k| {
            // even indices on the boundary, odd ones inside
            let surface = k % 2 == 0;
            let xi = match region {
                Region::Ellipsoid(_) => sample_ball(&mut rng, dim, surface),
                Region::Hyperbox(_) => sample_cube(&mut rng, dim, surface),
            };
            let zeta = if sys.is_deterministic() {
                DVector::zeros(sys.zeta_len())
            } else {
                sample_zeta(&mut rng, sys.periods, sys.groups)
            };
            Sample { xi, zeta }
        })
        .collect()
}

/// Monte-Carlo check that every sampled `p0` of the solution's set admits a
/// feasible dispatch for the sampled uncertainty.
///
/// Samples are drawn sequentially from a seeded stream and evaluated in
/// parallel; the report does not depend on evaluation order.
pub fn check_containment(
    sol: &PolicySolution,
    sys: &ConstraintSystem,
    red: &ReducedSystem,
    opts: &ContainmentOptions,
) -> Result<ContainmentReport> {
    if opts.samples == 0 {
        return Err(Error::Invariant {
            path: "samples".into(),
            reason: "at least one sample is required".into(),
        });
    }
    let region = sol.region.as_ref().ok_or_else(|| Error::Invariant {
        path: "solution".into(),
        reason: format!("solution has status {} and no region", sol.status),
    })?;
    if region.dim() != sys.periods || red.periods != sys.periods {
        return Err(Error::Dimension {
            path: "solution.E".into(),
            expected: sys.periods,
            found: region.dim(),
        });
    }
    if let Some(policy) = &sol.policy {
        if policy.y_len() != red.y_len() {
            return Err(Error::Dimension {
                path: "solution.policy".into(),
                expected: red.y_len(),
                found: policy.y_len(),
            });
        }
    }
    let oracle = LpOracle::new(sys);
    let norms = DVector::from_column_slice(oracle.row_norms());
    let samples = draw_samples(region, sys, opts);

    struct Outcome {
        policy: Option<f64>,
        lp: Option<std::result::Result<f64, String>>,
        p0: DVector<f64>,
    }
    let outcomes: Vec<Outcome> = samples
        .par_iter()
        .map(|s| {
            let p0 = region.point(&s.xi);
            let policy = sol.policy.as_ref().map(|pol| {
                let y = pol.evaluate(&s.xi, &s.zeta);
                red.residuals(&p0, &y, &s.zeta)
                    .component_div(&norms)
                    .max()
            });
            let lp = opts
                .lp_oracle
                .then(|| oracle.slack(&p0, &s.zeta).map_err(|e| e.to_string()));
            Outcome { policy, lp, p0 }
        })
        .collect();

    let mut max_violation = f64::NEG_INFINITY;
    let mut policy_max: Option<f64> = None;
    let mut failures = Vec::new();
    let mut failure_count = 0;
    let mut lp_errors = Vec::new();
    for (k, (s, o)) in samples.iter().zip(&outcomes).enumerate() {
        if let Some(v) = o.policy {
            policy_max = Some(policy_max.map_or(v, |m| m.max(v)));
        }
        let measured = match &o.lp {
            Some(Ok(v)) => Some(*v),
            Some(Err(e)) => {
                lp_errors.push(format!("sample {k}: {e}"));
                None
            }
            None => o.policy,
        };
        let Some(v) = measured else { continue };
        max_violation = max_violation.max(v);
        if v > opts.tolerance {
            failure_count += 1;
            if failures.len() < opts.max_witnesses {
                failures.push(Witness {
                    sample: k,
                    xi: s.xi.iter().copied().collect(),
                    zeta: s.zeta.iter().copied().collect(),
                    p0: o.p0.iter().copied().collect(),
                    violation: v,
                });
            }
        }
    }
    if !max_violation.is_finite() {
        return Err(Error::Invariant {
            path: "containment".into(),
            reason: "no sample could be evaluated (no policy and no LP oracle result)".into(),
        });
    }
    Ok(ContainmentReport {
        samples: opts.samples,
        seed: opts.seed,
        max_violation,
        policy_max_violation: policy_max,
        failure_count,
        failures,
        lp_oracle_used: opts.lp_oracle,
        lp_errors,
        tolerance: opts.tolerance,
    })
}
