use nalgebra::DVector;

use crate::conic::{self, Affine, ConicProgram, Settings, Status};
use crate::model::ConstraintSystem;
use crate::{Error, Result};

/// Phase-one LP for a fixed `(p0, zeta)`:
///
/// `min s  s.t.  W_i p - z_i(zeta) <= s |W_i|,  D p = p0 - b(zeta),  s >= -1`.
///
/// Rows are measured in units of distance to their hyperplane, so `s <= 0`
/// exactly when a feasible dispatch exists and `s` bounds how far the worst
/// row is violated.
pub struct LpOracle<'a> {
    sys: &'a ConstraintSystem,
    rows: Vec<Vec<(usize, f64)>>,
    norms: Vec<f64>,
    settings: Settings,
}

impl<'a> LpOracle<'a> {
    pub fn new(sys: &'a ConstraintSystem) -> Self {
        let rows = sys
            .w
            .row_iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(j, v)| (j, *v))
                    .collect()
            })
            .collect();
        let norms = sys
            .w
            .row_iter()
            .map(|r| {
                let n = r.norm();
                if n > 0.0 {
                    n
                } else {
                    1.0
                }
            })
            .collect();
        LpOracle {
            sys,
            rows,
            norms,
            settings: Settings {
                feas_tol: 1e-9,
                gap_tol: 1e-9,
                ..Settings::default()
            },
        }
    }

    /// Optimal slack `s*`; positive values mean `p0` is not disaggregable
    /// under `zeta`.
    pub fn slack(&self, p0: &DVector<f64>, zeta: &DVector<f64>) -> Result<f64> {
        let sys = self.sys;
        let (z, b) = sys.evaluate_rhs_unchecked(zeta);
        let mut prog = ConicProgram::new();
        let p = prog.vector("p", sys.column_count());
        let s = prog.scalar("s");
        for (i, row) in self.rows.iter().enumerate() {
            // z_i/|W_i| - W_i p/|W_i| + s >= 0
            let inv = 1.0 / self.norms[i];
            let mut e = Affine::constant(z[i] * inv);
            for &(j, v) in row {
                e.add(p.at(j), -v * inv);
            }
            e.add(s.0, 1.0);
            prog.add_nonneg("row", e);
        }
        for t in 0..sys.periods {
            let mut e = Affine::constant(b[t] - p0[t]);
            for (j, v) in sys.d.row(t).iter().enumerate() {
                if *v != 0.0 {
                    e.add(p.at(j), *v);
                }
            }
            prog.add_eq("aggregation", e);
        }
        let mut floor = Affine::var(s.0);
        floor.add_const(1.0);
        prog.add_nonneg("floor", floor);
        prog.maximize(Affine::var(s.0).scaled(-1.0));

        let sol = conic::solve(&prog, &self.settings)?;
        match sol.status {
            Status::Optimal => Ok(sol.scalar(s)),
            status => Err(Error::Solver {
                status: status.as_str().into(),
                detail: format!("LP oracle: {}", sol.message),
            }),
        }
    }

    /// Normalized residuals `(W_i p - z_i) / |W_i|` of a dispatch.
    pub fn residuals(&self, p: &DVector<f64>, zeta: &DVector<f64>) -> DVector<f64> {
        let (z, _) = self.sys.evaluate_rhs_unchecked(zeta);
        let r = &self.sys.w * p - z;
        DVector::from_fn(r.len(), |i, _| r[i] / self.norms[i])
    }

    pub fn row_norms(&self) -> &[f64] {
        &self.norms
    }
}
