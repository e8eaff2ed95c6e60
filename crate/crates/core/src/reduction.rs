//! Elimination of the aggregation equality through an orthonormal
//! change of coordinates `p = B1 x + B2 y` with `B2` spanning `null(D)`.

use nalgebra::{DMatrix, DVector};

use crate::model::ConstraintSystem;
use crate::{Error, Result};

/// Relative rank tolerance on the rows of `D`.
pub const RANK_TOL: f64 = 1e-8;
/// Condition number of `D B1` above which a warning is logged.
pub const COND_WARN: f64 = 1e8;

#[derive(Debug, Clone)]
pub struct NullspaceBasis {
    /// `nT x T`, orthonormal complement of the null space.
    pub b1: DMatrix<f64>,
    /// `nT x (n-1)T`, orthonormal basis of `null(D)`.
    pub b2: DMatrix<f64>,
    /// `D B1`, square and invertible.
    pub d_tilde: DMatrix<f64>,
    pub d_tilde_inv: DMatrix<f64>,
    pub condition: f64,
}

/// Uncertain reduced system `W1 D~^-1 p0 + W2 y <= Theta zeta + nu`.
#[derive(Debug, Clone)]
pub struct ReducedSystem {
    pub periods: usize,
    pub groups: usize,
    pub w1: DMatrix<f64>,
    pub w2: DMatrix<f64>,
    /// `W1 D~^-1`, the coefficient of `p0`.
    pub a: DMatrix<f64>,
    pub theta: DMatrix<f64>,
    pub nu: DVector<f64>,
}

impl ReducedSystem {
    pub fn row_count(&self) -> usize {
        self.w1.nrows()
    }

    /// Dimension of the second-stage variable `y`.
    pub fn y_len(&self) -> usize {
        self.w2.ncols()
    }

    pub fn zeta_len(&self) -> usize {
        self.theta.ncols()
    }

    /// Block `Theta_t` of columns acting on period `t` uncertainty.
    pub fn theta_block(&self, t: usize) -> nalgebra::DMatrixView<'_, f64> {
        self.theta
            .view((0, t * self.groups), (self.theta.nrows(), self.groups))
    }

    pub fn is_deterministic(&self) -> bool {
        self.theta.iter().all(|v| *v == 0.0)
    }

    pub fn u(&self, zeta: &DVector<f64>) -> DVector<f64> {
        &self.theta * zeta + &self.nu
    }

    /// Row residuals `W1 D~^-1 p0 + W2 y - u(zeta)`; feasible iff all are <= 0.
    pub fn residuals(&self, p0: &DVector<f64>, y: &DVector<f64>, zeta: &DVector<f64>) -> DVector<f64> {
        let mut r = &self.a * p0 - self.u(zeta);
        if self.y_len() > 0 {
            r += &self.w2 * y;
        }
        r
    }
}

fn fix_column_signs(m: &mut DMatrix<f64>) {
    for mut col in m.column_iter_mut() {
        let scale = col.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if let Some(first) = col.iter().copied().find(|v| v.abs() > 1e-12 * scale.max(1.0)) {
            if first < 0.0 {
                col.neg_mut();
            }
        }
    }
}

/// Finds rows of `D` that are linearly dependent on earlier rows.
fn dependent_rows(d: &DMatrix<f64>, tol: f64) -> Vec<usize> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut dependent = Vec::new();
    for i in 0..d.nrows() {
        let mut v: DVector<f64> = d.row(i).transpose();
        for _ in 0..2 {
            for q in &basis {
                let c = q.dot(&v);
                v.axpy(-c, q, 1.0);
            }
        }
        let norm = v.norm();
        if norm <= tol {
            dependent.push(i);
        } else {
            basis.push(v / norm);
        }
    }
    dependent
}

/// Orthonormal split of `R^{nT}` into `range(D^T)` and `null(D)`.
///
/// Uses a Householder QR of `D^T` padded with zero columns to a square
/// matrix, which yields the full orthogonal factor. Columns are signed so
/// that their first nonzero entry is positive.
pub fn decompose(sys: &ConstraintSystem) -> Result<NullspaceBasis> {
    let d = &sys.d;
    let (t_len, cols) = d.shape();
    if t_len > cols {
        return Err(Error::RankDeficient {
            rows: (cols..t_len).collect(),
        });
    }
    let spectral = d.clone().svd(false, false).singular_values.max();
    let tol = RANK_TOL * spectral.max(f64::MIN_POSITIVE);
    let dependent = dependent_rows(d, tol);
    if !dependent.is_empty() || spectral == 0.0 {
        return Err(Error::RankDeficient {
            rows: if dependent.is_empty() {
                (0..t_len).collect()
            } else {
                dependent
            },
        });
    }

    let mut padded = DMatrix::zeros(cols, cols);
    padded.view_mut((0, 0), (cols, t_len)).copy_from(&d.transpose());
    let q = padded.qr().q();
    let mut b1 = q.columns(0, t_len).into_owned();
    let mut b2 = q.columns(t_len, cols - t_len).into_owned();
    fix_column_signs(&mut b1);
    fix_column_signs(&mut b2);

    let d_tilde = d * &b1;
    let sv = d_tilde.clone().svd(false, false).singular_values;
    let condition = sv.max() / sv.min();
    if condition > COND_WARN {
        log::warn!("aggregation map is ill conditioned (cond = {condition:.3e})");
    }
    let d_tilde_inv = d_tilde
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::RankDeficient {
            rows: (0..t_len).collect(),
        })?;
    Ok(NullspaceBasis {
        b1,
        b2,
        d_tilde,
        d_tilde_inv,
        condition,
    })
}

/// Builds `W1 = W B1`, `W2 = W B2` and `u(zeta) = z(zeta) + W1 D~^-1 b(zeta)`.
pub fn reduce(sys: &ConstraintSystem, basis: &NullspaceBasis) -> Result<ReducedSystem> {
    if basis.b1.nrows() != sys.column_count() || basis.d_tilde.nrows() != sys.periods {
        return Err(Error::Dimension {
            path: "basis".into(),
            expected: sys.column_count(),
            found: basis.b1.nrows(),
        });
    }
    let w1 = &sys.w * &basis.b1;
    let w2 = &sys.w * &basis.b2;
    let a = &w1 * &basis.d_tilde_inv;
    let theta = &sys.z_theta + &a * &sys.b_theta;
    let nu = &sys.z_nu + &a * &sys.b_nu;
    Ok(ReducedSystem {
        periods: sys.periods,
        groups: sys.groups,
        w1,
        w2,
        a,
        theta,
        nu,
    })
}

/// Recovers device dispatch `p = B1 D~^-1 (p0 - b(zeta)) + B2 y`.
pub fn disaggregate(
    basis: &NullspaceBasis,
    sys: &ConstraintSystem,
    p0: &DVector<f64>,
    y: &DVector<f64>,
    zeta: &DVector<f64>,
) -> Result<DVector<f64>> {
    if p0.len() != sys.periods {
        return Err(Error::Dimension {
            path: "p0".into(),
            expected: sys.periods,
            found: p0.len(),
        });
    }
    if y.len() != basis.b2.ncols() {
        return Err(Error::Dimension {
            path: "y".into(),
            expected: basis.b2.ncols(),
            found: y.len(),
        });
    }
    if zeta.len() != sys.zeta_len() {
        return Err(Error::Dimension {
            path: "zeta".into(),
            expected: sys.zeta_len(),
            found: zeta.len(),
        });
    }
    let (_, b) = sys.evaluate_rhs_unchecked(zeta);
    let x = &basis.d_tilde_inv * (p0 - b);
    let mut p = &basis.b1 * x;
    if !y.is_empty() {
        p += &basis.b2 * y;
    }
    Ok(p)
}
