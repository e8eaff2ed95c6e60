//! JSON layout of a [`PolicySolution`]. Matrices are written as arrays of
//! rows.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{
    AffinePolicy, Diagnostics, Ellipsoid, Hyperbox, Policy, PolicyKind, PolicySolution,
    QuadraticPolicy, Region, Volume,
};
use crate::conic::Status;
use crate::{Error, Result};

type Rows = Vec<Vec<f64>>;

fn rows(m: &DMatrix<f64>) -> Rows {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix(rows: &Rows, ncols: usize, path: &str) -> Result<DMatrix<f64>> {
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != ncols) {
        return Err(Error::Dimension {
            path: format!("{path}[{i}]"),
            expected: ncols,
            found: r.len(),
        });
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn width(rows: &Rows) -> usize {
    rows.first().map_or(0, Vec::len)
}

fn vector(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(super) struct SolutionDoc {
    kind: PolicyKind,
    status: Status,
    #[serde(rename = "T")]
    periods: usize,
    groups: usize,
    #[serde(rename = "E", default, skip_serializing_if = "Option::is_none")]
    shape: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    e: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    logdet: Option<f64>,
    #[serde(rename = "box", default, skip_serializing_if = "Option::is_none")]
    hyperbox: Option<BoxDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    volume: Option<Volume>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    flat: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    policy: Option<PolicyDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tightness_factor: Option<f64>,
    solve_seconds: f64,
    diagnostics: Diagnostics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    model_sha256: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    delta: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoxDoc {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
enum PolicyDoc {
    Affine {
        #[serde(rename = "K")]
        k: Rows,
        #[serde(rename = "L")]
        l: Vec<Rows>,
        gamma: Vec<f64>,
        alpha: Vec<f64>,
    },
    Quadratic {
        #[serde(rename = "Q")]
        q: Vec<Rows>,
        #[serde(rename = "L")]
        l: Rows,
        c: Vec<f64>,
        lambda: Rows,
        eta_dim: usize,
    },
}

impl From<&PolicySolution> for SolutionDoc {
    fn from(s: &PolicySolution) -> Self {
        let (mut shape, mut e, mut flat, mut hyperbox) = (None, None, None, None);
        match &s.region {
            Some(Region::Ellipsoid(ell)) => {
                shape = Some(rows(&ell.shape));
                e = Some(ell.center.iter().copied().collect());
                flat = Some(ell.is_flat());
            }
            Some(Region::Hyperbox(b)) => {
                // the box is also stored as diag(d) xi + e
                shape = Some(rows(&DMatrix::from_diagonal(&b.half_widths())));
                e = Some(b.center().iter().copied().collect());
                hyperbox = Some(BoxDoc {
                    lower: b.lower.iter().copied().collect(),
                    upper: b.upper.iter().copied().collect(),
                });
            }
            None => {}
        }
        let policy = s.policy.as_ref().map(|p| match p {
            Policy::Affine(a) => PolicyDoc::Affine {
                k: rows(&a.k),
                l: a.l.iter().map(rows).collect(),
                gamma: a.gamma.iter().copied().collect(),
                alpha: a.alpha.iter().copied().collect(),
            },
            Policy::Quadratic(q) => PolicyDoc::Quadratic {
                q: q.q.iter().map(rows).collect(),
                l: rows(&q.l),
                c: q.c.iter().copied().collect(),
                lambda: rows(&q.lambda),
                eta_dim: q.eta_dim,
            },
        });
        SolutionDoc {
            kind: s.kind,
            status: s.status,
            periods: s.periods,
            groups: s.groups,
            shape,
            e,
            logdet: s.logdet(),
            hyperbox,
            volume: s.volume(),
            flat,
            policy,
            tightness_factor: s.tightness_factor(),
            solve_seconds: s.solve_seconds,
            diagnostics: s.diagnostics.clone(),
            model_sha256: s.model_sha256.clone(),
            delta: s.delta,
        }
    }
}

impl TryFrom<SolutionDoc> for PolicySolution {
    type Error = Error;

    fn try_from(doc: SolutionDoc) -> Result<Self> {
        let t = doc.periods;
        let region = match (doc.kind, doc.shape, doc.e, doc.hyperbox) {
            (PolicyKind::Box, _, _, Some(b)) => {
                if b.lower.len() != t || b.upper.len() != t {
                    return Err(Error::Dimension {
                        path: "box".into(),
                        expected: t,
                        found: b.lower.len().max(b.upper.len()),
                    });
                }
                if b.lower.iter().zip(&b.upper).any(|(l, u)| l > u) {
                    return Err(Error::Invariant {
                        path: "box".into(),
                        reason: "lower bound exceeds upper bound".into(),
                    });
                }
                Some(Region::Hyperbox(Hyperbox {
                    lower: vector(&b.lower),
                    upper: vector(&b.upper),
                }))
            }
            (PolicyKind::Box, ..) => None,
            (_, Some(shape), Some(e), _) => {
                if e.len() != t {
                    return Err(Error::Dimension {
                        path: "e".into(),
                        expected: t,
                        found: e.len(),
                    });
                }
                if shape.len() != t {
                    return Err(Error::Dimension {
                        path: "E".into(),
                        expected: t,
                        found: shape.len(),
                    });
                }
                let shape = matrix(&shape, t, "E")?;
                let logdet = doc
                    .logdet
                    .unwrap_or_else(|| super::volume::ellipsoid(&shape).log_det);
                Some(Region::Ellipsoid(Ellipsoid {
                    shape,
                    center: vector(&e),
                    logdet,
                }))
            }
            _ => None,
        };
        let policy = match doc.policy {
            None => None,
            Some(PolicyDoc::Affine { k, l, gamma, alpha }) => Some(Policy::Affine(AffinePolicy {
                k: matrix(&k, t, "policy.K")?,
                l: l.iter()
                    .enumerate()
                    .map(|(i, b)| matrix(b, doc.groups, &format!("policy.L[{i}]")))
                    .collect::<Result<_>>()?,
                gamma: vector(&gamma),
                alpha: vector(&alpha),
            })),
            Some(PolicyDoc::Quadratic {
                q,
                l,
                c,
                lambda,
                eta_dim,
            }) => Some(Policy::Quadratic(QuadraticPolicy {
                q: q.iter()
                    .enumerate()
                    .map(|(j, b)| matrix(b, eta_dim, &format!("policy.Q[{j}]")))
                    .collect::<Result<_>>()?,
                l: matrix(&l, eta_dim, "policy.L")?,
                c: vector(&c),
                lambda: matrix(&lambda, width(&lambda), "policy.lambda")?,
                eta_dim,
            })),
        };
        if let Some(p) = &policy {
            let ny = p.y_len();
            let bad = match p {
                Policy::Affine(a) => a.k.nrows() != ny || a.l.iter().any(|b| b.nrows() != ny),
                Policy::Quadratic(q) => q.q.len() != ny || q.l.nrows() != ny,
            };
            if bad {
                return Err(Error::Invariant {
                    path: "policy".into(),
                    reason: "coefficient blocks disagree on the second-stage dimension".into(),
                });
            }
        }
        Ok(PolicySolution {
            kind: doc.kind,
            status: doc.status,
            periods: t,
            groups: doc.groups,
            region,
            policy,
            solve_seconds: doc.solve_seconds,
            diagnostics: doc.diagnostics,
            model_sha256: doc.model_sha256,
            delta: doc.delta,
        })
    }
}
