//! Inner approximations of the aggregate flexibility region: maximum-volume
//! ellipsoids under affine or quadratic second-stage policies, and a
//! maximal hyperbox baseline.

mod affine;
mod boxed;
mod quadratic;
mod serial;
pub mod volume;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::conic::{self, Affine, ConicProgram, Settings, Status, SymVar, VectorVar};
use crate::reduction::ReducedSystem;
use crate::Result;

pub use affine::solve_affine;
pub use boxed::solve_box;
pub use quadratic::{solve_quadratic, QuadraticBudget};
pub use volume::Volume;

/// Relative eigenvalue ratio below which an ellipsoid is reported as flat.
pub const FLAT_RATIO: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Affine,
    Quadratic,
    Box,
}

impl PolicyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Affine => "affine",
            PolicyKind::Quadratic => "quadratic",
            PolicyKind::Box => "box",
        }
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "affine" => Ok(PolicyKind::Affine),
            "quadratic" => Ok(PolicyKind::Quadratic),
            "box" => Ok(PolicyKind::Box),
            _ => Err(format!("unknown policy `{s}` (expected affine, quadratic or box)")),
        }
    }
}

/// `{E xi + e : |xi| <= 1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ellipsoid {
    pub shape: DMatrix<f64>,
    pub center: DVector<f64>,
    pub logdet: f64,
}

impl Ellipsoid {
    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn point(&self, xi: &DVector<f64>) -> DVector<f64> {
        &self.shape * xi + &self.center
    }

    /// Smallest over largest eigenvalue of `E`.
    pub fn eigen_ratio(&self) -> f64 {
        let eig = self.shape.clone().symmetric_eigen().eigenvalues;
        let max = eig.max();
        if max <= 0.0 {
            return 0.0;
        }
        eig.min() / max
    }

    pub fn is_flat(&self) -> bool {
        self.eigen_ratio() < FLAT_RATIO
    }

    pub fn volume(&self) -> Volume {
        volume::ellipsoid(&self.shape)
    }
}

/// Axis-aligned box `[l, u]`, parametrized as `diag(d) xi + e` with
/// `|xi|_inf <= 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperbox {
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl Hyperbox {
    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn center(&self) -> DVector<f64> {
        (&self.lower + &self.upper) * 0.5
    }

    pub fn half_widths(&self) -> DVector<f64> {
        (&self.upper - &self.lower) * 0.5
    }

    pub fn point(&self, xi: &DVector<f64>) -> DVector<f64> {
        self.half_widths().component_mul(xi) + self.center()
    }

    pub fn log_volume(&self) -> f64 {
        (&self.upper - &self.lower).iter().map(|w| w.ln()).sum()
    }

    pub fn volume(&self) -> Volume {
        volume::boxed(&self.lower, &self.upper)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    Ellipsoid(Ellipsoid),
    Hyperbox(Hyperbox),
}

impl Region {
    pub fn dim(&self) -> usize {
        match self {
            Region::Ellipsoid(e) => e.dim(),
            Region::Hyperbox(b) => b.dim(),
        }
    }

    /// Maps a point of the unit ball (Euclidean for ellipsoids, max-norm for
    /// boxes) to `p0`.
    pub fn point(&self, xi: &DVector<f64>) -> DVector<f64> {
        match self {
            Region::Ellipsoid(e) => e.point(xi),
            Region::Hyperbox(b) => b.point(xi),
        }
    }

    pub fn volume(&self) -> Volume {
        match self {
            Region::Ellipsoid(e) => e.volume(),
            Region::Hyperbox(b) => b.volume(),
        }
    }

    pub fn as_ellipsoid(&self) -> Option<&Ellipsoid> {
        match self {
            Region::Ellipsoid(e) => Some(e),
            Region::Hyperbox(_) => None,
        }
    }
}

/// `y = K xi + sum_t L_t zeta_t + gamma`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinePolicy {
    pub k: DMatrix<f64>,
    /// One `(n-1)T x N_u` block per period.
    pub l: Vec<DMatrix<f64>>,
    pub gamma: DVector<f64>,
    /// Per-row worst-case uncertainty bounds.
    pub alpha: DVector<f64>,
}

/// `y_j = eta' Q_j eta + L_j eta + c_j` with `eta = (xi, zeta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticPolicy {
    pub q: Vec<DMatrix<f64>>,
    pub l: DMatrix<f64>,
    pub c: DVector<f64>,
    /// `m x (T + 2)` S-lemma multipliers.
    pub lambda: DMatrix<f64>,
    /// Length of `eta`. Equals `T` when the uncertainty does not enter the
    /// reduced system and its coordinates were dropped.
    pub eta_dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    Affine(AffinePolicy),
    Quadratic(QuadraticPolicy),
}

impl Policy {
    pub fn y_len(&self) -> usize {
        match self {
            Policy::Affine(p) => p.gamma.len(),
            Policy::Quadratic(p) => p.c.len(),
        }
    }

    /// Second-stage response to `(xi, zeta)`.
    pub fn evaluate(&self, xi: &DVector<f64>, zeta: &DVector<f64>) -> DVector<f64> {
        match self {
            Policy::Affine(p) => {
                let mut y = &p.k * xi + &p.gamma;
                if let Some(first) = p.l.first() {
                    let groups = first.ncols();
                    for (t, lt) in p.l.iter().enumerate() {
                        y += lt * zeta.rows(t * groups, groups);
                    }
                }
                y
            }
            Policy::Quadratic(p) => {
                let mut eta = DVector::zeros(p.eta_dim);
                let nx = xi.len().min(p.eta_dim);
                eta.rows_mut(0, nx).copy_from(&xi.rows(0, nx));
                if p.eta_dim > nx {
                    eta.rows_mut(nx, p.eta_dim - nx)
                        .copy_from(&zeta.rows(0, p.eta_dim - nx));
                }
                let mut y = &p.l * &eta + &p.c;
                for (j, qj) in p.q.iter().enumerate() {
                    y[j] += eta.dot(&(qj * &eta));
                }
                y
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub iterations: u32,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub reduced_accuracy: bool,
    pub message: String,
    /// Reduced rows carrying the infeasibility certificate, heaviest first.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub conflict_rows: Vec<usize>,
}

/// Result of one flexibility solve. `region` and `policy` are present only
/// when `status` is optimal.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySolution {
    pub kind: PolicyKind,
    pub status: Status,
    pub periods: usize,
    pub groups: usize,
    pub region: Option<Region>,
    pub policy: Option<Policy>,
    pub solve_seconds: f64,
    pub diagnostics: Diagnostics,
    /// Hash of the model document the solution was computed from.
    pub model_sha256: Option<String>,
    pub delta: Option<f64>,
}

impl PolicySolution {
    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }

    /// Recorded objective: `log det E` or `sum log d` for boxes.
    pub fn logdet(&self) -> Option<f64> {
        match self.region.as_ref()? {
            Region::Ellipsoid(e) => Some(e.logdet),
            Region::Hyperbox(b) => Some(b.half_widths().iter().map(|d| d.ln()).sum()),
        }
    }

    pub fn volume(&self) -> Option<Volume> {
        self.region.as_ref().map(Region::volume)
    }

    pub fn ellipsoid(&self) -> Option<&Ellipsoid> {
        self.region.as_ref()?.as_ellipsoid()
    }

    /// Approximate S-lemma tightness factor `9.19 sqrt(ln(T + 1))`; only
    /// meaningful for quadratic solves.
    pub fn tightness_factor(&self) -> Option<f64> {
        (self.kind == PolicyKind::Quadratic).then(|| tightness_factor(self.periods))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&serial::SolutionDoc::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: serial::SolutionDoc = serde_json::from_str(text)?;
        doc.try_into()
    }
}

pub fn tightness_factor(periods: usize) -> f64 {
    9.19 * ((periods as f64) + 1.0).ln().sqrt()
}

/// Options shared by the three formulations.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SolveOptions {
    pub solver: Settings,
    pub budget: QuadraticBudget,
}

/// Declares `E`, `e`, and `t <= log det E`; returns the three handles.
pub(crate) fn ellipsoid_block(
    prog: &mut ConicProgram,
    periods: usize,
) -> Result<(SymVar, VectorVar, conic::ScalarVar)> {
    let e_mat = prog.symmetric("E", periods);
    let center = prog.vector("e", periods);
    let t = prog.scalar("logdet");
    conic::add_logdet_epigraph(prog, e_mat, t)?;
    prog.maximize(Affine::var(t.0));
    Ok((e_mat, center, t))
}

/// `coef . v` as an affine expression, skipping exact zeros.
pub(crate) fn dot_var(coef: impl IntoIterator<Item = f64>, cols: impl Fn(usize) -> usize) -> Affine {
    let mut e = Affine::zero();
    for (k, c) in coef.into_iter().enumerate() {
        if c != 0.0 {
            e.add(cols(k), c);
        }
    }
    e
}

/// Builds the recorded ellipsoid from solver output.
pub(crate) fn extract_ellipsoid(shape: DMatrix<f64>, center: DVector<f64>, objective: f64) -> Ellipsoid {
    let shape = (&shape + shape.transpose()) * 0.5;
    let logdet = match shape.clone().cholesky() {
        Some(ch) => 2.0 * ch.l().diagonal().iter().map(|v| v.ln()).sum::<f64>(),
        None => objective,
    };
    if (logdet - objective).abs() > 1e-4 * (1.0 + objective.abs()) {
        log::warn!("recorded log det {logdet} differs from solver objective {objective}");
    }
    Ellipsoid {
        shape,
        center,
        logdet,
    }
}

pub(crate) fn failed(
    kind: PolicyKind,
    red: &ReducedSystem,
    prog: &ConicProgram,
    sol: &conic::Solution,
) -> PolicySolution {
    let mut diagnostics = diagnostics(sol);
    diagnostics.conflict_rows = conflict_rows(prog, &sol.certificate);
    PolicySolution {
        kind,
        status: sol.status,
        periods: red.periods,
        groups: red.groups,
        region: None,
        policy: None,
        solve_seconds: sol.seconds,
        diagnostics,
        model_sha256: None,
        delta: None,
    }
}

/// Rows named `row[i]...` whose constraints hold at least a thousandth of
/// the largest certificate weight, at most ten.
fn conflict_rows(prog: &ConicProgram, certificate: &[f64]) -> Vec<usize> {
    let max = certificate.iter().copied().fold(0.0, f64::max);
    if !(max > 0.0) {
        return Vec::new();
    }
    let mut weight: Vec<(usize, f64)> = Vec::new();
    for (c, w) in prog.constraints().iter().zip(certificate) {
        let Some(i) = c
            .name
            .strip_prefix("row[")
            .and_then(|r| r.split(']').next())
            .and_then(|r| r.parse::<usize>().ok())
        else {
            continue;
        };
        match weight.iter_mut().find(|(r, _)| *r == i) {
            Some(e) => e.1 = e.1.max(*w),
            None => weight.push((i, *w)),
        }
    }
    weight.retain(|(_, w)| *w >= 1e-3 * max);
    weight.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    weight.into_iter().take(10).map(|(i, _)| i).collect()
}

pub(crate) fn diagnostics(sol: &conic::Solution) -> Diagnostics {
    Diagnostics {
        iterations: sol.iterations,
        primal_residual: sol.primal_residual,
        dual_residual: sol.dual_residual,
        reduced_accuracy: sol.reduced_accuracy,
        message: sol.message.clone(),
        conflict_rows: Vec::new(),
    }
}

/// Row-equilibrated copy of a reduced system in rescaled power units.
///
/// Row `i` is divided by `|[a_i, w2_i]|` and every power quantity by
/// `sigma`, the median magnitude of the resulting right-hand sides. Both
/// maps leave the feasible set unchanged up to the scale of `p0`.
pub(crate) struct Normalized {
    pub red: ReducedSystem,
    pub sigma: f64,
    pub row_scale: DVector<f64>,
}

impl Normalized {
    pub fn new(red: &ReducedSystem) -> Self {
        let m = red.row_count();
        let row_scale = DVector::from_fn(m, |i, _| {
            let n = (red.a.row(i).norm_squared() + red.w2.row(i).norm_squared()).sqrt();
            if n > 0.0 {
                n
            } else {
                1.0
            }
        });
        let mut mags: Vec<f64> = (0..m)
            .map(|i| (red.nu[i] / row_scale[i]).abs())
            .filter(|v| *v > 0.0)
            .collect();
        mags.sort_by(f64::total_cmp);
        let sigma = mags.get(mags.len() / 2).copied().unwrap_or(1.0);
        let mut out = red.clone();
        for i in 0..m {
            let r = row_scale[i];
            out.w1.row_mut(i).scale_mut(1.0 / r);
            out.w2.row_mut(i).scale_mut(1.0 / r);
            out.a.row_mut(i).scale_mut(1.0 / r);
            out.theta.row_mut(i).scale_mut(1.0 / (r * sigma));
            out.nu[i] /= r * sigma;
        }
        Normalized {
            red: out,
            sigma,
            row_scale,
        }
    }

    /// Maps a solution of the normalized system back to original units.
    pub fn restore(&self, sol: &mut PolicySolution) {
        let s = self.sigma;
        match &mut sol.region {
            Some(Region::Ellipsoid(e)) => {
                e.shape *= s;
                e.center *= s;
                e.logdet += e.center.len() as f64 * s.ln();
            }
            Some(Region::Hyperbox(b)) => {
                b.lower *= s;
                b.upper *= s;
            }
            None => {}
        }
        match &mut sol.policy {
            Some(Policy::Affine(p)) => {
                p.k *= s;
                p.l.iter_mut().for_each(|b| *b *= s);
                p.gamma *= s;
                p.alpha.component_mul_assign(&(&self.row_scale * s));
            }
            Some(Policy::Quadratic(p)) => {
                p.q.iter_mut().for_each(|b| *b *= s);
                p.l *= s;
                p.c *= s;
                for (i, mut row) in p.lambda.row_iter_mut().enumerate() {
                    row *= s * self.row_scale[i];
                }
            }
            None => {}
        }
    }
}

/// Solves the formulation selected by `kind`.
pub fn solve(kind: PolicyKind, red: &ReducedSystem, opts: &SolveOptions) -> Result<PolicySolution> {
    match kind {
        PolicyKind::Affine => solve_affine(red, &opts.solver),
        PolicyKind::Quadratic => solve_quadratic(red, &opts.solver, &opts.budget),
        PolicyKind::Box => solve_box(red, &opts.solver),
    }
}
