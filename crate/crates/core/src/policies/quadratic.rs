use nalgebra::{DMatrix, DVector};

use super::{
    dot_var, ellipsoid_block, Normalized, extract_ellipsoid, failed, Policy, PolicyKind, PolicySolution,
    QuadraticPolicy, Region,
};
use crate::conic::{self, Affine, ConicProgram, Settings, SymAffine};
use crate::reduction::ReducedSystem;
use crate::{Error, Result};

/// Size limits for the quadratic-policy program.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticBudget {
    /// Largest admissible LMI dimension `1 + dim(eta)`.
    pub max_lmi_dim: usize,
    /// Largest admissible `m * (n-1)T`, the number of `Q_j` weights summed
    /// across all row LMIs.
    pub max_weight_entries: usize,
}

impl Default for QuadraticBudget {
    fn default() -> Self {
        QuadraticBudget {
            max_lmi_dim: 64,
            max_weight_entries: 20_000,
        }
    }
}

impl QuadraticBudget {
    pub fn check(&self, red: &ReducedSystem) -> Result<()> {
        let dim = 1 + eta_dim(red);
        let weights = red.row_count() * red.y_len();
        if dim > self.max_lmi_dim || weights > self.max_weight_entries {
            return Err(Error::SizeBudget(format!(
                "quadratic policy needs LMIs of dimension {dim} (limit {}) and {} x {} = {weights} \
                 weight entries (limit {})",
                self.max_lmi_dim,
                red.row_count(),
                red.y_len(),
                self.max_weight_entries
            )));
        }
        Ok(())
    }
}

fn eta_dim(red: &ReducedSystem) -> usize {
    if red.is_deterministic() {
        red.periods
    } else {
        red.periods + red.zeta_len()
    }
}

/// Maximum-volume ellipsoid with a quadratic second-stage policy, through
/// the approximate S-lemma. One LMI of dimension `1 + dim(eta)` per row.
///
/// When the uncertainty does not enter the reduced system the `zeta`
/// coordinates of `eta` are dropped; the remaining program is the same one
/// with those blocks fixed at zero.
pub fn solve_quadratic(
    red: &ReducedSystem,
    settings: &Settings,
    budget: &QuadraticBudget,
) -> Result<PolicySolution> {
    budget.check(red)?;
    let scaled = Normalized::new(red);
    let mut sol = solve_scaled(&scaled.red, settings)?;
    scaled.restore(&mut sol);
    Ok(sol)
}

fn solve_scaled(red: &ReducedSystem, settings: &Settings) -> Result<PolicySolution> {
    let periods = red.periods;
    let groups = red.groups;
    let m = red.row_count();
    let ny = red.y_len();
    let k = eta_dim(red);
    let zeta_blocks = if k > periods { periods } else { 0 };

    let mut prog = ConicProgram::new();
    let (e_mat, center, _) = ellipsoid_block(&mut prog, periods)?;
    let q: Vec<_> = (0..ny)
        .map(|j| prog.symmetric(&format!("Q[{j}]"), k))
        .collect();
    let l = prog.matrix("L", ny, k);
    let c = prog.vector("c", ny);
    let lambda = prog.matrix("lambda", m, 2 + zeta_blocks);

    for i in 0..m {
        let a = red.a.row(i);
        let w2 = red.w2.row(i);
        let lam = |kk: usize| lambda.at(i, kk);

        let mut lmi = SymAffine::zeros(1 + k);
        *lmi.entry_mut(0, 0) = Affine::var(lam(0));
        for r in 0..k {
            // rho_r = ([a_i E, -theta_i] + w2_i L)_r / 2
            let mut rho = dot_var(w2.iter().copied(), |j| l.at(j, r));
            if r < periods {
                rho.add_expr(&dot_var(a.iter().copied(), |t| e_mat.at(t, r)), 1.0);
            } else {
                rho.add_const(-red.theta[(i, r - periods)]);
            }
            *lmi.entry_mut(r + 1, 0) = rho.scaled(-0.5);

            for cc in 0..=r {
                let mut entry = Affine::zero();
                for (j, &w) in w2.iter().enumerate() {
                    if w != 0.0 {
                        entry.add(q[j].at(r, cc), -w);
                    }
                }
                if r == cc {
                    let block = if r < periods { 1 } else { 2 + (r - periods) / groups };
                    entry.add(lam(block), 1.0);
                }
                *lmi.entry_mut(r + 1, cc + 1) = entry;
            }
        }
        prog.add_psd(&format!("row[{i}].lmi"), lmi);

        let mut lin = dot_var(a.iter().copied(), |t| center.at(t)).scaled(-1.0);
        lin.add_expr(&dot_var(w2.iter().copied(), |j| c.at(j)), -1.0);
        for kk in 0..2 + zeta_blocks {
            lin.add(lam(kk), -1.0);
            prog.add_nonneg(&format!("row[{i}].lambda[{kk}]"), Affine::var(lam(kk)));
        }
        lin.add_const(red.nu[i]);
        prog.add_nonneg(&format!("row[{i}].nominal"), lin);
    }

    let sol = conic::solve(&prog, settings)?;
    if sol.status != conic::Status::Optimal {
        return Ok(failed(PolicyKind::Quadratic, red, &prog, &sol));
    }
    let ellipsoid = extract_ellipsoid(sol.symmetric(e_mat), sol.vector(center), sol.objective);
    let raw = sol.matrix(lambda);
    let mut lam = DMatrix::zeros(m, periods + 2);
    lam.columns_mut(0, raw.ncols()).copy_from(&raw);
    let policy = QuadraticPolicy {
        q: q.iter().map(|qj| sol.symmetric(*qj)).collect(),
        l: sol.matrix(l),
        c: DVector::from_fn(ny, |j, _| sol.x[c.at(j)]),
        lambda: lam,
        eta_dim: k,
    };
    Ok(PolicySolution {
        kind: PolicyKind::Quadratic,
        status: sol.status,
        periods,
        groups,
        region: Some(Region::Ellipsoid(ellipsoid)),
        policy: Some(Policy::Quadratic(policy)),
        solve_seconds: sol.seconds,
        diagnostics: super::diagnostics(&sol),
        model_sha256: None,
        delta: None,
    })
}
