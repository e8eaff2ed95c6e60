use nalgebra::{DMatrix, DVector};

use super::{dot_var, Normalized, ellipsoid_block, extract_ellipsoid, failed, AffinePolicy, Policy, PolicyKind, PolicySolution, Region};
use crate::conic::{self, Affine, ConicProgram, Settings};
use crate::reduction::ReducedSystem;
use crate::Result;

/// Maximum-volume ellipsoid with an affine second-stage policy.
///
/// Each row of the reduced system must hold for the worst `(xi, zeta)`,
/// which by Cauchy-Schwarz is a sum of norms bounded by `alpha_i`. Every
/// norm gets its own epigraph variable. The `L_t` blocks are omitted when
/// the uncertainty does not enter the system, since zero is optimal then.
pub fn solve_affine(red: &ReducedSystem, settings: &Settings) -> Result<PolicySolution> {
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
    let uncertain = !red.is_deterministic();

    let mut prog = ConicProgram::new();
    let (e_mat, center, _) = ellipsoid_block(&mut prog, periods)?;
    let k = prog.matrix("K", ny, periods);
    let gamma = prog.vector("gamma", ny);
    let l: Vec<_> = if uncertain {
        (0..periods)
            .map(|t| prog.matrix(&format!("L[{t}]"), ny, groups))
            .collect()
    } else {
        Vec::new()
    };
    let alpha = prog.vector("alpha", m);

    for i in 0..m {
        let a = red.a.row(i);
        let w2 = red.w2.row(i);

        // |a_i E + w2_i K| <= r0
        let r0 = prog.scalar(&format!("r[{i},0]"));
        let mut rest = Vec::with_capacity(periods);
        for col in 0..periods {
            let mut e = dot_var(a.iter().copied(), |t| e_mat.at(t, col));
            e.add_expr(&dot_var(w2.iter().copied(), |j| k.at(j, col)), 1.0);
            rest.push(e);
        }
        prog.add_soc(&format!("row[{i}].shape"), Affine::var(r0.0), rest);
        let mut sum = Affine::var(alpha.at(i));
        sum.add(r0.0, -1.0);

        // |w2_i L_t - theta_{t,i}| <= r_t
        for (t, lt) in l.iter().enumerate() {
            let rt = prog.scalar(&format!("r[{i},{}]", t + 1));
            let theta = red.theta_block(t);
            let rest = (0..groups)
                .map(|g| {
                    let mut e = dot_var(w2.iter().copied(), |j| lt.at(j, g));
                    e.add_const(-theta[(i, g)]);
                    e
                })
                .collect();
            prog.add_soc(&format!("row[{i}].uncertainty[{t}]"), Affine::var(rt.0), rest);
            sum.add(rt.0, -1.0);
        }
        prog.add_nonneg(&format!("row[{i}].alpha"), sum);

        // alpha_i + a_i e + w2_i gamma <= nu_i
        let mut lin = dot_var(a.iter().copied(), |t| center.at(t)).scaled(-1.0);
        lin.add_expr(&dot_var(w2.iter().copied(), |j| gamma.at(j)), -1.0);
        lin.add(alpha.at(i), -1.0);
        lin.add_const(red.nu[i]);
        prog.add_nonneg(&format!("row[{i}].nominal"), lin);
    }

    let sol = conic::solve(&prog, settings)?;
    if sol.status != conic::Status::Optimal {
        return Ok(failed(PolicyKind::Affine, red, &prog, &sol));
    }
    let ellipsoid = extract_ellipsoid(sol.symmetric(e_mat), sol.vector(center), sol.objective);
    let l_blocks = if uncertain {
        l.iter().map(|lt| sol.matrix(*lt)).collect()
    } else {
        vec![DMatrix::zeros(ny, groups); periods]
    };
    let policy = AffinePolicy {
        k: sol.matrix(k),
        l: l_blocks,
        gamma: sol.vector(gamma),
        alpha: DVector::from_fn(m, |i, _| sol.x[alpha.at(i)]),
    };
    Ok(PolicySolution {
        kind: PolicyKind::Affine,
        status: sol.status,
        periods,
        groups,
        region: Some(Region::Ellipsoid(ellipsoid)),
        policy: Some(Policy::Affine(policy)),
        solve_seconds: sol.seconds,
        diagnostics: super::diagnostics(&sol),
        model_sha256: None,
        delta: None,
    })
}
