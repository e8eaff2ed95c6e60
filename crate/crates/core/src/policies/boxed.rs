use nalgebra::{DMatrix, DVector};

use super::{dot_var, Normalized, failed, AffinePolicy, Hyperbox, Policy, PolicyKind, PolicySolution, Region};
use crate::conic::{self, Affine, ConicProgram, Settings};
use crate::reduction::ReducedSystem;
use crate::Result;

/// Maximal hyperbox `p0 = diag(d) xi + e`, `|xi|_inf <= 1`, with the same
/// affine second stage as the ellipsoidal formulation.
///
/// The worst case over the box is an l1 norm, written with one bound
/// variable per entry. The objective `sum log d_t` uses one exponential
/// cone per period.
pub fn solve_box(red: &ReducedSystem, settings: &Settings) -> Result<PolicySolution> {
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
    let d = prog.vector("d", periods);
    let center = prog.vector("e", periods);
    let s = prog.vector("log_d", periods);
    let mut objective = Affine::zero();
    for t in 0..periods {
        prog.add_exp(
            &format!("log_d[{t}]"),
            Affine::var(s.at(t)),
            Affine::constant(1.0),
            Affine::var(d.at(t)),
        );
        objective.add(s.at(t), 1.0);
    }
    prog.maximize(objective);

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
        let mut sum = Affine::var(alpha.at(i));

        // |a_it d_t + w2_i K_t| <= v_t
        let v = prog.vector(&format!("v[{i}]"), periods);
        for col in 0..periods {
            let mut e = dot_var(w2.iter().copied(), |j| k.at(j, col));
            if a[col] != 0.0 {
                e.add(d.at(col), a[col]);
            }
            let mut upper = Affine::var(v.at(col));
            upper.add_expr(&e, -1.0);
            let mut lower = Affine::var(v.at(col));
            lower.add_expr(&e, 1.0);
            prog.add_nonneg(&format!("row[{i}].abs[{col}]+"), upper);
            prog.add_nonneg(&format!("row[{i}].abs[{col}]-"), lower);
            sum.add(v.at(col), -1.0);
        }

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

        let mut lin = dot_var(a.iter().copied(), |t| center.at(t)).scaled(-1.0);
        lin.add_expr(&dot_var(w2.iter().copied(), |j| gamma.at(j)), -1.0);
        lin.add(alpha.at(i), -1.0);
        lin.add_const(red.nu[i]);
        prog.add_nonneg(&format!("row[{i}].nominal"), lin);
    }

    let sol = conic::solve(&prog, settings)?;
    if sol.status != conic::Status::Optimal {
        return Ok(failed(PolicyKind::Box, red, &prog, &sol));
    }
    let half = sol.vector(d).map(|v| v.max(0.0));
    let mid = sol.vector(center);
    let hyperbox = Hyperbox {
        lower: &mid - &half,
        upper: &mid + &half,
    };
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
        kind: PolicyKind::Box,
        status: sol.status,
        periods,
        groups,
        region: Some(Region::Hyperbox(hyperbox)),
        policy: Some(Policy::Affine(policy)),
        solve_seconds: sol.seconds,
        diagnostics: super::diagnostics(&sol),
        model_sha256: None,
        delta: None,
    })
}
