use std::time::Instant;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use serde::{Deserialize, Serialize};

use super::{Cone, ConicProgram};
use crate::Result;

/// Environment variable enabling backend iteration logs.
pub const SOLVER_LOG_ENV: &str = "FLEXHULL_SOLVER_LOG";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub feas_tol: f64,
    pub gap_tol: f64,
    /// Seconds.
    pub time_limit: f64,
    pub max_iter: u32,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            feas_tol: 1e-8,
            gap_tol: 1e-8,
            time_limit: 300.0,
            max_iter: 400,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
    TimeLimit,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Optimal => "optimal",
            Status::Infeasible => "infeasible",
            Status::Unbounded => "unbounded",
            Status::NumericalFailure => "numerical_failure",
            Status::TimeLimit => "time_limit",
        }
    }
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub status: Status,
    /// Column values; empty unless `status` is optimal.
    pub x: Vec<f64>,
    /// Objective of the maximization.
    pub objective: f64,
    pub iterations: u32,
    pub seconds: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// Backend reached only its reduced-accuracy tolerances.
    pub reduced_accuracy: bool,
    pub message: String,
    /// Weight of each constraint in the infeasibility certificate, in
    /// declaration order; empty unless `status` is infeasible.
    pub certificate: Vec<f64>,
}

fn lower(prog: &ConicProgram) -> (CscMatrix<f64>, Vec<f64>, Vec<f64>, Vec<SupportedConeT<f64>>) {
    let n = prog.column_count();
    let mut rows = Vec::new();
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    let mut b = Vec::new();
    let mut cones = Vec::new();
    let mut r = 0usize;
    let mut emit = |expr: &super::Affine, scale: f64, r: usize, b: &mut Vec<f64>| {
        // s = b - A x  with  s = expr
        for &(c, v) in &expr.compact().terms {
            rows.push(r);
            cols.push(c);
            vals.push(-v * scale);
        }
        b.push(expr.constant * scale);
    };
    for c in prog.constraints() {
        match c.cone {
            Cone::Zero | Cone::Nonnegative | Cone::SecondOrder | Cone::Exponential => {
                for e in &c.rows {
                    emit(e, 1.0, r, &mut b);
                    r += 1;
                }
            }
            Cone::PsdTriangle(dim) => {
                for i in 0..dim {
                    for j in 0..=i {
                        let scale = if i == j { 1.0 } else { std::f64::consts::SQRT_2 };
                        emit(&c.rows[super::tri_index(i, j)], scale, r, &mut b);
                        r += 1;
                    }
                }
            }
        }
        let k = c.rows.len();
        let cone = match c.cone {
            Cone::Zero => SupportedConeT::ZeroConeT(k),
            Cone::Nonnegative => SupportedConeT::NonnegativeConeT(k),
            Cone::SecondOrder => SupportedConeT::SecondOrderConeT(k),
            Cone::Exponential => SupportedConeT::ExponentialConeT(),
            Cone::PsdTriangle(dim) => SupportedConeT::PSDTriangleConeT(dim),
        };
        // merge runs of linear cones to keep the cone list short
        match (cones.last_mut(), &cone) {
            (Some(SupportedConeT::NonnegativeConeT(m)), SupportedConeT::NonnegativeConeT(k)) => {
                *m += k
            }
            (Some(SupportedConeT::ZeroConeT(m)), SupportedConeT::ZeroConeT(k)) => *m += k,
            _ => cones.push(cone),
        }
    }
    let a = CscMatrix::new_from_triplets(r, n, rows, cols, vals);
    let q: Vec<f64> = {
        let mut q = vec![0.0; n];
        for &(c, v) in &prog.objective().terms {
            q[c] -= v;
        }
        q
    };
    (a, b, q, cones)
}

/// Solves `prog` with the Clarabel interior-point backend.
pub fn solve(prog: &ConicProgram, settings: &Settings) -> Result<Solution> {
    prog.validate()?;
    let n = prog.column_count();
    let (a, b, q, cones) = lower(prog);
    let p = CscMatrix::zeros((n, n));
    let verbose = std::env::var(SOLVER_LOG_ENV).is_ok_and(|v| !v.is_empty() && v != "0");
    let start = Instant::now();
    let mut attempt = 0;
    loop {
        let sol = run(&p, &q, &a, &b, &cones, settings, verbose, attempt, start)?;
        attempt += 1;
        if sol.status != Status::NumericalFailure || attempt == RETRIES {
            return Ok(finish(prog, sol, start, attempt));
        }
        log::info!("conic backend stalled ({}); retrying with fallback settings", sol.message);
    }
}

/// Number of backend configurations tried before reporting a numerical
/// failure. Later attempts disable equilibration and take shorter steps.
const RETRIES: usize = 3;

#[allow(clippy::too_many_arguments)]
fn run(
    p: &CscMatrix<f64>,
    q: &[f64],
    a: &CscMatrix<f64>,
    b: &[f64],
    cones: &[SupportedConeT<f64>],
    settings: &Settings,
    verbose: bool,
    attempt: usize,
    start: Instant,
) -> Result<Solution> {
    let remaining = (settings.time_limit - start.elapsed().as_secs_f64()).max(1.0);
    let mut builder = DefaultSettingsBuilder::default();
    builder
        .verbose(verbose)
        .tol_feas(settings.feas_tol)
        .tol_gap_abs(settings.gap_tol)
        .tol_gap_rel(settings.gap_tol)
        .time_limit(remaining)
        .max_iter(settings.max_iter);
    match attempt {
        0 => {}
        1 => {
            builder.equilibrate_enable(false);
        }
        _ => {
            builder.max_step_fraction(0.9).static_regularization_constant(1e-7);
        }
    }
    let backend_settings = builder
        .build()
        .map_err(|e| crate::Error::Program(format!("backend settings: {e}")))?;
    let mut solver = match DefaultSolver::new(p, q, a, b, cones, backend_settings) {
        Ok(s) => s,
        Err(e) => {
            return Ok(Solution {
                status: Status::NumericalFailure,
                x: vec![],
                objective: f64::NAN,
                iterations: 0,
                seconds: 0.0,
                primal_residual: f64::NAN,
                dual_residual: f64::NAN,
                reduced_accuracy: false,
                message: format!("backend setup failed: {e}"),
                certificate: vec![],
            })
        }
    };
    solver.solve();
    let sol = &solver.solution;
    let (status, reduced) = match sol.status {
        SolverStatus::Solved => (Status::Optimal, false),
        SolverStatus::AlmostSolved => (Status::Optimal, true),
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
            (Status::Infeasible, false)
        }
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
            (Status::Unbounded, false)
        }
        SolverStatus::MaxTime => (Status::TimeLimit, false),
        _ => (Status::NumericalFailure, false),
    };
    Ok(Solution {
        status,
        x: sol.x.clone(),
        objective: f64::NAN,
        iterations: sol.iterations,
        seconds: 0.0,
        primal_residual: sol.r_prim,
        dual_residual: sol.r_dual,
        reduced_accuracy: reduced,
        message: format!("{:?}", sol.status),
        certificate: if status == Status::Infeasible { sol.z.clone() } else { vec![] },
    })
}

fn finish(prog: &ConicProgram, mut sol: Solution, start: Instant, attempts: usize) -> Solution {
    if sol.reduced_accuracy {
        log::warn!("conic backend reached reduced accuracy only");
    }
    if sol.status == Status::Optimal {
        sol.objective = prog.objective().eval(&sol.x);
    } else {
        sol.x.clear();
    }
    if sol.status == Status::Infeasible && !sol.certificate.is_empty() {
        // collapse the dual ray to one norm per constraint
        let z = std::mem::take(&mut sol.certificate);
        let mut at = 0;
        sol.certificate = prog
            .constraints()
            .iter()
            .map(|c| {
                let k = c.rows.len();
                let w = z[at..at + k].iter().map(|v| v * v).sum::<f64>().sqrt();
                at += k;
                w
            })
            .collect();
    }
    if attempts > 1 {
        sol.message = format!("{} after {attempts} attempts", sol.message);
    }
    sol.seconds = start.elapsed().as_secs_f64();
    sol
}

#[cfg(test)]
mod tests {
    use super::super::{Affine, ConicProgram};
    use super::*;

    #[test]
    fn maximize_bounded_scalar() {
        let mut p = ConicProgram::new();
        let x = p.scalar("x");
        let mut c = Affine::constant(1.0);
        c.add(x.0, -1.0);
        p.add_nonneg("x <= 1", c);
        p.maximize(Affine::var(x.0));
        let s = solve(&p, &Settings::default()).unwrap();
        assert_eq!(s.status, Status::Optimal);
        assert!((s.scalar(x) - 1.0).abs() < 1e-7);
    }

    #[test]
    fn soc_touching_point() {
        // |(x, 1)| <= 1 forces x = 0
        let mut p = ConicProgram::new();
        let x = p.scalar("x");
        p.add_soc(
            "ball",
            Affine::constant(1.0),
            vec![Affine::var(x.0), Affine::constant(1.0)],
        );
        p.maximize(Affine::var(x.0));
        let s = solve(&p, &Settings::default()).unwrap();
        assert_eq!(s.status, Status::Optimal);
        assert!(s.scalar(x).abs() < 1e-3, "x = {}", s.scalar(x));
    }

    #[test]
    fn detects_infeasible_and_unbounded() {
        let mut p = ConicProgram::new();
        let x = p.scalar("x");
        p.add_nonneg("x >= 1", {
            let mut e = Affine::var(x.0);
            e.add_const(-1.0);
            e
        });
        p.add_nonneg("x <= 0", Affine::var(x.0).scaled(-1.0));
        let s = solve(&p, &Settings::default()).unwrap();
        assert_eq!(s.status, Status::Infeasible);
        assert!(s.x.is_empty());

        let mut p = ConicProgram::new();
        let x = p.scalar("x");
        p.add_nonneg("x >= 0", Affine::var(x.0));
        p.maximize(Affine::var(x.0));
        let s = solve(&p, &Settings::default()).unwrap();
        assert_eq!(s.status, Status::Unbounded);
    }

    #[test]
    fn repeated_solves_agree() {
        let mut p = ConicProgram::new();
        let v = p.vector("v", 3);
        let mut bound = Affine::constant(2.0);
        bound.add(v.at(2), -1.0);
        p.add_soc("c", bound, vec![Affine::var(v.at(0)), Affine::var(v.at(1))]);
        p.add_nonneg("v2", Affine::var(v.at(2)));
        let mut obj = Affine::var(v.at(0));
        obj.add(v.at(1), 2.0).add(v.at(2), 0.5);
        p.maximize(obj);
        let a = solve(&p, &Settings::default()).unwrap();
        let b = solve(&p, &Settings::default()).unwrap();
        assert_eq!(a.status, Status::Optimal);
        assert!(((a.objective - b.objective) / a.objective).abs() <= 1e-7);
        assert!((a.objective - 2.0 * 5f64.sqrt()).abs() < 1e-5);
    }
}
