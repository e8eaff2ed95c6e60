use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use flexhull::conic::{Settings, Status};
use flexhull::model::{assemble, build_feeder, ConstraintSystem, FeederModel, ModelDocument};
use flexhull::policies::{self, PolicyKind, PolicySolution, QuadraticBudget, Region, SolveOptions};
use flexhull::reduction::{decompose, reduce, ReducedSystem};
use flexhull::verify::{check_containment, project_box, project_ellipse, ContainmentOptions};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::files::{absolute, read_hashed, sibling, write_atomic};
use crate::manifest::{Run, RunManifest};
use crate::{Usage, EXIT_BUDGET, EXIT_INFEASIBLE, EXIT_OK, EXIT_SOLVER, EXIT_VERIFY_FAILED};

/// Solver options shared by `solve` and `sweep`.
#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct SolverArgs {
    /// Wall-clock limit per solve, seconds.
    #[arg(long, default_value_t = 300.0)]
    pub time_limit: f64,
    /// Feasibility and gap tolerance of the interior-point solver.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    /// Largest LMI dimension accepted by the quadratic policy.
    #[arg(long, default_value_t = QuadraticBudget::default().max_lmi_dim)]
    pub max_lmi_dim: usize,
    /// Largest number of quadratic weight entries accepted.
    #[arg(long, default_value_t = QuadraticBudget::default().max_weight_entries)]
    pub max_weight_entries: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl SolverArgs {
    fn options(&self) -> Result<SolveOptions> {
        if !(self.time_limit > 0.0) || !(self.tol > 0.0) {
            bail!(Usage("--time-limit and --tol must be positive".into()));
        }
        Ok(SolveOptions {
            solver: Settings {
                feas_tol: self.tol,
                gap_tol: self.tol,
                time_limit: self.time_limit,
                ..Settings::default()
            },
            budget: QuadraticBudget {
                max_lmi_dim: self.max_lmi_dim,
                max_weight_entries: self.max_weight_entries,
            },
        })
    }
}

fn settings_json(opts: &SolveOptions) -> serde_json::Value {
    json!({
        "solver": opts.solver,
        "max_lmi_dim": opts.budget.max_lmi_dim,
        "max_weight_entries": opts.budget.max_weight_entries,
    })
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct SolveArgs {
    /// Model file.
    pub model: PathBuf,
    #[arg(long, default_value = "affine")]
    pub policy: PolicyKind,
    /// Replaces the model's uncertainty level.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct VerifyArgs {
    pub solution: PathBuf,
    pub model: PathBuf,
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    pub samples: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Judge each sample by the dispatch LP rather than the stored policy.
    #[arg(long, default_value_t = true, num_args = 0..=1, default_missing_value = "true",
          action = clap::ArgAction::Set)]
    pub lp_oracle: bool,
    /// Report path; defaults to `containment.json` next to the solution.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct ProjectArgs {
    pub solution: PathBuf,
    /// Two period indices, `i,j` with `i < j`.
    #[arg(long, value_parser = parse_dims)]
    pub dims: (usize, usize),
    /// CSV path; parameters go to the same name with a `.json` extension.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct SweepArgs {
    pub model: PathBuf,
    /// Ascending, nonnegative uncertainty levels.
    #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
    pub deltas: Vec<f64>,
    #[arg(long, default_value = "affine")]
    pub policy: PolicyKind,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Levels solved concurrently.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[command(flatten)]
    pub solver: SolverArgs,
}

fn parse_dims(s: &str) -> std::result::Result<(usize, usize), String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [i, j] = parts[..] else {
        return Err("expected two indices `i,j`".into());
    };
    let i = i.parse().map_err(|e| format!("`{i}`: {e}"))?;
    let j = j.parse().map_err(|e| format!("`{j}`: {e}"))?;
    if i >= j {
        return Err("need i < j".into());
    }
    Ok((i, j))
}

struct Prepared {
    sys: ConstraintSystem,
    red: ReducedSystem,
}

fn prepare(feeder: &FeederModel) -> flexhull::Result<Prepared> {
    let sys = assemble(feeder)?;
    let basis = decompose(&sys)?;
    let red = reduce(&sys, &basis)?;
    Ok(Prepared { sys, red })
}

fn load_model(path: &Path, run: &mut Run) -> Result<(FeederModel, String)> {
    let (text, hash) = read_hashed(path)?;
    run.input(path, &hash);
    let doc: ModelDocument =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let feeder = build_feeder(&doc).with_context(|| format!("model {}", path.display()))?;
    Ok((feeder, hash))
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta >= 0.0) || !delta.is_finite() {
        bail!(Usage(format!("uncertainty level {delta} must be finite and nonnegative")));
    }
    Ok(())
}

fn status_code(status: Status) -> u8 {
    match status {
        Status::Optimal => EXIT_OK,
        Status::Infeasible => EXIT_INFEASIBLE,
        _ => EXIT_SOLVER,
    }
}

/// Families and labels of the rows named in an infeasibility certificate.
fn conflict_summary(sys: &ConstraintSystem, rows: &[usize]) -> Option<String> {
    let labels: Vec<_> = rows.iter().filter_map(|&i| sys.rows.get(i)).collect();
    if labels.is_empty() {
        return None;
    }
    let mut families: Vec<&str> = Vec::new();
    for l in &labels {
        if !families.contains(&l.family.name()) {
            families.push(l.family.name());
        }
    }
    let rows: Vec<String> = labels.iter().map(|l| l.to_string()).collect();
    Some(format!("{} ({})", families.join(", "), rows.join("; ")))
}

fn report(sol: &PolicySolution, model: &Path, hash: &str, sys: &ConstraintSystem) -> String {
    let mut r = String::new();
    let _ = writeln!(r, "model:      {}", model.display());
    let _ = writeln!(r, "sha256:     {hash}");
    let _ = writeln!(r, "policy:     {}", sol.kind.as_str());
    let _ = writeln!(r, "status:     {}", sol.status);
    let _ = writeln!(r, "periods:    {}", sol.periods);
    if let Some(d) = sol.delta {
        let _ = writeln!(r, "delta:      {d}");
    }
    if let Some(v) = sol.volume() {
        let what = match sol.region {
            Some(Region::Hyperbox(_)) => "sum log half-width",
            _ => "log det E",
        };
        let _ = writeln!(r, "{:<12}{:.9}", format!("{what}:"), v.log_det);
        let _ = writeln!(r, "det E:      {:.6e}", v.det);
        let _ = writeln!(r, "volume:     {:.6e} (log {:.9}, Lebesgue)", v.lebesgue, v.log_lebesgue);
    }
    if let Some(e) = sol.ellipsoid() {
        if e.is_flat() {
            let _ = writeln!(r, "warning:    ellipsoid is flat (eigenvalue ratio {:.3e})", e.eigen_ratio());
        }
    }
    if let Some(f) = sol.tightness_factor() {
        let _ = writeln!(r, "tightness:  {f:.4}");
    }
    let d = &sol.diagnostics;
    let _ = writeln!(r, "solve time: {:.3} s", sol.solve_seconds);
    let _ = writeln!(
        r,
        "solver:     {} iterations, residuals {:.2e} / {:.2e}{}",
        d.iterations,
        d.primal_residual,
        d.dual_residual,
        if d.reduced_accuracy { ", reduced accuracy" } else { "" }
    );
    if let Some(c) = conflict_summary(sys, &d.conflict_rows) {
        let _ = writeln!(r, "conflict:   {c}");
    }
    r
}

pub fn solve(args: SolveArgs, run: &mut Run) -> Result<u8> {
    let mut recorded = args.clone();
    recorded.model = absolute(&args.model);
    run.begin("solve", &recorded, args.solver.seed, args.out.join("manifest.json"));
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let opts = args.solver.options()?;
    run.settings(&settings_json(&opts));

    let (mut feeder, hash) = load_model(&args.model, run)?;
    if let Some(d) = args.delta {
        check_delta(d)?;
        feeder = feeder.with_delta(d);
    }
    let prep = prepare(&feeder)?;
    let mut sol = policies::solve(args.policy, &prep.red, &opts)?;
    sol.model_sha256 = Some(hash.clone());
    sol.delta = Some(feeder.uncertainty.delta);
    run.diagnostics(&sol.diagnostics, sol.solve_seconds);

    let sol_path = args.out.join("solution.json");
    write_atomic(&sol_path, &(sol.to_json()? + "\n"))?;
    run.output(&sol_path);
    let text = report(&sol, &args.model, &hash, &prep.sys);
    let report_path = args.out.join("report.txt");
    write_atomic(&report_path, &text)?;
    run.output(&report_path);
    print!("{text}");

    match sol.status {
        Status::Optimal => {}
        Status::Infeasible => {
            let why = conflict_summary(&prep.sys, &sol.diagnostics.conflict_rows)
                .map(|c| format!("; conflicting constraints: {c}"))
                .unwrap_or_default();
            eprintln!("infeasible: no {} policy exists at delta {}{why}", sol.kind.as_str(), feeder.uncertainty.delta);
        }
        s => eprintln!("solver failure: {s} ({})", sol.diagnostics.message),
    }
    Ok(status_code(sol.status))
}

pub fn verify(args: VerifyArgs, run: &mut Run) -> Result<u8> {
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| args.solution.with_file_name("containment.json"));
    let mut recorded = args.clone();
    recorded.solution = absolute(&args.solution);
    recorded.model = absolute(&args.model);
    run.begin("verify", &recorded, args.seed, sibling(&out, "manifest.json"));

    let (text, sol_hash) = read_hashed(&args.solution)?;
    run.input(&args.solution, &sol_hash);
    let sol = PolicySolution::from_json(&text)
        .with_context(|| format!("parsing {}", args.solution.display()))?;
    let (mut feeder, model_hash) = load_model(&args.model, run)?;
    match &sol.model_sha256 {
        Some(h) if *h != model_hash => bail!(
            "model hash mismatch: solution was computed from {h}, {} has {model_hash}",
            args.model.display()
        ),
        Some(_) => {}
        None => run.warn("solution records no model hash; consistency not checked".into()),
    }
    if let Some(d) = sol.delta {
        feeder = feeder.with_delta(d);
    }
    let prep = prepare(&feeder)?;
    let opts = ContainmentOptions {
        samples: args.samples as usize,
        seed: args.seed,
        lp_oracle: args.lp_oracle,
        ..ContainmentOptions::default()
    };
    run.settings(&opts);
    let rep = check_containment(&sol, &prep.sys, &prep.red, &opts)?;
    write_atomic(&out, &(serde_json::to_string_pretty(&rep)? + "\n"))?;
    run.output(&out);

    println!(
        "{} samples, max violation {:.3e} ({}), {} failures",
        rep.samples,
        rep.max_violation,
        if rep.lp_oracle_used { "LP oracle" } else { "stored policy" },
        rep.failure_count
    );
    for e in &rep.lp_errors {
        eprintln!("oracle error: {e}");
    }
    if rep.passed() {
        return Ok(EXIT_OK);
    }
    for w in rep.failures.iter().take(5) {
        eprintln!("witness sample {}: violation {:.3e}, p0 = {:?}", w.sample, w.violation, w.p0);
    }
    Ok(EXIT_VERIFY_FAILED)
}

pub fn project(args: ProjectArgs, run: &mut Run) -> Result<u8> {
    let mut recorded = args.clone();
    recorded.solution = absolute(&args.solution);
    run.begin("project", &recorded, 0, sibling(&args.out, "manifest.json"));
    let (text, hash) = read_hashed(&args.solution)?;
    run.input(&args.solution, &hash);
    let sol = PolicySolution::from_json(&text)
        .with_context(|| format!("parsing {}", args.solution.display()))?;
    let Some(region) = &sol.region else {
        bail!("solution has status {} and no region to project", sol.status);
    };
    let (i, j) = args.dims;
    if j >= region.dim() {
        bail!(Usage(format!("--dims {i},{j} out of range for {} periods", region.dim())));
    }
    let (csv, params, area) = match region {
        Region::Ellipsoid(e) => {
            let p = project_ellipse(e, args.dims)?;
            (p.to_csv(), serde_json::to_value(&p)?, p.area)
        }
        Region::Hyperbox(b) => {
            let p = project_box(b, args.dims)?;
            (p.to_csv(), serde_json::to_value(&p)?, p.area)
        }
    };
    let params_path = sibling(&args.out, "json");
    let doc = json!({ "policy": sol.kind.as_str(), "region": params });
    write_atomic(&args.out, &csv)?;
    write_atomic(&params_path, &(serde_json::to_string_pretty(&doc)? + "\n"))?;
    run.output(&args.out);
    run.output(&params_path);
    println!("{} projection on periods ({i}, {j}): area {area:.9}", sol.kind.as_str());
    Ok(EXIT_OK)
}

#[derive(Debug, Clone)]
struct Point {
    delta: f64,
    status: String,
    code: u8,
    solution: Option<PolicySolution>,
    seconds: f64,
    message: String,
}

fn sweep_point(feeder: &FeederModel, delta: f64, args: &SweepArgs, opts: &SolveOptions, hash: &str) -> Point {
    let fail = |status: &str, code: u8, message: String| Point {
        delta,
        status: status.into(),
        code,
        solution: None,
        seconds: 0.0,
        message,
    };
    let feeder = feeder.with_delta(delta);
    let result = prepare(&feeder).and_then(|p| policies::solve(args.policy, &p.red, opts));
    match result {
        Ok(mut sol) => {
            sol.model_sha256 = Some(hash.to_string());
            sol.delta = Some(delta);
            Point {
                delta,
                status: sol.status.to_string(),
                code: status_code(sol.status),
                seconds: sol.solve_seconds,
                message: sol.diagnostics.message.clone(),
                solution: Some(sol),
            }
        }
        Err(flexhull::Error::SizeBudget(m)) => fail("refused", EXIT_BUDGET, m),
        Err(e @ flexhull::Error::StaticInfeasible { .. }) => {
            fail(Status::Infeasible.as_str(), EXIT_INFEASIBLE, e.to_string())
        }
        Err(e) => fail("error", EXIT_SOLVER, e.to_string()),
    }
}

/// Empty for missing values so the column stays numeric.
fn field(v: Option<f64>, sci: bool) -> String {
    match v {
        Some(x) if sci => format!("{x:e}"),
        Some(x) => format!("{x}"),
        None => String::new(),
    }
}

pub fn sweep(args: SweepArgs, run: &mut Run) -> Result<u8> {
    let mut recorded = args.clone();
    recorded.model = absolute(&args.model);
    run.begin("sweep", &recorded, args.solver.seed, args.out.join("manifest.json"));
    for &d in &args.deltas {
        check_delta(d)?;
    }
    if args.deltas.windows(2).any(|w| w[1] <= w[0]) {
        bail!(Usage("--deltas must be strictly ascending".into()));
    }
    if args.jobs == 0 {
        bail!(Usage("--jobs must be at least 1".into()));
    }
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let opts = args.solver.options()?;
    run.settings(&settings_json(&opts));
    let (feeder, hash) = load_model(&args.model, run)?;

    let pool = rayon::ThreadPoolBuilder::new().num_threads(args.jobs).build()?;
    let points: Vec<Point> = pool.install(|| {
        args.deltas
            .par_iter()
            .map(|&d| sweep_point(&feeder, d, &args, &opts, &hash))
            .collect()
    });

    let mut csv = String::from("delta,status,logdet,det,log_volume,volume,seconds,warning\n");
    let mut previous: Option<(f64, f64)> = None;
    let mut code = EXIT_OK;
    for p in &points {
        let sol = p.solution.as_ref();
        if let Some(sol) = sol {
            run.diagnostics(&sol.diagnostics, sol.solve_seconds);
            let path = args.out.join(format!("solution_delta_{}.json", p.delta));
            write_atomic(&path, &(sol.to_json()? + "\n"))?;
            run.output(&path);
        }
        if p.code != EXIT_OK && p.code != EXIT_INFEASIBLE {
            run.warn(format!("delta {}: {} ({})", p.delta, p.status, p.message));
            code = code.max(p.code);
        }
        let vol = sol.and_then(PolicySolution::volume);
        let mut warning = String::new();
        if let Some(v) = &vol {
            if let Some((d0, l0)) = previous {
                if v.log_det > l0 + 1e-6 {
                    warning = format!("logdet rose by {:.3e} from delta {d0}", v.log_det - l0);
                    run.warn(format!("delta {}: {warning}", p.delta));
                }
            }
            previous = Some((p.delta, v.log_det));
        }
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            p.delta,
            p.status,
            field(vol.map(|v| v.log_det), false),
            field(vol.map(|v| v.det), true),
            field(vol.map(|v| v.log_lebesgue), false),
            field(vol.map(|v| v.lebesgue), true),
            p.seconds,
            warning
        );
        println!(
            "delta {:<8} {:<18} logdet {}",
            p.delta,
            p.status,
            vol.map(|v| format!("{:.6}", v.log_det)).unwrap_or_else(|| "-".into())
        );
    }
    let path = args.out.join("sweep.csv");
    write_atomic(&path, &csv)?;
    run.output(&path);
    Ok(code)
}

pub fn rerun(manifest: &Path, out: PathBuf, run: &mut Run) -> Result<u8> {
    let text = fs::read_to_string(manifest).with_context(|| format!("reading {}", manifest.display()))?;
    let m: RunManifest =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", manifest.display()))?;
    for input in &m.inputs {
        let (_, hash) = read_hashed(&input.path)?;
        if hash != input.sha256 {
            bail!("{} changed since the recorded run", input.path.display());
        }
    }
    match m.command.as_str() {
        "solve" => {
            let mut args: SolveArgs = serde_json::from_value(m.arguments)?;
            args.out = out;
            solve(args, run)
        }
        "sweep" => {
            let mut args: SweepArgs = serde_json::from_value(m.arguments)?;
            args.out = out;
            sweep(args, run)
        }
        other => bail!(Usage(format!("cannot rerun a `{other}` manifest"))),
    }
}
