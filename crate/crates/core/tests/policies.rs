mod common;

use approx::assert_abs_diff_eq;
use common::*;
use flexhull::conic::Status;
use flexhull::model::ConstraintFamily;
use flexhull::model::synthetic::{random_feeder, FeederSpec};
use flexhull::policies::{
    solve, tightness_factor, PolicyKind, PolicySolution, QuadraticBudget, Region, SolveOptions,
};
use flexhull::Error;

const KINDS: [PolicyKind; 3] = [PolicyKind::Affine, PolicyKind::Quadratic, PolicyKind::Box];

fn run(inst: &Instance, kind: PolicyKind) -> PolicySolution {
    let sol = solve(kind, &inst.red, &SolveOptions::default()).expect("solve");
    assert_eq!(sol.status, Status::Optimal, "{} {}", inst.name, kind.as_str());
    sol
}

#[test]
fn single_storage_interval_is_recovered_by_every_formulation() {
    let inst = prepare("single", single_storage());
    for kind in [PolicyKind::Affine, PolicyKind::Quadratic] {
        let sol = run(&inst, kind);
        let e = sol.ellipsoid().unwrap();
        assert_abs_diff_eq!(e.shape[(0, 0)], 0.5, epsilon = 1e-5);
        assert_abs_diff_eq!(e.center[0], 0.0, epsilon = 1e-5);
        assert_abs_diff_eq!(sol.logdet().unwrap(), 0.5f64.ln(), epsilon = 1e-4);
    }
    let sol = run(&inst, PolicyKind::Box);
    let Some(Region::Hyperbox(b)) = &sol.region else { panic!("box region") };
    assert_abs_diff_eq!(b.lower[0], -0.5, epsilon = 1e-5);
    assert_abs_diff_eq!(b.upper[0], 0.5, epsilon = 1e-5);
}

#[test]
fn load_uncertainty_shrinks_and_shifts_the_interval() {
    let inst = prepare("robust", robust_storage(0.25));
    assert!(!inst.sys.is_deterministic());
    for kind in [PolicyKind::Affine, PolicyKind::Quadratic] {
        let sol = run(&inst, kind);
        let e = sol.ellipsoid().unwrap();
        assert_abs_diff_eq!(e.shape[(0, 0)], 0.75, epsilon = 1e-5);
        assert_abs_diff_eq!(e.center[0], 1.0, epsilon = 1e-5);
    }
}

#[test]
fn uncertainty_beyond_the_device_range_is_infeasible() {
    let inst = prepare("robust", robust_storage(1.5));
    let sol = solve(PolicyKind::Affine, &inst.red, &SolveOptions::default()).unwrap();
    assert_eq!(sol.status, Status::Infeasible);
    assert!(sol.region.is_none() && sol.policy.is_none());
    assert!(sol.volume().is_none());
    let rows = &sol.diagnostics.conflict_rows;
    assert!(!rows.is_empty());
    // rate and energy limits coincide for this unit
    for &i in rows {
        let family = inst.sys.rows[i].family;
        assert!(matches!(family, ConstraintFamily::StorageRate | ConstraintFamily::StorageEnergy));
    }
}

#[test]
fn two_devices_add_their_ranges() {
    let mut f = lossless(1);
    f.storage.push(storage(1.0, 1.0, 2.0));
    f.storage.push(storage(1.0, 1.0, 2.0));
    let inst = prepare("pair", f);
    assert_eq!(inst.red.y_len(), 1);
    for kind in KINDS {
        let sol = run(&inst, kind);
        let vol = sol.volume().unwrap();
        // a segment of length 4 either way
        assert_abs_diff_eq!(vol.lebesgue, 4.0, epsilon = 1e-4);
        if let Some(e) = sol.ellipsoid() {
            assert_abs_diff_eq!(e.shape[(0, 0)], 2.0, epsilon = 1e-5);
        }
    }
}

#[test]
fn square_region_gives_inscribed_disk_and_unit_box() {
    let mut f = lossless(2);
    f.pv.push(pv(vec![1.0, 1.0]));
    let inst = prepare("square", f);
    let sol = run(&inst, PolicyKind::Box);
    let Some(Region::Hyperbox(b)) = &sol.region else { panic!("box region") };
    for t in 0..2 {
        assert_abs_diff_eq!(b.lower[t], -1.0, epsilon = 1e-5);
        assert_abs_diff_eq!(b.upper[t], 0.0, epsilon = 1e-5);
    }
    assert_abs_diff_eq!(b.log_volume(), 0.0, epsilon = 1e-5);

    for kind in [PolicyKind::Affine, PolicyKind::Quadratic] {
        let sol = run(&inst, kind);
        let e = sol.ellipsoid().unwrap();
        assert_abs_diff_eq!(e.shape[(0, 0)], 0.5, epsilon = 1e-5);
        assert_abs_diff_eq!(e.shape[(1, 1)], 0.5, epsilon = 1e-5);
        assert_abs_diff_eq!(e.shape[(0, 1)], 0.0, epsilon = 1e-5);
        assert_abs_diff_eq!(sol.volume().unwrap().lebesgue, std::f64::consts::PI / 4.0, epsilon = 1e-4);
    }
}

#[test]
fn scaling_all_powers_scales_the_ellipsoid() {
    let f = random_feeder(&FeederSpec {
        nodes: 5,
        periods: 2,
        seed: 3,
        ..Default::default()
    });
    let base = run(&prepare("base", f.clone()), PolicyKind::Affine);
    let scaled = run(&prepare("scaled", f.scaled(2.0)), PolicyKind::Affine);
    let (e1, e2) = (base.ellipsoid().unwrap(), scaled.ellipsoid().unwrap());
    let t = e1.dim() as f64;
    assert!(rel_close(e2.logdet, e1.logdet + t * 2f64.ln(), 1e-5));
    for (a, b) in e1.center.iter().zip(e2.center.iter()) {
        assert!(rel_close(2.0 * a, *b, 1e-4), "{a} {b}");
    }
}

#[test]
fn quadratic_is_never_worse_without_uncertainty() {
    for seed in 0..3 {
        let inst = prepare(
            format!("seed {seed}"),
            random_feeder(&FeederSpec {
                nodes: 6,
                periods: 2,
                seed,
                ..Default::default()
            }),
        );
        let a = run(&inst, PolicyKind::Affine).logdet().unwrap();
        let q = run(&inst, PolicyKind::Quadratic).logdet().unwrap();
        assert!(q >= a - 1e-6, "seed {seed}: quadratic {q} < affine {a}");
    }
}

#[test]
fn tightness_factor_is_reported_for_quadratic_only() {
    let inst = prepare("single", single_storage());
    let q = run(&inst, PolicyKind::Quadratic);
    assert_abs_diff_eq!(q.tightness_factor().unwrap(), tightness_factor(1), epsilon = 1e-12);
    assert!(run(&inst, PolicyKind::Affine).tightness_factor().is_none());
}

#[test]
fn quadratic_budget_refuses_oversized_programs() {
    let f = random_feeder(&FeederSpec {
        nodes: 5,
        periods: 4,
        delta: 0.1,
        ..Default::default()
    });
    let inst = prepare("large", f);
    let opts = SolveOptions {
        budget: QuadraticBudget {
            max_lmi_dim: 8,
            ..Default::default()
        },
        ..Default::default()
    };
    match solve(PolicyKind::Quadratic, &inst.red, &opts) {
        Err(Error::SizeBudget(msg)) => assert!(msg.contains("dimension 17"), "{msg}"),
        other => panic!("expected a budget refusal, got {other:?}"),
    }
    // the affine program is unaffected
    assert!(solve(PolicyKind::Affine, &inst.red, &opts).unwrap().is_optimal());
}

#[test]
fn solutions_survive_a_json_round_trip() {
    let inst = prepare("robust", robust_storage(0.1));
    let mut f = lossless(2);
    f.storage.push(storage(1.0, 0.5, 1.0));
    f.pv.push(pv(vec![0.5, 1.0]));
    let det = prepare("pair", f);
    for inst in [&inst, &det] {
        for kind in KINDS {
            let mut sol = run(inst, kind);
            sol.model_sha256 = Some("ab".repeat(32));
            sol.delta = Some(inst.feeder.uncertainty.delta);
            let text = sol.to_json().unwrap();
            let back = PolicySolution::from_json(&text).unwrap();
            assert_eq!(back.kind, sol.kind);
            assert_eq!(back.status, sol.status);
            assert_eq!(back.model_sha256, sol.model_sha256);
            assert_eq!(back.region, sol.region);
            assert_eq!(back.policy, sol.policy);
            assert_eq!(back.to_json().unwrap(), text);
        }
    }
}

#[test]
fn truncated_solution_json_is_rejected() {
    let sol = run(&prepare("single", single_storage()), PolicyKind::Affine);
    let text = sol.to_json().unwrap();
    let mut doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    doc["E"] = serde_json::json!([[0.5, 0.0]]);
    assert!(PolicySolution::from_json(&doc.to_string()).is_err());
    doc["E"] = serde_json::json!([[0.5]]);
    doc["unexpected"] = serde_json::json!(1);
    assert!(PolicySolution::from_json(&doc.to_string()).is_err());
}
