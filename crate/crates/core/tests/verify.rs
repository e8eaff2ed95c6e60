mod common;

use std::f64::consts::PI;

use approx::assert_abs_diff_eq;
use common::*;
use flexhull::model::synthetic::{random_feeder, FeederSpec};
use flexhull::policies::{solve, Ellipsoid, PolicyKind, PolicySolution, Region, SolveOptions};
use flexhull::verify::{
    check_containment, exact_projection_2d, mve_in_polygon, project_ellipse, roundtrip,
    ContainmentOptions, LpOracle, ProjectionBudget,
};
use flexhull::Error;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn run(inst: &Instance, kind: PolicyKind) -> PolicySolution {
    let sol = solve(kind, &inst.red, &SolveOptions::default()).unwrap();
    assert!(sol.is_optimal(), "{}: {} {:?}", inst.name, sol.status, sol.diagnostics);
    sol
}

fn small_feeder(delta: f64) -> Instance {
    prepare(
        "feeder",
        random_feeder(&FeederSpec {
            nodes: 6,
            periods: 3,
            seed: 11,
            delta,
            ..Default::default()
        }),
    )
}

fn opts(samples: usize) -> ContainmentOptions {
    ContainmentOptions {
        samples,
        ..Default::default()
    }
}

#[test]
fn optimal_sets_pass_containment() {
    let inst = small_feeder(0.1);
    for kind in [PolicyKind::Affine, PolicyKind::Box] {
        let sol = run(&inst, kind);
        let rep = check_containment(&sol, &inst.sys, &inst.red, &opts(200)).unwrap();
        assert!(rep.passed(), "{kind:?}: {rep:?}");
        assert!(rep.lp_oracle_used && rep.lp_errors.is_empty());
        assert!(rep.max_violation <= 1e-6);
        assert!(rep.policy_max_violation.unwrap() <= 1e-6);
    }
}

#[test]
fn inflated_ellipsoid_is_caught() {
    let inst = small_feeder(0.0);
    let mut sol = run(&inst, PolicyKind::Affine);
    if let Some(Region::Ellipsoid(e)) = sol.region.as_mut() {
        e.shape *= 1.5;
    }
    let rep = check_containment(&sol, &inst.sys, &inst.red, &opts(200)).unwrap();
    assert!(!rep.passed());
    assert!(rep.failure_count > 0 && rep.max_violation > 1e-6);
    assert!(!rep.failures.is_empty() && rep.failures.len() <= 20);
    let w = &rep.failures[0];
    assert!(w.violation > rep.tolerance);
    assert_eq!(w.p0.len(), inst.sys.periods);

    // every witness is independently infeasible
    let oracle = LpOracle::new(&inst.sys);
    let zeta = DVector::from_vec(w.zeta.clone());
    let s = oracle.slack(&DVector::from_vec(w.p0.clone()), &zeta).unwrap();
    assert_abs_diff_eq!(s, w.violation, epsilon = 1e-6);
}

#[test]
fn policy_residual_is_used_without_the_lp() {
    let inst = small_feeder(0.0);
    let sol = run(&inst, PolicyKind::Affine);
    let rep = check_containment(
        &sol,
        &inst.sys,
        &inst.red,
        &ContainmentOptions {
            lp_oracle: false,
            ..opts(300)
        },
    )
    .unwrap();
    assert!(!rep.lp_oracle_used);
    assert_eq!(Some(rep.max_violation), rep.policy_max_violation);
    assert!(rep.passed());
}

#[test]
fn containment_is_reproducible_per_seed() {
    let inst = small_feeder(0.1);
    let sol = run(&inst, PolicyKind::Affine);
    let a = check_containment(&sol, &inst.sys, &inst.red, &opts(100)).unwrap();
    let b = check_containment(&sol, &inst.sys, &inst.red, &opts(100)).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    let c = check_containment(
        &sol,
        &inst.sys,
        &inst.red,
        &ContainmentOptions { seed: 7, ..opts(100) },
    )
    .unwrap();
    assert_eq!(c.seed, 7);
    assert_ne!(a.policy_max_violation, c.policy_max_violation);
}

#[test]
fn containment_rejects_mismatched_inputs() {
    let inst = small_feeder(0.0);
    let sol = run(&inst, PolicyKind::Affine);
    let other = prepare("single", single_storage());
    assert!(check_containment(&sol, &other.sys, &other.red, &opts(10)).is_err());
    assert!(check_containment(&sol, &inst.sys, &inst.red, &opts(0)).is_err());
}

#[test]
fn roundtrip_recovers_feasible_dispatch() {
    let inst = small_feeder(0.15);
    let sol = run(&inst, PolicyKind::Affine);
    let e = sol.ellipsoid().unwrap().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let zeta = flexhull::verify::sample_zeta(&mut rng, inst.sys.periods, inst.sys.groups);

    let rt = roundtrip(&sol, &inst.sys, &inst.basis, &e.center, &zeta).unwrap();
    assert!(rt.xi.norm() < 1e-9);
    assert!(rt.aggregation_residual <= 1e-8);
    assert!(rt.inequality_residual <= 1e-6);

    let dir = DVector::from_fn(inst.sys.periods, |_, _| rng.random_range(-1.0..1.0)).normalize();
    let boundary = e.point(&dir);
    let rt = roundtrip(&sol, &inst.sys, &inst.basis, &boundary, &zeta).unwrap();
    assert_abs_diff_eq!(rt.xi.norm(), 1.0, epsilon = 1e-8);
    assert!(rt.inequality_residual <= 1e-6);

    let outside = e.point(&(dir * 1.01));
    match roundtrip(&sol, &inst.sys, &inst.basis, &outside, &zeta) {
        Err(Error::OutsideEllipsoid { norm }) => assert_abs_diff_eq!(norm, 1.01, epsilon = 1e-6),
        other => panic!("expected rejection, got {other:?}"),
    }
}

#[test]
fn roundtrip_checks_uncertainty_and_dimensions() {
    let inst = small_feeder(0.15);
    let sol = run(&inst, PolicyKind::Affine);
    let c = sol.ellipsoid().unwrap().center.clone();
    let mut zeta = DVector::zeros(inst.sys.zeta_len());
    zeta[0] = 1.5;
    assert!(matches!(
        roundtrip(&sol, &inst.sys, &inst.basis, &c, &zeta),
        Err(Error::OutsideUncertaintySet { .. })
    ));
    let zeta = DVector::zeros(inst.sys.zeta_len());
    let short = c.rows(0, 2).into_owned();
    assert!(matches!(
        roundtrip(&sol, &inst.sys, &inst.basis, &short, &zeta),
        Err(Error::Dimension { .. })
    ));
}

#[test]
fn box_roundtrip_uses_the_infinity_norm() {
    let mut f = lossless(2);
    f.pv.push(pv(vec![1.0, 1.0]));
    let inst = prepare("square", f);
    let sol = run(&inst, PolicyKind::Box);
    let zeta = DVector::zeros(inst.sys.zeta_len());
    // a corner of the box is inside even though its euclidean xi is sqrt(2)
    let corner = DVector::from_vec(vec![-1.0 + 1e-7, -1.0 + 1e-7]);
    let rt = roundtrip(&sol, &inst.sys, &inst.basis, &corner, &zeta).unwrap();
    assert!(rt.xi.amax() <= 1.0 + 1e-6);
    let beyond = DVector::from_vec(vec![0.02, -0.5]);
    assert!(matches!(
        roundtrip(&sol, &inst.sys, &inst.basis, &beyond, &zeta),
        Err(Error::OutsideEllipsoid { .. })
    ));
}

/// Support function of `{c + E u : |u| <= 1}` in direction `n`.
fn support(shape: &DMatrix<f64>, center: &DVector<f64>, n: &DVector<f64>) -> f64 {
    n.dot(center) + (shape.transpose() * n).norm()
}

#[test]
fn projected_ellipse_matches_support_function() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let a: DMatrix<f64> = DMatrix::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0));
        let shape = &a * a.transpose() + DMatrix::identity(4, 4) * 0.1;
        let center = DVector::from_fn(4, |_, _| rng.random_range(-5.0..5.0));
        let ell = Ellipsoid {
            logdet: shape.determinant().ln(),
            shape: shape.clone(),
            center: center.clone(),
        };
        let dims = (1, 3);
        let proj = project_ellipse(&ell, dims).unwrap();
        let s2 = DMatrix::from_fn(2, 2, |i, j| proj.shape[i][j]);
        let c2 = DVector::from_vec(proj.center.to_vec());
        for k in 0..16 {
            let th = 2.0 * PI * k as f64 / 16.0;
            let n2 = DVector::from_vec(vec![th.cos(), th.sin()]);
            let mut n4 = DVector::zeros(4);
            n4[dims.0] = n2[0];
            n4[dims.1] = n2[1];
            assert_abs_diff_eq!(support(&s2, &c2, &n2), support(&shape, &center, &n4), epsilon = 1e-9);
        }
        assert_abs_diff_eq!(
            proj.area,
            PI * proj.semi_axes[0] * proj.semi_axes[1],
            epsilon = 1e-9 * proj.area
        );
    }
}

fn storage_pair() -> Instance {
    let mut f = lossless(2);
    f.storage.push(storage(1.0, 0.5, 1.0));
    prepare("storage", f)
}

#[test]
fn exact_projection_of_storage_is_a_parallelogram() {
    // |p1| <= 1/2 and |p1 + p2| <= 1/2, mirrored by p0 = -p
    let inst = storage_pair();
    let poly = exact_projection_2d(&inst.sys, &ProjectionBudget::default()).unwrap();
    assert_eq!(poly.vertices.len(), 4);
    assert_abs_diff_eq!(poly.area(), 1.0, epsilon = 1e-9);
    assert!(poly.is_centrally_symmetric(1e-9));
    let mut expected = vec![[0.5, 0.0], [-0.5, 1.0], [-0.5, 0.0], [0.5, -1.0]];
    let mut got = poly.vertices.clone();
    let key = |v: &[f64; 2]| ((v[0] * 1e6).round() as i64, (v[1] * 1e6).round() as i64);
    expected.sort_by_key(key);
    got.sort_by_key(key);
    for (a, b) in got.iter().zip(&expected) {
        assert_abs_diff_eq!(a[0], b[0], epsilon = 1e-9);
        assert_abs_diff_eq!(a[1], b[1], epsilon = 1e-9);
    }
}

#[test]
fn polygon_mve_matches_affine_image_of_the_disk() {
    // the maximal ellipse of a parallelogram is the image of the disk
    // inscribed in the square, covering pi/4 of its area
    let inst = storage_pair();
    let poly = exact_projection_2d(&inst.sys, &ProjectionBudget::default()).unwrap();
    let mve = mve_in_polygon(&poly).unwrap();
    let area = PI * mve.shape.determinant();
    assert_abs_diff_eq!(area, PI / 4.0 * poly.area(), epsilon = 1e-6);

    let sol = run(&inst, PolicyKind::Affine);
    let e = sol.ellipsoid().unwrap();
    assert!(poly.clearance(e) >= -1e-6);
    assert_abs_diff_eq!(sol.volume().unwrap().lebesgue, area, epsilon = 1e-5);
}

#[test]
fn exact_projection_of_one_period_is_an_interval() {
    let inst = prepare("pair", {
        let mut f = lossless(1);
        f.storage.push(storage(1.0, 1.0, 2.0));
        f.pv.push(pv(vec![0.5]));
        f
    });
    let poly = exact_projection_2d(&inst.sys, &ProjectionBudget::default()).unwrap();
    let (lo, hi) = poly.interval().unwrap();
    assert_abs_diff_eq!(lo, -1.5, epsilon = 1e-9);
    assert_abs_diff_eq!(hi, 1.0, epsilon = 1e-9);
    let mve = mve_in_polygon(&poly).unwrap();
    assert_abs_diff_eq!(mve.shape[(0, 0)], 1.25, epsilon = 1e-12);
}

#[test]
fn exact_projection_refuses_unsupported_instances() {
    let budget = ProjectionBudget::default();
    assert!(matches!(
        exact_projection_2d(&prepare("robust", robust_storage(0.1)).sys, &budget),
        Err(Error::Projection(_))
    ));
    let mut f = lossless(3);
    f.storage.push(storage(1.0, 0.5, 1.0));
    assert!(exact_projection_2d(&prepare("long", f).sys, &budget).is_err());
    let mut f = lossless(2);
    for _ in 0..7 {
        f.storage.push(storage(1.0, 0.5, 1.0));
    }
    assert!(matches!(
        exact_projection_2d(&prepare("wide", f).sys, &budget),
        Err(Error::SizeBudget(_))
    ));
}
