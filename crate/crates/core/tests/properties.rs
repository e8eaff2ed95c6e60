use flexhull::model::synthetic::{random_feeder, FeederSpec};
use flexhull::model::{assemble, ConstraintSystem};
use flexhull::policies::{AffinePolicy, Policy, QuadraticPolicy};
use flexhull::reduction::{decompose, disaggregate, reduce};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn system(seed: u64, nodes: usize, periods: usize, delta: f64) -> ConstraintSystem {
    let f = random_feeder(&FeederSpec {
        nodes,
        periods,
        seed,
        delta,
        storage: 1 + (seed % 3) as usize,
        pv: (seed % 2) as usize,
        hvac: 1,
        loads: 3,
        ..Default::default()
    });
    assemble(&f).unwrap()
}

fn vector(values: &[f64], n: usize) -> DVector<f64> {
    DVector::from_fn(n, |i, _| values[i % values.len()] * (1.0 + i as f64 * 0.1))
}

fn inside_ball(mut v: DVector<f64>, groups: usize) -> DVector<f64> {
    for block in v.as_mut_slice().chunks_mut(groups) {
        let n = block.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1.0 {
            block.iter_mut().for_each(|x| *x /= n);
        }
    }
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn basis_splits_the_dispatch_space(
        seed in 0u64..1000,
        nodes in 2usize..9,
        periods in 1usize..5,
    ) {
        let sys = system(seed, nodes, periods, 0.0);
        let basis = decompose(&sys).unwrap();
        let n = sys.column_count();
        prop_assert!((&sys.d * &basis.b2).amax() <= 1e-10);
        let mut q = DMatrix::zeros(n, n);
        q.columns_mut(0, basis.b1.ncols()).copy_from(&basis.b1);
        q.columns_mut(basis.b1.ncols(), basis.b2.ncols()).copy_from(&basis.b2);
        prop_assert!((q.transpose() * &q - DMatrix::identity(n, n)).amax() <= 1e-10);
        prop_assert!((&basis.d_tilde * &basis.d_tilde_inv - DMatrix::identity(periods, periods)).amax() <= 1e-9);
    }

    #[test]
    fn reduced_rows_equal_original_rows(
        seed in 0u64..1000,
        nodes in 2usize..7,
        periods in 1usize..4,
        delta in 0.0f64..0.3,
        raw in prop::collection::vec(-1.0f64..1.0, 8),
    ) {
        let sys = system(seed, nodes, periods, delta);
        let basis = decompose(&sys).unwrap();
        let red = reduce(&sys, &basis).unwrap();
        let p0 = vector(&raw, periods) * 50.0;
        let y = vector(&raw[1..], red.y_len()) * 20.0;
        let zeta = inside_ball(vector(&raw[2..], sys.zeta_len()), sys.groups);

        let p = disaggregate(&basis, &sys, &p0, &y, &zeta).unwrap();
        let (z, b) = sys.evaluate_rhs(&zeta).unwrap();
        let scale = 1.0 + p.amax();
        prop_assert!((&sys.d * &p + b - &p0).amax() <= 1e-9 * scale);
        prop_assert!((basis.b2.transpose() * &p - &y).amax() <= 1e-9 * scale);
        let original = &sys.w * &p - z;
        let reduced = red.residuals(&p0, &y, &zeta);
        prop_assert!((original - reduced).amax() <= 1e-8 * scale);
    }

    #[test]
    fn affine_policy_is_affine(
        m in 1usize..5,
        t in 1usize..4,
        g in 1usize..4,
        raw in prop::collection::vec(-2.0f64..2.0, 16),
        w in 0.0f64..1.0,
    ) {
        let k = DMatrix::from_fn(m, t, |i, j| raw[(i * 3 + j) % 16]);
        let l = (0..t).map(|s| DMatrix::from_fn(m, g, |i, j| raw[(i + j + s) % 16] * 0.5)).collect();
        let gamma = DVector::from_fn(m, |i, _| raw[(i + 7) % 16]);
        let pol = Policy::Affine(AffinePolicy { k, l, gamma, alpha: DVector::zeros(m) });
        let (x1, x2) = (vector(&raw, t), vector(&raw[5..], t));
        let (z1, z2) = (vector(&raw[3..], t * g), vector(&raw[9..], t * g));
        let mix = pol.evaluate(&(&x1 * w + &x2 * (1.0 - w)), &(&z1 * w + &z2 * (1.0 - w)));
        let sep = pol.evaluate(&x1, &z1) * w + pol.evaluate(&x2, &z2) * (1.0 - w);
        prop_assert!((mix - sep).amax() <= 1e-12);
    }

    #[test]
    fn quadratic_policy_matches_its_definition(
        m in 1usize..4,
        t in 1usize..4,
        raw in prop::collection::vec(-2.0f64..2.0, 16),
    ) {
        let q: Vec<DMatrix<f64>> = (0..m)
            .map(|j| {
                let a = DMatrix::from_fn(t, t, |r, c| raw[(r * 5 + c + j) % 16]);
                &a + a.transpose()
            })
            .collect();
        let l = DMatrix::from_fn(m, t, |i, j| raw[(i + 2 * j) % 16]);
        let c = DVector::from_fn(m, |i, _| raw[(i + 11) % 16]);
        let pol = Policy::Quadratic(QuadraticPolicy {
            q: q.clone(),
            l: l.clone(),
            c: c.clone(),
            lambda: DMatrix::zeros(0, t + 2),
            eta_dim: t,
        });
        let xi = vector(&raw[4..], t);
        let y = pol.evaluate(&xi, &DVector::zeros(0));
        for j in 0..m {
            let expected = (xi.transpose() * &q[j] * &xi)[(0, 0)] + l.row(j).dot(&xi.transpose()) + c[j];
            prop_assert!((y[j] - expected).abs() <= 1e-10 * (1.0 + expected.abs()));
        }
    }
}
