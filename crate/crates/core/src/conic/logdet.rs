use super::{Affine, ConicProgram, ScalarVar, SymAffine, SymVar};
use crate::{Error, Result};

/// Adds constraints enforcing `t <= log det E`, tight at the optimum of any
/// program maximizing `t`.
///
/// With `Z` lower triangular, `[[E, Z], [Z^T, diag(Z)]] >= 0` implies
/// `det E >= prod Z_ii`, and each `s_i <= log Z_ii` is an exponential cone
/// `(s_i, 1, Z_ii)`. Then `t <= sum s_i`.
pub fn add_logdet_epigraph(prog: &mut ConicProgram, e: SymVar, t: ScalarVar) -> Result<()> {
    if !prog.is_symmetric_block(e) {
        return Err(Error::Program(
            "log-det epigraph requires a declared symmetric matrix variable".into(),
        ));
    }
    if !prog.is_scalar_block(t) {
        return Err(Error::Program(
            "log-det epigraph bound must be a scalar variable".into(),
        ));
    }
    let n = e.n;
    // Lower-triangular factor, stored in the same triangle layout.
    let z = prog.symmetric("logdet.Z", n);
    let s = prog.vector("logdet.s", n);

    let mut block = SymAffine::zeros(2 * n);
    for i in 0..n {
        for j in 0..=i {
            *block.entry_mut(i, j) = Affine::var(e.at(i, j));
        }
    }
    for a in 0..n {
        // row n + a, column j < n holds (Z^T)[a][j] = Z[j][a], nonzero for j >= a
        for j in a..n {
            *block.entry_mut(n + a, j) = Affine::var(z.at(j, a));
        }
        *block.entry_mut(n + a, n + a) = Affine::var(z.at(a, a));
    }
    prog.add_psd("logdet.factor", block);

    for i in 0..n {
        prog.add_exp(
            &format!("logdet.exp[{i}]"),
            Affine::var(s.at(i)),
            Affine::constant(1.0),
            Affine::var(z.at(i, i)),
        );
    }
    let mut gap = Affine::zero();
    for i in 0..n {
        gap.add(s.at(i), 1.0);
    }
    gap.add(t.0, -1.0);
    prog.add_nonneg("logdet.sum", gap);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::super::{solve, Settings, Status};
    use super::*;
    use nalgebra::DMatrix;

    fn fixed_logdet(m: &DMatrix<f64>) -> f64 {
        let n = m.nrows();
        let mut p = ConicProgram::new();
        let e = p.symmetric("E", n);
        let t = p.scalar("t");
        for i in 0..n {
            for j in 0..=i {
                let mut fix = Affine::var(e.at(i, j));
                fix.add_const(-m[(i, j)]);
                p.add_eq("fix", fix);
            }
        }
        add_logdet_epigraph(&mut p, e, t).unwrap();
        p.maximize(Affine::var(t.0));
        let s = solve(&p, &Settings::default()).unwrap();
        assert_eq!(s.status, Status::Optimal);
        s.scalar(t)
    }

    #[test]
    fn identity_has_zero_logdet() {
        assert!(fixed_logdet(&DMatrix::identity(2, 2)).abs() < 1e-5);
    }

    #[test]
    fn diagonal_logdet() {
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![4.0, 1.0]));
        let v = fixed_logdet(&m);
        assert!((v - 4f64.ln()).abs() < 1e-5, "{v}");
    }

    #[test]
    fn dense_logdet_matches_eigenvalues() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let oracle: f64 = m.clone().symmetric_eigen().eigenvalues.iter().map(|l: &f64| l.ln()).sum();
        assert!((oracle - 3f64.ln()).abs() < 1e-12);
        assert!((fixed_logdet(&m) - oracle).abs() < 1e-5);
    }

    #[test]
    fn rejects_non_symmetric_argument() {
        let mut p = ConicProgram::new();
        let v = p.vector("v", 3);
        let t = p.scalar("t");
        let fake = SymVar {
            offset: v.offset,
            n: 2,
        };
        assert!(add_logdet_epigraph(&mut p, fake, t).is_err());
    }
}
