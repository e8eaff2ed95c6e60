//! Small conic-program representation: scalar columns grouped into named
//! variable blocks, affine expressions over them, and constraints asking an
//! affine vector to lie in a nonnegative, second-order, exponential or PSD
//! cone. Objectives are always maximized.

mod backend;
pub mod cbf;
mod logdet;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

pub use backend::{solve, Settings, Solution, Status};
pub use logdet::add_logdet_epigraph;

use crate::{Error, Result};

/// Sparse affine expression `sum coef * x[col] + constant`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Affine {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl Affine {
    pub fn zero() -> Self {
        Affine::default()
    }

    pub fn constant(c: f64) -> Self {
        Affine {
            terms: vec![],
            constant: c,
        }
    }

    pub fn var(col: usize) -> Self {
        Affine {
            terms: vec![(col, 1.0)],
            constant: 0.0,
        }
    }

    pub fn add(&mut self, col: usize, coef: f64) -> &mut Self {
        if coef != 0.0 {
            self.terms.push((col, coef));
        }
        self
    }

    pub fn add_const(&mut self, c: f64) -> &mut Self {
        self.constant += c;
        self
    }

    pub fn add_expr(&mut self, other: &Affine, scale: f64) -> &mut Self {
        if scale != 0.0 {
            self.terms
                .extend(other.terms.iter().map(|&(c, v)| (c, v * scale)));
            self.constant += other.constant * scale;
        }
        self
    }

    pub fn scaled(&self, s: f64) -> Affine {
        Affine {
            terms: self.terms.iter().map(|&(c, v)| (c, v * s)).collect(),
            constant: self.constant * s,
        }
    }

    /// Merges duplicate columns and drops zeros.
    pub fn compact(&self) -> Affine {
        let mut map: BTreeMap<usize, f64> = BTreeMap::new();
        for &(c, v) in &self.terms {
            *map.entry(c).or_insert(0.0) += v;
        }
        Affine {
            terms: map.into_iter().filter(|(_, v)| *v != 0.0).collect(),
            constant: self.constant,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(c, v)| v * x[c]).sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Scalar,
    Vector(usize),
    /// Dense `rows x cols` matrix, row-major.
    Matrix(usize, usize),
    /// Symmetric `n x n`, lower triangle stored row by row.
    Symmetric(usize),
}

impl VarKind {
    fn len(self) -> usize {
        match self {
            VarKind::Scalar => 1,
            VarKind::Vector(n) => n,
            VarKind::Matrix(r, c) => r * c,
            VarKind::Symmetric(n) => n * (n + 1) / 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarBlock {
    pub name: String,
    pub kind: VarKind,
    pub offset: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScalarVar(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VectorVar {
    pub offset: usize,
    pub len: usize,
}

impl VectorVar {
    pub fn at(&self, i: usize) -> usize {
        debug_assert!(i < self.len);
        self.offset + i
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatrixVar {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl MatrixVar {
    pub fn at(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.rows && j < self.cols);
        self.offset + i * self.cols + j
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SymVar {
    pub offset: usize,
    pub n: usize,
}

/// Position of `(i, j)` in row-wise lower-triangle storage.
pub fn tri_index(i: usize, j: usize) -> usize {
    let (r, c) = if i >= j { (i, j) } else { (j, i) };
    r * (r + 1) / 2 + c
}

impl SymVar {
    pub fn at(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.n && j < self.n);
        self.offset + tri_index(i, j)
    }
}

/// Symmetric matrix of affine expressions, lower triangle row by row.
#[derive(Debug, Clone, PartialEq)]
pub struct SymAffine {
    pub n: usize,
    pub entries: Vec<Affine>,
}

impl SymAffine {
    pub fn zeros(n: usize) -> Self {
        SymAffine {
            n,
            entries: vec![Affine::zero(); n * (n + 1) / 2],
        }
    }

    pub fn entry_mut(&mut self, i: usize, j: usize) -> &mut Affine {
        &mut self.entries[tri_index(i, j)]
    }

    pub fn entry(&self, i: usize, j: usize) -> &Affine {
        &self.entries[tri_index(i, j)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cone {
    Zero,
    Nonnegative,
    /// `(t, x)` with `|x| <= t`.
    SecondOrder,
    /// `(x, y, z)` with `y exp(x / y) <= z`, `y > 0`.
    Exponential,
    /// Symmetric `n x n` matrix in scaled lower-triangle coordinates.
    PsdTriangle(usize),
}

impl Cone {
    fn name(self) -> &'static str {
        match self {
            Cone::Zero => "zero",
            Cone::Nonnegative => "nonnegative",
            Cone::SecondOrder => "second-order",
            Cone::Exponential => "exponential",
            Cone::PsdTriangle(_) => "psd",
        }
    }
}

/// One cone membership constraint. For PSD cones `rows` holds the lower
/// triangle of the matrix without the off-diagonal sqrt(2) scaling; the
/// scaling is applied when lowering to a backend.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub name: String,
    pub cone: Cone,
    pub rows: Vec<Affine>,
}

#[derive(Debug, Clone, Default)]
pub struct ConicProgram {
    blocks: Vec<VarBlock>,
    columns: usize,
    objective: Affine,
    constraints: Vec<Constraint>,
}

impl ConicProgram {
    pub fn new() -> Self {
        Self::default()
    }

    fn declare(&mut self, name: &str, kind: VarKind) -> usize {
        let offset = self.columns;
        self.columns += kind.len();
        self.blocks.push(VarBlock {
            name: name.to_string(),
            kind,
            offset,
        });
        offset
    }

    pub fn scalar(&mut self, name: &str) -> ScalarVar {
        ScalarVar(self.declare(name, VarKind::Scalar))
    }

    pub fn vector(&mut self, name: &str, len: usize) -> VectorVar {
        VectorVar {
            offset: self.declare(name, VarKind::Vector(len)),
            len,
        }
    }

    pub fn matrix(&mut self, name: &str, rows: usize, cols: usize) -> MatrixVar {
        MatrixVar {
            offset: self.declare(name, VarKind::Matrix(rows, cols)),
            rows,
            cols,
        }
    }

    pub fn symmetric(&mut self, name: &str, n: usize) -> SymVar {
        SymVar {
            offset: self.declare(name, VarKind::Symmetric(n)),
            n,
        }
    }

    pub fn column_count(&self) -> usize {
        self.columns
    }

    pub fn blocks(&self) -> &[VarBlock] {
        &self.blocks
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn objective(&self) -> &Affine {
        &self.objective
    }

    pub(crate) fn is_symmetric_block(&self, v: SymVar) -> bool {
        self.blocks
            .iter()
            .any(|b| b.offset == v.offset && b.kind == VarKind::Symmetric(v.n))
    }

    pub(crate) fn is_scalar_block(&self, v: ScalarVar) -> bool {
        self.blocks
            .iter()
            .any(|b| b.offset == v.0 && b.kind == VarKind::Scalar)
    }

    pub fn maximize(&mut self, objective: Affine) {
        self.objective = objective;
    }

    fn push(&mut self, name: &str, cone: Cone, rows: Vec<Affine>) {
        self.constraints.push(Constraint {
            name: name.to_string(),
            cone,
            rows,
        });
    }

    /// `expr >= 0`.
    pub fn add_nonneg(&mut self, name: &str, expr: Affine) {
        self.push(name, Cone::Nonnegative, vec![expr]);
    }

    /// `expr == 0`.
    pub fn add_eq(&mut self, name: &str, expr: Affine) {
        self.push(name, Cone::Zero, vec![expr]);
    }

    /// `|rest| <= bound`.
    pub fn add_soc(&mut self, name: &str, bound: Affine, rest: Vec<Affine>) {
        let mut rows = Vec::with_capacity(rest.len() + 1);
        rows.push(bound);
        rows.extend(rest);
        self.push(name, Cone::SecondOrder, rows);
    }

    /// `y exp(x / y) <= z`.
    pub fn add_exp(&mut self, name: &str, x: Affine, y: Affine, z: Affine) {
        self.push(name, Cone::Exponential, vec![x, y, z]);
    }

    /// `m` positive semidefinite.
    pub fn add_psd(&mut self, name: &str, m: SymAffine) {
        self.push(name, Cone::PsdTriangle(m.n), m.entries);
    }

    /// Checks that every term references a declared column and that cone
    /// dimensions are consistent.
    pub fn validate(&self) -> Result<()> {
        let check = |e: &Affine, name: &str| -> Result<()> {
            if let Some(&(c, _)) = e.terms.iter().find(|(c, _)| *c >= self.columns) {
                return Err(Error::Program(format!(
                    "constraint `{name}` references undeclared column {c}"
                )));
            }
            if !e.constant.is_finite() || e.terms.iter().any(|(_, v)| !v.is_finite()) {
                return Err(Error::Program(format!("constraint `{name}` has non-finite data")));
            }
            Ok(())
        };
        check(&self.objective, "objective")?;
        for c in &self.constraints {
            for r in &c.rows {
                check(r, &c.name)?;
            }
            let ok = match c.cone {
                Cone::Zero | Cone::Nonnegative => !c.rows.is_empty(),
                Cone::SecondOrder => !c.rows.is_empty(),
                Cone::Exponential => c.rows.len() == 3,
                Cone::PsdTriangle(n) => n > 0 && c.rows.len() == n * (n + 1) / 2,
            };
            if !ok {
                return Err(Error::Program(format!(
                    "constraint `{}` has {} rows, invalid for a {} cone",
                    c.name,
                    c.rows.len(),
                    c.cone.name()
                )));
            }
        }
        Ok(())
    }
}

impl Solution {
    pub fn scalar(&self, v: ScalarVar) -> f64 {
        self.x[v.0]
    }

    pub fn vector(&self, v: VectorVar) -> DVector<f64> {
        DVector::from_fn(v.len, |i, _| self.x[v.at(i)])
    }

    pub fn matrix(&self, v: MatrixVar) -> DMatrix<f64> {
        DMatrix::from_fn(v.rows, v.cols, |i, j| self.x[v.at(i, j)])
    }

    pub fn symmetric(&self, v: SymVar) -> DMatrix<f64> {
        DMatrix::from_fn(v.n, v.n, |i, j| self.x[v.at(i, j)])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triangle_indexing() {
        assert_eq!(tri_index(0, 0), 0);
        assert_eq!(tri_index(1, 0), 1);
        assert_eq!(tri_index(0, 1), 1);
        assert_eq!(tri_index(2, 1), 4);
        assert_eq!(tri_index(2, 2), 5);
    }

    #[test]
    fn validate_rejects_bad_programs() {
        let mut p = ConicProgram::new();
        let x = p.scalar("x");
        p.add_nonneg("bad", Affine::var(x.0 + 3));
        assert!(p.validate().is_err());

        let mut p = ConicProgram::new();
        let x = p.scalar("x");
        p.add_exp("short", Affine::var(x.0), Affine::constant(1.0), Affine::zero());
        p.constraints[0].rows.pop();
        assert!(p.validate().is_err());
    }

    #[test]
    fn compact_merges_terms() {
        let mut e = Affine::var(2);
        e.add(1, 3.0).add(2, -1.0).add_const(4.0);
        let c = e.compact();
        assert_eq!(c.terms, vec![(1, 3.0)]);
        assert_eq!(c.eval(&[0.0, 2.0, 7.0]), 10.0);
    }
}
