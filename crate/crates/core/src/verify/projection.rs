//! Exact projection of tiny deterministic instances by vertex enumeration
//! (double description) followed by a planar convex hull.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::conic::{self, Affine, ConicProgram, Settings, Status};
use crate::model::ConstraintSystem;
use crate::policies::Ellipsoid;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionBudget {
    /// Largest lifted dimension `nT`.
    pub max_columns: usize,
    /// Largest number of intermediate extreme rays.
    pub max_rays: usize,
}

impl Default for ProjectionBudget {
    fn default() -> Self {
        ProjectionBudget {
            max_columns: 12,
            max_rays: 200_000,
        }
    }
}

/// Convex polygon in `p0` space. For one period it is a segment with its
/// two endpoints stored as `[x, 0]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    pub periods: usize,
    /// Counter-clockwise vertices, not closed.
    pub vertices: Vec<[f64; 2]>,
}

const ZERO: f64 = 1e-9;

impl Polygon {
    /// Outward unit normals `n` and offsets `h` with the polygon equal to
    /// `{x : n . x <= h}`. Only valid in two dimensions.
    pub fn halfspaces(&self) -> Vec<([f64; 2], f64)> {
        let v = &self.vertices;
        let k = v.len();
        (0..k)
            .map(|i| {
                let (a, b) = (v[i], v[(i + 1) % k]);
                let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
                let len = dx.hypot(dy);
                let n = [dy / len, -dx / len];
                (n, n[0] * a[0] + n[1] * a[1])
            })
            .collect()
    }

    pub fn area(&self) -> f64 {
        if self.periods < 2 {
            return 0.0;
        }
        let v = &self.vertices;
        let k = v.len();
        0.5 * (0..k)
            .map(|i| {
                let (a, b) = (v[i], v[(i + 1) % k]);
                a[0] * b[1] - a[1] * b[0]
            })
            .sum::<f64>()
    }

    /// Length of the projected interval when there is a single period.
    pub fn interval(&self) -> Option<(f64, f64)> {
        (self.periods == 1).then(|| (self.vertices[0][0], self.vertices[1][0]))
    }

    /// True when the vertex list is invariant under reflection through a
    /// common center.
    pub fn is_centrally_symmetric(&self, tol: f64) -> bool {
        let v = &self.vertices;
        let k = v.len();
        if self.periods < 2 {
            return true;
        }
        if k % 2 == 1 {
            return false;
        }
        let h = k / 2;
        let c = [(v[0][0] + v[h][0]) / 2.0, (v[0][1] + v[h][1]) / 2.0];
        let scale = v
            .iter()
            .fold(1.0f64, |m, p| m.max(p[0].abs()).max(p[1].abs()));
        (0..h).all(|i| {
            let (a, b) = (v[i], v[i + h]);
            ((a[0] + b[0]) / 2.0 - c[0]).abs() <= tol * scale
                && ((a[1] + b[1]) / 2.0 - c[1]).abs() <= tol * scale
        })
    }

    /// True when the polygon is an axis-aligned rectangle; returns its half
    /// widths.
    pub fn axis_box(&self, tol: f64) -> Option<[f64; 2]> {
        if self.periods < 2 || self.vertices.len() != 4 {
            return None;
        }
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in &self.vertices {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        let scale = 1.0 + (hi[0] - lo[0]).max(hi[1] - lo[1]);
        let on_corner = |p: &[f64; 2]| {
            (0..2).all(|d| (p[d] - lo[d]).abs() <= tol * scale || (p[d] - hi[d]).abs() <= tol * scale)
        };
        self.vertices
            .iter()
            .all(on_corner)
            .then(|| [(hi[0] - lo[0]) / 2.0, (hi[1] - lo[1]) / 2.0])
    }

    /// Smallest signed distance from the ellipsoid to the polygon boundary;
    /// negative when the ellipsoid sticks out.
    pub fn clearance(&self, ell: &Ellipsoid) -> f64 {
        if self.periods == 1 {
            let (lo, hi) = self.interval().unwrap();
            let r = ell.shape[(0, 0)].abs();
            let c = ell.center[0];
            return (hi - (c + r)).min((c - r) - lo);
        }
        self.halfspaces()
            .iter()
            .map(|(n, h)| {
                let nv = DVector::from_column_slice(n);
                let support = nv.dot(&ell.center) + (ell.shape.transpose() * &nv).norm();
                h - support
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// Projection of `{p : W p <= z}` onto `p0 = D p + b` for a deterministic
/// system with one or two periods.
pub fn exact_projection_2d(sys: &ConstraintSystem, budget: &ProjectionBudget) -> Result<Polygon> {
    if sys.periods > 2 {
        return Err(Error::Projection(format!(
            "exact projection supports at most two periods, got {}",
            sys.periods
        )));
    }
    if !sys.is_deterministic() {
        return Err(Error::Projection("exact projection needs a deterministic system".into()));
    }
    let n = sys.column_count();
    if n > budget.max_columns {
        return Err(Error::SizeBudget(format!(
            "exact projection over {n} variables (limit {})",
            budget.max_columns
        )));
    }
    let vertices = enumerate_vertices(&sys.w, &sys.z_nu, budget)?;
    let points: Vec<DVector<f64>> = vertices
        .iter()
        .map(|v| &sys.d * v + &sys.b_nu)
        .collect();
    if sys.periods == 1 {
        let lo = points.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
        let hi = points.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
        return Ok(Polygon {
            periods: 1,
            vertices: vec![[lo, 0.0], [hi, 0.0]],
        });
    }
    let hull = convex_hull(points.iter().map(|p| [p[0], p[1]]).collect());
    if hull.len() < 3 {
        return Err(Error::Projection(format!(
            "projection is degenerate ({} hull vertices)",
            hull.len()
        )));
    }
    Ok(Polygon {
        periods: 2,
        vertices: hull,
    })
}

/// Vertices of the bounded polyhedron `{x : A x <= c}` by the double
/// description method on its homogenization `{(x, t) : A x - c t <= 0,
/// t >= 0}`.
fn enumerate_vertices(
    a: &DMatrix<f64>,
    c: &DVector<f64>,
    budget: &ProjectionBudget,
) -> Result<Vec<DVector<f64>>> {
    let (m, n) = a.shape();
    let dim = n + 1;
    // homogenized rows, each scaled to unit length
    let mut rows: Vec<DVector<f64>> = (0..m)
        .map(|i| {
            let mut r = DVector::zeros(dim);
            r.rows_mut(0, n).copy_from(&a.row(i).transpose());
            r[n] = -c[i];
            r
        })
        .collect();
    let mut t_row = DVector::zeros(dim);
    t_row[n] = -1.0;
    rows.push(t_row);
    for r in &mut rows {
        let norm = r.norm();
        if norm > 0.0 {
            *r /= norm;
        }
    }

    // initial simplicial cone from `dim` independent rows
    let mut chosen: Vec<usize> = Vec::new();
    let mut q_basis: Vec<DVector<f64>> = Vec::new();
    let order: Vec<usize> = std::iter::once(rows.len() - 1).chain(0..rows.len() - 1).collect();
    for &i in &order {
        let mut v = rows[i].clone();
        for q in &q_basis {
            let d = q.dot(&v);
            v.axpy(-d, q, 1.0);
        }
        let norm = v.norm();
        if norm > 1e-9 {
            q_basis.push(v / norm);
            chosen.push(i);
            if chosen.len() == dim {
                break;
            }
        }
    }
    if chosen.len() < dim {
        return Err(Error::Projection(
            "constraint matrix has deficient column rank; the polytope is unbounded".into(),
        ));
    }
    let a_s = DMatrix::from_fn(dim, dim, |i, j| rows[chosen[i]][j]);
    let inv = a_s
        .try_inverse()
        .ok_or_else(|| Error::Projection("singular initial basis".into()))?;
    let mut rays: Vec<DVector<f64>> = (0..dim).map(|j| -inv.column(j).into_owned()).collect();
    for r in &mut rays {
        let s = r.amax();
        *r /= s;
    }
    let mut processed: Vec<usize> = chosen.clone();
    let mut zero_sets: Vec<Vec<bool>> = Vec::new();
    let refresh = |rays: &Vec<DVector<f64>>, processed: &Vec<usize>| -> Vec<Vec<bool>> {
        rays.iter()
            .map(|r| processed.iter().map(|&i| rows[i].dot(r).abs() <= ZERO).collect())
            .collect()
    };
    zero_sets.extend(refresh(&rays, &processed));

    for i in 0..rows.len() {
        if processed.contains(&i) {
            continue;
        }
        let vals: Vec<f64> = rays.iter().map(|r| rows[i].dot(r)).collect();
        let pos: Vec<usize> = (0..rays.len()).filter(|&k| vals[k] > ZERO).collect();
        let neg: Vec<usize> = (0..rays.len()).filter(|&k| vals[k] < -ZERO).collect();
        if pos.is_empty() {
            processed.push(i);
            zero_sets = refresh(&rays, &processed);
            continue;
        }
        let mut next: Vec<DVector<f64>> = (0..rays.len())
            .filter(|&k| vals[k] <= ZERO)
            .map(|k| rays[k].clone())
            .collect();
        for &p in &pos {
            for &q in &neg {
                if !adjacent(p, q, &zero_sets, dim) {
                    continue;
                }
                let mut r = &rays[q] * vals[p] - &rays[p] * vals[q];
                let s = r.amax();
                if s <= 0.0 {
                    continue;
                }
                r /= s;
                next.push(r);
                if next.len() > budget.max_rays {
                    return Err(Error::SizeBudget(format!(
                        "vertex enumeration exceeded {} rays",
                        budget.max_rays
                    )));
                }
            }
        }
        rays = next;
        processed.push(i);
        zero_sets = refresh(&rays, &processed);
        if rays.is_empty() {
            return Err(Error::Projection("feasible set is empty".into()));
        }
    }

    let mut vertices = Vec::new();
    for r in &rays {
        let t = r[n];
        if t <= ZERO {
            return Err(Error::Projection("feasible set is unbounded".into()));
        }
        vertices.push(r.rows(0, n) / t);
    }
    Ok(vertices)
}

/// Combinatorial adjacency test: the common active set must have at least
/// `dim - 2` members and not be contained in the active set of any other ray.
fn adjacent(p: usize, q: usize, zero_sets: &[Vec<bool>], dim: usize) -> bool {
    let common: Vec<usize> = (0..zero_sets[p].len())
        .filter(|&j| zero_sets[p][j] && zero_sets[q][j])
        .collect();
    if common.len() + 2 < dim {
        return false;
    }
    !zero_sets
        .iter()
        .enumerate()
        .any(|(k, z)| k != p && k != q && common.iter().all(|&j| z[j]))
}

/// Andrew's monotone chain; returns counter-clockwise vertices without
/// collinear points.
fn convex_hull(mut pts: Vec<[f64; 2]>) -> Vec<[f64; 2]> {
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    let scale = pts
        .iter()
        .fold(1.0f64, |m, p| m.max(p[0].abs()).max(p[1].abs()));
    let eps = 1e-9 * scale;
    pts.dedup_by(|a, b| (a[0] - b[0]).abs() <= eps && (a[1] - b[1]).abs() <= eps);
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| {
        (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
    };
    let tol = 1e-9 * scale * scale;
    let mut lower: Vec<[f64; 2]> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= tol {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<[f64; 2]> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= tol {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Maximum-volume ellipse inscribed in a polygon, solved directly from its
/// halfspace description: `max log det E` s.t. `|E n_k| + n_k . e <= h_k`.
pub fn mve_in_polygon(poly: &Polygon) -> Result<Ellipsoid> {
    if poly.periods == 1 {
        let (lo, hi) = poly.interval().unwrap();
        let r = (hi - lo) / 2.0;
        return Ok(Ellipsoid {
            shape: DMatrix::from_element(1, 1, r),
            center: DVector::from_element(1, (hi + lo) / 2.0),
            logdet: r.ln(),
        });
    }
    let mut prog = ConicProgram::new();
    let e = prog.symmetric("E", 2);
    let c = prog.vector("e", 2);
    let t = prog.scalar("t");
    conic::add_logdet_epigraph(&mut prog, e, t)?;
    prog.maximize(Affine::var(t.0));
    for (k, (n, h)) in poly.halfspaces().iter().enumerate() {
        let mut bound = Affine::constant(*h);
        bound.add(c.at(0), -n[0]).add(c.at(1), -n[1]);
        let rest = (0..2)
            .map(|col| {
                let mut r = Affine::zero();
                r.add(e.at(0, col), n[0]).add(e.at(1, col), n[1]);
                r
            })
            .collect();
        prog.add_soc(&format!("facet[{k}]"), bound, rest);
    }
    let sol = conic::solve(
        &prog,
        &Settings {
            feas_tol: 1e-9,
            gap_tol: 1e-9,
            ..Settings::default()
        },
    )?;
    if sol.status != Status::Optimal {
        return Err(Error::Solver {
            status: sol.status.as_str().into(),
            detail: "inscribed ellipse of polygon".into(),
        });
    }
    let shape = sol.symmetric(e);
    Ok(Ellipsoid {
        logdet: shape.determinant().ln(),
        shape,
        center: sol.vector(c),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_cube_vertices() {
        let a = DMatrix::from_row_slice(
            6,
            3,
            &[
                1.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 1.0, 0.0,
                0.0, -1.0,
            ],
        );
        let c = DVector::from_vec(vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        let v = enumerate_vertices(&a, &c, &ProjectionBudget::default()).unwrap();
        assert_eq!(v.len(), 8);
        for p in &v {
            assert!(p.iter().all(|x| x.abs() < 1e-12 || (x - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn redundant_rows_do_not_add_vertices() {
        // triangle x >= 0, y >= 0, x + y <= 1 plus the redundant x <= 2
        let a = DMatrix::from_row_slice(4, 2, &[-1.0, 0.0, 0.0, -1.0, 1.0, 1.0, 1.0, 0.0]);
        let c = DVector::from_vec(vec![0.0, 0.0, 1.0, 2.0]);
        let v = enumerate_vertices(&a, &c, &ProjectionBudget::default()).unwrap();
        assert_eq!(v.len(), 3);
    }

    #[test]
    fn hull_drops_interior_and_collinear_points() {
        let hull = convex_hull(vec![
            [0.0, 0.0],
            [1.0, 0.0],
            [0.5, 0.0],
            [1.0, 1.0],
            [0.0, 1.0],
            [0.5, 0.5],
        ]);
        assert_eq!(hull, vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]);
    }

    #[test]
    fn square_halfspaces_and_symmetry() {
        let poly = Polygon {
            periods: 2,
            vertices: vec![[0.0, 0.0], [2.0, 0.0], [2.0, 1.0], [0.0, 1.0]],
        };
        assert!((poly.area() - 2.0).abs() < 1e-12);
        assert!(poly.is_centrally_symmetric(1e-9));
        assert_eq!(poly.axis_box(1e-9), Some([1.0, 0.5]));
        let tri = Polygon {
            periods: 2,
            vertices: vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
        };
        assert!(!tri.is_centrally_symmetric(1e-9));
        for (n, h) in poly.halfspaces() {
            // the center is strictly inside every facet
            assert!(n[0] * 1.0 + n[1] * 0.5 < h);
        }
    }

    #[test]
    fn inscribed_ellipse_of_a_rectangle() {
        let poly = Polygon {
            periods: 2,
            vertices: vec![[-2.0, -1.0], [2.0, -1.0], [2.0, 1.0], [-2.0, 1.0]],
        };
        let e = mve_in_polygon(&poly).unwrap();
        let area = std::f64::consts::PI * e.shape.determinant();
        assert!((area - std::f64::consts::PI * 2.0).abs() < 1e-5, "area {area}");
    }
}
