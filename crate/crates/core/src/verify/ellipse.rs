use std::f64::consts::PI;
use std::fmt::Write;

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::policies::{Ellipsoid, Hyperbox};
use crate::{Error, Result};

/// Number of rows in a sampled ellipse boundary.
pub const BOUNDARY_POINTS: usize = 256;

/// Planar ellipse `{center + S u : |u| <= 1}` with `S` symmetric PSD.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ellipse2D {
    pub dims: (usize, usize),
    pub center: [f64; 2],
    /// Row-major symmetric shape matrix.
    pub shape: [[f64; 2]; 2],
    /// Semi-axis lengths, largest first.
    pub semi_axes: [f64; 2],
    /// Angle of the major axis from the first coordinate axis, radians.
    pub angle: f64,
    pub area: f64,
}

fn dims_check(i: usize, j: usize, n: usize) -> Result<()> {
    if i >= j || j >= n {
        return Err(Error::Invariant {
            path: "dims".into(),
            reason: format!("need 0 <= i < j < {n}, got ({i}, {j})"),
        });
    }
    Ok(())
}

/// Projection of an ellipsoid onto coordinates `(i, j)`.
///
/// The image of the unit ball under `P E` is the ellipse whose shape is the
/// symmetric square root of `P E E' P'`.
pub fn project_ellipse(ell: &Ellipsoid, dims: (usize, usize)) -> Result<Ellipse2D> {
    let (i, j) = dims;
    dims_check(i, j, ell.dim())?;
    let pe = (ell.shape.row(i).transpose(), ell.shape.row(j).transpose());
    let gram = Matrix2::new(
        pe.0.dot(&pe.0),
        pe.0.dot(&pe.1),
        pe.1.dot(&pe.0),
        pe.1.dot(&pe.1),
    );
    let eig = gram.symmetric_eigen();
    let (l0, l1) = (eig.eigenvalues[0].max(0.0), eig.eigenvalues[1].max(0.0));
    let v0: Vector2<f64> = eig.eigenvectors.column(0).into();
    let v1: Vector2<f64> = eig.eigenvectors.column(1).into();
    let s = v0 * v0.transpose() * l0.sqrt() + v1 * v1.transpose() * l1.sqrt();
    let (major, minor, dir) = if l0 >= l1 {
        (l0.sqrt(), l1.sqrt(), v0)
    } else {
        (l1.sqrt(), l0.sqrt(), v1)
    };
    let mut angle = dir[1].atan2(dir[0]);
    // axis direction is defined up to sign
    if angle <= -PI / 2.0 {
        angle += PI;
    } else if angle > PI / 2.0 {
        angle -= PI;
    }
    Ok(Ellipse2D {
        dims,
        center: [ell.center[i], ell.center[j]],
        shape: [[s[(0, 0)], s[(0, 1)]], [s[(1, 0)], s[(1, 1)]]],
        semi_axes: [major, minor],
        angle,
        area: PI * s.determinant().abs(),
    })
}

impl Ellipse2D {
    fn shape_matrix(&self) -> Matrix2<f64> {
        Matrix2::new(self.shape[0][0], self.shape[0][1], self.shape[1][0], self.shape[1][1])
    }

    /// Boundary sampled at `theta_k = 2 pi k / (n - 1)`; the last point
    /// repeats the first.
    pub fn boundary(&self, n: usize) -> Vec<(f64, [f64; 2])> {
        let s = self.shape_matrix();
        let c = Vector2::new(self.center[0], self.center[1]);
        (0..n)
            .map(|k| {
                let theta = if k + 1 == n {
                    2.0 * PI
                } else {
                    2.0 * PI * k as f64 / (n - 1) as f64
                };
                let p = c + s * Vector2::new(theta.cos(), theta.sin());
                (theta, [p[0], p[1]])
            })
            .collect()
    }

    /// `theta,x,y` rows of a closed boundary with [`BOUNDARY_POINTS`] points.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("theta,x,y\n");
        let pts = self.boundary(BOUNDARY_POINTS);
        // close exactly on the first point
        let first = pts[0].1;
        for (k, (theta, p)) in pts.iter().enumerate() {
            let p = if k + 1 == pts.len() { first } else { *p };
            writeln!(out, "{theta},{},{}", p[0], p[1]).unwrap();
        }
        out
    }
}

/// Axis-aligned rectangle, the projection of a box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rectangle {
    pub dims: (usize, usize),
    pub lower: [f64; 2],
    pub upper: [f64; 2],
    pub area: f64,
}

pub fn project_box(b: &Hyperbox, dims: (usize, usize)) -> Result<Rectangle> {
    let (i, j) = dims;
    dims_check(i, j, b.dim())?;
    let lower = [b.lower[i], b.lower[j]];
    let upper = [b.upper[i], b.upper[j]];
    Ok(Rectangle {
        dims,
        lower,
        upper,
        area: (upper[0] - lower[0]) * (upper[1] - lower[1]),
    })
}

impl Rectangle {
    /// Corners counter-clockwise from the lower-left, closed.
    pub fn corners(&self) -> [[f64; 2]; 5] {
        let (l, u) = (self.lower, self.upper);
        [l, [u[0], l[1]], u, [l[0], u[1]], l]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("corner,x,y\n");
        for (k, c) in self.corners().iter().enumerate() {
            writeln!(out, "{k},{},{}", c[0], c[1]).unwrap();
        }
        out
    }
}
