//! Volume measures. Ellipsoids report both `det E` and the Lebesgue volume
//! `det E * pi^(T/2) / Gamma(T/2 + 1)`; boxes report the product of half
//! widths and the product of widths.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Volume {
    /// `log det E` for ellipsoids, `sum log d_t` (half widths) for boxes.
    pub log_det: f64,
    pub det: f64,
    pub log_lebesgue: f64,
    pub lebesgue: f64,
}

/// `log` of the volume of the unit Euclidean ball in `R^n`.
pub fn log_unit_ball(n: usize) -> f64 {
    let h = n as f64 / 2.0;
    h * std::f64::consts::PI.ln() - ln_gamma(h + 1.0)
}

pub fn ellipsoid(shape: &DMatrix<f64>) -> Volume {
    let det = shape.determinant();
    let log_det = if det > 0.0 { det.ln() } else { f64::NEG_INFINITY };
    let log_lebesgue = log_det + log_unit_ball(shape.nrows());
    Volume {
        log_det,
        det,
        log_lebesgue,
        lebesgue: log_lebesgue.exp(),
    }
}

pub fn boxed(lower: &DVector<f64>, upper: &DVector<f64>) -> Volume {
    let widths = upper - lower;
    let log_lebesgue: f64 = widths.iter().map(|w| w.ln()).sum();
    let log_det = log_lebesgue - widths.len() as f64 * 2f64.ln();
    Volume {
        log_det,
        det: log_det.exp(),
        log_lebesgue,
        lebesgue: log_lebesgue.exp(),
    }
}
