//! Feeder, device and uncertainty description plus assembly of the compact
//! constraint system `W p <= z(zeta)`, `p0 = D p + b(zeta)`.

mod assemble;
pub mod lindistflow;
mod schema;
pub mod synthetic;

use nalgebra::{DMatrix, DVector};

pub use assemble::{assemble, ColumnKey, ConstraintFamily, ConstraintSystem, DeviceKind, RowLabel};
pub(crate) use assemble::check_uncertainty;
pub use schema::{build_feeder, read_feeder, MatrixDoc, ModelDocument, SCHEMA_VERSION};

/// Load category boundaries on daily mean nominal demand (kW).
pub const COMMERCIAL_THRESHOLD_KW: f64 = 10.0;
pub const INDUSTRIAL_THRESHOLD_KW: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Horizon {
    pub periods: usize,
    /// Period length in hours.
    pub tau: f64,
}

/// Connection point of a device or load: bus index and phase label
/// (`a`, `b`, `c` for wye, `ab`, `bc`, `ca` for delta).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Location {
    pub node: usize,
    pub phase: String,
}

impl Location {
    pub fn new(node: usize, phase: &str) -> Self {
        Location {
            node,
            phase: phase.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StorageUnit {
    pub location: Location,
    pub p_min: f64,
    pub p_max: f64,
    pub power_factor: f64,
    pub kappa: f64,
    pub e0: f64,
    pub e_min: f64,
    pub e_cap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PvUnit {
    pub location: Location,
    pub p_avail: Vec<f64>,
    pub power_factor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HvacUnit {
    pub location: Location,
    pub p_cap: Vec<f64>,
    pub power_factor: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub h_in0: f64,
    pub h_out: Vec<f64>,
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LoadCategory {
    Residential,
    Commercial,
    Industrial,
}

impl LoadCategory {
    /// Classifies by mean nominal demand; values exactly on a threshold go
    /// to the larger class.
    pub fn from_mean_kw(mean: f64) -> Self {
        if mean >= INDUSTRIAL_THRESHOLD_KW {
            LoadCategory::Industrial
        } else if mean >= COMMERCIAL_THRESHOLD_KW {
            LoadCategory::Commercial
        } else {
            LoadCategory::Residential
        }
    }

    pub fn index(self) -> usize {
        match self {
            LoadCategory::Residential => 0,
            LoadCategory::Commercial => 1,
            LoadCategory::Industrial => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LoadCategory::Residential => "residential",
            LoadCategory::Commercial => "commercial",
            LoadCategory::Industrial => "industrial",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "residential" => Some(LoadCategory::Residential),
            "commercial" => Some(LoadCategory::Commercial),
            "industrial" => Some(LoadCategory::Industrial),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UncontrollableLoad {
    pub location: Location,
    pub p_nominal: Vec<f64>,
    pub power_factor: f64,
    pub category: LoadCategory,
    /// Index of the shared uncertainty coordinate within each period block.
    pub group: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UncertaintyModel {
    pub delta: f64,
    /// Uncertainty coordinates per period (`N_u`).
    pub groups: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connection {
    Wye,
    Delta,
}

/// Sensitivities of one injection group (wye or delta connected points).
#[derive(Debug, Clone, PartialEq)]
pub struct InjectionGroup {
    pub connection: Connection,
    pub points: Vec<Location>,
    /// Voltage sensitivity to active injections, `n_v x points`.
    pub m_p: DMatrix<f64>,
    /// Voltage sensitivity to reactive injections, `n_v x points`.
    pub m_q: DMatrix<f64>,
    /// Substation sensitivity to active injections, one entry per point.
    pub g_p: DVector<f64>,
    pub g_q: DVector<f64>,
}

/// Linear voltage and substation maps, applied identically in every period.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSensitivities {
    pub groups: Vec<InjectionGroup>,
    pub v_tilde: DVector<f64>,
    pub v_min: DVector<f64>,
    pub v_max: DVector<f64>,
    /// Substation offset per period.
    pub c_sub: Vec<f64>,
}

impl NetworkSensitivities {
    pub fn voltage_count(&self) -> usize {
        self.v_tilde.len()
    }

    /// Finds the group and column of a connection point.
    pub fn locate(&self, loc: &Location) -> Option<(usize, usize)> {
        self.groups.iter().enumerate().find_map(|(g, grp)| {
            grp.points.iter().position(|p| p == loc).map(|k| (g, k))
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Network {
    /// No voltage limits; substation draw is the negated sum of injections.
    Lossless,
    Sensitivities(NetworkSensitivities),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeederModel {
    pub horizon: Horizon,
    pub storage: Vec<StorageUnit>,
    pub pv: Vec<PvUnit>,
    pub hvac: Vec<HvacUnit>,
    pub loads: Vec<UncontrollableLoad>,
    pub network: Network,
    pub uncertainty: UncertaintyModel,
}

impl FeederModel {
    pub fn device_count(&self) -> usize {
        self.storage.len() + self.pv.len() + self.hvac.len()
    }

    /// Same feeder with a different uncertainty level.
    pub fn with_delta(&self, delta: f64) -> Self {
        let mut m = self.clone();
        m.uncertainty.delta = delta;
        m
    }

    /// Scales every power and energy quantity by `s`; voltage sensitivities
    /// are divided by `s` so that voltages are unchanged.
    pub fn scaled(&self, s: f64) -> Self {
        let mut m = self.clone();
        for b in &mut m.storage {
            b.p_min *= s;
            b.p_max *= s;
            b.e0 *= s;
            b.e_min *= s;
            b.e_cap *= s;
        }
        for pv in &mut m.pv {
            pv.p_avail.iter_mut().for_each(|v| *v *= s);
        }
        for h in &mut m.hvac {
            h.p_cap.iter_mut().for_each(|v| *v *= s);
            h.beta /= s;
        }
        for l in &mut m.loads {
            l.p_nominal.iter_mut().for_each(|v| *v *= s);
        }
        if let Network::Sensitivities(net) = &mut m.network {
            for g in &mut net.groups {
                g.m_p /= s;
                g.m_q /= s;
            }
            net.c_sub.iter_mut().for_each(|v| *v *= s);
        }
        m
    }

    /// Checks all field invariants, reporting the offending path.
    pub fn validate(&self) -> crate::Result<()> {
        use crate::Error;
        let t = self.horizon.periods;
        let inv = |path: String, reason: &str| Error::Invariant {
            path,
            reason: reason.to_string(),
        };
        let dim = |path: String, found: usize| -> crate::Result<()> {
            if found != t {
                Err(Error::Dimension {
                    path,
                    expected: t,
                    found,
                })
            } else {
                Ok(())
            }
        };
        if t == 0 {
            return Err(inv("horizon.T".into(), "must be at least 1"));
        }
        if !(self.horizon.tau > 0.0) {
            return Err(inv("horizon.tau".into(), "must be positive"));
        }
        for (i, b) in self.storage.iter().enumerate() {
            let p = format!("devices.storage[{i}]");
            if b.p_min > b.p_max {
                return Err(inv(format!("{p}.p_min"), "exceeds p_max"));
            }
            if !(b.kappa > 0.0 && b.kappa <= 1.0) {
                return Err(inv(format!("{p}.kappa"), "must lie in (0, 1]"));
            }
            if !(0.0 <= b.e_min && b.e_min <= b.e0 && b.e0 <= b.e_cap) {
                return Err(inv(format!("{p}.e0"), "requires 0 <= e_min <= e0 <= e_cap"));
            }
        }
        for (i, pv) in self.pv.iter().enumerate() {
            let p = format!("devices.pv[{i}].p_avail");
            dim(p.clone(), pv.p_avail.len())?;
            if pv.p_avail.iter().any(|&v| v < 0.0) {
                return Err(inv(p, "available power must be nonnegative"));
            }
        }
        for (i, h) in self.hvac.iter().enumerate() {
            let p = format!("devices.hvac[{i}]");
            dim(format!("{p}.p_cap"), h.p_cap.len())?;
            dim(format!("{p}.h_out"), h.h_out.len())?;
            if h.p_cap.iter().any(|&v| v < 0.0) {
                return Err(inv(format!("{p}.p_cap"), "capacity must be nonnegative"));
            }
            if !(h.h_min <= h.h_in0 && h.h_in0 <= h.h_max) {
                return Err(inv(format!("{p}.h_in0"), "requires h_min <= h_in0 <= h_max"));
            }
            if !(0.0..=1.0).contains(&h.alpha) {
                return Err(inv(format!("{p}.alpha"), "must lie in [0, 1]"));
            }
        }
        for (i, l) in self.loads.iter().enumerate() {
            dim(format!("loads[{i}].p_nominal"), l.p_nominal.len())?;
            if l.group >= self.uncertainty.groups {
                return Err(inv(
                    format!("loads[{i}].group"),
                    "group index exceeds uncertainty.groups",
                ));
            }
        }
        if !(self.uncertainty.delta >= 0.0) {
            return Err(inv("uncertainty.delta".into(), "must be nonnegative"));
        }
        if self.uncertainty.groups == 0 {
            return Err(inv("uncertainty.groups".into(), "must be at least 1"));
        }
        if let Network::Sensitivities(net) = &self.network {
            let nv = net.voltage_count();
            for (path, len) in [
                ("network.v_min", net.v_min.len()),
                ("network.v_max", net.v_max.len()),
            ] {
                if len != nv {
                    return Err(Error::Dimension {
                        path: path.into(),
                        expected: nv,
                        found: len,
                    });
                }
            }
            if net.v_min.iter().zip(net.v_max.iter()).any(|(lo, hi)| lo >= hi) {
                return Err(inv("network.v_min".into(), "must be below v_max elementwise"));
            }
            if net.c_sub.len() != t {
                return Err(Error::Dimension {
                    path: "network.c_sub".into(),
                    expected: t,
                    found: net.c_sub.len(),
                });
            }
            for (g, grp) in net.groups.iter().enumerate() {
                let np = grp.points.len();
                let checks = [
                    ("m_p.rows", grp.m_p.nrows(), nv),
                    ("m_p.cols", grp.m_p.ncols(), np),
                    ("m_q.rows", grp.m_q.nrows(), nv),
                    ("m_q.cols", grp.m_q.ncols(), np),
                    ("g_p", grp.g_p.len(), np),
                    ("g_q", grp.g_q.len(), np),
                ];
                for (field, found, expected) in checks {
                    if found != expected {
                        return Err(Error::Dimension {
                            path: format!("network.groups[{g}].{field}"),
                            expected,
                            found,
                        });
                    }
                }
            }
            let locs = self
                .storage
                .iter()
                .map(|d| ("devices.storage", &d.location))
                .chain(self.pv.iter().map(|d| ("devices.pv", &d.location)))
                .chain(self.hvac.iter().map(|d| ("devices.hvac", &d.location)))
                .chain(self.loads.iter().map(|d| ("loads", &d.location)));
            for (family, loc) in locs {
                if net.locate(loc).is_none() {
                    return Err(inv(
                        family.to_string(),
                        &format!("no network point at node {} phase {}", loc.node, loc.phase),
                    ));
                }
            }
        }
        Ok(())
    }
}
