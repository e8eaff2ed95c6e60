use nalgebra::{DMatrix, DVector};

use super::{FeederModel, Network, NetworkSensitivities};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DeviceKind {
    Storage,
    Pv,
    Hvac,
}

/// Identifies the column of one scalar control: device kind, index within
/// its kind, and period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ColumnKey {
    pub kind: DeviceKind,
    pub index: usize,
    pub period: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConstraintFamily {
    StorageRate,
    StorageEnergy,
    PvOutput,
    HvacPower,
    HvacTemperature,
    VoltageUpper,
    VoltageLower,
}

impl ConstraintFamily {
    pub fn name(self) -> &'static str {
        match self {
            ConstraintFamily::StorageRate => "storage rate",
            ConstraintFamily::StorageEnergy => "storage state of charge",
            ConstraintFamily::PvOutput => "pv output",
            ConstraintFamily::HvacPower => "hvac power",
            ConstraintFamily::HvacTemperature => "hvac indoor temperature",
            ConstraintFamily::VoltageUpper => "voltage upper limit",
            ConstraintFamily::VoltageLower => "voltage lower limit",
        }
    }
}

/// Origin of one inequality row: family, owning device or voltage index,
/// and period.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RowLabel {
    pub family: ConstraintFamily,
    pub owner: usize,
    pub period: usize,
}

impl std::fmt::Display for RowLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} #{} t={}", self.family.name(), self.owner, self.period + 1)
    }
}

/// `W p <= z_theta zeta + z_nu` and `p0 = D p + b_theta zeta + b_nu`.
#[derive(Debug, Clone)]
pub struct ConstraintSystem {
    pub periods: usize,
    /// Uncertainty coordinates per period.
    pub groups: usize,
    pub w: DMatrix<f64>,
    pub z_theta: DMatrix<f64>,
    pub z_nu: DVector<f64>,
    pub d: DMatrix<f64>,
    pub b_theta: DMatrix<f64>,
    pub b_nu: DVector<f64>,
    pub columns: Vec<ColumnKey>,
    pub rows: Vec<RowLabel>,
}

impl ConstraintSystem {
    pub fn row_count(&self) -> usize {
        self.w.nrows()
    }

    pub fn column_count(&self) -> usize {
        self.w.ncols()
    }

    /// Controls per period (`n`).
    pub fn controls_per_period(&self) -> usize {
        self.column_count() / self.periods
    }

    pub fn zeta_len(&self) -> usize {
        self.groups * self.periods
    }

    pub fn column_of(&self, key: ColumnKey) -> Option<usize> {
        self.columns.iter().position(|c| *c == key)
    }

    /// Returns `(z(zeta), b(zeta))`, rejecting any per-period block outside
    /// the unit ball.
    pub fn evaluate_rhs(&self, zeta: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        check_uncertainty(zeta, self.groups, self.periods)?;
        Ok(self.evaluate_rhs_unchecked(zeta))
    }

    pub fn evaluate_rhs_unchecked(&self, zeta: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        (
            &self.z_theta * zeta + &self.z_nu,
            &self.b_theta * zeta + &self.b_nu,
        )
    }

    pub fn is_deterministic(&self) -> bool {
        self.z_theta.iter().all(|v| *v == 0.0) && self.b_theta.iter().all(|v| *v == 0.0)
    }
}

/// Validates length and per-period unit-ball membership of `zeta`.
pub(crate) fn check_uncertainty(zeta: &DVector<f64>, groups: usize, periods: usize) -> Result<()> {
    if zeta.len() != groups * periods {
        return Err(Error::Dimension {
            path: "zeta".into(),
            expected: groups * periods,
            found: zeta.len(),
        });
    }
    for t in 0..periods {
        let norm = zeta.rows(t * groups, groups).norm();
        if norm > 1.0 + 1e-12 {
            return Err(Error::OutsideUncertaintySet { block: t, norm });
        }
    }
    Ok(())
}

/// Per-injection coefficients of a connection point: voltage column for
/// active power (with reactive folded in through the power factor) and
/// substation weight.
struct PointMap {
    voltage: DVector<f64>,
    substation: f64,
}

fn point_map(net: Option<&NetworkSensitivities>, loc: &super::Location, pf: f64) -> PointMap {
    match net {
        None => PointMap {
            voltage: DVector::zeros(0),
            substation: -1.0,
        },
        Some(net) => {
            let (g, k) = net.locate(loc).expect("locations validated");
            let grp = &net.groups[g];
            PointMap {
                voltage: grp.m_p.column(k) + grp.m_q.column(k) * pf,
                substation: grp.g_p[k] + grp.g_q[k] * pf,
            }
        }
    }
}

struct Builder {
    cols: usize,
    zeta_len: usize,
    w: Vec<Vec<f64>>,
    z_theta: Vec<Vec<f64>>,
    z_nu: Vec<f64>,
    rows: Vec<RowLabel>,
}

impl Builder {
    fn push(&mut self, coeffs: Vec<(usize, f64)>, theta: Vec<(usize, f64)>, rhs: f64, label: RowLabel) {
        let mut row = vec![0.0; self.cols];
        for (c, v) in coeffs {
            row[c] += v;
        }
        let mut th = vec![0.0; self.zeta_len];
        for (c, v) in theta {
            th[c] += v;
        }
        self.w.push(row);
        self.z_theta.push(th);
        self.z_nu.push(rhs);
        self.rows.push(label);
    }
}

/// Assembles the compact constraint system of a feeder.
///
/// Columns are device-major (`device * T + t`) over storage, PV, then HVAC
/// units, holding active power only; reactive power follows from the fixed
/// power factors. Storage state of charge and indoor temperature are
/// unrolled into the inequalities. Nodal injection signs: storage and PV
/// inject, HVAC and loads withdraw.
pub fn assemble(feeder: &FeederModel) -> Result<ConstraintSystem> {
    feeder.validate()?;
    let t_len = feeder.horizon.periods;
    let tau = feeder.horizon.tau;
    let n = feeder.device_count();
    if n == 0 {
        return Err(Error::NoDevices);
    }
    let groups = feeder.uncertainty.groups;
    let delta = feeder.uncertainty.delta;
    let zeta_len = groups * t_len;
    let cols = n * t_len;
    let net = match &feeder.network {
        Network::Lossless => None,
        Network::Sensitivities(s) => Some(s),
    };

    let mut columns = Vec::with_capacity(cols);
    // (sign of injection, location, power factor) per device, column order
    let mut injectors = Vec::with_capacity(n);
    for (i, b) in feeder.storage.iter().enumerate() {
        injectors.push((1.0, &b.location, b.power_factor));
        columns.extend((0..t_len).map(|t| ColumnKey {
            kind: DeviceKind::Storage,
            index: i,
            period: t,
        }));
    }
    for (i, p) in feeder.pv.iter().enumerate() {
        injectors.push((1.0, &p.location, p.power_factor));
        columns.extend((0..t_len).map(|t| ColumnKey {
            kind: DeviceKind::Pv,
            index: i,
            period: t,
        }));
    }
    for (i, h) in feeder.hvac.iter().enumerate() {
        injectors.push((-1.0, &h.location, h.power_factor));
        columns.extend((0..t_len).map(|t| ColumnKey {
            kind: DeviceKind::Hvac,
            index: i,
            period: t,
        }));
    }
    let col = |dev: usize, t: usize| dev * t_len + t;

    let mut bld = Builder {
        cols,
        zeta_len,
        w: Vec::new(),
        z_theta: Vec::new(),
        z_nu: Vec::new(),
        rows: Vec::new(),
    };

    let mut dev = 0;
    for (i, b) in feeder.storage.iter().enumerate() {
        for t in 0..t_len {
            let label = RowLabel {
                family: ConstraintFamily::StorageRate,
                owner: i,
                period: t,
            };
            bld.push(vec![(col(dev, t), 1.0)], vec![], b.p_max, label);
            bld.push(vec![(col(dev, t), -1.0)], vec![], -b.p_min, label);
        }
        // e(t) = kappa^t e0 - tau sum_{s<=t} kappa^(t-s) p(s), periods counted from 1
        for t in 0..t_len {
            let decay = b.kappa.powi(t as i32 + 1) * b.e0;
            let coeffs: Vec<_> = (0..=t)
                .map(|s| (col(dev, s), tau * b.kappa.powi((t - s) as i32)))
                .collect();
            let label = RowLabel {
                family: ConstraintFamily::StorageEnergy,
                owner: i,
                period: t,
            };
            // e(t) <= e_cap
            bld.push(
                coeffs.iter().map(|&(c, v)| (c, -v)).collect(),
                vec![],
                b.e_cap - decay,
                label,
            );
            // e(t) >= e_min
            bld.push(coeffs, vec![], decay - b.e_min, label);
        }
        dev += 1;
    }
    for (i, p) in feeder.pv.iter().enumerate() {
        for t in 0..t_len {
            let label = RowLabel {
                family: ConstraintFamily::PvOutput,
                owner: i,
                period: t,
            };
            bld.push(vec![(col(dev, t), 1.0)], vec![], p.p_avail[t], label);
            bld.push(vec![(col(dev, t), -1.0)], vec![], 0.0, label);
        }
        dev += 1;
    }
    for (i, h) in feeder.hvac.iter().enumerate() {
        for t in 0..t_len {
            let label = RowLabel {
                family: ConstraintFamily::HvacPower,
                owner: i,
                period: t,
            };
            bld.push(vec![(col(dev, t), 1.0)], vec![], h.p_cap[t], label);
            bld.push(vec![(col(dev, t), -1.0)], vec![], 0.0, label);
        }
        // H(t) = (1-a)^t H0 + sum_{s<=t} (1-a)^(t-s) (a Hout(s) + tau beta p(s))
        let keep = 1.0 - h.alpha;
        for t in 0..t_len {
            let mut free = keep.powi(t as i32 + 1) * h.h_in0;
            let mut coeffs = Vec::with_capacity(t + 1);
            for s in 0..=t {
                let w = keep.powi((t - s) as i32);
                free += w * h.alpha * h.h_out[s];
                coeffs.push((col(dev, s), w * tau * h.beta));
            }
            let label = RowLabel {
                family: ConstraintFamily::HvacTemperature,
                owner: i,
                period: t,
            };
            bld.push(coeffs.clone(), vec![], h.h_max - free, label);
            bld.push(
                coeffs.into_iter().map(|(c, v)| (c, -v)).collect(),
                vec![],
                free - h.h_min,
                label,
            );
        }
        dev += 1;
    }

    let dev_maps: Vec<PointMap> = injectors
        .iter()
        .map(|(_, loc, pf)| point_map(net, loc, *pf))
        .collect();
    let load_maps: Vec<PointMap> = feeder
        .loads
        .iter()
        .map(|l| point_map(net, &l.location, l.power_factor))
        .collect();

    if let Some(net) = net {
        for t in 0..t_len {
            for j in 0..net.voltage_count() {
                // v_j = sum_dev s * m_j p + v_tilde_j - sum_load m_j pL (1 + delta zeta)
                let coeffs: Vec<_> = injectors
                    .iter()
                    .enumerate()
                    .map(|(d, (sign, _, _))| (col(d, t), sign * dev_maps[d].voltage[j]))
                    .collect();
                let mut load_nominal = 0.0;
                let mut theta = Vec::new();
                for (l, load) in feeder.loads.iter().enumerate() {
                    let drop = load_maps[l].voltage[j] * load.p_nominal[t];
                    load_nominal += drop;
                    theta.push((t * groups + load.group, drop * delta));
                }
                let label = |family| RowLabel {
                    family,
                    owner: j,
                    period: t,
                };
                bld.push(
                    coeffs.clone(),
                    theta.iter().map(|&(c, v)| (c, -v)).collect(),
                    net.v_max[j] - net.v_tilde[j] + load_nominal,
                    label(ConstraintFamily::VoltageUpper),
                );
                bld.push(
                    coeffs.into_iter().map(|(c, v)| (c, -v)).collect(),
                    theta,
                    net.v_tilde[j] - net.v_min[j] - load_nominal,
                    label(ConstraintFamily::VoltageLower),
                );
            }
        }
    }

    let m = bld.w.len();
    let w = DMatrix::from_fn(m, cols, |i, j| bld.w[i][j]);
    let z_theta = DMatrix::from_fn(m, zeta_len, |i, j| bld.z_theta[i][j]);
    let z_nu = DVector::from_vec(bld.z_nu);

    // p0_t = sum_dev g s p(t) - sum_load g pL(t) (1 + delta zeta) + c_t
    let mut d = DMatrix::zeros(t_len, cols);
    let mut b_theta = DMatrix::zeros(t_len, zeta_len);
    let mut b_nu = DVector::zeros(t_len);
    for t in 0..t_len {
        for (dv, (sign, _, _)) in injectors.iter().enumerate() {
            d[(t, col(dv, t))] = sign * dev_maps[dv].substation;
        }
        b_nu[t] = net.map_or(0.0, |n| n.c_sub[t]);
        for (l, load) in feeder.loads.iter().enumerate() {
            let g = load_maps[l].substation;
            b_nu[t] -= g * load.p_nominal[t];
            b_theta[(t, t * groups + load.group)] -= g * load.p_nominal[t] * delta;
        }
    }

    for i in 0..m {
        let zero_row = w.row(i).iter().all(|v| *v == 0.0);
        let worst = z_nu[i]
            - (0..t_len)
                .map(|t| z_theta.view((i, t * groups), (1, groups)).norm())
                .sum::<f64>();
        if zero_row && worst < -1e-9 {
            return Err(Error::StaticInfeasible {
                row: i,
                label: bld.rows[i].to_string(),
            });
        }
    }

    Ok(ConstraintSystem {
        periods: t_len,
        groups,
        w,
        z_theta,
        z_nu,
        d,
        b_theta,
        b_nu,
        columns,
        rows: bld.rows,
    })
}
