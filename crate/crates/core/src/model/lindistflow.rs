//! Voltage sensitivities of a balanced single-phase radial feeder under the
//! linearized DistFlow approximation. Used to produce network data for test
//! feeders; real multiphase sensitivities are read from the model file.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{Connection, InjectionGroup, Location, NetworkSensitivities};
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LineDoc {
    pub from: usize,
    pub to: usize,
    /// Series resistance, per unit.
    pub r: f64,
    /// Series reactance, per unit.
    pub x: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LinDistFlowDoc {
    pub base_kva: f64,
    #[serde(default = "one")]
    pub v0: f64,
    pub lines: Vec<LineDoc>,
    #[serde(default = "v_lo")]
    pub v_min: f64,
    #[serde(default = "v_hi")]
    pub v_max: f64,
}

fn one() -> f64 {
    1.0
}
fn v_lo() -> f64 {
    0.95
}
fn v_hi() -> f64 {
    1.05
}

/// Builds sensitivities for buses `1..=N` (bus 0 is the substation).
///
/// `|V_j| ~ v0 + sum_k (R_jk p_k + X_jk q_k) / (v0 * base)` where `R_jk`
/// is the resistance shared by the paths from the substation to `j` and `k`
/// and injections are in kW. The substation draw is the negated sum of
/// injections.
pub fn build_sensitivities(doc: &LinDistFlowDoc, periods: usize) -> Result<NetworkSensitivities> {
    let n = doc.lines.len();
    if n == 0 {
        return Err(Error::Schema("lindistflow network has no lines".into()));
    }
    if !(doc.base_kva > 0.0) || !(doc.v0 > 0.0) {
        return Err(Error::Invariant {
            path: "network.lindistflow.base_kva".into(),
            reason: "base power and v0 must be positive".into(),
        });
    }
    // parent[j] = (parent bus, r, x) for j in 1..=n
    let mut parent: Vec<Option<(usize, f64, f64)>> = vec![None; n + 1];
    for (i, line) in doc.lines.iter().enumerate() {
        if line.to == 0 || line.to > n || line.from > n || line.from == line.to {
            return Err(Error::Invariant {
                path: format!("network.lindistflow.lines[{i}]"),
                reason: format!("bus indices must lie in 0..={n} with `to` > 0"),
            });
        }
        if parent[line.to].is_some() {
            return Err(Error::Invariant {
                path: format!("network.lindistflow.lines[{i}].to"),
                reason: "bus fed by more than one line (network must be radial)".into(),
            });
        }
        parent[line.to] = Some((line.from, line.r, line.x));
    }

    // Path from each bus to the root as the list of buses whose feeding line lies on it.
    let mut paths: Vec<Vec<usize>> = vec![Vec::new(); n + 1];
    for j in 1..=n {
        let mut cur = j;
        let mut steps = 0;
        while cur != 0 {
            paths[j].push(cur);
            cur = parent[cur].map(|(p, _, _)| p).ok_or_else(|| Error::Invariant {
                path: "network.lindistflow.lines".into(),
                reason: format!("bus {cur} is not connected to the substation"),
            })?;
            steps += 1;
            if steps > n {
                return Err(Error::Invariant {
                    path: "network.lindistflow.lines".into(),
                    reason: "lines contain a cycle".into(),
                });
            }
        }
    }

    let scale = 1.0 / (doc.v0 * doc.base_kva);
    let mut m_p = DMatrix::zeros(n, n);
    let mut m_q = DMatrix::zeros(n, n);
    for j in 1..=n {
        for k in 1..=n {
            let (mut r, mut x) = (0.0, 0.0);
            for bus in &paths[j] {
                if paths[k].contains(bus) {
                    let (_, rl, xl) = parent[*bus].expect("checked above");
                    r += rl;
                    x += xl;
                }
            }
            m_p[(j - 1, k - 1)] = r * scale;
            m_q[(j - 1, k - 1)] = x * scale;
        }
    }

    Ok(NetworkSensitivities {
        groups: vec![InjectionGroup {
            connection: Connection::Wye,
            points: (1..=n).map(|k| Location::new(k, "a")).collect(),
            m_p,
            m_q,
            g_p: DVector::from_element(n, -1.0),
            g_q: DVector::zeros(n),
        }],
        v_tilde: DVector::from_element(n, doc.v0),
        v_min: DVector::from_element(n, doc.v_min),
        v_max: DVector::from_element(n, doc.v_max),
        c_sub: vec![0.0; periods],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(from: usize, to: usize, r: f64) -> LineDoc {
        LineDoc { from, to, r, x: 2.0 * r }
    }

    #[test]
    fn shared_path_resistance() {
        // 0 - 1 - 2, and 1 - 3
        let doc = LinDistFlowDoc {
            base_kva: 1.0,
            v0: 1.0,
            lines: vec![line(0, 1, 0.1), line(1, 2, 0.2), line(1, 3, 0.3)],
            v_min: 0.95,
            v_max: 1.05,
        };
        let s = build_sensitivities(&doc, 2).unwrap();
        let m = &s.groups[0].m_p;
        assert!((m[(0, 0)] - 0.1).abs() < 1e-15);
        assert!((m[(1, 1)] - 0.3).abs() < 1e-15);
        assert!((m[(1, 2)] - 0.1).abs() < 1e-15);
        assert!((m[(2, 2)] - 0.4).abs() < 1e-15);
        assert_eq!(m, &m.transpose());
        assert!((s.groups[0].m_q[(2, 2)] - 0.8).abs() < 1e-15);
        assert_eq!(s.c_sub.len(), 2);
    }

    #[test]
    fn rejects_meshed_and_disconnected() {
        let mut doc = LinDistFlowDoc {
            base_kva: 1.0,
            v0: 1.0,
            lines: vec![line(0, 1, 0.1), line(2, 1, 0.1)],
            v_min: 0.95,
            v_max: 1.05,
        };
        assert!(build_sensitivities(&doc, 1).is_err());
        doc.lines = vec![line(0, 1, 0.1), line(2, 2, 0.1)];
        assert!(build_sensitivities(&doc, 1).is_err());
        doc.lines = vec![line(2, 1, 0.1), line(1, 2, 0.1)];
        assert!(build_sensitivities(&doc, 1).is_err());
    }
}
