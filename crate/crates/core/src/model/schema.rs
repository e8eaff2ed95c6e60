use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{
    lindistflow, Connection, FeederModel, Horizon, HvacUnit, InjectionGroup, LoadCategory,
    Location, Network, NetworkSensitivities, PvUnit, StorageUnit, UncertaintyModel,
    UncontrollableLoad,
};
use crate::{Error, Result};

pub const SCHEMA_VERSION: &str = "flexhull/1";

/// Dense matrix in row-major order with explicit shape.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MatrixDoc {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl MatrixDoc {
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        let data = (0..m.nrows())
            .flat_map(|i| (0..m.ncols()).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)])
            .collect();
        MatrixDoc {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }

    fn to_matrix(&self, path: &str) -> Result<DMatrix<f64>> {
        if self.data.len() != self.rows * self.cols {
            return Err(Error::Dimension {
                path: format!("{path}.data"),
                expected: self.rows * self.cols,
                found: self.data.len(),
            });
        }
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &self.data))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub schema: String,
    pub horizon: HorizonDoc,
    #[serde(default)]
    pub devices: DevicesDoc,
    #[serde(default)]
    pub loads: Vec<LoadDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub network: Option<NetworkDoc>,
    #[serde(default)]
    pub uncertainty: UncertaintyDoc,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct HorizonDoc {
    #[serde(rename = "T")]
    pub periods: usize,
    pub tau: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DevicesDoc {
    #[serde(default)]
    pub storage: Vec<StorageDoc>,
    #[serde(default)]
    pub pv: Vec<PvDoc>,
    #[serde(default)]
    pub hvac: Vec<HvacDoc>,
}

fn default_phase() -> String {
    "a".to_string()
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct StorageDoc {
    pub node: usize,
    #[serde(default = "default_phase")]
    pub phase: String,
    pub p_min: f64,
    pub p_max: f64,
    #[serde(default)]
    pub power_factor: f64,
    pub kappa: f64,
    pub e0: f64,
    pub e_min: f64,
    pub e_cap: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PvDoc {
    pub node: usize,
    #[serde(default = "default_phase")]
    pub phase: String,
    pub p_avail: Vec<f64>,
    #[serde(default)]
    pub power_factor: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct HvacDoc {
    pub node: usize,
    #[serde(default = "default_phase")]
    pub phase: String,
    pub p_cap: Vec<f64>,
    #[serde(default)]
    pub power_factor: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub h_in0: f64,
    pub h_out: Vec<f64>,
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LoadDoc {
    pub node: usize,
    #[serde(default = "default_phase")]
    pub phase: String,
    pub p_nominal: Vec<f64>,
    #[serde(default)]
    pub power_factor: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "lowercase")]
pub enum NetworkDoc {
    Sensitivities(SensitivitiesDoc),
    Lindistflow(lindistflow::LinDistFlowDoc),
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PointDoc {
    pub node: usize,
    pub phase: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct InjectionGroupDoc {
    pub points: Vec<PointDoc>,
    pub m_p: MatrixDoc,
    pub m_q: MatrixDoc,
    pub g_p: Vec<f64>,
    pub g_q: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SensitivitiesDoc {
    pub wye: InjectionGroupDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<InjectionGroupDoc>,
    pub v_tilde: Vec<f64>,
    pub v_min: Vec<f64>,
    pub v_max: Vec<f64>,
    /// Scalar (same every period) or one value per period.
    #[serde(default)]
    pub c_sub: CSubDoc,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum CSubDoc {
    Scalar(f64),
    PerPeriod(Vec<f64>),
}

impl Default for CSubDoc {
    fn default() -> Self {
        CSubDoc::Scalar(0.0)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct UncertaintyDoc {
    #[serde(default)]
    pub delta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groups: Option<usize>,
}

impl Default for UncertaintyDoc {
    fn default() -> Self {
        UncertaintyDoc {
            delta: 0.0,
            groups: None,
        }
    }
}

/// Reads and validates a model file.
pub fn read_feeder(path: &Path) -> Result<FeederModel> {
    let text = std::fs::read_to_string(path)?;
    let doc: ModelDocument = serde_json::from_str(&text)?;
    build_feeder(&doc)
}

/// Converts a parsed document into a validated [`FeederModel`].
pub fn build_feeder(doc: &ModelDocument) -> Result<FeederModel> {
    if doc.schema != SCHEMA_VERSION {
        return Err(Error::Schema(format!(
            "unsupported schema `{}` (expected `{SCHEMA_VERSION}`)",
            doc.schema
        )));
    }
    let horizon = Horizon {
        periods: doc.horizon.periods,
        tau: doc.horizon.tau,
    };
    let groups = doc.uncertainty.groups.unwrap_or(3);

    let storage = doc
        .devices
        .storage
        .iter()
        .map(|s| StorageUnit {
            location: Location::new(s.node, &s.phase),
            p_min: s.p_min,
            p_max: s.p_max,
            power_factor: s.power_factor,
            kappa: s.kappa,
            e0: s.e0,
            e_min: s.e_min,
            e_cap: s.e_cap,
        })
        .collect();
    let pv = doc
        .devices
        .pv
        .iter()
        .map(|p| PvUnit {
            location: Location::new(p.node, &p.phase),
            p_avail: p.p_avail.clone(),
            power_factor: p.power_factor,
        })
        .collect();
    let hvac = doc
        .devices
        .hvac
        .iter()
        .map(|h| HvacUnit {
            location: Location::new(h.node, &h.phase),
            p_cap: h.p_cap.clone(),
            power_factor: h.power_factor,
            h_min: h.h_min,
            h_max: h.h_max,
            h_in0: h.h_in0,
            h_out: h.h_out.clone(),
            alpha: h.alpha,
            beta: h.beta,
        })
        .collect();

    let mut loads = Vec::with_capacity(doc.loads.len());
    for (i, l) in doc.loads.iter().enumerate() {
        let category = match &l.category {
            Some(name) => LoadCategory::parse(name).ok_or_else(|| Error::Invariant {
                path: format!("loads[{i}].category"),
                reason: format!("unknown category `{name}`"),
            })?,
            None => {
                let mean = if l.p_nominal.is_empty() {
                    0.0
                } else {
                    l.p_nominal.iter().sum::<f64>() / l.p_nominal.len() as f64
                };
                LoadCategory::from_mean_kw(mean)
            }
        };
        let group = l
            .group
            .unwrap_or(if groups == 1 { 0 } else { category.index() });
        loads.push(UncontrollableLoad {
            location: Location::new(l.node, &l.phase),
            p_nominal: l.p_nominal.clone(),
            power_factor: l.power_factor,
            category,
            group,
        });
    }

    let network = match &doc.network {
        None => Network::Lossless,
        Some(NetworkDoc::Sensitivities(s)) => {
            Network::Sensitivities(sensitivities_from_doc(s, horizon.periods)?)
        }
        Some(NetworkDoc::Lindistflow(l)) => {
            Network::Sensitivities(lindistflow::build_sensitivities(l, horizon.periods)?)
        }
    };

    let model = FeederModel {
        horizon,
        storage,
        pv,
        hvac,
        loads,
        network,
        uncertainty: UncertaintyModel {
            delta: doc.uncertainty.delta,
            groups,
        },
    };
    model.validate()?;
    Ok(model)
}

fn group_from_doc(g: &InjectionGroupDoc, connection: Connection, path: &str) -> Result<InjectionGroup> {
    Ok(InjectionGroup {
        connection,
        points: g.points.iter().map(|p| Location::new(p.node, &p.phase)).collect(),
        m_p: g.m_p.to_matrix(&format!("{path}.m_p"))?,
        m_q: g.m_q.to_matrix(&format!("{path}.m_q"))?,
        g_p: DVector::from_vec(g.g_p.clone()),
        g_q: DVector::from_vec(g.g_q.clone()),
    })
}

fn sensitivities_from_doc(s: &SensitivitiesDoc, periods: usize) -> Result<NetworkSensitivities> {
    let mut groups = vec![group_from_doc(&s.wye, Connection::Wye, "network.sensitivities.wye")?];
    if let Some(d) = &s.delta {
        groups.push(group_from_doc(d, Connection::Delta, "network.sensitivities.delta")?);
    }
    let c_sub = match &s.c_sub {
        CSubDoc::Scalar(c) => vec![*c; periods],
        CSubDoc::PerPeriod(v) => v.clone(),
    };
    Ok(NetworkSensitivities {
        groups,
        v_tilde: DVector::from_vec(s.v_tilde.clone()),
        v_min: DVector::from_vec(s.v_min.clone()),
        v_max: DVector::from_vec(s.v_max.clone()),
        c_sub,
    })
}

fn group_to_doc(g: &InjectionGroup) -> InjectionGroupDoc {
    InjectionGroupDoc {
        points: g
            .points
            .iter()
            .map(|p| PointDoc {
                node: p.node,
                phase: p.phase.clone(),
            })
            .collect(),
        m_p: MatrixDoc::from_matrix(&g.m_p),
        m_q: MatrixDoc::from_matrix(&g.m_q),
        g_p: g.g_p.iter().copied().collect(),
        g_q: g.g_q.iter().copied().collect(),
    }
}

impl FeederModel {
    /// Document form of the model; networks are always written as explicit
    /// sensitivities.
    pub fn to_document(&self) -> ModelDocument {
        let network = match &self.network {
            Network::Lossless => None,
            Network::Sensitivities(net) => {
                let wye = net
                    .groups
                    .iter()
                    .find(|g| g.connection == Connection::Wye)
                    .map(group_to_doc)
                    .unwrap_or(InjectionGroupDoc {
                        points: vec![],
                        m_p: MatrixDoc {
                            rows: net.voltage_count(),
                            cols: 0,
                            data: vec![],
                        },
                        m_q: MatrixDoc {
                            rows: net.voltage_count(),
                            cols: 0,
                            data: vec![],
                        },
                        g_p: vec![],
                        g_q: vec![],
                    });
                let delta = net
                    .groups
                    .iter()
                    .find(|g| g.connection == Connection::Delta)
                    .map(group_to_doc);
                Some(NetworkDoc::Sensitivities(SensitivitiesDoc {
                    wye,
                    delta,
                    v_tilde: net.v_tilde.iter().copied().collect(),
                    v_min: net.v_min.iter().copied().collect(),
                    v_max: net.v_max.iter().copied().collect(),
                    c_sub: CSubDoc::PerPeriod(net.c_sub.clone()),
                }))
            }
        };
        ModelDocument {
            schema: SCHEMA_VERSION.to_string(),
            horizon: HorizonDoc {
                periods: self.horizon.periods,
                tau: self.horizon.tau,
            },
            devices: DevicesDoc {
                storage: self
                    .storage
                    .iter()
                    .map(|s| StorageDoc {
                        node: s.location.node,
                        phase: s.location.phase.clone(),
                        p_min: s.p_min,
                        p_max: s.p_max,
                        power_factor: s.power_factor,
                        kappa: s.kappa,
                        e0: s.e0,
                        e_min: s.e_min,
                        e_cap: s.e_cap,
                    })
                    .collect(),
                pv: self
                    .pv
                    .iter()
                    .map(|p| PvDoc {
                        node: p.location.node,
                        phase: p.location.phase.clone(),
                        p_avail: p.p_avail.clone(),
                        power_factor: p.power_factor,
                    })
                    .collect(),
                hvac: self
                    .hvac
                    .iter()
                    .map(|h| HvacDoc {
                        node: h.location.node,
                        phase: h.location.phase.clone(),
                        p_cap: h.p_cap.clone(),
                        power_factor: h.power_factor,
                        h_min: h.h_min,
                        h_max: h.h_max,
                        h_in0: h.h_in0,
                        h_out: h.h_out.clone(),
                        alpha: h.alpha,
                        beta: h.beta,
                    })
                    .collect(),
            },
            loads: self
                .loads
                .iter()
                .map(|l| LoadDoc {
                    node: l.location.node,
                    phase: l.location.phase.clone(),
                    p_nominal: l.p_nominal.clone(),
                    power_factor: l.power_factor,
                    category: Some(l.category.name().to_string()),
                    group: Some(l.group),
                })
                .collect(),
            network,
            uncertainty: UncertaintyDoc {
                delta: self.uncertainty.delta,
                groups: Some(self.uncertainty.groups),
            },
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("model serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<FeederModel> {
        let doc: ModelDocument = serde_json::from_str(text)?;
        build_feeder(&doc)
    }

    const MINIMAL: &str = r#"{
        "schema": "flexhull/1",
        "horizon": {"T": 1, "tau": 1.0},
        "devices": {"storage": [{"node": 1, "p_min": -1, "p_max": 1, "kappa": 1,
                                 "e0": 0.5, "e_min": 0, "e_cap": 1}]}
    }"#;

    #[test]
    fn minimal_document() {
        let m = parse(MINIMAL).unwrap();
        assert_eq!(m.device_count(), 1);
        assert!(m.loads.is_empty());
        assert_eq!(m.network, Network::Lossless);
        assert_eq!(m.uncertainty.groups, 3);
    }

    #[test]
    fn load_category_from_mean() {
        let text = r#"{
            "schema": "flexhull/1",
            "horizon": {"T": 2, "tau": 1.0},
            "devices": {"pv": [{"node": 1, "p_avail": [1, 1]}]},
            "loads": [{"node": 1, "p_nominal": [40, 60]},
                      {"node": 1, "p_nominal": [9, 9]},
                      {"node": 1, "p_nominal": [10, 10]},
                      {"node": 1, "p_nominal": [100, 100]},
                      {"node": 1, "p_nominal": [500, 500], "category": "residential"}]
        }"#;
        let m = parse(text).unwrap();
        let cats: Vec<_> = m.loads.iter().map(|l| l.category).collect();
        assert_eq!(
            cats,
            vec![
                LoadCategory::Commercial,
                LoadCategory::Residential,
                LoadCategory::Commercial,
                LoadCategory::Industrial,
                LoadCategory::Residential,
            ]
        );
        assert_eq!(m.loads[0].group, 1);
    }

    #[test]
    fn short_load_profile_is_rejected() {
        let text = r#"{
            "schema": "flexhull/1",
            "horizon": {"T": 4, "tau": 1.0},
            "devices": {"pv": [{"node": 1, "p_avail": [1, 1, 1, 1]}]},
            "loads": [{"node": 1, "p_nominal": [1, 2, 3]}]
        }"#;
        match parse(text) {
            Err(Error::Dimension {
                path,
                expected,
                found,
            }) => {
                assert_eq!(path, "loads[0].p_nominal");
                assert_eq!((expected, found), (4, 3));
            }
            other => panic!("expected dimension error, got {other:?}"),
        }
    }

    #[test]
    fn wrong_schema_and_bad_invariants() {
        let bad = MINIMAL.replace("flexhull/1", "flexhull/0");
        assert!(matches!(parse(&bad), Err(Error::Schema(_))));
        let bad = MINIMAL.replace("\"kappa\": 1", "\"kappa\": 0");
        match parse(&bad) {
            Err(Error::Invariant { path, .. }) => assert_eq!(path, "devices.storage[0].kappa"),
            other => panic!("{other:?}"),
        }
        let bad = MINIMAL.replace("\"e0\": 0.5", "\"e0\": 1.5");
        assert!(matches!(parse(&bad), Err(Error::Invariant { .. })));
        let bad = MINIMAL.replace("\"node\": 1,", "\"node\": 1, \"colour\": 3,");
        assert!(matches!(parse(&bad), Err(Error::Json(_))));
    }

    #[test]
    fn document_round_trip_preserves_model() {
        let m = crate::model::synthetic::random_feeder(&crate::model::synthetic::FeederSpec {
            nodes: 6,
            periods: 3,
            delta: 0.1,
            seed: 4,
            ..Default::default()
        });
        let text = m.to_json();
        let back = parse(&text).unwrap();
        assert_eq!(back.storage, m.storage);
        assert_eq!(back.loads, m.loads);
        if let (Network::Sensitivities(a), Network::Sensitivities(b)) = (&back.network, &m.network) {
            assert_eq!(a.v_min, b.v_min);
            assert!((&a.groups[0].m_p - &b.groups[0].m_p).abs().max() == 0.0);
        } else {
            panic!("network lost");
        }
    }
}
