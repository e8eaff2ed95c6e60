//! Seeded synthetic radial feeders for tests, sweeps and benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::lindistflow::{build_sensitivities, LinDistFlowDoc, LineDoc};
use super::{
    FeederModel, Horizon, HvacUnit, LoadCategory, Location, Network, PvUnit, StorageUnit,
    UncertaintyModel, UncontrollableLoad,
};

#[derive(Debug, Clone)]
pub struct FeederSpec {
    /// Buses excluding the substation.
    pub nodes: usize,
    pub periods: usize,
    pub delta: f64,
    pub seed: u64,
    pub storage: usize,
    pub pv: usize,
    pub hvac: usize,
    pub loads: usize,
    pub base_kva: f64,
}

impl Default for FeederSpec {
    fn default() -> Self {
        FeederSpec {
            nodes: 10,
            periods: 4,
            delta: 0.0,
            seed: 0,
            storage: 2,
            pv: 1,
            hvac: 1,
            loads: 4,
            base_kva: 1000.0,
        }
    }
}

/// Random radial feeder with LinDistFlow sensitivities. Every bus feeds from
/// an earlier one, so the tree is connected by construction.
pub fn random_feeder(spec: &FeederSpec) -> FeederModel {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let t_len = spec.periods;
    let lines: Vec<LineDoc> = (1..=spec.nodes)
        .map(|to| {
            let from = if to == 1 { 0 } else { rng.random_range(0..to) };
            let r = rng.random_range(0.004..0.012);
            LineDoc {
                from,
                to,
                r,
                x: r * rng.random_range(1.0..2.0),
            }
        })
        .collect();
    let net = build_sensitivities(
        &LinDistFlowDoc {
            base_kva: spec.base_kva,
            v0: 1.0,
            lines,
            v_min: 0.95,
            v_max: 1.05,
        },
        t_len,
    )
    .expect("generated tree is radial");

    let node = |rng: &mut ChaCha8Rng| Location::new(rng.random_range(1..=spec.nodes), "a");

    let storage = (0..spec.storage)
        .map(|_| {
            let p = rng.random_range(20.0..60.0);
            let cap = p * rng.random_range(1.0..3.0);
            StorageUnit {
                location: node(&mut rng),
                p_min: -p,
                p_max: p,
                power_factor: rng.random_range(0.0..0.3),
                kappa: rng.random_range(0.9..1.0),
                e0: cap * rng.random_range(0.3..0.7),
                e_min: 0.1 * cap,
                e_cap: cap,
            }
        })
        .collect();
    let pv = (0..spec.pv)
        .map(|_| {
            let peak = rng.random_range(20.0..60.0);
            PvUnit {
                location: node(&mut rng),
                p_avail: (0..t_len)
                    .map(|_| peak * rng.random_range(0.5..1.0))
                    .collect(),
                power_factor: rng.random_range(0.0..0.2),
            }
        })
        .collect();
    let hvac = (0..spec.hvac)
        .map(|_| {
            let cap = rng.random_range(5.0..15.0);
            HvacUnit {
                location: node(&mut rng),
                p_cap: vec![cap; t_len],
                power_factor: rng.random_range(0.1..0.3),
                h_min: 20.0,
                h_max: 24.0,
                h_in0: 22.0,
                h_out: (0..t_len).map(|_| rng.random_range(26.0..32.0)).collect(),
                alpha: rng.random_range(0.05..0.2),
                beta: -rng.random_range(0.1..0.3),
            }
        })
        .collect();
    let loads = (0..spec.loads)
        .map(|_| {
            let scale = match rng.random_range(0..3) {
                0 => rng.random_range(2.0..9.0),
                1 => rng.random_range(15.0..60.0),
                _ => rng.random_range(110.0..150.0),
            };
            let p_nominal: Vec<f64> = (0..t_len)
                .map(|_| scale * rng.random_range(0.9..1.1))
                .collect();
            let mean = p_nominal.iter().sum::<f64>() / t_len as f64;
            let category = LoadCategory::from_mean_kw(mean);
            UncontrollableLoad {
                location: node(&mut rng),
                p_nominal,
                power_factor: rng.random_range(0.1..0.4),
                category,
                group: category.index(),
            }
        })
        .collect();

    FeederModel {
        horizon: Horizon {
            periods: t_len,
            tau: 1.0,
        },
        storage,
        pv,
        hvac,
        loads,
        network: Network::Sensitivities(net),
        uncertainty: UncertaintyModel {
            delta: spec.delta,
            groups: 3,
        },
    }
}
