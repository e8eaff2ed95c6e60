#![allow(dead_code)]

use flexhull::model::{
    assemble, ConstraintSystem, FeederModel, Horizon, HvacUnit, LoadCategory, Location, Network,
    PvUnit, StorageUnit, UncertaintyModel, UncontrollableLoad,
};
use flexhull::reduction::{decompose, reduce, NullspaceBasis, ReducedSystem};

pub struct Instance {
    pub name: String,
    pub feeder: FeederModel,
    pub sys: ConstraintSystem,
    pub basis: NullspaceBasis,
    pub red: ReducedSystem,
}

pub fn prepare(name: impl Into<String>, feeder: FeederModel) -> Instance {
    let sys = assemble(&feeder).expect("assemble");
    let basis = decompose(&sys).expect("decompose");
    let red = reduce(&sys, &basis).expect("reduce");
    Instance {
        name: name.into(),
        feeder,
        sys,
        basis,
        red,
    }
}

/// Lossless storage with unit efficiency and symmetric rate limits.
pub fn storage(rate: f64, e0: f64, cap: f64) -> StorageUnit {
    StorageUnit {
        location: Location::new(1, "a"),
        p_min: -rate,
        p_max: rate,
        power_factor: 0.0,
        kappa: 1.0,
        e0,
        e_min: 0.0,
        e_cap: cap,
    }
}

pub fn pv(avail: Vec<f64>) -> PvUnit {
    PvUnit {
        location: Location::new(1, "a"),
        p_avail: avail,
        power_factor: 0.0,
    }
}

pub fn hvac(periods: usize, cap: f64, h_out: f64) -> HvacUnit {
    HvacUnit {
        location: Location::new(1, "a"),
        p_cap: vec![cap; periods],
        power_factor: 0.0,
        h_min: 20.0,
        h_max: 24.0,
        h_in0: 22.0,
        h_out: vec![h_out; periods],
        alpha: 0.1,
        beta: -0.5,
    }
}

pub fn residential_load(p: Vec<f64>) -> UncontrollableLoad {
    UncontrollableLoad {
        location: Location::new(1, "a"),
        p_nominal: p,
        power_factor: 0.0,
        category: LoadCategory::Residential,
        group: 0,
    }
}

pub fn lossless(periods: usize) -> FeederModel {
    FeederModel {
        horizon: Horizon { periods, tau: 1.0 },
        storage: vec![],
        pv: vec![],
        hvac: vec![],
        loads: vec![],
        network: Network::Lossless,
        uncertainty: UncertaintyModel {
            delta: 0.0,
            groups: 1,
        },
    }
}

/// One storage unit, one period, `p in [-0.5, 0.5]`.
pub fn single_storage() -> FeederModel {
    let mut f = lossless(1);
    f.storage.push(storage(0.5, 0.5, 1.0));
    f
}

/// One storage unit with rate 1 and a unit load whose demand is uncertain
/// by `delta`.
pub fn robust_storage(delta: f64) -> FeederModel {
    let mut f = lossless(1);
    f.storage.push(storage(1.0, 1.0, 2.0));
    f.loads.push(residential_load(vec![1.0]));
    f.uncertainty.delta = delta;
    f
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}
