//! Influence of the lateral boundary condition on the bottom bond of B_K.

use serde::{Deserialize, Serialize};

use crate::lattice::{block_bounds, BondScope, Region, RegionKind};
use crate::rcmodel::{BoundaryCondition, RCParams};
use crate::sampler::ChainState;
use crate::stats::{pool, Estimate};

use super::estimate::{sample_series, EstimateError, McConfig};

/// B_K = {-K..K}^{d-1} x {0..K} with every bond touching it, the bonds below
/// the bottom face at intensity `s`, and b0 = (0, -e_d).
pub struct MixingSetup {
    pub region: Region,
    pub params: RCParams,
    /// Bottom exterior wired, all other exterior wired too.
    pub wired: BoundaryCondition,
    /// Bottom exterior wired, other exterior free.
    pub free: BoundaryCondition,
    pub b0: usize,
}

pub fn mixing_setup(k: i64, s: f64, p: f64, q: f64, d: usize) -> Result<MixingSetup, EstimateError> {
    let (lo, hi) = block_bounds(k, k, d);
    let region = Region::cuboid(&lo, &hi, RegionKind::Block { ell: k, h: k }, BondScope::Touching)
        .map_err(|e| EstimateError::Failure(e.to_string()))?;
    let mut params = RCParams::new(q, p).map_err(|e| EstimateError::Failure(e.to_string()))?;
    let mut below = vec![0i64; d];
    for v in 0..region.n_inner() as u32 {
        let c = region.coords(v);
        if c[d - 1] == 0 {
            below.copy_from_slice(c);
            below[d - 1] = -1;
            let e = region.bond_at(&below, d - 1).expect("bond below the bottom face");
            params = params.with_override(e, s).map_err(|e| EstimateError::Failure(e.to_string()))?;
        }
    }
    let wired = BoundaryCondition::by_selector(&region, |_| Some(0));
    let free = BoundaryCondition::by_selector(&region, |c| (c[d - 1] < 0).then_some(0));
    let mut origin_below = vec![0i64; d];
    origin_below[d - 1] = -1;
    let b0 = region.bond_at(&origin_below, d - 1).expect("b0") as usize;
    Ok(MixingSetup { region, params, wired, free, b0 })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MixingReport {
    pub k: i64,
    pub s: f64,
    pub p: f64,
    pub q: f64,
    pub wired: Estimate,
    pub free: Estimate,
    /// wired - free.
    pub gap: Estimate,
}

/// Estimates Φ^{s,w}(ω_b0) − Φ^{s,f}(ω_b0) from two independent chains.
/// Each chain records the conditional probability of b0 given the other
/// bonds (s when joined to the bottom class off b0, s/(s+(1-s)q) otherwise).
pub fn mixing_gap(k: i64, s: f64, p: f64, q: f64, d: usize, mc: &McConfig) -> Result<MixingReport, EstimateError> {
    let setup = mixing_setup(k, s, p, q, d)?;
    let b0 = setup.b0;
    let f = move |st: &mut ChainState| vec![st.open_probability(b0)];
    let run = |bc: &BoundaryCondition, chain: u64| -> Result<Estimate, EstimateError> {
        let series = sample_series(&setup.region, &setup.params, bc, mc, chain, &f)?;
        Ok(pool(&series[0], "rao-blackwell"))
    };
    let wired = run(&setup.wired, 0)?;
    let free = run(&setup.free, 1)?;
    let gap = wired.minus(&free);
    Ok(MixingReport { k, s, p, q, wired, free, gap })
}
