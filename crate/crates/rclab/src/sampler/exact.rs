//! Exact laws on small graphs by full enumeration.

use crate::lattice::{Region, NONE};
use crate::rcmodel::{log_weight, BondConfig, BoundaryCondition, ModelError, RCParams};

/// Largest bond count accepted by [`enumerate_exact`].
pub const MAX_EXACT_BONDS: usize = 22;
/// Largest spin count accepted by [`enumerate_ising`].
pub const MAX_ISING_SPINS: usize = 20;

#[derive(Debug, thiserror::Error)]
pub enum ExactError {
    #[error("{n} bonds exceeds the enumeration limit of {max}")]
    TooManyBonds { n: usize, max: usize },
    #[error("{n} spins exceeds the enumeration limit of {max}")]
    TooManySpins { n: usize, max: usize },
    #[error("all configurations have zero weight")]
    ZeroMass,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Probability of every configuration, indexed by bond mask.
#[derive(Clone, Debug)]
pub struct ExactTable {
    n_bonds: usize,
    probs: Vec<f64>,
}

impl ExactTable {
    pub fn n_bonds(&self) -> usize {
        self.n_bonds
    }
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
    pub fn prob(&self, c: &BondConfig) -> f64 {
        self.probs[c.to_mask() as usize]
    }
    /// P(bond e open).
    pub fn marginal(&self, e: usize) -> f64 {
        self.probs.iter().enumerate().filter(|(m, _)| (m >> e) & 1 == 1).map(|(_, p)| p).sum()
    }
    pub fn event_prob(&self, mut event: impl FnMut(&BondConfig) -> bool) -> f64 {
        self.expect(|c| f64::from(u8::from(event(c))))
    }
    pub fn expect(&self, mut f: impl FnMut(&BondConfig) -> f64) -> f64 {
        let mut acc = 0.0;
        for (m, &p) in self.probs.iter().enumerate() {
            if p > 0.0 {
                acc += p * f(&BondConfig::from_mask(self.n_bonds, m as u64));
            }
        }
        acc
    }
    /// Total variation distance to an empirical law given by mask counts.
    pub fn tv_to_counts(&self, counts: &[u64]) -> f64 {
        let n: u64 = counts.iter().sum();
        0.5 * self.probs.iter().zip(counts).map(|(p, &c)| (p - c as f64 / n as f64).abs()).sum::<f64>()
    }
}

/// Exact random-cluster law by summing over all 2^|E| configurations.
pub fn enumerate_exact(region: &Region, params: &RCParams, bc: &BoundaryCondition) -> Result<ExactTable, ExactError> {
    let n = region.n_bonds();
    if n > MAX_EXACT_BONDS {
        return Err(ExactError::TooManyBonds { n, max: MAX_EXACT_BONDS });
    }
    params.intensities(n)?;
    let logs: Vec<f64> = (0..1u64 << n).map(|m| log_weight(region, &BondConfig::from_mask(n, m), params, bc)).collect();
    let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return Err(ExactError::ZeroMass);
    }
    let mut probs: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    let z: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= z);
    Ok(ExactTable { n_bonds: n, probs })
}

/// Spin outside the region, for regions whose bonds reach exterior nodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExteriorSpin {
    /// Fixed +1.
    Plus,
    /// Bonds to the exterior are dropped.
    Free,
}

/// Exact Ising quantities on a region.
#[derive(Clone, Debug)]
pub struct IsingTable {
    /// Probability of each spin assignment of the inner vertices (bit set = +1).
    pub probs: Vec<f64>,
    pub n_spins: usize,
}

impl IsingTable {
    pub fn magnetization(&self, v: u32) -> f64 {
        self.probs.iter().enumerate().map(|(m, p)| if (m >> v) & 1 == 1 { *p } else { -*p }).sum()
    }
    pub fn correlation(&self, u: u32, v: u32) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(m, p)| if ((m >> u) ^ (m >> v)) & 1 == 0 { *p } else { -*p })
            .sum()
    }
}

/// Ising law exp(Σ J_b σ_x σ_y + Σ h_x σ_x) over the inner vertices with
/// per-bond couplings; exterior endpoints carry `exterior`.
pub fn enumerate_ising(
    region: &Region,
    couplings: &[f64],
    field: &[f64],
    exterior: ExteriorSpin,
) -> Result<IsingTable, ExactError> {
    let n = region.n_inner();
    if n > MAX_ISING_SPINS {
        return Err(ExactError::TooManySpins { n, max: MAX_ISING_SPINS });
    }
    let energy = |m: u64| -> f64 {
        let spin = |v: u32| -> f64 {
            if region.is_inner(v) {
                if (m >> v) & 1 == 1 {
                    1.0
                } else {
                    -1.0
                }
            } else {
                match exterior {
                    ExteriorSpin::Plus => 1.0,
                    ExteriorSpin::Free => 0.0,
                }
            }
        };
        let mut h = 0.0;
        for (e, b) in region.bonds().iter().enumerate() {
            h += couplings[e] * spin(b.a) * spin(b.b);
        }
        for (v, f) in field.iter().enumerate().take(n) {
            h += f * spin(v as u32);
        }
        h
    };
    let logs: Vec<f64> = (0..1u64 << n).map(energy).collect();
    let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    let z: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= z);
    Ok(IsingTable { probs, n_spins: n })
}

/// Boundary condition wiring every exterior node into one class (the
/// random-cluster image of a plus exterior).
pub fn plus_exterior_bc(region: &Region) -> BoundaryCondition {
    BoundaryCondition::by_selector(region, |_| Some(0))
}

/// Nodes carrying no spin in the random-cluster picture.
pub fn free_nodes(region: &Region, bc: &BoundaryCondition) -> Vec<u32> {
    let cls = bc.node_classes(region);
    (region.n_inner() as u32..region.n_nodes() as u32).filter(|&v| cls[v as usize] == NONE).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{BondScope, RegionKind};
    use crate::rcmodel::connected;

    #[test]
    fn single_bond_law() {
        let r = Region::custom(1, &[vec![0], vec![1]], BondScope::Internal).unwrap();
        let bc = BoundaryCondition::free(&r);
        let t = enumerate_exact(&r, &RCParams::new(2.0, 0.5).unwrap(), &bc).unwrap();
        assert!((t.marginal(0) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn four_cycle_free_law() {
        // p = 1/2, q = 2: weight 2^k(omega); Z = 16 + 4*8 + 6*4 + 4*2 + 2 = 82
        let pts = vec![vec![0, 0], vec![1, 0], vec![0, 1], vec![1, 1]];
        let r = Region::custom(2, &pts, BondScope::Internal).unwrap();
        let bc = BoundaryCondition::free(&r);
        let t = enumerate_exact(&r, &RCParams::new(2.0, 0.5).unwrap(), &bc).unwrap();
        let total: f64 = t.probs().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        let z = 82.0;
        assert!((t.probs()[0] - 16.0 / z).abs() < 1e-12, "{}", t.probs()[0]);
    }

    #[test]
    fn too_large_is_refused() {
        let r = Region::cuboid(&[0, 0], &[4, 4], RegionKind::Custom, BondScope::Internal).unwrap();
        let bc = BoundaryCondition::free(&r);
        assert!(matches!(
            enumerate_exact(&r, &RCParams::new(2.0, 0.5).unwrap(), &bc),
            Err(ExactError::TooManyBonds { n: 40, .. })
        ));
    }

    #[test]
    fn edwards_sokal_correlation_identity() {
        // <σ_u σ_v> = P(u ↔ v) for free boundary and zero field
        let r = Region::cuboid(&[0, 0], &[2, 2], RegionKind::Custom, BondScope::Internal).unwrap();
        let j = 0.4;
        let couplings = vec![j; r.n_bonds()];
        let ising = enumerate_ising(&r, &couplings, &vec![0.0; 9], ExteriorSpin::Free).unwrap();
        let p = 1.0 - (-2.0 * j).exp();
        let bc = BoundaryCondition::free(&r);
        let t = enumerate_exact(&r, &RCParams::new(2.0, p).unwrap(), &bc).unwrap();
        let pc = t.event_prob(|c| connected(&r, c, &bc, &[0], &[8]));
        assert!((ising.correlation(0, 8) - pc).abs() < 1e-12);
    }

    #[test]
    fn plus_exterior_magnetization() {
        // <σ_v>^+ = P^w(v ↔ exterior)
        let r = Region::cuboid(&[0, 0], &[1, 2], RegionKind::Custom, BondScope::Touching).unwrap();
        let j = 0.3;
        let ising = enumerate_ising(&r, &vec![j; r.n_bonds()], &[0.0; 6], ExteriorSpin::Plus).unwrap();
        let bc = plus_exterior_bc(&r);
        let t = enumerate_exact(&r, &RCParams::new(2.0, 1.0 - (-2.0 * j).exp()).unwrap(), &bc);
        // 6 inner, 10 exterior bonds + 7 inner bonds = 17
        let t = t.unwrap();
        let ext: Vec<u32> = (r.n_inner() as u32..r.n_nodes() as u32).collect();
        let pc = t.event_prob(|c| connected(&r, c, &bc, &[2], &ext));
        assert!((ising.magnetization(2) - pc).abs() < 1e-12);
    }
}
