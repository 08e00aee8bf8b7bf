//! Read access to bond states by lattice coordinates.

use std::cell::RefCell;
use std::collections::{BTreeSet, HashSet};

use crate::lattice::Region;
use crate::rcmodel::BondConfig;
use crate::rng::hashed_uniform;

/// Bond states addressed by (lower endpoint, positive axis).
pub trait BondField {
    fn dim(&self) -> usize;
    /// State of the bond between `x` and `x + e_axis`; bonds the field does not
    /// know about are closed.
    fn is_open(&self, x: &[i64], axis: usize) -> bool;
}

impl<F: BondField + ?Sized> BondField for &F {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn is_open(&self, x: &[i64], axis: usize) -> bool {
        (**self).is_open(x, axis)
    }
}

/// A configuration on a region.
pub struct ConfigField<'a> {
    pub region: &'a Region,
    pub config: &'a BondConfig,
}

impl<'a> ConfigField<'a> {
    pub fn new(region: &'a Region, config: &'a BondConfig) -> ConfigField<'a> {
        ConfigField { region, config }
    }
}

impl BondField for ConfigField<'_> {
    fn dim(&self) -> usize {
        self.region.dim()
    }
    fn is_open(&self, x: &[i64], axis: usize) -> bool {
        self.region.bond_at(x, axis).map_or(false, |e| self.config.get(e as usize))
    }
}

/// Same as [`ConfigField`] over a plain slice of states.
pub struct SliceField<'a> {
    pub region: &'a Region,
    pub omega: &'a [bool],
}

impl BondField for SliceField<'_> {
    fn dim(&self) -> usize {
        self.region.dim()
    }
    fn is_open(&self, x: &[i64], axis: usize) -> bool {
        self.region.bond_at(x, axis).map_or(false, |e| self.omega[e as usize])
    }
}

/// Bernoulli(p) bond percolation on all of Z^d, generated on demand from a
/// hash of the bond coordinates. This is the exact q = 1 measure on any finite
/// bond set, free of boundary effects.
#[derive(Clone, Debug)]
pub struct HashedField {
    pub seed: u64,
    pub p: f64,
    pub dim: usize,
}

/// Hash key of a bond.
pub fn bond_key(x: &[i64], axis: usize) -> u64 {
    let mut k: u64 = axis as u64 ^ 0x51_7CC1_B727_220A;
    for &c in x {
        k = (k ^ (c as u64)).wrapping_mul(0x100_0000_01B3).rotate_left(23) ^ 0x9E37_79B9;
    }
    k
}

impl BondField for HashedField {
    fn dim(&self) -> usize {
        self.dim
    }
    fn is_open(&self, x: &[i64], axis: usize) -> bool {
        hashed_uniform(self.seed, bond_key(x, axis)) < self.p
    }
}

/// Records every bond read through it.
pub struct LoggingField<F> {
    pub inner: F,
    log: RefCell<BTreeSet<(Vec<i64>, usize)>>,
}

impl<F: BondField> LoggingField<F> {
    pub fn new(inner: F) -> LoggingField<F> {
        LoggingField { inner, log: RefCell::new(BTreeSet::new()) }
    }
    pub fn accessed(&self) -> BTreeSet<(Vec<i64>, usize)> {
        self.log.borrow().clone()
    }
    pub fn clear(&self) {
        self.log.borrow_mut().clear();
    }
}

impl<F: BondField> BondField for LoggingField<F> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn is_open(&self, x: &[i64], axis: usize) -> bool {
        self.log.borrow_mut().insert((x.to_vec(), axis));
        self.inner.is_open(x, axis)
    }
}

/// A field with some bonds forced closed.
pub struct ClosedOverride<F> {
    pub inner: F,
    pub closed: HashSet<(Vec<i64>, usize)>,
}

impl<F: BondField> BondField for ClosedOverride<F> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn is_open(&self, x: &[i64], axis: usize) -> bool {
        !self.closed.contains(&(x.to_vec(), axis)) && self.inner.is_open(x, axis)
    }
}

/// Every bond open.
pub struct AllOpen(pub usize);

impl BondField for AllOpen {
    fn dim(&self) -> usize {
        self.0
    }
    fn is_open(&self, _: &[i64], _: usize) -> bool {
        true
    }
}

/// Canonical (lower endpoint, axis) of the bond joining two neighbours.
pub fn canonical_bond(a: &[i64], b: &[i64]) -> (Vec<i64>, usize) {
    let axis = (0..a.len()).find(|&i| a[i] != b[i]).expect("distinct neighbours");
    if a[axis] < b[axis] {
        (a.to_vec(), axis)
    } else {
        (b.to_vec(), axis)
    }
}
