//! Seed and occupancy events of a (possibly rotated and translated) block.

use crate::lattice::{for_each_point, side_subfacets, top_subfacets, PlacedBlock, Subfacet};

use super::field::{canonical_bond, BondField};

/// Bond states of one block read once, in block-local coordinates, together
/// with the open cluster of the bottom plaque b_K(0) inside E_{B*}.
///
/// Exactly the bonds with both endpoints in the block are read.
pub struct BlockScan {
    pub ell: i64,
    pub h: i64,
    pub k: i64,
    d: usize,
    shape: Vec<usize>,
    open: Vec<bool>,
    reached: Vec<bool>,
}

impl BlockScan {
    pub fn new<F: BondField + ?Sized>(field: &F, block: &PlacedBlock, k: i64) -> BlockScan {
        let d = block.dim();
        let (ell, h) = (block.ell, block.h);
        let mut shape = vec![(2 * ell + 1) as usize; d];
        shape[d - 1] = (h + 1) as usize;
        let n: usize = shape.iter().product();
        let mut open = vec![false; n * d];
        let mut lo = vec![-ell; d];
        lo[d - 1] = 0;
        let mut hi = vec![ell; d];
        hi[d - 1] = h;
        let mut g0 = vec![0; d];
        let mut g1 = vec![0; d];
        let mut v = vec![0; d];
        let mut idx = 0;
        for_each_point(&lo, &hi, |u| {
            v.copy_from_slice(u);
            for a in 0..d {
                if u[a] == hi[a] {
                    continue;
                }
                v[a] += 1;
                block.to_global_into(u, &mut g0);
                block.to_global_into(&v, &mut g1);
                v[a] -= 1;
                let (x, axis) = canonical_bond(&g0, &g1);
                open[idx * d + a] = field.is_open(&x, axis);
            }
            idx += 1;
        });
        let mut scan = BlockScan { ell, h, k, d, shape, open, reached: vec![false; n] };
        scan.grow();
        scan
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    fn lin(&self, u: &[i64]) -> usize {
        let mut i = 0usize;
        for a in 0..self.d {
            let o = if a == self.d - 1 { u[a] } else { u[a] + self.ell };
            i = i * self.shape[a] + o as usize;
        }
        i
    }

    fn inside(&self, u: &[i64]) -> bool {
        (0..self.d).all(|a| if a == self.d - 1 { (0..=self.h).contains(&u[a]) } else { u[a].abs() <= self.ell })
    }

    fn interior(&self, u: &[i64]) -> bool {
        (0..self.d).all(|a| if a == self.d - 1 { 1 <= u[a] && u[a] < self.h } else { u[a].abs() < self.ell })
    }

    /// State of the local bond from `u` to `u + e_axis`.
    pub fn open_local(&self, u: &[i64], axis: usize) -> bool {
        let mut v = u.to_vec();
        v[axis] += 1;
        self.inside(u) && self.inside(&v) && self.open[self.lin(u) * self.d + axis]
    }

    fn grow(&mut self) {
        let d = self.d;
        let mut stack: Vec<Vec<i64>> = Vec::new();
        let mut plo = vec![-self.k; d];
        let mut phi = vec![self.k; d];
        plo[d - 1] = 0;
        phi[d - 1] = 0;
        for_each_point(&plo, &phi, |u| stack.push(u.to_vec()));
        for u in &stack {
            if self.inside(u) {
                let i = self.lin(u);
                self.reached[i] = true;
            }
        }
        stack.retain(|u| self.inside(u));
        while let Some(u) = stack.pop() {
            let ui = self.interior(&u);
            for a in 0..d {
                for s in [-1i64, 1] {
                    let mut w = u.clone();
                    w[a] += s;
                    if !self.inside(&w) || !(ui || self.interior(&w)) {
                        continue;
                    }
                    let lower = if s > 0 { &u } else { &w };
                    if !self.open[self.lin(lower) * d + a] {
                        continue;
                    }
                    let wi = self.lin(&w);
                    if !self.reached[wi] {
                        self.reached[wi] = true;
                        stack.push(w);
                    }
                }
            }
        }
    }

    /// Whether local site `u` is joined to b_K(0) strictly within the block.
    pub fn reached(&self, u: &[i64]) -> bool {
        self.inside(u) && self.reached[self.lin(u)]
    }

    /// Y: top-face sites connected to b_K(0) strictly within the block.
    pub fn count_y(&self) -> usize {
        let d = self.d;
        let mut lo = vec![-self.ell; d];
        let mut hi = vec![self.ell; d];
        lo[d - 1] = self.h;
        hi[d - 1] = self.h;
        let mut c = 0;
        for_each_point(&lo, &hi, |u| c += usize::from(self.reached(u)));
        c
    }

    /// X: side-face sites connected to b_K(0) strictly within the block.
    pub fn count_x(&self) -> usize {
        let d = self.d;
        let mut lo = vec![-self.ell; d];
        let mut hi = vec![self.ell; d];
        lo[d - 1] = 0;
        hi[d - 1] = self.h;
        let mut c = 0;
        for_each_point(&lo, &hi, |u| {
            if u[..d - 1].iter().any(|x| x.abs() == self.ell) {
                c += usize::from(self.reached(u));
            }
        });
        c
    }

    fn plaque_bounds(&self, center: &[i64], normal: usize) -> (Vec<i64>, Vec<i64>) {
        let mut lo: Vec<i64> = center.iter().map(|c| c - self.k).collect();
        let mut hi: Vec<i64> = center.iter().map(|c| c + self.k).collect();
        lo[normal] = center[normal];
        hi[normal] = center[normal];
        (lo, hi)
    }

    /// Whether every bond of the plaque b^normal_K(center) is open.
    pub fn seed_open(&self, center: &[i64], normal: usize) -> bool {
        let (lo, hi) = self.plaque_bounds(center, normal);
        if !self.inside(&lo) || !self.inside(&hi) {
            return false;
        }
        let mut ok = true;
        for_each_point(&lo, &hi, |u| {
            if !ok {
                return;
            }
            for a in 0..self.d {
                if a != normal && u[a] < hi[a] && !self.open[self.lin(u) * self.d + a] {
                    ok = false;
                }
            }
        });
        ok
    }

    fn seed_touches(&self, center: &[i64], normal: usize) -> bool {
        let (lo, hi) = self.plaque_bounds(center, normal);
        let mut hit = false;
        for_each_point(&lo, &hi, |u| hit = hit || self.reached(u));
        hit
    }

    fn unlin(&self, mut i: usize) -> Vec<i64> {
        let mut u = vec![0i64; self.d];
        for a in (0..self.d).rev() {
            let c = (i % self.shape[a]) as i64;
            i /= self.shape[a];
            u[a] = if a == self.d - 1 { c } else { c - self.ell };
        }
        u
    }

    /// Local bonds (lower endpoint, axis) of a shortest open path inside E_{B*}
    /// from b_K(0) to the plaque b^normal_K(center), followed by the bonds of
    /// that plaque. `None` unless the seed is open and joined to b_K(0).
    pub fn witness_path(&self, center: &[i64], normal: usize) -> Option<Vec<(Vec<i64>, usize)>> {
        if !self.seed_open(center, normal) || !self.seed_touches(center, normal) {
            return None;
        }
        let d = self.d;
        let (lo, hi) = self.plaque_bounds(center, normal);
        let in_plaque = |u: &[i64]| u.iter().zip(&lo).zip(&hi).all(|((x, a), b)| a <= x && x <= b);
        let mut prev = vec![usize::MAX; self.reached.len()];
        let mut queue = std::collections::VecDeque::new();
        let mut blo = vec![-self.k; d];
        let mut bhi = vec![self.k; d];
        blo[d - 1] = 0;
        bhi[d - 1] = 0;
        for_each_point(&blo, &bhi, |u| {
            if self.inside(u) {
                let i = self.lin(u);
                prev[i] = i;
                queue.push_back(i);
            }
        });
        let mut end = None;
        while let Some(i) = queue.pop_front() {
            let u = self.unlin(i);
            if in_plaque(&u) {
                end = Some(i);
                break;
            }
            let ui = self.interior(&u);
            for a in 0..d {
                for s in [-1i64, 1] {
                    let mut w = u.clone();
                    w[a] += s;
                    if !self.inside(&w) || !(ui || self.interior(&w)) {
                        continue;
                    }
                    let lower = if s > 0 { &u } else { &w };
                    let wi = self.lin(&w);
                    if self.open[self.lin(lower) * d + a] && prev[wi] == usize::MAX {
                        prev[wi] = i;
                        queue.push_back(wi);
                    }
                }
            }
        }
        let mut i = end?;
        let mut bonds = Vec::new();
        while prev[i] != i {
            let (a, b) = (self.unlin(i), self.unlin(prev[i]));
            bonds.push(canonical_bond(&a, &b));
            i = prev[i];
        }
        for_each_point(&lo, &hi, |u| {
            for a in 0..d {
                if a != normal && u[a] < hi[a] {
                    bonds.push((u.to_vec(), a));
                }
            }
        });
        Some(bonds)
    }

    /// First centre (lexicographic in local coordinates) of an open seed in
    /// the subfacet that is joined to b_K(0).
    pub fn subfacet_seed(&self, sf: &Subfacet) -> Option<Vec<i64>> {
        let normal = sf.normal_axis();
        sf.seed_centers(self.k, self.ell, self.h)
            .into_iter()
            .find(|c| self.seed_touches(c, normal) && self.seed_open(c, normal))
    }

    /// C_K^i, or C_K when `index` is `None`.
    pub fn top_event(&self, index: Option<usize>) -> bool {
        top_subfacets(self.ell, self.h, self.d)
            .iter()
            .filter(|s| index.map_or(true, |i| s.index == i))
            .any(|s| self.subfacet_seed(s).is_some())
    }

    /// Ĉ_K^j, or Ĉ_K when `index` is `None`.
    pub fn lateral_event(&self, index: Option<usize>) -> bool {
        side_subfacets(self.ell, self.h, self.d)
            .iter()
            .filter(|s| index.map_or(true, |j| s.index == j))
            .any(|s| self.subfacet_seed(s).is_some())
    }

    /// All top and all side subfacet events.
    pub fn occupied(&self) -> bool {
        top_subfacets(self.ell, self.h, self.d).iter().all(|s| self.subfacet_seed(s).is_some())
            && side_subfacets(self.ell, self.h, self.d).iter().all(|s| self.subfacet_seed(s).is_some())
    }
}
