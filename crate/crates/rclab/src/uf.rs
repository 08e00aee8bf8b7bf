//! Disjoint-set forest with path halving and union by size.

#[derive(Clone, Debug)]
pub struct UnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
    components: usize,
}

impl UnionFind {
    pub fn new(n: usize) -> UnionFind {
        UnionFind { parent: (0..n as u32).collect(), size: vec![1; n], components: n }
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    /// Puts every element back in its own set.
    pub fn reset(&mut self) {
        for (i, p) in self.parent.iter_mut().enumerate() {
            *p = i as u32;
        }
        self.size.iter_mut().for_each(|s| *s = 1);
        self.components = self.parent.len();
    }

    #[inline]
    pub fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let g = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = g;
            x = g;
        }
        x
    }

    /// Merges the sets of `a` and `b`; returns whether they were distinct.
    #[inline]
    pub fn union(&mut self, a: u32, b: u32) -> bool {
        let mut ra = self.find(a);
        let mut rb = self.find(b);
        if ra == rb {
            return false;
        }
        if self.size[ra as usize] < self.size[rb as usize] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb as usize] = ra;
        self.size[ra as usize] += self.size[rb as usize];
        self.components -= 1;
        true
    }

    #[inline]
    pub fn same(&mut self, a: u32, b: u32) -> bool {
        self.find(a) == self.find(b)
    }

    pub fn set_size(&mut self, x: u32) -> u32 {
        let r = self.find(x);
        self.size[r as usize]
    }

    /// Number of disjoint sets.
    pub fn components(&self) -> usize {
        self.components
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn basics() {
        let mut uf = UnionFind::new(5);
        assert_eq!(uf.components(), 5);
        assert!(uf.union(0, 1));
        assert!(!uf.union(1, 0));
        assert!(uf.union(3, 4));
        assert!(uf.same(0, 1) && !uf.same(1, 3));
        assert_eq!(uf.components(), 3);
        assert_eq!(uf.set_size(4), 2);
        uf.reset();
        assert_eq!(uf.components(), 5);
        assert!(!uf.same(0, 1));
    }

    proptest! {
        #[test]
        fn count_drops_by_one_per_merge(pairs in prop::collection::vec((0u32..20, 0u32..20), 0..60)) {
            let mut uf = UnionFind::new(20);
            let mut naive: Vec<u32> = (0..20).collect();
            for (a, b) in pairs {
                let before = uf.components();
                let merged = uf.union(a, b);
                prop_assert_eq!(uf.components(), before - usize::from(merged));
                let (la, lb) = (naive[a as usize], naive[b as usize]);
                prop_assert_eq!(merged, la != lb);
                for x in naive.iter_mut() {
                    if *x == lb { *x = la; }
                }
                let r = uf.find(a);
                prop_assert_eq!(uf.find(r), r);
            }
            for i in 0..20u32 {
                for j in 0..20u32 {
                    prop_assert_eq!(uf.same(i, j), naive[i as usize] == naive[j as usize]);
                }
            }
        }
    }
}
