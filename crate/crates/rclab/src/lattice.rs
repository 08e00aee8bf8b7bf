//! Integer geometry on Z^d: regions with their bond lists, block faces and
//! subfacets, seed plaques, the steering rule and oriented block placements.
//!
//! Axes are 0-based. The last axis (`d - 1`) is the vertical one used by
//! blocks, rectangles and seeds; the plane of the renormalization is spanned by
//! axes `d - 2` (east) and `d - 1` (north).

use thiserror::Error;

/// Marker for "no node" / "no bond" in lookup tables.
pub const NONE: u32 = u32::MAX;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("dimension {0} not allowed for this region")]
    Dimension(usize),
    #[error("invalid extent: {0}")]
    Extent(String),
    #[error("delta must be a power of 1/2 with integral delta*N (delta={delta}, N={n})")]
    NonDyadic { delta: f64, n: i64 },
    #[error("region has no vertices")]
    Empty,
    #[error("point of dimension {got}, expected {want}")]
    PointDim { got: usize, want: usize },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RegionKind {
    Box { n: i64 },
    Slab { l: i64, n: i64 },
    Block { ell: i64, h: i64 },
    Rectangle { n: i64, half_height: i64, margin: i64 },
    SeedPlaque { axis: usize, k: i64 },
    Custom,
}

/// Which nearest-neighbour pairs form the bond list.
///
/// `Touching` keeps every bond with at least one endpoint in the vertex set,
/// so the exterior endpoints become nodes too. `Internal` keeps only bonds with
/// both endpoints inside.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BondScope {
    Touching,
    Internal,
}

/// Bond from node `a` at x to node `b` at x + e_axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Bond {
    pub a: u32,
    pub b: u32,
    pub axis: u8,
}

/// Calls `f` on every point of the integer box `lo..=hi`, last axis fastest.
pub fn for_each_point(lo: &[i64], hi: &[i64], mut f: impl FnMut(&[i64])) {
    let d = lo.len();
    if lo.iter().zip(hi).any(|(a, b)| a > b) {
        return;
    }
    let mut p = lo.to_vec();
    loop {
        f(&p);
        let mut k = d;
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            if p[k] < hi[k] {
                p[k] += 1;
                break;
            }
            p[k] = lo[k];
        }
    }
}

/// A finite vertex set with its bond list.
///
/// Nodes `0..n_inner` are the vertices of the region in row-major order; under
/// `BondScope::Touching` they are followed by the exterior endpoints, again in
/// row-major order. Bonds are listed by (lower endpoint, positive direction)
/// with the lower endpoint in row-major order.
#[derive(Clone, Debug)]
pub struct Region {
    dim: usize,
    kind: RegionKind,
    scope: BondScope,
    lo: Vec<i64>,
    hi: Vec<i64>,
    elo: Vec<i64>,
    ext_shape: Vec<usize>,
    index: Vec<u32>,
    coords: Vec<i64>,
    n_inner: usize,
    bonds: Vec<Bond>,
    up: Vec<u32>,
    adj_off: Vec<u32>,
    adj: Vec<(u32, u32)>,
    boundary: Vec<u32>,
    full_box: bool,
}

impl Region {
    /// Builds the region `{x in lo..=hi : pred(x)}`.
    pub fn from_predicate(
        lo: &[i64],
        hi: &[i64],
        kind: RegionKind,
        scope: BondScope,
        pred: impl Fn(&[i64]) -> bool,
    ) -> Result<Region, GeometryError> {
        let dim = lo.len();
        if dim == 0 || hi.len() != dim {
            return Err(GeometryError::Dimension(dim));
        }
        if lo.iter().zip(hi).any(|(a, b)| a > b) {
            return Err(GeometryError::Empty);
        }
        let elo: Vec<i64> = lo.iter().map(|v| v - 1).collect();
        let ehi: Vec<i64> = hi.iter().map(|v| v + 1).collect();
        let ext_shape: Vec<usize> = elo.iter().zip(&ehi).map(|(a, b)| (b - a + 1) as usize).collect();
        let total: usize = ext_shape.iter().product();
        let mut index = vec![NONE; total];
        let mut coords = Vec::new();
        let lin = |p: &[i64]| -> usize {
            let mut k = 0usize;
            for i in 0..dim {
                k = k * ext_shape[i] + (p[i] - elo[i]) as usize;
            }
            k
        };
        let mut n_inner = 0usize;
        let mut full_box = true;
        for_each_point(lo, hi, |p| {
            if pred(p) {
                index[lin(p)] = n_inner as u32;
                coords.extend_from_slice(p);
                n_inner += 1;
            } else {
                full_box = false;
            }
        });
        if n_inner == 0 {
            return Err(GeometryError::Empty);
        }
        let is_inner = |index: &Vec<u32>, p: &[i64]| -> bool {
            let k = lin(p);
            index[k] != NONE && (index[k] as usize) < n_inner
        };
        let mut n_nodes = n_inner;
        if scope == BondScope::Touching {
            let mut q = vec![0i64; dim];
            for_each_point(&elo, &ehi, |p| {
                if index[lin(p)] != NONE {
                    return;
                }
                q.copy_from_slice(p);
                let mut touches = false;
                for i in 0..dim {
                    for s in [-1i64, 1] {
                        q[i] = p[i] + s;
                        if q[i] >= elo[i] && q[i] <= ehi[i] && is_inner(&index, &q) {
                            touches = true;
                        }
                    }
                    q[i] = p[i];
                }
                if touches {
                    index[lin(p)] = n_nodes as u32;
                    coords.extend_from_slice(p);
                    n_nodes += 1;
                }
            });
        }
        let mut bonds = Vec::new();
        let mut up = vec![NONE; n_nodes * dim];
        let mut q = vec![0i64; dim];
        for_each_point(&elo, &ehi, |p| {
            let a = index[lin(p)];
            if a == NONE {
                return;
            }
            q.copy_from_slice(p);
            for i in 0..dim {
                q[i] = p[i] + 1;
                if q[i] <= ehi[i] {
                    let b = index[lin(&q)];
                    if b != NONE {
                        let ia = (a as usize) < n_inner;
                        let ib = (b as usize) < n_inner;
                        let keep = match scope {
                            BondScope::Touching => ia || ib,
                            BondScope::Internal => ia && ib,
                        };
                        if keep {
                            up[a as usize * dim + i] = bonds.len() as u32;
                            bonds.push(Bond { a, b, axis: i as u8 });
                        }
                    }
                }
                q[i] = p[i];
            }
        });
        let mut deg = vec![0u32; n_nodes + 1];
        for bd in &bonds {
            deg[bd.a as usize] += 1;
            deg[bd.b as usize] += 1;
        }
        let mut adj_off = vec![0u32; n_nodes + 1];
        for v in 0..n_nodes {
            adj_off[v + 1] = adj_off[v] + deg[v];
        }
        let mut fill = adj_off.clone();
        let mut adj = vec![(0u32, 0u32); bonds.len() * 2];
        for (e, bd) in bonds.iter().enumerate() {
            adj[fill[bd.a as usize] as usize] = (bd.b, e as u32);
            fill[bd.a as usize] += 1;
            adj[fill[bd.b as usize] as usize] = (bd.a, e as u32);
            fill[bd.b as usize] += 1;
        }
        let mut region = Region {
            dim,
            kind,
            scope,
            lo: lo.to_vec(),
            hi: hi.to_vec(),
            elo,
            ext_shape,
            index,
            coords,
            n_inner,
            bonds,
            up,
            adj_off,
            adj,
            boundary: Vec::new(),
            full_box,
        };
        region.boundary = match scope {
            BondScope::Touching => (n_inner as u32..n_nodes as u32).collect(),
            BondScope::Internal => (0..n_inner as u32)
                .filter(|&v| !region.has_all_neighbors(v))
                .collect(),
        };
        Ok(region)
    }

    /// The full box `lo..=hi`.
    pub fn cuboid(lo: &[i64], hi: &[i64], kind: RegionKind, scope: BondScope) -> Result<Region, GeometryError> {
        Region::from_predicate(lo, hi, kind, scope, |_| true)
    }

    /// An arbitrary finite vertex set.
    pub fn custom(dim: usize, points: &[Vec<i64>], scope: BondScope) -> Result<Region, GeometryError> {
        if points.is_empty() {
            return Err(GeometryError::Empty);
        }
        let mut lo = points[0].clone();
        let mut hi = points[0].clone();
        for p in points {
            if p.len() != dim {
                return Err(GeometryError::PointDim { got: p.len(), want: dim });
            }
            for i in 0..dim {
                lo[i] = lo[i].min(p[i]);
                hi[i] = hi[i].max(p[i]);
            }
        }
        let set: std::collections::HashSet<&[i64]> = points.iter().map(|p| p.as_slice()).collect();
        Region::from_predicate(&lo, &hi, RegionKind::Custom, scope, |p| set.contains(p))
    }

    /// Same vertex set with another bond scope.
    pub fn with_scope(&self, scope: BondScope) -> Region {
        if scope == self.scope {
            return self.clone();
        }
        let n = self.n_inner;
        let me = self;
        Region::from_predicate(&self.lo, &self.hi, self.kind.clone(), scope, |p| {
            me.node_of(p).map_or(false, |v| (v as usize) < n)
        })
        .expect("nonempty region")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn kind(&self) -> &RegionKind {
        &self.kind
    }
    pub fn scope(&self) -> BondScope {
        self.scope
    }
    /// Bounding box of the vertex set.
    pub fn bounds(&self) -> (&[i64], &[i64]) {
        (&self.lo, &self.hi)
    }
    pub fn is_full_box(&self) -> bool {
        self.full_box
    }
    pub fn n_inner(&self) -> usize {
        self.n_inner
    }
    pub fn n_nodes(&self) -> usize {
        self.coords.len() / self.dim
    }
    pub fn n_bonds(&self) -> usize {
        self.bonds.len()
    }
    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }
    pub fn bond(&self, e: usize) -> Bond {
        self.bonds[e]
    }
    pub fn coords(&self, v: u32) -> &[i64] {
        let i = v as usize * self.dim;
        &self.coords[i..i + self.dim]
    }
    pub fn is_inner(&self, v: u32) -> bool {
        (v as usize) < self.n_inner
    }
    /// Nodes where boundary conditions act: the exterior endpoints under
    /// `Touching`, the vertices missing a lattice neighbour under `Internal`.
    pub fn boundary(&self) -> &[u32] {
        &self.boundary
    }
    /// (neighbour, bond) pairs of a node.
    pub fn neighbors(&self, v: u32) -> &[(u32, u32)] {
        let a = self.adj_off[v as usize] as usize;
        let b = self.adj_off[v as usize + 1] as usize;
        &self.adj[a..b]
    }

    fn lin(&self, p: &[i64]) -> Option<usize> {
        if p.len() != self.dim {
            return None;
        }
        let mut k = 0usize;
        for i in 0..self.dim {
            let o = p[i] - self.elo[i];
            if o < 0 || o as usize >= self.ext_shape[i] {
                return None;
            }
            k = k * self.ext_shape[i] + o as usize;
        }
        Some(k)
    }

    /// Node at a lattice point, inner or exterior.
    pub fn node_of(&self, p: &[i64]) -> Option<u32> {
        let k = self.lin(p)?;
        let v = self.index[k];
        (v != NONE).then_some(v)
    }

    /// Whether `p` belongs to the vertex set.
    pub fn contains(&self, p: &[i64]) -> bool {
        self.node_of(p).map_or(false, |v| self.is_inner(v))
    }

    /// Bond between `x` and `x + e_axis`, if listed.
    pub fn bond_at(&self, x: &[i64], axis: usize) -> Option<u32> {
        let v = self.node_of(x)?;
        let e = self.up[v as usize * self.dim + axis];
        (e != NONE).then_some(e)
    }

    /// Bond joining two nodes, if listed.
    pub fn bond_between(&self, u: u32, v: u32) -> Option<u32> {
        self.neighbors(u).iter().find(|(w, _)| *w == v).map(|&(_, e)| e)
    }

    fn has_all_neighbors(&self, v: u32) -> bool {
        let mut q = self.coords(v).to_vec();
        for i in 0..self.dim {
            for s in [-1i64, 1] {
                let c = q[i];
                q[i] = c + s;
                let inside = self.contains(&q);
                q[i] = c;
                if !inside {
                    return false;
                }
            }
        }
        true
    }

    /// Vertices whose 2d lattice neighbours all belong to the region.
    pub fn interior(&self) -> Vec<u32> {
        (0..self.n_inner as u32).filter(|&v| self.has_all_neighbors(v)).collect()
    }

    /// Inner vertices with `coords[axis] == value`.
    pub fn layer(&self, axis: usize, value: i64) -> Vec<u32> {
        (0..self.n_inner as u32).filter(|&v| self.coords(v)[axis] == value).collect()
    }

    /// All nodes (inner and exterior) with `coords[axis] == value`.
    pub fn node_layer(&self, axis: usize, value: i64) -> Vec<u32> {
        (0..self.n_nodes() as u32).filter(|&v| self.coords(v)[axis] == value).collect()
    }

    /// Top and bottom faces of the rectangle; `outer` selects the faces of the
    /// margin-extended rectangle.
    pub fn rectangle_faces(&self, outer: bool) -> Option<(Vec<u32>, Vec<u32>)> {
        match self.kind {
            RegionKind::Rectangle { n, half_height, margin } => {
                let t = if outer { half_height + margin } else { half_height };
                let ax = self.dim - 1;
                let face = |z: i64| -> Vec<u32> {
                    self.layer(ax, z)
                        .into_iter()
                        .filter(|&v| self.coords(v)[..ax].iter().all(|c| c.abs() <= n))
                        .collect()
                };
                Some((face(t), face(-t)))
            }
            _ => None,
        }
    }
}

fn check_positive(name: &str, v: i64) -> Result<(), GeometryError> {
    if v < 1 {
        return Err(GeometryError::Extent(format!("{name}={v} must be >= 1")));
    }
    Ok(())
}

/// The box `{-n..n}^d`.
pub fn build_box(n: i64, d: usize) -> Result<Region, GeometryError> {
    if d < 1 {
        return Err(GeometryError::Dimension(d));
    }
    if n < 0 {
        return Err(GeometryError::Extent(format!("n={n} must be >= 0")));
    }
    Region::cuboid(&vec![-n; d], &vec![n; d], RegionKind::Box { n }, BondScope::Touching)
}

/// B(ell,h) = {-ell..ell}^{d-1} x {0..h}.
pub fn build_block(ell: i64, h: i64, d: usize) -> Result<Region, GeometryError> {
    if d < 2 {
        return Err(GeometryError::Dimension(d));
    }
    check_positive("ell", ell)?;
    check_positive("h", h)?;
    let (lo, hi) = block_bounds(ell, h, d);
    Region::cuboid(&lo, &hi, RegionKind::Block { ell, h }, BondScope::Touching)
}

/// Bounds of B(ell,h).
pub fn block_bounds(ell: i64, h: i64, d: usize) -> (Vec<i64>, Vec<i64>) {
    let mut lo = vec![-ell; d];
    let mut hi = vec![ell; d];
    lo[d - 1] = 0;
    hi[d - 1] = h;
    (lo, hi)
}

/// Bounds of the interior B*(ell,h); empty when ell < 1 or h < 2.
pub fn block_interior_bounds(ell: i64, h: i64, d: usize) -> (Vec<i64>, Vec<i64>) {
    let mut lo = vec![-ell + 1; d];
    let mut hi = vec![ell - 1; d];
    lo[d - 1] = 1;
    hi[d - 1] = h - 1;
    (lo, hi)
}

/// S_{L,N} = {-L..L}^{d-2} x {-N..N}^2.
pub fn build_slab(l: i64, n: i64, d: usize) -> Result<Region, GeometryError> {
    if d < 3 {
        return Err(GeometryError::Dimension(d));
    }
    if l < 0 {
        return Err(GeometryError::Extent(format!("L={l} must be >= 0")));
    }
    check_positive("N", n)?;
    let mut lo = vec![-l; d];
    let mut hi = vec![l; d];
    for i in d - 2..d {
        lo[i] = -n;
        hi[i] = n;
    }
    Region::cuboid(&lo, &hi, RegionKind::Slab { l, n }, BondScope::Touching)
}

/// Returns k when `delta == 2^-k` exactly.
pub fn dyadic_exponent(delta: f64) -> Option<u32> {
    if !(delta > 0.0 && delta <= 1.0) {
        return None;
    }
    let mut x = delta;
    let mut k = 0u32;
    while x < 1.0 && k < 62 {
        x *= 2.0;
        k += 1;
    }
    (x == 1.0).then_some(k)
}

/// R^L(N,delta) = {-N..N}^{d-1} x {-delta N - L .. delta N + L}.
pub fn build_rectangle(n: i64, delta: f64, margin: i64, d: usize) -> Result<Region, GeometryError> {
    if d < 2 {
        return Err(GeometryError::Dimension(d));
    }
    check_positive("N", n)?;
    if margin < 0 {
        return Err(GeometryError::Extent(format!("L={margin} must be >= 0")));
    }
    let k = dyadic_exponent(delta).ok_or(GeometryError::NonDyadic { delta, n })?;
    if k >= 62 || n % (1i64 << k) != 0 {
        return Err(GeometryError::NonDyadic { delta, n });
    }
    let half_height = n >> k;
    let mut lo = vec![-n; d];
    let mut hi = vec![n; d];
    lo[d - 1] = -half_height - margin;
    hi[d - 1] = half_height + margin;
    Region::cuboid(&lo, &hi, RegionKind::Rectangle { n, half_height, margin }, BondScope::Touching)
}

/// The plaque b^axis_K(center): the (d-1)-cube of half-width K orthogonal to
/// `e_axis`, with its internal bonds only.
pub fn seed_plaque(center: &[i64], axis: usize, k: i64) -> Result<Region, GeometryError> {
    let d = center.len();
    if d < 2 || axis >= d {
        return Err(GeometryError::Dimension(d));
    }
    check_positive("K", k)?;
    let (lo, hi) = plaque_bounds(center, axis, k);
    Region::cuboid(&lo, &hi, RegionKind::SeedPlaque { axis, k }, BondScope::Internal)
}

pub fn plaque_bounds(center: &[i64], axis: usize, k: i64) -> (Vec<i64>, Vec<i64>) {
    let mut lo: Vec<i64> = center.iter().map(|c| c - k).collect();
    let mut hi: Vec<i64> = center.iter().map(|c| c + k).collect();
    lo[axis] = center[axis];
    hi[axis] = center[axis];
    (lo, hi)
}

/// Face of a block in block-local coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Face {
    Top,
    /// The side `x_axis = +ell` (positive) or `x_axis = -ell`.
    Side { axis: usize, positive: bool },
}

/// A subfacet of B(ell,h) in block-local coordinates, with its 1-based index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Subfacet {
    pub face: Face,
    pub index: usize,
    pub lo: Vec<i64>,
    pub hi: Vec<i64>,
}

impl Subfacet {
    pub fn contains(&self, p: &[i64]) -> bool {
        p.iter().zip(&self.lo).zip(&self.hi).all(|((x, a), b)| a <= x && x <= b)
    }

    /// Axis orthogonal to the face, i.e. the axis of the seed plaques on it.
    pub fn normal_axis(&self) -> usize {
        match self.face {
            Face::Top => self.lo.len() - 1,
            Face::Side { axis, .. } => axis,
        }
    }

    /// Centres of plaques b_K lying entirely in the face and centred in this
    /// subfacet, in lexicographic order.
    pub fn seed_centers(&self, k: i64, ell: i64, h: i64) -> Vec<Vec<i64>> {
        let d = self.lo.len();
        let mut lo = self.lo.clone();
        let mut hi = self.hi.clone();
        let normal = self.normal_axis();
        for i in 0..d - 1 {
            if i != normal {
                lo[i] = lo[i].max(-ell + k);
                hi[i] = hi[i].min(ell - k);
            }
        }
        if normal != d - 1 {
            lo[d - 1] = lo[d - 1].max(k);
            hi[d - 1] = hi[d - 1].min(h - k);
        }
        let mut out = Vec::new();
        for_each_point(&lo, &hi, |p| out.push(p.to_vec()));
        out
    }
}

/// Orthant interval on one horizontal axis: bit 0 is `0..=ell`, bit 1 `-ell..=0`.
fn half(bit: usize, ell: i64) -> (i64, i64) {
    if bit == 0 {
        (0, ell)
    } else {
        (-ell, 0)
    }
}

/// The 2^{d-1} top subfacets T_i, i = 1..2^{d-1}.
///
/// Index order is binary counting over the horizontal axes, first axis most
/// significant, with the nonnegative half before the nonpositive one:
/// in d = 3, T_1 = (+,+), T_2 = (+,-), T_3 = (-,+), T_4 = (-,-).
pub fn top_subfacets(ell: i64, h: i64, d: usize) -> Vec<Subfacet> {
    let m = d - 1;
    (0..1usize << m)
        .map(|code| {
            let mut lo = vec![0; d];
            let mut hi = vec![0; d];
            for a in 0..m {
                let bit = (code >> (m - 1 - a)) & 1;
                let (x, y) = half(bit, ell);
                lo[a] = x;
                hi[a] = y;
            }
            lo[m] = h;
            hi[m] = h;
            Subfacet { face: Face::Top, index: code + 1, lo, hi }
        })
        .collect()
}

/// The 2(d-1)2^{d-2} side subfacets S_j.
///
/// Faces are taken axis by axis, the `+ell` face before the `-ell` face; within
/// a face the remaining horizontal axes are split into orthants in the same
/// binary order as the top subfacets. Each subfacet spans heights `0..=h`.
pub fn side_subfacets(ell: i64, h: i64, d: usize) -> Vec<Subfacet> {
    let m = d - 1;
    let per_face = 1usize << (m - 1);
    let mut out = Vec::new();
    for axis in 0..m {
        for positive in [true, false] {
            for code in 0..per_face {
                let mut lo = vec![0; d];
                let mut hi = vec![0; d];
                let others: Vec<usize> = (0..m).filter(|&a| a != axis).collect();
                for (j, &a) in others.iter().enumerate() {
                    let bit = (code >> (others.len() - 1 - j)) & 1;
                    let (x, y) = half(bit, ell);
                    lo[a] = x;
                    hi[a] = y;
                }
                let s = if positive { ell } else { -ell };
                lo[axis] = s;
                hi[axis] = s;
                lo[m] = 0;
                hi[m] = h;
                out.push(Subfacet { face: Face::Side { axis, positive }, index: out.len() + 1, lo, hi });
            }
        }
    }
    out
}

/// Steering rule: the index j with `(-y_1, ..., -y_{d-1}, h)` in T_j, smallest
/// index on ties. `y` is a full site whose last coordinate is ignored.
pub fn steering_choice(y: &[i64], ell: i64, h: i64) -> usize {
    let _ = h;
    let m = y.len() - 1;
    debug_assert!(y[..m].iter().all(|c| c.abs() <= ell));
    let mut code = 0usize;
    for a in 0..m {
        code = (code << 1) | usize::from(y[a] > 0);
    }
    code + 1
}

/// Directions in the (east, north) plane spanned by axes d-2 and d-1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum Orientation {
    North,
    East,
    South,
    West,
}

impl Orientation {
    pub const ALL: [Orientation; 4] = [Orientation::North, Orientation::East, Orientation::South, Orientation::West];

    /// Number of clockwise quarter turns taking North to `self`.
    pub fn turns(self) -> u8 {
        match self {
            Orientation::North => 0,
            Orientation::East => 1,
            Orientation::South => 2,
            Orientation::West => 3,
        }
    }
    pub fn from_turns(t: u8) -> Orientation {
        Orientation::ALL[(t % 4) as usize]
    }
    pub fn cw(self) -> Orientation {
        Orientation::from_turns(self.turns() + 1)
    }
    pub fn ccw(self) -> Orientation {
        Orientation::from_turns(self.turns() + 3)
    }
    pub fn opposite(self) -> Orientation {
        Orientation::from_turns(self.turns() + 2)
    }
    /// Unit vector (east, north).
    pub fn vector(self) -> (i64, i64) {
        rotate_plane((0, 1), self.turns())
    }
}

/// Rotates (east, north) clockwise `turns` times.
pub fn rotate_plane(v: (i64, i64), turns: u8) -> (i64, i64) {
    let (mut x, mut y) = v;
    for _ in 0..turns % 4 {
        let t = x;
        x = y;
        y = -t;
    }
    (x, y)
}

/// A copy of B(ell,h) rotated so that its height axis points along
/// `orientation`, translated so that local 0 sits at `anchor`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct PlacedBlock {
    pub orientation: Orientation,
    pub anchor: Vec<i64>,
    pub ell: i64,
    pub h: i64,
}

pub fn place_block(orientation: Orientation, anchor: &[i64], ell: i64, h: i64) -> PlacedBlock {
    PlacedBlock { orientation, anchor: anchor.to_vec(), ell, h }
}

impl PlacedBlock {
    pub fn dim(&self) -> usize {
        self.anchor.len()
    }

    pub fn to_global(&self, local: &[i64]) -> Vec<i64> {
        let mut g = local.to_vec();
        self.to_global_into(local, &mut g);
        g
    }

    pub fn to_global_into(&self, local: &[i64], out: &mut [i64]) {
        let d = self.dim();
        let (x, y) = rotate_plane((local[d - 2], local[d - 1]), self.orientation.turns());
        for i in 0..d - 2 {
            out[i] = local[i] + self.anchor[i];
        }
        out[d - 2] = x + self.anchor[d - 2];
        out[d - 1] = y + self.anchor[d - 1];
    }

    pub fn to_local(&self, global: &[i64]) -> Vec<i64> {
        let d = self.dim();
        let mut l: Vec<i64> = global.iter().zip(&self.anchor).map(|(g, a)| g - a).collect();
        let (x, y) = rotate_plane((l[d - 2], l[d - 1]), 4 - self.orientation.turns() % 4);
        l[d - 2] = x;
        l[d - 1] = y;
        l
    }

    /// Global image of a local axis-aligned box.
    pub fn map_box(&self, lo: &[i64], hi: &[i64]) -> (Vec<i64>, Vec<i64>) {
        let a = self.to_global(lo);
        let b = self.to_global(hi);
        let glo = a.iter().zip(&b).map(|(x, y)| *x.min(y)).collect();
        let ghi = a.iter().zip(&b).map(|(x, y)| *x.max(y)).collect();
        (glo, ghi)
    }

    /// Global bounding box of the block vertices.
    pub fn bounds(&self) -> (Vec<i64>, Vec<i64>) {
        let (lo, hi) = block_bounds(self.ell, self.h, self.dim());
        self.map_box(&lo, &hi)
    }

    /// Global bounds of the interior B*.
    pub fn interior_bounds(&self) -> (Vec<i64>, Vec<i64>) {
        let (lo, hi) = block_interior_bounds(self.ell, self.h, self.dim());
        self.map_box(&lo, &hi)
    }

    pub fn region(&self) -> Region {
        let (lo, hi) = self.bounds();
        Region::cuboid(&lo, &hi, RegionKind::Block { ell: self.ell, h: self.h }, BondScope::Touching)
            .expect("blocks are nonempty")
    }

    /// Quarter turn clockwise about the anchor.
    pub fn rotated(&self) -> PlacedBlock {
        PlacedBlock { orientation: self.orientation.cw(), ..self.clone() }
    }

    /// Plane direction of the local `+x_{d-2}` axis.
    pub fn right(&self) -> Orientation {
        self.orientation.cw()
    }

    /// Top subfacets whose in-plane half points toward `dir` (which must be
    /// perpendicular to the orientation).
    pub fn top_subfacets_toward(&self, dir: Orientation) -> Vec<Subfacet> {
        let d = self.dim();
        let want_nonneg = dir == self.right();
        debug_assert!(dir == self.right() || dir == self.right().opposite());
        top_subfacets(self.ell, self.h, d)
            .into_iter()
            .filter(|s| if want_nonneg { s.lo[d - 2] == 0 } else { s.hi[d - 2] == 0 })
            .collect()
    }

    /// Side subfacets on the in-plane side facing `dir`.
    pub fn side_subfacets_toward(&self, dir: Orientation) -> Vec<Subfacet> {
        let d = self.dim();
        let positive = dir == self.right();
        debug_assert!(dir == self.right() || dir == self.right().opposite());
        side_subfacets(self.ell, self.h, d)
            .into_iter()
            .filter(|s| s.face == Face::Side { axis: d - 2, positive })
            .collect()
    }
}

/// Axis-aligned integer box.
#[derive(Clone, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct IBox {
    pub lo: Vec<i64>,
    pub hi: Vec<i64>,
}

impl IBox {
    pub fn new(lo: Vec<i64>, hi: Vec<i64>) -> IBox {
        IBox { lo, hi }
    }
    pub fn contains(&self, p: &[i64]) -> bool {
        p.iter().zip(&self.lo).zip(&self.hi).all(|((x, a), b)| a <= x && x <= b)
    }
    pub fn contains_box(&self, o: &IBox) -> bool {
        (0..self.lo.len()).all(|i| self.lo[i] <= o.lo[i] && o.hi[i] <= self.hi[i])
    }
    pub fn is_empty(&self) -> bool {
        self.lo.iter().zip(&self.hi).any(|(a, b)| a > b)
    }
    pub fn intersects(&self, o: &IBox) -> bool {
        (0..self.lo.len()).all(|i| self.lo[i].max(o.lo[i]) <= self.hi[i].min(o.hi[i]))
    }
    /// Whether some nearest-neighbour bond touches both boxes, i.e. whether the
    /// bond sets "at least one endpoint inside" of the two boxes intersect.
    pub fn shares_bond_with(&self, o: &IBox) -> bool {
        if self.is_empty() || o.is_empty() {
            return false;
        }
        let mut gap = 0i64;
        for i in 0..self.lo.len() {
            let g = (self.lo[i] - o.hi[i]).max(o.lo[i] - self.hi[i]);
            gap += g.max(0);
        }
        gap <= 1
    }
}
