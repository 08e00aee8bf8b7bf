//! Bond configurations, boundary conditions and cluster counting for the
//! finite-volume random-cluster measure
//!
//!   phi(omega) ∝ prod_b p(b)^omega(b) (1 - p(b))^(1 - omega(b)) q^c(omega).
//!
//! Cluster counting convention: boundary nodes in the same wired class are
//! joined to a common ghost node, and c(omega) is the number of distinct
//! clusters that contain a vertex of the region or a ghost. Exterior endpoints
//! that are not wired carry no weight of their own.

use std::collections::{BTreeMap, VecDeque};
use std::io::{Read, Write};

use bitvec::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::{BondScope, GeometryError, Region, RegionKind, NONE};
use crate::uf::UnionFind;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("cluster weight q={0} must be >= 1")]
    BadQ(f64),
    #[error("intensity {0} outside [0,1]")]
    BadIntensity(f64),
    #[error("bond {0} out of range")]
    BadBond(u32),
    #[error("boundary partition has {got} entries, region has {want} boundary nodes")]
    BadPartition { got: usize, want: usize },
    #[error("unknown boundary descriptor `{0}`")]
    BadDescriptor(String),
    #[error("snapshot: {0}")]
    Snapshot(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Cluster weight, base intensity and sparse per-bond overrides.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RCParams {
    pub q: f64,
    pub p: f64,
    pub overrides: BTreeMap<u32, f64>,
}

impl RCParams {
    pub fn new(q: f64, p: f64) -> Result<RCParams, ModelError> {
        if !(q >= 1.0) || !q.is_finite() {
            return Err(ModelError::BadQ(q));
        }
        check_intensity(p)?;
        Ok(RCParams { q, p, overrides: BTreeMap::new() })
    }

    pub fn with_override(mut self, bond: u32, s: f64) -> Result<RCParams, ModelError> {
        check_intensity(s)?;
        self.overrides.insert(bond, s);
        Ok(self)
    }

    pub fn intensity(&self, bond: u32) -> f64 {
        *self.overrides.get(&bond).unwrap_or(&self.p)
    }

    /// Dense intensity table for a region with `n_bonds` bonds.
    pub fn intensities(&self, n_bonds: usize) -> Result<Vec<f64>, ModelError> {
        let mut v = vec![self.p; n_bonds];
        for (&b, &s) in &self.overrides {
            if b as usize >= n_bonds {
                return Err(ModelError::BadBond(b));
            }
            v[b as usize] = s;
        }
        Ok(v)
    }

    /// Some(q) when q is an integer.
    pub fn integer_q(&self) -> Option<u32> {
        (self.q.fract() == 0.0 && self.q <= u32::MAX as f64).then_some(self.q as u32)
    }
}

fn check_intensity(p: f64) -> Result<(), ModelError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(ModelError::BadIntensity(p));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BcKind {
    Free,
    Wired,
    Mixed,
}

/// Partition of the boundary nodes of a region into wired classes.
///
/// Entry `i` refers to `region.boundary()[i]`; `None` leaves the node free,
/// `Some(k)` joins it to ghost `k`. Classes are numbered by first appearance.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryCondition {
    kind: BcKind,
    classes: Vec<Option<u32>>,
    n_classes: u32,
}

impl BoundaryCondition {
    pub fn free(region: &Region) -> BoundaryCondition {
        BoundaryCondition { kind: BcKind::Free, classes: vec![None; region.boundary().len()], n_classes: 0 }
    }

    pub fn wired(region: &Region) -> BoundaryCondition {
        let n = region.boundary().len();
        BoundaryCondition { kind: BcKind::Wired, classes: vec![Some(0); n], n_classes: u32::from(n > 0) }
    }

    /// Arbitrary partition; class labels are renumbered by first appearance.
    pub fn mixed(region: &Region, classes: &[Option<u32>]) -> Result<BoundaryCondition, ModelError> {
        let want = region.boundary().len();
        if classes.len() != want {
            return Err(ModelError::BadPartition { got: classes.len(), want });
        }
        let mut relabel: BTreeMap<u32, u32> = BTreeMap::new();
        let mut out = Vec::with_capacity(want);
        for c in classes {
            out.push(c.map(|k| {
                let next = relabel.len() as u32;
                *relabel.entry(k).or_insert(next)
            }));
        }
        let n_classes = relabel.len() as u32;
        let kind = if n_classes == 0 {
            BcKind::Free
        } else if n_classes == 1 && out.iter().all(|c| c.is_some()) {
            BcKind::Wired
        } else {
            BcKind::Mixed
        };
        Ok(BoundaryCondition { kind, classes: out, n_classes })
    }

    /// Partition given by a selector on boundary node coordinates.
    pub fn by_selector(region: &Region, f: impl Fn(&[i64]) -> Option<u32>) -> BoundaryCondition {
        let classes: Vec<Option<u32>> = region.boundary().iter().map(|&v| f(region.coords(v))).collect();
        BoundaryCondition::mixed(region, &classes).expect("length matches")
    }

    /// Parses `free`, `wired` or `mixed:<groups>`, where groups are separated
    /// by `,`, faces within a group by `|`, and a face is `top`, `bottom`,
    /// `lateral` or `x<axis><+|->`. Each group is one wired class; unmatched
    /// boundary nodes stay free.
    pub fn parse(region: &Region, desc: &str) -> Result<BoundaryCondition, ModelError> {
        match desc {
            "free" => return Ok(BoundaryCondition::free(region)),
            "wired" => return Ok(BoundaryCondition::wired(region)),
            _ => {}
        }
        let spec = desc.strip_prefix("mixed:").ok_or_else(|| ModelError::BadDescriptor(desc.into()))?;
        let d = region.dim();
        let mut groups: Vec<Vec<(usize, bool)>> = Vec::new();
        for g in spec.split(',') {
            let mut faces = Vec::new();
            for f in g.split('|') {
                match f {
                    "top" => faces.push((d - 1, true)),
                    "bottom" => faces.push((d - 1, false)),
                    "lateral" => {
                        for a in 0..d - 1 {
                            faces.push((a, true));
                            faces.push((a, false));
                        }
                    }
                    _ => {
                        let bad = || ModelError::BadDescriptor(desc.into());
                        let body = f.strip_prefix('x').ok_or_else(bad)?;
                        let (num, sign) = body.split_at(body.len().saturating_sub(1));
                        let axis: usize = num.parse().map_err(|_| bad())?;
                        if axis >= d {
                            return Err(bad());
                        }
                        match sign {
                            "+" => faces.push((axis, true)),
                            "-" => faces.push((axis, false)),
                            _ => return Err(bad()),
                        }
                    }
                }
            }
            groups.push(faces);
        }
        let (lo, hi) = region.bounds();
        let internal = region.scope() == BondScope::Internal;
        let on_face = |c: &[i64], axis: usize, pos: bool| -> bool {
            if pos {
                c[axis] > hi[axis] || (internal && c[axis] == hi[axis])
            } else {
                c[axis] < lo[axis] || (internal && c[axis] == lo[axis])
            }
        };
        Ok(BoundaryCondition::by_selector(region, |c| {
            groups
                .iter()
                .position(|faces| faces.iter().any(|&(a, s)| on_face(c, a, s)))
                .map(|k| k as u32)
        }))
    }

    pub fn kind(&self) -> BcKind {
        self.kind
    }
    pub fn n_classes(&self) -> usize {
        self.n_classes as usize
    }
    pub fn classes(&self) -> &[Option<u32>] {
        &self.classes
    }

    /// Per-node ghost class (`NONE` when the node is not wired).
    pub fn node_classes(&self, region: &Region) -> Vec<u32> {
        let mut v = vec![NONE; region.n_nodes()];
        for (i, &node) in region.boundary().iter().enumerate() {
            if let Some(c) = self.classes[i] {
                v[node as usize] = c;
            }
        }
        v
    }

    /// Short text form used in reports.
    pub fn describe(&self) -> String {
        match self.kind {
            BcKind::Free => "free".into(),
            BcKind::Wired => "wired".into(),
            BcKind::Mixed => format!("mixed({} classes)", self.n_classes),
        }
    }
}

/// Open/closed state of every bond of a region.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BondConfig {
    bits: BitVec<u64, Lsb0>,
}

impl BondConfig {
    pub fn all_closed(n: usize) -> BondConfig {
        BondConfig { bits: bitvec![u64, Lsb0; 0; n] }
    }
    pub fn all_open(n: usize) -> BondConfig {
        BondConfig { bits: bitvec![u64, Lsb0; 1; n] }
    }
    pub fn from_bools(v: &[bool]) -> BondConfig {
        BondConfig { bits: v.iter().copied().collect() }
    }
    /// Config whose bond `e` is open iff bit `e` of `mask` is set.
    pub fn from_mask(n: usize, mask: u64) -> BondConfig {
        let mut c = BondConfig::all_closed(n);
        for e in 0..n {
            if mask >> e & 1 == 1 {
                c.set(e, true);
            }
        }
        c
    }
    pub fn len(&self) -> usize {
        self.bits.len()
    }
    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }
    #[inline]
    pub fn get(&self, e: usize) -> bool {
        self.bits[e]
    }
    #[inline]
    pub fn set(&mut self, e: usize, open: bool) {
        self.bits.set(e, open);
    }
    pub fn count_open(&self) -> usize {
        self.bits.count_ones()
    }
    pub fn open_bonds(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter_ones()
    }
    pub fn to_bools(&self) -> Vec<bool> {
        self.bits.iter().map(|b| *b).collect()
    }
    /// Bits as the low `len` bits of a word (for `len <= 64`).
    pub fn to_mask(&self) -> u64 {
        self.open_bonds().fold(0u64, |m, e| m | 1 << e)
    }
    fn words(&self) -> &[u64] {
        self.bits.as_raw_slice()
    }
}

/// Union-find over the nodes of a region plus one ghost per wired class.
#[derive(Clone, Debug)]
pub struct ClusterIndex {
    uf: UnionFind,
    n_nodes: usize,
    n_inner: usize,
    n_ghosts: usize,
}

impl ClusterIndex {
    pub fn build(region: &Region, bc: &BoundaryCondition, config: &BondConfig) -> ClusterIndex {
        let n_nodes = region.n_nodes();
        let mut uf = UnionFind::new(n_nodes + bc.n_classes());
        for (i, &node) in region.boundary().iter().enumerate() {
            if let Some(c) = bc.classes()[i] {
                uf.union(node, (n_nodes + c as usize) as u32);
            }
        }
        for e in config.open_bonds() {
            let b = region.bond(e);
            uf.union(b.a, b.b);
        }
        ClusterIndex { uf, n_nodes, n_inner: region.n_inner(), n_ghosts: bc.n_classes() }
    }

    pub fn ghost(&self, class: usize) -> u32 {
        (self.n_nodes + class) as u32
    }
    pub fn find(&mut self, v: u32) -> u32 {
        self.uf.find(v)
    }
    pub fn connected(&mut self, a: u32, b: u32) -> bool {
        self.uf.same(a, b)
    }

    /// Number of clusters containing a region vertex or a ghost. Ghost clusters
    /// are always counted, which differs from counting only clusters that avoid
    /// the boundary by a constant as long as the classes do not merge.
    pub fn cluster_count(&mut self) -> usize {
        let mut seen = vec![false; self.n_nodes + self.n_ghosts];
        let mut c = 0;
        let ghosts = self.n_nodes..self.n_nodes + self.n_ghosts;
        for v in (0..self.n_inner).chain(ghosts) {
            let r = self.uf.find(v as u32) as usize;
            if !seen[r] {
                seen[r] = true;
                c += 1;
            }
        }
        c
    }
}

pub fn cluster_count(region: &Region, config: &BondConfig, bc: &BoundaryCondition) -> usize {
    ClusterIndex::build(region, bc, config).cluster_count()
}

/// Whether some node of `a` and some node of `b` share a cluster of omega∨pi.
pub fn connected(region: &Region, config: &BondConfig, bc: &BoundaryCondition, a: &[u32], b: &[u32]) -> bool {
    if a.is_empty() || b.is_empty() {
        return false;
    }
    let mut idx = ClusterIndex::build(region, bc, config);
    let mut roots: Vec<u32> = a.iter().map(|&v| idx.find(v)).collect();
    roots.sort_unstable();
    b.iter().any(|&v| roots.binary_search(&idx.find(v)).is_ok())
}

/// Connectivity through open bonds accepted by `allowed`, ignoring boundary
/// conditions.
pub fn connected_within(
    region: &Region,
    config: &BondConfig,
    allowed: impl Fn(u32) -> bool,
    a: &[u32],
    b: &[u32],
) -> bool {
    let mut target = vec![false; region.n_nodes()];
    for &v in b {
        target[v as usize] = true;
    }
    let mut seen = vec![false; region.n_nodes()];
    let mut queue: VecDeque<u32> = VecDeque::new();
    for &v in a {
        if !seen[v as usize] {
            seen[v as usize] = true;
            queue.push_back(v);
        }
    }
    while let Some(v) = queue.pop_front() {
        if target[v as usize] {
            return true;
        }
        for &(w, e) in region.neighbors(v) {
            if !seen[w as usize] && config.get(e as usize) && allowed(e) {
                seen[w as usize] = true;
                queue.push_back(w);
            }
        }
    }
    false
}

/// Unnormalized log-weight. Returns `f64::NEG_INFINITY` when an open bond
/// has intensity 0 or a closed bond has intensity 1.
pub fn log_weight(region: &Region, config: &BondConfig, params: &RCParams, bc: &BoundaryCondition) -> f64 {
    let mut w = 0.0;
    for e in 0..region.n_bonds() {
        let p = params.intensity(e as u32);
        let t = if config.get(e) { p } else { 1.0 - p };
        if t == 0.0 {
            return f64::NEG_INFINITY;
        }
        w += t.ln();
    }
    w + cluster_count(region, config, bc) as f64 * params.q.ln()
}

const MAGIC: &[u8; 4] = b"RCLB";
const VERSION: u16 = 1;

fn kind_code(k: &RegionKind) -> (u8, [i64; 3]) {
    match *k {
        RegionKind::Box { n } => (0, [n, 0, 0]),
        RegionKind::Slab { l, n } => (1, [l, n, 0]),
        RegionKind::Block { ell, h } => (2, [ell, h, 0]),
        RegionKind::Rectangle { n, half_height, margin } => (3, [n, half_height, margin]),
        RegionKind::SeedPlaque { axis, k } => (4, [axis as i64, k, 0]),
        RegionKind::Custom => (5, [0, 0, 0]),
    }
}

fn kind_from(code: u8, a: [i64; 3]) -> Result<RegionKind, ModelError> {
    Ok(match code {
        0 => RegionKind::Box { n: a[0] },
        1 => RegionKind::Slab { l: a[0], n: a[1] },
        2 => RegionKind::Block { ell: a[0], h: a[1] },
        3 => RegionKind::Rectangle { n: a[0], half_height: a[1], margin: a[2] },
        4 => RegionKind::SeedPlaque { axis: a[0] as usize, k: a[1] },
        5 => RegionKind::Custom,
        _ => return Err(ModelError::Snapshot(format!("unknown region kind {code}"))),
    })
}

/// Writes a versioned little-endian snapshot: header (d, bounds, bond scope,
/// vertex mask, bc partition, q, p, overrides) followed by packed bond bits.
pub fn write_snapshot(
    w: &mut impl Write,
    region: &Region,
    bc: &BoundaryCondition,
    params: &RCParams,
    config: &BondConfig,
) -> Result<(), ModelError> {
    let d = region.dim();
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&[d as u8, u8::from(region.scope() == BondScope::Internal)])?;
    let (code, args) = kind_code(region.kind());
    w.write_all(&[code])?;
    for a in args {
        w.write_all(&a.to_le_bytes())?;
    }
    let (lo, hi) = region.bounds();
    for i in 0..d {
        w.write_all(&lo[i].to_le_bytes())?;
        w.write_all(&hi[i].to_le_bytes())?;
    }
    let mut mask: BitVec<u64, Lsb0> = BitVec::new();
    if !region.is_full_box() {
        crate::lattice::for_each_point(lo, hi, |p| mask.push(region.contains(p)));
    }
    w.write_all(&(mask.len() as u64).to_le_bytes())?;
    for word in mask.as_raw_slice() {
        w.write_all(&word.to_le_bytes())?;
    }
    w.write_all(&[match bc.kind() {
        BcKind::Free => 0u8,
        BcKind::Wired => 1,
        BcKind::Mixed => 2,
    }])?;
    w.write_all(&(bc.classes().len() as u32).to_le_bytes())?;
    for c in bc.classes() {
        w.write_all(&c.unwrap_or(u32::MAX).to_le_bytes())?;
    }
    w.write_all(&params.q.to_le_bytes())?;
    w.write_all(&params.p.to_le_bytes())?;
    w.write_all(&(params.overrides.len() as u32).to_le_bytes())?;
    for (&b, &s) in &params.overrides {
        w.write_all(&b.to_le_bytes())?;
        w.write_all(&s.to_le_bytes())?;
    }
    w.write_all(&(config.len() as u64).to_le_bytes())?;
    for word in config.words() {
        w.write_all(&word.to_le_bytes())?;
    }
    Ok(())
}

fn rd<const N: usize>(r: &mut impl Read) -> Result<[u8; N], ModelError> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)?;
    Ok(b)
}
fn rd_u64(r: &mut impl Read) -> Result<u64, ModelError> {
    Ok(u64::from_le_bytes(rd::<8>(r)?))
}
fn rd_i64(r: &mut impl Read) -> Result<i64, ModelError> {
    Ok(i64::from_le_bytes(rd::<8>(r)?))
}
fn rd_u32(r: &mut impl Read) -> Result<u32, ModelError> {
    Ok(u32::from_le_bytes(rd::<4>(r)?))
}
fn rd_f64(r: &mut impl Read) -> Result<f64, ModelError> {
    Ok(f64::from_le_bytes(rd::<8>(r)?))
}

fn rd_bits(r: &mut impl Read, n: usize) -> Result<BitVec<u64, Lsb0>, ModelError> {
    let words = n.div_ceil(64);
    let mut raw = Vec::with_capacity(words);
    for _ in 0..words {
        raw.push(rd_u64(r)?);
    }
    let mut bits = BitVec::<u64, Lsb0>::from_vec(raw);
    bits.truncate(n);
    Ok(bits)
}

pub struct Snapshot {
    pub region: Region,
    pub bc: BoundaryCondition,
    pub params: RCParams,
    pub config: BondConfig,
}

pub fn read_snapshot(r: &mut impl Read) -> Result<Snapshot, ModelError> {
    if &rd::<4>(r)? != MAGIC {
        return Err(ModelError::Snapshot("bad magic".into()));
    }
    let version = u16::from_le_bytes(rd::<2>(r)?);
    if version != VERSION {
        return Err(ModelError::Snapshot(format!("unsupported version {version}")));
    }
    let [d, internal] = rd::<2>(r)?;
    let d = d as usize;
    let [code] = rd::<1>(r)?;
    let args = [rd_i64(r)?, rd_i64(r)?, rd_i64(r)?];
    let kind = kind_from(code, args)?;
    let mut lo = vec![0; d];
    let mut hi = vec![0; d];
    for i in 0..d {
        lo[i] = rd_i64(r)?;
        hi[i] = rd_i64(r)?;
    }
    let scope = if internal == 1 { BondScope::Internal } else { BondScope::Touching };
    let mask_len = rd_u64(r)? as usize;
    let mask = rd_bits(r, mask_len)?;
    let region = if mask_len == 0 {
        Region::cuboid(&lo, &hi, kind, scope)?
    } else {
        let mut pts = Vec::new();
        let mut i = 0;
        crate::lattice::for_each_point(&lo, &hi, |p| {
            if mask.get(i).map_or(false, |b| *b) {
                pts.push(p.to_vec());
            }
            i += 1;
        });
        let mut reg = Region::custom(d, &pts, scope)?;
        if kind != RegionKind::Custom {
            reg = Region::from_predicate(&lo, &hi, kind, scope, |p| reg.contains(p))?;
        }
        reg
    };
    let [_kind] = rd::<1>(r)?;
    let nb = rd_u32(r)? as usize;
    let mut classes = Vec::with_capacity(nb);
    for _ in 0..nb {
        let c = rd_u32(r)?;
        classes.push((c != u32::MAX).then_some(c));
    }
    let bc = BoundaryCondition::mixed(&region, &classes)?;
    let q = rd_f64(r)?;
    let p = rd_f64(r)?;
    let mut params = RCParams::new(q, p)?;
    let no = rd_u32(r)?;
    for _ in 0..no {
        let b = rd_u32(r)?;
        let s = rd_f64(r)?;
        params = params.with_override(b, s)?;
    }
    let n = rd_u64(r)? as usize;
    if n != region.n_bonds() {
        return Err(ModelError::Snapshot(format!("{n} bond bits for a region with {} bonds", region.n_bonds())));
    }
    let config = BondConfig { bits: rd_bits(r, n)? };
    Ok(Snapshot { region, bc, params, config })
}
