//! Event catalogue and exact indicators.

use serde::{Deserialize, Serialize};

use crate::lattice::{for_each_point, place_block, Orientation, Region};
use crate::rcmodel::{connected, BondConfig, BoundaryCondition};

use super::block::BlockScan;
use super::field::ConfigField;

/// An event with its geometric parameters. Block events refer to the block
/// B(ell,h) at the origin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum EventSpec {
    /// No open path inside R(n, delta) between its top and bottom faces;
    /// `half_height` is delta*n.
    Disconnection { n: i64, half_height: i64 },
    /// Open path inside the box `lo..hi` between its two faces normal to `axis`.
    FaceCrossing { lo: Vec<i64>, hi: Vec<i64>, axis: usize },
    /// All bonds of the plaque b^axis_k(center) open.
    SeedPresent { center: Vec<i64>, axis: usize, k: i64 },
    /// C_K^i (or C_K without index).
    TopSeed { k: i64, ell: i64, h: i64, index: Option<usize> },
    /// Ĉ_K^j (or Ĉ_K without index).
    LateralSeed { k: i64, ell: i64, h: i64, index: Option<usize> },
    /// Every C_K^i and every Ĉ_K^j.
    Occupied { k: i64, ell: i64, h: i64 },
    /// Y(ell,h) >= at_least.
    TopCount { k: i64, ell: i64, h: i64, at_least: usize },
    /// X(ell,h) >= at_least.
    SideCount { k: i64, ell: i64, h: i64, at_least: usize },
    /// Open path from the origin to a site outside {-n..n}^d.
    BoxPercolation { n: i64 },
    /// x and y in the same cluster of omega v pi.
    TwoPoint { x: Vec<i64>, y: Vec<i64> },
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EventError {
    #[error("event {0} does not fit the region: {1}")]
    Mismatch(String, String),
}

impl EventSpec {
    /// Short identifier used in tables.
    pub fn id(&self) -> String {
        match self {
            EventSpec::Disconnection { n, half_height } => format!("disconnection(n={n},dn={half_height})"),
            EventSpec::FaceCrossing { axis, .. } => format!("face_crossing(axis={axis})"),
            EventSpec::SeedPresent { axis, k, .. } => format!("seed(axis={axis},k={k})"),
            EventSpec::TopSeed { k, ell, h, index } => match index {
                Some(i) => format!("C_{k}^{i}({ell},{h})"),
                None => format!("C_{k}({ell},{h})"),
            },
            EventSpec::LateralSeed { k, ell, h, index } => match index {
                Some(j) => format!("Chat_{k}^{j}({ell},{h})"),
                None => format!("Chat_{k}({ell},{h})"),
            },
            EventSpec::Occupied { k, ell, h } => format!("occupied_{k}({ell},{h})"),
            EventSpec::TopCount { k, ell, h, at_least } => format!("Y_{k}({ell},{h})>={at_least}"),
            EventSpec::SideCount { k, ell, h, at_least } => format!("X_{k}({ell},{h})>={at_least}"),
            EventSpec::BoxPercolation { n } => format!("box_percolation(n={n})"),
            EventSpec::TwoPoint { .. } => "two_point".into(),
        }
    }

    /// Whether the indicator is non-decreasing in the configuration.
    pub fn is_increasing(&self) -> bool {
        !matches!(self, EventSpec::Disconnection { .. })
    }

    fn mismatch(&self, why: impl Into<String>) -> EventError {
        EventError::Mismatch(self.id(), why.into())
    }

    /// Checks the parameters against the region.
    pub fn validate(&self, region: &Region) -> Result<(), EventError> {
        let d = region.dim();
        let covers = |lo: &[i64], hi: &[i64]| -> bool {
            let mut ok = true;
            for_each_point(lo, hi, |p| ok = ok && region.node_of(p).is_some());
            ok
        };
        let block = |k: i64, ell: i64, h: i64| -> Result<(), EventError> {
            if k < 1 || k > ell || h < 1 {
                return Err(self.mismatch("need 1 <= k <= ell and h >= 1"));
            }
            let (lo, hi) = crate::lattice::block_bounds(ell, h, d);
            if !covers(&lo, &hi) {
                return Err(self.mismatch("block not inside region"));
            }
            Ok(())
        };
        match self {
            EventSpec::Disconnection { n, half_height } => {
                let mut lo = vec![-n; d];
                let mut hi = vec![*n; d];
                lo[d - 1] = -half_height;
                hi[d - 1] = *half_height;
                if !covers(&lo, &hi) {
                    return Err(self.mismatch("rectangle not inside region"));
                }
            }
            EventSpec::FaceCrossing { lo, hi, axis } => {
                if lo.len() != d || hi.len() != d || *axis >= d || !covers(lo, hi) {
                    return Err(self.mismatch("box not inside region"));
                }
            }
            EventSpec::SeedPresent { center, axis, k } => {
                if center.len() != d || *axis >= d || *k < 1 {
                    return Err(self.mismatch("bad plaque"));
                }
            }
            EventSpec::TopSeed { k, ell, h, .. }
            | EventSpec::LateralSeed { k, ell, h, .. }
            | EventSpec::Occupied { k, ell, h }
            | EventSpec::TopCount { k, ell, h, .. }
            | EventSpec::SideCount { k, ell, h, .. } => block(*k, *ell, *h)?,
            EventSpec::BoxPercolation { .. } => {
                if !region.contains(&vec![0; d]) {
                    return Err(self.mismatch("origin outside region"));
                }
            }
            EventSpec::TwoPoint { x, y } => {
                if !region.contains(x) || !region.contains(y) {
                    return Err(self.mismatch("points outside region"));
                }
            }
        }
        Ok(())
    }
}

/// Open path, using only bonds with both endpoints in the box `lo..hi`,
/// between the faces `x_axis = lo[axis]` and `x_axis = hi[axis]`.
pub fn crossing_within(region: &Region, open: impl Fn(usize) -> bool, lo: &[i64], hi: &[i64], axis: usize) -> bool {
    let in_box = |p: &[i64]| p.iter().zip(lo).zip(hi).all(|((x, a), b)| a <= x && x <= b);
    let n = region.n_nodes();
    let mut seen = vec![false; n];
    let mut stack = Vec::new();
    for v in 0..n as u32 {
        let c = region.coords(v);
        if c[axis] == lo[axis] && in_box(c) {
            seen[v as usize] = true;
            stack.push(v);
        }
    }
    while let Some(v) = stack.pop() {
        if region.coords(v)[axis] == hi[axis] {
            return true;
        }
        for &(w, e) in region.neighbors(v) {
            if !seen[w as usize] && open(e as usize) && in_box(region.coords(w)) {
                seen[w as usize] = true;
                stack.push(w);
            }
        }
    }
    false
}

/// Open path from the origin to a node outside `{-n..n}^d`.
pub fn reaches_outside(region: &Region, open: impl Fn(usize) -> bool, n: i64) -> bool {
    let Some(o) = region.node_of(&vec![0; region.dim()]) else { return false };
    let mut seen = vec![false; region.n_nodes()];
    seen[o as usize] = true;
    let mut stack = vec![o];
    while let Some(v) = stack.pop() {
        if region.coords(v).iter().any(|c| c.abs() > n) {
            return true;
        }
        for &(w, e) in region.neighbors(v) {
            if !seen[w as usize] && open(e as usize) {
                seen[w as usize] = true;
                stack.push(w);
            }
        }
    }
    false
}

/// R(n, delta) bounds with `half_height = delta*n`.
pub fn rectangle_bounds(n: i64, half_height: i64, d: usize) -> (Vec<i64>, Vec<i64>) {
    let mut lo = vec![-n; d];
    let mut hi = vec![n; d];
    lo[d - 1] = -half_height;
    hi[d - 1] = half_height;
    (lo, hi)
}

/// Exact indicator of `spec` on a configuration.
pub fn eval_event(region: &Region, config: &BondConfig, bc: &BoundaryCondition, spec: &EventSpec) -> Result<bool, EventError> {
    spec.validate(region)?;
    Ok(eval_unchecked(region, config, bc, spec))
}

/// [`eval_event`] without the geometry check, for hot loops after one
/// validation.
pub fn eval_unchecked(region: &Region, config: &BondConfig, bc: &BoundaryCondition, spec: &EventSpec) -> bool {
    let d = region.dim();
    let open = |e: usize| config.get(e);
    let scan = |k: i64, ell: i64, h: i64| {
        let field = ConfigField::new(region, config);
        BlockScan::new(&field, &place_block(Orientation::North, &vec![0; d], ell, h), k)
    };
    match spec {
        EventSpec::Disconnection { n, half_height } => {
            let (lo, hi) = rectangle_bounds(*n, *half_height, d);
            !crossing_within(region, open, &lo, &hi, d - 1)
        }
        EventSpec::FaceCrossing { lo, hi, axis } => crossing_within(region, open, lo, hi, *axis),
        EventSpec::SeedPresent { center, axis, k } => {
            let mut lo: Vec<i64> = center.iter().map(|c| c - k).collect();
            let mut hi: Vec<i64> = center.iter().map(|c| c + k).collect();
            lo[*axis] = center[*axis];
            hi[*axis] = center[*axis];
            let mut ok = true;
            for_each_point(&lo, &hi, |u| {
                for a in 0..d {
                    if a != *axis && u[a] < hi[a] {
                        ok = ok && region.bond_at(u, a).map_or(false, |e| config.get(e as usize));
                    }
                }
            });
            ok
        }
        EventSpec::TopSeed { k, ell, h, index } => scan(*k, *ell, *h).top_event(*index),
        EventSpec::LateralSeed { k, ell, h, index } => scan(*k, *ell, *h).lateral_event(*index),
        EventSpec::Occupied { k, ell, h } => scan(*k, *ell, *h).occupied(),
        EventSpec::TopCount { k, ell, h, at_least } => scan(*k, *ell, *h).count_y() >= *at_least,
        EventSpec::SideCount { k, ell, h, at_least } => scan(*k, *ell, *h).count_x() >= *at_least,
        EventSpec::BoxPercolation { n } => reaches_outside(region, open, *n),
        EventSpec::TwoPoint { x, y } => {
            let a = region.node_of(x).expect("validated");
            let b = region.node_of(y).expect("validated");
            connected(region, config, bc, &[a], &[b])
        }
    }
}

/// Y(ell,h) on a configuration of a region containing B(ell,h).
pub fn count_y(region: &Region, config: &BondConfig, k: i64, ell: i64, h: i64) -> usize {
    let field = ConfigField::new(region, config);
    BlockScan::new(&field, &place_block(Orientation::North, &vec![0; region.dim()], ell, h), k).count_y()
}

/// X(ell,h) on a configuration of a region containing B(ell,h).
pub fn count_x(region: &Region, config: &BondConfig, k: i64, ell: i64, h: i64) -> usize {
    let field = ConfigField::new(region, config);
    BlockScan::new(&field, &place_block(Orientation::North, &vec![0; region.dim()], ell, h), k).count_x()
}
