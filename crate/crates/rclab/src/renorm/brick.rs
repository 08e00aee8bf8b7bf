//! Bricks: occupied blocks seen in the (x, y) plane, and the branching layout.

use serde::{Deserialize, Serialize};

use crate::lattice::{IBox, Orientation, PlacedBlock, Subfacet};
use crate::observables::field::canonical_bond;
use crate::observables::{BlockScan, BondField};

/// Connection-site slot of a brick, in the brick's own frame: `Right` is the
/// clockwise neighbour of its orientation (East for a north brick).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Slot {
    TopRight,
    TopLeft,
    SideRight,
    SideLeft,
}

impl Slot {
    pub const ALL: [Slot; 4] = [Slot::TopRight, Slot::TopLeft, Slot::SideRight, Slot::SideLeft];

    fn index(self) -> usize {
        self as usize
    }

    pub fn mirrored(self) -> Slot {
        match self {
            Slot::TopRight => Slot::TopLeft,
            Slot::TopLeft => Slot::TopRight,
            Slot::SideRight => Slot::SideLeft,
            Slot::SideLeft => Slot::SideRight,
        }
    }

    pub fn is_top(self) -> bool {
        matches!(self, Slot::TopRight | Slot::TopLeft)
    }

    /// Orientation of a block stacked on this slot of a block facing `o`.
    pub fn child_orientation(self, o: Orientation) -> Orientation {
        match self {
            Slot::TopRight | Slot::TopLeft => o,
            Slot::SideRight => o.cw(),
            Slot::SideLeft => o.ccw(),
        }
    }
}

/// The subfacet of `block` for a slot, with the transverse half chosen to
/// steer the transverse coordinates of the next anchor back toward 0.
pub fn slot_subfacet(block: &PlacedBlock, slot: Slot) -> Subfacet {
    let d = block.dim();
    let right = block.right();
    let cands = match slot {
        Slot::TopRight => block.top_subfacets_toward(right),
        Slot::TopLeft => block.top_subfacets_toward(right.opposite()),
        Slot::SideRight => block.side_subfacets_toward(right),
        Slot::SideLeft => block.side_subfacets_toward(right.opposite()),
    };
    cands
        .into_iter()
        .find(|s| {
            (0..d - 2).all(|a| if block.anchor[a] > 0 { s.hi[a] == 0 } else { s.lo[a] == 0 })
        })
        .expect("one subfacet per transverse orthant")
}

/// Global box of the possible anchors of a block stacked on `slot`.
pub fn attachment_region(block: &PlacedBlock, slot: Slot, k: i64) -> IBox {
    let sf = slot_subfacet(block, slot);
    let cs = sf.seed_centers(k, block.ell, block.h);
    let d = block.dim();
    let mut lo = vec![i64::MAX; d];
    let mut hi = vec![i64::MIN; d];
    for c in cs {
        let g = block.to_global(&c);
        for a in 0..d {
            lo[a] = lo[a].min(g[a]);
            hi[a] = hi[a].max(g[a]);
        }
    }
    IBox::new(lo, hi)
}

/// An occupied block with its four connection sites (global seed centres)
/// and, for each, the bonds of an open path from the base plaque to it.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Brick {
    pub block: PlacedBlock,
    pub k: i64,
    pub sites: [Vec<i64>; 4],
    #[serde(skip)]
    pub paths: [Vec<(Vec<i64>, usize)>; 4],
}

impl Brick {
    /// Reads the block from `field`; `None` unless it is occupied.
    pub fn examine<F: BondField + ?Sized>(field: &F, block: PlacedBlock, k: i64) -> Option<Brick> {
        let scan = BlockScan::new(field, &block, k);
        if !scan.occupied() {
            return None;
        }
        let mut sites: [Vec<i64>; 4] = Default::default();
        let mut paths: [Vec<(Vec<i64>, usize)>; 4] = Default::default();
        for slot in Slot::ALL {
            let sf = slot_subfacet(&block, slot);
            let c = scan.subfacet_seed(&sf).expect("occupied");
            let local = scan.witness_path(&c, sf.normal_axis()).expect("seed joined to the base");
            paths[slot.index()] = local
                .iter()
                .map(|(u, a)| {
                    let mut v = u.clone();
                    v[*a] += 1;
                    canonical_bond(&block.to_global(u), &block.to_global(&v))
                })
                .collect();
            sites[slot.index()] = block.to_global(&c);
        }
        Some(Brick { block, k, sites, paths })
    }

    pub fn site(&self, slot: Slot) -> &[i64] {
        &self.sites[slot.index()]
    }

    pub fn path(&self, slot: Slot) -> &[(Vec<i64>, usize)] {
        &self.paths[slot.index()]
    }

    pub fn orientation(&self) -> Orientation {
        self.block.orientation
    }

    /// Block stacked on a connection site.
    pub fn child(&self, slot: Slot) -> PlacedBlock {
        PlacedBlock {
            orientation: slot.child_orientation(self.block.orientation),
            anchor: self.sites[slot.index()].clone(),
            ell: self.block.ell,
            h: self.block.h,
        }
    }

    /// Steering: the top slot moving the next anchor toward the line through
    /// `axis` (a plane point) parallel to the brick's orientation.
    pub fn steer(&self, axis: (i64, i64)) -> Slot {
        let d = self.block.dim();
        let (rx, ry) = self.block.right().vector();
        let off = (self.block.anchor[d - 2] - axis.0) * rx + (self.block.anchor[d - 1] - axis.1) * ry;
        if off > 0 {
            Slot::TopLeft
        } else {
            Slot::TopRight
        }
    }
}

/// Plane projection (lo, hi) of a block.
pub fn plane_box(block: &PlacedBlock) -> ((i64, i64), (i64, i64)) {
    let d = block.dim();
    let (lo, hi) = block.bounds();
    ((lo[d - 2], lo[d - 1]), (hi[d - 2], hi[d - 1]))
}

/// Whether the bond supports B* of two blocks intersect.
pub fn supports_overlap(a: &PlacedBlock, b: &PlacedBlock) -> bool {
    let (alo, ahi) = a.interior_bounds();
    let (blo, bhi) = b.interior_bounds();
    IBox::new(alo, ahi).shares_bond_with(&IBox::new(blo, bhi))
}

/// One placement of the branching construction.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutStep {
    pub label: String,
    /// Index of the parent step; `None` for the start brick.
    pub parent: Option<usize>,
    /// `None` when the slot follows the steering rule.
    pub slot: Option<Slot>,
    pub orientation: Orientation,
}

/// The bifurcation stacked on a start brick facing `o`: B1..B3 along `o`,
/// a side branch off B2, B4..B7 turning to the other side, and a branch
/// along `o` off B6. With `mirror` false the first branch turns left of `o`
/// (North/West for a north start); `mirror` exchanges left and right.
///
/// Steps: 0 start, 1 B1, 2 B2, 3 B3, 4 first side branch, 5 B4, 6 B5, 7 B6,
/// 8 B7, 9 branch along `o`.
pub fn brick_layout_branch(o: Orientation, mirror: bool) -> Vec<LayoutStep> {
    let m = |s: Slot| if mirror { s.mirrored() } else { s };
    let left = if mirror { o.cw() } else { o.ccw() };
    let right = left.opposite();
    let step = |label: &str, parent: Option<usize>, slot: Option<Slot>, orientation| LayoutStep {
        label: label.into(),
        parent,
        slot,
        orientation,
    };
    vec![
        step("B0", None, None, o),
        step("B1", Some(0), None, o),
        step("B2", Some(1), Some(m(Slot::TopLeft)), o),
        step("B3", Some(2), Some(m(Slot::TopRight)), o),
        step("W", Some(2), Some(m(Slot::SideLeft)), left),
        step("B4", Some(3), Some(m(Slot::SideRight)), right),
        // a brick facing `right` has `o` on its left
        step("B5", Some(5), Some(m(Slot::TopLeft)), right),
        step("B6", Some(6), Some(m(Slot::TopLeft)), right),
        step("B7", Some(7), Some(m(Slot::TopRight)), right),
        step("N", Some(7), Some(m(Slot::SideLeft)), o),
    ]
}
