//! Conditional success of square inspections, and the 2-d site-percolation
//! threshold it must exceed.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::rng::stream;
use crate::stats::{Estimate, MIN_BATCHES};
use crate::uf::UnionFind;

use super::growth::Growth;
use super::spec::RenormSpec;

/// Inspections below which a report is flagged as thin.
pub const MIN_EVENTS: usize = 1000;

/// One inspection after the root, with its history stratum.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InspectionEvent {
    pub good_neighbors: usize,
    pub success: bool,
}

/// Inspection events of a run in inspection order.
pub fn inspection_events(g: &Growth) -> Vec<InspectionEvent> {
    let mut v: Vec<_> = g
        .squares
        .iter()
        .filter(|s| s.rank.map_or(false, |r| r > 0))
        .map(|s| (s.rank.unwrap(), InspectionEvent { good_neighbors: s.good_neighbors, success: s.is_good() }))
        .collect();
    v.sort_by_key(|e| e.0);
    v.into_iter().map(|e| e.1).collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Stratum {
    pub good_neighbors: usize,
    pub n: usize,
    pub successes: usize,
    pub estimate: Estimate,
    /// Too few events for an interval.
    pub sparse: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AlphaReport {
    pub events: usize,
    pub strata: Vec<Stratum>,
    /// Smallest stratum success frequency among non-sparse strata.
    pub alpha: Option<Estimate>,
    /// 1 - calibrated occupied probability.
    pub eta_block: Option<f64>,
    /// (1 - eta_block)^100.
    pub bound: Option<f64>,
    pub flags: Vec<String>,
}

/// Worst-case conditional success frequency over strata of the number of
/// previously good neighbours. Pooling histories is concatenation.
pub fn estimate_alpha(events: &[InspectionEvent], spec: Option<&RenormSpec>) -> AlphaReport {
    let mut flags = Vec::new();
    if events.len() < MIN_EVENTS {
        flags.push(format!("{} inspection events < {MIN_EVENTS}", events.len()));
    }
    let mut strata = Vec::new();
    for k in 1..=4 {
        let xs: Vec<f64> = events.iter().filter(|e| e.good_neighbors == k).map(|e| f64::from(u8::from(e.success))).collect();
        if xs.is_empty() {
            continue;
        }
        let estimate = Estimate::from_iid(&xs, "stratum frequency");
        let sparse = xs.len() < MIN_BATCHES;
        if sparse {
            flags.push(format!("stratum {k} holds {} events", xs.len()));
        }
        strata.push(Stratum { good_neighbors: k, n: xs.len(), successes: xs.iter().filter(|&&x| x > 0.5).count(), estimate, sparse });
    }
    let alpha = strata
        .iter()
        .filter(|s| !s.sparse)
        .min_by(|a, b| a.estimate.value.partial_cmp(&b.estimate.value).unwrap())
        .map(|s| s.estimate.clone());
    if alpha.is_none() {
        flags.push("no stratum large enough for an estimate".into());
    }
    let eta_block = spec.and_then(|s| s.occupied.as_ref()).map(|e| 1.0 - e.value);
    let bound = eta_block.map(|e| (1.0 - e).powi(100));
    AlphaReport { events: events.len(), strata, alpha, eta_block, bound, flags }
}

/// Site percolation on an n x n square: the occupied fraction at which a
/// left-right crossing first appears, averaged over independent orderings.
pub fn site_percolation_threshold(n: usize, samples: usize, seed: u64) -> Estimate {
    let cells = n * n;
    let (left, right) = (cells as u32, cells as u32 + 1);
    let mut order: Vec<u32> = (0..cells as u32).collect();
    let mut xs = Vec::with_capacity(samples);
    let mut uf = UnionFind::new(cells + 2);
    let mut open = vec![false; cells];
    for s in 0..samples {
        let mut rng = stream(seed, s as u64);
        order.shuffle(&mut rng);
        uf.reset();
        open.iter_mut().for_each(|o| *o = false);
        for (t, &c) in order.iter().enumerate() {
            let (x, y) = (c as usize % n, c as usize / n);
            open[c as usize] = true;
            if x == 0 {
                uf.union(c, left);
            }
            if x + 1 == n {
                uf.union(c, right);
            }
            let mut nb = Vec::with_capacity(4);
            if x > 0 {
                nb.push(c - 1);
            }
            if x + 1 < n {
                nb.push(c + 1);
            }
            if y > 0 {
                nb.push(c - n as u32);
            }
            if y + 1 < n {
                nb.push(c + n as u32);
            }
            for w in nb {
                if open[w as usize] {
                    uf.union(c, w);
                }
            }
            if uf.same(left, right) {
                xs.push((t + 1) as f64 / cells as f64);
                break;
            }
        }
    }
    Estimate::from_iid(&xs, "site percolation crossing fraction")
}
