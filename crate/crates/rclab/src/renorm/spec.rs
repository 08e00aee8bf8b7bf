//! Renormalization parameters and occupied-block calibration.

use serde::{Deserialize, Serialize};

use crate::lattice::{build_block, BondScope, Orientation, rotate_plane};
use crate::observables::{estimate_events, EstimateError, EventSpec, McConfig};
use crate::rcmodel::{BoundaryCondition, RCParams};
use crate::stats::Estimate;

#[derive(Debug, thiserror::Error)]
pub enum RenormError {
    #[error("invalid renormalization parameters: {0}")]
    Invalid(String),
    #[error("no candidate block reaches 1 - eta = {target}; best lower bound {best_lower}")]
    Calibration { target: f64, best_lower: f64, best: Box<Option<Calibration>> },
    #[error(transparent)]
    Estimate(#[from] EstimateError),
}

/// (K, ell, h) inside the sampling block (L, H), failure budget eta and the
/// coarse scale N = 10L + 10H.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenormSpec {
    pub k: i64,
    pub ell: i64,
    pub h: i64,
    pub big_l: i64,
    pub big_h: i64,
    pub eta: f64,
    pub n: i64,
    pub d: usize,
    /// Calibrated occupied-block probability, when known.
    #[serde(default)]
    pub occupied: Option<Estimate>,
}

impl RenormSpec {
    pub fn new(k: i64, ell: i64, h: i64, big_l: i64, big_h: i64, eta: f64, d: usize) -> Result<RenormSpec, RenormError> {
        let s = RenormSpec { k, ell, h, big_l, big_h, eta, n: 10 * big_l + 10 * big_h, d, occupied: None };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), RenormError> {
        let bad = |m: String| Err(RenormError::Invalid(m));
        if self.d < 3 {
            return bad(format!("dimension {} < 3", self.d));
        }
        if self.k < 1 || self.k > self.ell || self.ell > self.big_l {
            return bad(format!("need 1 <= K <= ell <= L, got K={} ell={} L={}", self.k, self.ell, self.big_l));
        }
        if self.big_h < 3 * self.big_l {
            return bad(format!("need H >= 3L, got H={} L={}", self.big_h, self.big_l));
        }
        if self.h > self.big_h || 100 * (self.big_h - self.h) > self.big_h {
            return bad(format!("need 0 <= H - h <= H/100, got H={} h={}", self.big_h, self.h));
        }
        if self.h < 2 * self.k {
            return bad(format!("h={} leaves no room for side seeds of half-width {}", self.h, self.k));
        }
        if self.n != 10 * self.big_l + 10 * self.big_h {
            return bad(format!("N={} differs from 10L + 10H", self.n));
        }
        if !(0.0..1.0).contains(&self.eta) {
            return bad(format!("eta={} outside [0,1)", self.eta));
        }
        Ok(())
    }

    /// Half-width of the slab S_{L+ell} in the transverse axes.
    pub fn slab_half_width(&self) -> i64 {
        self.big_l + self.ell
    }

    /// Plane centre of square (i, j); squares are translates of
    /// {-N+1..N}^2 by 2N(i, j).
    pub fn square_center(&self, sq: (i64, i64)) -> (i64, i64) {
        (2 * self.n * sq.0, 2 * self.n * sq.1)
    }

    /// Plane bounds (lo, hi) of a square.
    pub fn square_bounds(&self, sq: (i64, i64)) -> ((i64, i64), (i64, i64)) {
        let (cx, cy) = self.square_center(sq);
        ((cx - self.n + 1, cy - self.n + 1), (cx + self.n, cy + self.n))
    }

    /// Target region of a square in direction `dir`: the segment
    /// {-N/2..N/2} x {N - 2H} rotated toward `dir` and moved to the square.
    pub fn target(&self, sq: (i64, i64), dir: Orientation) -> ((i64, i64), (i64, i64)) {
        let (cx, cy) = self.square_center(sq);
        let a = rotate_plane((-self.n / 2, self.n - 2 * self.big_h), dir.turns());
        let b = rotate_plane((self.n / 2, self.n - 2 * self.big_h), dir.turns());
        ((cx + a.0.min(b.0), cy + a.1.min(b.1)), (cx + a.0.max(b.0), cy + a.1.max(b.1)))
    }

    /// (1 - eta)^100, the per-square lower bound on the conditional success.
    pub fn alpha_bound(&self) -> f64 {
        (1.0 - self.eta).powi(100)
    }
}

/// Result of the block search.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Calibration {
    pub spec: RenormSpec,
    /// Every candidate (K, ell, h) with its occupied-block estimate.
    pub candidates: Vec<(i64, i64, i64, Estimate)>,
}

/// Searches K in {2,3,4}, h down from H (within H/100) and ell up to L for
/// the block B(ell,h) with the highest occupied probability, estimated on
/// B(L,H) with internal bonds under `bc`. Succeeds when the lower end of the
/// best interval is at least 1 - eta.
pub fn calibrate_block(
    params: &RCParams,
    bc: &str,
    big_l: i64,
    big_h: i64,
    eta: f64,
    d: usize,
    mc: &McConfig,
) -> Result<Calibration, RenormError> {
    let region = build_block(big_l, big_h, d)
        .map_err(|e| RenormError::Invalid(e.to_string()))?
        .with_scope(BondScope::Internal);
    let bcr = BoundaryCondition::parse(&region, bc).map_err(|e| RenormError::Invalid(e.to_string()))?;
    let mut cands = Vec::new();
    for k in 2..=4 {
        let mut h = big_h;
        while 100 * (big_h - h) <= big_h && h >= 2 * k {
            for ell in k..=big_l {
                if RenormSpec::new(k, ell, h, big_l, big_h, eta, d).is_ok() {
                    cands.push((k, ell, h));
                }
            }
            h -= 1;
        }
    }
    if cands.is_empty() {
        return Err(RenormError::Invalid(format!("no admissible (K, ell, h) for L={big_l} H={big_h}")));
    }
    let specs: Vec<EventSpec> = cands.iter().map(|&(k, ell, h)| EventSpec::Occupied { k, ell, h }).collect();
    let ests = estimate_events(&region, params, &bcr, &specs, mc)?;
    let mut best = 0;
    for i in 1..ests.len() {
        let (a, b) = (&ests[i], &ests[best]);
        if (a.lower(), a.value) > (b.lower(), b.value) {
            best = i;
        }
    }
    let (k, ell, h) = cands[best];
    let mut spec = RenormSpec::new(k, ell, h, big_l, big_h, eta, d)?;
    spec.occupied = Some(ests[best].clone());
    let candidates = cands.iter().zip(&ests).map(|(&(k, l, h), e)| (k, l, h, e.clone())).collect();
    let cal = Calibration { spec, candidates };
    let lower = ests[best].lower();
    if lower >= 1.0 - eta {
        Ok(cal)
    } else {
        Err(RenormError::Calibration { target: 1.0 - eta, best_lower: lower, best: Box::new(Some(cal)) })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::Kernel;

    #[test]
    fn invariants_are_enforced() {
        let s = RenormSpec::new(2, 4, 18, 6, 18, 0.1, 3).unwrap();
        assert_eq!(s.n, 240);
        assert!(RenormSpec::new(2, 4, 17, 6, 18, 0.1, 3).is_err());
        assert!(RenormSpec::new(2, 4, 17, 6, 17, 0.1, 3).is_err());
        assert!(RenormSpec::new(2, 7, 18, 6, 18, 0.1, 3).is_err());
        assert!(RenormSpec::new(5, 4, 18, 6, 18, 0.1, 3).is_err());
        // h may drop by one once H >= 100
        assert!(RenormSpec::new(2, 4, 99, 6, 100, 0.1, 3).is_ok());
        assert!(RenormSpec::new(2, 4, 98, 6, 100, 0.1, 3).is_err());
        let mut t = s.clone();
        t.n += 1;
        assert!(t.validate().is_err());
    }

    #[test]
    fn north_target_is_exact() {
        let s = RenormSpec::new(1, 2, 9, 3, 9, 0.1, 3).unwrap();
        assert_eq!(s.n, 120);
        assert_eq!(s.target((0, 0), Orientation::North), ((-60, 102), (60, 102)));
        assert_eq!(s.target((0, 0), Orientation::East), ((102, -60), (102, 60)));
        assert_eq!(s.target((0, 0), Orientation::South), ((-60, -102), (60, -102)));
        assert_eq!(s.target((0, 1), Orientation::West), ((-102, 180), (-102, 300)));
        assert_eq!(s.square_bounds((1, 0)), ((121, -119), (360, 120)));
    }

    #[test]
    fn trivial_calibrations() {
        let mc = McConfig::new(64, Kernel::Product, 1);
        let one = calibrate_block(&RCParams::new(1.0, 1.0).unwrap(), "free", 3, 9, 0.1, 3, &mc).unwrap();
        assert_eq!(one.spec.occupied.as_ref().unwrap().value, 1.0);
        let zero = calibrate_block(&RCParams::new(1.0, 0.0).unwrap(), "free", 3, 9, 0.1, 3, &mc);
        match zero {
            Err(RenormError::Calibration { best_lower, best, .. }) => {
                assert_eq!(best_lower, 0.0);
                assert_eq!(best.unwrap().spec.occupied.unwrap().value, 0.0);
            }
            other => panic!("{other:?}"),
        }
    }
}
