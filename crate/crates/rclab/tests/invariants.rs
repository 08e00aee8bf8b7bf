use proptest::prelude::*;

use rclab::lattice::{rotate_plane, BondScope, Orientation, Region, RegionKind};
use rclab::observables::{estimate_many, write_csv, McConfig};
use rclab::rcmodel::{BoundaryCondition, RCParams};
use rclab::renorm::RenormSpec;
use rclab::sampler::{enumerate_exact, Kernel};
use rclab::stats::{pool, BatchSeries};
use rclab::threshold::{box_percolation_curve, fk_to_ising, ising_to_fk};

proptest! {
    #[test]
    fn ising_map_round_trips_and_increases(b in 0.0f64..5.0, db in 0.001f64..1.0) {
        let p = ising_to_fk(b);
        prop_assert!((0.0..1.0).contains(&p));
        prop_assert!((fk_to_ising(p) - b).abs() <= 1e-12 * b.max(1e-3));
        prop_assert!(ising_to_fk(b + db) > p);
    }

    #[test]
    fn squares_tile_and_targets_rotate(i in -5i64..5, j in -5i64..5, l in 1i64..4) {
        let s = RenormSpec::new(1, l, 3 * l, l, 3 * l, 0.1, 3).unwrap();
        let (lo, hi) = s.square_bounds((i, j));
        let (lo_e, _) = s.square_bounds((i + 1, j));
        let (lo_n, _) = s.square_bounds((i, j + 1));
        prop_assert_eq!(hi.0 + 1, lo_e.0);
        prop_assert_eq!(hi.1 + 1, lo_n.1);
        prop_assert_eq!(hi.0 - lo.0 + 1, 2 * s.n);
        let c = s.square_center((i, j));
        let (a, b) = s.target((0, 0), Orientation::North);
        for dir in Orientation::ALL {
            let ra = rotate_plane(a, dir.turns());
            let rb = rotate_plane(b, dir.turns());
            let want = (
                (c.0 + ra.0.min(rb.0), c.1 + ra.1.min(rb.1)),
                (c.0 + ra.0.max(rb.0), c.1 + ra.1.max(rb.1)),
            );
            prop_assert_eq!(s.target((i, j), dir), want);
        }
    }

    #[test]
    fn pooling_ignores_file_order(
        means in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 1..6), 1..5),
        rot in 0usize..5,
    ) {
        let series: Vec<BatchSeries> = means
            .iter()
            .enumerate()
            .map(|(r, m)| BatchSeries { replica: r as u64, batch_size: 10, means: m.clone() })
            .collect();
        let mut shuffled = series.clone();
        let k = rot % shuffled.len();
        shuffled.rotate_left(k);
        prop_assert_eq!(pool(&series, "x"), pool(&shuffled, "x"));
    }
}

/// Heat-bath and cluster chains agree with each other and with enumeration
/// on every bond marginal at q = 2.
#[test]
fn heat_bath_and_cluster_marginals_agree() {
    let r = Region::cuboid(&[0, 0], &[2, 1], RegionKind::Custom, BondScope::Touching).unwrap();
    let bc = BoundaryCondition::parse(&r, "mixed:top").unwrap();
    let params = RCParams::new(2.0, 0.55).unwrap();
    let exact = enumerate_exact(&r, &params, &bc).unwrap();
    let f = |st: &mut rclab::sampler::ChainState| st.omega().iter().map(|&w| f64::from(u8::from(w))).collect();
    let hb = estimate_many(&r, &params, &bc, &McConfig::new(40_000, Kernel::HeatBath, 1), "hb", &f).unwrap();
    let cl = estimate_many(&r, &params, &bc, &McConfig::new(40_000, Kernel::Cluster, 2), "cl", &f).unwrap();
    for e in 0..r.n_bonds() {
        let d = hb[e].minus(&cl[e]);
        assert!(d.value.abs() <= 3.0 * d.se.unwrap() + 1e-12, "bond {e}: {} vs {}", hb[e].value, cl[e].value);
        let m = exact.marginal(e);
        assert!((hb[e].value - m).abs() <= 4.0 * hb[e].se.unwrap() + 1e-12, "bond {e}: hb {} exact {m}", hb[e].value);
    }
}

#[test]
fn box_curve_rises_with_p_and_exports() {
    let mc = McConfig::new(1_000, Kernel::Cluster, 3);
    let ps = [0.2, 0.35, 0.5, 0.65];
    let c = box_percolation_curve(&[3], &ps, 2.0, 3, &mc).unwrap();
    for w in c.windows(2) {
        let d = w[1].estimate.minus(&w[0].estimate);
        assert!(d.value >= -3.0 * d.se.unwrap(), "p={} -> {}", w[0].p, w[1].p);
    }
    let rows: Vec<_> = c
        .iter()
        .map(|pt| rclab::observables::EstimateRow::new("box", format!("p={}", pt.p), &pt.estimate))
        .collect();
    let mut buf = Vec::new();
    write_csv(&rows, &mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap().lines().count(), ps.len() + 1);
}
