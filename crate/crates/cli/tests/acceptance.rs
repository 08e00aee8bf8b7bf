//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! `ACCEPTANCE=C1,C4 cargo test --test acceptance` runs a subset.

use std::sync::OnceLock;
use std::time::Instant;

use rclab::lattice::{BondScope, Region, RegionKind};
use rclab::observables::{
    estimate_events, estimate_many, mixing_gap, surface_tension_estimate, EventSpec, HashedField, McConfig,
    TensionConfig,
};
use rclab::rcmodel::{connected, BoundaryCondition, RCParams};
use rclab::renorm::{
    calibrate_block, estimate_alpha, grow_cluster, inspection_events, site_percolation_threshold,
    verify_renormalized_path, RenormError, RenormSpec,
};
use rclab::rng::replica_stream;
use rclab::sampler::{enumerate_exact, enumerate_ising, run_chain, ExteriorSpin, Kernel, Schedule};
use rclab::stats::Estimate;
use rclab::threshold::{
    estimate_box_threshold, estimate_slab_threshold, fk_to_ising, ising_to_fk, BisectionConfig, ThresholdReport,
};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn mc(samples: usize, kernel: Kernel, seed: u64) -> McConfig {
    let mut m = McConfig::new(samples, kernel, seed);
    m.burn_in = 500;
    m
}

// ---------------------------------------------------------------- C1

fn corpus() -> Vec<(Region, &'static str)> {
    use BondScope::{Internal as I, Touching as T};
    let g = |lo: &[i64], hi: &[i64], s: BondScope| Region::cuboid(lo, hi, RegionKind::Custom, s).unwrap();
    let square_minus_corner: Vec<Vec<i64>> =
        (0..3).flat_map(|x| (0..3).map(move |y| vec![x, y])).filter(|v| v != &vec![2, 2]).collect();
    let cube_minus_corner: Vec<Vec<i64>> = (0..8)
        .map(|m| vec![m & 1, (m >> 1) & 1, (m >> 2) & 1])
        .filter(|v| v != &vec![1, 1, 1])
        .collect();
    let smc = || Region::custom(2, &square_minus_corner, I).unwrap();
    vec![
        (g(&[0], &[1], I), "free"),
        (g(&[0], &[2], I), "free"),
        (g(&[0], &[3], I), "wired"),
        (g(&[0], &[2], T), "free"),
        (g(&[0], &[2], T), "wired"),
        (g(&[0], &[1], T), "mixed:x0+"),
        (g(&[0, 0], &[1, 1], I), "free"),
        (g(&[0, 0], &[1, 1], I), "wired"),
        (g(&[0, 0], &[1, 2], I), "free"),
        (g(&[0, 0], &[1, 2], I), "mixed:top,bottom"),
        (smc(), "free"),
        (smc(), "wired"),
        (smc(), "mixed:top,bottom"),
        (g(&[0, 0], &[1, 0], T), "free"),
        (g(&[0, 0], &[1, 0], T), "wired"),
        (g(&[0, 0], &[2, 0], T), "mixed:top,bottom"),
        (g(&[0, 0], &[2, 0], T), "mixed:lateral"),
        (g(&[0, 0, 0], &[1, 1, 0], I), "free"),
        (g(&[0, 0, 0], &[1, 1, 0], I), "wired"),
        (Region::custom(3, &cube_minus_corner, I).unwrap(), "mixed:top,bottom"),
        (g(&[0, 0], &[3, 1], I), "free"),
        (g(&[0, 0], &[3, 1], I), "mixed:x0-,x0+"),
        (g(&[0], &[5], T), "mixed:x0-,x0+"),
    ]
}

/// Expected TV of an exact iid sampler with n draws (normal approximation).
fn noise_floor(probs: &[f64], n: f64) -> f64 {
    0.5 * probs.iter().map(|p| (2.0 * p * (1.0 - p) / (std::f64::consts::PI * n)).sqrt()).sum::<f64>()
}

fn c1() -> Verdict {
    let qs = [1.0, 1.5, 2.0, 3.0];
    let ps = [0.3, 0.5, 0.7];
    let samples = 1_000_000;
    let thin = 2;
    let mut worst = (0.0f64, String::new());
    let mut fails = Vec::new();
    let mut floor = 0.0f64;
    let graphs = corpus();
    for (i, (r, bcd)) in graphs.iter().enumerate() {
        assert!(r.n_bonds() <= 10, "graph {i} has {} bonds", r.n_bonds());
        let (q, p) = (qs[i % 4], ps[i % 3]);
        let params = RCParams::new(q, p).unwrap();
        let bc = BoundaryCondition::parse(r, bcd).unwrap();
        let table = enumerate_exact(r, &params, &bc).unwrap();
        let mut counts = vec![0u64; 1 << r.n_bonds()];
        let schedule = Schedule { sweeps: 1000 + samples * thin, burn_in: 1000, thin, kernel: Kernel::HeatBath };
        run_chain(r, &params, &bc, &schedule, replica_stream(100 + i as u64, 0, 0), |st| {
            let m = st.omega().iter().enumerate().fold(0usize, |m, (e, &w)| m | (usize::from(w) << e));
            counts[m] += 1;
        })
        .unwrap();
        let tv = table.tv_to_counts(&counts);
        floor = floor.max(noise_floor(table.probs(), samples as f64));
        let tag = format!("g{i}(bonds={},{bcd},q={q},p={p})", r.n_bonds());
        if tv > worst.0 {
            worst = (tv, tag.clone());
        }
        if tv >= 0.02 {
            fails.push(format!("{tag} tv={tv:.4}"));
        }
    }
    verdict(
        fails.is_empty() && graphs.len() >= 20,
        format!(
            "{} graphs, 1e6 samples (thin {thin}) each; worst TV {:.4} on {}; largest iid noise floor {floor:.4}; failures {:?}",
            graphs.len(),
            worst.0,
            worst.1,
            fails
        ),
    )
}

// ---------------------------------------------------------------- C2

fn c2() -> Verdict {
    let r = Region::custom(1, &[vec![0], vec![1]], BondScope::Internal).unwrap();
    let bc = BoundaryCondition::free(&r);
    let mut worst = 0.0f64;
    let mut fails = Vec::new();
    let mut n = 0;
    for (i, &p) in [0.2, 0.5, 0.8].iter().enumerate() {
        for (j, &q) in [1.5, 2.0, 4.0].iter().enumerate() {
            let params = RCParams::new(q, p).unwrap();
            let m = mc(200_000, Kernel::HeatBath, (10 * i + j) as u64);
            let e = estimate_many(&r, &params, &bc, &m, "heat-bath", &|st| vec![f64::from(u8::from(st.omega()[0]))])
                .unwrap()
                .remove(0);
            let target = p / (p + (1.0 - p) * q);
            let z = (e.value - target).abs() / e.sigma();
            worst = worst.max(z);
            n += 1;
            if !(z <= 3.0) {
                fails.push(format!("p={p} q={q}: {:.5} vs {target:.5}", e.value));
            }
        }
    }
    verdict(fails.is_empty(), format!("{n} (p,q) pairs; worst deviation {worst:.2} sigma; failures {fails:?}"))
}

// ---------------------------------------------------------------- C3

/// Block with its bottom face at height 0: exterior bonds leaving the bottom
/// carry the field, all other bonds the coupling.
fn es_check(r: &Region, origin: &[i64], beta: f64, s: f64) -> f64 {
    let d = r.dim();
    let h = -0.5 * (-s).ln_1p();
    let bottom: Vec<bool> = r
        .bonds()
        .iter()
        .map(|b| b.axis as usize == d - 1 && !r.is_inner(b.a) && r.coords(b.a)[d - 1] < 0)
        .collect();
    let couplings: Vec<f64> = bottom.iter().map(|&bt| if bt { h } else { beta }).collect();
    let ising = enumerate_ising(r, &couplings, &vec![0.0; r.n_inner()], ExteriorSpin::Plus).unwrap();
    let o = r.node_of(origin).unwrap();
    let mut params = RCParams::new(2.0, ising_to_fk(beta)).unwrap();
    for (e, &bt) in bottom.iter().enumerate() {
        if bt {
            params = params.with_override(e as u32, s).unwrap();
        }
    }
    let bc = BoundaryCondition::wired(r);
    let table = enumerate_exact(r, &params, &bc).unwrap();
    let ext: Vec<u32> = (r.n_inner() as u32..r.n_nodes() as u32).collect();
    let fk = table.event_prob(|c| connected(r, c, &bc, &[o], &ext));
    (ising.magnetization(o) - fk).abs()
}

fn c3() -> Verdict {
    let t = Instant::now();
    let blocks = [
        (Region::cuboid(&[0, 0, 0], &[1, 1, 0], RegionKind::Custom, BondScope::Touching).unwrap(), vec![0, 0, 0]),
        (Region::cuboid(&[-1, 0], &[1, 1], RegionKind::Custom, BondScope::Touching).unwrap(), vec![0, 0]),
    ];
    let pairs = [(0.1, 0.2), (0.4, 0.5), (0.7, 0.1), (1.0, 0.9), (0.25, 0.75)];
    let mut worst = 0.0f64;
    for (r, o) in &blocks {
        assert!(r.n_inner() <= 20);
        for &(b, s) in &pairs {
            worst = worst.max(es_check(r, o, b, s));
        }
    }
    verdict(
        worst <= 1e-10 && t.elapsed().as_secs() < 60,
        format!("{} blocks x {} (beta,s) pairs; max |mu - Phi| = {worst:.2e}; {:.1}s", blocks.len(), pairs.len(), t.elapsed().as_secs_f64()),
    )
}

// ---------------------------------------------------------------- C4

fn c4() -> Verdict {
    let m = mc(40_000, Kernel::Cluster, 4);
    let reps: Vec<_> = [2, 3, 4].iter().map(|&k| mixing_gap(k, 0.5, 0.5, 2.0, 3, &m).unwrap()).collect();
    let mut ok = true;
    let mut text = Vec::new();
    for r in &reps {
        text.push(format!("K={}: {:.5}±{:.5}", r.k, r.gap.value, r.gap.ci.unwrap_or(f64::NAN)));
    }
    for w in reps.windows(2) {
        let rise = w[1].gap.minus(&w[0].gap);
        if rise.lower() > 0.0 || !rise.has_ci() {
            ok = false;
        }
    }
    verdict(ok, format!("wired-free gap {}", text.join(", ")))
}

// ---------------------------------------------------------------- C5

fn c5() -> Verdict {
    let r = rclab::lattice::build_block(2, 4, 3).unwrap();
    let (k, ell, h) = (1, 2, 4);
    let events = vec![
        EventSpec::FaceCrossing { lo: vec![-2, -2, 0], hi: vec![2, 2, 4], axis: 2 },
        EventSpec::FaceCrossing { lo: vec![-2, -2, 0], hi: vec![2, 2, 4], axis: 0 },
        EventSpec::FaceCrossing { lo: vec![-2, -2, 0], hi: vec![2, 2, 4], axis: 1 },
        EventSpec::SeedPresent { center: vec![0, 0, 0], axis: 2, k },
        EventSpec::TopSeed { k, ell, h, index: None },
        EventSpec::LateralSeed { k, ell, h, index: None },
        EventSpec::TopCount { k, ell, h, at_least: 1 },
        EventSpec::SideCount { k, ell, h, at_least: 2 },
        EventSpec::Occupied { k, ell, h },
        EventSpec::TwoPoint { x: vec![0, 0, 0], y: vec![0, 0, 4] },
    ];
    assert!(events.iter().all(|e| e.is_increasing()));
    let ps = [0.3, 0.4, 0.5, 0.6, 0.7];
    let mut table: Vec<[Vec<Estimate>; 2]> = Vec::new();
    for (i, &p) in ps.iter().enumerate() {
        let params = RCParams::new(2.0, p).unwrap();
        let run = |bc: BoundaryCondition, s: u64| estimate_events(&r, &params, &bc, &events, &mc(20_000, Kernel::Cluster, s)).unwrap();
        table.push([run(BoundaryCondition::free(&r), 2 * i as u64), run(BoundaryCondition::wired(&r), 2 * i as u64 + 1)]);
    }
    let mut bad = Vec::new();
    let below = |a: &Estimate, b: &Estimate| a.value - b.value > 3.0 * (a.sigma().powi(2) + b.sigma().powi(2)).sqrt();
    for (e, spec) in events.iter().enumerate() {
        for i in 0..ps.len() {
            if below(&table[i][0][e], &table[i][1][e]) {
                bad.push(format!("{} free>wired at p={}", spec.id(), ps[i]));
            }
            if i + 1 < ps.len() {
                for b in 0..2 {
                    if below(&table[i][b][e], &table[i + 1][b][e]) {
                        bad.push(format!("{} decreases at p={}", spec.id(), ps[i]));
                    }
                }
            }
        }
    }
    verdict(bad.is_empty(), format!("{} increasing events x {} intensities x 2 bc; violations {bad:?}", events.len(), ps.len()))
}

// ---------------------------------------------------------------- shared box threshold

fn box_threshold_q2() -> &'static ThresholdReport {
    static R: OnceLock<ThresholdReport> = OnceLock::new();
    R.get_or_init(|| {
        let m = mc(2_000, Kernel::Cluster, 77);
        estimate_box_threshold(2.0, 3, &[8, 16], &BisectionConfig::default(), &m).unwrap()
    })
}

// ---------------------------------------------------------------- C6

fn tension(n: i64, q: f64, p: f64, seed: u64) -> rclab::observables::TensionReport {
    let mut m = mc(1_000, Kernel::HeatBath, seed);
    m.burn_in = 200;
    let cfg = TensionConfig::new(m);
    surface_tension_estimate(n, 1.0, 2, 3, &RCParams::new(q, p).unwrap(), "mixed:top,bottom", &cfg).unwrap()
}

fn tau_text(r: &rclab::observables::TensionReport) -> String {
    match &r.tau {
        Some(t) => format!("{:.4}±{:.4}({})", t.value, t.ci.unwrap_or(f64::NAN), r.method),
        None => format!("{}({})", r.tau_value(), r.method),
    }
}

fn positive(r: &rclab::observables::TensionReport) -> bool {
    r.infinite || r.tau.as_ref().is_some_and(|t| t.has_ci() && t.lower() > 0.0)
}

fn null(r: &rclab::observables::TensionReport) -> bool {
    r.tau.as_ref().is_some_and(|t| t.has_ci() && t.contains(0.0))
}

fn c6() -> Verdict {
    let hi8 = tension(8, 1.0, 0.35, 61);
    let hi12 = tension(12, 1.0, 0.35, 62);
    let lo8 = tension(8, 1.0, 0.20, 63);
    let stable = {
        let (a, b) = (hi8.tau_value(), hi12.tau_value());
        (a - b).abs() <= 0.15 * a.max(b)
    };
    let q1 = positive(&hi8) && positive(&hi12) && stable && null(&lo8);
    let bx = box_threshold_q2();
    let beta_c = fk_to_ising(0.5 * (bx.lo + bx.hi));
    let above = tension(8, 2.0, ising_to_fk(1.3 * beta_c), 64);
    let below = tension(8, 2.0, ising_to_fk(0.8 * beta_c), 65);
    let q2 = positive(&above) && null(&below);
    verdict(
        q1 && q2,
        format!(
            "q=1: tau(0.35,N=8)={} tau(0.35,N=12)={} stable15%={stable} tau(0.20,N=8)={}; q=2 beta_c={beta_c:.4}: tau(1.3)={} tau(0.8)={}",
            tau_text(&hi8),
            tau_text(&hi12),
            tau_text(&lo8),
            tau_text(&above),
            tau_text(&below)
        ),
    )
}

// ---------------------------------------------------------------- C7 / C8

fn calibration_q1() -> &'static (Option<RenormSpec>, String) {
    static R: OnceLock<(Option<RenormSpec>, String)> = OnceLock::new();
    R.get_or_init(|| {
        let params = RCParams::new(1.0, 0.35).unwrap();
        let m = mc(3_200, Kernel::Product, 7);
        let mut best = Vec::new();
        for l in 2..=8 {
            match calibrate_block(&params, "free", l, 3 * l, 0.1, 3, &m) {
                Ok(c) => {
                    let text = format!("L={l} H={}: occupied {:?}", 3 * l, c.spec.occupied.as_ref().map(|e| e.value));
                    return (Some(c.spec), text);
                }
                Err(RenormError::Calibration { best_lower, best: b, .. }) => {
                    let v = b.as_ref().as_ref().and_then(|c| c.spec.occupied.clone()).map_or(f64::NAN, |e| e.value);
                    best.push(format!("L={l}:{v:.3}(lower {best_lower:.3})"));
                }
                Err(e) => best.push(format!("L={l}: {e}")),
            }
        }
        (None, format!("no candidate reaches 0.9; best occupied per L {}", best.join(" ")))
    })
}

fn c7() -> Verdict {
    let (spec, text) = calibration_q1();
    verdict(spec.is_some(), text.clone())
}

fn growth_stats(spec: &RenormSpec, p: f64, m: i64, runs: u64) -> (rclab::renorm::AlphaReport, usize, usize) {
    let mut events = Vec::new();
    let mut verified = 0;
    let mut chains = 0;
    for r in 0..runs {
        let field = HashedField { seed: 1000 + r, p, dim: spec.d };
        let g = grow_cluster(&field, spec, m);
        if g.good().count() > 0 {
            chains += 1;
            verified += usize::from(verify_renormalized_path(&field, &g));
        }
        events.extend(inspection_events(&g));
    }
    (estimate_alpha(&events, Some(spec)), verified, chains)
}

fn c8() -> Verdict {
    let site = site_percolation_threshold(128, 2000, 8);
    let site_ok = (site.value - 0.5927).abs() < 0.01;
    let (spec, _) = calibration_q1();
    // demonstration at an intensity where bricks connect, outside the criterion
    let demo = RenormSpec::new(1, 6, 18, 6, 18, 0.1, 3).unwrap();
    let (dr, dv, dc) = growth_stats(&demo, 0.97, 2, 6);
    let demo_text = format!(
        "demo K=1 ell=6 h=18 p=0.97: alpha {:?} over {} events, verified {dv}/{dc}",
        dr.alpha.as_ref().map(|a| (a.value, a.ci)),
        dr.events
    );
    match spec {
        None => verdict(
            false,
            format!("site threshold {:.4}±{:.4} (ok={site_ok}); no calibrated spec exists (C7), alpha not estimable; {demo_text}", site.value, site.ci.unwrap_or(f64::NAN)),
        ),
        Some(s) => {
            let (r, v, c) = growth_stats(s, 0.35, 2, 20);
            let alpha_ok = r.alpha.as_ref().is_some_and(|a| a.has_ci() && a.lower() >= 0.65) && r.events >= 1000;
            verdict(
                alpha_ok && v == c && site_ok,
                format!("alpha {:?} over {} events; verified {v}/{c}; site {:.4}; {demo_text}", r.alpha.map(|a| a.value), r.events, site.value),
            )
        }
    }
}

// ---------------------------------------------------------------- C9

fn c9() -> Verdict {
    let cfg = BisectionConfig::default();
    let m = mc(1_000, Kernel::Cluster, 9);
    let slabs: Vec<ThresholdReport> =
        (1..=3).map(|l| estimate_slab_threshold(l, 2.0, 3, &[16, 32], &cfg, &m).unwrap()).collect();
    let bx = box_threshold_q2();
    let step = 0.5f64.powi(cfg.depth as i32);
    let mut ok = true;
    for w in slabs.windows(2) {
        ok &= w[1].hi <= w[0].hi + step;
    }
    for s in &slabs {
        ok &= s.lo >= bx.lo && s.hi >= bx.hi;
    }
    let text: Vec<String> = slabs.iter().map(|s| format!("L={}: [{:.4},{:.4}] flags {}", s.l.unwrap(), s.lo, s.hi, s.flags.len())).collect();
    verdict(ok, format!("box p_c [{:.4},{:.4}]; {}", bx.lo, bx.hi, text.join("; ")))
}

// ---------------------------------------------------------------- C10

fn c10() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let runs = [
        vec!["crossing", "--q", "2", "--p", "0.45", "--n", "3", "--sweeps", "2000", "--replicas", "4", "--seed", "3"],
        vec!["threshold", "--q", "2", "--L", "1", "--ns", "4,8", "--sweeps", "200", "--depth", "4", "--seed", "3"],
        vec!["tension", "--q", "1", "--p", "0.3", "--n", "3", "--sweeps", "640", "--replicas", "2", "--seed", "3"],
        vec!["renorm", "--p", "0.97", "--k", "1", "--ell", "6", "--h", "18", "--block-l", "6", "--block-h", "18", "--m", "1", "--replicas", "2"],
    ];
    let mut diffs = Vec::new();
    for (i, args) in runs.iter().enumerate() {
        let mut outs = Vec::new();
        for threads in ["1", "2", "4"] {
            let out = dir.path().join(format!("{i}_{threads}"));
            let mut a = args.clone();
            a.extend(["--threads", threads, "--out", out.to_str().unwrap()]);
            let st = std::process::Command::new(env!("CARGO_BIN_EXE_rclab")).args(&a).output().unwrap();
            assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
            outs.push(out);
        }
        let mut names: Vec<_> = std::fs::read_dir(&outs[0]).unwrap().map(|e| e.unwrap().file_name()).collect();
        names.sort();
        for o in &outs[1..] {
            for n in &names {
                if std::fs::read(outs[0].join(n)).unwrap() != std::fs::read(o.join(n)).unwrap_or_default() {
                    diffs.push(format!("{} {}", args[0], n.to_string_lossy()));
                }
            }
        }
    }
    verdict(diffs.is_empty(), format!("{} experiments x 3 worker counts; differing artifacts {diffs:?}", runs.len()))
}

fn main() {
    let only: Option<Vec<String>> =
        std::env::var("ACCEPTANCE").ok().map(|s| s.split(',').map(|x| x.trim().to_uppercase()).collect());
    let all: [(&str, &str, fn() -> Verdict); 10] = [
        ("C1", "sampler exactness", c1),
        ("C2", "single-bond conditional", c2),
        ("C3", "Edwards-Sokal identity", c3),
        ("C4", "mixing decay", c4),
        ("C5", "FKG suite", c5),
        ("C6", "surface tension", c6),
        ("C7", "block calibration", c7),
        ("C8", "stochastic domination", c8),
        ("C9", "slab threshold ordering", c9),
        ("C10", "determinism", c10),
    ];
    let mut failed = 0;
    for (id, name, f) in all {
        if only.as_ref().is_some_and(|o| !o.iter().any(|x| x == id)) {
            continue;
        }
        let t = Instant::now();
        let v = f();
        failed += usize::from(!v.pass);
        println!(
            "{id} {} {name} ({:.0}s): {}",
            if v.pass { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64(),
            v.detail
        );
    }
    if failed > 0 {
        println!("acceptance: {failed} criterion(s) failed");
        std::process::exit(1);
    }
}
