//! Surface tension τ̂ = −log P(𝔍(N,δ)) / N^{d−1} on R^L(N,δ).
//!
//! Small probabilities are reached by integrating over the intensity `s` of
//! the bonds inside R(N,δ) (the other bonds keep intensity p). Writing μ_s for
//! that measure and A = 𝔍(N,δ),
//!
//!   d/ds log μ_s(A) = Σ_b (μ_s(ω_b | A) − μ_s(ω_b)) / (s(1−s)),
//!
//! and μ_0(A) = 1. Both expectations are taken in Rao-Blackwellised form:
//! given the other bonds, b is open with probability s·g_b where
//! g_b = 1 if its endpoints are joined off b and 1/(s+(1−s)q) otherwise, and
//! under A the same holds when opening b keeps A ("safe"), else 0. So
//!
//!   d/ds log μ_s(A) = (E_A[Σ_b safe_b g_b] − E[Σ_b g_b]) / (1−s).

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::lattice::{build_rectangle, Region, NONE};
use crate::rcmodel::{BondConfig, BoundaryCondition, RCParams};
use crate::rng::replica_stream;
use crate::sampler::{ChainState, Kernel};
use crate::stats::Estimate;
use crate::uf::UnionFind;

use super::estimate::{estimate_event, EstimateError, McConfig};
use super::events::{rectangle_bounds, EventSpec};

/// Estimation controls.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensionConfig {
    pub mc: McConfig,
    /// Gauss-Legendre nodes of the intensity ladder.
    pub ladder_nodes: usize,
    /// Fewest occurrences of 𝔍 for the direct estimate to be used.
    pub min_hits: usize,
    pub allow_ladder: bool,
}

impl TensionConfig {
    pub fn new(mc: McConfig) -> TensionConfig {
        TensionConfig { mc, ladder_nodes: 12, min_hits: 50, allow_ladder: true }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TensionReport {
    pub n: i64,
    pub half_height: i64,
    pub margin: i64,
    pub d: usize,
    pub q: f64,
    pub p: f64,
    pub bc: String,
    /// "exact", "direct" or "ladder".
    pub method: String,
    pub log_prob: Option<Estimate>,
    /// τ̂; `None` together with `infinite` when P(𝔍) = 0.
    pub tau: Option<Estimate>,
    pub infinite: bool,
    pub failure: Option<String>,
    /// Integrand values at the ladder nodes.
    #[serde(default)]
    pub ladder: Vec<(f64, f64, f64)>,
}

impl TensionReport {
    pub fn tau_value(&self) -> f64 {
        if self.infinite {
            f64::INFINITY
        } else {
            self.tau.as_ref().map_or(f64::NAN, |t| t.value)
        }
    }
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs = vec![0.0; m];
    let mut ws = vec![0.0; m];
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=m {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pm = if m == 0 { 1.0 } else { p1 };
            let pm1 = if m == 1 { 1.0 } else { p0 };
            dp = m as f64 * (x * pm - pm1) / (x * x - 1.0);
            let dx = pm / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        xs[i] = x;
        ws[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (xs, ws)
}

/// Geometry shared by the chains of one estimate.
struct Setup {
    region: Region,
    bc: BoundaryCondition,
    /// Bonds with both endpoints in R(N,δ).
    rbond: Vec<bool>,
    rbonds: Vec<usize>,
    /// Per node: 1 = top face of R(N,δ), 2 = bottom face.
    face: Vec<u8>,
    hi_z: i64,
    lo_z: i64,
}

impl Setup {
    fn new(n: i64, half_height: i64, margin: i64, d: usize, delta: f64, bc: &str) -> Result<Setup, EstimateError> {
        let region = build_rectangle(n, delta, margin, d).map_err(|e| EstimateError::Failure(e.to_string()))?;
        let bc = BoundaryCondition::parse(&region, bc).map_err(|e| EstimateError::Failure(e.to_string()))?;
        let (lo, hi) = rectangle_bounds(n, half_height, d);
        let inside = |p: &[i64]| p.iter().zip(&lo).zip(&hi).all(|((x, a), b)| a <= x && x <= b);
        let mut face = vec![0u8; region.n_nodes()];
        for v in 0..region.n_nodes() as u32 {
            let c = region.coords(v);
            if inside(c) {
                face[v as usize] = if c[d - 1] == half_height {
                    1
                } else if c[d - 1] == -half_height {
                    2
                } else {
                    0
                };
            }
        }
        let rbond: Vec<bool> =
            region.bonds().iter().map(|b| inside(region.coords(b.a)) && inside(region.coords(b.b))).collect();
        let rbonds = (0..rbond.len()).filter(|&e| rbond[e]).collect();
        Ok(Setup { region, bc, rbond, rbonds, face, hi_z: half_height, lo_z: -half_height })
    }
}

/// Keeps a chain inside 𝔍 by refusing openings that would join the faces.
struct Constraint {
    uf: UnionFind,
    flags: Vec<u8>,
    seen: Vec<u32>,
    epoch: u32,
    heap: std::collections::BinaryHeap<(i64, u32)>,
    /// Exact searches that found the opening safe since the last rebuild.
    false_alarms: usize,
}

/// Stale face flags make every nearby closed bond look dangerous; after this
/// many false alarms the index is rebuilt from the current configuration.
const REBUILD_AFTER: usize = 32;

impl Constraint {
    fn new(n: usize) -> Constraint {
        Constraint {
            uf: UnionFind::new(n),
            flags: vec![0; n],
            seen: vec![0; n],
            epoch: 0,
            heap: Default::default(),
            false_alarms: 0,
        }
    }

    fn rebuild(&mut self, s: &Setup, omega: &[bool]) {
        self.false_alarms = 0;
        self.uf.reset();
        self.flags.copy_from_slice(&s.face);
        for &e in &s.rbonds {
            if omega[e] {
                self.union(s, e);
            }
        }
    }

    fn union(&mut self, s: &Setup, e: usize) {
        let b = s.region.bond(e);
        let fa = self.flags[self.uf.find(b.a) as usize];
        let fb = self.flags[self.uf.find(b.b) as usize];
        self.uf.union(b.a, b.b);
        let r = self.uf.find(b.a) as usize;
        self.flags[r] = fa | fb;
    }

    /// Face reached by the open cluster of `x` inside R(N,δ): 0, 1 (top) or 2.
    /// Best-first toward the nearer face; a cluster in 𝔍 meets at most one.
    fn face_of(&mut self, s: &Setup, omega: &[bool], x: u32) -> u8 {
        if s.face[x as usize] != 0 {
            return s.face[x as usize];
        }
        self.epoch += 1;
        let ep = self.epoch;
        let d = s.region.dim();
        let key = |v: u32| {
            let z = s.region.coords(v)[d - 1];
            -((s.hi_z - z).min(z - s.lo_z))
        };
        self.heap.clear();
        self.seen[x as usize] = ep;
        self.heap.push((key(x), x));
        while let Some((_, v)) = self.heap.pop() {
            if s.face[v as usize] != 0 {
                return s.face[v as usize];
            }
            for &(w, e) in s.region.neighbors(v) {
                if s.rbond[e as usize] && omega[e as usize] && self.seen[w as usize] != ep {
                    self.seen[w as usize] = ep;
                    self.heap.push((key(w), w));
                }
            }
        }
        0
    }

    /// Whether opening the closed bond `e` would join the two faces.
    fn unsafe_to_open(&mut self, s: &Setup, omega: &[bool], e: usize) -> bool {
        let b = s.region.bond(e);
        let fa = self.flags[self.uf.find(b.a) as usize];
        let fb = self.flags[self.uf.find(b.b) as usize];
        if !((fa & 1 != 0 && fb & 2 != 0) || (fa & 2 != 0 && fb & 1 != 0)) {
            return false;
        }
        let xa = self.face_of(s, omega, b.a);
        let xb = if xa == 0 { 0 } else { self.face_of(s, omega, b.b) };
        let bad = xb != 0 && xb != xa;
        if !bad {
            self.false_alarms += 1;
            if self.false_alarms >= REBUILD_AFTER {
                self.rebuild(s, omega);
            }
        }
        bad
    }
}

/// Whether each bond's endpoints are joined in omega v pi without the bond.
fn joined_off(region: &Region, omega: &[bool], node_class: &[u32], n_classes: usize) -> Vec<bool> {
    let n = region.n_nodes();
    let total = n + n_classes;
    let nb = omega.len();
    let mut uf = UnionFind::new(total);
    // adjacency of omega v pi: open bonds plus node-ghost links (ids >= nb)
    let mut deg = vec![0u32; total + 1];
    let mut links: Vec<(u32, u32, u32)> = Vec::new();
    for (e, &o) in omega.iter().enumerate() {
        if o {
            let b = region.bond(e);
            links.push((b.a, b.b, e as u32));
        }
    }
    for (v, &c) in node_class.iter().enumerate() {
        if c != NONE {
            links.push((v as u32, (n + c as usize) as u32, (nb + v) as u32));
        }
    }
    for &(a, b, _) in &links {
        uf.union(a, b);
        deg[a as usize + 1] += 1;
        deg[b as usize + 1] += 1;
    }
    for i in 0..total {
        deg[i + 1] += deg[i];
    }
    let mut adj = vec![(0u32, 0u32); deg[total] as usize];
    let mut fill = deg.clone();
    for &(a, b, id) in &links {
        adj[fill[a as usize] as usize] = (b, id);
        fill[a as usize] += 1;
        adj[fill[b as usize] as usize] = (a, id);
        fill[b as usize] += 1;
    }
    // iterative bridge finding
    let mut tin = vec![u32::MAX; total];
    let mut low = vec![0u32; total];
    let mut bridge = vec![false; nb];
    let mut timer = 0u32;
    let mut stack: Vec<(u32, u32, u32)> = Vec::new();
    for root in 0..total as u32 {
        if tin[root as usize] != u32::MAX {
            continue;
        }
        tin[root as usize] = timer;
        low[root as usize] = timer;
        timer += 1;
        stack.push((root, u32::MAX, deg[root as usize]));
        while let Some(&mut (v, via, ref mut next)) = stack.last_mut() {
            if *next < deg[v as usize + 1] {
                let (w, id) = adj[*next as usize];
                *next += 1;
                if id == via {
                    continue;
                }
                if tin[w as usize] == u32::MAX {
                    tin[w as usize] = timer;
                    low[w as usize] = timer;
                    timer += 1;
                    stack.push((w, id, deg[w as usize]));
                } else {
                    low[v as usize] = low[v as usize].min(tin[w as usize]);
                }
            } else {
                stack.pop();
                if let Some(&(u, _, _)) = stack.last() {
                    low[u as usize] = low[u as usize].min(low[v as usize]);
                    if low[v as usize] > tin[u as usize] && (via as usize) < nb {
                        bridge[via as usize] = true;
                    }
                }
            }
        }
    }
    (0..nb)
        .map(|e| {
            let b = region.bond(e);
            if omega[e] {
                !bridge[e]
            } else {
                uf.same(b.a, b.b)
            }
        })
        .collect()
}

struct NodeResult {
    s: f64,
    value: Estimate,
}

fn ladder_node(
    setup: &Setup,
    params: &RCParams,
    s: f64,
    cfg: &TensionConfig,
    chain: u64,
    start: &mut (Vec<bool>, Vec<bool>),
) -> Result<NodeResult, EstimateError> {
    let mut ps = params.clone();
    for &e in &setup.rbonds {
        ps = ps.with_override(e as u32, s).map_err(|e| EstimateError::Failure(e.to_string()))?;
    }
    let q = params.q;
    let mc = &cfg.mc;
    let node_class = setup.bc.node_classes(&setup.region);
    let n_classes = setup.bc.n_classes();
    let g_of = |joined: bool| if joined { 1.0 } else { 1.0 / (s + (1.0 - s) * q) };

    // constrained chain
    let mut st = ChainState::new(&setup.region, &ps, &setup.bc, replica_stream(mc.seed, 0, 2 * chain))?;
    st.set_config(&BondConfig::from_bools(&start.0));
    let mut cons = Constraint::new(setup.region.n_nodes());
    let nb = setup.region.n_bonds();
    let mut series_a = Vec::with_capacity(mc.samples);
    let total = mc.burn_in + mc.samples * mc.thin;
    for t in 1..=total {
        st.begin_sweep();
        cons.rebuild(setup, st.omega());
        for e in 0..nb {
            let closed = !st.omega()[e];
            // the conditional never exceeds the intensity, so a draw above it
            // closes the bond whatever the veto and the connectivity say
            let u = st.rng().gen::<f64>();
            let mut open = u < st.intensity(e);
            if open && closed && setup.rbond[e] && cons.unsafe_to_open(setup, st.omega(), e) {
                continue;
            }
            if open && q != 1.0 {
                open = u < st.open_probability(e);
            }
            if open && closed && setup.rbond[e] {
                cons.union(setup, e);
            }
            st.set_bond(e, open);
        }
        st.end_sweep();
        if t > mc.burn_in && (t - mc.burn_in) % mc.thin == 0 {
            let omega = st.omega();
            cons.rebuild(setup, omega);
            let joined = if q == 1.0 { Vec::new() } else { joined_off(&setup.region, omega, &node_class, n_classes) };
            let mut acc = 0.0;
            for &e in &setup.rbonds {
                let safe = omega[e] || !cons.unsafe_flags(setup, e);
                if safe {
                    acc += if q == 1.0 { 1.0 } else { g_of(joined[e]) };
                }
            }
            series_a.push(acc);
        }
    }
    start.0 = st.omega().to_vec();

    // unconstrained chain
    let mean_free = if q == 1.0 {
        Estimate::exact(setup.rbonds.len() as f64, "exact")
    } else {
        let kernel = if q.fract() == 0.0 { Kernel::Cluster } else { Kernel::HeatBath };
        let mut st = ChainState::new(&setup.region, &ps, &setup.bc, replica_stream(mc.seed, 0, 2 * chain + 1))?;
        st.set_config(&BondConfig::from_bools(&start.1));
        let mut series = Vec::with_capacity(mc.samples);
        for t in 1..=total {
            st.step(kernel)?;
            if t > mc.burn_in && (t - mc.burn_in) % mc.thin == 0 {
                let joined = joined_off(&setup.region, st.omega(), &node_class, n_classes);
                series.push(setup.rbonds.iter().map(|&e| g_of(joined[e])).sum::<f64>());
            }
        }
        start.1 = st.omega().to_vec();
        Estimate::from_series(&series, mc.batches, "rao-blackwell")
    };
    let a = Estimate::from_series(&series_a, mc.batches, "rao-blackwell");
    let diff = a.minus(&mean_free);
    let value = diff.map(|x| x / (1.0 - s), 1.0 / (1.0 - s), "ladder-node");
    Ok(NodeResult { s, value })
}

impl Constraint {
    /// Exact safety test on a freshly rebuilt index.
    fn unsafe_flags(&mut self, s: &Setup, e: usize) -> bool {
        let b = s.region.bond(e);
        let fa = self.flags[self.uf.find(b.a) as usize];
        let fb = self.flags[self.uf.find(b.b) as usize];
        (fa & 1 != 0 && fb & 2 != 0) || (fa & 2 != 0 && fb & 1 != 0)
    }
}

/// log μ_p(𝔍) by Gauss-Legendre integration over the rectangle intensity.
fn ladder(setup: &Setup, params: &RCParams, cfg: &TensionConfig) -> Result<(Estimate, Vec<(f64, f64, f64)>), EstimateError> {
    let p = params.p;
    let (xs, ws) = gauss_legendre(cfg.ladder_nodes);
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).unwrap());
    let nb = setup.region.n_bonds();
    let mut start = (vec![false; nb], vec![false; nb]);
    let mut value = 0.0;
    let mut var = 0.0;
    let mut samples = 0;
    let mut batches = usize::MAX;
    let mut flags = Vec::new();
    let mut trace = Vec::new();
    for (chain, &i) in order.iter().enumerate() {
        let s = 0.5 * p * (xs[i] + 1.0);
        let w = 0.5 * p * ws[i];
        let node = ladder_node(setup, params, s, cfg, chain as u64, &mut start)?;
        value += w * node.value.value;
        var += w * w * node.value.sigma().powi(2);
        samples += node.value.samples;
        batches = batches.min(node.value.batches);
        flags.extend(node.value.flags.iter().cloned());
        trace.push((node.s, node.value.value, node.value.ci.unwrap_or(f64::NAN)));
    }
    let se = var.sqrt();
    let est = Estimate {
        value,
        se: se.is_finite().then_some(se),
        ci: se.is_finite().then_some(1.959_963_984_540_054 * se),
        samples,
        batches,
        method: "ladder".into(),
        batch_means: Vec::new(),
        flags,
    };
    Ok((est, trace))
}

/// Surface tension on R^margin(n, delta) in dimension d; `bc` is a boundary
/// descriptor (`wired`, `free`, `mixed:...`).
pub fn surface_tension_estimate(
    n: i64,
    delta: f64,
    margin: i64,
    d: usize,
    params: &RCParams,
    bc: &str,
    cfg: &TensionConfig,
) -> Result<TensionReport, EstimateError> {
    let half_height = (delta * n as f64).round() as i64;
    let setup = Setup::new(n, half_height, margin, d, delta, bc)?;
    let area = (n as f64).powi(d as i32 - 1);
    let mut report = TensionReport {
        n,
        half_height,
        margin,
        d,
        q: params.q,
        p: params.p,
        bc: bc.into(),
        method: String::new(),
        log_prob: None,
        tau: None,
        infinite: false,
        failure: None,
        ladder: Vec::new(),
    };
    let forced = |v: f64| setup.rbonds.iter().all(|&e| params.intensity(e as u32) == v);
    if forced(0.0) {
        report.method = "exact".into();
        report.log_prob = Some(Estimate::exact(0.0, "exact"));
        report.tau = Some(Estimate::exact(0.0, "exact"));
        return Ok(report);
    }
    if forced(1.0) {
        report.method = "exact".into();
        report.infinite = true;
        return Ok(report);
    }
    let spec = EventSpec::Disconnection { n, half_height };
    let direct = estimate_event(&setup.region, params, &setup.bc, &spec, &cfg.mc)?;
    let hits = (direct.value * direct.samples as f64).round() as usize;
    let log_prob = if hits >= cfg.min_hits {
        report.method = "direct".into();
        direct.map(f64::ln, 1.0 / direct.value, "direct")
    } else if cfg.allow_ladder {
        report.method = "ladder".into();
        let (est, trace) = ladder(&setup, params, cfg)?;
        report.ladder = trace;
        est
    } else {
        report.method = "direct".into();
        report.failure = Some(format!("{hits} occurrences of the disconnection event, ladder disabled"));
        return Ok(report);
    };
    report.tau = Some(log_prob.map(|x| -x / area, 1.0 / area, &report.method));
    report.log_prob = Some(log_prob);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{BondScope, RegionKind};
    use crate::rcmodel::BoundaryCondition;
    use crate::sampler::enumerate_exact;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(6);
        let integral = |f: &dyn Fn(f64) -> f64| x.iter().zip(&w).map(|(a, b)| b * f(*a)).sum::<f64>();
        assert!((integral(&|_| 1.0) - 2.0).abs() < 1e-13);
        assert!((integral(&|t| t.powi(10)) - 2.0 / 11.0).abs() < 1e-13);
    }

    #[test]
    fn bridges_and_cycles() {
        let r = Region::cuboid(&[0, 0], &[2, 1], RegionKind::Custom, BondScope::Internal).unwrap();
        let bc = BoundaryCondition::free(&r);
        let mut omega = vec![false; r.n_bonds()];
        // square on the left, pendant bond on the right
        for (x, a) in [([0, 0], 0), ([0, 1], 0), ([0, 0], 1), ([1, 0], 1), ([1, 0], 0)] {
            omega[r.bond_at(&x, a).unwrap() as usize] = true;
        }
        let j = joined_off(&r, &omega, &bc.node_classes(&r), 0);
        assert!(j[r.bond_at(&[0, 0], 0).unwrap() as usize]);
        assert!(!j[r.bond_at(&[1, 0], 0).unwrap() as usize]);
        // closed bond between joined endpoints
        assert!(j[r.bond_at(&[1, 1], 0).unwrap() as usize] == false);
        assert!(!j[r.bond_at(&[2, 0], 1).unwrap() as usize]);
    }

    #[test]
    fn joined_off_matches_chain_conditionals() {
        let r = Region::cuboid(&[0, 0], &[2, 2], RegionKind::Custom, BondScope::Touching).unwrap();
        let bc = BoundaryCondition::by_selector(&r, |c| (c[1] < 0).then_some(0).or((c[0] > 2).then_some(1)));
        let params = RCParams::new(2.0, 0.5).unwrap();
        let mut st = ChainState::new(&r, &params, &bc, replica_stream(1, 0, 0)).unwrap();
        for _ in 0..50 {
            st.sweep();
            let omega = st.omega().to_vec();
            let j = joined_off(&r, &omega, &bc.node_classes(&r), bc.n_classes());
            for e in 0..r.n_bonds() {
                let b = r.bond(e);
                if r.is_inner(b.a) && r.is_inner(b.b) {
                    let pr = st.open_probability(e);
                    assert_eq!(j[e], pr == 0.5, "bond {e}");
                }
            }
        }
    }

    #[test]
    fn trivial_intensities() {
        let cfg = TensionConfig::new(McConfig::new(64, Kernel::Product, 1));
        let r0 = surface_tension_estimate(4, 0.5, 1, 3, &RCParams::new(1.0, 0.0).unwrap(), "wired", &cfg).unwrap();
        assert_eq!(r0.tau_value(), 0.0);
        let r1 = surface_tension_estimate(4, 0.5, 1, 3, &RCParams::new(1.0, 1.0).unwrap(), "wired", &cfg).unwrap();
        assert!(r1.infinite && r1.tau_value().is_infinite());
        let mut no_ladder = cfg.clone();
        no_ladder.allow_ladder = false;
        let r = surface_tension_estimate(4, 0.5, 1, 3, &RCParams::new(1.0, 0.9).unwrap(), "wired", &no_ladder).unwrap();
        assert!(r.failure.is_some() && r.tau.is_none());
    }

    #[test]
    fn ladder_matches_enumeration_on_a_tiny_rectangle() {
        // d = 2, n = 1, delta = 1: R = {-1..1}^2 has 12 bonds; no margin, free
        for q in [1.0, 2.0] {
            let params = RCParams::new(q, 0.6).unwrap();
            let setup = Setup::new(1, 1, 0, 2, 1.0, "free").unwrap();
            let region = Region::cuboid(&[-1, -1], &[1, 1], RegionKind::Custom, BondScope::Internal).unwrap();
            let bc = BoundaryCondition::free(&region);
            let spec = EventSpec::Disconnection { n: 1, half_height: 1 };
            let exact = enumerate_exact(&region, &params, &bc)
                .unwrap()
                .event_prob(|c| super::super::events::eval_unchecked(&region, c, &bc, &spec));
            // Touching scope adds free pendant bonds which do not affect 𝔍
            assert_eq!(setup.rbonds.len(), 12);
            let mut mc = McConfig::new(4000, Kernel::HeatBath, 3);
            mc.burn_in = 100;
            let mut cfg = TensionConfig::new(mc);
            cfg.ladder_nodes = 10;
            let (est, _) = ladder(&setup, &params, &cfg).unwrap();
            assert!((est.value - exact.ln()).abs() < 4.0 * est.sigma() + 0.01, "q={q}: {} vs {}", est.value, exact.ln());
        }
    }
}
