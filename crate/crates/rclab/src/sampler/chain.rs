//! Markov chains for the random-cluster measure.

use rand::Rng as _;

use crate::lattice::{Region, NONE};
use crate::rcmodel::{BondConfig, BoundaryCondition, ClusterIndex, ModelError, RCParams};
use crate::rng::Rng;
use crate::uf::UnionFind;

/// Update used by one chain step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Kernel {
    /// One sequential heat-bath sweep over all bonds.
    HeatBath,
    /// One Edwards-Sokal colour/bond resampling (integer q).
    Cluster,
    /// Independent resampling of every bond (q = 1).
    Product,
}

impl Kernel {
    /// Fastest exact kernel for the parameters.
    pub fn auto(params: &RCParams) -> Kernel {
        if params.q == 1.0 {
            Kernel::Product
        } else if params.integer_q().is_some() {
            Kernel::Cluster
        } else {
            Kernel::HeatBath
        }
    }
}

/// Chain state: configuration, boundary wiring, intensities and stream.
pub struct ChainState<'a> {
    region: &'a Region,
    bc: BoundaryCondition,
    probs: Vec<f64>,
    q: f64,
    node_class: Vec<u32>,
    members: Vec<Vec<u32>>,
    n_nodes: usize,
    omega: Vec<bool>,
    rng: Rng,
    sweeps: u64,
    stale: UnionFind,
    stale_ok: bool,
    stamp: Vec<u32>,
    epoch: u32,
    front_a: Vec<u32>,
    front_b: Vec<u32>,
    next: Vec<u32>,
    colors: Vec<u32>,
}

#[derive(Debug, thiserror::Error)]
pub enum SamplerError {
    #[error("cluster kernel needs integer q, got {0}")]
    NonIntegerQ(f64),
    #[error("product kernel needs q = 1, got {0}")]
    NotIndependent(f64),
    #[error("sweeps ({sweeps}) must exceed burn-in ({burn_in}) and thinning must be positive")]
    BadSchedule { sweeps: usize, burn_in: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl<'a> ChainState<'a> {
    /// Chain started from the all-closed configuration.
    pub fn new(region: &'a Region, params: &RCParams, bc: &BoundaryCondition, rng: Rng) -> Result<ChainState<'a>, SamplerError> {
        let probs = params.intensities(region.n_bonds())?;
        let node_class = bc.node_classes(region);
        let mut members = vec![Vec::new(); bc.n_classes()];
        for (v, &c) in node_class.iter().enumerate() {
            if c != NONE {
                members[c as usize].push(v as u32);
            }
        }
        let n_nodes = region.n_nodes();
        let total = n_nodes + bc.n_classes();
        Ok(ChainState {
            region,
            bc: bc.clone(),
            probs,
            q: params.q,
            node_class,
            members,
            n_nodes,
            omega: vec![false; region.n_bonds()],
            rng,
            sweeps: 0,
            stale: UnionFind::new(total),
            stale_ok: false,
            stamp: vec![0; total],
            epoch: 0,
            front_a: Vec::new(),
            front_b: Vec::new(),
            next: Vec::new(),
            colors: vec![0; total],
        })
    }

    pub fn region(&self) -> &Region {
        self.region
    }
    pub fn bc(&self) -> &BoundaryCondition {
        &self.bc
    }
    pub fn omega(&self) -> &[bool] {
        &self.omega
    }
    pub fn sweeps(&self) -> u64 {
        self.sweeps
    }
    pub fn rng(&mut self) -> &mut Rng {
        &mut self.rng
    }
    pub fn config(&self) -> BondConfig {
        BondConfig::from_bools(&self.omega)
    }
    pub fn set_config(&mut self, c: &BondConfig) {
        for e in 0..self.omega.len() {
            self.omega[e] = c.get(e);
        }
        self.stale_ok = false;
    }
    pub fn set_all(&mut self, open: bool) {
        self.omega.iter_mut().for_each(|w| *w = open);
        self.stale_ok = false;
    }
    /// Fresh cluster index for the current configuration.
    pub fn cluster_index(&self) -> ClusterIndex {
        ClusterIndex::build(self.region, &self.bc, &self.config())
    }
    pub fn ghost(&self, class: usize) -> u32 {
        (self.n_nodes + class) as u32
    }

    fn is_spin(&self, v: u32) -> bool {
        self.region.is_inner(v) || (v as usize) >= self.n_nodes || self.node_class[v as usize] != NONE
    }

    fn rebuild_stale(&mut self) {
        self.stale.reset();
        for (v, &c) in self.node_class.iter().enumerate() {
            if c != NONE {
                self.stale.union(v as u32, (self.n_nodes + c as usize) as u32);
            }
        }
        for (e, &open) in self.omega.iter().enumerate() {
            if open {
                let b = self.region.bond(e);
                self.stale.union(b.a, b.b);
            }
        }
        self.stale_ok = true;
    }

    fn next_epoch(&mut self) -> u32 {
        self.epoch = self.epoch.wrapping_add(2);
        if self.epoch < 2 {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.epoch = 2;
        }
        self.epoch
    }

    // Stamps the unvisited omega∨pi neighbours of `x` into `self.next`;
    // true when a node of the other side is reached.
    fn push_neighbors(&mut self, x: u32, skip: usize, side: u32, other: u32) -> bool {
        let n_nodes = self.n_nodes;
        let mut hit = false;
        let mut visit = |w: u32, stamp: &mut Vec<u32>, out: &mut Vec<u32>| {
            let s = stamp[w as usize];
            if s == other {
                hit = true;
            } else if s != side {
                stamp[w as usize] = side;
                out.push(w);
            }
        };
        let mut buf = std::mem::take(&mut self.next);
        if (x as usize) < n_nodes {
            for &(w, e) in self.region.neighbors(x) {
                if e as usize != skip && self.omega[e as usize] {
                    visit(w, &mut self.stamp, &mut buf);
                }
            }
            let c = self.node_class[x as usize];
            if c != NONE {
                visit((n_nodes + c as usize) as u32, &mut self.stamp, &mut buf);
            }
        } else {
            let c = x as usize - n_nodes;
            for &w in &self.members[c] {
                visit(w, &mut self.stamp, &mut buf);
            }
        }
        self.next = buf;
        hit
    }

    /// Whether `u` and `v` are joined in omega∨pi without bond `skip`.
    /// Alternating breadth-first search from both ends, expanding the smaller
    /// frontier; stops as soon as the searches meet or one side is exhausted.
    fn connected_off(&mut self, u: u32, v: u32, skip: usize) -> bool {
        if u == v {
            return true;
        }
        let ea = self.next_epoch();
        let eb = ea + 1;
        self.stamp[u as usize] = ea;
        self.stamp[v as usize] = eb;
        let mut fa = std::mem::take(&mut self.front_a);
        let mut fb = std::mem::take(&mut self.front_b);
        fa.clear();
        fb.clear();
        fa.push(u);
        fb.push(v);
        let mut found = false;
        while !fa.is_empty() && !fb.is_empty() {
            let expand_a = fa.len() <= fb.len();
            let (front, side, other) = if expand_a { (&mut fa, ea, eb) } else { (&mut fb, eb, ea) };
            let cur = std::mem::take(front);
            self.next.clear();
            for &x in &cur {
                if self.push_neighbors(x, skip, side, other) {
                    found = true;
                    break;
                }
            }
            if found {
                break;
            }
            *front = std::mem::take(&mut self.next);
            self.next = cur;
        }
        self.front_a = fa;
        self.front_b = fb;
        found
    }

    /// Whether the component of `x` without bond `skip` contains a vertex of
    /// the region or a ghost.
    fn side_counted(&mut self, x: u32, skip: usize) -> bool {
        if self.is_spin(x) {
            return true;
        }
        let ea = self.next_epoch();
        self.stamp[x as usize] = ea;
        let mut stack = vec![x];
        while let Some(y) = stack.pop() {
            if self.is_spin(y) {
                return true;
            }
            for &(w, e) in self.region.neighbors(y) {
                if e as usize != skip && self.omega[e as usize] && self.stamp[w as usize] != ea {
                    self.stamp[w as usize] = ea;
                    stack.push(w);
                }
            }
        }
        false
    }

    /// Conditional probability that bond `e` is open given all other bonds.
    pub fn open_probability(&mut self, e: usize) -> f64 {
        let p = self.probs[e];
        if self.q == 1.0 || p == 0.0 || p == 1.0 {
            return p;
        }
        let b = self.region.bond(e);
        let joined = if !self.omega[e] && self.stale_ok && !self.stale.same(b.a, b.b) {
            false
        } else {
            self.connected_off(b.a, b.b, e)
        };
        if joined || !self.side_counted(b.a, e) || !self.side_counted(b.b, e) {
            p
        } else {
            p / (p + (1.0 - p) * self.q)
        }
    }

    /// Resamples bond `e` from its exact conditional law.
    pub fn heat_bath_bond(&mut self, e: usize) {
        let pr = self.open_probability(e);
        let open = self.rng.gen::<f64>() < pr;
        if open != self.omega[e] {
            self.omega[e] = open;
            if open {
                if self.stale_ok {
                    let b = self.region.bond(e);
                    self.stale.union(b.a, b.b);
                }
            }
        }
    }

    /// One heat-bath sweep in bond order. The connectivity filter is rebuilt
    /// at the start of the sweep and only ever over-approximates afterwards.
    pub fn sweep(&mut self) {
        self.begin_sweep();
        for e in 0..self.omega.len() {
            self.heat_bath_bond(e);
        }
        self.sweeps += 1;
    }

    /// Starts a custom sweep made of [`ChainState::open_probability`] and
    /// [`ChainState::set_bond`] calls.
    pub fn begin_sweep(&mut self) {
        if self.q != 1.0 {
            self.rebuild_stale();
        }
    }

    pub fn end_sweep(&mut self) {
        self.sweeps += 1;
    }

    /// Sets one bond during a custom sweep.
    pub fn set_bond(&mut self, e: usize, open: bool) {
        if open && !self.omega[e] && self.stale_ok {
            let b = self.region.bond(e);
            self.stale.union(b.a, b.b);
        }
        self.omega[e] = open;
    }

    pub fn intensity(&self, e: usize) -> f64 {
        self.probs[e]
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    /// Independent resampling of all bonds (exact for q = 1).
    pub fn product_step(&mut self) {
        for e in 0..self.omega.len() {
            self.omega[e] = self.rng.gen::<f64>() < self.probs[e];
        }
        self.stale_ok = false;
        self.sweeps += 1;
    }

    /// Edwards-Sokal step for integer q: colour every cluster of omega∨pi
    /// uniformly, then open each monochromatic bond with its intensity.
    /// Exterior endpoints outside every wired class carry no colour; the bonds
    /// at such a node are resampled jointly so that the open ones lead to
    /// neighbours of a single colour.
    pub fn cluster_step(&mut self) -> Result<(), SamplerError> {
        let q = self.q;
        if q.fract() != 0.0 {
            return Err(SamplerError::NonIntegerQ(q));
        }
        let q = q as u32;
        self.rebuild_stale();
        let total = self.n_nodes + self.members.len();
        for v in 0..total as u32 {
            let r = self.stale.find(v);
            if r == v {
                self.colors[v as usize] = if q == 1 { 0 } else { self.rng.gen_range(0..q) };
            }
        }
        for v in 0..total as u32 {
            let r = self.stale.find(v);
            self.colors[v as usize] = self.colors[r as usize];
        }
        for e in 0..self.omega.len() {
            let b = self.region.bond(e);
            if self.is_spin(b.a) && self.is_spin(b.b) {
                let mono = self.colors[b.a as usize] == self.colors[b.b as usize];
                self.omega[e] = mono && self.rng.gen::<f64>() < self.probs[e];
            }
        }
        for w in self.region.n_inner() as u32..self.n_nodes as u32 {
            if !self.is_spin(w) {
                self.resample_hub(w);
            }
        }
        self.stale_ok = false;
        self.sweeps += 1;
        Ok(())
    }

    fn resample_hub(&mut self, w: u32) {
        let nb = self.region.neighbors(w);
        if nb.len() == 1 {
            let e = nb[0].1 as usize;
            self.omega[e] = self.rng.gen::<f64>() < self.probs[e];
            return;
        }
        let items: Vec<(u32, usize)> = nb.iter().map(|&(x, e)| (self.colors[x as usize], e as usize)).collect();
        let closed_all: f64 = items.iter().map(|&(_, e)| 1.0 - self.probs[e]).product();
        let mut palette: Vec<u32> = items.iter().map(|&(c, _)| c).collect();
        palette.sort_unstable();
        palette.dedup();
        let mut weights = vec![closed_all];
        for &c in &palette {
            let inside: f64 = items.iter().filter(|&&(k, _)| k == c).map(|&(_, e)| 1.0 - self.probs[e]).product();
            let outside: f64 = items.iter().filter(|&&(k, _)| k != c).map(|&(_, e)| 1.0 - self.probs[e]).product();
            weights.push(outside * (1.0 - inside));
        }
        let tot: f64 = weights.iter().sum();
        let mut u = self.rng.gen::<f64>() * tot;
        let mut pick = 0;
        for (i, wt) in weights.iter().enumerate() {
            if u < *wt {
                pick = i;
                break;
            }
            u -= wt;
            pick = i;
        }
        for &(_, e) in &items {
            self.omega[e] = false;
        }
        if pick == 0 {
            return;
        }
        let colour = palette[pick - 1];
        let chosen: Vec<usize> = items.iter().filter(|&&(k, _)| k == colour).map(|&(_, e)| e).collect();
        // sequential sampling conditioned on at least one open bond
        let mut any = false;
        for (i, &e) in chosen.iter().enumerate() {
            let p = self.probs[e];
            let pr = if any {
                p
            } else {
                let rest: f64 = chosen[i..].iter().map(|&f| 1.0 - self.probs[f]).product();
                p / (1.0 - rest)
            };
            let open = self.rng.gen::<f64>() < pr;
            self.omega[e] = open;
            any |= open;
        }
    }

    pub fn step(&mut self, kernel: Kernel) -> Result<(), SamplerError> {
        match kernel {
            Kernel::HeatBath => self.sweep(),
            Kernel::Cluster => self.cluster_step()?,
            Kernel::Product => {
                if self.q != 1.0 {
                    return Err(SamplerError::NotIndependent(self.q));
                }
                self.product_step()
            }
        }
        Ok(())
    }
}

/// Sweep schedule of a chain.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Schedule {
    pub sweeps: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub kernel: Kernel,
}

impl Schedule {
    pub fn validate(&self) -> Result<(), SamplerError> {
        if self.sweeps <= self.burn_in || self.thin == 0 {
            return Err(SamplerError::BadSchedule { sweeps: self.sweeps, burn_in: self.burn_in });
        }
        Ok(())
    }
    pub fn n_samples(&self) -> usize {
        (self.sweeps - self.burn_in) / self.thin
    }
}

/// Runs a chain and calls `visit` on each retained state.
pub fn run_chain(
    region: &Region,
    params: &RCParams,
    bc: &BoundaryCondition,
    schedule: &Schedule,
    rng: Rng,
    mut visit: impl FnMut(&mut ChainState),
) -> Result<(), SamplerError> {
    schedule.validate()?;
    let mut st = ChainState::new(region, params, bc, rng)?;
    for t in 1..=schedule.sweeps {
        st.step(schedule.kernel)?;
        if t > schedule.burn_in && (t - schedule.burn_in) % schedule.thin == 0 {
            visit(&mut st);
        }
    }
    Ok(())
}

/// Retained configurations of a chain.
pub fn sample_chain(
    region: &Region,
    params: &RCParams,
    bc: &BoundaryCondition,
    sweeps: usize,
    burn_in: usize,
    thin: usize,
    kernel: Kernel,
    rng: Rng,
) -> Result<Vec<BondConfig>, SamplerError> {
    let mut out = Vec::new();
    let schedule = Schedule { sweeps, burn_in, thin, kernel };
    run_chain(region, params, bc, &schedule, rng, |s| out.push(s.config()))?;
    Ok(out)
}

/// Default burn-in: ten integrated autocorrelation times of the open-bond
/// density measured on a pilot run, at least 100 steps.
pub fn default_burn_in(region: &Region, params: &RCParams, bc: &BoundaryCondition, kernel: Kernel, rng: Rng) -> Result<usize, SamplerError> {
    let mut st = ChainState::new(region, params, bc, rng)?;
    let pilot = 2000;
    let mut series = Vec::with_capacity(pilot);
    for _ in 0..pilot {
        st.step(kernel)?;
        series.push(st.omega().iter().filter(|&&w| w).count() as f64);
    }
    let tau = crate::stats::integrated_autocorr_time(&series[pilot / 4..]);
    Ok(((10.0 * tau).ceil() as usize).max(100))
}
