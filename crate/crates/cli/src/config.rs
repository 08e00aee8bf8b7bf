//! Experiment configuration: flags, optional TOML file, defaults and
//! validation.

use std::path::Path;

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Sample,
    Crossing,
    Tension,
    Mixing,
    Blocks,
    Renorm,
    Threshold,
    Oracle,
    Merge,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// Every experiment parameter. All fields are optional on input; `resolve`
/// fills the ones the command reads, so a written config is complete.
#[derive(Clone, Debug, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[arg(skip)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,

    /// Lattice dimension d.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    /// Cluster weight q.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    /// Bond intensity p.
    #[arg(long, conflicts_with = "beta")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    /// Inverse temperature; p = 1 - exp(-2 beta).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    /// free, wired or mixed:<faces>.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bc: Option<String>,
    /// Master seed.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Sweeps per replica after burn-in.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweeps: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub burnin: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub thin: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replicas: Option<usize>,
    /// Id of the first replica; unit-replica runs with distinct ids merge
    /// into the multi-replica run.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_replica: Option<u64>,
    /// Batches per replica.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batches: Option<usize>,
    /// heat-bath, cluster, product or auto.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernel: Option<String>,
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,

    /// box, block, slab or rectangle.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub region: Option<String>,
    /// touching or internal.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scope: Option<String>,
    /// Box half-size, rectangle width or slab half-length.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<i64>,
    /// Slab half-thickness.
    #[arg(long = "L")]
    #[serde(rename = "L", skip_serializing_if = "Option::is_none")]
    pub slab_l: Option<i64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ell: Option<i64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h: Option<i64>,
    /// Seed half-width K (a list for `mixing`).
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<Vec<i64>>,
    /// Sampling block half-width for calibration.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub block_l: Option<i64>,
    /// Sampling block height for calibration.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub block_h: Option<i64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    /// Square-lattice radius of the growth domain.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<i64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub margin: Option<i64>,
    /// Intensity of the bonds below a mixing block.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    /// Crossing axis (default d-1).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub axis: Option<usize>,
    /// slab or box.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub criterion: Option<String>,
    /// Probe sizes N1,N2.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ns: Option<Vec<i64>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
    /// Fewest disconnection hits before the ladder is used.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_hits: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ladder_nodes: Option<usize>,
}

fn json(c: &ExperimentConfig) -> serde_json::Map<String, serde_json::Value> {
    match serde_json::to_value(c).expect("config serializes") {
        serde_json::Value::Object(m) => m,
        _ => unreachable!(),
    }
}

impl ExperimentConfig {
    /// Reads a TOML config, or the `config` object of a JSON manifest.
    pub fn load(path: &Path) -> Result<ExperimentConfig, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if path.extension().is_some_and(|e| e == "json") {
            let v: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            let cfg = v.get("config").cloned().unwrap_or(v);
            serde_json::from_value(cfg).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
        } else {
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
        }
    }

    /// `self` with every field set in `over` replaced.
    pub fn overlay(&self, over: &ExperimentConfig) -> ExperimentConfig {
        let mut m = json(self);
        let o = json(over);
        if o.contains_key("p") {
            m.remove("beta");
        }
        if o.contains_key("beta") {
            m.remove("p");
        }
        m.extend(o);
        serde_json::from_value(serde_json::Value::Object(m)).expect("overlay of valid configs")
    }

    /// Fills the defaults read by the command and validates every range.
    pub fn resolve(mut self) -> Result<ExperimentConfig, CliError> {
        use Command::*;
        let cmd = self.command.ok_or_else(|| CliError::Config("no command given".into()))?;
        let bad = |m: String| Err(CliError::Config(m));
        if cmd == Merge {
            self.format.get_or_insert(Format::Csv);
            return Ok(self);
        }
        let dflt_dim = if cmd == Oracle { 2 } else { 3 };
        let d = *self.dim.get_or_insert(dflt_dim);
        let q = *self.q.get_or_insert(1.0);
        if !(q > 0.0 && q.is_finite()) {
            return bad(format!("q={q} must be positive"));
        }
        match (self.p, self.beta) {
            (Some(_), Some(_)) => return bad("give exactly one of p and beta".into()),
            (None, None) if cmd != Threshold => return bad("give exactly one of p and beta".into()),
            (Some(p), None) if !(0.0..=1.0).contains(&p) => return bad(format!("p={p} outside [0,1]")),
            (None, Some(b)) if !(b >= 0.0) => return bad(format!("beta={b} must be non-negative")),
            _ => {}
        }
        self.seed.get_or_insert(1);
        self.format.get_or_insert(Format::Csv);
        if cmd != Oracle {
            let sweeps = *self.sweeps.get_or_insert(10_000);
            self.burnin.get_or_insert(200);
            let thin = *self.thin.get_or_insert(1);
            let reps = *self.replicas.get_or_insert(1);
            self.first_replica.get_or_insert(0);
            let batches = *self.batches.get_or_insert(32);
            if thin == 0 || reps == 0 || batches == 0 {
                return bad("thin, replicas and batches must be positive".into());
            }
            if sweeps / thin == 0 {
                return bad(format!("sweeps={sweeps} with thin={thin} retains no sample"));
            }
            let k = self.kernel.get_or_insert_with(|| "auto".into()).clone();
            if !["auto", "heat-bath", "cluster", "product"].contains(&k.as_str()) {
                return bad(format!("unknown kernel {k}"));
            }
        }
        if d == 0 || d > 8 {
            return bad(format!("dim={d} outside 1..=8"));
        }
        match cmd {
            Sample | Oracle => {
                let r = self.region.get_or_insert_with(|| "box".into()).clone();
                self.scope.get_or_insert_with(|| if cmd == Oracle { "internal" } else { "touching" }.into());
                match r.as_str() {
                    "box" => {
                        self.n.get_or_insert(if cmd == Oracle { 1 } else { 4 });
                    }
                    "block" => {
                        self.ell.get_or_insert(1);
                        self.h.get_or_insert(1);
                    }
                    "slab" => {
                        self.slab_l.get_or_insert(1);
                        self.n.get_or_insert(4);
                    }
                    "rectangle" => {
                        self.n.get_or_insert(4);
                        self.delta.get_or_insert(0.5);
                        self.margin.get_or_insert(1);
                    }
                    _ => return bad(format!("unknown region {r}")),
                }
                self.bc.get_or_insert_with(|| "free".into());
            }
            Crossing => {
                self.n.get_or_insert(4);
                let a = *self.axis.get_or_insert(d - 1);
                if a >= d {
                    return bad(format!("axis={a} >= dim"));
                }
                self.bc.get_or_insert_with(|| "free".into());
            }
            Tension => {
                self.n.get_or_insert(8);
                self.delta.get_or_insert(1.0);
                self.margin.get_or_insert(2);
                self.min_hits.get_or_insert(50);
                self.ladder_nodes.get_or_insert(12);
                self.bc.get_or_insert_with(|| "mixed:top,bottom".into());
            }
            Mixing => {
                if self.k.is_none() {
                    self.k = Some(vec![2, 3, 4]);
                }
                if self.s.is_none() {
                    self.s = Some(self.p.unwrap_or_else(|| rclab::threshold::ising_to_fk(self.beta.unwrap())));
                }
                self.bc = None;
            }
            Blocks => {
                if self.k.is_none() {
                    self.k = Some(vec![1]);
                }
                self.ell.get_or_insert(2);
                let h = *self.h.get_or_insert(6);
                let ell = self.ell.unwrap();
                self.block_l.get_or_insert(ell);
                self.block_h.get_or_insert(h);
                self.bc.get_or_insert_with(|| "free".into());
            }
            Renorm => {
                self.block_l.get_or_insert(6);
                self.block_h.get_or_insert(18);
                self.eta.get_or_insert(0.1);
                self.m.get_or_insert(2);
                self.bc.get_or_insert_with(|| "free".into());
                let given = [self.k.is_some(), self.ell.is_some(), self.h.is_some()];
                if given.iter().any(|&g| g) && !given.iter().all(|&g| g) {
                    return bad("give all or none of k, ell and h".into());
                }
            }
            Threshold => {
                let c = self.criterion.get_or_insert_with(|| "slab".into()).clone();
                match c.as_str() {
                    "slab" => {
                        self.slab_l.get_or_insert(1);
                    }
                    "box" => {}
                    _ => return bad(format!("unknown criterion {c}")),
                }
                if self.ns.is_none() {
                    self.ns = Some(vec![16, 32]);
                }
                self.theta.get_or_insert(0.05);
                self.depth.get_or_insert(8);
                self.bc = None;
            }
            Merge => unreachable!(),
        }
        if let Some(k) = &self.k {
            if k.is_empty() || k.iter().any(|&x| x < 1) {
                return bad("k must be a non-empty list of positive integers".into());
            }
        }
        for (name, v) in [("n", self.n), ("L", self.slab_l), ("ell", self.ell), ("h", self.h), ("m", self.m)] {
            if v.is_some_and(|x| x < 0) {
                return bad(format!("{name} must be non-negative"));
            }
        }
        if self.s.is_some_and(|s| !(0.0..=1.0).contains(&s)) {
            return bad("s outside [0,1]".into());
        }
        Ok(self)
    }

    pub fn command(&self) -> Command {
        self.command.expect("resolved config")
    }

    /// Bond intensity from p or beta.
    pub fn p_value(&self) -> f64 {
        self.p.unwrap_or_else(|| rclab::threshold::ising_to_fk(self.beta.unwrap_or(0.0)))
    }

    pub fn q_value(&self) -> f64 {
        self.q.unwrap_or(1.0)
    }

    pub fn d(&self) -> usize {
        self.dim.unwrap_or(3)
    }

    /// Config with the replica range removed, for merge compatibility.
    pub fn without_replicas(&self) -> ExperimentConfig {
        let mut c = self.clone();
        c.replicas = None;
        c.first_replica = None;
        c.format = None;
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base(cmd: Command) -> ExperimentConfig {
        ExperimentConfig { command: Some(cmd), p: Some(0.5), ..Default::default() }
    }

    #[test]
    fn flags_override_file() {
        let file: ExperimentConfig = toml::from_str("q = 2.0\nbeta = 0.3\nseed = 9\n").unwrap();
        let flags = ExperimentConfig { p: Some(0.4), ..Default::default() };
        let c = file.overlay(&flags);
        assert_eq!(c.q, Some(2.0));
        assert_eq!(c.p, Some(0.4));
        assert_eq!(c.beta, None);
        assert_eq!(c.seed, Some(9));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<ExperimentConfig>("qq = 2.0").is_err());
    }

    #[test]
    fn ranges_are_checked() {
        assert!(base(Command::Crossing).resolve().is_ok());
        let mut c = base(Command::Crossing);
        c.p = Some(1.5);
        assert!(c.resolve().is_err());
        let mut c = base(Command::Crossing);
        c.p = None;
        assert!(c.resolve().is_err());
        let mut c = base(Command::Crossing);
        c.beta = Some(0.2);
        assert!(c.resolve().is_err());
        let mut c = base(Command::Sample);
        c.thin = Some(0);
        assert!(c.resolve().is_err());
        let mut c = base(Command::Renorm);
        c.k = Some(vec![1]);
        assert!(c.resolve().is_err());
    }

    #[test]
    fn resolved_config_is_a_fixed_point() {
        let c = base(Command::Tension).resolve().unwrap();
        assert_eq!(c.clone().resolve().unwrap(), c);
        let s = toml::to_string(&c).unwrap();
        assert_eq!(toml::from_str::<ExperimentConfig>(&s).unwrap(), c);
    }
}
