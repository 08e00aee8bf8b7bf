//! Artifact directory, manifest and mergeable partial results.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rclab::observables::{write_csv, EstimateRow};
use rclab::rng::stream_id;
use rclab::stats::{pool, BatchSeries};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{ExperimentConfig, Format};
use crate::error::CliError;

/// Batch series of one observable across replicas.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub name: String,
    pub params: String,
    pub method: String,
    pub series: Vec<BatchSeries>,
}

/// Row computed as the difference of two pooled entries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Difference {
    pub name: String,
    pub a: String,
    pub b: String,
}

/// Per-replica statistics of a run, poolable with other runs of the same
/// config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Partial {
    pub config: ExperimentConfig,
    pub replica_ids: Vec<u64>,
    pub entries: Vec<Entry>,
    #[serde(default)]
    pub differences: Vec<Difference>,
}

impl Partial {
    pub fn rows(&self) -> Vec<EstimateRow> {
        let pooled: BTreeMap<&str, rclab::stats::Estimate> =
            self.entries.iter().map(|e| (e.name.as_str(), pool(&e.series, &e.method))).collect();
        let mut rows: Vec<EstimateRow> =
            self.entries.iter().map(|e| EstimateRow::new(&e.name, &e.params, &pooled[e.name.as_str()])).collect();
        for d in &self.differences {
            if let (Some(a), Some(b)) = (pooled.get(d.a.as_str()), pooled.get(d.b.as_str())) {
                let params = self.entries.iter().find(|e| e.name == d.a).map_or(String::new(), |e| e.params.clone());
                rows.push(EstimateRow::new(&d.name, params, &a.minus(b)));
            }
        }
        rows
    }

    /// Pools partial results of one config. Order of `parts` is irrelevant.
    pub fn merge(parts: &[Partial]) -> Result<Partial, CliError> {
        let first = parts.first().ok_or_else(|| CliError::Config("merge needs at least one file".into()))?;
        let key = first.config.without_replicas();
        let mut ids = BTreeSet::new();
        for p in parts {
            if p.config.without_replicas() != key {
                return Err(CliError::Config("partial results come from different configurations".into()));
            }
            let names: Vec<_> = p.entries.iter().map(|e| &e.name).collect();
            if names != first.entries.iter().map(|e| &e.name).collect::<Vec<_>>() || p.differences != first.differences {
                return Err(CliError::Config("partial results hold different observables".into()));
            }
            for &r in &p.replica_ids {
                if !ids.insert(r) {
                    return Err(CliError::Config(format!("replica {r} appears in more than one file")));
                }
            }
        }
        let mut entries = first.entries.clone();
        for (i, e) in entries.iter_mut().enumerate() {
            e.series = parts.iter().flat_map(|p| p.entries[i].series.iter().cloned()).collect();
            e.series.sort_by_key(|s| s.replica);
        }
        let replica_ids: Vec<u64> = ids.into_iter().collect();
        let mut config = key;
        config.first_replica = replica_ids.first().copied();
        config.replicas = Some(replica_ids.len());
        config.format = first.config.format;
        if let (Some(lo), Some(hi)) = (replica_ids.first(), replica_ids.last()) {
            if hi - lo + 1 != replica_ids.len() as u64 {
                // not expressible as one run; keep the range open so the
                // manifest does not claim otherwise
                config.replicas = None;
            }
        }
        Ok(Partial { config, replica_ids, entries, differences: first.differences.clone() })
    }
}

/// Output directory of one run. Nothing written carries a timestamp or a
/// path, so identical runs give identical bytes.
pub struct Out {
    dir: PathBuf,
    artifacts: BTreeSet<String>,
    streams: BTreeSet<(u64, u64)>,
    inputs: Vec<String>,
}

pub fn json_text<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable artifact");
    s.push('\n');
    s
}

impl Out {
    pub fn new(dir: &Path) -> Result<Out, CliError> {
        std::fs::create_dir_all(dir)?;
        Ok(Out { dir: dir.to_path_buf(), artifacts: BTreeSet::new(), streams: BTreeSet::new(), inputs: Vec::new() })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        std::fs::write(self.dir.join(name), bytes)?;
        self.artifacts.insert(name.into());
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, v: &T) -> Result<(), CliError> {
        self.write(name, json_text(v).as_bytes())
    }

    /// `results.csv` or `results.json`.
    pub fn rows(&mut self, rows: &[EstimateRow], format: Format) -> Result<(), CliError> {
        match format {
            Format::Csv => {
                let mut buf = Vec::new();
                write_csv(rows, &mut buf)?;
                self.write("results.csv", &buf)
            }
            Format::Json => self.json("results.json", &rows),
        }
    }

    pub fn partial(&mut self, p: &Partial, format: Format) -> Result<(), CliError> {
        self.json("partial.json", p)?;
        self.rows(&p.rows(), format)
    }

    pub fn stream(&mut self, replica: u64, chain: u64) {
        self.streams.insert((replica, chain));
    }

    pub fn input(&mut self, name: String) {
        self.inputs.push(name);
    }

    /// Writes `manifest.json`: resolved config, seed, streams and artifacts.
    pub fn finish(&mut self, cfg: &ExperimentConfig) -> Result<(), CliError> {
        self.inputs.sort();
        let streams: Vec<_> = self
            .streams
            .iter()
            .map(|&(r, c)| json!({ "replica": r, "chain": c, "stream": stream_id(r, c) }))
            .collect();
        let m = json!({
            "tool": "rclab",
            "version": env!("CARGO_PKG_VERSION"),
            "command": cfg.command,
            "config": cfg,
            "seed": cfg.seed,
            "streams": streams,
            "inputs": self.inputs,
            "artifacts": self.artifacts,
        });
        std::fs::write(self.dir.join("manifest.json"), json_text(&m))?;
        Ok(())
    }
}
