//! Monte Carlo estimates of event probabilities and other observables.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::lattice::Region;
use crate::rcmodel::{BondConfig, BoundaryCondition, RCParams};
use crate::rng::replica_stream;
use crate::sampler::{run_chain, ChainState, Kernel, SamplerError, Schedule};
use crate::stats::{pool, BatchSeries, Estimate};

use super::events::{eval_unchecked, EventError, EventSpec};

/// Sampling plan shared by all estimators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    /// Retained samples per replica.
    pub samples: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub kernel: Kernel,
    /// Batches per replica.
    pub batches: usize,
    pub seed: u64,
    pub replicas: usize,
}

impl McConfig {
    pub fn new(samples: usize, kernel: Kernel, seed: u64) -> McConfig {
        McConfig { samples, burn_in: 200, thin: 1, kernel, batches: 32, seed, replicas: 1 }
    }
    pub fn schedule(&self) -> Schedule {
        Schedule { sweeps: self.burn_in + self.samples * self.thin, burn_in: self.burn_in, thin: self.thin, kernel: self.kernel }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EstimateError {
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Event(#[from] EventError),
    #[error("estimator failure: {0}")]
    Failure(String),
}

/// Splits a series into at most `batches` equal batches (remainder dropped);
/// returns the batch size and the batch means.
pub fn batch_means(series: &[f64], batches: usize) -> (u64, Vec<f64>) {
    let b = batches.max(1).min(series.len().max(1));
    let size = series.len() / b;
    if size == 0 {
        return (0, Vec::new());
    }
    let means = series.chunks_exact(size).take(b).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
    (size as u64, means)
}

/// Runs `mc.replicas` independent chains (replica r on stream (seed, r, chain))
/// and records `f` on every retained state; returns per-replica batch series
/// for each component of `f`.
pub fn sample_series(
    region: &Region,
    params: &RCParams,
    bc: &BoundaryCondition,
    mc: &McConfig,
    chain: u64,
    f: &(dyn Fn(&mut ChainState) -> Vec<f64> + Sync),
) -> Result<Vec<Vec<BatchSeries>>, EstimateError> {
    let per_replica: Vec<Result<Vec<Vec<f64>>, SamplerError>> = (0..mc.replicas as u64)
        .into_par_iter()
        .map(|r| {
            let mut cols: Vec<Vec<f64>> = Vec::new();
            run_chain(region, params, bc, &mc.schedule(), replica_stream(mc.seed, r, chain), |st| {
                let v = f(st);
                if cols.is_empty() {
                    cols = vec![Vec::with_capacity(mc.samples); v.len()];
                }
                for (c, x) in cols.iter_mut().zip(v) {
                    c.push(x);
                }
            })?;
            Ok(cols)
        })
        .collect();
    let mut out: Vec<Vec<BatchSeries>> = Vec::new();
    for (r, cols) in per_replica.into_iter().enumerate() {
        let cols = cols?;
        if out.is_empty() {
            out = vec![Vec::new(); cols.len()];
        }
        for (k, c) in cols.iter().enumerate() {
            let (size, means) = batch_means(c, mc.batches);
            out[k].push(BatchSeries { replica: r as u64, batch_size: size, means });
        }
    }
    Ok(out)
}

/// Batch-means estimates of several observables on one set of chains.
pub fn estimate_many(
    region: &Region,
    params: &RCParams,
    bc: &BoundaryCondition,
    mc: &McConfig,
    method: &str,
    f: &(dyn Fn(&mut ChainState) -> Vec<f64> + Sync),
) -> Result<Vec<Estimate>, EstimateError> {
    Ok(sample_series(region, params, bc, mc, 0, f)?.iter().map(|s| pool(s, method)).collect())
}

/// Probabilities of several events under one sampling run.
pub fn estimate_events(
    region: &Region,
    params: &RCParams,
    bc: &BoundaryCondition,
    specs: &[EventSpec],
    mc: &McConfig,
) -> Result<Vec<Estimate>, EstimateError> {
    for s in specs {
        s.validate(region)?;
    }
    let f = |st: &mut ChainState| -> Vec<f64> {
        let c = BondConfig::from_bools(st.omega());
        specs.iter().map(|s| f64::from(u8::from(eval_unchecked(region, &c, bc, s)))).collect()
    };
    let method = format!("mc:{:?}", mc.kernel).to_lowercase();
    estimate_many(region, params, bc, mc, &method, &f)
}

/// Probability of one event.
pub fn estimate_event(
    region: &Region,
    params: &RCParams,
    bc: &BoundaryCondition,
    spec: &EventSpec,
    mc: &McConfig,
) -> Result<Estimate, EstimateError> {
    Ok(estimate_events(region, params, bc, std::slice::from_ref(spec), mc)?.remove(0))
}

/// One row of an estimates table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub spec: String,
    pub params: String,
    pub value: f64,
    pub ci: Option<f64>,
    pub n: u64,
    pub method: String,
}

impl EstimateRow {
    pub fn new(spec: impl Into<String>, params: impl Into<String>, e: &Estimate) -> EstimateRow {
        EstimateRow { spec: spec.into(), params: params.into(), value: e.value, ci: e.ci, n: e.samples, method: e.method.clone() }
    }
}

/// Writes rows as CSV with a header.
pub fn write_csv<W: std::io::Write>(rows: &[EstimateRow], w: W) -> Result<(), csv::Error> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}
