//! Batch-means estimates with Student-t confidence intervals.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

/// Fewest batches for which a confidence interval is reported.
pub const MIN_BATCHES: usize = 32;

/// Point estimate with a 95% half-width.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    /// Standard error; `None` when the interval is withheld.
    pub se: Option<f64>,
    /// 95% half-width; `None` when withheld.
    pub ci: Option<f64>,
    pub samples: u64,
    pub batches: usize,
    pub method: String,
    /// Raw batch means, kept for auditing and merging.
    #[serde(default)]
    pub batch_means: Vec<f64>,
    #[serde(default)]
    pub flags: Vec<String>,
}

pub fn t975(dof: usize) -> f64 {
    if dof == 0 {
        return f64::INFINITY;
    }
    StudentsT::new(0.0, 1.0, dof as f64).map(|t| t.inverse_cdf(0.975)).unwrap_or(1.96)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn var(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64
}

impl Estimate {
    /// Exact value with zero-width interval.
    pub fn exact(value: f64, method: &str) -> Estimate {
        Estimate {
            value,
            se: Some(0.0),
            ci: Some(0.0),
            samples: 0,
            batches: 0,
            method: method.into(),
            batch_means: Vec::new(),
            flags: Vec::new(),
        }
    }

    /// Estimate from equally sized batch means.
    pub fn from_batch_means(batch_means: Vec<f64>, batch_size: u64, method: &str) -> Estimate {
        let b = batch_means.len();
        let value = if b == 0 { f64::NAN } else { mean(&batch_means) };
        let mut e = Estimate {
            value,
            se: None,
            ci: None,
            samples: batch_size * b as u64,
            batches: b,
            method: method.into(),
            batch_means,
            flags: Vec::new(),
        };
        if b >= MIN_BATCHES {
            let se = (var(&e.batch_means) / b as f64).sqrt();
            e.se = Some(se);
            e.ci = Some(t975(b - 1) * se);
        } else {
            e.flags.push(format!("ci withheld: {b} batches < {MIN_BATCHES}"));
        }
        e
    }

    /// Splits a time series into `n_batches` contiguous batches; a remainder
    /// at the end is dropped.
    pub fn from_series(series: &[f64], n_batches: usize, method: &str) -> Estimate {
        let n_batches = n_batches.max(1).min(series.len().max(1));
        let size = series.len() / n_batches;
        if size == 0 {
            return Estimate::from_batch_means(Vec::new(), 0, method);
        }
        let means = series.chunks_exact(size).take(n_batches).map(mean).collect();
        Estimate::from_batch_means(means, size as u64, method)
    }

    /// Estimate from independent samples, each treated as its own batch.
    pub fn from_iid(values: &[f64], method: &str) -> Estimate {
        Estimate::from_batch_means(values.to_vec(), 1, method)
    }

    pub fn has_ci(&self) -> bool {
        self.ci.is_some()
    }
    pub fn lower(&self) -> f64 {
        self.value - self.ci.unwrap_or(f64::INFINITY)
    }
    pub fn upper(&self) -> f64 {
        self.value + self.ci.unwrap_or(f64::INFINITY)
    }
    pub fn contains(&self, x: f64) -> bool {
        self.lower() <= x && x <= self.upper()
    }
    pub fn sigma(&self) -> f64 {
        self.se.unwrap_or(f64::INFINITY)
    }

    /// `self - other` for independent estimates.
    pub fn minus(&self, other: &Estimate) -> Estimate {
        let se = match (self.se, other.se) {
            (Some(a), Some(b)) => Some((a * a + b * b).sqrt()),
            _ => None,
        };
        Estimate {
            value: self.value - other.value,
            se,
            ci: se.map(|s| 1.959_963_984_540_054 * s),
            samples: self.samples + other.samples,
            batches: self.batches.min(other.batches),
            method: format!("{}-{}", self.method, other.method),
            batch_means: Vec::new(),
            flags: self.flags.iter().chain(&other.flags).cloned().collect(),
        }
    }

    /// Delta-method image under a smooth map with derivative `df` at the point.
    pub fn map(&self, f: impl Fn(f64) -> f64, df: f64, method: &str) -> Estimate {
        let se = self.se.map(|s| s * df.abs());
        let ci = match (self.ci, self.se, se) {
            (Some(c), Some(s0), Some(s1)) if s0 > 0.0 => Some(c * s1 / s0),
            (Some(_), _, Some(s1)) => Some(1.959_963_984_540_054 * s1),
            _ => None,
        };
        Estimate {
            value: f(self.value),
            se,
            ci,
            samples: self.samples,
            batches: self.batches,
            method: method.into(),
            batch_means: Vec::new(),
            flags: self.flags.clone(),
        }
    }
}

/// Batch means produced by one replica; merging concatenates in replica order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchSeries {
    pub replica: u64,
    pub batch_size: u64,
    pub means: Vec<f64>,
}

/// Pools replica series (sorted by replica id) into one estimate.
pub fn pool(series: &[BatchSeries], method: &str) -> Estimate {
    let mut s: Vec<&BatchSeries> = series.iter().collect();
    s.sort_by_key(|b| b.replica);
    let size = s.first().map_or(0, |b| b.batch_size);
    let mut e = Estimate::from_batch_means(s.iter().flat_map(|b| b.means.iter().copied()).collect(), size, method);
    if s.iter().any(|b| b.batch_size != size) {
        e.flags.push("unequal batch sizes pooled".into());
    }
    e
}

/// Integrated autocorrelation time from batch means (1/2 for iid data).
pub fn integrated_autocorr_time(series: &[f64]) -> f64 {
    let n = series.len();
    let v = var(series);
    if n < 64 || v == 0.0 {
        return 0.5;
    }
    let b = (n as f64).sqrt() as usize;
    let means: Vec<f64> = series.chunks_exact(b).map(mean).collect();
    (b as f64 * var(&means) / (2.0 * v)).max(0.5)
}
