//! Client latency models.
//!
//! A client's per-round latency combines computation and communication time.
//! Latency can be drawn from a Gaussian parameterized by measured statistics,
//! or from lognormal, half-normal and uniform models fitted to the same
//! statistics. Every draw is floored at a small positive value.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default lower bound on any sampled delay, in seconds.
pub const DEFAULT_DELAY_FLOOR: f64 = 0.01;

/// Mean and standard deviation of a client's round latency, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub mean: f64,
    pub std: f64,
}

impl LatencyStats {
    pub fn new(mean: f64, std: f64) -> Result<Self> {
        if !(mean > 0.0 && mean.is_finite()) {
            return Err(Error::param(format!("latency mean must be positive, got {mean}")));
        }
        if !(std >= 0.0 && std.is_finite()) {
            return Err(Error::param(format!("latency std must be non-negative, got {std}")));
        }
        Ok(Self { mean, std })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DelayModel {
    /// `Normal(mean, std²)`.
    GaussianStats { mean: f64, std: f64 },
    /// `exp(Normal(mu, sigma²))`.
    Lognormal { mu: f64, sigma: f64 },
    /// `|Normal(0, scale²)|`.
    Halfnormal { scale: f64 },
    Uniform { lo: f64, hi: f64 },
    Fixed { value: f64 },
}

impl DelayModel {
    pub fn gaussian(stats: LatencyStats) -> Self {
        DelayModel::GaussianStats {
            mean: stats.mean,
            std: stats.std,
        }
    }

    pub fn fixed(value: f64) -> Self {
        DelayModel::Fixed { value }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            DelayModel::GaussianStats { mean, std } => mean.is_finite() && std >= 0.0 && std.is_finite(),
            DelayModel::Lognormal { mu, sigma } => mu.is_finite() && sigma >= 0.0 && sigma.is_finite(),
            DelayModel::Halfnormal { scale } => scale >= 0.0 && scale.is_finite(),
            DelayModel::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo <= hi,
            DelayModel::Fixed { value } => value.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::param(format!("invalid delay model {self:?}")))
        }
    }

    /// Analytic mean of the unfloored distribution.
    pub fn mean(&self) -> f64 {
        match *self {
            DelayModel::GaussianStats { mean, .. } => mean,
            DelayModel::Lognormal { mu, sigma } => (mu + sigma * sigma / 2.0).exp(),
            DelayModel::Halfnormal { scale } => scale * (2.0 / PI).sqrt(),
            DelayModel::Uniform { lo, hi } => (lo + hi) / 2.0,
            DelayModel::Fixed { value } => value,
        }
    }
}

/// Lognormal whose arithmetic mean and standard deviation match `stats`.
pub fn fit_lognormal(stats: LatencyStats) -> Result<DelayModel> {
    let LatencyStats { mean, std } = LatencyStats::new(stats.mean, stats.std)?;
    let sigma = ((std * std) / (mean * mean) + 1.0).ln().sqrt();
    let mu = mean.ln() - sigma * sigma / 2.0;
    Ok(DelayModel::Lognormal { mu, sigma })
}

/// Half-normal with the same mean as `stats`.
pub fn fit_halfnormal(stats: LatencyStats) -> Result<DelayModel> {
    let stats = LatencyStats::new(stats.mean, stats.std)?;
    Ok(DelayModel::Halfnormal {
        scale: stats.mean * (PI / 2.0).sqrt(),
    })
}

/// Minimum number of observations accepted by [`fit_uniform`].
pub const MIN_UNIFORM_OBSERVATIONS: usize = 20;

/// Uniform over the 5th..95th percentile range of `observed`.
pub fn fit_uniform(observed: &[f64]) -> Result<DelayModel> {
    if observed.len() < MIN_UNIFORM_OBSERVATIONS {
        return Err(Error::param(format!(
            "uniform fit needs at least {MIN_UNIFORM_OBSERVATIONS} observations, got {}",
            observed.len()
        )));
    }
    if observed.iter().any(|v| !v.is_finite()) {
        return Err(Error::param("observations must be finite"));
    }
    let mut sorted = observed.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(DelayModel::Uniform {
        lo: percentile_sorted(&sorted, 5.0),
        hi: percentile_sorted(&sorted, 95.0),
    })
}

/// Percentile with linear interpolation between closest ranks:
/// position `p/100 · (n − 1)` in the sorted sample.
pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of an empty sample");
    let pos = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// One delay draw, floored at `floor`.
pub fn sample_delay<R: Rng + ?Sized>(model: &DelayModel, rng: &mut R, floor: f64) -> f64 {
    let raw = match *model {
        DelayModel::GaussianStats { mean, std } => {
            let z: f64 = StandardNormal.sample(rng);
            mean + std * z
        }
        DelayModel::Lognormal { mu, sigma } => {
            let z: f64 = StandardNormal.sample(rng);
            (mu + sigma * z).exp()
        }
        DelayModel::Halfnormal { scale } => {
            let z: f64 = StandardNormal.sample(rng);
            scale * z.abs()
        }
        DelayModel::Uniform { lo, hi } => {
            if lo == hi {
                lo
            } else {
                rng.random_range(lo..=hi)
            }
        }
        DelayModel::Fixed { value } => value,
    };
    raw.max(floor)
}

/// Reads a delay trace CSV with header
/// `client_id,comp_mean,comp_std,comm_mean,comm_std`.
///
/// Computation and communication are combined into one round latency: means
/// add, standard deviations add in quadrature.
pub fn load_trace(path: &Path) -> Result<BTreeMap<u64, LatencyStats>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_trace(&text, path)
}

pub const TRACE_HEADER: [&str; 5] = ["client_id", "comp_mean", "comp_std", "comm_mean", "comm_std"];

pub fn parse_trace(text: &str, origin: &Path) -> Result<BTreeMap<u64, LatencyStats>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::format(origin, "line 1", e.to_string()))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != TRACE_HEADER {
        return Err(Error::format(
            origin,
            "line 1",
            format!("expected header `{}`", TRACE_HEADER.join(",")),
        ));
    }
    let mut out = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::format(origin, format!("line {line}"), e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let at = || format!("line {line}");
        if record.len() != 5 {
            return Err(Error::format(origin, at(), format!("expected 5 fields, found {}", record.len())));
        }
        let id: u64 = record[0]
            .parse()
            .map_err(|_| Error::format(origin, at(), format!("bad client_id `{}`", &record[0])))?;
        let mut vals = [0.0f64; 4];
        for (k, v) in vals.iter_mut().enumerate() {
            let field = &record[k + 1];
            *v = field
                .parse()
                .map_err(|_| Error::format(origin, at(), format!("bad {} `{field}`", TRACE_HEADER[k + 1])))?;
            if !(v.is_finite() && *v >= 0.0) {
                return Err(Error::format(origin, at(), format!("{} must be non-negative", TRACE_HEADER[k + 1])));
            }
        }
        let [comp_mean, comp_std, comm_mean, comm_std] = vals;
        let mean = comp_mean + comm_mean;
        if mean <= 0.0 {
            return Err(Error::format(origin, at(), "total mean latency must be positive"));
        }
        let stats = LatencyStats {
            mean,
            std: (comp_std * comp_std + comm_std * comm_std).sqrt(),
        };
        if out.insert(id, stats).is_some() {
            return Err(Error::format(origin, at(), format!("duplicate client_id {id}")));
        }
    }
    if out.is_empty() {
        return Err(Error::format(origin, "line 2", "trace has no rows"));
    }
    Ok(out)
}
