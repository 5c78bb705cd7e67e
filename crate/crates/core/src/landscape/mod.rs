//! Landscape analysis of tuning caches: how much tuning gains, how hard the
//! optimum is to reach by local search, and how well one configuration
//! carries across devices.

mod ffg;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::paramspace::{Configuration, ConstraintEvalError};
use crate::store::{StoreError, TuningCache};

pub use ffg::{
    build_ffg, centrality_curve, default_p_grid, export_dot, find_local_minima, pagerank,
    pagerank_adjacency, proportion_of_centrality, CentralityCurve, FitnessFlowGraph,
    PageRankOptions,
};

#[derive(Debug, Error)]
pub enum LandscapeError {
    #[error("NoFeasibleData: the cache has no successful measurements")]
    NoFeasibleData,
    #[error("IncompleteCache: {missing} of {total} valid configurations have no record")]
    IncompleteCache { missing: usize, total: usize },
    #[error("PageRank did not converge in {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("unknown device `{0}`")]
    UnknownDevice(String),
    #[error("empty device set")]
    EmptyDeviceSet,
    #[error("NoPortableConfig: no configuration has non-zero portability over {0:?}")]
    NoPortableConfig(Vec<String>),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Constraint(#[from] ConstraintEvalError),
}

/// Sample median; the mean of the two central values for even lengths.
/// NaN for an empty slice.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Linear-interpolation quantile of sorted data, `q` in `[0, 1]`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerfStats {
    pub n_ok: usize,
    pub n_failed: usize,
    pub median_perf: f64,
    pub max_perf: f64,
    pub min_time_ms: f64,
    /// `max_perf / median_perf`.
    pub impact: f64,
}

pub fn perf_stats(cache: &TuningCache) -> Result<PerfStats, LandscapeError> {
    let perf: Vec<f64> = cache.records().filter_map(|o| o.performance()).collect();
    if perf.is_empty() {
        return Err(LandscapeError::NoFeasibleData);
    }
    let median_perf = median(&perf);
    let max_perf = perf.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min_time_ms = cache
        .records()
        .filter_map(|o| o.time())
        .fold(f64::INFINITY, f64::min);
    Ok(PerfStats {
        n_ok: perf.len(),
        n_failed: cache.len() - perf.len(),
        median_perf,
        max_perf,
        min_time_ms,
        impact: max_perf / median_perf,
    })
}

/// Best performance in the cache, if any record succeeded.
fn max_performance(cache: &TuningCache) -> Option<f64> {
    cache
        .records()
        .filter_map(|o| o.performance())
        .reduce(f64::max)
}

/// Performance of `config` relative to the best on this device; zero when
/// the configuration failed, is absent, or nothing succeeded.
pub fn app_efficiency(cache: &TuningCache, config: &Configuration) -> f64 {
    let Some(best) = max_performance(cache) else {
        return 0.0;
    };
    match cache.get(config).and_then(|o| o.performance()) {
        Some(p) if best > 0.0 => p / best,
        _ => 0.0,
    }
}

/// Harmonic mean of efficiencies; zero if any is zero.
pub fn harmonic_portability(efficiencies: &[f64]) -> f64 {
    if efficiencies.is_empty() || efficiencies.iter().any(|&e| e <= 0.0) {
        return 0.0;
    }
    efficiencies.len() as f64 / efficiencies.iter().map(|e| 1.0 / e).sum::<f64>()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PortabilityReport {
    pub devices: Vec<String>,
    pub config: Configuration,
    /// Aligned with `devices`.
    pub efficiencies: Vec<f64>,
    pub pp: f64,
}

impl PortabilityReport {
    /// JSON object with `devices`, `config` (canonical key), `efficiencies`, `pp`.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Doc<'a> {
            devices: &'a [String],
            config: String,
            efficiencies: &'a [f64],
            pp: f64,
        }
        let doc = Doc {
            devices: &self.devices,
            config: self.config.key(),
            efficiencies: &self.efficiencies,
            pp: self.pp,
        };
        let mut s = serde_json::to_string_pretty(&doc).expect("finite values serialise");
        s.push('\n');
        s
    }
}

/// Relative difference below which two portability scores are tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Device caches keyed by device id.
pub type DeviceCaches = BTreeMap<String, TuningCache>;

fn select<'a>(
    caches: &'a DeviceCaches,
    subset: &[&str],
) -> Result<Vec<(&'a str, &'a TuningCache)>, LandscapeError> {
    if subset.is_empty() {
        return Err(LandscapeError::EmptyDeviceSet);
    }
    subset
        .iter()
        .map(|d| {
            caches
                .get_key_value(*d)
                .map(|(k, c)| (k.as_str(), c))
                .ok_or_else(|| LandscapeError::UnknownDevice(d.to_string()))
        })
        .collect()
}

pub fn perf_portability(
    caches: &DeviceCaches,
    subset: &[&str],
    config: &Configuration,
) -> Result<PortabilityReport, LandscapeError> {
    let chosen = select(caches, subset)?;
    let efficiencies: Vec<f64> = chosen
        .iter()
        .map(|(_, c)| app_efficiency(c, config))
        .collect();
    Ok(PortabilityReport {
        devices: chosen.iter().map(|(d, _)| d.to_string()).collect(),
        config: config.clone(),
        pp: harmonic_portability(&efficiencies),
        efficiencies,
    })
}

/// The configuration with the highest portability over `subset`, among
/// configurations recorded (with any status) on every device. Ties (within
/// [`TIE_TOLERANCE`]) go to the smallest configuration in canonical order.
pub fn best_portable_config(
    caches: &DeviceCaches,
    subset: &[&str],
) -> Result<PortabilityReport, LandscapeError> {
    let chosen = select(caches, subset)?;
    let maxima: Vec<f64> = chosen
        .iter()
        .map(|(_, c)| max_performance(c).unwrap_or(0.0))
        .collect();
    let (_, first) = chosen[0];
    let mut candidates: Vec<&Configuration> = first
        .records()
        .map(|o| &o.config)
        .filter(|c| chosen[1..].iter().all(|(_, other)| other.get(c).is_some()))
        .collect();
    candidates.sort();

    let scored: Vec<(f64, &Configuration, Vec<f64>)> = candidates
        .into_iter()
        .map(|config| {
            let e: Vec<f64> = chosen
                .iter()
                .zip(&maxima)
                .map(
                    |((_, cache), &m)| match cache.get(config).and_then(|o| o.performance()) {
                        Some(p) if m > 0.0 => p / m,
                        _ => 0.0,
                    },
                )
                .collect();
            (harmonic_portability(&e), config, e)
        })
        .collect();
    // Scores within rounding of the maximum count as tied.
    let top = scored.iter().map(|s| s.0).fold(0.0, f64::max);
    let best = scored
        .into_iter()
        .find(|(pp, _, _)| top > 0.0 && *pp >= top * (1.0 - TIE_TOLERANCE));
    let devices: Vec<String> = chosen.iter().map(|(d, _)| d.to_string()).collect();
    match best {
        Some((pp, config, efficiencies)) => Ok(PortabilityReport {
            devices,
            config: config.clone(),
            efficiencies,
            pp,
        }),
        None => Err(LandscapeError::NoPortableConfig(devices)),
    }
}

/// The `k` best ok configurations by performance, descending; ties in
/// canonical configuration order.
pub fn top_k(cache: &TuningCache, k: usize) -> Vec<(Configuration, f64)> {
    let mut rows: Vec<(Configuration, f64)> = cache
        .records()
        .filter_map(|o| o.performance().map(|p| (o.config.clone(), p)))
        .collect();
    rows.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    rows.truncate(k);
    rows
}

pub const DISTRIBUTION_QUANTILES: [f64; 7] = [0.01, 0.05, 0.25, 0.50, 0.75, 0.95, 0.99];

#[derive(Debug, Clone, PartialEq)]
pub struct DistributionRow {
    pub config: Configuration,
    pub metric_value: f64,
    pub fraction_of_optimum: f64,
}

/// Performance distribution relative to the optimum.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    /// Ok configurations in canonical order.
    pub rows: Vec<DistributionRow>,
    /// `(level, fraction_of_optimum)` for each of [`DISTRIBUTION_QUANTILES`].
    pub quantiles: Vec<(f64, f64)>,
}

impl Distribution {
    /// CSV with header `config_key,metric_value,fraction_of_optimum`.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["config_key", "metric_value", "fraction_of_optimum"])
            .expect("in-memory write");
        for r in &self.rows {
            w.write_record([
                r.config.key(),
                r.metric_value.to_string(),
                r.fraction_of_optimum.to_string(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory write")).expect("utf-8 fields")
    }

    /// CSV with header `quantile,fraction_of_optimum`.
    pub fn quantiles_csv(&self) -> String {
        let mut out = String::from("quantile,fraction_of_optimum\n");
        for (q, v) in &self.quantiles {
            let _ = writeln!(out, "{q},{v}");
        }
        out
    }
}

pub fn export_distribution(cache: &TuningCache) -> Result<Distribution, LandscapeError> {
    let best = max_performance(cache).ok_or(LandscapeError::NoFeasibleData)?;
    let mut rows: Vec<DistributionRow> = cache
        .records()
        .filter_map(|o| {
            o.performance().map(|p| DistributionRow {
                config: o.config.clone(),
                metric_value: p,
                fraction_of_optimum: p / best,
            })
        })
        .collect();
    rows.sort_by(|a, b| a.config.cmp(&b.config));
    let mut fractions: Vec<f64> = rows.iter().map(|r| r.fraction_of_optimum).collect();
    fractions.sort_by(f64::total_cmp);
    let quantiles = DISTRIBUTION_QUANTILES
        .iter()
        .map(|&q| (q, quantile_sorted(&fractions, q)))
        .collect();
    Ok(Distribution { rows, quantiles })
}
