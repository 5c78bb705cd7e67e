//! Measuring a configuration through a pluggable backend.
//!
//! Times are milliseconds everywhere. Measurement failures (a program that
//! does not compile, crashes, or times out) are recorded outcomes carried in
//! [`Observation::status`], not errors.

mod command;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::paramspace::{Configuration, ConstraintEvalError, SearchSpace};
use crate::store::TuningCache;

pub use command::{CommandBackend, CommandSpec, TIME_MARKER};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    CompileFailed,
    RuntimeFailed,
    Invalid,
    Timeout,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::CompileFailed => "compile_failed",
            Status::RuntimeFailed => "runtime_failed",
            Status::Invalid => "invalid",
            Status::Timeout => "timeout",
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Status {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ok" => Ok(Status::Ok),
            "compile_failed" => Ok(Status::CompileFailed),
            "runtime_failed" => Ok(Status::RuntimeFailed),
            "invalid" => Ok(Status::Invalid),
            "timeout" => Ok(Status::Timeout),
            other => Err(format!("unknown status `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregate {
    #[default]
    Mean,
    Median,
    Min,
}

impl Aggregate {
    /// Aggregate a non-empty list of run times.
    pub fn apply(self, times: &[f64]) -> Option<f64> {
        if times.is_empty() {
            return None;
        }
        Some(match self {
            Aggregate::Mean => times.iter().sum::<f64>() / times.len() as f64,
            Aggregate::Median => crate::landscape::median(times),
            Aggregate::Min => times.iter().copied().fold(f64::INFINITY, f64::min),
        })
    }
}

impl FromStr for Aggregate {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean" => Ok(Aggregate::Mean),
            "median" => Ok(Aggregate::Median),
            "min" => Ok(Aggregate::Min),
            other => Err(format!("unknown aggregate `{other}`")),
        }
    }
}

impl fmt::Display for Aggregate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Aggregate::Mean => "mean",
            Aggregate::Median => "median",
            Aggregate::Min => "min",
        })
    }
}

/// How many times a configuration is run and how the runs are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeasurementProtocol {
    pub warmup_runs: u32,
    pub benchmark_runs: u32,
    pub aggregate: Aggregate,
    pub timeout_ms: u64,
}

impl Default for MeasurementProtocol {
    fn default() -> Self {
        Self {
            warmup_runs: 1,
            benchmark_runs: 7,
            aggregate: Aggregate::Mean,
            timeout_ms: 60_000,
        }
    }
}

impl MeasurementProtocol {
    pub fn validate(&self) -> Result<(), MeasureError> {
        if self.benchmark_runs == 0 {
            return Err(MeasureError::Protocol(
                "benchmark_runs must be at least 1".into(),
            ));
        }
        if self.timeout_ms == 0 {
            return Err(MeasureError::Protocol("timeout must be positive".into()));
        }
        Ok(())
    }
}

/// Outcome of measuring one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub config: Configuration,
    pub status: Status,
    /// Per-run times; empty unless `status` is ok.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub times_ms: Vec<f64>,
    /// Aggregated time; present iff `status` is ok.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_ms: Option<f64>,
    /// Performance in metric units (higher is better); present iff ok.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric_value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

impl Observation {
    pub fn ok(config: Configuration, times_ms: Vec<f64>, time_ms: f64, metric_value: f64) -> Self {
        Self {
            config,
            status: Status::Ok,
            times_ms,
            time_ms: Some(time_ms),
            metric_value: Some(metric_value),
            diagnostic: None,
        }
    }

    pub fn failed(config: Configuration, status: Status, diagnostic: Option<String>) -> Self {
        debug_assert!(status != Status::Ok);
        Self {
            config,
            status,
            times_ms: Vec::new(),
            time_ms: None,
            metric_value: None,
            diagnostic,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == Status::Ok
    }

    /// Time of an ok observation.
    pub fn time(&self) -> Option<f64> {
        if self.is_ok() {
            self.time_ms
        } else {
            None
        }
    }

    /// Performance of an ok observation, falling back to `1 / time_ms`.
    pub fn performance(&self) -> Option<f64> {
        if !self.is_ok() {
            return None;
        }
        self.metric_value.or_else(|| self.time_ms.map(|t| 1.0 / t))
    }

    /// Check the status/timing invariants.
    pub fn check(&self) -> Result<(), String> {
        let finite = |v: f64, what: &str| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(format!("{} has non-finite {what} {v}", self.config))
            }
        };
        match self.status {
            Status::Ok => {
                let t = self
                    .time_ms
                    .ok_or_else(|| format!("{} is ok but has no time", self.config))?;
                finite(t, "time")?;
                if t <= 0.0 {
                    return Err(format!("{} has non-positive time {t}", self.config));
                }
                for &x in &self.times_ms {
                    finite(x, "run time")?;
                }
                if let Some(m) = self.metric_value {
                    finite(m, "metric value")?;
                }
                Ok(())
            }
            _ => {
                if !self.times_ms.is_empty()
                    || self.time_ms.is_some()
                    || self.metric_value.is_some()
                {
                    Err(format!(
                        "{} has status {} but carries timing data",
                        self.config, self.status
                    ))
                } else {
                    Ok(())
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MeasureError {
    #[error("no record for configuration ({0}) in the source cache")]
    MissingEntry(String),
    #[error("invalid protocol: {0}")]
    Protocol(String),
    #[error("invalid command template: {0}")]
    Template(String),
    #[error("metric evaluation failed: {0}")]
    Metric(#[from] ConstraintEvalError),
}

/// A measurement backend. Implementations run one configuration at a time.
pub trait Backend {
    fn measure(
        &mut self,
        config: &Configuration,
        protocol: &MeasurementProtocol,
    ) -> Result<Observation, MeasureError>;

    /// Short description recorded in cache metadata.
    fn describe(&self) -> String;

    /// Device the measurements come from.
    fn device_name(&self) -> String {
        "unknown".into()
    }
}

/// Replays a recorded tuning cache.
#[derive(Debug, Clone)]
pub struct SimulatedBackend {
    cache: TuningCache,
    label: String,
}

impl SimulatedBackend {
    pub fn new(cache: TuningCache) -> Self {
        let label = format!("simulated:{}/{}", cache.kernel_name, cache.device_name);
        Self { cache, label }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn cache(&self) -> &TuningCache {
        &self.cache
    }
}

impl Backend for SimulatedBackend {
    fn measure(
        &mut self,
        config: &Configuration,
        _protocol: &MeasurementProtocol,
    ) -> Result<Observation, MeasureError> {
        simulated_lookup(&self.cache, config)
    }

    fn describe(&self) -> String {
        self.label.clone()
    }

    fn device_name(&self) -> String {
        self.cache.device_name.clone()
    }
}

/// The stored observation for `config`, verbatim.
pub fn simulated_lookup(
    cache: &TuningCache,
    config: &Configuration,
) -> Result<Observation, MeasureError> {
    cache
        .get(config)
        .cloned()
        .ok_or_else(|| MeasureError::MissingEntry(config.key()))
}

/// Convert a time to the space's performance metric.
pub fn compute_metric(
    space: &SearchSpace,
    time_ms: f64,
    config: &Configuration,
) -> Result<f64, MeasureError> {
    Ok(space.compute_metric(time_ms, config)?)
}

/// Measure `config` through `backend`.
pub fn measure(
    backend: &mut dyn Backend,
    config: &Configuration,
    protocol: &MeasurementProtocol,
) -> Result<Observation, MeasureError> {
    protocol.validate()?;
    backend.measure(config, protocol)
}
