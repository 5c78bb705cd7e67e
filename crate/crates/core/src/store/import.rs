//! Import of cache files written by an external auto-tuner.
//!
//! Expected document shape:
//!
//! ```json
//! {
//!   "kernel_name": "convolution_kernel",
//!   "device_name": "AMD Radeon PRO W6600",
//!   "tune_params_keys": ["block_size_x", "block_size_y"],
//!   "cache": {
//!     "16,1": { "block_size_x": 16, "block_size_y": 1, "time": 0.91,
//!               "times": [0.9, 0.92], "GFLOP/s": 4370.1 },
//!     "32,1": { "time": "CompilationFailedConfig" }
//!   }
//! }
//! ```
//!
//! Times are taken to be milliseconds. A non-numeric `time` is a failure
//! marker, mapped to a status through a [`MarkerTable`]. Files cut off while
//! the tuner was still appending entries are repaired by closing the open
//! objects.

use std::path::Path;

use serde_json::{Map, Value};

use super::{parse_error, Provenance, StoreError, TuningCache};
use crate::measure::{Observation, Status};
use crate::paramspace::{Configuration, SearchSpace};

const KEY_LIST: &str = "tune_params_keys";

/// Failure-marker patterns. A marker matches a pattern when the pattern,
/// lower-cased with non-alphanumerics removed, occurs in the marker normalised
/// the same way. The first match wins.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarkerTable(Vec<(String, Status)>);

fn normalise(s: &str) -> String {
    s.chars()
        .filter(char::is_ascii_alphanumeric)
        .map(|c| c.to_ascii_lowercase())
        .collect()
}

impl Default for MarkerTable {
    fn default() -> Self {
        Self(vec![
            ("compilationfailed".into(), Status::CompileFailed),
            ("compilefailed".into(), Status::CompileFailed),
            ("runtimefailed".into(), Status::RuntimeFailed),
            ("invalidconfig".into(), Status::Invalid),
            ("invalid".into(), Status::Invalid),
            ("timeout".into(), Status::Timeout),
        ])
    }
}

impl MarkerTable {
    pub fn empty() -> Self {
        Self(Vec::new())
    }

    /// Add a pattern ahead of the existing ones.
    pub fn prepend(&mut self, pattern: &str, status: Status) {
        self.0.insert(0, (normalise(pattern), status));
    }

    pub fn classify(&self, marker: &str) -> Option<Status> {
        let m = normalise(marker);
        self.0
            .iter()
            .find(|(p, _)| !p.is_empty() && m.contains(p.as_str()))
            .map(|(_, s)| *s)
    }
}

#[derive(Debug, Clone, Default)]
pub struct ImportOptions<'a> {
    /// Validate every configuration against this space and bind the cache to it.
    pub expected_space: Option<&'a SearchSpace>,
    pub markers: MarkerTable,
    /// Entry field holding the performance value (e.g. `GFLOP/s`). When
    /// absent the space's metric is evaluated, or `1 / time` without one.
    pub metric_field: Option<String>,
    /// Override the document's device name.
    pub device_name: Option<String>,
}

pub fn import_external_cache(
    path: impl AsRef<Path>,
    options: &ImportOptions<'_>,
) -> Result<TuningCache, StoreError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| StoreError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut cache = import_external_str(&text, options)?;
    if let Some(name) = path.file_name() {
        cache
            .metadata
            .insert("imported_from".into(), name.to_string_lossy().into_owned());
    }
    Ok(cache)
}

fn parse_document(text: &str) -> Result<Map<String, Value>, StoreError> {
    match serde_json::from_str::<Value>(text) {
        Ok(Value::Object(m)) => Ok(m),
        Ok(_) => Err(StoreError::InvalidRecord(
            "document is not a JSON object".into(),
        )),
        Err(e) if e.is_eof() => {
            let trimmed = text.trim_end().trim_end_matches(',');
            for suffix in ["}}", "}", "}}}"] {
                if let Ok(Value::Object(m)) = serde_json::from_str(&format!("{trimmed}{suffix}")) {
                    return Ok(m);
                }
            }
            Err(parse_error(text, &e))
        }
        Err(e) => Err(parse_error(text, &e)),
    }
}

pub fn import_external_str(
    text: &str,
    options: &ImportOptions<'_>,
) -> Result<TuningCache, StoreError> {
    let doc = parse_document(text)?;
    let keys: Vec<String> = match doc.get(KEY_LIST) {
        Some(Value::Array(a)) => a
            .iter()
            .map(|v| v.as_str().map(str::to_string))
            .collect::<Option<_>>()
            .ok_or(StoreError::MissingKeyList(KEY_LIST))?,
        _ => return Err(StoreError::MissingKeyList(KEY_LIST)),
    };

    let space = options.expected_space;
    if let Some(space) = space {
        let expected: Vec<String> = space.param_names().iter().map(|s| s.to_string()).collect();
        if expected != keys {
            return Err(StoreError::ParamOrder {
                expected,
                found: keys,
            });
        }
    }

    let text_field = |name: &str| doc.get(name).and_then(Value::as_str).unwrap_or_default();
    let kernel = match space {
        Some(s) => s.kernel_name().to_string(),
        None => text_field("kernel_name").to_string(),
    };
    let device = options
        .device_name
        .clone()
        .unwrap_or_else(|| text_field("device_name").to_string());

    let mut cache = TuningCache::new(kernel, device, keys.clone());
    cache.provenance = Provenance::Imported;
    cache.metadata.insert("time_unit".into(), "ms".into());
    if let Some(space) = space {
        cache.space_fingerprint = Some(space.fingerprint());
        cache.metadata.insert(
            "neighbor_scheme".into(),
            space.neighbor_scheme().to_string(),
        );
    }
    if let Some(field) = &options.metric_field {
        cache.metadata.insert("metric_field".into(), field.clone());
    }

    let entries = match doc.get("cache") {
        Some(Value::Object(m)) => m,
        Some(_) => return Err(StoreError::InvalidRecord("`cache` is not an object".into())),
        None => return Ok(cache),
    };

    for (key, entry) in entries {
        let bad = |message: String| StoreError::BadEntry {
            key: key.clone(),
            message,
        };
        let tokens: Vec<&str> = key.split(',').collect();
        if tokens.len() != keys.len() {
            return Err(StoreError::Arity {
                key: key.clone(),
                expected: keys.len(),
                found: tokens.len(),
            });
        }
        let mut config = Configuration::from_key(key);
        if let Some(space) = space {
            config = space
                .resolve(&config)
                .ok_or_else(|| StoreError::OutsideSpace(key.clone()))?;
            let valid = space.is_valid(&config).map_err(|e| bad(e.to_string()))?;
            if !valid {
                return Err(StoreError::OutsideSpace(key.clone()));
            }
        }
        let entry = entry
            .as_object()
            .ok_or_else(|| bad("entry is not an object".into()))?;
        let obs =
            match entry.get("time") {
                Some(Value::Number(n)) => {
                    let time = n
                        .as_f64()
                        .filter(|t| t.is_finite() && *t > 0.0)
                        .ok_or_else(|| bad(format!("time {n} is not a positive number")))?;
                    let times: Vec<f64> = match entry.get("times") {
                        Some(Value::Array(a)) => a.iter().filter_map(Value::as_f64).collect(),
                        _ => Vec::new(),
                    };
                    let metric = match (&options.metric_field, space) {
                        (Some(field), _) => entry
                            .get(field)
                            .and_then(Value::as_f64)
                            .ok_or_else(|| bad(format!("missing numeric field `{field}`")))?,
                        (None, Some(space)) => space
                            .compute_metric(time, &config)
                            .map_err(|e| bad(e.to_string()))?,
                        (None, None) => 1.0 / time,
                    };
                    Observation::ok(config, times, time, metric)
                }
                Some(Value::String(marker)) => {
                    let status = options.markers.classify(marker).ok_or_else(|| {
                        StoreError::UnknownMarker {
                            key: key.clone(),
                            marker: marker.clone(),
                        }
                    })?;
                    Observation::failed(config, status, Some(marker.clone()))
                }
                _ => return Err(bad("missing `time` field".into())),
            };
        obs.check().map_err(StoreError::InvalidRecord)?;
        cache.insert(obs)?;
    }
    Ok(cache)
}

fn default_marker(status: Status) -> &'static str {
    match status {
        Status::CompileFailed => "CompilationFailedConfig",
        Status::RuntimeFailed => "RuntimeFailedConfig",
        Status::Invalid => "InvalidConfig",
        Status::Timeout | Status::Ok => "TimeoutConfig",
    }
}

/// Render `cache` in the external format. Failed records keep their
/// diagnostic as marker when it still classifies to the same status under
/// `markers`. Metric values go to the field named by the cache's
/// `metric_field` metadata, if any.
pub fn export_external(cache: &TuningCache, markers: &MarkerTable) -> Result<String, StoreError> {
    cache.validate()?;
    let mut entries = Map::new();
    for obs in cache.records() {
        let mut entry = Map::new();
        for (name, v) in cache.param_order.iter().zip(obs.config.values()) {
            entry.insert(name.clone(), serde_json::to_value(v).expect("plain value"));
        }
        match obs.time() {
            Some(t) => {
                entry.insert("time".into(), t.into());
                if !obs.times_ms.is_empty() {
                    entry.insert("times".into(), obs.times_ms.clone().into());
                }
                if let (Some(field), Some(m)) =
                    (cache.metadata.get("metric_field"), obs.metric_value)
                {
                    entry.insert(field.clone(), m.into());
                }
            }
            None => {
                let marker = match &obs.diagnostic {
                    Some(d) if markers.classify(d) == Some(obs.status) => d.clone(),
                    _ => default_marker(obs.status).to_string(),
                };
                entry.insert("time".into(), marker.into());
            }
        }
        entries.insert(obs.config.key(), Value::Object(entry));
    }
    let mut doc = Map::new();
    doc.insert("kernel_name".into(), cache.kernel_name.clone().into());
    doc.insert("device_name".into(), cache.device_name.clone().into());
    doc.insert(KEY_LIST.into(), cache.param_order.clone().into());
    doc.insert("cache".into(), Value::Object(entries));
    let mut text = serde_json::to_string_pretty(&Value::Object(doc))
        .map_err(|e| StoreError::InvalidRecord(e.to_string()))?;
    text.push('\n');
    Ok(text)
}
