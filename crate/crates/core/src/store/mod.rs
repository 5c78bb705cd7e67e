//! Tuning caches: the in-memory type, its canonical JSON form, and import of
//! caches written by external auto-tuners.
//!
//! # Native format (schema version 1)
//!
//! ```json
//! {
//!   "device_name": "W6600",
//!   "kernel_name": "convolution",
//!   "metadata": { "neighbor_scheme": "hamming1" },
//!   "param_order": ["block_size_x", "block_size_y"],
//!   "provenance": "native",
//!   "records": {
//!     "16,1": { "config": [16, 1], "metric_value": 812.5, "status": "ok",
//!               "time_ms": 1.2, "times_ms": [1.2, 1.2] },
//!     "32,1": { "config": [32, 1], "status": "compile_failed" }
//!   },
//!   "schema_version": 1,
//!   "space_fingerprint": "…sha256 of the canonical space text…"
//! }
//! ```
//!
//! Keys are sorted and floats use the shortest representation that round
//! trips, so writing a cache that was just read reproduces the file byte
//! for byte.

mod import;

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write as _;
use std::path::Path;

use serde::de::{MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

use crate::measure::Observation;
use crate::paramspace::{Configuration, SearchSpace};

pub use import::{
    export_external, import_external_cache, import_external_str, ImportOptions, MarkerTable,
};

pub const SCHEMA_VERSION: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    #[default]
    Native,
    Imported,
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at byte {offset} (line {line}, column {column}): {message}")]
    Parse {
        offset: usize,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unsupported schema version {found:?} (expected {SCHEMA_VERSION})")]
    SchemaVersion { found: Option<u64> },
    #[error("record `{key}` has {found} values but the cache has {expected} parameters")]
    Arity {
        key: String,
        expected: usize,
        found: usize,
    },
    #[error("duplicate record key `{0}`")]
    DuplicateKey(String),
    #[error("record key `{key}` does not match its configuration ({config})")]
    KeyMismatch { key: String, config: String },
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("document has no parameter key list (`{0}`)")]
    MissingKeyList(&'static str),
    #[error("entry `{key}`: unrecognised failure marker {marker:?}")]
    UnknownMarker { key: String, marker: String },
    #[error("entry `{key}`: {message}")]
    BadEntry { key: String, message: String },
    #[error("configuration ({0}) is not part of the expected space")]
    OutsideSpace(String),
    #[error("parameter order {found:?} does not match the space's {expected:?}")]
    ParamOrder {
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("cache was recorded for a different space (fingerprint {cache}, space {space})")]
    FingerprintMismatch { cache: String, space: String },
}

/// Measurements of one kernel on one device, keyed by configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct TuningCache {
    pub kernel_name: String,
    pub device_name: String,
    pub space_fingerprint: Option<String>,
    pub param_order: Vec<String>,
    pub provenance: Provenance,
    pub metadata: BTreeMap<String, String>,
    records: BTreeMap<String, Observation>,
}

impl TuningCache {
    pub fn new(
        kernel_name: impl Into<String>,
        device_name: impl Into<String>,
        param_order: Vec<String>,
    ) -> Self {
        Self {
            kernel_name: kernel_name.into(),
            device_name: device_name.into(),
            space_fingerprint: None,
            param_order,
            provenance: Provenance::Native,
            metadata: BTreeMap::new(),
            records: BTreeMap::new(),
        }
    }

    /// Empty cache bound to `space`.
    pub fn for_space(space: &SearchSpace, device_name: impl Into<String>) -> Self {
        let mut cache = Self::new(
            space.kernel_name(),
            device_name,
            space.param_names().iter().map(|s| s.to_string()).collect(),
        );
        cache.space_fingerprint = Some(space.fingerprint());
        cache.metadata.insert(
            "neighbor_scheme".into(),
            space.neighbor_scheme().to_string(),
        );
        cache
    }

    /// Insert or replace the record for the observation's configuration.
    pub fn insert(&mut self, obs: Observation) -> Result<(), StoreError> {
        if obs.config.len() != self.param_order.len() {
            return Err(StoreError::Arity {
                key: obs.config.key(),
                expected: self.param_order.len(),
                found: obs.config.len(),
            });
        }
        self.records.insert(obs.config.key(), obs);
        Ok(())
    }

    pub fn get(&self, config: &Configuration) -> Option<&Observation> {
        self.records.get(&config.key())
    }

    pub fn get_key(&self, key: &str) -> Option<&Observation> {
        self.records.get(key)
    }

    /// Records in key order.
    pub fn records(&self) -> impl Iterator<Item = &Observation> {
        self.records.values()
    }

    pub fn ok_records(&self) -> impl Iterator<Item = &Observation> {
        self.records.values().filter(|o| o.is_ok())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Apply `f` to every ok metric value (used for unit changes).
    pub fn map_metric(&mut self, f: impl Fn(f64) -> f64) {
        for obs in self.records.values_mut() {
            if let Some(m) = obs.metric_value.as_mut() {
                *m = f(*m);
            }
        }
    }

    /// Refuse analysis against a space the cache was not recorded for.
    pub fn check_space(&self, space: &SearchSpace) -> Result<(), StoreError> {
        let expected: Vec<String> = space.param_names().iter().map(|s| s.to_string()).collect();
        if expected != self.param_order {
            return Err(StoreError::ParamOrder {
                expected,
                found: self.param_order.clone(),
            });
        }
        if let Some(fp) = &self.space_fingerprint {
            let space_fp = space.fingerprint();
            if *fp != space_fp {
                return Err(StoreError::FingerprintMismatch {
                    cache: fp.clone(),
                    space: space_fp,
                });
            }
        }
        Ok(())
    }

    /// Check every cache invariant.
    pub fn validate(&self) -> Result<(), StoreError> {
        for (key, obs) in &self.records {
            if obs.config.len() != self.param_order.len() {
                return Err(StoreError::Arity {
                    key: key.clone(),
                    expected: self.param_order.len(),
                    found: obs.config.len(),
                });
            }
            if obs.config.key() != *key {
                return Err(StoreError::KeyMismatch {
                    key: key.clone(),
                    config: obs.config.key(),
                });
            }
            obs.check().map_err(StoreError::InvalidRecord)?;
        }
        Ok(())
    }

    /// Canonical JSON text.
    pub fn to_json(&self) -> Result<String, StoreError> {
        self.validate()?;
        let doc = NativeDoc {
            schema_version: SCHEMA_VERSION,
            kernel_name: self.kernel_name.clone(),
            device_name: self.device_name.clone(),
            space_fingerprint: self.space_fingerprint.clone(),
            param_order: self.param_order.clone(),
            provenance: self.provenance,
            metadata: self.metadata.clone(),
            records: RecordMap(
                self.records
                    .iter()
                    .map(|(k, o)| (k.clone(), o.clone()))
                    .collect(),
            ),
        };
        // Going through `Value` sorts every object's keys.
        let value =
            serde_json::to_value(&doc).map_err(|e| StoreError::InvalidRecord(e.to_string()))?;
        let mut text = serde_json::to_string_pretty(&value)
            .map_err(|e| StoreError::InvalidRecord(e.to_string()))?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str) -> Result<Self, StoreError> {
        #[derive(Deserialize)]
        struct Probe {
            schema_version: Option<u64>,
        }
        let probe: Probe = serde_json::from_str(text).map_err(|e| parse_error(text, &e))?;
        if probe.schema_version != Some(SCHEMA_VERSION) {
            return Err(StoreError::SchemaVersion {
                found: probe.schema_version,
            });
        }
        let doc: NativeDoc = serde_json::from_str(text).map_err(|e| {
            let msg = e.to_string();
            match msg.strip_prefix(DUPLICATE_PREFIX) {
                Some(rest) => {
                    StoreError::DuplicateKey(rest.split('`').next().unwrap_or_default().to_string())
                }
                None => parse_error(text, &e),
            }
        })?;
        let cache = Self {
            kernel_name: doc.kernel_name,
            device_name: doc.device_name,
            space_fingerprint: doc.space_fingerprint,
            param_order: doc.param_order,
            provenance: doc.provenance,
            metadata: doc.metadata,
            records: doc.records.0,
        };
        cache.validate()?;
        Ok(cache)
    }
}

/// Write `cache` to `path` atomically (temporary file, then rename).
pub fn write_cache(cache: &TuningCache, path: impl AsRef<Path>) -> Result<(), StoreError> {
    write_atomic(path.as_ref(), cache.to_json()?.as_bytes())
}

pub fn read_cache(path: impl AsRef<Path>) -> Result<TuningCache, StoreError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| StoreError::Io {
        path: path.display().to_string(),
        source,
    })?;
    TuningCache::from_json(&text)
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let io = |source| StoreError::Io {
        path: path.display().to_string(),
        source,
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.flush().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

pub(crate) fn parse_error(text: &str, e: &serde_json::Error) -> StoreError {
    let (line, column) = (e.line(), e.column());
    StoreError::Parse {
        offset: byte_offset(text, line, column),
        line,
        column,
        message: e.to_string(),
    }
}

/// Byte offset of a 1-based (line, column) position as reported by serde_json.
fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let line_start: usize = text
        .split_inclusive('\n')
        .take(line - 1)
        .map(str::len)
        .sum();
    (line_start + column.saturating_sub(1)).min(text.len())
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NativeDoc {
    schema_version: u64,
    kernel_name: String,
    device_name: String,
    #[serde(default)]
    space_fingerprint: Option<String>,
    param_order: Vec<String>,
    provenance: Provenance,
    #[serde(default)]
    metadata: BTreeMap<String, String>,
    records: RecordMap,
}

const DUPLICATE_PREFIX: &str = "duplicate record key `";

/// Record map that rejects duplicate keys when deserialized.
struct RecordMap(BTreeMap<String, Observation>);

impl Serialize for RecordMap {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.0.serialize(s)
    }
}

impl<'de> Deserialize<'de> for RecordMap {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = RecordMap;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a map from configuration key to record")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<RecordMap, A::Error> {
                let mut out = BTreeMap::new();
                while let Some((k, v)) = map.next_entry::<String, Observation>()? {
                    if out.contains_key(&k) {
                        return Err(serde::de::Error::custom(format!("{DUPLICATE_PREFIX}{k}`")));
                    }
                    out.insert(k, v);
                }
                Ok(RecordMap(out))
            }
        }
        d.deserialize_map(V)
    }
}

/// Hardware description stored next to caches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceMeta {
    pub device_name: String,
    #[serde(default)]
    pub vendor: String,
    #[serde(default)]
    pub properties: BTreeMap<String, serde_json::Value>,
}

impl DeviceMeta {
    pub fn read(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| StoreError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let meta: Self = serde_json::from_str(&text).map_err(|e| parse_error(&text, &e))?;
        if meta.device_name.is_empty() {
            return Err(StoreError::InvalidRecord("device_name is empty".into()));
        }
        Ok(meta)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), StoreError> {
        if self.device_name.is_empty() {
            return Err(StoreError::InvalidRecord("device_name is empty".into()));
        }
        let value =
            serde_json::to_value(self).map_err(|e| StoreError::InvalidRecord(e.to_string()))?;
        let mut text = serde_json::to_string_pretty(&value)
            .map_err(|e| StoreError::InvalidRecord(e.to_string()))?;
        text.push('\n');
        write_atomic(path.as_ref(), text.as_bytes())
    }
}
