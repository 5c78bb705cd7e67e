//! Text format for search spaces.
//!
//! ```toml
//! kernel = "convolution"
//! neighbor_scheme = "hamming1"        # optional, `hamming1` or `adjacent`
//! metric = "2 * 4096^2 / (time_ms * 1e6)"   # optional
//! constraints = [
//!     "block_size_x * block_size_y <= 1024",
//! ]
//!
//! [params]
//! block_size_x = [16, 32, 48]
//! use_shmem = [false, true]           # booleans are stored as 0/1
//! layout = ["row", "col"]
//! ```
//!
//! Parameter order in `[params]` is the canonical configuration order.

use std::fmt::Write as _;
use std::path::Path;

use indexmap::IndexMap;
use serde::Deserialize;
use sha2::{Digest, Sha256};
use thiserror::Error;
use toml::Spanned;

use super::{NeighborScheme, ParamValue, ParameterDef, SearchSpace, SpaceError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpecError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("duplicate parameter `{name}` at line {line}, column {column}")]
    DuplicateParameter {
        name: String,
        line: usize,
        column: usize,
    },
    #[error("line {line}, column {column}: {error}")]
    Invalid {
        line: usize,
        column: usize,
        error: SpaceError,
    },
    #[error("reading {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    kernel: String,
    params: Spanned<IndexMap<Spanned<String>, Spanned<Vec<toml::Value>>>>,
    #[serde(default)]
    constraints: Vec<Spanned<String>>,
    #[serde(default)]
    metric: Option<Spanned<String>>,
    #[serde(default)]
    neighbor_scheme: Option<Spanned<String>>,
}

/// 1-based line and column of a byte offset.
fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let offset = offset.min(text.len());
    let before = &text[..offset];
    let line = before.matches('\n').count() + 1;
    let col_start = before.rfind('\n').map_or(0, |i| i + 1);
    (line, before[col_start..].chars().count() + 1)
}

fn syntax_at(text: &str, offset: usize, message: impl Into<String>) -> SpecError {
    let (line, column) = line_col(text, offset);
    SpecError::Syntax {
        line,
        column,
        message: message.into(),
    }
}

fn invalid_at(text: &str, offset: usize, error: SpaceError) -> SpecError {
    let (line, column) = line_col(text, offset);
    SpecError::Invalid {
        line,
        column,
        error,
    }
}

fn convert_value(v: &toml::Value) -> Option<ParamValue> {
    match v {
        toml::Value::Integer(i) => Some(ParamValue::Int(*i)),
        toml::Value::Boolean(b) => Some(ParamValue::Int(i64::from(*b))),
        toml::Value::String(s) => Some(ParamValue::Str(s.clone())),
        _ => None,
    }
}

/// Offset of an error inside a quoted TOML string value, assuming no escapes
/// precede it.
fn offset_in_string(span_start: usize, inner: usize) -> usize {
    span_start + 1 + inner
}

impl SearchSpace {
    /// Parse a space from its text form.
    pub fn parse_spec(text: &str) -> Result<Self, SpecError> {
        let raw: RawSpec = toml::from_str(text).map_err(|e| {
            let offset = e.span().map_or(0, |s| s.start);
            let message = e.message().to_string();
            if let Some(name) = message
                .strip_prefix("duplicate key `")
                .and_then(|rest| rest.split_once("` in table `params`"))
                .map(|(name, _)| name.to_string())
            {
                let (line, column) = line_col(text, offset);
                return SpecError::DuplicateParameter { name, line, column };
            }
            syntax_at(text, offset, message)
        })?;

        let mut params = Vec::with_capacity(raw.params.get_ref().len());
        for (name, values) in raw.params.get_ref() {
            let mut converted = Vec::with_capacity(values.get_ref().len());
            for v in values.get_ref() {
                match convert_value(v) {
                    Some(pv) => converted.push(pv),
                    None => {
                        return Err(syntax_at(
                            text,
                            values.span().start,
                            format!(
                            "parameter `{}` values must be integers, booleans or strings, found {}",
                            name.get_ref(),
                            v.type_str()
                        ),
                        ))
                    }
                }
            }
            params.push((
                name,
                ParameterDef {
                    name: name.get_ref().clone(),
                    values: converted,
                },
            ));
        }

        let scheme = match &raw.neighbor_scheme {
            Some(s) => s
                .get_ref()
                .parse::<NeighborScheme>()
                .map_err(|m| syntax_at(text, s.span().start, m))?,
            None => NeighborScheme::default(),
        };

        let constraint_src: Vec<&str> = raw
            .constraints
            .iter()
            .map(|c| c.get_ref().as_str())
            .collect();
        let defs: Vec<ParameterDef> = params.iter().map(|(_, d)| d.clone()).collect();
        SearchSpace::new(
            raw.kernel.clone(),
            defs,
            &constraint_src,
            raw.metric.as_ref().map(|m| m.get_ref().as_str()),
            scheme,
        )
        .map_err(|error| {
            // Point at the construct responsible for the failure.
            let offset =
                match &error {
                    SpaceError::BadName(n)
                    | SpaceError::DuplicateParameter(n)
                    | SpaceError::EmptyValues(n)
                    | SpaceError::Reserved(n) => params
                        .iter()
                        .find(|(k, _)| k.get_ref() == n)
                        .map_or(raw.params.span().start, |(k, _)| k.span().start),
                    SpaceError::DuplicateValue { name, .. }
                    | SpaceError::CommaInValue { name, .. } => params
                        .iter()
                        .find(|(k, _)| k.get_ref() == name)
                        .map_or(raw.params.span().start, |(k, _)| k.span().start),
                    SpaceError::Parse { source_text, error } => expr_offset(&raw, source_text)
                        .map_or(0, |s| offset_in_string(s, error.offset)),
                    SpaceError::UnknownIdentifier { expr, name } => expr_offset(&raw, expr)
                        .map_or(0, |s| {
                            offset_in_string(s, expr.find(name.as_str()).unwrap_or(0))
                        }),
                };
            invalid_at(text, offset, error)
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SpecError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| SpecError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse_spec(&text)
    }

    /// Canonical text form; `parse_spec(to_spec_string())` reproduces the space.
    pub fn to_spec_string(&self) -> String {
        let quote = |s: &str| toml::Value::String(s.to_string()).to_string();
        let mut out = String::new();
        let _ = writeln!(out, "kernel = {}", quote(&self.kernel_name));
        let _ = writeln!(
            out,
            "neighbor_scheme = {}",
            quote(self.neighbor_scheme.as_str())
        );
        if let Some(m) = &self.metric {
            let _ = writeln!(out, "metric = {}", quote(m.source()));
        }
        out.push_str("constraints = [\n");
        for c in &self.constraints {
            let _ = writeln!(out, "    {},", quote(c.source()));
        }
        out.push_str("]\n\n[params]\n");
        for p in &self.params {
            let values: Vec<String> = p
                .values
                .iter()
                .map(|v| match v {
                    ParamValue::Int(i) => i.to_string(),
                    ParamValue::Str(s) => quote(s),
                })
                .collect();
            let _ = writeln!(out, "{} = [{}]", p.name, values.join(", "));
        }
        out
    }

    /// SHA-256 of the canonical text form, hex encoded.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.to_spec_string().as_bytes()))
    }
}

fn expr_offset(raw: &RawSpec, source: &str) -> Option<usize> {
    raw.constraints
        .iter()
        .chain(raw.metric.iter())
        .find(|c| c.get_ref() == source)
        .map(|c| c.span().start)
}
