//! Constrained tunable-parameter search spaces.
//!
//! A [`SearchSpace`] is an ordered list of parameters, each with an ordered
//! list of discrete values, restricted by boolean constraint expressions.
//! Configurations that violate a constraint are not part of the space.

mod expr;
mod specfile;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use expr::{Ast, BinaryOp, EvalError, Expression, ParseError, UnaryOp, Value};
pub use specfile::SpecError;

/// Name bound to the measured time inside metric expressions.
pub const TIME_VARIABLE: &str = "time_ms";

/// A single parameter value. Booleans are stored as `0`/`1`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Str(String),
}

impl ParamValue {
    pub fn as_value(&self) -> Value<'_> {
        match self {
            ParamValue::Int(v) => Value::Int(*v),
            ParamValue::Str(s) => Value::Str(s),
        }
    }

    /// Parse a configuration-key token: integers become `Int`, anything else `Str`.
    pub fn from_token(token: &str) -> Self {
        match token.trim().parse::<i64>() {
            Ok(v) => ParamValue::Int(v),
            Err(_) => ParamValue::Str(token.trim().to_string()),
        }
    }
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Int(v) => write!(f, "{v}"),
            ParamValue::Str(s) => f.write_str(s),
        }
    }
}

impl From<i64> for ParamValue {
    fn from(v: i64) -> Self {
        ParamValue::Int(v)
    }
}

impl From<&str> for ParamValue {
    fn from(v: &str) -> Self {
        ParamValue::Str(v.to_string())
    }
}

/// One value per parameter, in the owning space's parameter order.
///
/// Ordering is component-wise on the values, which coincides with
/// enumeration order for spaces whose value lists are ascending.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Configuration(pub Vec<ParamValue>);

impl Configuration {
    pub fn new(values: Vec<ParamValue>) -> Self {
        Self(values)
    }

    pub fn values(&self) -> &[ParamValue] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Canonical text key: values joined by commas.
    pub fn key(&self) -> String {
        let mut out = String::new();
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            out.push_str(&v.to_string());
        }
        out
    }

    /// Inverse of [`Configuration::key`] for keys without a known space.
    pub fn from_key(key: &str) -> Self {
        Self(key.split(',').map(ParamValue::from_token).collect())
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

impl<V: Into<ParamValue>> FromIterator<V> for Configuration {
    fn from_iter<I: IntoIterator<Item = V>>(iter: I) -> Self {
        Self(iter.into_iter().map(Into::into).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParameterDef {
    pub name: String,
    pub values: Vec<ParamValue>,
}

/// How neighbouring configurations are defined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NeighborScheme {
    /// Differ in exactly one parameter, any other value.
    #[default]
    Hamming1,
    /// Differ in exactly one parameter, by one position in its value list.
    Adjacent,
}

impl NeighborScheme {
    pub fn as_str(self) -> &'static str {
        match self {
            NeighborScheme::Hamming1 => "hamming1",
            NeighborScheme::Adjacent => "adjacent",
        }
    }
}

impl fmt::Display for NeighborScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NeighborScheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hamming1" => Ok(NeighborScheme::Hamming1),
            "adjacent" => Ok(NeighborScheme::Adjacent),
            other => Err(format!(
                "unknown neighbor scheme `{other}` (expected `hamming1` or `adjacent`)"
            )),
        }
    }
}

/// A constraint expression bound to its space's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    expr: Expression,
    /// Highest parameter position the expression reads.
    last_param: usize,
}

impl Constraint {
    pub fn source(&self) -> &str {
        self.expr.source()
    }

    pub fn expression(&self) -> &Expression {
        &self.expr
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpaceError {
    #[error("parameter name `{0}` is not a valid identifier")]
    BadName(String),
    #[error("duplicate parameter `{0}`")]
    DuplicateParameter(String),
    #[error("parameter `{0}` has no values")]
    EmptyValues(String),
    #[error("parameter `{name}` lists value `{value}` more than once")]
    DuplicateValue { name: String, value: String },
    #[error("parameter `{name}` value `{value}` may not contain a comma")]
    CommaInValue { name: String, value: String },
    #[error("invalid expression `{source_text}`: {error}")]
    Parse {
        source_text: String,
        error: ParseError,
    },
    #[error("expression `{expr}` references unknown parameter `{name}`")]
    UnknownIdentifier { expr: String, name: String },
    #[error("parameter name `{0}` is reserved")]
    Reserved(String),
}

/// Evaluation failure with the offending expression and configuration attached.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("evaluating `{expr}` on ({config}): {error}")]
pub struct ConstraintEvalError {
    pub expr: String,
    pub config: String,
    pub error: EvalError,
}

/// A parsed, validated search space.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchSpace {
    kernel_name: String,
    params: Vec<ParameterDef>,
    constraints: Vec<Constraint>,
    metric: Option<Expression>,
    neighbor_scheme: NeighborScheme,
}

pub(crate) fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl SearchSpace {
    /// Build a space from already-parsed parts, validating every invariant.
    pub fn new(
        kernel_name: impl Into<String>,
        params: Vec<ParameterDef>,
        constraints: &[&str],
        metric: Option<&str>,
        neighbor_scheme: NeighborScheme,
    ) -> Result<Self, SpaceError> {
        let mut names: Vec<&str> = Vec::with_capacity(params.len());
        for p in &params {
            if !is_identifier(&p.name) {
                return Err(SpaceError::BadName(p.name.clone()));
            }
            if p.name == TIME_VARIABLE {
                return Err(SpaceError::Reserved(p.name.clone()));
            }
            if names.contains(&p.name.as_str()) {
                return Err(SpaceError::DuplicateParameter(p.name.clone()));
            }
            if p.values.is_empty() {
                return Err(SpaceError::EmptyValues(p.name.clone()));
            }
            let mut seen = std::collections::HashSet::new();
            for v in &p.values {
                let text = v.to_string();
                if text.contains(',') {
                    return Err(SpaceError::CommaInValue {
                        name: p.name.clone(),
                        value: text,
                    });
                }
                if !seen.insert(text.clone()) {
                    return Err(SpaceError::DuplicateValue {
                        name: p.name.clone(),
                        value: text,
                    });
                }
            }
            names.push(&p.name);
        }

        let parse = |src: &str, names: &[&str]| -> Result<Expression, SpaceError> {
            let mut expr = Expression::parse(src).map_err(|error| SpaceError::Parse {
                source_text: src.to_string(),
                error,
            })?;
            expr.bind(names)
                .map_err(|name| SpaceError::UnknownIdentifier {
                    expr: src.to_string(),
                    name,
                })?;
            Ok(expr)
        };

        let constraints = constraints
            .iter()
            .map(|src| {
                let expr = parse(src, &names)?;
                let last_param = expr
                    .identifiers()
                    .iter()
                    .filter_map(|id| names.iter().position(|n| n == id))
                    .max()
                    .unwrap_or(0);
                Ok(Constraint { expr, last_param })
            })
            .collect::<Result<Vec<_>, SpaceError>>()?;

        let metric = match metric {
            Some(src) => {
                let mut with_time = names.clone();
                with_time.push(TIME_VARIABLE);
                Some(parse(src, &with_time)?)
            }
            None => None,
        };

        Ok(Self {
            kernel_name: kernel_name.into(),
            params,
            constraints,
            metric,
            neighbor_scheme,
        })
    }

    pub fn kernel_name(&self) -> &str {
        &self.kernel_name
    }

    pub fn params(&self) -> &[ParameterDef] {
        &self.params
    }

    pub fn param_names(&self) -> Vec<&str> {
        self.params.iter().map(|p| p.name.as_str()).collect()
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn metric(&self) -> Option<&Expression> {
        self.metric.as_ref()
    }

    pub fn neighbor_scheme(&self) -> NeighborScheme {
        self.neighbor_scheme
    }

    pub fn with_neighbor_scheme(mut self, scheme: NeighborScheme) -> Self {
        self.neighbor_scheme = scheme;
        self
    }

    /// Product of the value-list lengths, before constraints.
    pub fn cartesian_size(&self) -> u128 {
        self.params.iter().map(|p| p.values.len() as u128).product()
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn config_from_indices(&self, indices: &[usize]) -> Configuration {
        Configuration(
            indices
                .iter()
                .zip(&self.params)
                .map(|(&i, p)| p.values[i].clone())
                .collect(),
        )
    }

    /// Position of each value in its parameter's value list.
    pub fn indices_of(&self, config: &Configuration) -> Option<Vec<usize>> {
        if config.len() != self.params.len() {
            return None;
        }
        config
            .values()
            .iter()
            .zip(&self.params)
            .map(|(v, p)| p.values.iter().position(|x| x == v))
            .collect()
    }

    /// Map a configuration whose values may have been parsed without type
    /// information (e.g. from a key) onto this space's values by text.
    pub fn resolve(&self, config: &Configuration) -> Option<Configuration> {
        let indices = self.resolve_indices(config)?;
        Some(self.config_from_indices(&indices))
    }

    pub fn resolve_indices(&self, config: &Configuration) -> Option<Vec<usize>> {
        if config.len() != self.params.len() {
            return None;
        }
        config
            .values()
            .iter()
            .zip(&self.params)
            .map(|(v, p)| {
                p.values.iter().position(|x| x == v).or_else(|| {
                    let text = v.to_string();
                    p.values.iter().position(|x| x.to_string() == text)
                })
            })
            .collect()
    }

    /// Mixed-radix rank of an index tuple (last parameter fastest).
    pub fn linear_index(&self, indices: &[usize]) -> u128 {
        indices
            .iter()
            .zip(&self.params)
            .fold(0u128, |acc, (&i, p)| {
                acc * p.values.len() as u128 + i as u128
            })
    }

    fn slot_values<'a>(&'a self, indices: &[usize]) -> Vec<Value<'a>> {
        indices
            .iter()
            .zip(&self.params)
            .map(|(&i, p)| p.values[i].as_value())
            .collect()
    }

    fn eval_error(
        &self,
        c: &Constraint,
        indices: &[usize],
        error: EvalError,
    ) -> ConstraintEvalError {
        ConstraintEvalError {
            expr: c.source().to_string(),
            config: self.config_from_indices(indices).key(),
            error,
        }
    }

    /// Evaluate one constraint on a full configuration.
    pub fn eval_constraint(
        &self,
        constraint: &Constraint,
        config: &Configuration,
    ) -> Result<bool, ConstraintEvalError> {
        let indices = self.indices_of(config).ok_or_else(|| ConstraintEvalError {
            expr: constraint.source().to_string(),
            config: config.key(),
            error: EvalError::Unbound("configuration does not belong to this space".into()),
        })?;
        let slots = self.slot_values(&indices);
        constraint
            .expr
            .eval_bool(&slots)
            .map_err(|e| self.eval_error(constraint, &indices, e))
    }

    /// Whether a full index tuple satisfies every constraint.
    pub fn is_valid_indices(&self, indices: &[usize]) -> Result<bool, ConstraintEvalError> {
        let slots = self.slot_values(indices);
        for c in &self.constraints {
            if !c
                .expr
                .eval_bool(&slots)
                .map_err(|e| self.eval_error(c, indices, e))?
            {
                return Ok(false);
            }
        }
        Ok(true)
    }

    pub fn is_valid(&self, config: &Configuration) -> Result<bool, ConstraintEvalError> {
        match self.indices_of(config) {
            Some(idx) => self.is_valid_indices(&idx),
            None => Ok(false),
        }
    }

    /// Valid index tuples in lexicographic order (last parameter fastest).
    pub fn enumerate_indices(&self) -> IndexEnumeration<'_> {
        IndexEnumeration::new(self)
    }

    /// Valid configurations in enumeration order.
    pub fn enumerate(
        &self,
    ) -> impl Iterator<Item = Result<Configuration, ConstraintEvalError>> + '_ {
        self.enumerate_indices()
            .map(move |r| r.map(|idx| self.config_from_indices(&idx)))
    }

    /// Number of valid configurations.
    pub fn space_size(&self) -> Result<u64, ConstraintEvalError> {
        let mut n = 0u64;
        for r in self.enumerate_indices() {
            r?;
            n += 1;
        }
        Ok(n)
    }

    pub fn valid_indices(&self) -> Result<Vec<Vec<usize>>, ConstraintEvalError> {
        self.enumerate_indices().collect()
    }

    /// Valid neighbours of an index tuple, in parameter order then value-list order.
    pub fn neighbor_indices(
        &self,
        indices: &[usize],
        scheme: NeighborScheme,
    ) -> Result<Vec<Vec<usize>>, ConstraintEvalError> {
        let mut out = Vec::new();
        let mut candidate = indices.to_vec();
        for (pi, p) in self.params.iter().enumerate() {
            let current = indices[pi];
            let n = p.values.len();
            let choices: Vec<usize> = match scheme {
                NeighborScheme::Hamming1 => (0..n).filter(|&j| j != current).collect(),
                NeighborScheme::Adjacent => {
                    let mut v = Vec::with_capacity(2);
                    if current > 0 {
                        v.push(current - 1);
                    }
                    if current + 1 < n {
                        v.push(current + 1);
                    }
                    v
                }
            };
            for j in choices {
                candidate[pi] = j;
                if self.is_valid_indices(&candidate)? {
                    out.push(candidate.clone());
                }
            }
            candidate[pi] = current;
        }
        Ok(out)
    }

    pub fn neighbors(
        &self,
        config: &Configuration,
        scheme: NeighborScheme,
    ) -> Result<Vec<Configuration>, ConstraintEvalError> {
        let Some(indices) = self.indices_of(config) else {
            return Ok(Vec::new());
        };
        Ok(self
            .neighbor_indices(&indices, scheme)?
            .iter()
            .map(|idx| self.config_from_indices(idx))
            .collect())
    }

    /// Evaluate the performance metric for a measured time.
    ///
    /// Without a metric expression the performance is `1 / time_ms`.
    pub fn compute_metric(
        &self,
        time_ms: f64,
        config: &Configuration,
    ) -> Result<f64, ConstraintEvalError> {
        compute_metric(self, self.metric.as_ref(), time_ms, config)
    }
}

/// Performance from a time, with `time_ms` and every parameter bound.
pub fn compute_metric(
    space: &SearchSpace,
    metric: Option<&Expression>,
    time_ms: f64,
    config: &Configuration,
) -> Result<f64, ConstraintEvalError> {
    let Some(expr) = metric else {
        return Ok(1.0 / time_ms);
    };
    let fail = |error| ConstraintEvalError {
        expr: expr.source().to_string(),
        config: config.key(),
        error,
    };
    let indices = space
        .resolve_indices(config)
        .ok_or_else(|| fail(EvalError::Unbound("configuration".into())))?;
    let mut slots = space.slot_values(&indices);
    slots.push(Value::Float(time_ms));
    expr.eval_f64(&slots).map_err(fail)
}

/// Depth-first enumeration that prunes a prefix as soon as every parameter
/// a constraint reads has been fixed and the constraint fails.
pub struct IndexEnumeration<'a> {
    space: &'a SearchSpace,
    /// Constraints grouped by the last parameter they read.
    by_depth: Vec<Vec<&'a Constraint>>,
    indices: Vec<usize>,
    depth: usize,
    done: bool,
}

impl<'a> IndexEnumeration<'a> {
    fn new(space: &'a SearchSpace) -> Self {
        let n = space.params.len();
        let mut by_depth = vec![Vec::new(); n.max(1)];
        for c in &space.constraints {
            by_depth[c.last_param.min(n.saturating_sub(1))].push(c);
        }
        Self {
            space,
            by_depth,
            indices: vec![0; n],
            depth: 0,
            done: false,
        }
    }

    fn prefix_ok(&self, depth: usize) -> Result<bool, ConstraintEvalError> {
        let constraints = &self.by_depth[depth];
        if constraints.is_empty() {
            return Ok(true);
        }
        // Unfixed trailing positions hold index 0; the grouped constraints never read them.
        let slots = self.space.slot_values(&self.indices);
        for c in constraints {
            if !c
                .expr
                .eval_bool(&slots)
                .map_err(|e| self.space.eval_error(c, &self.indices, e))?
            {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Move to the next sibling at `depth`, backtracking as needed.
    /// Returns false when the enumeration is exhausted.
    fn advance(&mut self) -> bool {
        loop {
            let len = self.space.params[self.depth].values.len();
            if self.indices[self.depth] + 1 < len {
                self.indices[self.depth] += 1;
                return true;
            }
            self.indices[self.depth] = 0;
            if self.depth == 0 {
                return false;
            }
            self.depth -= 1;
        }
    }
}

impl Iterator for IndexEnumeration<'_> {
    type Item = Result<Vec<usize>, ConstraintEvalError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let n = self.space.params.len();
        if n == 0 {
            self.done = true;
            return Some(Ok(Vec::new()));
        }
        loop {
            match self.prefix_ok(self.depth) {
                Err(e) => {
                    self.done = true;
                    return Some(Err(e));
                }
                Ok(true) if self.depth + 1 == n => {
                    let out = self.indices.clone();
                    if !self.advance() {
                        self.done = true;
                    }
                    return Some(Ok(out));
                }
                Ok(true) => {
                    self.depth += 1;
                }
                Ok(false) => {
                    if !self.advance() {
                        self.done = true;
                        return None;
                    }
                }
            }
        }
    }
}
