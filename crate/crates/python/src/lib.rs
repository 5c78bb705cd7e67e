//! Python bindings: search spaces, tuning caches, landscape analyses and
//! replay tuning against a recorded cache.

use std::fmt::Display;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList, PyTuple};
use pyo3::IntoPyObjectExt;

use tunescape_core::landscape::{self, DeviceCaches, PageRankOptions};
use tunescape_core::measure::{MeasurementProtocol, Observation, SimulatedBackend};
use tunescape_core::paramspace::{self as ps, Configuration, NeighborScheme, ParamValue};
use tunescape_core::store::{self, ImportOptions};
use tunescape_core::strategies::{self, Budget, LocalSearchOptions};

create_exception!(tunescape, TunescapeError, PyException);

fn err(e: impl Display) -> PyErr {
    TunescapeError::new_err(e.to_string())
}

fn to_config(values: &Bound<'_, PyAny>) -> PyResult<Configuration> {
    let mut out = Vec::new();
    for item in values.try_iter()? {
        let item = item?;
        out.push(match item.extract::<i64>() {
            Ok(v) => ParamValue::Int(v),
            Err(_) => ParamValue::Str(item.extract::<String>()?),
        });
    }
    Ok(Configuration(out))
}

fn from_config<'py>(py: Python<'py>, config: &Configuration) -> PyResult<Bound<'py, PyTuple>> {
    let items: Vec<Bound<'py, PyAny>> = config
        .values()
        .iter()
        .map(|v| match v {
            ParamValue::Int(i) => i.into_bound_py_any(py),
            ParamValue::Str(s) => s.into_bound_py_any(py),
        })
        .collect::<PyResult<_>>()?;
    PyTuple::new(py, items)
}

fn observation_dict<'py>(py: Python<'py>, o: &Observation) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("config", from_config(py, &o.config)?)?;
    d.set_item("status", o.status.as_str())?;
    d.set_item("time_ms", o.time_ms)?;
    d.set_item("times_ms", o.times_ms.clone())?;
    d.set_item("metric_value", o.metric_value)?;
    d.set_item("diagnostic", o.diagnostic.clone())?;
    Ok(d)
}

fn scheme_or(space: &ps::SearchSpace, scheme: Option<&str>) -> PyResult<NeighborScheme> {
    match scheme {
        Some(s) => s.parse().map_err(err),
        None => Ok(space.neighbor_scheme()),
    }
}

/// A constrained parameter space.
#[pyclass(module = "tunescape")]
struct SearchSpace {
    inner: ps::SearchSpace,
}

#[pymethods]
impl SearchSpace {
    /// Load a space file.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: ps::SearchSpace::load(path).map_err(err)?,
        })
    }

    /// Parse space-file text.
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: ps::SearchSpace::parse_spec(text).map_err(err)?,
        })
    }

    #[getter]
    fn kernel_name(&self) -> String {
        self.inner.kernel_name().to_string()
    }

    #[getter]
    fn param_names(&self) -> Vec<String> {
        self.inner
            .param_names()
            .iter()
            .map(|s| s.to_string())
            .collect()
    }

    #[getter]
    fn neighbor_scheme(&self) -> &'static str {
        self.inner.neighbor_scheme().as_str()
    }

    fn cartesian_size(&self) -> u128 {
        self.inner.cartesian_size()
    }

    /// Number of valid configurations.
    fn size(&self) -> PyResult<u64> {
        self.inner.space_size().map_err(err)
    }

    fn is_valid(&self, config: &Bound<'_, PyAny>) -> PyResult<bool> {
        self.inner.is_valid(&to_config(config)?).map_err(err)
    }

    /// Valid configurations in enumeration order, at most `limit` of them.
    #[pyo3(signature = (limit=None))]
    fn configurations<'py>(
        &self,
        py: Python<'py>,
        limit: Option<usize>,
    ) -> PyResult<Bound<'py, PyList>> {
        let list = PyList::empty(py);
        for c in self.inner.enumerate().take(limit.unwrap_or(usize::MAX)) {
            list.append(from_config(py, &c.map_err(err)?)?)?;
        }
        Ok(list)
    }

    #[pyo3(signature = (config, scheme=None))]
    fn neighbors<'py>(
        &self,
        py: Python<'py>,
        config: &Bound<'py, PyAny>,
        scheme: Option<&str>,
    ) -> PyResult<Vec<Bound<'py, PyTuple>>> {
        let scheme = scheme_or(&self.inner, scheme)?;
        self.inner
            .neighbors(&to_config(config)?, scheme)
            .map_err(err)?
            .iter()
            .map(|c| from_config(py, c))
            .collect()
    }

    fn to_spec(&self) -> String {
        self.inner.to_spec_string()
    }

    fn __repr__(&self) -> String {
        format!(
            "SearchSpace(kernel={:?}, params={:?})",
            self.inner.kernel_name(),
            self.inner.param_names()
        )
    }
}

/// Measurements of one kernel on one device.
#[pyclass(module = "tunescape")]
struct TuningCache {
    inner: store::TuningCache,
}

#[pymethods]
impl TuningCache {
    #[staticmethod]
    fn read(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: store::read_cache(path).map_err(err)?,
        })
    }

    fn write(&self, path: &str) -> PyResult<()> {
        store::write_cache(&self.inner, path).map_err(err)
    }

    /// Import a cache written by another tuner.
    #[staticmethod]
    #[pyo3(signature = (path, space=None, metric_field=None, device=None))]
    fn import_external(
        path: &str,
        space: Option<&SearchSpace>,
        metric_field: Option<String>,
        device: Option<String>,
    ) -> PyResult<Self> {
        let opts = ImportOptions {
            expected_space: space.map(|s| &s.inner),
            metric_field,
            device_name: device,
            ..Default::default()
        };
        Ok(Self {
            inner: store::import_external_cache(path, &opts).map_err(err)?,
        })
    }

    fn export_external(&self) -> PyResult<String> {
        store::export_external(&self.inner, &Default::default()).map_err(err)
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(err)
    }

    #[getter]
    fn kernel_name(&self) -> String {
        self.inner.kernel_name.clone()
    }

    #[getter]
    fn device_name(&self) -> String {
        self.inner.device_name.clone()
    }

    #[getter]
    fn param_order(&self) -> Vec<String> {
        self.inner.param_order.clone()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn get<'py>(
        &self,
        py: Python<'py>,
        config: &Bound<'py, PyAny>,
    ) -> PyResult<Option<Bound<'py, PyDict>>> {
        self.inner
            .get(&to_config(config)?)
            .map(|o| observation_dict(py, o))
            .transpose()
    }

    /// All records as dictionaries, in key order.
    fn records<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        self.inner
            .records()
            .map(|o| observation_dict(py, o))
            .collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "TuningCache(kernel={:?}, device={:?}, records={})",
            self.inner.kernel_name,
            self.inner.device_name,
            self.inner.len()
        )
    }
}

/// Median, maximum and impact of a cache.
#[pyfunction]
fn perf_stats<'py>(py: Python<'py>, cache: &TuningCache) -> PyResult<Bound<'py, PyDict>> {
    let s = landscape::perf_stats(&cache.inner).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("n_ok", s.n_ok)?;
    d.set_item("n_failed", s.n_failed)?;
    d.set_item("median_perf", s.median_perf)?;
    d.set_item("max_perf", s.max_perf)?;
    d.set_item("min_time_ms", s.min_time_ms)?;
    d.set_item("impact", s.impact)?;
    Ok(d)
}

#[pyfunction]
#[pyo3(signature = (cache, k=5))]
fn top_k<'py>(
    py: Python<'py>,
    cache: &TuningCache,
    k: usize,
) -> PyResult<Vec<(Bound<'py, PyTuple>, f64)>> {
    landscape::top_k(&cache.inner, k)
        .iter()
        .map(|(c, m)| Ok((from_config(py, c)?, *m)))
        .collect()
}

/// Local minima of the fitness flow graph.
#[pyfunction]
#[pyo3(signature = (cache, space, scheme=None))]
fn local_minima<'py>(
    py: Python<'py>,
    cache: &TuningCache,
    space: &SearchSpace,
    scheme: Option<&str>,
) -> PyResult<Vec<Bound<'py, PyTuple>>> {
    let scheme = scheme_or(&space.inner, scheme)?;
    let g = landscape::build_ffg(&cache.inner, &space.inner, scheme).map_err(err)?;
    landscape::find_local_minima(&g)
        .iter()
        .map(|c| from_config(py, c))
        .collect()
}

/// `(p, C_p)` pairs on the default grid up to `p_max`.
#[pyfunction]
#[pyo3(signature = (cache, space, p_max=0.15, damping=0.85, scheme=None))]
fn centrality(
    cache: &TuningCache,
    space: &SearchSpace,
    p_max: f64,
    damping: f64,
    scheme: Option<&str>,
) -> PyResult<Vec<(f64, f64)>> {
    let scheme = scheme_or(&space.inner, scheme)?;
    let g = landscape::build_ffg(&cache.inner, &space.inner, scheme).map_err(err)?;
    let opts = PageRankOptions {
        damping,
        ..Default::default()
    };
    let curve =
        landscape::centrality_curve(&g, &opts, &landscape::default_p_grid(p_max)).map_err(err)?;
    Ok(curve.p_grid.into_iter().zip(curve.c_p_values).collect())
}

/// Performance portability over devices; the best configuration unless
/// `config` is given.
#[pyfunction]
#[pyo3(signature = (caches, subset=None, config=None))]
fn portability<'py>(
    py: Python<'py>,
    caches: &Bound<'py, PyDict>,
    subset: Option<Vec<String>>,
    config: Option<&Bound<'py, PyAny>>,
) -> PyResult<Bound<'py, PyDict>> {
    let mut map = DeviceCaches::new();
    for (k, v) in caches.iter() {
        let cache: PyRef<'_, TuningCache> = v.extract()?;
        map.insert(k.extract()?, cache.inner.clone());
    }
    let names: Vec<String> = subset.unwrap_or_else(|| map.keys().cloned().collect());
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let report = match config {
        Some(c) => landscape::perf_portability(&map, &refs, &to_config(c)?),
        None => landscape::best_portable_config(&map, &refs),
    }
    .map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("devices", report.devices.clone())?;
    d.set_item("config", from_config(py, &report.config)?)?;
    d.set_item("efficiencies", report.efficiencies.clone())?;
    d.set_item("pp", report.pp)?;
    Ok(d)
}

/// Tune `space` by replaying `cache`; returns the new cache and the best
/// observation (or `None`).
#[pyfunction]
#[pyo3(signature = (space, cache, strategy="brute", budget=0, seed=0, scheme=None, first_improvement=false))]
#[allow(clippy::too_many_arguments)]
fn tune<'py>(
    py: Python<'py>,
    space: &SearchSpace,
    cache: &TuningCache,
    strategy: &str,
    budget: usize,
    seed: u64,
    scheme: Option<&str>,
    first_improvement: bool,
) -> PyResult<(TuningCache, Option<Bound<'py, PyDict>>)> {
    let mut backend = SimulatedBackend::new(cache.inner.clone());
    let protocol = MeasurementProtocol::default();
    let budget = Budget::new(budget);
    let (result, out) = match strategy {
        "brute" => strategies::brute_force(&space.inner, &mut backend, &protocol, budget),
        "random" => strategies::random_search(&space.inner, &mut backend, &protocol, budget, seed),
        "local" => strategies::greedy_local_search(
            &space.inner,
            &mut backend,
            &protocol,
            budget,
            seed,
            scheme_or(&space.inner, scheme)?,
            &LocalSearchOptions {
                first_improvement,
                start: None,
            },
        ),
        other => return Err(PyValueError::new_err(format!("unknown strategy `{other}`"))),
    }
    .map_err(err)?;
    let best = result
        .best_observation
        .as_ref()
        .map(|o| observation_dict(py, o))
        .transpose()?;
    Ok((TuningCache { inner: out }, best))
}

/// Harmonic mean of efficiencies, zero if any is zero.
#[pyfunction]
fn harmonic_portability(efficiencies: Vec<f64>) -> f64 {
    landscape::harmonic_portability(&efficiencies)
}

#[pymodule]
fn tunescape(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("TunescapeError", m.py().get_type::<TunescapeError>())?;
    m.add_class::<SearchSpace>()?;
    m.add_class::<TuningCache>()?;
    m.add_function(wrap_pyfunction!(perf_stats, m)?)?;
    m.add_function(wrap_pyfunction!(top_k, m)?)?;
    m.add_function(wrap_pyfunction!(local_minima, m)?)?;
    m.add_function(wrap_pyfunction!(centrality, m)?)?;
    m.add_function(wrap_pyfunction!(portability, m)?)?;
    m.add_function(wrap_pyfunction!(harmonic_portability, m)?)?;
    m.add_function(wrap_pyfunction!(tune, m)?)?;
    Ok(())
}
