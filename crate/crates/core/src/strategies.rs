//! Search strategies: exhaustive, random sampling, and greedy local search
//! with random restarts.
//!
//! Fitness is the aggregated time (lower is better). Every strategy memoizes
//! its measurements: asking for a configuration twice costs one evaluation.

use std::collections::HashMap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::measure::{measure, Backend, MeasureError, MeasurementProtocol, Observation};
use crate::paramspace::{Configuration, ConstraintEvalError, NeighborScheme, SearchSpace};
use crate::store::{StoreError, TuningCache};

#[derive(Debug, Error)]
pub enum StrategyError {
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Constraint(#[from] ConstraintEvalError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("budget must allow at least one evaluation")]
    ZeroBudget,
    #[error("the space has no valid configuration")]
    EmptySpace,
    #[error("start configuration ({0}) is not a valid point of the space")]
    BadStart(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Budget {
    /// Zero means unlimited, which only exhaustive search accepts.
    pub max_evaluations: usize,
}

impl Budget {
    pub fn new(max_evaluations: usize) -> Self {
        Self { max_evaluations }
    }

    pub fn unlimited() -> Self {
        Self { max_evaluations: 0 }
    }
}

/// One descent of local search, from its start to where it stopped.
#[derive(Debug, Clone, PartialEq)]
pub struct Walk {
    /// Positions visited, each strictly faster than the previous.
    pub path: Vec<Configuration>,
    pub times: Vec<f64>,
    /// The walk ended at a local minimum rather than running out of budget.
    pub reached_minimum: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyResult {
    /// Fastest ok observation; `None` when nothing succeeded.
    pub best_observation: Option<Observation>,
    /// Every evaluation in the order it was made.
    pub trace: Vec<Observation>,
    pub evaluations_used: usize,
    /// Local-search descents; empty for the other strategies.
    pub walks: Vec<Walk>,
    pub note: Option<String>,
}

impl StrategyResult {
    pub fn best(&self) -> Option<&Configuration> {
        self.best_observation.as_ref().map(|o| &o.config)
    }

    /// Explicit outcome for a search that found nothing feasible.
    pub fn has_feasible_optimum(&self) -> bool {
        self.best_observation.is_some()
    }
}

/// Memoizing evaluator shared by the strategies.
struct Evaluator<'a> {
    backend: &'a mut dyn Backend,
    protocol: &'a MeasurementProtocol,
    space: &'a SearchSpace,
    seen: HashMap<u128, usize>,
    trace: Vec<Observation>,
    limit: usize,
}

impl<'a> Evaluator<'a> {
    fn new(
        space: &'a SearchSpace,
        backend: &'a mut dyn Backend,
        protocol: &'a MeasurementProtocol,
        limit: usize,
    ) -> Self {
        Self {
            backend,
            protocol,
            space,
            seen: HashMap::new(),
            trace: Vec::new(),
            limit,
        }
    }

    fn exhausted(&self) -> bool {
        self.limit != 0 && self.trace.len() >= self.limit
    }

    fn is_seen(&self, idx: &[usize]) -> bool {
        self.seen.contains_key(&self.space.linear_index(idx))
    }

    /// Observation for `idx`, measuring it if new. `None` once the budget is spent.
    fn eval(&mut self, idx: &[usize]) -> Result<Option<&Observation>, StrategyError> {
        let key = self.space.linear_index(idx);
        if let Some(&i) = self.seen.get(&key) {
            return Ok(Some(&self.trace[i]));
        }
        if self.exhausted() {
            return Ok(None);
        }
        let config = self.space.config_from_indices(idx);
        let obs = measure(self.backend, &config, self.protocol)?;
        self.seen.insert(key, self.trace.len());
        self.trace.push(obs);
        Ok(self.trace.last())
    }

    fn finish(
        self,
        walks: Vec<Walk>,
        note: Option<String>,
    ) -> Result<(StrategyResult, TuningCache), StrategyError> {
        let mut cache = TuningCache::for_space(self.space, self.backend.device_name());
        for obs in &self.trace {
            cache.insert(obs.clone())?;
        }
        let mut best: Option<&Observation> = None;
        for obs in &self.trace {
            if let Some(t) = obs.time() {
                if best.and_then(Observation::time).is_none_or(|b| t < b) {
                    best = Some(obs);
                }
            }
        }
        let result = StrategyResult {
            best_observation: best.cloned(),
            evaluations_used: self.trace.len(),
            trace: self.trace,
            walks,
            note,
        };
        Ok((result, cache))
    }
}

/// Measure every valid configuration once, in enumeration order.
pub fn brute_force(
    space: &SearchSpace,
    backend: &mut dyn Backend,
    protocol: &MeasurementProtocol,
    budget: Budget,
) -> Result<(StrategyResult, TuningCache), StrategyError> {
    let mut ev = Evaluator::new(space, backend, protocol, budget.max_evaluations);
    let mut truncated = false;
    for idx in space.enumerate_indices() {
        let idx = idx?;
        if ev.eval(&idx)?.is_none() {
            truncated = true;
            break;
        }
    }
    let note = truncated.then(|| {
        format!(
            "stopped after {} evaluations; the cache does not cover the space",
            budget.max_evaluations
        )
    });
    ev.finish(Vec::new(), note)
}

fn clamp_budget(budget: Budget, size: usize) -> Result<(usize, Option<String>), StrategyError> {
    if budget.max_evaluations == 0 {
        return Err(StrategyError::ZeroBudget);
    }
    if size == 0 {
        return Err(StrategyError::EmptySpace);
    }
    if budget.max_evaluations > size {
        Ok((
            size,
            Some(format!(
                "budget {} clamped to the space size {size}",
                budget.max_evaluations
            )),
        ))
    } else {
        Ok((budget.max_evaluations, None))
    }
}

/// Measure `budget` distinct valid configurations drawn uniformly without
/// replacement.
pub fn random_search(
    space: &SearchSpace,
    backend: &mut dyn Backend,
    protocol: &MeasurementProtocol,
    budget: Budget,
    seed: u64,
) -> Result<(StrategyResult, TuningCache), StrategyError> {
    let valid = space.valid_indices()?;
    let (n, note) = clamp_budget(budget, valid.len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = sample(&mut rng, valid.len(), n);
    let mut ev = Evaluator::new(space, backend, protocol, n);
    for i in picks.iter() {
        ev.eval(&valid[i])?;
    }
    ev.finish(Vec::new(), note)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LocalSearchOptions {
    /// Move to the first strictly better neighbour found instead of the best.
    pub first_improvement: bool,
    /// Start of the first walk; later walks start at random.
    pub start: Option<Configuration>,
}

/// Greedy descent over the neighbourhood graph with random restarts.
///
/// Each walk moves to the fastest strictly faster neighbour (ties to the
/// neighbour first in enumeration order) until none exists, then restarts
/// from a random configuration not yet measured. Failed neighbours are
/// never moved to. Stops when the budget is spent or every configuration
/// has been measured.
pub fn greedy_local_search(
    space: &SearchSpace,
    backend: &mut dyn Backend,
    protocol: &MeasurementProtocol,
    budget: Budget,
    seed: u64,
    scheme: NeighborScheme,
    options: &LocalSearchOptions,
) -> Result<(StrategyResult, TuningCache), StrategyError> {
    let valid = space.valid_indices()?;
    let (limit, note) = clamp_budget(budget, valid.len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let restart_order = sample(&mut rng, valid.len(), valid.len()).into_vec();
    let mut restarts = restart_order.into_iter();

    let mut start = match &options.start {
        Some(c) => {
            let idx = space
                .resolve_indices(c)
                .ok_or_else(|| StrategyError::BadStart(c.key()))?;
            if !space.is_valid_indices(&idx)? {
                return Err(StrategyError::BadStart(c.key()));
            }
            Some(idx)
        }
        None => None,
    };

    let mut ev = Evaluator::new(space, backend, protocol, limit);
    let mut walks = Vec::new();
    'walks: loop {
        let current = match start.take() {
            Some(idx) => idx,
            None => match restarts.by_ref().find(|&i| !ev.is_seen(&valid[i])) {
                Some(i) => valid[i].clone(),
                None => break,
            },
        };
        let Some(obs) = ev.eval(&current)? else {
            break;
        };
        let Some(mut time) = obs.time() else {
            continue;
        };
        let mut current = current;
        let mut walk = Walk {
            path: vec![space.config_from_indices(&current)],
            times: vec![time],
            reached_minimum: false,
        };
        loop {
            let mut neighbours = space.neighbor_indices(&current, scheme)?;
            neighbours.sort_by_key(|idx| space.linear_index(idx));
            let mut chosen: Option<(Vec<usize>, f64)> = None;
            for nb in neighbours {
                let Some(obs) = ev.eval(&nb)? else {
                    walks.push(walk);
                    break 'walks;
                };
                let Some(t) = obs.time() else { continue };
                if t < time && chosen.as_ref().is_none_or(|(_, c)| t < *c) {
                    chosen = Some((nb, t));
                    if options.first_improvement {
                        break;
                    }
                }
            }
            match chosen {
                Some((nb, t)) => {
                    walk.path.push(space.config_from_indices(&nb));
                    walk.times.push(t);
                    current = nb;
                    time = t;
                }
                None => {
                    walk.reached_minimum = true;
                    walks.push(walk);
                    break;
                }
            }
        }
        if ev.exhausted() {
            break;
        }
    }
    ev.finish(walks, note)
}
