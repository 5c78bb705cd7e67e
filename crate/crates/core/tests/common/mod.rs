//! Random spaces and independent oracles shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tunescape_core::measure::{Observation, Status};
use tunescape_core::paramspace::{
    Configuration, NeighborScheme, ParamValue, ParameterDef, SearchSpace,
};
use tunescape_core::store::TuningCache;

/// A constraint with its expression text and a native predicate over the
/// parameter values.
#[derive(Debug, Clone)]
pub enum Gen {
    /// `a % b == 0`
    Div(usize, usize),
    /// `a * b <= cap`
    Cap(usize, usize, i64),
    /// `a <= b`
    Le(usize, usize),
    /// `a + b != v`
    Ne(usize, usize, i64),
}

impl Gen {
    pub fn expr(&self, names: &[String]) -> String {
        match *self {
            Gen::Div(a, b) => format!("{} % {} == 0", names[a], names[b]),
            Gen::Cap(a, b, c) => format!("{} * {} <= {c}", names[a], names[b]),
            Gen::Le(a, b) => format!("{} <= {}", names[a], names[b]),
            Gen::Ne(a, b, v) => format!("{} + {} != {v}", names[a], names[b]),
        }
    }

    pub fn holds(&self, v: &[i64]) -> bool {
        match *self {
            Gen::Div(a, b) => v[a] % v[b] == 0,
            Gen::Cap(a, b, c) => v[a] * v[b] <= c,
            Gen::Le(a, b) => v[a] <= v[b],
            Gen::Ne(a, b, x) => v[a] + v[b] != x,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RandomSpace {
    pub names: Vec<String>,
    pub values: Vec<Vec<i64>>,
    pub gens: Vec<Gen>,
    pub space: SearchSpace,
}

const POOL: [i64; 12] = [1, 2, 3, 4, 6, 8, 12, 16, 24, 32, 48, 64];

impl RandomSpace {
    /// `params` parameters with `1..=max_values` distinct positive values each.
    pub fn generate(
        rng: &mut ChaCha8Rng,
        params: usize,
        max_values: usize,
        max_constraints: usize,
        scheme: NeighborScheme,
    ) -> Self {
        let names: Vec<String> = (0..params).map(|i| format!("p{i}")).collect();
        let values: Vec<Vec<i64>> = (0..params)
            .map(|_| {
                let n = rng.random_range(1..=max_values.min(POOL.len()));
                let mut picked: Vec<i64> = rand::seq::index::sample(rng, POOL.len(), n)
                    .iter()
                    .map(|i| POOL[i])
                    .collect();
                // Value lists are not always sorted in real spaces.
                if rng.random_bool(0.7) {
                    picked.sort();
                }
                picked
            })
            .collect();
        let n_constraints = rng.random_range(0..=max_constraints);
        let gens: Vec<Gen> = (0..n_constraints)
            .map(|_| {
                let a = rng.random_range(0..params);
                let b = rng.random_range(0..params);
                match rng.random_range(0..4) {
                    0 => Gen::Div(a, b),
                    1 => Gen::Cap(a, b, POOL[rng.random_range(0..POOL.len())] * 8),
                    2 => Gen::Le(a, b),
                    _ => Gen::Ne(a, b, POOL[rng.random_range(0..POOL.len())]),
                }
            })
            .collect();
        let exprs: Vec<String> = gens.iter().map(|g| g.expr(&names)).collect();
        let refs: Vec<&str> = exprs.iter().map(String::as_str).collect();
        let space = SearchSpace::new(
            "random",
            names
                .iter()
                .zip(&values)
                .map(|(n, v)| ParameterDef {
                    name: n.clone(),
                    values: v.iter().map(|&x| ParamValue::Int(x)).collect(),
                })
                .collect(),
            &refs,
            None,
            scheme,
        )
        .expect("generated space is well formed");
        Self {
            names,
            values,
            gens,
            space,
        }
    }

    pub fn from_seed(seed: u64, params: usize, max_values: usize, scheme: NeighborScheme) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::generate(&mut rng, params, max_values, 3, scheme)
    }

    pub fn cartesian(&self) -> usize {
        self.values.iter().map(Vec::len).product()
    }

    fn values_at(&self, idx: &[usize]) -> Vec<i64> {
        idx.iter().zip(&self.values).map(|(&i, v)| v[i]).collect()
    }

    pub fn valid_native(&self, idx: &[usize]) -> bool {
        let v = self.values_at(idx);
        self.gens.iter().all(|g| g.holds(&v))
    }

    /// Every index tuple of the Cartesian product, last parameter fastest.
    pub fn all_indices(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new()];
        for v in &self.values {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    (0..v.len()).map(move |i| {
                        let mut p = prefix.clone();
                        p.push(i);
                        p
                    })
                })
                .collect();
        }
        out
    }

    /// Exhaustive constraint testing.
    pub fn oracle_valid(&self) -> Vec<Vec<usize>> {
        self.all_indices()
            .into_iter()
            .filter(|idx| self.valid_native(idx))
            .collect()
    }

    pub fn config(&self, idx: &[usize]) -> Configuration {
        Configuration(
            self.values_at(idx)
                .into_iter()
                .map(ParamValue::Int)
                .collect(),
        )
    }

    /// Neighbours by definition: differ in exactly one parameter (by one
    /// position in the value list for the adjacent scheme) and are valid.
    pub fn oracle_neighbors(&self, idx: &[usize], scheme: NeighborScheme) -> Vec<Vec<usize>> {
        neighbors_among(&self.oracle_valid(), idx, scheme)
    }
}

pub fn neighbors_among(
    valid: &[Vec<usize>],
    idx: &[usize],
    scheme: NeighborScheme,
) -> Vec<Vec<usize>> {
    valid
        .iter()
        .filter(|other| {
            let diffs: Vec<usize> = (0..idx.len()).filter(|&i| idx[i] != other[i]).collect();
            diffs.len() == 1
                && match scheme {
                    NeighborScheme::Hamming1 => true,
                    NeighborScheme::Adjacent => idx[diffs[0]].abs_diff(other[diffs[0]]) == 1,
                }
        })
        .cloned()
        .collect()
}

/// Cache with a random time per valid configuration, drawn from a small set
/// so ties occur; about `fail_rate` of the records are failures.
pub fn random_cache(rs: &RandomSpace, rng: &mut ChaCha8Rng, fail_rate: f64) -> TuningCache {
    let mut cache = TuningCache::for_space(&rs.space, "dev");
    for idx in rs.oracle_valid() {
        let config = rs.config(&idx);
        let obs = if rng.random_bool(fail_rate) {
            Observation::failed(config, Status::CompileFailed, None)
        } else {
            let t = f64::from(rng.random_range(1..=40u32)) * 0.25;
            Observation::ok(config, vec![t], t, 100.0 / t)
        };
        cache.insert(obs).unwrap();
    }
    cache
}

/// Local minima by checking every ok node against every neighbour.
pub fn oracle_minima(
    rs: &RandomSpace,
    cache: &TuningCache,
    scheme: NeighborScheme,
) -> Vec<Configuration> {
    let time = |idx: &[usize]| cache.get(&rs.config(idx)).and_then(|o| o.time());
    let valid = rs.oracle_valid();
    valid
        .iter()
        .filter_map(|idx| {
            let t = time(idx)?;
            let better = neighbors_among(&valid, idx, scheme)
                .iter()
                .any(|n| time(n).is_some_and(|tn| tn < t));
            (!better).then(|| rs.config(idx))
        })
        .collect()
}

/// Dense power iteration: `x <- d M x + (1 - d)/n`, with `M` column
/// stochastic and sink columns uniform. Runs to machine precision.
pub fn dense_pagerank(n: usize, edges: &[(usize, usize)], damping: f64) -> Vec<f64> {
    let mut m = vec![vec![0.0f64; n]; n];
    let mut out_deg = vec![0usize; n];
    for &(u, _) in edges {
        out_deg[u] += 1;
    }
    for &(u, v) in edges {
        m[v][u] += 1.0 / out_deg[u] as f64;
    }
    for u in 0..n {
        if out_deg[u] == 0 {
            for row in m.iter_mut() {
                row[u] = 1.0 / n as f64;
            }
        }
    }
    let mut x = vec![1.0 / n as f64; n];
    for _ in 0..100_000 {
        let next: Vec<f64> = (0..n)
            .map(|i| {
                (1.0 - damping) / n as f64 + damping * (0..n).map(|j| m[i][j] * x[j]).sum::<f64>()
            })
            .collect();
        let diff: f64 = next.iter().zip(&x).map(|(a, b)| (a - b).abs()).sum();
        x = next;
        if diff < 1e-15 {
            break;
        }
    }
    x
}

/// C_p from dense scores: minima within `(1+p) f_opt` over all minima.
pub fn oracle_cp(times: &[f64], minima: &[usize], scores: &[f64], p: f64) -> f64 {
    let f_opt = times.iter().copied().fold(f64::INFINITY, f64::min);
    let all: f64 = minima.iter().map(|&i| scores[i]).sum();
    let within: f64 = minima
        .iter()
        .filter(|&&i| times[i] <= (1.0 + p) * f_opt)
        .map(|&i| scores[i])
        .sum();
    within / all
}

/// Dense harmonic mean, written out independently of the library.
pub fn oracle_pp(e: &[f64]) -> f64 {
    if e.contains(&0.0) {
        0.0
    } else {
        let inv: f64 = e.iter().map(|x| 1.0 / x).sum();
        e.len() as f64 / inv
    }
}
