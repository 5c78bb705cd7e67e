//! Fitness flow graphs and PageRank-based search difficulty.

use std::collections::HashMap;
use std::fmt::Write as _;

use super::LandscapeError;
use crate::paramspace::{Configuration, NeighborScheme, SearchSpace};
use crate::store::TuningCache;

/// Directed graph over the ok configurations of a complete cache with an
/// edge `u -> v` whenever `v` neighbours `u` and is strictly faster.
#[derive(Debug, Clone, PartialEq)]
pub struct FitnessFlowGraph {
    nodes: Vec<Configuration>,
    times: Vec<f64>,
    successors: Vec<Vec<usize>>,
    scheme: NeighborScheme,
    f_opt: f64,
    /// Valid configurations left out because their measurement failed.
    pub omitted_failed: usize,
}

impl FitnessFlowGraph {
    /// Graph from explicit parts. Every edge must point to a strictly faster node.
    pub fn from_parts(
        nodes: Vec<Configuration>,
        times: Vec<f64>,
        successors: Vec<Vec<usize>>,
        scheme: NeighborScheme,
    ) -> Result<Self, LandscapeError> {
        let n = nodes.len();
        if times.len() != n || successors.len() != n {
            return Err(LandscapeError::Invalid(
                "node, time and edge lists differ in length".into(),
            ));
        }
        if let Some(t) = times.iter().find(|t| !t.is_finite() || **t <= 0.0) {
            return Err(LandscapeError::Invalid(format!("non-positive time {t}")));
        }
        for (u, succ) in successors.iter().enumerate() {
            for &v in succ {
                if v >= n || times[v] >= times[u] {
                    return Err(LandscapeError::Invalid(format!(
                        "edge {u} -> {v} does not lead to a strictly faster node"
                    )));
                }
            }
        }
        let f_opt = times.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(Self {
            nodes,
            times,
            successors,
            scheme,
            f_opt,
            omitted_failed: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Configuration] {
        &self.nodes
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn successors(&self, node: usize) -> &[usize] {
        &self.successors[node]
    }

    pub fn adjacency(&self) -> &[Vec<usize>] {
        &self.successors
    }

    pub fn edge_count(&self) -> usize {
        self.successors.iter().map(Vec::len).sum()
    }

    pub fn scheme(&self) -> NeighborScheme {
        self.scheme
    }

    /// Fastest time in the graph (infinite when empty).
    pub fn f_opt(&self) -> f64 {
        self.f_opt
    }

    pub fn node_index(&self, config: &Configuration) -> Option<usize> {
        self.nodes.iter().position(|c| c == config)
    }

    /// Node ids with out-degree zero, ascending.
    pub fn sinks(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.successors[i].is_empty())
            .collect()
    }

    /// A topological order, or `None` if the graph has a cycle.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let n = self.len();
        let mut indeg = vec![0usize; n];
        for succ in &self.successors {
            for &v in succ {
                indeg[v] += 1;
            }
        }
        let mut queue: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(u) = queue.pop() {
            order.push(u);
            for &v in &self.successors[u] {
                indeg[v] -= 1;
                if indeg[v] == 0 {
                    queue.push(v);
                }
            }
        }
        (order.len() == n).then_some(order)
    }
}

/// Build the fitness flow graph of a complete cache over `space`.
///
/// Nodes are in enumeration order. Failed configurations are left out.
pub fn build_ffg(
    cache: &TuningCache,
    space: &SearchSpace,
    scheme: NeighborScheme,
) -> Result<FitnessFlowGraph, LandscapeError> {
    cache.check_space(space)?;
    let mut nodes = Vec::new();
    let mut node_indices = Vec::new();
    let mut times = Vec::new();
    let mut missing = 0usize;
    let mut failed = 0usize;
    let mut total = 0usize;
    for idx in space.enumerate_indices() {
        let idx = idx?;
        total += 1;
        let config = space.config_from_indices(&idx);
        match cache.get(&config) {
            None => missing += 1,
            Some(obs) => match obs.time() {
                Some(t) => {
                    nodes.push(config);
                    node_indices.push(idx);
                    times.push(t);
                }
                None => failed += 1,
            },
        }
    }
    if missing > 0 {
        return Err(LandscapeError::IncompleteCache { missing, total });
    }

    let lookup: HashMap<u128, usize> = node_indices
        .iter()
        .enumerate()
        .map(|(i, idx)| (space.linear_index(idx), i))
        .collect();
    let radices: Vec<usize> = space.params().iter().map(|p| p.values.len()).collect();
    let mut successors = vec![Vec::new(); nodes.len()];
    let mut candidate = Vec::new();
    for (u, idx) in node_indices.iter().enumerate() {
        candidate.clear();
        candidate.extend_from_slice(idx);
        let succ = &mut successors[u];
        for (pi, &n) in radices.iter().enumerate() {
            let current = idx[pi];
            let mut visit = |j: usize, candidate: &mut Vec<usize>| {
                candidate[pi] = j;
                if let Some(&v) = lookup.get(&space.linear_index(candidate)) {
                    if times[v] < times[u] {
                        succ.push(v);
                    }
                }
            };
            match scheme {
                NeighborScheme::Hamming1 => {
                    for j in (0..n).filter(|&j| j != current) {
                        visit(j, &mut candidate);
                    }
                }
                NeighborScheme::Adjacent => {
                    if current > 0 {
                        visit(current - 1, &mut candidate);
                    }
                    if current + 1 < n {
                        visit(current + 1, &mut candidate);
                    }
                }
            }
            candidate[pi] = current;
        }
        succ.sort_unstable();
    }
    let mut g = FitnessFlowGraph::from_parts(nodes, times, successors, scheme)?;
    g.omitted_failed = failed;
    Ok(g)
}

/// The local minima: nodes without a strictly faster neighbour.
pub fn find_local_minima(g: &FitnessFlowGraph) -> Vec<Configuration> {
    g.sinks().into_iter().map(|i| g.nodes[i].clone()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PageRankOptions {
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PageRankOptions {
    fn default() -> Self {
        Self {
            damping: 0.85,
            tol: 1e-8,
            max_iter: 10_000,
        }
    }
}

/// PageRank scores of the graph's nodes.
pub fn pagerank(g: &FitnessFlowGraph, opts: &PageRankOptions) -> Result<Vec<f64>, LandscapeError> {
    pagerank_adjacency(&g.successors, opts)
}

/// Power iteration over an adjacency list: uniform teleport with weight
/// `1 - damping`, and the mass of nodes without out-edges spread uniformly.
/// Stops once the L1 change between iterates drops below `tol`.
pub fn pagerank_adjacency(
    successors: &[Vec<usize>],
    opts: &PageRankOptions,
) -> Result<Vec<f64>, LandscapeError> {
    let n = successors.len();
    if n == 0 {
        return Err(LandscapeError::Invalid("PageRank of an empty graph".into()));
    }
    if !(0.0..=1.0).contains(&opts.damping) || opts.tol.is_nan() || opts.tol <= 0.0 {
        return Err(LandscapeError::Invalid(format!(
            "damping {} / tolerance {} out of range",
            opts.damping, opts.tol
        )));
    }
    let d = opts.damping;
    let nf = n as f64;
    let mut x = vec![1.0 / nf; n];
    let mut next = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for _ in 0..opts.max_iter {
        let dangling: f64 = successors
            .iter()
            .zip(&x)
            .filter(|(s, _)| s.is_empty())
            .map(|(_, v)| v)
            .sum();
        let base = (1.0 - d) / nf + d * dangling / nf;
        next.iter_mut().for_each(|v| *v = base);
        for (u, succ) in successors.iter().enumerate() {
            if succ.is_empty() {
                continue;
            }
            let share = d * x[u] / succ.len() as f64;
            for &v in succ {
                next[v] += share;
            }
        }
        residual = x.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut x, &mut next);
        if residual < opts.tol {
            return Ok(x);
        }
    }
    Err(LandscapeError::NotConverged {
        iterations: opts.max_iter,
        residual,
    })
}

/// Share of the local minima's centrality held by minima whose time is
/// within `(1 + p)` of the optimum.
pub fn proportion_of_centrality(g: &FitnessFlowGraph, scores: &[f64], p: f64) -> f64 {
    let threshold = (1.0 + p) * g.f_opt;
    let (mut within, mut all) = (0.0, 0.0);
    for i in g.sinks() {
        all += scores[i];
        if g.times[i] <= threshold {
            within += scores[i];
        }
    }
    if all > 0.0 {
        within / all
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CentralityCurve {
    pub p_grid: Vec<f64>,
    pub c_p_values: Vec<f64>,
    pub damping: f64,
    pub minima_count: usize,
}

impl CentralityCurve {
    /// CSV with header `p,c_p`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("p,c_p\n");
        for (p, c) in self.p_grid.iter().zip(&self.c_p_values) {
            let _ = writeln!(out, "{p},{c}");
        }
        out
    }
}

/// `0, 0.005, ..., p_max` (inclusive).
pub fn default_p_grid(p_max: f64) -> Vec<f64> {
    let steps = (p_max / 0.005 + 1e-9).floor().max(0.0) as usize;
    (0..=steps).map(|i| i as f64 * 0.005).collect()
}

pub fn centrality_curve(
    g: &FitnessFlowGraph,
    opts: &PageRankOptions,
    p_grid: &[f64],
) -> Result<CentralityCurve, LandscapeError> {
    let scores = pagerank(g, opts)?;
    Ok(CentralityCurve {
        p_grid: p_grid.to_vec(),
        c_p_values: p_grid
            .iter()
            .map(|&p| proportion_of_centrality(g, &scores, p))
            .collect(),
        damping: opts.damping,
        minima_count: g.sinks().len(),
    })
}

/// Graphviz rendering. Each node carries its key as label and a `bucket`
/// attribute: the decile of its time rank (0 holds the fastest tenth).
pub fn export_dot(g: &FitnessFlowGraph) -> String {
    let n = g.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| g.times[a].total_cmp(&g.times[b]).then(a.cmp(&b)));
    let mut bucket = vec![0usize; n];
    for (rank, &i) in order.iter().enumerate() {
        bucket[i] = rank * 10 / n;
    }
    let mut out = String::from("digraph ffg {\n");
    let _ = writeln!(
        out,
        "  graph [scheme=\"{}\", omitted_failed={}];",
        g.scheme, g.omitted_failed
    );
    for (i, c) in g.nodes.iter().enumerate() {
        let label = c.key().replace('\\', "\\\\").replace('"', "\\\"");
        let _ = writeln!(
            out,
            "  n{i} [label=\"{label}\", time_ms={}, bucket={}];",
            g.times[i], bucket[i]
        );
    }
    for (u, succ) in g.successors.iter().enumerate() {
        for v in succ {
            let _ = writeln!(out, "  n{u} -> n{v};");
        }
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::Observation;
    use crate::paramspace::{ParamValue, ParameterDef};

    pub(crate) fn chain(times: &[f64]) -> (SearchSpace, TuningCache) {
        let space = SearchSpace::new(
            "chain",
            vec![ParameterDef {
                name: "x".into(),
                values: (0..times.len() as i64).map(ParamValue::Int).collect(),
            }],
            &[],
            None,
            NeighborScheme::Adjacent,
        )
        .unwrap();
        let mut cache = TuningCache::for_space(&space, "dev");
        for (i, &t) in times.iter().enumerate() {
            let c = Configuration(vec![ParamValue::Int(i as i64)]);
            cache
                .insert(Observation::ok(c, vec![t], t, 1.0 / t))
                .unwrap();
        }
        (space, cache)
    }

    #[test]
    fn chain_edges_and_sinks() {
        let (space, cache) = chain(&[3.0, 2.0, 5.0, 1.0, 4.0]);
        let g = build_ffg(&cache, &space, NeighborScheme::Adjacent).unwrap();
        let edges: Vec<(usize, usize)> = (0..g.len())
            .flat_map(|u| g.successors(u).iter().map(move |&v| (u, v)))
            .collect();
        assert_eq!(edges, vec![(0, 1), (2, 1), (2, 3), (4, 3)]);
        assert_eq!(g.sinks(), vec![1, 3]);
        assert_eq!(export_dot(&g).matches("->").count(), 4);
    }

    #[test]
    fn hamming_single_parameter_has_one_sink() {
        let (space, cache) = chain(&[3.0, 2.0, 5.0, 1.0, 4.0]);
        let g = build_ffg(&cache, &space, NeighborScheme::Hamming1).unwrap();
        assert_eq!(g.sinks(), vec![3]);
    }

    #[test]
    fn ties_produce_no_edge() {
        let (space, cache) = chain(&[2.0, 2.0]);
        let g = build_ffg(&cache, &space, NeighborScheme::Adjacent).unwrap();
        assert_eq!(g.edge_count(), 0);
        assert_eq!(g.sinks(), vec![0, 1]);
    }

    #[test]
    fn monotone_chain_is_a_path() {
        let (space, cache) = chain(&[5.0, 4.0, 3.0, 2.0, 1.0]);
        let g = build_ffg(&cache, &space, NeighborScheme::Adjacent).unwrap();
        assert_eq!(g.edge_count(), 4);
        assert_eq!(find_local_minima(&g).len(), 1);
        let scores = pagerank(&g, &PageRankOptions::default()).unwrap();
        assert_eq!(proportion_of_centrality(&g, &scores, 0.0), 1.0);
    }

    #[test]
    fn incomplete_cache_is_rejected() {
        let (space, _) = chain(&[1.0, 2.0, 3.0]);
        let (_, mut small) = chain(&[1.0, 2.0]);
        small.space_fingerprint = Some(space.fingerprint());
        let err = build_ffg(&small, &space, NeighborScheme::Adjacent).unwrap_err();
        assert!(matches!(
            err,
            LandscapeError::IncompleteCache {
                missing: 1,
                total: 3
            }
        ));
    }

    #[test]
    fn two_node_pagerank_matches_closed_form() {
        // x_a = (1-d)/2 + d x_b / 2 with x_b = 1 - x_a  =>  x_a = 0.5 / (1 + d/2)
        let d: f64 = 0.85;
        let scores = pagerank_adjacency(&[vec![1], vec![]], &PageRankOptions::default()).unwrap();
        let closed_a = 0.5 / (1.0 + d / 2.0);
        assert!((scores[0] - closed_a).abs() < 1e-7);
        assert!((scores[0] - 0.3509).abs() < 1e-4);
        assert!((scores[1] - 0.6491).abs() < 1e-4);
    }

    #[test]
    fn edgeless_is_uniform() {
        let scores = pagerank_adjacency(&vec![vec![]; 7], &PageRankOptions::default()).unwrap();
        for s in scores {
            assert!((s - 1.0 / 7.0).abs() < 1e-12);
        }
    }

    #[test]
    fn non_convergence_reports_residual() {
        let opts = PageRankOptions {
            max_iter: 1,
            ..Default::default()
        };
        let err = pagerank_adjacency(&[vec![1], vec![]], &opts).unwrap_err();
        assert!(
            matches!(err, LandscapeError::NotConverged { iterations: 1, residual } if residual > 0.0)
        );
    }

    #[test]
    fn default_grid() {
        let g = default_p_grid(0.15);
        assert_eq!(g.len(), 31);
        assert_eq!(g[0], 0.0);
        assert!((g[30] - 0.15).abs() < 1e-12);
    }

    #[test]
    fn single_node_dot() {
        let (space, cache) = chain(&[1.0]);
        let g = build_ffg(&cache, &space, NeighborScheme::Adjacent).unwrap();
        let dot = export_dot(&g);
        assert_eq!(dot.matches("[label=").count(), 1);
        assert!(!dot.contains("->"));
        assert_eq!(find_local_minima(&g).len(), 1);
    }
}
