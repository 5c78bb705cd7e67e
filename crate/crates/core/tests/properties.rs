mod common;

use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{dense_pagerank, oracle_cp, oracle_minima, oracle_pp, random_cache, RandomSpace};
use tunescape_core::landscape::{
    self, build_ffg, find_local_minima, pagerank, proportion_of_centrality, DeviceCaches,
    PageRankOptions,
};
use tunescape_core::measure::{MeasurementProtocol, SimulatedBackend};
use tunescape_core::paramspace::NeighborScheme;
use tunescape_core::store::{self, TuningCache};
use tunescape_core::strategies::{self, Budget, LocalSearchOptions};

fn scheme_of(flag: bool) -> NeighborScheme {
    if flag {
        NeighborScheme::Adjacent
    } else {
        NeighborScheme::Hamming1
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn enumeration_matches_exhaustive_testing(seed in any::<u64>(), params in 1usize..5) {
        let rs = RandomSpace::from_seed(seed, params, 6, NeighborScheme::Hamming1);
        let got = rs.space.valid_indices().unwrap();
        prop_assert_eq!(got, rs.oracle_valid());
    }

    #[test]
    fn enumeration_is_lexicographic_and_unique(seed in any::<u64>(), params in 1usize..5) {
        let rs = RandomSpace::from_seed(seed, params, 6, NeighborScheme::Hamming1);
        let got = rs.space.valid_indices().unwrap();
        for w in got.windows(2) {
            prop_assert!(rs.space.linear_index(&w[0]) < rs.space.linear_index(&w[1]));
        }
        prop_assert_eq!(rs.space.cartesian_size(), rs.cartesian() as u128);
    }

    #[test]
    fn neighbours_are_symmetric_and_match_definition(seed in any::<u64>(), adjacent in any::<bool>()) {
        let scheme = scheme_of(adjacent);
        let rs = RandomSpace::from_seed(seed, 3, 5, scheme);
        let valid = rs.oracle_valid();
        for idx in &valid {
            let mut got = rs.space.neighbor_indices(idx, scheme).unwrap();
            got.sort();
            let mut want = rs.oracle_neighbors(idx, scheme);
            want.sort();
            prop_assert_eq!(&got, &want);
            for n in &got {
                prop_assert!(rs.space.neighbor_indices(n, scheme).unwrap().contains(idx));
            }
        }
    }

    #[test]
    fn ffg_sinks_are_the_local_minima(seed in any::<u64>(), adjacent in any::<bool>()) {
        let scheme = scheme_of(adjacent);
        let rs = RandomSpace::from_seed(seed, 3, 6, scheme);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let cache = random_cache(&rs, &mut rng, 0.1);
        let g = build_ffg(&cache, &rs.space, scheme).unwrap();
        prop_assert!(g.topological_order().is_some());
        prop_assert_eq!(find_local_minima(&g), oracle_minima(&rs, &cache, scheme));
        if !g.is_empty() {
            let scores = pagerank(&g, &PageRankOptions::default()).unwrap();
            prop_assert!((scores.iter().sum::<f64>() - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn centrality_matches_dense_oracle(seed in any::<u64>()) {
        let rs = RandomSpace::from_seed(seed, 3, 6, NeighborScheme::Hamming1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cache = random_cache(&rs, &mut rng, 0.0);
        let g = build_ffg(&cache, &rs.space, NeighborScheme::Hamming1).unwrap();
        prop_assume!(!g.is_empty());
        let opts = PageRankOptions { tol: 1e-13, ..Default::default() };
        let scores = pagerank(&g, &opts).unwrap();
        let edges: Vec<(usize, usize)> = (0..g.len())
            .flat_map(|u| g.successors(u).iter().map(move |&v| (u, v)))
            .collect();
        let dense = dense_pagerank(g.len(), &edges, 0.85);
        let sinks = g.sinks();
        for p in [0.0, 0.05, 0.10, 0.15] {
            let got = proportion_of_centrality(&g, &scores, p);
            let want = oracle_cp(g.times(), &sinks, &dense, p);
            prop_assert!((got - want).abs() < 1e-9, "p={} got={} want={}", p, got, want);
        }
    }

    #[test]
    fn centrality_curve_is_monotone(seed in any::<u64>()) {
        let rs = RandomSpace::from_seed(seed, 3, 6, NeighborScheme::Adjacent);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cache = random_cache(&rs, &mut rng, 0.05);
        let g = build_ffg(&cache, &rs.space, NeighborScheme::Adjacent).unwrap();
        prop_assume!(!g.is_empty());
        let mut grid = landscape::default_p_grid(0.15);
        grid.extend([0.5, 1.0, 10.0, 100.0]);
        let curve = landscape::centrality_curve(&g, &PageRankOptions::default(), &grid).unwrap();
        for w in curve.c_p_values.windows(2) {
            prop_assert!(w[0] <= w[1] + 1e-15);
        }
        prop_assert!((curve.c_p_values.last().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn portability_bounds(e in prop::collection::vec(0.0f64..=1.0, 1..8)) {
        let pp = landscape::harmonic_portability(&e);
        if e.contains(&0.0) {
            prop_assert_eq!(pp, 0.0);
        } else {
            let min = e.iter().copied().fold(f64::INFINITY, f64::min);
            let max = e.iter().copied().fold(0.0, f64::max);
            let mean = e.iter().sum::<f64>() / e.len() as f64;
            let tol = 1e-12;
            prop_assert!(min - tol <= pp && pp <= max + tol);
            prop_assert!(pp <= mean + tol);
            prop_assert!((pp - oracle_pp(&e)).abs() <= tol);
        }
    }

    #[test]
    fn adding_a_device_is_bounded_by_a_perfect_device(seed in any::<u64>()) {
        // Growing H can raise the harmonic mean, so the bound is the score
        // obtained if the new device ran the configuration at full efficiency.
        let rs = RandomSpace::from_seed(seed, 2, 5, NeighborScheme::Hamming1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut caches = DeviceCaches::new();
        for d in ["a", "b", "c"] {
            let mut c = random_cache(&rs, &mut rng, 0.2);
            c.device_name = d.into();
            caches.insert(d.into(), c);
        }
        for obs in caches["a"].records() {
            let pp2 = landscape::perf_portability(&caches, &["a", "b"], &obs.config).unwrap().pp;
            let pp3 = landscape::perf_portability(&caches, &["a", "b", "c"], &obs.config).unwrap().pp;
            if pp2 == 0.0 {
                prop_assert_eq!(pp3, 0.0);
            } else {
                prop_assert!(pp3 <= 3.0 / (2.0 / pp2 + 1.0) + 1e-12);
            }
        }
    }

    #[test]
    fn harmonic_mean_can_rise_when_a_device_is_added(lo in 0.01f64..0.9) {
        let two = landscape::harmonic_portability(&[lo, lo]);
        let three = landscape::harmonic_portability(&[lo, lo, 1.0]);
        prop_assert!(three > two);
    }

    #[test]
    fn scaling_metrics_changes_no_conclusion(seed in any::<u64>(), k in prop::sample::select(vec![0.5, 3.0, 1000.0])) {
        let rs = RandomSpace::from_seed(seed, 3, 5, NeighborScheme::Hamming1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_cache(&rs, &mut rng, 0.1);
        let b = random_cache(&rs, &mut rng, 0.1);
        prop_assume!(a.ok_records().count() > 0 && b.ok_records().count() > 0);
        let scale = |c: &TuningCache| { let mut c = c.clone(); c.map_metric(|m| m * k); c };
        let rel = |x: f64, y: f64| (x - y).abs() <= 1e-12 * x.abs().max(y.abs());

        let (sa, ssa) = (landscape::perf_stats(&a).unwrap(), landscape::perf_stats(&scale(&a)).unwrap());
        prop_assert!(rel(sa.impact, ssa.impact));
        prop_assert_eq!(landscape::top_k(&a, 1)[0].0.clone(), landscape::top_k(&scale(&a), 1)[0].0.clone());

        let mut plain = DeviceCaches::new();
        plain.insert("a".into(), a.clone());
        plain.insert("b".into(), b.clone());
        let mut scaled = DeviceCaches::new();
        scaled.insert("a".into(), scale(&a));
        scaled.insert("b".into(), scale(&b));
        let h = ["a", "b"];
        match (landscape::best_portable_config(&plain, &h), landscape::best_portable_config(&scaled, &h)) {
            (Ok(x), Ok(y)) => {
                prop_assert_eq!(x.config, y.config);
                prop_assert!(rel(x.pp, y.pp));
            }
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false, "portability outcome changed under scaling"),
        }

        let g = build_ffg(&a, &rs.space, NeighborScheme::Hamming1).unwrap();
        let gs = build_ffg(&scale(&a), &rs.space, NeighborScheme::Hamming1).unwrap();
        let (s1, s2) = (pagerank(&g, &Default::default()).unwrap(), pagerank(&gs, &Default::default()).unwrap());
        prop_assert!(rel(proportion_of_centrality(&g, &s1, 0.05), proportion_of_centrality(&gs, &s2, 0.05)));
    }

    #[test]
    fn native_round_trip_is_bit_identical(seed in any::<u64>()) {
        let rs = RandomSpace::from_seed(seed, 3, 5, NeighborScheme::Hamming1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cache = random_cache(&rs, &mut rng, 0.3);
        cache.map_metric(|m| m * std::f64::consts::PI);
        cache.metadata.insert("note".into(), format!("seed {seed}"));
        let text = cache.to_json().unwrap();
        let back = TuningCache::from_json(&text).unwrap();
        prop_assert_eq!(&back, &cache);
        prop_assert_eq!(back.to_json().unwrap(), text);
    }

    #[test]
    fn replay_reproduces_the_cache(seed in any::<u64>()) {
        let rs = RandomSpace::from_seed(seed, 3, 5, NeighborScheme::Hamming1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cache = random_cache(&rs, &mut rng, 0.3);
        let (_, replayed) = strategies::brute_force(
            &rs.space,
            &mut SimulatedBackend::new(cache.clone()),
            &MeasurementProtocol::default(),
            Budget::unlimited(),
        ).unwrap();
        prop_assert_eq!(replayed, cache);
    }

    #[test]
    fn local_search_walks_descend_to_sinks(seed in any::<u64>(), adjacent in any::<bool>(), first in any::<bool>()) {
        let scheme = scheme_of(adjacent);
        let rs = RandomSpace::from_seed(seed, 3, 6, scheme);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cache = random_cache(&rs, &mut rng, 0.1);
        let n = cache.len();
        prop_assume!(n > 0);
        let (res, _) = strategies::greedy_local_search(
            &rs.space,
            &mut SimulatedBackend::new(cache.clone()),
            &MeasurementProtocol::default(),
            Budget::new(n.div_ceil(2).max(1)),
            seed,
            scheme,
            &LocalSearchOptions { first_improvement: first, start: None },
        ).unwrap();
        prop_assert_eq!(res.trace.len(), res.evaluations_used);
        let best = res.trace.iter().filter_map(|o| o.time()).fold(f64::INFINITY, f64::min);
        if let Some(b) = &res.best_observation {
            prop_assert_eq!(b.time(), Some(best));
        }
        let g = build_ffg(&cache, &rs.space, scheme).unwrap();
        let sinks = find_local_minima(&g);
        for w in &res.walks {
            for t in w.times.windows(2) {
                prop_assert!(t[1] < t[0]);
            }
            if w.reached_minimum {
                prop_assert!(sinks.contains(w.path.last().unwrap()));
            }
        }
    }

    #[test]
    fn import_export_import_is_a_fixed_point(seed in any::<u64>()) {
        let rs = RandomSpace::from_seed(seed, 3, 5, NeighborScheme::Hamming1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cache = random_cache(&rs, &mut rng, 0.3);
        let opts = store::ImportOptions { expected_space: Some(&rs.space), ..Default::default() };
        let ext = store::export_external(&cache, &opts.markers).unwrap();
        let a = store::import_external_str(&ext, &opts).unwrap();
        let again = store::export_external(&a, &opts.markers).unwrap();
        let b = store::import_external_str(&again, &opts).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(ext, again);
    }
}

#[test]
fn strategy_results_are_deterministic() {
    let rs = RandomSpace::from_seed(11, 3, 6, NeighborScheme::Hamming1);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cache = random_cache(&rs, &mut rng, 0.1);
    let run = |seed| {
        let (r, c) = strategies::greedy_local_search(
            &rs.space,
            &mut SimulatedBackend::new(cache.clone()),
            &MeasurementProtocol::default(),
            Budget::new(20),
            seed,
            NeighborScheme::Hamming1,
            &LocalSearchOptions::default(),
        )
        .unwrap();
        (r, c.to_json().unwrap())
    };
    assert_eq!(run(3), run(3));
    let order = |seed| -> BTreeMap<usize, String> {
        run(seed)
            .0
            .trace
            .iter()
            .enumerate()
            .map(|(i, o)| (i, o.config.key()))
            .collect()
    };
    assert_eq!(order(5), order(5));
}
