//! The binary is a thin adapter: its file outputs equal the library's.

mod common;

use std::path::{Path, PathBuf};
use std::process::Command;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{random_cache, RandomSpace};
use tunescape_core::landscape::{self, DeviceCaches, PageRankOptions};
use tunescape_core::measure::{MeasurementProtocol, SimulatedBackend};
use tunescape_core::paramspace::{NeighborScheme, SearchSpace};
use tunescape_core::store::{self, ImportOptions, TuningCache};
use tunescape_core::strategies::{self, Budget};

fn tunescape(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_tunescape"))
        .args(args)
        .output()
        .unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

struct Fixture {
    dir: tempfile::TempDir,
    space: SearchSpace,
    cache: TuningCache,
}

impl Fixture {
    fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rs = loop {
            let rs = RandomSpace::generate(&mut rng, 3, 5, 2, NeighborScheme::Hamming1);
            if rs.oracle_valid().len() >= 8 {
                break rs;
            }
        };
        let mut cache = random_cache(&rs, &mut rng, 0.1);
        cache.device_name = format!("dev{seed}");
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("space.spec"), rs.space.to_spec_string()).unwrap();
        store::write_cache(&cache, dir.path().join("cache.json")).unwrap();
        Self {
            dir,
            space: rs.space,
            cache,
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn arg(&self, name: &str) -> String {
        self.path(name).to_string_lossy().into_owned()
    }
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn centrality_csv_matches_library() {
    let f = Fixture::new(1);
    let (code, out, err) = tunescape(&[
        "analyze",
        "centrality",
        "--cache",
        &f.arg("cache.json"),
        "--space",
        &f.arg("space.spec"),
        "--p-max",
        "0.1",
        "--out",
        &f.arg("cp.csv"),
    ]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("local minima"));
    let g = landscape::build_ffg(&f.cache, &f.space, NeighborScheme::Hamming1).unwrap();
    let curve = landscape::centrality_curve(
        &g,
        &PageRankOptions::default(),
        &landscape::default_p_grid(0.1),
    )
    .unwrap();
    assert_eq!(read(&f.path("cp.csv")), curve.to_csv());
}

#[test]
fn distribution_and_ffg_match_library() {
    let f = Fixture::new(2);
    let (code, _, err) = tunescape(&[
        "export",
        "dist",
        "--cache",
        &f.arg("cache.json"),
        "--out",
        &f.arg("d.csv"),
        "--quantiles-out",
        &f.arg("q.csv"),
    ]);
    assert_eq!(code, 0, "{err}");
    let d = landscape::export_distribution(&f.cache).unwrap();
    assert_eq!(read(&f.path("d.csv")), d.to_csv());
    assert_eq!(read(&f.path("q.csv")), d.quantiles_csv());

    let (code, _, err) = tunescape(&[
        "export",
        "ffg",
        "--cache",
        &f.arg("cache.json"),
        "--space",
        &f.arg("space.spec"),
        "--out",
        &f.arg("g.dot"),
    ]);
    assert_eq!(code, 0, "{err}");
    let g = landscape::build_ffg(&f.cache, &f.space, NeighborScheme::Hamming1).unwrap();
    assert_eq!(read(&f.path("g.dot")), landscape::export_dot(&g));
}

#[test]
fn portability_json_matches_library() {
    let (a, b) = (Fixture::new(3), Fixture::new(3));
    let mut b_cache = b.cache.clone();
    b_cache.device_name = "other".into();
    b_cache.map_metric(|m| 1.0 / m);
    store::write_cache(&b_cache, b.path("cache.json")).unwrap();
    let caches = format!("{},{}", a.arg("cache.json"), b.arg("cache.json"));
    let out_path = a.arg("pp.json");
    let (code, _, err) = tunescape(&[
        "analyze",
        "portability",
        "--caches",
        &caches,
        "--out",
        &out_path,
    ]);
    let mut map = DeviceCaches::new();
    map.insert(a.cache.device_name.clone(), a.cache.clone());
    map.insert("other".into(), b_cache);
    let names: Vec<&str> = map.keys().map(String::as_str).collect();
    match landscape::best_portable_config(&map, &names) {
        Ok(r) => {
            assert_eq!(code, 0, "{err}");
            assert_eq!(read(&a.path("pp.json")), r.to_json());
        }
        Err(e) => {
            assert_eq!(code, 1);
            assert!(err.contains(&e.to_string()));
        }
    }
}

#[test]
fn topk_lists_library_order() {
    let f = Fixture::new(4);
    let (code, out, _) = tunescape(&[
        "analyze",
        "topk",
        "--cache",
        &f.arg("cache.json"),
        "-k",
        "3",
    ]);
    assert_eq!(code, 0);
    let keys: Vec<&str> = out
        .lines()
        .skip(1)
        .map(|l| l.split_whitespace().next().unwrap())
        .collect();
    let want: Vec<String> = landscape::top_k(&f.cache, 3)
        .into_iter()
        .map(|(c, _)| c.key())
        .collect();
    assert_eq!(keys, want);
}

#[test]
fn tune_brute_equals_library_replay() {
    let f = Fixture::new(5);
    let backend = format!("sim:{}", f.arg("cache.json"));
    let (code, _, err) = tunescape(&[
        "tune",
        "--space",
        &f.arg("space.spec"),
        "--backend",
        &backend,
        "--out",
        &f.arg("t.json"),
    ]);
    assert_eq!(code, 0, "{err}");
    let (_, replay) = strategies::brute_force(
        &f.space,
        &mut SimulatedBackend::new(f.cache.clone()),
        &MeasurementProtocol::default(),
        Budget::unlimited(),
    )
    .unwrap();
    let mut written = store::read_cache(f.path("t.json")).unwrap();
    assert_eq!(
        written.metadata.remove("strategy").as_deref(),
        Some("brute")
    );
    written.metadata.remove("seed");
    written.metadata.remove("backend");
    assert_eq!(written, replay);
}

#[test]
fn import_equals_library_import() {
    let f = Fixture::new(6);
    let ext = store::export_external(&f.cache, &Default::default()).unwrap();
    std::fs::write(f.path("ext.json"), &ext).unwrap();
    let (code, _, err) = tunescape(&[
        "import",
        "--from",
        "external",
        "--in",
        &f.arg("ext.json"),
        "--space",
        &f.arg("space.spec"),
        "--out",
        &f.arg("n.json"),
    ]);
    assert_eq!(code, 0, "{err}");
    let opts = ImportOptions {
        expected_space: Some(&f.space),
        ..Default::default()
    };
    let lib = store::import_external_cache(f.path("ext.json"), &opts).unwrap();
    assert_eq!(store::read_cache(f.path("n.json")).unwrap(), lib);
}

#[test]
fn exit_codes() {
    let f = Fixture::new(7);
    assert_eq!(
        tunescape(&["analyze", "stats", "--cache", &f.arg("cache.json")]).0,
        0
    );
    assert_eq!(tunescape(&["analyze", "stats", "--nope"]).0, 2);
    assert_eq!(tunescape(&["frobnicate"]).0, 2);
    assert_eq!(
        tunescape(&[
            "analyze",
            "topk",
            "--cache",
            &f.arg("cache.json"),
            "-k",
            "0"
        ])
        .0,
        2
    );
    assert_eq!(
        tunescape(&["analyze", "stats", "--cache", &f.arg("missing.json")]).0,
        1
    );
    std::fs::write(f.path("bad.json"), "{").unwrap();
    assert_eq!(
        tunescape(&["analyze", "stats", "--cache", &f.arg("bad.json")]).0,
        1
    );
    assert_eq!(tunescape(&["--help"]).0, 0);
}
