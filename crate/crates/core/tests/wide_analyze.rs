//! Analysis throughput on a 500-input ensemble with 300 draws.

use std::process::Command;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shapfor::forest::{io, AffineMap, Draw, Forest, PosteriorEnsemble, Tree};

const P: usize = 500;
const ACTIVE: usize = 250;
const DRAWS: usize = 300;
const TREES: usize = 200;

/// Depth-two trees splitting mostly on the first `ACTIVE` inputs.
fn tree(rng: &mut ChaCha8Rng) -> Tree {
    let dim = |rng: &mut ChaCha8Rng| {
        if rng.random_bool(0.9) {
            rng.random_range(0..ACTIVE)
        } else {
            rng.random_range(0..P)
        }
    };
    let leaf = |rng: &mut ChaCha8Rng| Tree::leaf(rng.random_range(-0.1..0.1));
    let d0 = dim(rng);
    let c0 = rng.random_range(0.2..0.8);
    let left = if rng.random_bool(0.5) {
        let d = dim(rng);
        Tree::split(
            d,
            if d == d0 { c0 / 2.0 } else { 0.5 },
            leaf(rng),
            leaf(rng),
        )
        .unwrap()
    } else {
        leaf(rng)
    };
    Tree::split(d0, c0, left, leaf(rng)).unwrap()
}

#[test]
fn five_hundred_inputs_analyze_within_budget() {
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    let draws = (0..DRAWS)
        .map(|_| Draw {
            forest: Forest::new(P, (0..TREES).map(|_| tree(&mut rng)).collect()).unwrap(),
            sigma2: 0.01,
        })
        .collect();
    let ensemble =
        PosteriorEnsemble::new(P, draws, vec![AffineMap::IDENTITY; P], AffineMap::IDENTITY)
            .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let ens = dir.path().join("wide.ens");
    io::save(&ensemble, &ens).unwrap();
    let out_dir = dir.path().join("report");
    let start = std::time::Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_shapfor"))
        .args([
            "analyze",
            ens.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
            "--seed",
            "1",
        ])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 600, "analysis took {elapsed:?}");

    let mut rdr = csv::Reader::from_path(out_dir.join("plot.csv")).unwrap();
    let mut per_index = std::collections::BTreeMap::<String, usize>::new();
    for rec in rdr.records() {
        *per_index.entry(rec.unwrap()[1].to_string()).or_default() += 1;
    }
    assert_eq!(per_index.len(), 3);
    assert!(per_index.values().all(|&n| n == P), "{per_index:?}");
}
