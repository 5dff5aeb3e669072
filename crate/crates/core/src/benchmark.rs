//! End-to-end scenarios with pass/fail metrics.

use std::time::Instant;

use rand::Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::forest::Forest;
use crate::oracle::{mc_shapley, mc_variance, McBudget};
use crate::rng::stream;
use crate::sampler::{fit, SamplerConfig};
use crate::sensitivity::{
    assemble_report, lipschitz_gap, Evaluator, ReportOptions, SubsetMask, SubsetRule,
};
use crate::testbed::{generate, reference_values, GenerationSpec, TestFunction, TestKind};

pub const SUITES: [&str; 4] = [
    "table-va1-oracle",
    "friedman-fit",
    "morris-wide",
    "invariant-sweep",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BenchmarkOptions {
    pub seed: u64,
    /// Shrinks every budget for smoke runs; tolerances are unchanged.
    pub quick: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteResult {
    pub suite: String,
    pub seed: u64,
    pub quick: bool,
    pub passed: bool,
    pub runtime_secs: f64,
    pub metrics: Value,
}

pub fn run_suite(name: &str, opts: &BenchmarkOptions) -> Result<SuiteResult> {
    let start = Instant::now();
    let (passed, metrics) = match name {
        "table-va1-oracle" => table_va1_oracle(opts)?,
        "friedman-fit" => friedman_fit(opts)?,
        "morris-wide" => morris_wide(opts)?,
        "invariant-sweep" => invariant_sweep(opts)?,
        _ => {
            return Err(Error::Unknown {
                kind: "benchmark suite",
                name: name.to_string(),
            })
        }
    };
    Ok(SuiteResult {
        suite: name.to_string(),
        seed: opts.seed,
        quick: opts.quick,
        passed,
        runtime_secs: start.elapsed().as_secs_f64(),
        metrics,
    })
}

fn table_va1_oracle(opts: &BenchmarkOptions) -> Result<(bool, Value)> {
    let (n_var, budget) = if opts.quick {
        (
            20_000,
            McBudget {
                n_outer: 1000,
                n_inner: 8,
                n_subsets: 16,
            },
        )
    } else {
        (
            1_000_000,
            McBudget {
                n_outer: 20_000,
                n_inner: 16,
                n_subsets: 256,
            },
        )
    };
    let mut all_pass = true;
    let mut rows = Vec::new();
    for kind in TestKind::ALL {
        let f = TestFunction::standard(kind);
        let table = reference_values(kind, 5)?;
        let bb = f.black_box();
        let var = mc_variance(&bb, n_var, opts.seed)?;
        let mut max_err: f64 = 0.0;
        let mut shapley = Vec::new();
        for j in 0..5 {
            let s = mc_shapley(
                &bb,
                j,
                budget,
                SubsetRule::CoinFlip,
                opts.seed ^ (j as u64 + 1),
            )?;
            let normalized = s.estimate / var.estimate;
            max_err = max_err.max((normalized - table.shapley[j]).abs());
            shapley.push(normalized);
        }
        let tol = if kind == TestKind::Bratley {
            0.015
        } else {
            0.01
        };
        let var_rel = (var.estimate / table.variance - 1.0).abs();
        let pass = max_err <= tol && var_rel <= 0.01;
        all_pass &= pass;
        rows.push(json!({
            "function": kind.name(),
            "variance": var.estimate,
            "variance_reference": table.variance,
            "variance_rel_error": var_rel,
            "shapley_normalized": shapley,
            "shapley_reference": table.shapley,
            "max_abs_error": max_err,
            "passed": pass,
        }));
    }
    Ok((all_pass, json!({ "functions": rows })))
}

fn friedman_fit(opts: &BenchmarkOptions) -> Result<(bool, Value)> {
    let f = TestFunction::standard(TestKind::Friedman);
    let data = generate(
        &f,
        &GenerationSpec {
            n: None,
            noise_ratio: 0.25,
            seed: opts.seed,
        },
    )?;
    let config = if opts.quick {
        SamplerConfig {
            num_trees: 20,
            n_burn: 50,
            n_draw: 50,
            seed: opts.seed,
            ..Default::default()
        }
    } else {
        SamplerConfig {
            seed: opts.seed,
            ..Default::default()
        }
    };
    let ensemble = fit(&data, &config)?;
    let report = assemble_report(
        &ensemble,
        &ReportOptions {
            seed: opts.seed,
            ..Default::default()
        },
    )?;
    let truth = reference_values(TestKind::Friedman, 5)?.shapley;
    let mut within = 0;
    let mut covered = 0;
    let mut nonnegative = true;
    let mut rows = Vec::new();
    for (j, r) in report.inputs.iter().enumerate() {
        let s = &r.normalized.shapley;
        let ok = (s.point - truth[j]).abs() <= 0.10;
        let cov = s.lo <= truth[j] && truth[j] <= s.hi;
        within += ok as usize;
        covered += cov as usize;
        nonnegative &= s.lo >= 0.0 && r.raw.shapley.lo >= 0.0;
        rows.push(json!({ "input": j + 1, "point": s.point, "lo": s.lo, "hi": s.hi, "truth": truth[j], "within": ok, "covered": cov }));
    }
    let variance = report.variance.point;
    let passed = within == 5 && covered >= 4 && nonnegative;
    Ok((
        passed,
        json!({ "inputs": rows, "posterior_variance": variance, "covered": covered, "nonnegative": nonnegative }),
    ))
}

fn morris_wide(opts: &BenchmarkOptions) -> Result<(bool, Value)> {
    let (p, n, draws, trees) = if opts.quick {
        (20, 400, 30, 30)
    } else {
        (50, 2500, 300, 200)
    };
    let f = TestFunction::new(TestKind::Morris, 5, p)?;
    let data = generate(
        &f,
        &GenerationSpec {
            n: Some(n),
            noise_ratio: 0.25,
            seed: opts.seed,
        },
    )?;
    let config = SamplerConfig {
        num_trees: trees,
        n_burn: draws,
        n_draw: draws,
        seed: opts.seed,
        ..Default::default()
    };
    let ensemble = fit(&data, &config)?;
    let report = assemble_report(
        &ensemble,
        &ReportOptions {
            seed: opts.seed,
            ..Default::default()
        },
    )?;
    let points: Vec<f64> = report
        .inputs
        .iter()
        .map(|r| r.normalized.shapley.point)
        .collect();
    let min_active = points[..5].iter().copied().fold(f64::INFINITY, f64::min);
    let max_inert = points[5..].iter().copied().fold(0.0, f64::max);
    let nonnegative = report.inputs.iter().all(|r| r.normalized.shapley.lo >= 0.0);
    let passed = min_active > max_inert && max_inert < 0.02 && nonnegative;
    Ok((
        passed,
        json!({ "p": p, "active": &points[..5], "max_inert": max_inert, "min_active": min_active, "nonnegative": nonnegative, "shapley_mode": report.metadata.shapley }),
    ))
}

/// Random forest with `trees` trees of depth at most `max_depth` and leaf
/// values in `[-1, 1]`.
pub fn random_forest<R: Rng>(rng: &mut R, p: usize, trees: usize, max_depth: usize) -> Forest {
    fn grow<R: Rng>(
        rng: &mut R,
        p: usize,
        depth: usize,
        bounds: &mut Vec<(f64, f64)>,
    ) -> crate::forest::Tree {
        if depth == 0 || rng.random::<f64>() < 0.3 {
            return crate::forest::Tree::leaf(rng.random_range(-1.0..1.0));
        }
        let dim = rng.random_range(0..p);
        let (lo, hi) = bounds[dim];
        let cut = lo + (hi - lo) * rng.random_range(0.1..0.9);
        bounds[dim] = (lo, cut);
        let left = grow(rng, p, depth - 1, bounds);
        bounds[dim] = (cut, hi);
        let right = grow(rng, p, depth - 1, bounds);
        bounds[dim] = (lo, hi);
        crate::forest::Tree::split(dim, cut, left, right).expect("cut inside its interval")
    }
    let t = (0..trees)
        .map(|_| grow(rng, p, max_depth, &mut vec![(0.0, 1.0); p]))
        .collect();
    Forest::new(p, t).expect("dimensions in range")
}

fn invariant_sweep(opts: &BenchmarkOptions) -> Result<(bool, Value)> {
    let (n_shapley, n_lipschitz) = if opts.quick { (20, 100) } else { (200, 1000) };
    let mut rng = stream(opts.seed, &[0x1157]);
    let (mut sum_v, mut sandwich_v, mut neg_v, mut lip_v) = (0, 0, 0, 0);
    for case in 0..n_shapley {
        let p = 1 + case % 6;
        let f = random_forest(&mut rng, p, 1 + case % 5, 3);
        let ev = Evaluator::new(&f);
        let mut sum = 0.0;
        for j in 0..p {
            let s = ev.shapley_exact(j)?;
            sum += s;
            neg_v += (s < -1e-10) as usize;
            sandwich_v +=
                (ev.sobol_main(j)? > s + 1e-10 || s > ev.sobol_total(j)? + 1e-10) as usize;
        }
        sum_v += ((sum - ev.variance()).abs() > 1e-10) as usize;
    }
    for case in 0..n_lipschitz {
        let p = 1 + case % 6;
        let f = random_forest(&mut rng, p, 1 + case % 5, 3);
        let g = random_forest(&mut rng, p, 1 + (case / 5) % 5, 3);
        let mask = SubsetMask::from_bits(p, rng.random::<u64>());
        let (lhs, rhs) = lipschitz_gap(&f, &g, &mask)?;
        lip_v += (lhs > rhs) as usize;
    }
    let passed = sum_v + sandwich_v + neg_v + lip_v == 0;
    Ok((
        passed,
        json!({
            "shapley_forests": n_shapley,
            "lipschitz_pairs": n_lipschitz,
            "sum_violations": sum_v,
            "sandwich_violations": sandwich_v,
            "negative_violations": neg_v,
            "lipschitz_violations": lip_v,
        }),
    ))
}
