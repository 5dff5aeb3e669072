//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Runs as a plain binary (`harness = false`) so that criterion 8 can reuse
//! the fits of criteria 6 and 7. The process fails when any criterion's
//! outcome differs from the expectation pinned in `EXPECTED_FAILURES`.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use num_rational::Ratio;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use shapfor::forest::{Forest, PosteriorEnsemble, Tree, TreeNode};
use shapfor::oracle::{mc_cost, mc_shapley, mc_variance, BlackBox, McBudget};
use shapfor::sampler::{fit, simulate_prior, SamplerConfig, SplitNet, TreePrior};
use shapfor::sensitivity::{
    assemble_report, cost, shapley_cost_expansion, shapley_exact, shapley_weight_sum, sobol_main,
    sobol_total, subset_differences, total_effect_coefficient_bound, total_effect_expansion,
    Evaluator, ReportOptions, SensitivityReport, SubsetMask, SubsetRule,
};
use shapfor::testbed::{generate, GenerationSpec, TestFunction, TestKind};

// Table values for the five-input functions: variance and normalized
// Shapley effects, copied from the published table.
const TABLE: [(TestKind, f64, [f64; 5]); 4] = [
    (
        TestKind::Friedman,
        23.8,
        [0.235, 0.235, 0.093, 0.350, 0.087],
    ),
    (TestKind::Morris, 5.25, [0.2, 0.2, 0.2, 0.2, 0.2]),
    (
        TestKind::Bratley,
        0.057,
        [0.725, 0.179, 0.073, 0.011, 0.011],
    ),
    (
        TestKind::GFunction,
        3.076,
        [0.482, 0.233, 0.135, 0.088, 0.062],
    ),
];

// Pinned tolerances.
const SHAPLEY_TOL: f64 = 0.01;
const BRATLEY_EXTRA: f64 = 0.005;
const VARIANCE_REL_TOL: f64 = 0.01;
const ORACLE_TIME_LIMIT: Duration = Duration::from_secs(300);
const SIGMA: f64 = 3.0;
const CLOSED_FORM_MAX_MISSES: usize = 1;
/// Absolute rounding allowance, relative to the squared sup-norm bound.
const ROUNDING_FLOOR: f64 = 1e-12;
const EXACT_TOL: f64 = 1e-10;
const FIT_TOL: f64 = 0.10;
const FIT_MIN_COVERED: usize = 4;
const FIT_TIME_LIMIT: Duration = Duration::from_secs(600);
const INERT_MAX: f64 = 0.02;

/// Criteria whose failure is known and analysed; their passing would be
/// just as unexpected as any other failure.
const EXPECTED_FAILURES: [&str; 2] = ["1c", "4a"];

struct Outcome {
    id: &'static str,
    passed: bool,
    detail: String,
}

fn outcome(id: &'static str, passed: bool, detail: String) -> Outcome {
    let tag = if passed { "PASS" } else { "FAIL" };
    let note = if EXPECTED_FAILURES.contains(&id) {
        " (expected failure)"
    } else {
        ""
    };
    println!("criterion {id:<3} {tag}{note}: {detail}");
    Outcome { id, passed, detail }
}

/// Random forest with cuts drawn strictly inside each node's interval.
fn random_forest(rng: &mut ChaCha8Rng, p: usize, trees: usize, depth: usize) -> Forest {
    fn grow(
        rng: &mut ChaCha8Rng,
        p: usize,
        depth: usize,
        lo: &mut Vec<f64>,
        hi: &mut Vec<f64>,
    ) -> Tree {
        if depth == 0 || rng.random_bool(0.25) {
            return Tree::leaf(rng.random_range(-2.0..2.0));
        }
        let d = rng.random_range(0..p);
        let (a, b) = (lo[d], hi[d]);
        let cut = a + (b - a) * rng.random_range(0.05..0.95);
        hi[d] = cut;
        let left = grow(rng, p, depth - 1, lo, hi);
        hi[d] = b;
        lo[d] = cut;
        let right = grow(rng, p, depth - 1, lo, hi);
        lo[d] = a;
        Tree::split(d, cut, left, right).unwrap()
    }
    let t = (0..trees)
        .map(|_| grow(rng, p, depth, &mut vec![0.0; p], &mut vec![1.0; p]))
        .collect();
    Forest::new(p, t).unwrap()
}

fn criterion_1() -> Vec<Outcome> {
    let start = Instant::now();
    let budget = McBudget {
        n_outer: 20_000,
        n_inner: 16,
        n_subsets: 256,
    };
    let mut shapley_ok = true;
    let mut shapley_detail = Vec::new();
    let mut var_ok = true;
    let mut var_detail = Vec::new();
    let mut g_detail = String::new();
    let mut g_ok = true;
    for (kind, var_ref, s_ref) in TABLE {
        let f = TestFunction::standard(kind).black_box();
        let var = mc_variance(&f, 1_000_000, 11).unwrap();
        let tol = SHAPLEY_TOL
            + if kind == TestKind::Bratley {
                BRATLEY_EXTRA
            } else {
                0.0
            };
        let mut worst: f64 = 0.0;
        for j in 0..5 {
            let s = mc_shapley(&f, j, budget, SubsetRule::CoinFlip, 100 + j as u64).unwrap();
            worst = worst.max((s.estimate / var.estimate - s_ref[j]).abs());
        }
        shapley_ok &= worst <= tol;
        shapley_detail.push(format!("{} max|dS|={worst:.4} (tol {tol})", kind.name()));
        let rel = (var.estimate / var_ref - 1.0).abs();
        let line = format!(
            "{} var={:.4} ref={var_ref} rel={rel:.4}",
            kind.name(),
            var.estimate
        );
        if kind == TestKind::GFunction {
            g_ok = rel <= VARIANCE_REL_TOL;
            g_detail = line;
        } else {
            var_ok &= rel <= VARIANCE_REL_TOL;
            var_detail.push(line);
        }
    }
    let elapsed = start.elapsed();
    vec![
        outcome("1a", shapley_ok, shapley_detail.join("; ")),
        outcome("1b", var_ok, var_detail.join("; ")),
        outcome("1c", g_ok, g_detail),
        outcome(
            "1d",
            elapsed < ORACLE_TIME_LIMIT,
            format!("oracle runtime {:.1} s", elapsed.as_secs_f64()),
        ),
    ]
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut misses = 0;
    let mut worst_z: f64 = 0.0;
    for case in 0..100u64 {
        let p = rng.random_range(1..=6);
        let trees = rng.random_range(1..=5);
        let f = random_forest(&mut rng, p, trees, 3);
        let mask = SubsetMask::from_bits(p, rng.random::<u64>());
        let exact = cost(&f, &mask).unwrap();
        let floor = ROUNDING_FLOOR * (1.0 + f.sup_norm_bound().powi(2));
        let mc = mc_cost(&BlackBox::from_forest(f), &mask, 20_000, 16, 1000 + case).unwrap();
        let gap = ((mc.estimate - exact).abs() - floor).max(0.0);
        let z = if gap == 0.0 { 0.0 } else { gap / mc.stderr };
        worst_z = worst_z.max(z);
        misses += (z > SIGMA) as usize;
    }
    outcome(
        "2",
        misses <= CLOSED_FORM_MAX_MISSES,
        format!("{misses} of 100 beyond {SIGMA} SE (max z {worst_z:.2})"),
    )
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut sum_err, mut sandwich, mut negative): (f64, usize, usize) = (0.0, 0, 0);
    for _ in 0..200 {
        let p = rng.random_range(1..=6);
        let trees = rng.random_range(1..=5);
        let f = random_forest(&mut rng, p, trees, 3);
        let s: Vec<f64> = (0..p).map(|j| shapley_exact(&f, j).unwrap()).collect();
        sum_err = sum_err.max((s.iter().sum::<f64>() - f.variance()).abs());
        for (j, &sj) in s.iter().enumerate() {
            let (v, t) = (sobol_main(&f, j).unwrap(), sobol_total(&f, j).unwrap());
            sandwich += (v > sj + EXACT_TOL || sj > t + EXACT_TOL) as usize;
            negative += (sj < -EXACT_TOL) as usize;
        }
    }
    outcome(
        "3",
        sum_err <= EXACT_TOL && sandwich == 0 && negative == 0,
        format!(
            "max |sum S - var| {sum_err:.2e}, sandwich violations {sandwich}, negatives {negative}"
        ),
    )
}

/// A five-input forest with a three-way interaction among inputs 0, 1, 2
/// plus additive and pairwise terms.
fn criterion_4_forest() -> Forest {
    let t3 = Tree::split(
        0,
        0.5,
        Tree::leaf(0.0),
        Tree::split(
            1,
            0.5,
            Tree::leaf(0.0),
            Tree::split(2, 0.5, Tree::leaf(0.0), Tree::leaf(4.0)).unwrap(),
        )
        .unwrap(),
    )
    .unwrap();
    let t2 = Tree::split(
        3,
        0.3,
        Tree::leaf(-1.0),
        Tree::split(4, 0.6, Tree::leaf(0.5), Tree::leaf(1.5)).unwrap(),
    )
    .unwrap();
    let t1 = Tree::split(0, 0.7, Tree::leaf(0.2), Tree::leaf(-0.8)).unwrap();
    Forest::new(5, vec![t3, t2, t1]).unwrap()
}

fn criterion_4() -> Vec<Outcome> {
    let f = criterion_4_forest();
    let ev = Evaluator::new(&f);
    let mut out = Vec::new();
    for (id, rule) in [
        ("4a", SubsetRule::CoinFlip),
        ("4b", SubsetRule::SizeStratified),
    ] {
        let mut worst: f64 = 0.0;
        for j in 0..5 {
            let exact = shapley_exact(&f, j).unwrap();
            let d = subset_differences(&ev, j, 10_000, 44, 0, rule);
            let n = d.len() as f64;
            let mean = d.iter().sum::<f64>() / n;
            let sd = (d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            let se = sd / n.sqrt();
            let z = if se > 0.0 {
                (mean - exact).abs() / se
            } else if mean == exact {
                0.0
            } else {
                f64::INFINITY
            };
            worst = worst.max(z);
        }
        out.push(outcome(
            id,
            worst <= SIGMA,
            format!("{rule} subsets, max |mean - S| / SE = {worst:.2}"),
        ));
    }
    out
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut violations = 0;
    let mut tightest: f64 = 0.0;
    for case in 0..1000 {
        let p = rng.random_range(1..=6);
        let trees = rng.random_range(1..=5);
        let f = random_forest(&mut rng, p, trees, 3);
        let f0 = if case % 2 == 0 {
            let trees = rng.random_range(1..=5);
            random_forest(&mut rng, p, trees, 3)
        } else {
            let extra = random_forest(&mut rng, p, 1, 2).scaled(0.01);
            f.concat(&extra).unwrap()
        };
        let mask = SubsetMask::from_bits(p, rng.random::<u64>());
        let lhs = (cost(&f, &mask).unwrap() - cost(&f0, &mask).unwrap()).abs();
        let b = f.sup_norm_bound().max(f0.sup_norm_bound());
        let rhs = 4.0 * b * f.l2_distance(&f0).unwrap();
        violations += (lhs > rhs * (1.0 + 1e-12) + 1e-15) as usize;
        if rhs > 0.0 {
            tightest = tightest.max(lhs / rhs);
        }
    }
    outcome(
        "5",
        violations == 0,
        format!("{violations} violations, max lhs/rhs {tightest:.3}"),
    )
}

fn shapley_lower_endpoints(report: &SensitivityReport) -> f64 {
    report
        .inputs
        .iter()
        .flat_map(|r| [r.raw.shapley.lo, r.normalized.shapley.lo])
        .fold(f64::INFINITY, f64::min)
}

fn criterion_6() -> (Vec<Outcome>, f64) {
    let start = Instant::now();
    let f = TestFunction::standard(TestKind::Friedman);
    let data = generate(
        &f,
        &GenerationSpec {
            n: Some(250),
            noise_ratio: 0.25,
            seed: 6,
        },
    )
    .unwrap();
    let config = SamplerConfig {
        num_trees: 200,
        n_draw: 1000,
        seed: 6,
        ..Default::default()
    };
    let ensemble: PosteriorEnsemble = fit(&data, &config).unwrap();
    let report = assemble_report(
        &ensemble,
        &ReportOptions {
            seed: 6,
            ..Default::default()
        },
    )
    .unwrap();
    let elapsed = start.elapsed();
    let truth = TABLE[0].2;
    let mut within = 0;
    let mut covered = 0;
    let mut cells = Vec::new();
    for (j, r) in report.inputs.iter().enumerate() {
        let s = &r.normalized.shapley;
        within += ((s.point - truth[j]).abs() <= FIT_TOL) as usize;
        covered += (s.lo <= truth[j] && truth[j] <= s.hi) as usize;
        cells.push(format!("{:.3} [{:.3}, {:.3}]", s.point, s.lo, s.hi));
    }
    let outs = vec![
        outcome(
            "6a",
            within == 5,
            format!("{within}/5 within {FIT_TOL}: {}", cells.join(", ")),
        ),
        outcome(
            "6b",
            covered >= FIT_MIN_COVERED,
            format!("{covered}/5 intervals cover the table value"),
        ),
        outcome(
            "6c",
            elapsed < FIT_TIME_LIMIT,
            format!("fit + analysis {:.1} s", elapsed.as_secs_f64()),
        ),
    ];
    (outs, shapley_lower_endpoints(&report))
}

fn criterion_7() -> (Outcome, f64) {
    let f = TestFunction::new(TestKind::Morris, 5, 50).unwrap();
    let data = generate(
        &f,
        &GenerationSpec {
            n: Some(2500),
            noise_ratio: 0.25,
            seed: 7,
        },
    )
    .unwrap();
    let config = SamplerConfig {
        num_trees: 200,
        n_burn: 500,
        n_draw: 300,
        seed: 7,
        ..Default::default()
    };
    let ensemble = fit(&data, &config).unwrap();
    let report = assemble_report(
        &ensemble,
        &ReportOptions {
            seed: 7,
            ..Default::default()
        },
    )
    .unwrap();
    let s: Vec<f64> = report
        .inputs
        .iter()
        .map(|r| r.normalized.shapley.point)
        .collect();
    let min_active = s[..5].iter().copied().fold(f64::INFINITY, f64::min);
    let max_inert = s[5..].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let o = outcome(
        "7",
        min_active > max_inert && max_inert < INERT_MAX,
        format!(
            "min active {min_active:.4}, max inert {max_inert:.4} ({} Shapley)",
            report.metadata.shapley
        ),
    );
    (o, shapley_lower_endpoints(&report))
}

fn depth_counts(tree: &Tree, nodes: &mut [f64], splits: &mut [f64]) -> usize {
    fn walk(t: &[TreeNode], i: usize, d: usize, nodes: &mut [f64], splits: &mut [f64]) -> usize {
        if d < nodes.len() {
            nodes[d] += 1.0;
        }
        match t[i] {
            TreeNode::Leaf { .. } => d,
            TreeNode::Internal { left, right, .. } => {
                if d < splits.len() {
                    splits[d] += 1.0;
                }
                walk(t, left, d + 1, nodes, splits).max(walk(t, right, d + 1, nodes, splits))
            }
        }
    }
    walk(tree.nodes(), 0, 0, nodes, splits)
}

fn criterion_9() -> Outcome {
    const DEPTHS: usize = 4;
    const ITER: usize = 100_000;
    const BATCHES: usize = 100;
    let prior = TreePrior {
        alpha: 0.95,
        beta: 2.0,
    };
    let p = 10;
    let net = SplitNet::new(vec![(1..=100).map(|k| k as f64 / 101.0).collect(); p]).unwrap();
    let s = vec![1.0 / p as f64; p];
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    // per batch: node and split counts per depth, and the tree-depth histogram
    let mut nodes = vec![[0.0; DEPTHS]; BATCHES];
    let mut splits = vec![[0.0; DEPTHS]; BATCHES];
    let mut depth_hist = vec![[0.0; DEPTHS + 1]; BATCHES];
    let mut k = 0;
    simulate_prior(&net, &s, &prior, ITER, &mut rng, |t| {
        let b = k * BATCHES / ITER;
        let d = depth_counts(t, &mut nodes[b], &mut splits[b]);
        depth_hist[b][d.min(DEPTHS)] += 1.0;
        k += 1;
    });
    let per_batch = (ITER / BATCHES) as f64;

    let batch_se = |xs: &[f64]| {
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        (m, (v / xs.len() as f64).sqrt())
    };
    let mut worst: f64 = 0.0;
    let mut cells = Vec::new();
    for d in 0..DEPTHS {
        let total_nodes: f64 = nodes.iter().map(|n| n[d]).sum();
        let total_splits: f64 = splits.iter().map(|n| n[d]).sum();
        let ratio = total_splits / total_nodes;
        // ratio estimator: batch residuals splits - ratio * nodes
        let resid: Vec<f64> = (0..BATCHES)
            .map(|b| splits[b][d] - ratio * nodes[b][d])
            .collect();
        let (_, se_resid) = batch_se(&resid);
        let se = se_resid / (total_nodes / BATCHES as f64);
        let expected = prior.alpha * (1.0 + d as f64).powf(-prior.beta);
        let z = (ratio - expected).abs() / se;
        worst = worst.max(z);
        cells.push(format!("d{d} {ratio:.4}/{expected:.4}"));
    }
    // exact depth distribution of the branching process
    let split_p = |d: usize| prior.alpha * (1.0 + d as f64).powf(-prior.beta);
    let at_most = |depth: usize| {
        let mut f = 1.0 - split_p(depth);
        for d in (0..depth).rev() {
            f = (1.0 - split_p(d)) + split_p(d) * f * f;
        }
        f
    };
    for depth in 0..DEPTHS {
        let prob = at_most(depth) - if depth == 0 { 0.0 } else { at_most(depth - 1) };
        let freqs: Vec<f64> = depth_hist.iter().map(|h| h[depth] / per_batch).collect();
        let (m, se) = batch_se(&freqs);
        worst = worst.max((m - prob).abs() / se);
        cells.push(format!("P(depth={depth}) {m:.4}/{prob:.4}"));
    }
    outcome(
        "9",
        worst <= SIGMA,
        format!("max z {worst:.2}; {}", cells.join(", ")),
    )
}

fn criterion_10() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for p in 1..=8usize {
        let bound: i64 = (0..p as u32)
            .map(|i| binomial(p as i64 - 1, i as i64) * ((1i64 << (i + 1)) - 1))
            .sum();
        ok &= total_effect_coefficient_bound(p) == bound;
        let full = (1u32 << p) - 1;
        let mut shapley_sum: std::collections::BTreeMap<u32, Ratio<i64>> = Default::default();
        for j in 0..p {
            let e = total_effect_expansion(p, j);
            ok &= e.uncancelled_abs_sum() == Ratio::from(bound);
            let mut want = std::collections::BTreeMap::new();
            want.insert(full, Ratio::from(1i64));
            if p > 1 {
                want.insert(full & !(1 << j), Ratio::from(-1i64));
            }
            ok &= e.cancelled() == want;
            for (q, c) in shapley_cost_expansion(p, j).cancelled() {
                *shapley_sum.entry(q).or_insert_with(|| Ratio::from(0i64)) += c;
            }
        }
        shapley_sum.retain(|_, c| *c != Ratio::from(0i64));
        ok &= shapley_sum == std::collections::BTreeMap::from([(full, Ratio::from(1i64))]);
        // (1/p) sum over subsets of the others of 1 / C(p-1, |P|)
        let mut weight = Ratio::from(0i64);
        for bits in 0u32..(1 << (p - 1)) {
            weight += Ratio::new(1, binomial(p as i64 - 1, bits.count_ones() as i64));
        }
        weight /= Ratio::from(p as i64);
        ok &= weight == Ratio::from(1i64) && shapley_weight_sum(p) == weight;
        notes.push(format!("p={p}:{bound}"));
    }
    outcome(
        "10",
        ok,
        format!("total-effect coefficient sums {}", notes.join(" ")),
    )
}

fn binomial(n: i64, k: i64) -> i64 {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

fn main() -> ExitCode {
    let mut results = Vec::new();
    results.extend(criterion_1());
    results.push(criterion_2());
    results.push(criterion_3());
    results.extend(criterion_4());
    results.push(criterion_5());
    let (six, low6) = criterion_6();
    results.extend(six);
    let (seven, low7) = criterion_7();
    results.push(seven);
    let low = low6.min(low7);
    results.push(outcome(
        "8",
        low >= 0.0,
        format!("smallest Shapley interval endpoint {low:.3e}"),
    ));
    results.push(criterion_9());
    results.push(criterion_10());

    let unexpected: Vec<&Outcome> = results
        .iter()
        .filter(|o| o.passed == EXPECTED_FAILURES.contains(&o.id))
        .collect();
    let passed = results.iter().filter(|o| o.passed).count();
    println!("{passed}/{} criteria passed", results.len());
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        for o in unexpected {
            println!("unexpected outcome for criterion {}: {}", o.id, o.detail);
        }
        ExitCode::FAILURE
    }
}
