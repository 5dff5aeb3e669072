//! Monte-Carlo estimators of costs, Shapley effects and variances for any
//! function on the unit cube. They serve as ground truth for the closed
//! forms and as the direct-estimation baseline on noise-free functions.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::Forest;
use crate::rng::{stream, StreamRng};
use crate::sensitivity::{
    IndexEstimate, IndexTriple, InputIndices, Normalization, Quantile, ReportMetadata,
    SensitivityReport, SubsetMask, SubsetRule,
};

/// Outer samples per RNG stream, fixing how work splits across threads.
const BLOCK: usize = 512;

type SharedFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A deterministic function on `[0,1]^p`.
#[derive(Clone)]
pub struct BlackBox {
    p: usize,
    f: SharedFn,
}

impl std::fmt::Debug for BlackBox {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BlackBox")
            .field("p", &self.p)
            .finish_non_exhaustive()
    }
}

impl BlackBox {
    pub fn new(p: usize, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        BlackBox { p, f: Arc::new(f) }
    }

    pub fn from_forest(forest: Forest) -> Self {
        let p = forest.p();
        BlackBox::new(p, move |x| forest.evaluate_unchecked(x))
    }

    pub fn p(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub stderr: f64,
}

/// Sample budgets for the double-loop estimators.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McBudget {
    pub n_outer: usize,
    pub n_inner: usize,
    pub n_subsets: usize,
}

impl Default for McBudget {
    fn default() -> Self {
        McBudget {
            n_outer: 10_000,
            n_inner: 16,
            n_subsets: 64,
        }
    }
}

fn seed_for(seed: u64, key: &[u64]) -> u64 {
    stream(seed, key).random()
}

/// Runs `body` once per outer sample in fixed-size blocks, each with its
/// own stream, and returns the per-sample outputs in order.
fn blocked<T: Send>(
    n: usize,
    seed: u64,
    body: impl Fn(&mut StreamRng, &mut Vec<f64>) -> T + Sync,
) -> Vec<T> {
    (0..n.div_ceil(BLOCK))
        .into_par_iter()
        .flat_map_iter(|b| {
            let mut rng = stream(seed, &[b as u64]);
            let mut x = Vec::new();
            let count = BLOCK.min(n - b * BLOCK);
            (0..count)
                .map(|_| body(&mut rng, &mut x))
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Double-loop estimate of `Var E[f(X) | X_P]`.
///
/// Each outer sample fixes `X_P` and averages `n_inner` evaluations over
/// fresh `X_{-P}`; the variance of those means overstates the target by the
/// mean within-sample variance over `n_inner`, which is subtracted. The
/// standard error is the leave-one-out jackknife over outer samples.
pub fn mc_cost(
    f: &BlackBox,
    mask: &SubsetMask,
    n_outer: usize,
    n_inner: usize,
    seed: u64,
) -> Result<McEstimate> {
    if mask.p() != f.p() {
        return Err(Error::DimensionMismatch {
            expected: f.p(),
            actual: mask.p(),
        });
    }
    if n_outer < 2 || n_inner < 2 {
        return Err(Error::InvalidConfig(
            "double-loop budgets must be at least 2".into(),
        ));
    }
    let p = f.p();
    let fixed: Vec<usize> = mask.iter().collect();
    let free: Vec<usize> = (0..p).filter(|&d| !mask.contains(d)).collect();
    let inner = if free.is_empty() { 1 } else { n_inner };
    let stats: Vec<(f64, f64)> = blocked(n_outer, seed, |rng, x| {
        x.resize(p, 0.0);
        for &d in &fixed {
            x[d] = rng.random();
        }
        let mut vals = [0.0f64; 64];
        let mut acc = Vec::new();
        let vals: &mut [f64] = if inner <= vals.len() {
            &mut vals[..inner]
        } else {
            acc.resize(inner, 0.0);
            &mut acc
        };
        for v in vals.iter_mut() {
            for &d in &free {
                x[d] = rng.random();
            }
            *v = f.eval(x);
        }
        let m = vals.iter().sum::<f64>() / inner as f64;
        let s2 = if inner > 1 {
            vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (inner - 1) as f64
        } else {
            0.0
        };
        (m, s2)
    });
    Ok(jackknife(&stats, inner as f64))
}

/// Estimate `var(m) - mean(s2) / k` with its delete-one jackknife error.
fn jackknife(stats: &[(f64, f64)], k: f64) -> McEstimate {
    let n = stats.len() as f64;
    let m_bar = stats.iter().map(|s| s.0).sum::<f64>() / n;
    let s_bar = stats.iter().map(|s| s.1).sum::<f64>() / n;
    let a: f64 = stats.iter().map(|s| (s.0 - m_bar) * (s.0 - m_bar)).sum();
    let estimate = a / (n - 1.0) - s_bar / k;
    let loo: Vec<f64> = stats
        .iter()
        .map(|&(m, s2)| {
            let a_k = a - (m - m_bar) * (m - m_bar) * n / (n - 1.0);
            let s_k = (s_bar * n - s2) / (n - 1.0);
            a_k / (n - 2.0) - s_k / k
        })
        .collect();
    let loo_bar = loo.iter().sum::<f64>() / n;
    let ss: f64 = loo.iter().map(|t| (t - loo_bar) * (t - loo_bar)).sum();
    McEstimate {
        estimate,
        stderr: ((n - 1.0) / n * ss).sqrt(),
    }
}

/// Random-subset Shapley estimate of input `j`: the mean over
/// `n_subsets` coalitions of the difference of two double-loop costs.
/// The standard error is taken across coalitions, so it covers both the
/// coalition draw and the inner Monte-Carlo noise.
pub fn mc_shapley(
    f: &BlackBox,
    j: usize,
    budget: McBudget,
    rule: SubsetRule,
    seed: u64,
) -> Result<McEstimate> {
    let p = f.p();
    if j >= p {
        return Err(Error::IndexOutOfRange { index: j, p });
    }
    if budget.n_subsets < 2 {
        return Err(Error::InvalidConfig(
            "at least two coalitions are required".into(),
        ));
    }
    let diffs: Vec<f64> = (0..budget.n_subsets)
        .map(|l| {
            let mut rng = stream(seed, &[u64::MAX, j as u64, l as u64]);
            let mut mask = SubsetMask::empty(p);
            match rule {
                SubsetRule::CoinFlip => {
                    for d in (0..p).filter(|&d| d != j) {
                        if rng.random::<bool>() {
                            mask.insert(d);
                        }
                    }
                }
                SubsetRule::SizeStratified => {
                    let size = rng.random_range(0..p);
                    for k in rand::seq::index::sample(&mut rng, p - 1, size) {
                        mask.insert(if k < j { k } else { k + 1 });
                    }
                }
            }
            let with = mc_cost(
                f,
                &mask.with(j),
                budget.n_outer,
                budget.n_inner,
                seed_for(seed, &[j as u64, l as u64, 1]),
            )?;
            let without = if mask.is_empty() {
                0.0
            } else {
                mc_cost(
                    f,
                    &mask,
                    budget.n_outer,
                    budget.n_inner,
                    seed_for(seed, &[j as u64, l as u64, 0]),
                )?
                .estimate
            };
            Ok(with.estimate - without)
        })
        .collect::<Result<_>>()?;
    Ok(McEstimate {
        estimate: crate::stats::mean(&diffs),
        stderr: crate::stats::std_error(&diffs),
    })
}

/// Plain sample variance of `f` at `n` uniform points. The standard error
/// uses the fourth central moment.
pub fn mc_variance(f: &BlackBox, n: usize, seed: u64) -> Result<McEstimate> {
    if n < 2 {
        return Err(Error::InvalidConfig("need at least two points".into()));
    }
    let p = f.p();
    let ys: Vec<f64> = blocked(n, seed, |rng, x| {
        x.resize(p, 0.0);
        for v in x.iter_mut() {
            *v = rng.random();
        }
        f.eval(x)
    });
    let nf = n as f64;
    let m = ys.iter().sum::<f64>() / nf;
    let m2 = ys.iter().map(|y| (y - m).powi(2)).sum::<f64>() / nf;
    let m4 = ys.iter().map(|y| (y - m).powi(4)).sum::<f64>() / nf;
    Ok(McEstimate {
        estimate: m2 * nf / (nf - 1.0),
        stderr: ((m4 - m2 * m2).max(0.0) / nf).sqrt(),
    })
}

/// Settings for [`oracle_report`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleOptions {
    pub budget: McBudget,
    pub n_variance: usize,
    pub subset_rule: SubsetRule,
    pub levels: Vec<f64>,
    pub seed: u64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions {
            budget: McBudget::default(),
            n_variance: 1_000_000,
            subset_rule: SubsetRule::CoinFlip,
            levels: vec![0.025, 0.975],
            seed: 0,
        }
    }
}

/// Normal-approximation summary of a Monte-Carlo estimate.
fn normal_summary(e: McEstimate, levels: &[f64]) -> Result<IndexEstimate> {
    use statrs::distribution::{ContinuousCDF, Normal};
    let z = Normal::standard();
    let mut lv = levels.to_vec();
    lv.sort_by(f64::total_cmp);
    if lv.is_empty() || lv.iter().any(|l| !(*l > 0.0 && *l < 1.0)) {
        return Err(Error::InvalidConfig(format!(
            "quantile levels {levels:?} must lie in (0, 1)"
        )));
    }
    let quantiles: Vec<Quantile> = lv
        .iter()
        .map(|&level| Quantile {
            level,
            value: e.estimate + z.inverse_cdf(level) * e.stderr,
        })
        .collect();
    Ok(IndexEstimate {
        point: e.estimate,
        lo: quantiles[0].value,
        hi: quantiles[quantiles.len() - 1].value,
        quantiles,
        draws: None,
    })
}

/// Monte-Carlo main, total and Shapley indices of every input in the same
/// schema as the closed-form report, with normal-approximation intervals.
///
/// `T_j` is the variance minus the cost of all other inputs; normalized
/// values divide estimate and error by the variance estimate.
pub fn oracle_report(f: &BlackBox, opts: &OracleOptions) -> Result<SensitivityReport> {
    let p = f.p();
    let b = opts.budget;
    let var = mc_variance(f, opts.n_variance, seed_for(opts.seed, &[u64::MAX - 1]))?;
    let mut inputs = Vec::with_capacity(p);
    for j in 0..p {
        let key = |tag: u64| seed_for(opts.seed, &[u64::MAX - 2, tag, j as u64]);
        let main = mc_cost(
            f,
            &SubsetMask::from_indices(p, &[j])?,
            b.n_outer,
            b.n_inner,
            key(0),
        )?;
        let rest = SubsetMask::full(p).without(j);
        let rest_cost = if rest.is_empty() {
            McEstimate {
                estimate: 0.0,
                stderr: 0.0,
            }
        } else {
            mc_cost(f, &rest, b.n_outer, b.n_inner, key(1))?
        };
        let total = McEstimate {
            estimate: var.estimate - rest_cost.estimate,
            stderr: var.stderr.hypot(rest_cost.stderr),
        };
        let shapley = mc_shapley(f, j, b, opts.subset_rule, key(2))?;
        let scale = |e: McEstimate| {
            let v = if var.estimate > 0.0 {
                var.estimate
            } else {
                1.0
            };
            McEstimate {
                estimate: e.estimate / v,
                stderr: e.stderr / v,
            }
        };
        let triple = |m: McEstimate, t: McEstimate, s: McEstimate| -> Result<IndexTriple> {
            Ok(IndexTriple {
                main: normal_summary(m, &opts.levels)?,
                total: normal_summary(t, &opts.levels)?,
                shapley: normal_summary(s, &opts.levels)?,
            })
        };
        inputs.push(InputIndices {
            input: j,
            name: format!("x{}", j + 1),
            raw: triple(main, total, shapley)?,
            normalized: triple(scale(main), scale(total), scale(shapley))?,
        });
    }
    Ok(SensitivityReport {
        inputs,
        variance: normal_summary(var, &opts.levels)?,
        sigma2: normal_summary(
            McEstimate {
                estimate: 0.0,
                stderr: 0.0,
            },
            &opts.levels,
        )?,
        metadata: ReportMetadata {
            method: "mc".into(),
            p,
            n_draw: 0,
            m: b.n_subsets,
            seed: opts.seed,
            levels: opts.levels.clone(),
            shapley: "sampled".into(),
            subset_rule: opts.subset_rule,
            normalization: Normalization::PerDraw,
            response_scale: 1.0,
            run: None,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::test_util::random_forest;
    use crate::forest::Tree;
    use crate::rng::seeded;

    fn step() -> BlackBox {
        BlackBox::new(2, |x| (x[0] >= 0.5) as u8 as f64)
    }

    fn indicator() -> BlackBox {
        BlackBox::new(2, |x| (x[0] >= 0.5 && x[1] >= 0.5) as u8 as f64)
    }

    fn mask(p: usize, m: &[usize]) -> SubsetMask {
        SubsetMask::from_indices(p, m).unwrap()
    }

    #[test]
    fn constant_function_has_zero_cost() {
        let c = BlackBox::new(3, |_| 4.0);
        let e = mc_cost(&c, &mask(3, &[1]), 1000, 4, 1).unwrap();
        assert!(e.estimate.abs() <= 3.0 * e.stderr);
        let v = mc_variance(&c, 1000, 1).unwrap();
        assert!(v.estimate.abs() <= 3.0 * v.stderr);
    }

    #[test]
    fn step_cost_is_a_quarter() {
        let e = mc_cost(&step(), &mask(2, &[0]), 100_000, 16, 2).unwrap();
        assert!((e.estimate - 0.25).abs() <= 3.0 * e.stderr, "{e:?}");
    }

    #[test]
    fn indicator_cost_and_shapley() {
        let e = mc_cost(&indicator(), &mask(2, &[0]), 100_000, 16, 3).unwrap();
        assert!((e.estimate - 0.0625).abs() <= 3.0 * e.stderr, "{e:?}");
        let budget = McBudget {
            n_outer: 20_000,
            n_inner: 16,
            n_subsets: 64,
        };
        let s = mc_shapley(&indicator(), 0, budget, SubsetRule::CoinFlip, 4).unwrap();
        assert!((s.estimate - 0.09375).abs() <= 3.0 * s.stderr, "{s:?}");
        let s = mc_shapley(&step(), 1, budget, SubsetRule::CoinFlip, 5).unwrap();
        assert!(s.estimate.abs() <= 3.0 * s.stderr + 1e-12, "{s:?}");
    }

    #[test]
    fn bias_correction_removes_inner_noise() {
        // f = x1 + x2 with P = {1}: the naive estimator targets 1/12 + 1/(12 k)
        let f = BlackBox::new(2, |x| x[0] + x[1]);
        let e = mc_cost(&f, &mask(2, &[0]), 200_000, 2, 6).unwrap();
        assert!((e.estimate - 1.0 / 12.0).abs() <= 3.0 * e.stderr, "{e:?}");
    }

    #[test]
    fn reproducible_across_thread_counts() {
        let f = indicator();
        let a = mc_cost(&f, &mask(2, &[1]), 5000, 4, 7).unwrap();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap();
        let b = pool.install(|| mc_cost(&f, &mask(2, &[1]), 5000, 4, 7).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn stderr_halves_when_budget_quadruples() {
        let f = BlackBox::new(3, |x| (6.0 * x[0]).sin() + x[1] * x[2]);
        let ns = [20_000usize, 40_000, 80_000, 160_000, 320_000];
        let pts: Vec<(f64, f64)> = ns
            .iter()
            .map(|&n| ((n as f64).ln(), mc_variance(&f, n, 8).unwrap().stderr.ln()))
            .collect();
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / 5.0;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / 5.0;
        let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
            / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
        assert!((slope + 0.5).abs() <= 0.1, "slope {slope}");
    }

    #[test]
    fn oracle_matches_closed_form_on_forests() {
        let mut rng = seeded(9);
        let mut misses = 0;
        for case in 0..20u64 {
            let f = random_forest(&mut rng, 3, 3, 3);
            let m = SubsetMask::from_bits(3, 1 + case % 7);
            let exact = crate::sensitivity::cost(&f, &m).unwrap();
            let e = mc_cost(&BlackBox::from_forest(f), &m, 20_000, 8, case).unwrap();
            if (e.estimate - exact).abs() > 3.0 * e.stderr {
                misses += 1;
            }
        }
        assert!(misses <= 1, "{misses} misses");
    }

    #[test]
    fn report_matches_indicator_values() {
        let opts = OracleOptions {
            budget: McBudget {
                n_outer: 20_000,
                n_inner: 16,
                n_subsets: 32,
            },
            n_variance: 200_000,
            ..Default::default()
        };
        let r = oracle_report(&indicator(), &opts).unwrap();
        assert_eq!(r.metadata.method, "mc");
        assert!((r.variance.point - 0.1875).abs() < 0.003);
        for row in &r.inputs {
            let width = (row.raw.main.hi - row.raw.main.lo) / 2.0;
            assert!(
                (row.raw.main.point - 0.0625).abs() <= 1.5 * width,
                "{row:?}"
            );
            let width = (row.raw.shapley.hi - row.raw.shapley.lo) / 2.0;
            assert!(
                (row.raw.shapley.point - 0.09375).abs() <= 1.5 * width,
                "{row:?}"
            );
            assert!((row.normalized.shapley.point - 0.5).abs() < 0.05);
        }
        assert!(oracle_report(
            &indicator(),
            &OracleOptions {
                levels: vec![1.5],
                ..opts
            }
        )
        .is_err());
    }

    #[test]
    fn forests_wrap_as_black_boxes() {
        let t = Tree::split(0, 0.5, Tree::leaf(1.0), Tree::leaf(2.0)).unwrap();
        let b = BlackBox::from_forest(Forest::new(1, vec![t]).unwrap());
        assert_eq!(b.eval(&[0.7]), 2.0);
        assert!(mc_cost(&b, &mask(2, &[]), 10, 2, 0).is_err());
        assert!(mc_cost(&b, &mask(1, &[0]), 1, 2, 0).is_err());
    }
}
