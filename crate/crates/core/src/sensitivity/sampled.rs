//! Random-subset Shapley estimation.
//!
//! Each posterior draw `i` gets `m` subsets of the inputs other than `j`;
//! subset `l` is drawn from its own stream keyed by `(seed, i, j, l)`, so the
//! result does not depend on how work is spread over threads.

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Evaluator;
use crate::error::{Error, Result};
use crate::forest::PosteriorEnsemble;
use crate::rng::stream;

/// How a random coalition of the other inputs is drawn.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubsetRule {
    /// Each other input joins independently with probability 1/2.
    #[default]
    CoinFlip,
    /// A size uniform on `{0, ..., p-1}`, then a uniform subset of that size.
    SizeStratified,
}

impl std::str::FromStr for SubsetRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "coin-flip" | "coin_flip" => Ok(SubsetRule::CoinFlip),
            "size-stratified" | "size_stratified" => Ok(SubsetRule::SizeStratified),
            _ => Err(Error::Unknown {
                kind: "subset rule",
                name: s.to_string(),
            }),
        }
    }
}

impl std::fmt::Display for SubsetRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SubsetRule::CoinFlip => "coin-flip",
            SubsetRule::SizeStratified => "size-stratified",
        })
    }
}

/// Writes a random coalition of inputs other than `j` into `in_p`.
fn draw_subset<R: Rng>(rule: SubsetRule, j: usize, in_p: &mut [bool], rng: &mut R) {
    let p = in_p.len();
    match rule {
        SubsetRule::CoinFlip => {
            for (d, slot) in in_p.iter_mut().enumerate() {
                *slot = d != j && rng.random::<bool>();
            }
        }
        SubsetRule::SizeStratified => {
            in_p.fill(false);
            let size = rng.random_range(0..p);
            for k in sample(rng, p - 1, size) {
                in_p[if k < j { k } else { k + 1 }] = true;
            }
        }
    }
}

/// The `m` per-subset values `c_{P_l + j} - c_{P_l}` for draw index `draw`,
/// unclamped.
pub fn subset_differences(
    ev: &Evaluator,
    j: usize,
    m: usize,
    seed: u64,
    draw: usize,
    rule: SubsetRule,
) -> Vec<f64> {
    let mut in_p = vec![false; ev.p()];
    (0..m)
        .map(|l| {
            let mut rng = stream(seed, &[draw as u64, j as u64, l as u64]);
            draw_subset(rule, j, &mut in_p, &mut rng);
            ev.cost_difference_unchecked(|d| in_p[d], j)
        })
        .collect()
}

/// Sampled Shapley value of input `j` for a single forest: the mean of `m`
/// subset differences, clamped at zero.
pub fn shapley_sampled_forest(
    ev: &Evaluator,
    j: usize,
    m: usize,
    seed: u64,
    draw: usize,
    rule: SubsetRule,
) -> f64 {
    if ev.geometry().leaves_on(j).is_empty() {
        return 0.0;
    }
    let d = subset_differences(ev, j, m, seed, draw, rule);
    (d.iter().sum::<f64>() / m as f64).max(0.0)
}

/// One sampled Shapley value of input `j` per posterior draw, in scaled
/// response units.
pub fn shapley_sampled(
    ensemble: &PosteriorEnsemble,
    j: usize,
    m: usize,
    seed: u64,
    rule: SubsetRule,
) -> Result<Vec<f64>> {
    if j >= ensemble.p() {
        return Err(Error::IndexOutOfRange {
            index: j,
            p: ensemble.p(),
        });
    }
    if m == 0 {
        return Err(Error::InvalidConfig(
            "at least one subset per draw is required".into(),
        ));
    }
    Ok(ensemble
        .draws()
        .par_iter()
        .enumerate()
        .map(|(i, d)| shapley_sampled_forest(&Evaluator::new(&d.forest), j, m, seed, i, rule))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::test_util::random_forest;
    use crate::forest::{AffineMap, Draw, Forest, Tree};
    use crate::rng::seeded;
    use crate::sensitivity::SubsetMask;

    #[test]
    fn coalitions_never_contain_j() {
        let mut rng = seeded(1);
        let mut in_p = vec![false; 7];
        let mut sizes = [0usize; 7];
        for _ in 0..7000 {
            draw_subset(SubsetRule::SizeStratified, 3, &mut in_p, &mut rng);
            assert!(!in_p[3]);
            sizes[in_p.iter().filter(|&&b| b).count()] += 1;
            draw_subset(SubsetRule::CoinFlip, 3, &mut in_p, &mut rng);
            assert!(!in_p[3]);
        }
        assert!(sizes.iter().all(|&c| (800..1200).contains(&c)), "{sizes:?}");
    }

    #[test]
    fn independent_input_gives_zeros() {
        let mut rng = seeded(2);
        let trees = (0..3)
            .map(|_| {
                Tree::split(
                    0,
                    rng.random_range(0.1..0.9),
                    Tree::leaf(rng.random()),
                    Tree::leaf(rng.random()),
                )
                .unwrap()
            })
            .collect();
        let f = Forest::new(3, trees).unwrap();
        let e = PosteriorEnsemble::new(
            3,
            vec![
                Draw {
                    forest: f,
                    sigma2: 1.0
                };
                4
            ],
            vec![AffineMap::IDENTITY; 3],
            AffineMap::IDENTITY,
        )
        .unwrap();
        assert_eq!(
            shapley_sampled(&e, 2, 3, 9, SubsetRule::CoinFlip).unwrap(),
            vec![0.0; 4]
        );
        assert!(shapley_sampled(&e, 3, 1, 9, SubsetRule::CoinFlip).is_err());
        assert!(shapley_sampled(&e, 0, 0, 9, SubsetRule::CoinFlip).is_err());
    }

    #[test]
    fn two_inputs_yield_one_of_two_orderings() {
        let mut rng = seeded(3);
        let f = random_forest(&mut rng, 2, 4, 3);
        let ev = Evaluator::new(&f);
        let first = ev.cost_difference(&SubsetMask::empty(2), 0).unwrap();
        let second = ev
            .cost_difference(&SubsetMask::from_indices(2, &[1]).unwrap(), 0)
            .unwrap();
        for i in 0..50 {
            let v = shapley_sampled_forest(&ev, 0, 1, 4, i, SubsetRule::CoinFlip);
            assert!(v == first.max(0.0) || v == second.max(0.0));
        }
    }

    #[test]
    fn streams_make_results_reproducible() {
        let mut rng = seeded(5);
        let draws = (0..6)
            .map(|_| Draw {
                forest: random_forest(&mut rng, 4, 3, 3),
                sigma2: 0.5,
            })
            .collect();
        let e = PosteriorEnsemble::new(4, draws, vec![AffineMap::IDENTITY; 4], AffineMap::IDENTITY)
            .unwrap();
        let a = shapley_sampled(&e, 1, 3, 77, SubsetRule::CoinFlip).unwrap();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(3)
            .build()
            .unwrap();
        let b = pool.install(|| shapley_sampled(&e, 1, 3, 77, SubsetRule::CoinFlip).unwrap());
        assert_eq!(a, b);
        assert!(a.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn size_stratified_mean_converges_to_shapley() {
        let mut rng = seeded(6);
        let f = random_forest(&mut rng, 5, 5, 3);
        let ev = Evaluator::new(&f);
        let exact = ev.shapley_all();
        for j in 0..5 {
            let d = subset_differences(&ev, j, 20_000, 8, 0, SubsetRule::SizeStratified);
            let m = crate::stats::mean(&d);
            let se = crate::stats::std_error(&d);
            assert!(
                (m - exact[j]).abs() <= 4.0 * se + 1e-12,
                "j = {j}: {m} vs {} (se {se})",
                exact[j]
            );
        }
    }
}
