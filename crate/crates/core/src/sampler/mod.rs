//! Markov-chain Monte Carlo for the sum-of-trees regression model.
//!
//! Inputs are min-max scaled into the unit cube and the response into a
//! unit-range interval centered at zero. Each sweep updates every tree in
//! turn against its partial residuals with one birth/death move and a
//! conjugate redraw of its leaf values, then redraws the noise variance and,
//! optionally, the Dirichlet split-probability vector.

mod dataset;
mod moves;
mod tree;

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

pub use dataset::{
    make_splitnet, scale_inputs, scale_outputs, Dataset, ScaledInputs, SplitNet, SplitnetMode,
};
pub use moves::{leaf_log_ml, log_marginal_likelihood, simulate_prior, MoveProposal, TreePrior};

use crate::error::{Error, Result};
use crate::forest::{Draw, Forest, PosteriorEnsemble};
use crate::rng::{seeded, StreamRng};
use moves::{propose_move, RuleSpace};
use tree::{GrowTree, Kind, NodeId};

/// Dirichlet prior on the split-probability vector.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Sparsity {
    /// Uniform split probabilities `1/p`, never updated.
    #[default]
    Off,
    /// `s ~ Dirichlet(a/p, ..., a/p)`, redrawn every sweep.
    On { a: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub num_trees: usize,
    pub n_burn: usize,
    pub n_draw: usize,
    pub thin: usize,
    pub alpha_split: f64,
    pub beta_split: f64,
    /// Leaf prior scale: `sigma_mu = 0.5 / (k sqrt(T))`.
    pub k: f64,
    pub nu: f64,
    pub q: f64,
    pub sparsity: Sparsity,
    #[serde(with = "splitnet_serde")]
    pub splitnet: SplitnetMode,
    pub min_leaf_obs: usize,
    pub seed: u64,
    /// Sweeps between spot checks of the fitted-value cache; 0 disables them.
    pub check_every: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            num_trees: 200,
            n_burn: 1000,
            n_draw: 1000,
            thin: 1,
            alpha_split: 0.95,
            beta_split: 2.0,
            k: 2.0,
            nu: 3.0,
            q: 0.9,
            sparsity: Sparsity::Off,
            splitnet: SplitnetMode::default(),
            min_leaf_obs: 1,
            seed: 0,
            check_every: 100,
        }
    }
}

mod splitnet_serde {
    use super::SplitnetMode;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(mode: &SplitnetMode, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&mode.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<SplitnetMode, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

impl std::fmt::Display for SplitnetMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SplitnetMode::UniformGrid(g) => write!(f, "grid:{g}"),
            SplitnetMode::ObservedValues => f.write_str("observed"),
        }
    }
}

impl std::str::FromStr for SplitnetMode {
    type Err = Error;

    /// Accepts `observed`, `grid` or `grid:<count>`.
    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            None if s == "observed" => Ok(SplitnetMode::ObservedValues),
            None if s == "grid" => Ok(SplitnetMode::default()),
            Some(("grid", n)) => n
                .parse()
                .map(SplitnetMode::UniformGrid)
                .map_err(|_| Error::InvalidConfig(format!("bad grid size `{n}`"))),
            _ => Err(Error::Unknown {
                kind: "split-net mode",
                name: s.to_string(),
            }),
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.num_trees == 0 {
            return bad("at least one tree is required".into());
        }
        if self.n_draw == 0 {
            return bad("at least one retained draw is required".into());
        }
        if self.thin == 0 {
            return bad("thinning interval must be positive".into());
        }
        if !(self.alpha_split > 0.0 && self.alpha_split < 1.0) {
            return bad(format!(
                "alpha_split = {} is outside (0, 1)",
                self.alpha_split
            ));
        }
        if !(self.beta_split >= 0.0 && self.beta_split.is_finite()) {
            return bad(format!(
                "beta_split = {} must be nonnegative",
                self.beta_split
            ));
        }
        if !(self.k > 0.0 && self.k.is_finite()) {
            return bad(format!("k = {} must be positive", self.k));
        }
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return bad(format!("nu = {} must be positive", self.nu));
        }
        if !(self.q > 0.0 && self.q < 1.0) {
            return bad(format!("q = {} is outside (0, 1)", self.q));
        }
        if let Sparsity::On { a } = self.sparsity {
            if !(a > 0.0 && a.is_finite()) {
                return bad(format!("Dirichlet concentration {a} must be positive"));
            }
        }
        if self.min_leaf_obs == 0 {
            return bad("min_leaf_obs must be at least 1".into());
        }
        Ok(())
    }

    pub fn tree_prior(&self) -> TreePrior {
        TreePrior {
            alpha: self.alpha_split,
            beta: self.beta_split,
        }
    }

    /// Variance of the normal prior on each leaf value, in scaled units.
    pub fn leaf_prior_var(&self) -> f64 {
        let sd = 0.5 / (self.k * (self.num_trees as f64).sqrt());
        sd * sd
    }
}

/// Scale `lambda` of the `nu lambda / chi2_nu` prior on the noise variance
/// that puts mass `q` below `sigma2_hat`.
pub fn sigma_prior_scale(sigma2_hat: f64, nu: f64, q: f64) -> f64 {
    let chi = ChiSquared::new(nu).expect("nu validated positive");
    sigma2_hat * chi.inverse_cdf(1.0 - q) / nu
}

/// Draws from `Dirichlet(alpha)` through log-gamma variates so very small
/// shape parameters do not underflow to an all-zero vector.
pub fn sample_dirichlet<R: Rng>(alpha: &[f64], rng: &mut R) -> Vec<f64> {
    let logs: Vec<f64> = alpha
        .iter()
        .map(|&a| {
            if a >= 1.0 {
                Gamma::new(a, 1.0).expect("positive shape").sample(rng).ln()
            } else {
                let g = Gamma::new(a + 1.0, 1.0)
                    .expect("positive shape")
                    .sample(rng);
                let u: f64 = 1.0 - rng.random::<f64>();
                g.ln() + u.ln() / a
            }
        })
        .collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

/// Counters for structural moves over the whole run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoveStats {
    pub birth_proposed: u64,
    pub birth_accepted: u64,
    pub death_proposed: u64,
    pub death_accepted: u64,
    pub invalid: u64,
}

impl MoveStats {
    pub fn acceptance_rate(&self) -> f64 {
        let proposed = self.birth_proposed + self.death_proposed;
        if proposed == 0 {
            0.0
        } else {
            (self.birth_accepted + self.death_accepted) as f64 / proposed as f64
        }
    }
}

/// Progress record emitted after each sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SweepProgress {
    pub sweep: usize,
    pub acceptance_rate: f64,
    /// Noise variance in raw response units.
    pub sigma2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FitDiagnostics {
    pub moves: MoveStats,
    pub sweeps: usize,
    /// Split probabilities at the end of the run.
    pub split_probs: Vec<f64>,
    /// Posterior mean of the noise variance in raw units.
    pub sigma2_mean: f64,
}

/// Fixed quantities shared by every sweep.
struct Problem {
    n: usize,
    p: usize,
    columns: Vec<Vec<f64>>,
    y: Vec<f64>,
    net: SplitNet,
    prior: TreePrior,
    tau2: f64,
    nu: f64,
    lambda: f64,
    sparsity: Sparsity,
    min_leaf_obs: usize,
}

/// Current position of the chain.
pub struct ChainState {
    trees: Vec<GrowTree>,
    /// `fits[t][i]`: value of tree `t` at training row `i`.
    fits: Vec<Vec<f64>>,
    /// Sum of `fits` over trees.
    total: Vec<f64>,
    sigma2: f64,
    split_probs: Vec<f64>,
    split_counts: Vec<usize>,
    moves: MoveStats,
}

impl ChainState {
    fn init(problem: &Problem, num_trees: usize, sigma2: f64) -> Self {
        let n = problem.n;
        let mu = crate::stats::mean(&problem.y) / num_trees as f64;
        let all: Vec<u32> = (0..n as u32).collect();
        ChainState {
            trees: (0..num_trees)
                .map(|_| GrowTree::stump(mu, all.clone()))
                .collect(),
            fits: vec![vec![mu; n]; num_trees],
            total: vec![mu * num_trees as f64; n],
            sigma2,
            split_probs: vec![1.0 / problem.p as f64; problem.p],
            split_counts: vec![0; problem.p],
            moves: MoveStats::default(),
        }
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn split_probs(&self) -> &[f64] {
        &self.split_probs
    }

    pub fn split_counts(&self) -> &[usize] {
        &self.split_counts
    }

    pub fn moves(&self) -> MoveStats {
        self.moves
    }

    pub fn forest(&self, p: usize) -> Forest {
        Forest::new(p, self.trees.iter().map(GrowTree::to_tree).collect())
            .expect("chain trees use valid inputs")
    }

    /// Compares the cached fits against fresh tree evaluations and the
    /// running total against the sum of cached fits.
    fn check(&self, problem: &Problem) -> Result<()> {
        for (t, tree) in self.trees.iter().enumerate() {
            for i in 0..problem.n {
                let fresh = tree.evaluate(|d| problem.columns[d][i]);
                if fresh != self.fits[t][i] {
                    return Err(Error::ChainInconsistent(format!(
                        "tree {t} row {i}: cached {} but evaluates to {fresh}",
                        self.fits[t][i]
                    )));
                }
            }
        }
        for i in 0..problem.n {
            let sum: f64 = self.fits.iter().map(|f| f[i]).sum();
            if (sum - self.total[i]).abs() > 1e-9 * (1.0 + sum.abs()) {
                return Err(Error::ChainInconsistent(format!(
                    "row {i}: running total drifted"
                )));
            }
        }
        let s: f64 = self.split_probs.iter().sum();
        if (s - 1.0).abs() > 1e-12 || self.split_probs.iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::ChainInconsistent(
                "split probabilities left the simplex".into(),
            ));
        }
        Ok(())
    }

    fn refresh_total(&mut self) {
        for (i, v) in self.total.iter_mut().enumerate() {
            *v = self.fits.iter().map(|f| f[i]).sum();
        }
    }

    fn sweep(&mut self, problem: &Problem, rng: &mut StreamRng, structural: bool) {
        let mut residual = vec![0.0; problem.n];
        for t in 0..self.trees.len() {
            for (i, r) in residual.iter_mut().enumerate() {
                *r = problem.y[i] - self.total[i] + self.fits[t][i];
            }
            if structural {
                self.structural_step(t, problem, &residual, rng);
            }
            self.redraw_leaves(t, problem, &residual, rng);
        }
        let ssr: f64 = problem
            .y
            .iter()
            .zip(&self.total)
            .map(|(y, f)| (y - f) * (y - f))
            .sum();
        let shape = 0.5 * (problem.nu + problem.n as f64);
        let rate = 0.5 * (problem.nu * problem.lambda + ssr);
        let g: f64 = Gamma::new(shape, 1.0).expect("positive shape").sample(rng);
        self.sigma2 = (rate / g).max(f64::MIN_POSITIVE);
        if let Sparsity::On { a } = problem.sparsity {
            let base = a / problem.p as f64;
            let alpha: Vec<f64> = self.split_counts.iter().map(|&c| base + c as f64).collect();
            self.split_probs = sample_dirichlet(&alpha, rng);
        }
    }

    fn structural_step(
        &mut self,
        t: usize,
        problem: &Problem,
        residual: &[f64],
        rng: &mut StreamRng,
    ) {
        let rules = RuleSpace::new(&problem.net, &self.split_probs);
        let tree = &mut self.trees[t];
        let stats = |obs: &[u32]| {
            obs.iter().fold((0usize, 0.0, 0.0), |(n, s, q), &i| {
                let r = residual[i as usize];
                (n + 1, s + r, q + r * r)
            })
        };
        let lml = |(n, s, q): (usize, f64, f64)| leaf_log_ml(n, s, q, self.sigma2, problem.tau2);
        match propose_move(tree, &rules, &problem.prior, rng) {
            MoveProposal::Birth {
                leaf,
                dim,
                cut,
                log_ratio,
            } => {
                self.moves.birth_proposed += 1;
                let Kind::Leaf { obs, .. } = &tree.node(leaf).kind else {
                    unreachable!("births split leaves")
                };
                let column = &problem.columns[dim];
                let (left, right): (Vec<u32>, Vec<u32>) =
                    obs.iter().copied().partition(|&i| column[i as usize] < cut);
                if left.len() < problem.min_leaf_obs || right.len() < problem.min_leaf_obs {
                    return;
                }
                let log_lik = lml(stats(&left)) + lml(stats(&right)) - lml(stats(obs));
                if rng.random::<f64>().ln() < log_ratio + log_lik {
                    tree.grow(leaf, dim, cut, left, right);
                    self.split_counts[dim] += 1;
                    self.moves.birth_accepted += 1;
                }
            }
            MoveProposal::Death { node, log_ratio } => {
                self.moves.death_proposed += 1;
                let Kind::Internal {
                    dim, left, right, ..
                } = tree.node(node).kind
                else {
                    unreachable!("deaths collapse internal nodes")
                };
                let obs_of = |id: NodeId| match &tree.node(id).kind {
                    Kind::Leaf { obs, .. } => obs,
                    Kind::Internal { .. } => unreachable!("nog children are leaves"),
                };
                let (sl, sr) = (stats(obs_of(left)), stats(obs_of(right)));
                let merged = (sl.0 + sr.0, sl.1 + sr.1, sl.2 + sr.2);
                let log_lik = lml(merged) - lml(sl) - lml(sr);
                if rng.random::<f64>().ln() < log_ratio + log_lik {
                    tree.prune(node);
                    self.split_counts[dim as usize] -= 1;
                    self.moves.death_accepted += 1;
                }
            }
            MoveProposal::Invalid => self.moves.invalid += 1,
        }
    }

    fn redraw_leaves(
        &mut self,
        t: usize,
        problem: &Problem,
        residual: &[f64],
        rng: &mut StreamRng,
    ) {
        let sigma2 = self.sigma2;
        let tau2 = problem.tau2;
        let fits = &mut self.fits[t];
        let total = &mut self.total;
        let tree = &mut self.trees[t];
        for leaf in tree.leaves() {
            let Kind::Leaf { mu, obs } = &mut tree.node_mut(leaf).kind else {
                unreachable!("leaves() yields leaves")
            };
            let n = obs.len() as f64;
            let s: f64 = obs.iter().map(|&i| residual[i as usize]).sum();
            let denom = sigma2 + n * tau2;
            let z: f64 = StandardNormal.sample(rng);
            *mu = tau2 * s / denom + (sigma2 * tau2 / denom).sqrt() * z;
            for &i in obs.iter() {
                let i = i as usize;
                total[i] += *mu - fits[i];
                fits[i] = *mu;
            }
        }
    }
}

/// Everything fixed by a dataset and a configuration.
struct Setup {
    problem: Problem,
    x_maps: Vec<crate::forest::AffineMap>,
    y_map: crate::forest::AffineMap,
    sigma2_hat: f64,
}

fn setup(data: &Dataset, config: &SamplerConfig) -> Result<Setup> {
    config.validate()?;
    let inputs = scale_inputs(data);
    let (y, y_map) = scale_outputs(data.y())?;
    let net = make_splitnet(&inputs, config.splitnet)?;
    let sigma2_hat = crate::stats::sample_variance(&y);
    let lambda = sigma_prior_scale(sigma2_hat, config.nu, config.q);
    let problem = Problem {
        n: data.n(),
        p: data.p(),
        columns: inputs.columns,
        y,
        net,
        prior: config.tree_prior(),
        tau2: config.leaf_prior_var(),
        nu: config.nu,
        lambda,
        sparsity: config.sparsity,
        min_leaf_obs: config.min_leaf_obs,
    };
    Ok(Setup {
        problem,
        x_maps: inputs.maps,
        y_map,
        sigma2_hat,
    })
}

/// Runs the chain and returns the retained posterior draws.
pub fn fit(data: &Dataset, config: &SamplerConfig) -> Result<PosteriorEnsemble> {
    fit_with_progress(data, config, |_| {}).map(|(e, _)| e)
}

/// Like [`fit`], calling `progress` after every sweep and returning run
/// diagnostics alongside the ensemble.
pub fn fit_with_progress(
    data: &Dataset,
    config: &SamplerConfig,
    mut progress: impl FnMut(&SweepProgress),
) -> Result<(PosteriorEnsemble, FitDiagnostics)> {
    let Setup {
        problem,
        x_maps,
        y_map,
        sigma2_hat,
    } = setup(data, config)?;
    let mut rng = seeded(config.seed);
    let mut state = ChainState::init(&problem, config.num_trees, sigma2_hat);
    let total_sweeps = config.n_burn + config.n_draw * config.thin;
    let raw = y_map.scale * y_map.scale;
    let mut draws = Vec::with_capacity(config.n_draw);
    for sweep in 1..=total_sweeps {
        state.sweep(&problem, &mut rng, true);
        if sweep % 50 == 0 {
            state.refresh_total();
        }
        if config.check_every > 0 && sweep % config.check_every == 0 {
            state.check(&problem)?;
        }
        if sweep > config.n_burn && (sweep - config.n_burn).is_multiple_of(config.thin) {
            draws.push(Draw {
                forest: state.forest(problem.p),
                sigma2: state.sigma2,
            });
        }
        progress(&SweepProgress {
            sweep,
            acceptance_rate: state.moves.acceptance_rate(),
            sigma2: state.sigma2 * raw,
        });
    }
    let sigma2_mean = raw * draws.iter().map(|d| d.sigma2).sum::<f64>() / draws.len() as f64;
    let diagnostics = FitDiagnostics {
        moves: state.moves,
        sweeps: total_sweeps,
        split_probs: state.split_probs.clone(),
        sigma2_mean,
    };
    Ok((
        PosteriorEnsemble::new(problem.p, draws, x_maps, y_map)?,
        diagnostics,
    ))
}
