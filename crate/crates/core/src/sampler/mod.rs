//! Posterior sampling via a self-contained No-U-Turn sampler, with
//! convergence diagnostics and posterior summaries.
//!
//! Chains run in parallel with independent deterministic RNG substreams;
//! results are bit-identical for a given seed regardless of thread
//! scheduling.

mod checkpoint;
mod diagnostics;
mod nuts;

pub use checkpoint::{read_chain, write_chain};
pub use diagnostics::{ess_bulk, split_rhat, split_rhat_rank_normalized};
pub use nuts::{warmup_schedule, DualAverage, NutsChain, WarmupPhase, DIVERGENCE_THRESHOLD};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{extract_quantity, ModelSpec, PosteriorTarget, Quantity};
use crate::rng;
use crate::stats::{self, Welford};

/// Tag namespace for chain RNG substreams.
const CHAIN_TAG_BASE: u64 = 0x4348_4149_4e00_0000;

/// A differentiable log density the sampler can draw from.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;
    /// Log density at `x`; the gradient is written into `grad`.
    fn logp_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;
}

impl LogDensity for PosteriorTarget<'_> {
    fn dim(&self) -> usize {
        self.n_params()
    }

    fn logp_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        PosteriorTarget::logp_grad(self, x, grad)
    }
}

/// Sampler configuration.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SamplerConfig {
    pub chains: usize,
    pub warmup: usize,
    pub samples: usize,
    pub seed: u64,
    pub target_accept: f64,
    pub max_treedepth: u32,
    pub init_jitter: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            chains: 4,
            warmup: 500,
            samples: 2500,
            seed: 0,
            target_accept: 0.9,
            max_treedepth: 10,
            init_jitter: 1.0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.chains < 1 {
            return Err(Error::Argument("chains must be at least 1".into()));
        }
        if self.warmup < 100 {
            return Err(Error::Argument(format!(
                "warmup must be at least 100, got {}",
                self.warmup
            )));
        }
        if self.samples < 1 {
            return Err(Error::Argument("samples must be at least 1".into()));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::Argument(format!(
                "target_accept must be in (0,1), got {}",
                self.target_accept
            )));
        }
        if self.max_treedepth < 1 {
            return Err(Error::Argument("max_treedepth must be at least 1".into()));
        }
        if self.init_jitter < 0.0 {
            return Err(Error::Argument("init_jitter must be nonnegative".into()));
        }
        Ok(())
    }
}

/// All post-warmup output of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainDraws {
    /// `draws[k]` is the unconstrained parameter vector of draw k.
    pub draws: Vec<Vec<f64>>,
    pub accept_stats: Vec<f64>,
    pub energies: Vec<f64>,
    pub tree_depths: Vec<u32>,
    pub divergent: Vec<bool>,
    /// Step size frozen after warm-up.
    pub step_size: f64,
    /// Diagonal inverse mass frozen after warm-up.
    pub inv_mass: Vec<f64>,
}

impl ChainDraws {
    pub fn n_draws(&self) -> usize {
        self.draws.len()
    }

    pub fn n_params(&self) -> usize {
        self.draws.first().map_or(self.inv_mass.len(), Vec::len)
    }

    pub fn n_divergent(&self) -> usize {
        self.divergent.iter().filter(|&&d| d).count()
    }
}

/// Per-chain unconstrained draws with per-draw sampler diagnostics.
#[derive(Debug, Clone)]
pub struct PosteriorSamples {
    chains: Vec<ChainDraws>,
}

impl PosteriorSamples {
    pub fn new(chains: Vec<ChainDraws>) -> Self {
        Self { chains }
    }

    pub fn chains(&self) -> &[ChainDraws] {
        &self.chains
    }

    pub fn n_chains(&self) -> usize {
        self.chains.len()
    }

    pub fn n_draws_per_chain(&self) -> usize {
        self.chains.first().map_or(0, ChainDraws::n_draws)
    }

    pub fn total_draws(&self) -> usize {
        self.chains.iter().map(ChainDraws::n_draws).sum()
    }

    pub fn n_params(&self) -> usize {
        self.chains.first().map_or(0, ChainDraws::n_params)
    }

    /// Per-chain series of one coordinate.
    pub fn scalar_series(&self, param: usize) -> Vec<Vec<f64>> {
        self.chains
            .iter()
            .map(|c| c.draws.iter().map(|d| d[param]).collect())
            .collect()
    }

    /// Visits every draw in chain order.
    pub fn for_each_draw<F: FnMut(usize, usize, &[f64])>(&self, mut f: F) {
        for (ci, chain) in self.chains.iter().enumerate() {
            for (di, draw) in chain.draws.iter().enumerate() {
                f(ci, di, draw);
            }
        }
    }
}

/// Run-level convergence diagnostics.
#[derive(Debug, Clone)]
pub struct Diagnostics {
    /// Rank-normalized split R-hat per unconstrained coordinate; NaN when
    /// only one chain ran.
    pub rhat: Vec<f64>,
    /// Rank-normalized bulk ESS per unconstrained coordinate.
    pub ess: Vec<f64>,
    pub divergences: usize,
    pub total_transitions: usize,
    /// Per-chain energy series.
    pub energy: Vec<Vec<f64>>,
}

impl Diagnostics {
    pub fn max_rhat(&self) -> f64 {
        self.rhat.iter().copied().fold(f64::NAN, f64::max)
    }

    pub fn min_ess(&self) -> f64 {
        self.ess.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn divergence_rate(&self) -> f64 {
        if self.total_transitions == 0 {
            0.0
        } else {
            self.divergences as f64 / self.total_transitions as f64
        }
    }
}

/// Draws posterior samples from `target` and computes diagnostics.
///
/// Chains run concurrently; each is initialized at the origin plus
/// uniform(−init_jitter, init_jitter) noise, adapted per the warm-up
/// schedule, then sampled with frozen tuning.
pub fn sample<T: LogDensity>(
    target: &T,
    cfg: &SamplerConfig,
) -> Result<(PosteriorSamples, Diagnostics)> {
    cfg.validate()?;
    let chain_results: Vec<Result<ChainDraws>> = (0..cfg.chains)
        .into_par_iter()
        .map(|k| run_chain(target, cfg, k as u64))
        .collect();
    let chains: Vec<ChainDraws> = chain_results.into_iter().collect::<Result<_>>()?;
    let samples = PosteriorSamples::new(chains);
    let diagnostics = compute_diagnostics(&samples);
    Ok((samples, diagnostics))
}

fn run_chain<T: LogDensity>(target: &T, cfg: &SamplerConfig, chain_idx: u64) -> Result<ChainDraws> {
    use rand::Rng;

    let dim = target.dim();
    let mut rng = rng::substream(cfg.seed, CHAIN_TAG_BASE + chain_idx);
    let mut grad = vec![0.0; dim];
    let mut init = None;
    for _ in 0..100 {
        let pos: Vec<f64> = (0..dim)
            .map(|_| {
                if cfg.init_jitter > 0.0 {
                    rng.random_range(-cfg.init_jitter..cfg.init_jitter)
                } else {
                    0.0
                }
            })
            .collect();
        let lp = target.logp_grad(&pos, &mut grad);
        if lp.is_finite() && grad.iter().all(|g| g.is_finite()) {
            init = Some(pos);
            break;
        }
    }
    let Some(pos) = init else {
        return Err(Error::Sampler(format!(
            "chain {chain_idx}: log posterior non-finite at 100 random initial points \
             (init_jitter = {}); the model/data combination may be degenerate",
            cfg.init_jitter
        )));
    };

    let mut chain = NutsChain::new(target, pos, rng, cfg);
    chain.step_size = chain.find_reasonable_step_size();
    let mut da = DualAverage::new(cfg.target_accept, chain.step_size);
    let phases = warmup_schedule(cfg.warmup);
    let mut acc: Vec<Welford> = vec![Welford::new(); dim];
    let mut warm_divergences = 0usize;

    for (it, phase) in phases.iter().enumerate() {
        let tr = chain.transition();
        if tr.divergent {
            warm_divergences += 1;
        }
        da.advance(tr.accept_stat);
        chain.step_size = da.current();
        if let WarmupPhase::Window(end) = phase {
            for (w, &x) in acc.iter_mut().zip(chain.position()) {
                w.push(x);
            }
            if it + 1 == *end {
                chain.inv_mass = nuts::regularized_inv_mass(&acc);
                acc = vec![Welford::new(); dim];
                chain.step_size = chain.find_reasonable_step_size();
                da = DualAverage::new(cfg.target_accept, chain.step_size);
            }
        }
    }
    if warm_divergences == cfg.warmup {
        return Err(Error::Sampler(format!(
            "chain {chain_idx}: every warm-up transition diverged; try a smaller init_jitter, \
             a higher target_accept, or check the model scale"
        )));
    }
    chain.step_size = da.averaged();

    let mut draws = Vec::with_capacity(cfg.samples);
    let mut accept_stats = Vec::with_capacity(cfg.samples);
    let mut energies = Vec::with_capacity(cfg.samples);
    let mut tree_depths = Vec::with_capacity(cfg.samples);
    let mut divergent = Vec::with_capacity(cfg.samples);
    for _ in 0..cfg.samples {
        let tr = chain.transition();
        draws.push(chain.position().to_vec());
        accept_stats.push(tr.accept_stat);
        energies.push(tr.energy);
        tree_depths.push(tr.tree_depth);
        divergent.push(tr.divergent);
    }

    Ok(ChainDraws {
        draws,
        accept_stats,
        energies,
        tree_depths,
        divergent,
        step_size: chain.step_size,
        inv_mass: chain.inv_mass,
    })
}

/// Rank-normalized split R-hat and bulk ESS per coordinate, plus divergence
/// counts and energies.
pub fn compute_diagnostics(samples: &PosteriorSamples) -> Diagnostics {
    let n_params = samples.n_params();
    let multi_chain = samples.n_chains() >= 2 && samples.n_draws_per_chain() >= 4;
    let stats_per_param: Vec<(f64, f64)> = (0..n_params)
        .into_par_iter()
        .map(|p| {
            let series = samples.scalar_series(p);
            if multi_chain {
                let rhat = split_rhat_rank_normalized(&series).unwrap_or(f64::NAN);
                let ess = ess_bulk(&series).unwrap_or(f64::NAN);
                (rhat, ess)
            } else if samples.n_draws_per_chain() >= 4 {
                (f64::NAN, diagnostics::ess_bulk_unchecked(&series))
            } else {
                (f64::NAN, f64::NAN)
            }
        })
        .collect();
    let (rhat, ess) = stats_per_param.into_iter().unzip();
    Diagnostics {
        rhat,
        ess,
        divergences: samples.chains().iter().map(ChainDraws::n_divergent).sum(),
        total_transitions: samples.total_draws(),
        energy: samples
            .chains()
            .iter()
            .map(|c| c.energies.clone())
            .collect(),
    }
}

/// Pooled-chain quantile table of one derived quantity.
#[derive(Debug, Clone)]
pub struct QuantileTable {
    pub quantity: String,
    pub probs: Vec<f64>,
    pub values: Vec<f64>,
    pub median: f64,
}

/// Empirical quantiles of a named derived quantity over all pooled draws.
pub fn summarize(
    samples: &PosteriorSamples,
    spec: &ModelSpec,
    quantity: &Quantity,
    probs: &[f64],
) -> Result<QuantileTable> {
    if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::Argument("quantile levels must lie in [0,1]".into()));
    }
    let mut pooled = Vec::with_capacity(samples.total_draws());
    let mut err = None;
    samples.for_each_draw(|_, _, v| {
        if err.is_none() {
            match extract_quantity(spec, v, quantity) {
                Ok(x) => pooled.push(x),
                Err(e) => err = Some(e),
            }
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    if pooled.is_empty() {
        return Err(Error::Argument("no draws to summarize".into()));
    }
    pooled.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let values = probs
        .iter()
        .map(|&p| stats::quantile_sorted(&pooled, p))
        .collect();
    let median = stats::quantile_sorted(&pooled, 0.5);
    Ok(QuantileTable {
        quantity: quantity.to_string(),
        probs: probs.to_vec(),
        values,
        median,
    })
}

#[cfg(test)]
pub(crate) mod test_targets {
    use super::LogDensity;

    /// Isotropic normal in `dim` dimensions.
    pub struct StdNormalTarget {
        pub dim: usize,
    }

    impl LogDensity for StdNormalTarget {
        fn dim(&self) -> usize {
            self.dim
        }

        fn logp_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
            let mut lp = 0.0;
            for (g, &xi) in grad.iter_mut().zip(x) {
                lp -= 0.5 * xi * xi;
                *g = -xi;
            }
            lp
        }
    }
}
