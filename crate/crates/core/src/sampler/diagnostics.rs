//! Convergence diagnostics: split potential scale reduction and bulk
//! effective sample size with rank normalization.

use crate::error::{Error, Result};
use crate::stats;

/// Split R-hat on raw draws: each chain is halved, then the standard
/// between/within variance ratio is taken over the split chains.
///
/// Returns +∞ when the within-chain variance degenerates to zero.
pub fn split_rhat(chains: &[Vec<f64>]) -> Result<f64> {
    check_pre(chains)?;
    Ok(split_rhat_unchecked(chains))
}

/// Rank-normalized bulk effective sample size: pooled draws are replaced by
/// normal scores of their ranks, chains are split, and the ESS follows from
/// the combined autocorrelation with Geyer's initial-monotone truncation.
///
/// Degenerate (constant) series give 0.
pub fn ess_bulk(chains: &[Vec<f64>]) -> Result<f64> {
    check_pre(chains)?;
    Ok(ess_bulk_unchecked(chains))
}

/// Rank-normalized split R-hat, the variant used for run-level diagnostics.
pub fn split_rhat_rank_normalized(chains: &[Vec<f64>]) -> Result<f64> {
    check_pre(chains)?;
    if is_constant(chains) {
        return Ok(f64::INFINITY);
    }
    Ok(split_rhat_unchecked(&rank_normalize(chains)))
}

fn check_pre(chains: &[Vec<f64>]) -> Result<()> {
    if chains.len() < 2 {
        return Err(Error::Argument("need at least 2 chains".into()));
    }
    if chains.iter().any(|c| c.len() < 4) {
        return Err(Error::Argument("need at least 4 draws per chain".into()));
    }
    if chains.iter().any(|c| c.len() != chains[0].len()) {
        return Err(Error::Argument("chains must have equal length".into()));
    }
    Ok(())
}

fn is_constant(chains: &[Vec<f64>]) -> bool {
    let first = chains[0][0];
    chains.iter().all(|c| c.iter().all(|&x| x == first))
}

pub(crate) fn split_rhat_unchecked(chains: &[Vec<f64>]) -> f64 {
    let split = split_chains(chains);
    let m = split.len() as f64;
    let n = split[0].len() as f64;
    let means: Vec<f64> = split.iter().map(|c| stats::mean(c)).collect();
    let grand = stats::mean(&means);
    let b_over_n = means
        .iter()
        .map(|&x| (x - grand) * (x - grand))
        .sum::<f64>()
        / (m - 1.0);
    let w = split
        .iter()
        .zip(&means)
        .map(|(c, &mu)| stats::sample_variance(c, mu))
        .sum::<f64>()
        / m;
    if w <= 0.0 {
        return f64::INFINITY;
    }
    let var_plus = (n - 1.0) / n * w + b_over_n;
    (var_plus / w).sqrt()
}

pub(crate) fn ess_bulk_unchecked(chains: &[Vec<f64>]) -> f64 {
    if is_constant(chains) {
        return 0.0;
    }
    ess_raw(&split_chains(&rank_normalize(chains)))
}

/// ESS of already-prepared (split, transformed) chains via the combined
/// autocorrelation estimator.
fn ess_raw(chains: &[Vec<f64>]) -> f64 {
    let m = chains.len() as f64;
    let n = chains[0].len();
    let nf = n as f64;
    let means: Vec<f64> = chains.iter().map(|c| stats::mean(c)).collect();
    let vars: Vec<f64> = chains
        .iter()
        .zip(&means)
        .map(|(c, &mu)| stats::sample_variance(c, mu))
        .collect();
    let w = stats::mean(&vars);
    if w <= 0.0 {
        return 0.0;
    }
    let grand = stats::mean(&means);
    let b_over_n = if chains.len() > 1 {
        means
            .iter()
            .map(|&x| (x - grand) * (x - grand))
            .sum::<f64>()
            / (m - 1.0)
    } else {
        0.0
    };
    let var_plus = (nf - 1.0) / nf * w + b_over_n;

    // combined autocorrelation, lag by lag
    let mean_acov = |lag: usize| -> f64 {
        let mut acc = 0.0;
        for (c, &mu) in chains.iter().zip(&means) {
            let mut g = 0.0;
            for t in 0..(n - lag) {
                g += (c[t] - mu) * (c[t + lag] - mu);
            }
            acc += g / nf;
        }
        acc / m
    };
    let rho_at = |lag: usize| 1.0 - (w - mean_acov(lag)) / var_plus;

    // Geyer pairs (ρ_{2k}, ρ_{2k+1}) starting from ρ_0 = 1: accumulate while
    // the pair sum stays positive, forcing monotone nonincreasing sums.
    // τ = −1 + 2·Σ pairs. The lag cap trades a little conservatism on
    // pathologically slow chains for per-parameter cost.
    let max_lag = (n - 1).min(1000);
    let mut sum_pairs = 0.0;
    let mut prev_pair = f64::INFINITY;
    let mut lag = 0usize;
    while lag < max_lag {
        let r_even = if lag == 0 { 1.0 } else { rho_at(lag) };
        let r_odd = rho_at(lag + 1);
        let mut pair = r_even + r_odd;
        if pair <= 0.0 {
            break;
        }
        if pair > prev_pair {
            pair = prev_pair;
        }
        prev_pair = pair;
        sum_pairs += pair;
        lag += 2;
    }
    let tau = (-1.0 + 2.0 * sum_pairs).max(1.0 / (m * nf));
    let total = m * nf;
    (total / tau).max(0.0)
}

/// Halves each chain; odd lengths drop the middle element.
fn split_chains(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(chains.len() * 2);
    for c in chains {
        let half = c.len() / 2;
        out.push(c[..half].to_vec());
        out.push(c[c.len() - half..].to_vec());
    }
    out
}

/// Replaces pooled values by normal scores of their average ranks:
/// Φ⁻¹((rank − 3/8) / (N + 1/4)).
pub(crate) fn rank_normalize(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n_per: usize = chains[0].len();
    let total: usize = chains.iter().map(|c| c.len()).sum();
    let mut indexed: Vec<(f64, usize)> = Vec::with_capacity(total);
    for (ci, chain) in chains.iter().enumerate() {
        for (di, &v) in chain.iter().enumerate() {
            indexed.push((v, ci * n_per + di));
        }
    }
    indexed.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    let mut ranks = vec![0.0; total];
    let mut i = 0;
    while i < total {
        let mut j = i;
        while j < total && indexed[j].0 == indexed[i].0 {
            j += 1;
        }
        let avg = (i + j + 1) as f64 / 2.0;
        for k in i..j {
            ranks[indexed[k].1] = avg;
        }
        i = j;
    }
    let nf = total as f64;
    chains
        .iter()
        .enumerate()
        .map(|(ci, chain)| {
            (0..chain.len())
                .map(|di| stats::normal_quantile((ranks[ci * n_per + di] - 0.375) / (nf + 0.25)))
                .collect()
        })
        .collect()
}
