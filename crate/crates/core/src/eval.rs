//! Evaluation harness: credible-interval coverage against simulation
//! truth, posterior-predictive evaluation of held-out deaths, and the
//! joint-versus-independent comparison protocol.
//!
//! Coverage of a family of scalar parameters is the fraction of central
//! credible intervals (rank-based, boundary inclusive) containing the true
//! value. Held-out deaths are scored by simulating deaths per posterior
//! draw and comparing observed counts against predictive interval bounds,
//! plus MAD/MSE of the predictive medians.

use ndarray::Array4;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

use crate::data::{CellIndex, MortalityDataset};
use crate::error::{Error, Result};
use crate::model::{constrain, ModelSpec, PosteriorTarget, Variant};
use crate::rng::SplitMix64;
use crate::sampler::{sample, Diagnostics, PosteriorSamples, SamplerConfig};
use crate::simgen::SimTruth;
use crate::stats;

/// Nominal coverage levels reported everywhere.
pub const COVERAGE_LEVELS: [f64; 3] = [0.80, 0.90, 0.95];

/// Quantile levels reported for predictive death distributions; the outer
/// pairs bound the 95/90/80% central intervals.
pub const PREDICTIVE_QUANTILES: [f64; 7] = [0.025, 0.05, 0.1, 0.5, 0.9, 0.95, 0.975];

/// Predictive samples are topped up so each cell has at least this many
/// simulated death counts even when the posterior has few draws.
const MIN_PREDICTIVE_SAMPLES: usize = 2000;

const PREDICT_TAG: u64 = 0x5052_4544_0000_0000;

/// One coverage measurement.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CoverageRow {
    pub family: String,
    pub level: f64,
    pub covered: usize,
    pub total: usize,
}

impl CoverageRow {
    pub fn coverage(&self) -> f64 {
        if self.total == 0 {
            f64::NAN
        } else {
            self.covered as f64 / self.total as f64
        }
    }
}

/// Evaluation results for one fitted variant.
#[derive(Debug, Clone, serde::Serialize)]
pub struct EvalReport {
    pub variant: String,
    pub rows: Vec<CoverageRow>,
    pub mad: Option<f64>,
    pub mse: Option<f64>,
    pub n_holdout_cells: usize,
}

/// Fraction of `truths` inside their closed interval [lower, upper].
pub fn interval_coverage(truths: &[f64], lowers: &[f64], uppers: &[f64]) -> Result<f64> {
    if truths.len() != lowers.len() || truths.len() != uppers.len() {
        return Err(Error::Argument(format!(
            "length mismatch: {} truths, {} lowers, {} uppers",
            truths.len(),
            lowers.len(),
            uppers.len()
        )));
    }
    if truths.is_empty() {
        return Err(Error::Argument("empty coverage input".into()));
    }
    if lowers.iter().zip(uppers).any(|(l, u)| l > u) {
        return Err(Error::Argument("interval with lower > upper".into()));
    }
    let covered = truths
        .iter()
        .zip(lowers.iter().zip(uppers))
        .filter(|&(&t, (&l, &u))| l <= t && t <= u)
        .count();
    Ok(covered as f64 / truths.len() as f64)
}

/// Per-draw correlation entries of one family (coefficients when
/// `beta_family`, overdispersion otherwise), indexed
/// `[component-or-age][year][pair]` with pairs walking the strict lower
/// triangle row-major; each entry holds the pooled draw values.
pub fn correlation_entry_draws(
    samples: &PosteriorSamples,
    spec: &ModelSpec,
    beta_family: bool,
) -> Result<Vec<Vec<f64>>> {
    if spec.variant == Variant::Independent {
        return Err(Error::Argument(
            "independent variant has no correlation parameters to evaluate".into(),
        ));
    }
    let layout = spec.layout();
    let s = spec.n_subpop;
    let n_pairs = layout.n_pairs();
    let rows = if beta_family { spec.p } else { spec.n_age };
    let n_entries = rows * spec.n_year * n_pairs;
    let mut out = vec![Vec::with_capacity(samples.total_draws()); n_entries];
    let mut l = vec![0.0; s * s];
    let mut z = vec![0.0; n_pairs];
    let mut err = None;
    samples.for_each_draw(|_, _, v| {
        if err.is_some() {
            return;
        }
        if v.len() != layout.n_params() {
            err = Some(Error::Argument("draw length does not match model".into()));
            return;
        }
        for r in 0..rows {
            for tc in 0..spec.n_corr_years() {
                let base = if beta_family {
                    layout.l_beta(r, tc, 0)
                } else {
                    layout.l_gamma(r, tc, 0)
                };
                crate::model::chol_corr_forward(&v[base..base + n_pairs], s, &mut l, &mut z);
                for t in 0..spec.n_year {
                    if spec.corr_year(t) != tc {
                        continue;
                    }
                    let mut k = 0;
                    for s1 in 1..s {
                        for s2 in 0..s1 {
                            let entry: f64 = (0..=s2).map(|q| l[s1 * s + q] * l[s2 * s + q]).sum();
                            out[(r * spec.n_year + t) * n_pairs + k].push(entry);
                            k += 1;
                        }
                    }
                }
            }
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    Ok(out)
}

/// Entrywise coverage of the coefficient correlation matrices against
/// simulation truth at one nominal level.
///
/// Model component 0 is scored against the baseline-curve regime matrices
/// and component 1 against the hump-curve matrices, matching the standard
/// two-curve simulation basis.
pub fn correlation_coverage(
    samples: &PosteriorSamples,
    spec: &ModelSpec,
    truth: &SimTruth,
    level: f64,
) -> Result<f64> {
    if spec.p > 2 {
        return Err(Error::Argument(format!(
            "simulation truth defines 2 curve roles; model has P = {}",
            spec.p
        )));
    }
    let draws = correlation_entry_draws(samples, spec, true)?;
    let s = spec.n_subpop;
    let n_pairs = s * (s - 1) / 2;
    let mut truths = Vec::new();
    let mut lowers = Vec::new();
    let mut uppers = Vec::new();
    for i in 0..spec.p {
        let role = if i == 0 {
            &truth.baseline_corr
        } else {
            &truth.hump_corr
        };
        for t in 0..spec.n_year {
            let mut k = 0;
            for s1 in 1..s {
                for s2 in 0..s1 {
                    truths.push(role[t][(s1, s2)]);
                    let (lo, hi) =
                        stats::central_interval(&draws[(i * spec.n_year + t) * n_pairs + k], level);
                    lowers.push(lo);
                    uppers.push(hi);
                    k += 1;
                }
            }
        }
    }
    interval_coverage(&truths, &lowers, &uppers)
}

/// Coverage of the log-mortality-rate surface against simulation truth at
/// each requested level, via a single counting pass over draws.
pub fn log_rate_coverage(
    samples: &PosteriorSamples,
    spec: &ModelSpec,
    truth: &Array4<f64>,
    levels: &[f64],
) -> Result<Vec<CoverageRow>> {
    let dims = (spec.n_age, spec.n_subpop, spec.n_area, spec.n_year);
    if truth.dim() != dims {
        return Err(Error::Argument(format!(
            "truth shape {:?} does not match model {dims:?}",
            truth.dim()
        )));
    }
    let n_cells = spec.n_age * spec.n_subpop * spec.n_area * spec.n_year;
    let mut count_below = vec![0u32; n_cells];
    let mut count_leq = vec![0u32; n_cells];
    let truth_flat: Vec<f64> = truth.iter().copied().collect();
    let mut err = None;
    samples.for_each_draw(|_, _, v| {
        if err.is_some() {
            return;
        }
        match constrain(spec, v) {
            Ok((params, _)) => {
                for (i, (&lr, &tr)) in params.log_rates.iter().zip(&truth_flat).enumerate() {
                    if lr < tr {
                        count_below[i] += 1;
                        count_leq[i] += 1;
                    } else if lr == tr {
                        count_leq[i] += 1;
                    }
                }
            }
            Err(e) => err = Some(e),
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    let n = samples.total_draws();
    Ok(levels
        .iter()
        .map(|&level| {
            let (lo, hi) = stats::central_interval_ranks(n, level);
            let covered = (0..n_cells)
                .filter(|&i| count_leq[i] >= lo as u32 && count_below[i] <= (hi - 1) as u32)
                .count();
            CoverageRow {
                family: "log_rates".into(),
                level,
                covered,
                total: n_cells,
            }
        })
        .collect())
}

/// Predictive summary of one held-out cell.
#[derive(Debug, Clone, serde::Serialize)]
pub struct PredictiveCell {
    pub cell: CellIndex,
    pub population: f64,
    /// (level, value) pairs at [`PREDICTIVE_QUANTILES`].
    pub quantiles: Vec<(f64, f64)>,
    pub median: f64,
    /// Population was zero: the predictive distribution is a point mass at
    /// zero deaths.
    pub zero_population: bool,
}

impl PredictiveCell {
    /// Central predictive interval at one of the supported levels.
    pub fn interval(&self, level: f64) -> Option<(f64, f64)> {
        let alpha = 1.0 - level;
        let lo = self
            .quantiles
            .iter()
            .find(|(p, _)| (p - alpha / 2.0).abs() < 1e-9)?;
        let hi = self
            .quantiles
            .iter()
            .find(|(p, _)| (p - (1.0 - alpha / 2.0)).abs() < 1e-9)?;
        Some((lo.1, hi.1))
    }
}

/// Rank-based quantile of sorted integer samples: the ⌈n·p⌉-th smallest.
fn discrete_quantile(sorted: &[u64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = ((n as f64 * p).ceil() as usize).clamp(1, n);
    sorted[rank - 1] as f64
}

/// Simulates the posterior predictive distribution of deaths for each test
/// cell and reports quantiles and medians.
///
/// Per posterior draw, deaths ~ Poisson(population·exp(log rate)); with
/// fewer than `MIN_PREDICTIVE_SAMPLES` draws, each draw contributes
/// proportionally more simulated counts so degenerate posteriors still
/// yield full Poisson intervals. Within a cell the per-draw means are
/// sorted and each sorted slot gets its own keyed RNG stream, so results
/// are exactly invariant to draw order.
pub fn holdout_predict(
    samples: &PosteriorSamples,
    spec: &ModelSpec,
    test_cells: &[CellIndex],
    population: &Array4<f64>,
    seed: u64,
) -> Result<Vec<PredictiveCell>> {
    let dims = (spec.n_age, spec.n_subpop, spec.n_area, spec.n_year);
    if population.dim() != dims {
        return Err(Error::Argument(format!(
            "population shape {:?} does not match model {dims:?}",
            population.dim()
        )));
    }
    for cell in test_cells {
        if cell.age >= spec.n_age
            || cell.subpop >= spec.n_subpop
            || cell.area >= spec.n_area
            || cell.year >= spec.n_year
        {
            return Err(Error::Argument(format!("test cell {cell} out of range")));
        }
    }
    let n_draws = samples.total_draws();
    if n_draws == 0 {
        return Err(Error::Argument("no posterior draws".into()));
    }
    let reps = MIN_PREDICTIVE_SAMPLES.div_ceil(n_draws).max(1);

    // log rate per (draw, cell), draw-major
    let n_cells = test_cells.len();
    let mut log_rates = vec![0.0f64; n_draws * n_cells];
    {
        let mut err = None;
        let mut row = 0usize;
        samples.for_each_draw(|_, _, v| {
            if err.is_some() {
                return;
            }
            match constrain(spec, v) {
                Ok((params, _)) => {
                    for (k, cell) in test_cells.iter().enumerate() {
                        log_rates[row * n_cells + k] =
                            params.log_rates[(cell.age, cell.subpop, cell.area, cell.year)];
                    }
                    row += 1;
                }
                Err(e) => err = Some(e),
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
    }

    let results: Vec<PredictiveCell> = test_cells
        .par_iter()
        .enumerate()
        .map(|(k, cell)| {
            let pop = population[(cell.age, cell.subpop, cell.area, cell.year)];
            if pop == 0.0 {
                return PredictiveCell {
                    cell: *cell,
                    population: pop,
                    quantiles: PREDICTIVE_QUANTILES.iter().map(|&p| (p, 0.0)).collect(),
                    median: 0.0,
                    zero_population: true,
                };
            }
            let mut means: Vec<f64> = (0..n_draws)
                .map(|row| pop * log_rates[row * n_cells + k].exp())
                .collect();
            means.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
            let mut sims: Vec<u64> = Vec::with_capacity(n_draws * reps);
            for (slot, &mean) in means.iter().enumerate() {
                let mut rng = SplitMix64::keyed(seed ^ PREDICT_TAG, cell_tag(cell), slot as u64);
                if mean > 0.0 {
                    let pois = Poisson::new(mean).expect("positive finite mean");
                    for _ in 0..reps {
                        sims.push(pois.sample(&mut rng) as u64);
                    }
                } else {
                    sims.extend(std::iter::repeat_n(0u64, reps));
                }
            }
            sims.sort_unstable();
            let quantiles = PREDICTIVE_QUANTILES
                .iter()
                .map(|&p| (p, discrete_quantile(&sims, p)))
                .collect();
            let median = discrete_quantile(&sims, 0.5);
            PredictiveCell {
                cell: *cell,
                population: pop,
                quantiles,
                median,
                zero_population: false,
            }
        })
        .collect();
    Ok(results)
}

fn cell_tag(cell: &CellIndex) -> u64 {
    ((cell.age as u64) << 48)
        | ((cell.subpop as u64) << 32)
        | ((cell.area as u64) << 16)
        | cell.year as u64
}

/// Mean absolute deviation and mean squared error.
pub fn error_metrics(observed: &[f64], predicted_medians: &[f64]) -> Result<(f64, f64)> {
    if observed.is_empty() || observed.len() != predicted_medians.len() {
        return Err(Error::Argument(format!(
            "need matching nonempty vectors, got {} and {}",
            observed.len(),
            predicted_medians.len()
        )));
    }
    let mut mad = 0.0;
    let mut mse = 0.0;
    for (&o, &p) in observed.iter().zip(predicted_medians) {
        mad += (o - p).abs();
        mse += (o - p) * (o - p);
    }
    let n = observed.len() as f64;
    Ok((mad / n, mse / n))
}

/// Builds the holdout EvalReport for one fitted variant: death-interval
/// coverage at the standard levels plus MAD/MSE of predictive medians
/// against the observed deaths in `full_data`.
pub fn holdout_report(
    samples: &PosteriorSamples,
    spec: &ModelSpec,
    test_cells: &[CellIndex],
    full_data: &MortalityDataset,
    seed: u64,
) -> Result<EvalReport> {
    let predictions = holdout_predict(samples, spec, test_cells, &full_data.population, seed)?;
    let observed: Vec<f64> = test_cells
        .iter()
        .map(|c| full_data.deaths[(c.age, c.subpop, c.area, c.year)] as f64)
        .collect();
    let medians: Vec<f64> = predictions.iter().map(|p| p.median).collect();
    let (mad, mse) = error_metrics(&observed, &medians)?;
    let rows = COVERAGE_LEVELS
        .iter()
        .map(|&level| {
            let covered = predictions
                .iter()
                .zip(&observed)
                .filter(|(p, &y)| {
                    let (lo, hi) = p.interval(level).expect("standard level");
                    lo <= y && y <= hi
                })
                .count();
            CoverageRow {
                family: "holdout_deaths".into(),
                level,
                covered,
                total: predictions.len(),
            }
        })
        .collect();
    Ok(EvalReport {
        variant: spec.variant.to_string(),
        rows,
        mad: Some(mad),
        mse: Some(mse),
        n_holdout_cells: test_cells.len(),
    })
}

/// Simulation-study report: correlation coverage (joint variant) and
/// log-rate coverage against truth at the standard levels.
pub fn simulation_report(
    samples: &PosteriorSamples,
    spec: &ModelSpec,
    truth: &SimTruth,
) -> Result<EvalReport> {
    let mut rows = Vec::new();
    if spec.variant == Variant::Joint {
        let s = spec.n_subpop;
        let n_entries = spec.p * spec.n_year * s * (s - 1) / 2;
        for &level in &COVERAGE_LEVELS {
            let cov = correlation_coverage(samples, spec, truth, level)?;
            rows.push(CoverageRow {
                family: "correlations".into(),
                level,
                covered: (cov * n_entries as f64).round() as usize,
                total: n_entries,
            });
        }
    }
    rows.extend(log_rate_coverage(
        samples,
        spec,
        &truth.log_rates,
        &COVERAGE_LEVELS,
    )?);
    Ok(EvalReport {
        variant: spec.variant.to_string(),
        rows,
        mad: None,
        mse: None,
        n_holdout_cells: 0,
    })
}

/// Output of one joint-versus-independent comparison.
#[derive(Debug, Clone)]
pub struct VariantComparison {
    pub joint: EvalReport,
    pub independent: EvalReport,
    pub joint_diagnostics: Diagnostics,
    pub independent_diagnostics: Diagnostics,
    pub test_cells: Vec<CellIndex>,
}

/// Fits both variants on an identical train split (same sampler seeds) and
/// evaluates them on the identical held-out cells.
pub fn compare_variants(
    data: &MortalityDataset,
    spec_joint: &ModelSpec,
    spec_indep: &ModelSpec,
    cfg: &SamplerConfig,
    holdout_fraction: f64,
    holdout_seed: u64,
) -> Result<VariantComparison> {
    if spec_joint.variant != Variant::Joint || spec_indep.variant != Variant::Independent {
        return Err(Error::Argument(
            "compare_variants needs one joint and one independent spec".into(),
        ));
    }
    let (train, test_cells) = data.holdout_split(holdout_fraction, holdout_seed)?;
    let run = |spec: &ModelSpec| -> Result<(EvalReport, Diagnostics)> {
        let target = PosteriorTarget::new(spec, &train)?;
        let (samples, diag) = sample(&target, cfg)?;
        let report = holdout_report(&samples, spec, &test_cells, data, cfg.seed)?;
        Ok((report, diag))
    };
    let (joint, joint_diagnostics) = run(spec_joint)?;
    let (independent, independent_diagnostics) = run(spec_indep)?;
    Ok(VariantComparison {
        joint,
        independent,
        joint_diagnostics,
        independent_diagnostics,
        test_cells,
    })
}
