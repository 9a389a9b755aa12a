//! Synthetic population and mortality data with known ground truth.
//!
//! Populations grow deterministically from area-indexed baselines and are
//! split over a built-in age distribution (jittered) and fixed subgroup
//! shares. True log-mortality curves are linear combinations of two
//! standard curves — a J-shaped baseline and a young-adult accident hump —
//! with coefficients drawn from multivariate normals whose correlation
//! regime changes over the years. Deaths are Poisson given population and
//! rate. Everything is seed-deterministic.

use std::collections::BTreeMap;

use ndarray::{Array2, Array3, Array4};
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{AgeGrid, MortalityDataset};
use crate::error::{Error, Result};
use crate::rng;

const POP_TAG: u64 = 0x504f_5000_0000_0000;
const COEF_TAG: u64 = 0x434f_4546_0000_0000;
const DEATH_TAG: u64 = 0x4445_4154_0000_0000;

/// Cross-subgroup correlation regime of one simulated year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Regime {
    Independent,
    Exchangeable { rho: f64 },
    Unstructured { name: String },
}

/// The fixed 5×5 correlation matrix shipped as `unstructured(default)`:
/// heterogeneous off-diagonals between 0.1 and 0.8, verified positive
/// definite by the test suite.
pub const DEFAULT_UNSTRUCTURED: [[f64; 5]; 5] = [
    [1.00, 0.80, 0.30, 0.50, 0.20],
    [0.80, 1.00, 0.40, 0.60, 0.25],
    [0.30, 0.40, 1.00, 0.70, 0.15],
    [0.50, 0.60, 0.70, 1.00, 0.35],
    [0.20, 0.25, 0.15, 0.35, 1.00],
];

/// Built-in age shares over the 19 standard groups, heavy toward working
/// ages; sums to exactly 1.
pub const DEFAULT_AGE_SHARES: [f64; 19] = [
    0.013, 0.052, 0.066, 0.067, 0.071, 0.078, 0.086, 0.082, 0.075, 0.071, 0.067, 0.061, 0.052,
    0.042, 0.033, 0.026, 0.021, 0.017, 0.020,
];

/// Simulation configuration. Defaults reproduce the standard study layout:
/// 25 areas, 10 years, 5 subgroups, regimes independent → exchangeable →
/// unstructured over the year thirds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub areas: usize,
    pub years: usize,
    pub subgroups: usize,
    pub base_pop_unit: f64,
    pub growth: f64,
    /// Subgroup shares, summing to 1.
    pub shares: Vec<f64>,
    pub baseline_coef_mean: f64,
    pub baseline_coef_sd: f64,
    pub hump_coef_mean: f64,
    pub hump_coef_sd: f64,
    /// Log-normal sd of the multiplicative age-share jitter.
    pub age_jitter_sd: f64,
    /// One regime per year.
    pub regime_schedule: Vec<Regime>,
    /// Named unstructured correlation matrices; "default" is always
    /// available.
    pub unstructured: BTreeMap<String, Vec<Vec<f64>>>,
    pub seed: u64,
}

impl SimConfig {
    /// Standard configuration at the given shape.
    pub fn with_defaults(areas: usize, years: usize, subgroups: usize, seed: u64) -> Self {
        Self {
            areas,
            years,
            subgroups,
            base_pop_unit: 100_000.0,
            growth: 0.01,
            shares: default_shares(subgroups),
            baseline_coef_mean: 1.0,
            baseline_coef_sd: 0.1,
            hump_coef_mean: 0.0,
            hump_coef_sd: 0.5,
            age_jitter_sd: 0.05,
            regime_schedule: default_schedule(years),
            unstructured: default_unstructured_map(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.areas < 1 || self.years < 1 || self.subgroups < 1 {
            return Err(Error::Argument("areas/years/subgroups must be ≥ 1".into()));
        }
        if self.shares.len() != self.subgroups {
            return Err(Error::Argument(format!(
                "{} shares for {} subgroups",
                self.shares.len(),
                self.subgroups
            )));
        }
        if self.shares.iter().any(|&s| s <= 0.0) {
            return Err(Error::Argument("subgroup shares must be positive".into()));
        }
        let total: f64 = self.shares.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Argument(format!("shares sum to {total}, need 1")));
        }
        for (name, v) in [
            ("baseline_coef_sd", self.baseline_coef_sd),
            ("hump_coef_sd", self.hump_coef_sd),
        ] {
            if v <= 0.0 || v.is_nan() {
                return Err(Error::Argument(format!("{name} must be > 0")));
            }
        }
        if self.age_jitter_sd < 0.0 {
            return Err(Error::Argument("age_jitter_sd must be ≥ 0".into()));
        }
        if self.regime_schedule.len() != self.years {
            return Err(Error::Argument(format!(
                "regime schedule covers {} years, config has {}",
                self.regime_schedule.len(),
                self.years
            )));
        }
        for t in 0..self.years {
            self.regime_matrix(t)?;
        }
        Ok(())
    }

    /// The correlation matrix in force in year `t`.
    pub fn regime_matrix(&self, t: usize) -> Result<Array2<f64>> {
        let s = self.subgroups;
        match &self.regime_schedule[t] {
            Regime::Independent => Ok(Array2::eye(s)),
            Regime::Exchangeable { rho } => {
                if !(*rho > -1.0 / (s as f64 - 1.0).max(1.0) && *rho < 1.0) {
                    return Err(Error::Argument(format!(
                        "exchangeable rho {rho} invalid for {s} subgroups"
                    )));
                }
                Ok(Array2::from_shape_fn((s, s), |(i, j)| {
                    if i == j {
                        1.0
                    } else {
                        *rho
                    }
                }))
            }
            Regime::Unstructured { name } => {
                let m = self.unstructured.get(name).ok_or_else(|| {
                    Error::Argument(format!("unknown unstructured correlation matrix {name:?}"))
                })?;
                if m.len() < s || m.iter().take(s).any(|row| row.len() < s) {
                    return Err(Error::Argument(format!(
                        "unstructured matrix {name:?} smaller than {s}×{s}"
                    )));
                }
                // leading principal submatrix of a PSD matrix stays PSD
                let mat = Array2::from_shape_fn((s, s), |(i, j)| m[i][j]);
                cholesky(&mat).ok_or_else(|| {
                    Error::Argument(format!(
                        "unstructured matrix {name:?} is not positive definite"
                    ))
                })?;
                Ok(mat)
            }
        }
    }
}

/// Shares for the first `s` subgroups: the standard [0.5, 0.2, 0.1, 0.1,
/// 0.1] pattern truncated or 0.1-extended, renormalized to sum to 1 with
/// the first share absorbing the rounding remainder.
pub fn default_shares(s: usize) -> Vec<f64> {
    const BASE: [f64; 5] = [0.5, 0.2, 0.1, 0.1, 0.1];
    let raw: Vec<f64> = (0..s)
        .map(|i| BASE.get(i).copied().unwrap_or(0.1))
        .collect();
    let total: f64 = raw.iter().sum();
    if (total - 1.0).abs() < 1e-12 {
        return raw;
    }
    let mut shares: Vec<f64> = raw.iter().map(|x| x / total).collect();
    let tail: f64 = shares.iter().skip(1).sum();
    shares[0] = 1.0 - tail;
    shares
}

/// Default year → regime map: the first ~30% of years independent, the
/// next ~30% exchangeable(0.5), the rest unstructured(default). With 10
/// years this is 1-3 / 4-6 / 7-10.
pub fn default_schedule(years: usize) -> Vec<Regime> {
    let third = ((years as f64) * 0.3).ceil() as usize;
    (0..years)
        .map(|t| {
            if t < third {
                Regime::Independent
            } else if t < 2 * third {
                Regime::Exchangeable { rho: 0.5 }
            } else {
                Regime::Unstructured {
                    name: "default".into(),
                }
            }
        })
        .collect()
}

fn default_unstructured_map() -> BTreeMap<String, Vec<Vec<f64>>> {
    let mut m = BTreeMap::new();
    m.insert(
        "default".to_string(),
        DEFAULT_UNSTRUCTURED.iter().map(|r| r.to_vec()).collect(),
    );
    m
}

/// The two standard curves the generator combines.
#[derive(Debug, Clone)]
pub struct StandardCurves {
    pub age_grid: AgeGrid,
    /// J-shaped baseline log-mortality over age.
    pub baseline: Vec<f64>,
    /// Nonnegative accident hump over age, peaking in young adulthood.
    pub hump: Vec<f64>,
}

impl StandardCurves {
    /// The frozen built-in curves on the 19-group grid:
    /// baseline(x) = ln(5e-5·e^(0.085x) + 2e-3·e^(−x/2)),
    /// hump(x) = 0.6·e^(−((x−22)/6)²), at age-group midpoints x.
    pub fn builtin() -> Self {
        let age_grid = AgeGrid::default19();
        let mid = age_grid.midpoints();
        let baseline = mid
            .iter()
            .map(|&x| (5e-5 * (0.085 * x).exp() + 2e-3 * (-x / 2.0).exp()).ln())
            .collect();
        let hump = mid
            .iter()
            .map(|&x| 0.6 * (-((x - 22.0) / 6.0).powi(2)).exp())
            .collect();
        Self {
            age_grid,
            baseline,
            hump,
        }
    }

    /// 2×A basis matrix with the baseline in row 0 and the hump in row 1.
    pub fn basis_matrix(&self) -> Array2<f64> {
        let a = self.age_grid.len();
        Array2::from_shape_fn((2, a), |(i, j)| {
            if i == 0 {
                self.baseline[j]
            } else {
                self.hump[j]
            }
        })
    }
}

/// Ground truth retained from one simulation.
#[derive(Debug, Clone)]
pub struct SimTruth {
    /// A×S×C×T true log-mortality rates.
    pub log_rates: Array4<f64>,
    /// S×C×T baseline-curve coefficients.
    pub baseline_coefs: Array3<f64>,
    /// S×C×T hump-curve coefficients.
    pub hump_coefs: Array3<f64>,
    /// Per-year correlation matrix used for the baseline coefficients.
    pub baseline_corr: Vec<Array2<f64>>,
    /// Per-year correlation matrix used for the hump coefficients.
    pub hump_corr: Vec<Array2<f64>>,
}

/// Populations per (age, subgroup, area, year).
///
/// Area c (1-based index j) starts at `base_pop_unit`·j people in year 1
/// and grows by `growth` annually; totals are split over age by the
/// jittered built-in age distribution and over subgroups by the configured
/// shares (the last subgroup takes the exact remainder so subgroup
/// populations sum to the area-age total bit-exactly).
pub fn make_population(cfg: &SimConfig) -> Result<Array4<f64>> {
    cfg.validate()?;
    let n_age = DEFAULT_AGE_SHARES.len();
    let (s, c_n, t_n) = (cfg.subgroups, cfg.areas, cfg.years);
    let mut pop = Array4::zeros((n_age, s, c_n, t_n));
    for c in 0..c_n {
        for t in 0..t_n {
            let total = cfg.base_pop_unit * (c + 1) as f64 * (1.0 + cfg.growth).powi(t as i32);
            let mut rng = rng::substream(cfg.seed, POP_TAG + (c * t_n + t) as u64);
            let mut shares: Vec<f64> = DEFAULT_AGE_SHARES
                .iter()
                .map(|&base| {
                    let z: f64 = rng.sample(StandardNormal);
                    base * (cfg.age_jitter_sd * z).exp()
                })
                .collect();
            let norm: f64 = shares.iter().sum();
            shares.iter_mut().for_each(|x| *x /= norm);
            for a in 0..n_age {
                let age_total = total * shares[a];
                let mut assigned = 0.0;
                for g in 0..s {
                    let p = if g + 1 == s {
                        age_total - assigned
                    } else {
                        age_total * cfg.shares[g]
                    };
                    assigned += p;
                    pop[(a, g, c, t)] = p;
                }
            }
        }
    }
    Ok(pop)
}

/// True coefficients and log-rate surfaces under the configured regimes.
pub fn make_truth(cfg: &SimConfig, curves: &StandardCurves) -> Result<SimTruth> {
    cfg.validate()?;
    let n_age = curves.age_grid.len();
    let (s, c_n, t_n) = (cfg.subgroups, cfg.areas, cfg.years);
    let mut baseline_coefs = Array3::zeros((s, c_n, t_n));
    let mut hump_coefs = Array3::zeros((s, c_n, t_n));
    let mut baseline_corr = Vec::with_capacity(t_n);
    let mut hump_corr = Vec::with_capacity(t_n);

    for t in 0..t_n {
        let corr = cfg.regime_matrix(t)?;
        let chol = cholesky(&corr).ok_or_else(|| {
            Error::Argument(format!("regime correlation matrix for year {t} not PD"))
        })?;
        let mut rng = rng::substream(cfg.seed, COEF_TAG + t as u64);
        for c in 0..c_n {
            let zb: Vec<f64> = (0..s).map(|_| rng.sample(StandardNormal)).collect();
            let zh: Vec<f64> = (0..s).map(|_| rng.sample(StandardNormal)).collect();
            for g in 0..s {
                let mut wb = 0.0;
                let mut wh = 0.0;
                for j in 0..=g {
                    wb += chol[(g, j)] * zb[j];
                    wh += chol[(g, j)] * zh[j];
                }
                baseline_coefs[(g, c, t)] = cfg.baseline_coef_mean + cfg.baseline_coef_sd * wb;
                hump_coefs[(g, c, t)] = cfg.hump_coef_mean + cfg.hump_coef_sd * wh;
            }
        }
        baseline_corr.push(corr.clone());
        hump_corr.push(corr);
    }

    let mut log_rates = Array4::zeros((n_age, s, c_n, t_n));
    for a in 0..n_age {
        for g in 0..s {
            for c in 0..c_n {
                for t in 0..t_n {
                    let mut acc = 0.0;
                    acc += baseline_coefs[(g, c, t)] * curves.baseline[a];
                    acc += hump_coefs[(g, c, t)] * curves.hump[a];
                    log_rates[(a, g, c, t)] = acc;
                }
            }
        }
    }

    Ok(SimTruth {
        log_rates,
        baseline_coefs,
        hump_coefs,
        baseline_corr,
        hump_corr,
    })
}

/// Poisson death counts for every cell; all cells observed.
pub fn draw_deaths(
    truth: &SimTruth,
    population: &Array4<f64>,
    curves: &StandardCurves,
    seed: u64,
) -> Result<MortalityDataset> {
    let dims = truth.log_rates.dim();
    if population.dim() != dims {
        return Err(Error::Argument(format!(
            "population shape {:?} does not match truth {:?}",
            population.dim(),
            dims
        )));
    }
    let (n_age, s, c_n, t_n) = dims;
    let mut deaths = Array4::zeros(dims);
    let mut rng = rng::substream(seed, DEATH_TAG);
    for a in 0..n_age {
        for g in 0..s {
            for c in 0..c_n {
                for t in 0..t_n {
                    let lr = truth.log_rates[(a, g, c, t)];
                    if lr > 20.0 {
                        return Err(Error::Argument(format!(
                            "log rate {lr} at (age={a}, subgroup={g}, area={c}, year={t}) is \
                             implausibly large; check the curve configuration"
                        )));
                    }
                    let mean = population[(a, g, c, t)] * lr.exp();
                    deaths[(a, g, c, t)] = if mean > 0.0 {
                        let pois = Poisson::new(mean).map_err(|e| {
                            Error::Numeric(format!("poisson mean {mean} rejected: {e}"))
                        })?;
                        pois.sample(&mut rng) as u64
                    } else {
                        0
                    };
                }
            }
        }
    }

    let subpop_names: Vec<String> = (0..s).map(subgroup_name).collect();
    let area_names: Vec<String> = (0..c_n).map(|c| format!("area{:03}", c + 1)).collect();
    let year_labels: Vec<String> = (0..t_n).map(|t| format!("{}", t + 1)).collect();
    MortalityDataset::new(
        curves.age_grid.clone(),
        subpop_names,
        area_names,
        year_labels,
        deaths,
        population.clone(),
        Array4::from_elem(dims, true),
    )
}

/// Subgroup labels A, B, C, … then G26, G27, … past the alphabet.
pub fn subgroup_name(i: usize) -> String {
    if i < 26 {
        char::from(b'A' + i as u8).to_string()
    } else {
        format!("G{i}")
    }
}

/// Lower-triangular Cholesky factor, or None when not positive definite.
fn cholesky(m: &Array2<f64>) -> Option<Array2<f64>> {
    let n = m.nrows();
    let mut l = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut acc = m[(i, j)];
            for k in 0..j {
                acc -= l[(i, k)] * l[(j, k)];
            }
            if i == j {
                if acc <= 0.0 {
                    return None;
                }
                l[(i, i)] = acc.sqrt();
            } else {
                l[(i, j)] = acc / l[(j, j)];
            }
        }
    }
    Some(l)
}
