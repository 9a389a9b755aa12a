//! The hierarchical mortality model: Poisson counts with log-rates built
//! from principal-component regression, correlated county deviations and
//! overdispersion across subpopulations, and second-order random-walk
//! smoothing of the area-group-level mean coefficients over time.
//!
//! Parameters live in a single flat unconstrained vector (see
//! [`ParamLayout`] for the exact ordering). County deviations and
//! overdispersion are non-centered: the vector holds standard-normal
//! innovations which are scaled by `sigma * L` where `L` is a correlation
//! Cholesky factor, so the sampler sees well-conditioned geometry even for
//! areas with little data.

mod posterior;
mod transforms;

pub use posterior::{embed_independent_vector, log_posterior, log_posterior_grad, PosteriorTarget};
pub use transforms::{
    chol_corr_backward, chol_corr_forward, half_normal_with_exp_jacobian, lkj_chol_logdensity,
    log_normal_with_exp_jacobian,
};

use ndarray::{Array2, Array3, Array4};
use serde::{Deserialize, Serialize};

use crate::data::MortalityDataset;
use crate::error::{Error, Result};

/// Whether subpopulation correlation matrices are estimated or pinned to
/// the identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Cross-subpopulation correlations estimated with LKJ priors.
    Joint,
    /// All correlation matrices fixed to identity; no correlation
    /// parameters appear in the vector.
    Independent,
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Variant::Joint => write!(f, "joint"),
            Variant::Independent => write!(f, "independent"),
        }
    }
}

/// Prior hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    /// Half-normal scale of the county-deviation scales sigma_beta.
    pub sigma_beta_scale: f64,
    /// Log-normal location of the smoothing scale sigma_mu.
    pub sigma_mu_meanlog: f64,
    /// Log-normal scale of the smoothing scale sigma_mu.
    pub sigma_mu_sdlog: f64,
    /// Half-normal scale of the per-age overdispersion scales sigma_a.
    pub sigma_gamma_scale: f64,
    /// LKJ shape for all correlation Cholesky factors; 1 is uniform.
    pub lkj_eta: f64,
    /// Standard deviation of the independent normal priors on the first two
    /// years of each mean-coefficient series.
    pub rw2_init_sd: f64,
}

impl Default for Hyper {
    fn default() -> Self {
        Self {
            sigma_beta_scale: 1.0,
            sigma_mu_meanlog: -1.5,
            sigma_mu_sdlog: 0.5,
            sigma_gamma_scale: 0.25,
            lkj_eta: 1.0,
            rw2_init_sd: 5.0,
        }
    }
}

/// Model structure: dimensions, basis curves, variant, and priors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSpec {
    /// Config schema version for serialized specs.
    pub version: u32,
    /// Number of basis components used (first `p` rows of `basis`).
    pub p: usize,
    pub n_age: usize,
    pub n_subpop: usize,
    pub n_area: usize,
    pub n_year: usize,
    /// Component curves over age, one row per component (P×A). Rows need
    /// not be unit-norm; simulation fits pass raw standard curves here.
    pub basis: Array2<f64>,
    pub variant: Variant,
    pub hyper: Hyper,
    /// Pool correlation matrices across years instead of estimating one per
    /// year.
    pub share_correlations_over_time: bool,
    /// When false, an observed cell with zero population is an error
    /// instead of being treated as unobserved.
    pub skip_zero_population: bool,
}

/// Version tag written into serialized [`ModelSpec`] configs.
pub const MODEL_SPEC_VERSION: u32 = 1;

impl ModelSpec {
    pub fn new(
        p: usize,
        dims: (usize, usize, usize, usize),
        basis: Array2<f64>,
        variant: Variant,
        hyper: Hyper,
    ) -> Result<Self> {
        let (n_age, n_subpop, n_area, n_year) = dims;
        if p < 1 || p > basis.nrows() {
            return Err(Error::Argument(format!(
                "p = {p} must be in 1..={} (rows available in basis)",
                basis.nrows()
            )));
        }
        if basis.ncols() != n_age {
            return Err(Error::Argument(format!(
                "basis has {} age columns, model expects {n_age}",
                basis.ncols()
            )));
        }
        if n_subpop < 1 || n_area < 1 || n_year < 1 {
            return Err(Error::Argument("all dimensions must be at least 1".into()));
        }
        for (name, v) in [
            ("sigma_beta_scale", hyper.sigma_beta_scale),
            ("sigma_mu_sdlog", hyper.sigma_mu_sdlog),
            ("sigma_gamma_scale", hyper.sigma_gamma_scale),
            ("lkj_eta", hyper.lkj_eta),
            ("rw2_init_sd", hyper.rw2_init_sd),
        ] {
            if v <= 0.0 || v.is_nan() {
                return Err(Error::Argument(format!(
                    "hyper {name} must be > 0, got {v}"
                )));
            }
        }
        Ok(Self {
            version: MODEL_SPEC_VERSION,
            p,
            n_age,
            n_subpop,
            n_area,
            n_year,
            basis,
            variant,
            hyper,
            share_correlations_over_time: false,
            skip_zero_population: true,
        })
    }

    pub fn dims(&self) -> (usize, usize, usize, usize) {
        (self.n_age, self.n_subpop, self.n_area, self.n_year)
    }

    /// Number of distinct correlation-matrix year slots.
    pub fn n_corr_years(&self) -> usize {
        if self.share_correlations_over_time {
            1
        } else {
            self.n_year
        }
    }

    /// Maps a data year to its correlation-matrix slot.
    #[inline]
    pub fn corr_year(&self, t: usize) -> usize {
        if self.share_correlations_over_time {
            0
        } else {
            t
        }
    }

    pub fn layout(&self) -> ParamLayout {
        ParamLayout::of(self)
    }

    pub fn validate_against(&self, data: &MortalityDataset) -> Result<()> {
        let got = data.dims();
        let want = self.dims();
        if got != want {
            return Err(Error::Argument(format!(
                "dataset dimensions {got:?} do not match model {want:?}"
            )));
        }
        if !self.skip_zero_population {
            for ((a, s, c, t), &m) in data.mask.indexed_iter() {
                if m && data.population[(a, s, c, t)] == 0.0 {
                    return Err(Error::Integrity(format!(
                        "observed cell (age={a}, subpop={s}, area={c}, year={t}) has zero population"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ModelSpec = serde_json::from_str(text)?;
        if spec.version != MODEL_SPEC_VERSION {
            return Err(Error::Argument(format!(
                "unsupported model spec version {} (this build reads {MODEL_SPEC_VERSION})",
                spec.version
            )));
        }
        Ok(spec)
    }
}

/// Flat layout of the unconstrained parameter vector.
///
/// Order, with the last index fastest within each block:
///
/// 1. `z_omega[i][s][c][t]` — county-deviation innovations (P·S·C·T)
/// 2. `mu_beta[i][s][t]` — mean coefficients (P·S·T)
/// 3. `log_sigma_beta[i][t]` — deviation scales (P·T)
/// 4. `log_sigma_mu[i]` — smoothing scales (P)
/// 5. `l_beta[i][tc][k]` — coefficient correlation factors, joint only
///    (P·TC·S(S−1)/2)
/// 6. `z_gamma[a][s][c][t]` — overdispersion innovations (A·S·C·T)
/// 7. `log_sigma_a[a]` — overdispersion scales (A)
/// 8. `l_gamma[a][tc][k]` — overdispersion correlation factors, joint only
///    (A·TC·S(S−1)/2)
///
/// `k` walks the strict lower triangle row-major: (1,0), (2,0), (2,1), …
/// `TC` is 1 when correlations are shared over time, else T.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamLayout {
    pub p: usize,
    pub n_age: usize,
    pub n_subpop: usize,
    pub n_area: usize,
    pub n_year: usize,
    pub n_corr_year: usize,
    pub joint: bool,
    off_mu_beta: usize,
    off_log_sigma_beta: usize,
    off_log_sigma_mu: usize,
    off_l_beta: usize,
    off_z_gamma: usize,
    off_log_sigma_a: usize,
    off_l_gamma: usize,
    n_params: usize,
}

impl ParamLayout {
    pub fn of(spec: &ModelSpec) -> Self {
        let (a, s, c, t) = spec.dims();
        let p = spec.p;
        let tc = spec.n_corr_years();
        let joint = spec.variant == Variant::Joint;
        let m = s * (s - 1) / 2;
        let off_mu_beta = p * s * c * t;
        let off_log_sigma_beta = off_mu_beta + p * s * t;
        let off_log_sigma_mu = off_log_sigma_beta + p * t;
        let off_l_beta = off_log_sigma_mu + p;
        let off_z_gamma = off_l_beta + if joint { p * tc * m } else { 0 };
        let off_log_sigma_a = off_z_gamma + a * s * c * t;
        let off_l_gamma = off_log_sigma_a + a;
        let n_params = off_l_gamma + if joint { a * tc * m } else { 0 };
        Self {
            p,
            n_age: a,
            n_subpop: s,
            n_area: c,
            n_year: t,
            n_corr_year: tc,
            joint,
            off_mu_beta,
            off_log_sigma_beta,
            off_log_sigma_mu,
            off_l_beta,
            off_z_gamma,
            off_log_sigma_a,
            off_l_gamma,
            n_params,
        }
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    /// Strict-lower-triangle entry count per correlation matrix.
    pub fn n_pairs(&self) -> usize {
        self.n_subpop * (self.n_subpop - 1) / 2
    }

    #[inline]
    pub fn z_omega(&self, i: usize, s: usize, c: usize, t: usize) -> usize {
        ((i * self.n_subpop + s) * self.n_area + c) * self.n_year + t
    }

    #[inline]
    pub fn mu_beta(&self, i: usize, s: usize, t: usize) -> usize {
        self.off_mu_beta + (i * self.n_subpop + s) * self.n_year + t
    }

    #[inline]
    pub fn log_sigma_beta(&self, i: usize, t: usize) -> usize {
        self.off_log_sigma_beta + i * self.n_year + t
    }

    #[inline]
    pub fn log_sigma_mu(&self, i: usize) -> usize {
        self.off_log_sigma_mu + i
    }

    /// Joint variant only.
    #[inline]
    pub fn l_beta(&self, i: usize, tc: usize, k: usize) -> usize {
        self.off_l_beta + (i * self.n_corr_year + tc) * self.n_pairs() + k
    }

    #[inline]
    pub fn z_gamma(&self, a: usize, s: usize, c: usize, t: usize) -> usize {
        self.off_z_gamma + ((a * self.n_subpop + s) * self.n_area + c) * self.n_year + t
    }

    #[inline]
    pub fn log_sigma_a(&self, a: usize) -> usize {
        self.off_log_sigma_a + a
    }

    /// Joint variant only.
    #[inline]
    pub fn l_gamma(&self, a: usize, tc: usize, k: usize) -> usize {
        self.off_l_gamma + (a * self.n_corr_year + tc) * self.n_pairs() + k
    }

    /// Human-readable name of one coordinate, for diagnostics output.
    pub fn name(&self, idx: usize) -> String {
        let (s, c, t, tc, m) = (
            self.n_subpop,
            self.n_area,
            self.n_year,
            self.n_corr_year,
            self.n_pairs(),
        );
        let pair_name = |k: usize| -> (usize, usize) {
            let mut k = k;
            for r in 1..s {
                if k < r {
                    return (r, k);
                }
                k -= r;
            }
            unreachable!("pair index out of range")
        };
        if idx < self.off_mu_beta {
            let t_i = idx % t;
            let c_i = (idx / t) % c;
            let s_i = (idx / (t * c)) % s;
            let i = idx / (t * c * s);
            return format!("z_omega[{i},{s_i},{c_i},{t_i}]");
        }
        if idx < self.off_log_sigma_beta {
            let r = idx - self.off_mu_beta;
            let t_i = r % t;
            let s_i = (r / t) % s;
            let i = r / (t * s);
            return format!("mu_beta[{i},{s_i},{t_i}]");
        }
        if idx < self.off_log_sigma_mu {
            let r = idx - self.off_log_sigma_beta;
            return format!("log_sigma_beta[{},{}]", r / t, r % t);
        }
        if idx < self.off_l_beta {
            return format!("log_sigma_mu[{}]", idx - self.off_log_sigma_mu);
        }
        if idx < self.off_z_gamma {
            let r = idx - self.off_l_beta;
            let k = r % m;
            let tc_i = (r / m) % tc;
            let i = r / (m * tc);
            let (row, col) = pair_name(k);
            return format!("l_beta[{i},{tc_i},({row},{col})]");
        }
        if idx < self.off_log_sigma_a {
            let r = idx - self.off_z_gamma;
            let t_i = r % t;
            let c_i = (r / t) % c;
            let s_i = (r / (t * c)) % s;
            let a = r / (t * c * s);
            return format!("z_gamma[{a},{s_i},{c_i},{t_i}]");
        }
        if idx < self.off_l_gamma {
            return format!("log_sigma_a[{}]", idx - self.off_log_sigma_a);
        }
        let r = idx - self.off_l_gamma;
        let k = r % m;
        let tc_i = (r / m) % tc;
        let a = r / (m * tc);
        let (row, col) = pair_name(k);
        format!("l_gamma[{a},{tc_i},({row},{col})]")
    }
}

/// Constrained parameters reconstructed from one unconstrained vector.
#[derive(Debug, Clone)]
pub struct ConstrainedParams {
    /// P×S×C×T coefficients.
    pub beta: Array4<f64>,
    /// P×S×T mean coefficients.
    pub mu_beta: Array3<f64>,
    /// P×T deviation scales.
    pub sigma_beta: Array2<f64>,
    /// Length-P smoothing scales.
    pub sigma_mu: Vec<f64>,
    /// Correlation Cholesky factors for coefficients, indexed `[i][tc]`,
    /// stored as S×S lower-triangular matrices.
    pub chol_beta: Vec<Array2<f64>>,
    /// A×S×C×T overdispersion.
    pub gamma: Array4<f64>,
    /// Length-A overdispersion scales.
    pub sigma_a: Vec<f64>,
    /// Correlation Cholesky factors for overdispersion, indexed `[a][tc]`.
    pub chol_gamma: Vec<Array2<f64>>,
    /// A×S×C×T log mortality rates.
    pub log_rates: Array4<f64>,
    n_corr_year: usize,
}

impl ConstrainedParams {
    /// Correlation matrix R = LLᵀ for coefficient component `i`, year `t`.
    pub fn corr_beta(&self, i: usize, tc: usize) -> Array2<f64> {
        corr_from_chol(&self.chol_beta[i * self.n_corr_year + tc])
    }

    /// Correlation matrix for overdispersion at age `a`, year `t`.
    pub fn corr_gamma(&self, a: usize, tc: usize) -> Array2<f64> {
        corr_from_chol(&self.chol_gamma[a * self.n_corr_year + tc])
    }

    /// Lower-triangle correlation entry without materializing R.
    pub fn corr_beta_entry(&self, i: usize, tc: usize, row: usize, col: usize) -> f64 {
        corr_entry(&self.chol_beta[i * self.n_corr_year + tc], row, col)
    }

    pub fn corr_gamma_entry(&self, a: usize, tc: usize, row: usize, col: usize) -> f64 {
        corr_entry(&self.chol_gamma[a * self.n_corr_year + tc], row, col)
    }
}

fn corr_from_chol(l: &Array2<f64>) -> Array2<f64> {
    let s = l.nrows();
    let mut r = Array2::zeros((s, s));
    for i in 0..s {
        for j in 0..s {
            let mut acc = 0.0;
            for k in 0..=i.min(j) {
                acc += l[(i, k)] * l[(j, k)];
            }
            r[(i, j)] = acc;
        }
    }
    r
}

fn corr_entry(l: &Array2<f64>, row: usize, col: usize) -> f64 {
    let mut acc = 0.0;
    for k in 0..=row.min(col) {
        acc += l[(row, k)] * l[(col, k)];
    }
    acc
}

/// The log-rate surface: `log λ[a,s,c,t] = Σ_i β[i,s,c,t]·Y[i,a] + γ[a,s,c,t]`.
pub fn log_rates(basis: &Array2<f64>, beta: &Array4<f64>, gamma: &Array4<f64>) -> Array4<f64> {
    let (p, _, _, _) = beta.dim();
    let (n_age, n_subpop, n_area, n_year) = gamma.dim();
    let mut out = Array4::zeros((n_age, n_subpop, n_area, n_year));
    for a in 0..n_age {
        for s in 0..n_subpop {
            for c in 0..n_area {
                for t in 0..n_year {
                    let mut acc = 0.0;
                    for i in 0..p {
                        acc += beta[(i, s, c, t)] * basis[(i, a)];
                    }
                    out[(a, s, c, t)] = acc + gamma[(a, s, c, t)];
                }
            }
        }
    }
    out
}

/// A named scalar derived from one draw, addressable from summaries and
/// the CLI.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Quantity {
    LogRate {
        age: usize,
        subpop: usize,
        area: usize,
        year: usize,
    },
    MuBeta {
        component: usize,
        subpop: usize,
        year: usize,
    },
    CorrBeta {
        component: usize,
        year: usize,
        s1: usize,
        s2: usize,
    },
    CorrGamma {
        age: usize,
        year: usize,
        s1: usize,
        s2: usize,
    },
    SigmaBeta {
        component: usize,
        year: usize,
    },
    SigmaMu {
        component: usize,
    },
    SigmaA {
        age: usize,
    },
}

impl std::fmt::Display for Quantity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Quantity::LogRate {
                age,
                subpop,
                area,
                year,
            } => {
                write!(f, "log_rate[{age},{subpop},{area},{year}]")
            }
            Quantity::MuBeta {
                component,
                subpop,
                year,
            } => {
                write!(f, "mu_beta[{component},{subpop},{year}]")
            }
            Quantity::CorrBeta {
                component,
                year,
                s1,
                s2,
            } => {
                write!(f, "corr_beta[{component},{year},{s1},{s2}]")
            }
            Quantity::CorrGamma { age, year, s1, s2 } => {
                write!(f, "corr_gamma[{age},{year},{s1},{s2}]")
            }
            Quantity::SigmaBeta { component, year } => write!(f, "sigma_beta[{component},{year}]"),
            Quantity::SigmaMu { component } => write!(f, "sigma_mu[{component}]"),
            Quantity::SigmaA { age } => write!(f, "sigma_a[{age}]"),
        }
    }
}

impl std::str::FromStr for Quantity {
    type Err = Error;

    /// Parses `name[i,j,...]` forms, e.g. `log_rate[3,0,12,5]` or
    /// `sigma_mu[1]`.
    fn from_str(text: &str) -> Result<Self> {
        let text = text.trim();
        let (name, rest) = text
            .split_once('[')
            .ok_or_else(|| Error::Argument(format!("quantity {text:?} missing index block")))?;
        let inner = rest
            .strip_suffix(']')
            .ok_or_else(|| Error::Argument(format!("quantity {text:?} missing closing bracket")))?;
        let idx: Vec<usize> = inner
            .split(',')
            .map(|tok| {
                tok.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Argument(format!("bad index {tok:?} in quantity {text:?}")))
            })
            .collect::<Result<_>>()?;
        let want = |n: usize| -> Result<()> {
            if idx.len() == n {
                Ok(())
            } else {
                Err(Error::Argument(format!(
                    "quantity {name} takes {n} indices, got {}",
                    idx.len()
                )))
            }
        };
        match name.trim() {
            "log_rate" => {
                want(4)?;
                Ok(Quantity::LogRate {
                    age: idx[0],
                    subpop: idx[1],
                    area: idx[2],
                    year: idx[3],
                })
            }
            "mu_beta" => {
                want(3)?;
                Ok(Quantity::MuBeta {
                    component: idx[0],
                    subpop: idx[1],
                    year: idx[2],
                })
            }
            "corr_beta" => {
                want(4)?;
                Ok(Quantity::CorrBeta {
                    component: idx[0],
                    year: idx[1],
                    s1: idx[2],
                    s2: idx[3],
                })
            }
            "corr_gamma" => {
                want(4)?;
                Ok(Quantity::CorrGamma {
                    age: idx[0],
                    year: idx[1],
                    s1: idx[2],
                    s2: idx[3],
                })
            }
            "sigma_beta" => {
                want(2)?;
                Ok(Quantity::SigmaBeta {
                    component: idx[0],
                    year: idx[1],
                })
            }
            "sigma_mu" => {
                want(1)?;
                Ok(Quantity::SigmaMu { component: idx[0] })
            }
            "sigma_a" => {
                want(1)?;
                Ok(Quantity::SigmaA { age: idx[0] })
            }
            other => Err(Error::Argument(format!("unknown quantity {other:?}"))),
        }
    }
}

/// Builds one correlation Cholesky factor straight from the raw entries of
/// an unconstrained vector. Identity for the independent variant.
fn factor_from_raw(
    spec: &ModelSpec,
    layout: &ParamLayout,
    v: &[f64],
    beta_family: bool,
    row_idx: usize,
    tc: usize,
) -> Vec<f64> {
    let s = spec.n_subpop;
    let mut l = vec![0.0; s * s];
    if layout.joint {
        let base = if beta_family {
            layout.l_beta(row_idx, tc, 0)
        } else {
            layout.l_gamma(row_idx, tc, 0)
        };
        let mut z = vec![0.0; layout.n_pairs()];
        chol_corr_forward(&v[base..base + layout.n_pairs()], s, &mut l, &mut z);
    } else {
        for d in 0..s {
            l[d * s + d] = 1.0;
        }
    }
    l
}

/// Evaluates one [`Quantity`] from an unconstrained draw without building
/// the full constrained parameter set.
pub fn extract_quantity(spec: &ModelSpec, v: &[f64], q: &Quantity) -> Result<f64> {
    let layout = spec.layout();
    if v.len() != layout.n_params() {
        return Err(Error::Argument(format!(
            "parameter vector has length {}, layout implies {}",
            v.len(),
            layout.n_params()
        )));
    }
    let (n_age, n_sub, n_area, n_year) = spec.dims();
    let check = |name: &str, val: usize, bound: usize| -> Result<()> {
        if val < bound {
            Ok(())
        } else {
            Err(Error::Argument(format!(
                "{name} index {val} out of range (< {bound})"
            )))
        }
    };
    let corr_entry = |l: &[f64], s1: usize, s2: usize| -> f64 {
        (0..=s1.min(s2))
            .map(|k| l[s1 * n_sub + k] * l[s2 * n_sub + k])
            .sum()
    };
    match *q {
        Quantity::LogRate {
            age,
            subpop,
            area,
            year,
        } => {
            check("age", age, n_age)?;
            check("subpop", subpop, n_sub)?;
            check("area", area, n_area)?;
            check("year", year, n_year)?;
            let mut acc = 0.0;
            for i in 0..spec.p {
                let sb = v[layout.log_sigma_beta(i, year)].exp();
                let l = factor_from_raw(spec, &layout, v, true, i, spec.corr_year(year));
                let mut w = 0.0;
                for j in 0..=subpop {
                    w += l[subpop * n_sub + j] * v[layout.z_omega(i, j, area, year)];
                }
                let beta = v[layout.mu_beta(i, subpop, year)] + sb * w;
                acc += beta * spec.basis[(i, age)];
            }
            let sa = v[layout.log_sigma_a(age)].exp();
            let l = factor_from_raw(spec, &layout, v, false, age, spec.corr_year(year));
            let mut w = 0.0;
            for j in 0..=subpop {
                w += l[subpop * n_sub + j] * v[layout.z_gamma(age, j, area, year)];
            }
            Ok(acc + sa * w)
        }
        Quantity::MuBeta {
            component,
            subpop,
            year,
        } => {
            check("component", component, spec.p)?;
            check("subpop", subpop, n_sub)?;
            check("year", year, n_year)?;
            Ok(v[layout.mu_beta(component, subpop, year)])
        }
        Quantity::CorrBeta {
            component,
            year,
            s1,
            s2,
        } => {
            if spec.variant == Variant::Independent {
                return Err(Error::Argument(
                    "independent variant has no correlation parameters".into(),
                ));
            }
            check("component", component, spec.p)?;
            check("year", year, n_year)?;
            check("subpop", s1, n_sub)?;
            check("subpop", s2, n_sub)?;
            let l = factor_from_raw(spec, &layout, v, true, component, spec.corr_year(year));
            Ok(corr_entry(&l, s1, s2))
        }
        Quantity::CorrGamma { age, year, s1, s2 } => {
            if spec.variant == Variant::Independent {
                return Err(Error::Argument(
                    "independent variant has no correlation parameters".into(),
                ));
            }
            check("age", age, n_age)?;
            check("year", year, n_year)?;
            check("subpop", s1, n_sub)?;
            check("subpop", s2, n_sub)?;
            let l = factor_from_raw(spec, &layout, v, false, age, spec.corr_year(year));
            Ok(corr_entry(&l, s1, s2))
        }
        Quantity::SigmaBeta { component, year } => {
            check("component", component, spec.p)?;
            check("year", year, n_year)?;
            Ok(v[layout.log_sigma_beta(component, year)].exp())
        }
        Quantity::SigmaMu { component } => {
            check("component", component, spec.p)?;
            Ok(v[layout.log_sigma_mu(component)].exp())
        }
        Quantity::SigmaA { age } => {
            check("age", age, n_age)?;
            Ok(v[layout.log_sigma_a(age)].exp())
        }
    }
}

/// Maps an unconstrained vector to constrained parameters, returning the
/// accumulated log-Jacobian of all transforms. Total on ℝⁿ.
pub fn constrain(spec: &ModelSpec, v: &[f64]) -> Result<(ConstrainedParams, f64)> {
    let layout = spec.layout();
    if v.len() != layout.n_params() {
        return Err(Error::Argument(format!(
            "parameter vector has length {}, layout implies {}",
            v.len(),
            layout.n_params()
        )));
    }
    let (n_age, n_subpop, n_area, n_year) = spec.dims();
    let p = spec.p;
    let tc_count = spec.n_corr_years();
    let mut log_jacobian = 0.0;

    let mut sigma_beta = Array2::zeros((p, n_year));
    for i in 0..p {
        for t in 0..n_year {
            let u = v[layout.log_sigma_beta(i, t)];
            sigma_beta[(i, t)] = u.exp();
            log_jacobian += u;
        }
    }
    let mut sigma_mu = vec![0.0; p];
    for (i, sm) in sigma_mu.iter_mut().enumerate() {
        let u = v[layout.log_sigma_mu(i)];
        *sm = u.exp();
        log_jacobian += u;
    }
    let mut sigma_a = vec![0.0; n_age];
    for (a, sa) in sigma_a.iter_mut().enumerate() {
        let u = v[layout.log_sigma_a(a)];
        *sa = u.exp();
        log_jacobian += u;
    }

    let mut l_buf = vec![0.0; n_subpop * n_subpop];
    let mut z_buf = vec![0.0; layout.n_pairs()];
    let mut build_factor = |raw: &[f64], log_jacobian: &mut f64| -> Array2<f64> {
        *log_jacobian += chol_corr_forward(raw, n_subpop, &mut l_buf, &mut z_buf);
        Array2::from_shape_fn((n_subpop, n_subpop), |(r, c)| l_buf[r * n_subpop + c])
    };
    let mut chol_beta = Vec::with_capacity(p * tc_count);
    for i in 0..p {
        for tc in 0..tc_count {
            if layout.joint {
                let base = layout.l_beta(i, tc, 0);
                chol_beta.push(build_factor(
                    &v[base..base + layout.n_pairs()],
                    &mut log_jacobian,
                ));
            } else {
                chol_beta.push(Array2::eye(n_subpop));
            }
        }
    }
    let mut chol_gamma = Vec::with_capacity(n_age * tc_count);
    for a in 0..n_age {
        for tc in 0..tc_count {
            if layout.joint {
                let base = layout.l_gamma(a, tc, 0);
                chol_gamma.push(build_factor(
                    &v[base..base + layout.n_pairs()],
                    &mut log_jacobian,
                ));
            } else {
                chol_gamma.push(Array2::eye(n_subpop));
            }
        }
    }

    let mut mu_beta = Array3::zeros((p, n_subpop, n_year));
    for i in 0..p {
        for s in 0..n_subpop {
            for t in 0..n_year {
                mu_beta[(i, s, t)] = v[layout.mu_beta(i, s, t)];
            }
        }
    }

    let mut beta = Array4::zeros((p, n_subpop, n_area, n_year));
    for i in 0..p {
        for c in 0..n_area {
            for t in 0..n_year {
                let l = &chol_beta[i * tc_count + spec.corr_year(t)];
                let sb = sigma_beta[(i, t)];
                for s in 0..n_subpop {
                    let mut w = 0.0;
                    for j in 0..=s {
                        w += l[(s, j)] * v[layout.z_omega(i, j, c, t)];
                    }
                    beta[(i, s, c, t)] = mu_beta[(i, s, t)] + sb * w;
                }
            }
        }
    }

    let mut gamma = Array4::zeros((n_age, n_subpop, n_area, n_year));
    for a in 0..n_age {
        for c in 0..n_area {
            for t in 0..n_year {
                let l = &chol_gamma[a * tc_count + spec.corr_year(t)];
                let sa = sigma_a[a];
                for s in 0..n_subpop {
                    let mut w = 0.0;
                    for j in 0..=s {
                        w += l[(s, j)] * v[layout.z_gamma(a, j, c, t)];
                    }
                    gamma[(a, s, c, t)] = sa * w;
                }
            }
        }
    }

    let log_rates = log_rates(&spec.basis, &beta, &gamma);

    Ok((
        ConstrainedParams {
            beta,
            mu_beta,
            sigma_beta,
            sigma_mu,
            chol_beta,
            gamma,
            sigma_a,
            chol_gamma,
            log_rates,
            n_corr_year: tc_count,
        },
        log_jacobian,
    ))
}
