//! Small numerical routines shared across the crate: normal distribution
//! helpers, the regularized incomplete beta function (for Welch t-test
//! p-values), empirical quantiles, and Welford accumulators.

/// ln(2π)/2, the normalizing constant of the standard normal log-density.
pub const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Log-density of N(mu, sd) at x, including normalizing constants.
#[inline]
pub fn normal_logpdf(x: f64, mu: f64, sd: f64) -> f64 {
    let z = (x - mu) / sd;
    -0.5 * z * z - sd.ln() - HALF_LN_2PI
}

/// Log-density of a half-normal with scale `sd` at x > 0, including constants.
#[inline]
pub fn half_normal_logpdf(x: f64, sd: f64) -> f64 {
    debug_assert!(x >= 0.0);
    let z = x / sd;
    -0.5 * z * z - sd.ln() - HALF_LN_2PI + std::f64::consts::LN_2
}

/// Log-density of LogNormal(meanlog, sdlog) at x > 0, including constants.
#[inline]
pub fn log_normal_logpdf(x: f64, meanlog: f64, sdlog: f64) -> f64 {
    let lx = x.ln();
    let z = (lx - meanlog) / sdlog;
    -0.5 * z * z - lx - sdlog.ln() - HALF_LN_2PI
}

/// Standard normal CDF via Hart's rational approximation (double precision).
pub fn normal_cdf(x: f64) -> f64 {
    const NUM: [f64; 7] = [
        3.52624965998911e-2,
        0.700383064443688,
        6.37396220353165,
        33.912866078383,
        112.079291497871,
        221.213596169931,
        220.206867912376,
    ];
    const DEN: [f64; 8] = [
        8.83883476483184e-2,
        1.75566716318264,
        16.064177579207,
        86.7807322029461,
        296.564248779674,
        637.333633378831,
        793.826512519948,
        440.413735824752,
    ];
    let z = x.abs();
    if z > 37.0 {
        return if x > 0.0 { 1.0 } else { 0.0 };
    }
    let e = (-z * z / 2.0).exp();
    let p = if z < 7.071_067_811_865_475 {
        let n = NUM.iter().fold(0.0, |acc, &c| acc * z + c);
        let d = DEN.iter().fold(0.0, |acc, &c| acc * z + c);
        e * n / d
    } else {
        let b = z + 0.65;
        let b = z + 4.0 / b;
        let b = z + 3.0 / b;
        let b = z + 2.0 / b;
        let b = z + 1.0 / b;
        e / (b * 2.506_628_274_631_000_5)
    };
    if x > 0.0 {
        1.0 - p
    } else {
        p
    }
}

/// Inverse standard normal CDF (Acklam's algorithm, |rel err| < 1.2e-9).
pub fn normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.38357751867269e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}

/// Natural log of the gamma function (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection formula
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Regularized incomplete beta function I_x(a, b) via continued fraction.
pub fn reg_inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    // Symmetry keeps the continued fraction convergent.
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_cf(a, b, x) / a
    } else {
        1.0 - reg_inc_beta(b, a, 1.0 - x)
    }
}

fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 300;
    const EPS: f64 = 3e-15;
    const TINY: f64 = 1e-300;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Two-sided p-value of a Student t statistic with `df` degrees of freedom.
pub fn student_t_two_sided_p(t: f64, df: f64) -> f64 {
    if !t.is_finite() || df <= 0.0 {
        return f64::NAN;
    }
    let x = df / (df + t * t);
    reg_inc_beta(0.5 * df, 0.5, x)
}

/// Welch two-sample t statistic, Welch–Satterthwaite df, and two-sided p-value.
///
/// Returns `None` when either group has fewer than two observations or both
/// sample variances are zero.
pub fn welch_t_test(xs: &[f64], ys: &[f64]) -> Option<(f64, f64, f64)> {
    let (n1, n2) = (xs.len(), ys.len());
    if n1 < 2 || n2 < 2 {
        return None;
    }
    let m1 = mean(xs);
    let m2 = mean(ys);
    let v1 = sample_variance(xs, m1);
    let v2 = sample_variance(ys, m2);
    let se1 = v1 / n1 as f64;
    let se2 = v2 / n2 as f64;
    let se = se1 + se2;
    if se == 0.0 {
        // identical constants in both groups: no evidence of a difference
        return if m1 == m2 {
            Some((0.0, (n1 + n2 - 2) as f64, 1.0))
        } else {
            Some((f64::INFINITY, (n1 + n2 - 2) as f64, 0.0))
        };
    }
    let t = (m1 - m2) / se.sqrt();
    let df = se * se / (se1 * se1 / (n1 as f64 - 1.0) + se2 * se2 / (n2 as f64 - 1.0));
    let p = if t == 0.0 {
        1.0
    } else {
        student_t_two_sided_p(t, df)
    };
    Some((t, df, p))
}

#[inline]
pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

#[inline]
pub fn sample_variance(xs: &[f64], mean: f64) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    xs.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Empirical quantile with linear interpolation between order statistics
/// (the "type 7" convention). `sorted` must be ascending and non-empty.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = p.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = h - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Sorts a copy of `values` and evaluates [`quantile_sorted`] at each level.
pub fn quantiles(values: &[f64], probs: &[f64]) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    probs.iter().map(|&p| quantile_sorted(&sorted, p)).collect()
}

/// Rank positions of the central credible interval at `level` for `n` draws:
/// the interval is `[x_(lo_rank), x_(hi_rank)]` with 1-based ranks
/// `lo_rank = max(1, ceil(n*alpha/2))` and `hi_rank = ceil(n*(1-alpha/2))`.
pub fn central_interval_ranks(n: usize, level: f64) -> (usize, usize) {
    let alpha = 1.0 - level;
    let nf = n as f64;
    let lo = (nf * alpha / 2.0).ceil().max(1.0) as usize;
    let hi = (nf * (1.0 - alpha / 2.0)).ceil().max(1.0) as usize;
    (lo.min(n), hi.min(n))
}

/// Central credible interval from unsorted draws using rank bounds.
pub fn central_interval(values: &[f64], level: f64) -> (f64, f64) {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let (lo, hi) = central_interval_ranks(sorted.len(), level);
    (sorted[lo - 1], sorted[hi - 1])
}

/// Streaming mean/variance accumulator.
#[derive(Debug, Clone, Default)]
pub struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; zero until two observations are seen.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_cdf_reference_values() {
        // Reference values from standard tables.
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-12);
        assert!((normal_cdf(1.96) - 0.975_002_104_85).abs() < 1e-9);
        assert!((normal_cdf(-1.0) - 0.158_655_253_93).abs() < 1e-9);
    }

    #[test]
    fn normal_quantile_inverts_cdf() {
        for &p in &[0.001, 0.025, 0.1, 0.5, 0.9, 0.975, 0.999] {
            let x = normal_quantile(p);
            assert!((normal_cdf(x) - p).abs() < 1e-8, "p={p}");
        }
    }

    #[test]
    fn ln_gamma_matches_factorials() {
        for n in 1..10u64 {
            let fact: f64 = (1..n).map(|k| k as f64).product();
            assert!((ln_gamma(n as f64) - fact.ln()).abs() < 1e-10);
        }
        // Γ(0.5) = sqrt(π)
        assert!((ln_gamma(0.5) - 0.5 * std::f64::consts::PI.ln()).abs() < 1e-10);
    }

    #[test]
    fn inc_beta_reference_values() {
        // I_x(1,1) = x
        assert!((reg_inc_beta(1.0, 1.0, 0.3) - 0.3).abs() < 1e-12);
        // I_x(2,2) = x^2 (3 - 2x)
        let x = 0.4;
        assert!((reg_inc_beta(2.0, 2.0, x) - x * x * (3.0 - 2.0 * x)).abs() < 1e-12);
    }

    #[test]
    fn t_test_p_values() {
        // t = 2.0, df = 10: two-sided p ≈ 0.073388 (R: 2*pt(-2, 10))
        let p = student_t_two_sided_p(2.0, 10.0);
        assert!((p - 0.073_388).abs() < 1e-5);
        // large separation drives p to ~0
        let xs: Vec<f64> = (0..100).map(|i| (i as f64) * 1e-3).collect();
        let ys: Vec<f64> = (0..100).map(|i| 1.0 + (i as f64) * 1e-3).collect();
        let (_, _, p) = welch_t_test(&xs, &ys).unwrap();
        assert!(p < 1e-10);
    }

    #[test]
    fn welch_identical_groups() {
        let xs = [1.0, 2.0, 3.0];
        let (t, _, p) = welch_t_test(&xs, &xs).unwrap();
        assert_eq!(t, 0.0);
        assert_eq!(p, 1.0);
    }

    #[test]
    fn quantile_interpolation() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&v, 0.0), 1.0);
        assert_eq!(quantile_sorted(&v, 1.0), 4.0);
        assert_eq!(quantile_sorted(&v, 0.5), 2.5);
    }

    #[test]
    fn central_interval_rank_bounds() {
        let (lo, hi) = central_interval_ranks(100, 0.9);
        assert_eq!((lo, hi), (5, 95));
        let (lo, hi) = central_interval_ranks(1, 0.95);
        assert_eq!((lo, hi), (1, 1));
    }

    #[test]
    fn welford_matches_direct() {
        let xs = [1.0, 4.0, 2.0, 8.0, 5.5];
        let mut w = Welford::new();
        for &x in &xs {
            w.push(x);
        }
        let m = mean(&xs);
        assert!((w.mean() - m).abs() < 1e-12);
        assert!((w.variance() - sample_variance(&xs, m)).abs() < 1e-12);
    }
}
