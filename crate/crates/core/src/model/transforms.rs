//! Bijective transforms between unconstrained coordinates and constrained
//! parameters.
//!
//! Scales use the exp link (log-Jacobian: the unconstrained value itself).
//! Correlation Cholesky factors use the canonical-partial-correlation
//! construction: unconstrained entries map through tanh to partial
//! correlations, which fill the strict lower triangle row by row while each
//! row is completed to unit norm. The log-Jacobian has one `ln(1 - z²)`
//! term per entry (tanh) plus `0.5·ln(1 - Σ_prev²)` for every entry past
//! the first in its row (row completion).

use crate::stats;

/// Builds an S×S correlation Cholesky factor from `raw` unconstrained
/// entries and returns the log-Jacobian of the map.
///
/// `raw` has S(S−1)/2 entries walking the strict lower triangle row-major:
/// (1,0), (2,0), (2,1), … `l_out` (dense S×S row-major) receives the
/// factor; `z_out` the tanh of each raw entry, needed by the reverse pass.
pub fn chol_corr_forward(raw: &[f64], s: usize, l_out: &mut [f64], z_out: &mut [f64]) -> f64 {
    debug_assert_eq!(raw.len(), s * (s - 1) / 2);
    debug_assert_eq!(l_out.len(), s * s);
    l_out.iter_mut().for_each(|x| *x = 0.0);
    l_out[0] = 1.0;
    let mut log_jac = 0.0;
    let mut k = 0;
    for r in 1..s {
        let mut sum_sq: f64 = 0.0;
        for c in 0..r {
            let z = raw[k].tanh();
            z_out[k] = z;
            log_jac += (1.0 - z * z).ln();
            if c > 0 {
                log_jac += 0.5 * (1.0 - sum_sq).ln();
            }
            let val = z * (1.0 - sum_sq).sqrt();
            l_out[r * s + c] = val;
            sum_sq += val * val;
            k += 1;
        }
        l_out[r * s + r] = (1.0 - sum_sq).sqrt();
    }
    log_jac
}

/// LKJ log-density, up to its normalizing constant, of a factor built by
/// [`chol_corr_forward`]: Σ over rows r ≥ 1 of `(S − r − 3 + 2η)·ln L[r][r]`.
pub fn lkj_chol_logdensity(s: usize, l: &[f64], eta: f64) -> f64 {
    let mut lp = 0.0;
    for r in 1..s {
        let expo = (s - r) as f64 - 3.0 + 2.0 * eta;
        if expo != 0.0 {
            lp += expo * l[r * s + r].ln();
        }
    }
    lp
}

/// Reverse pass through [`chol_corr_forward`], the transform Jacobian, and
/// the LKJ density.
///
/// `g_l` holds the downstream adjoint of every factor entry (dense S×S
/// row-major, diagonal included). The gradient with respect to the raw
/// entries is *added* into `g_raw`.
pub fn chol_corr_backward(
    s: usize,
    l: &[f64],
    z: &[f64],
    eta: f64,
    g_l: &[f64],
    g_raw: &mut [f64],
) {
    let mut k_row_end = z.len();
    for r in (1..s).rev() {
        let k_row_start = k_row_end - r;
        // sum-of-squares prefixes: s_arr[j] = Σ_{c<j} L[r][c]²
        let mut s_arr = [0.0; 64];
        debug_assert!(r < 64);
        for c in 0..r {
            let val = l[r * s + c];
            s_arr[c + 1] = s_arr[c] + val * val;
        }
        let diag = l[r * s + r];
        let expo = (s - r) as f64 - 3.0 + 2.0 * eta;
        let mut g_diag = g_l[r * s + r];
        if expo != 0.0 {
            g_diag += expo / diag;
        }
        // L[r][r] = sqrt(1 - s_arr[r])
        let mut gs = g_diag * (-0.5 / diag);
        for c in (0..r).rev() {
            let val = l[r * s + c];
            let zc = z[k_row_start + c];
            let q = (1.0 - s_arr[c]).sqrt();
            // s_{c+1} = s_c + val²
            let g_val = g_l[r * s + c] + gs * 2.0 * val;
            // val = z·q, z = tanh(u); the −2z term is d/du of ln(1 − z²)
            g_raw[k_row_start + c] += g_val * q * (1.0 - zc * zc) - 2.0 * zc;
            let mut gs_next = gs + g_val * zc * (-0.5 / q);
            if c > 0 {
                // entry Jacobian 0.5·ln(1 − s_c)
                gs_next += -0.5 / (1.0 - s_arr[c]);
            }
            gs = gs_next;
        }
        k_row_end = k_row_start;
    }
}

/// Log-density of the half-normal scale prior expressed on the
/// unconstrained log-scale coordinate, transform Jacobian included.
#[inline]
pub fn half_normal_with_exp_jacobian(u: f64, scale: f64) -> f64 {
    stats::half_normal_logpdf(u.exp(), scale) + u
}

/// Log-density of the log-normal scale prior on the unconstrained
/// coordinate, transform Jacobian included.
#[inline]
pub fn log_normal_with_exp_jacobian(u: f64, meanlog: f64, sdlog: f64) -> f64 {
    stats::log_normal_logpdf(u.exp(), meanlog, sdlog) + u
}
