//! Principal-component basis construction from reference log-mortality
//! curves, plus the component-selection diagnostics.
//!
//! The decomposition of the N×A curve matrix X is computed through the
//! eigendecomposition of XᵀX (A is small, tens of age groups): the right
//! singular vectors are the eigenvectors, squared singular values the
//! eigenvalues, and the left singular values follow as XV. Components are
//! reported with a deterministic sign convention: each component is flipped
//! so that the sum of its entries is nonnegative.

use ndarray::Array2;

use crate::data::{AgeGrid, CurveCollection};
use crate::error::{Error, Result};
use crate::stats;

/// Explained-variance floor used by [`recommend_p`] when a component shows
/// no significant location difference between subpopulations.
pub const DEFAULT_EV_FLOOR: f64 = 0.005;

/// Ordered principal-component curves over age with their singular values
/// and per-curve loadings.
#[derive(Debug, Clone)]
pub struct PCBasis {
    age_grid: AgeGrid,
    /// p_max×A, right singular vectors as rows, each with unit norm.
    components: Array2<f64>,
    /// Full spectrum (length A), nonincreasing.
    singular_values_full: Vec<f64>,
    /// N×p_max loadings; rows of UΣ when `scores_are_scaled`, else rows of U.
    left_values: Array2<f64>,
    scores_are_scaled: bool,
}

impl PCBasis {
    /// Assembles a basis from parts, enforcing the invariants: unit-norm
    /// component rows, nonincreasing nonnegative singular values, matching
    /// shapes.
    pub fn new(
        age_grid: AgeGrid,
        components: Array2<f64>,
        singular_values_full: Vec<f64>,
        left_values: Array2<f64>,
        scores_are_scaled: bool,
    ) -> Result<Self> {
        let a = age_grid.len();
        let p_max = components.nrows();
        if components.ncols() != a {
            return Err(Error::Argument(format!(
                "components have {} columns, age grid has {a}",
                components.ncols()
            )));
        }
        if singular_values_full.len() != a {
            return Err(Error::Argument(format!(
                "need the full spectrum of {a} singular values, got {}",
                singular_values_full.len()
            )));
        }
        if left_values.ncols() != p_max {
            return Err(Error::Argument(format!(
                "left values have {} columns, expected {p_max}",
                left_values.ncols()
            )));
        }
        if singular_values_full.iter().any(|&s| !(s >= 0.0)) {
            return Err(Error::Argument(
                "singular values must be nonnegative".into(),
            ));
        }
        if singular_values_full.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::Argument(
                "singular values must be nonincreasing".into(),
            ));
        }
        for k in 0..p_max {
            let norm: f64 = (0..a).map(|c| components[(k, c)].powi(2)).sum();
            if (norm - 1.0).abs() > 1e-10 {
                return Err(Error::Argument(format!(
                    "component {k} has squared norm {norm}, expected 1"
                )));
            }
        }
        Ok(Self {
            age_grid,
            components,
            singular_values_full,
            left_values,
            scores_are_scaled,
        })
    }

    pub fn age_grid(&self) -> &AgeGrid {
        &self.age_grid
    }

    /// Number of retained components.
    pub fn p_max(&self) -> usize {
        self.components.nrows()
    }

    /// p_max×A matrix of component curves.
    pub fn components(&self) -> &Array2<f64> {
        &self.components
    }

    /// First `p_max` singular values.
    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values_full[..self.p_max()]
    }

    /// All A singular values of the decomposition.
    pub fn singular_values_full(&self) -> &[f64] {
        &self.singular_values_full
    }

    pub fn left_values(&self) -> &Array2<f64> {
        &self.left_values
    }

    pub fn scores_are_scaled(&self) -> bool {
        self.scores_are_scaled
    }

    /// Share of total variation carried by each retained component:
    /// σ_i² / Σ_j σ_j² over the full spectrum.
    pub fn explained_variance(&self) -> Vec<f64> {
        let total: f64 = self.singular_values_full.iter().map(|s| s * s).sum();
        if total == 0.0 {
            return vec![0.0; self.p_max()];
        }
        self.singular_values()
            .iter()
            .map(|s| s * s / total)
            .collect()
    }
}

/// Computes the PC basis of a curve collection, retaining `p_max` components.
pub fn svd_basis(x: &CurveCollection, p_max: usize) -> Result<PCBasis> {
    let n = x.rows.nrows();
    let a = x.rows.ncols();
    if p_max < 1 {
        return Err(Error::Argument("p_max must be at least 1".into()));
    }
    if p_max > a {
        return Err(Error::Argument(format!(
            "p_max ({p_max}) exceeds the number of age groups ({a})"
        )));
    }
    if n < a {
        return Err(Error::Argument(format!(
            "need at least as many curves ({n}) as age groups ({a})"
        )));
    }

    // Gram matrix XᵀX, then its eigendecomposition.
    let mut gram = Array2::zeros((a, a));
    for i in 0..a {
        for j in i..a {
            let mut acc = 0.0;
            for r in 0..n {
                acc += x.rows[(r, i)] * x.rows[(r, j)];
            }
            gram[(i, j)] = acc;
            gram[(j, i)] = acc;
        }
    }
    let (mut eigvals, mut eigvecs) = jacobi_eigh(gram)?;

    // Sort by descending eigenvalue.
    let mut order: Vec<usize> = (0..a).collect();
    order.sort_by(|&i, &j| eigvals[j].partial_cmp(&eigvals[i]).unwrap());
    let sorted_vals: Vec<f64> = order.iter().map(|&i| eigvals[i].max(0.0)).collect();
    let mut sorted_vecs = Array2::zeros((a, a));
    for (new, &old) in order.iter().enumerate() {
        for r in 0..a {
            sorted_vecs[(r, new)] = eigvecs[(r, old)];
        }
    }
    eigvals = sorted_vals;
    eigvecs = sorted_vecs;

    let singular_values_full: Vec<f64> = eigvals.iter().map(|&l| l.sqrt()).collect();

    // Sign convention: component entry-sum >= 0.
    for k in 0..a {
        let sum: f64 = (0..a).map(|r| eigvecs[(r, k)]).sum();
        if sum < 0.0 {
            for r in 0..a {
                eigvecs[(r, k)] = -eigvecs[(r, k)];
            }
        }
    }

    let mut components = Array2::zeros((p_max, a));
    for k in 0..p_max {
        for c in 0..a {
            components[(k, c)] = eigvecs[(c, k)];
        }
    }

    // Left singular values as UΣ = XV.
    let mut left_values = Array2::zeros((n, p_max));
    for r in 0..n {
        for k in 0..p_max {
            let mut acc = 0.0;
            for c in 0..a {
                acc += x.rows[(r, c)] * eigvecs[(c, k)];
            }
            left_values[(r, k)] = acc;
        }
    }

    Ok(PCBasis {
        age_grid: x.age_grid.clone(),
        components,
        singular_values_full,
        left_values,
        scores_are_scaled: true,
    })
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
///
/// Returns eigenvalues and the matrix whose columns are eigenvectors.
fn jacobi_eigh(mut m: Array2<f64>) -> Result<(Vec<f64>, Array2<f64>)> {
    let n = m.nrows();
    let mut v = Array2::eye(n);
    let scale: f64 = m.iter().map(|x| x * x).sum::<f64>().sqrt().max(1.0);
    const MAX_SWEEPS: usize = 64;
    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|p| ((p + 1)..n).map(move |q| (p, q)))
            .map(|(p, q)| m[(p, q)] * m[(p, q)])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale {
            let eigvals: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
            return Ok((eigvals, v));
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    Err(Error::Numeric(
        "Jacobi eigendecomposition did not converge".into(),
    ))
}

/// Welch test of one subpop pair on one left-value column; `None` fields
/// mean the test was unavailable (a group had fewer than two curves).
#[derive(Debug, Clone)]
pub struct PairTest {
    pub subpop_a: String,
    pub subpop_b: String,
    pub t: Option<f64>,
    pub p: Option<f64>,
}

/// Selection diagnostics for one component.
#[derive(Debug, Clone)]
pub struct SelectionRow {
    /// 0-based component index.
    pub component: usize,
    pub explained_variance: f64,
    pub subpop_means: Vec<(String, f64)>,
    pub pair_tests: Vec<PairTest>,
}

impl SelectionRow {
    /// True when any pairwise test rejects at `alpha`.
    pub fn any_significant(&self, alpha: f64) -> bool {
        self.pair_tests
            .iter()
            .filter_map(|pt| pt.p)
            .any(|p| p < alpha)
    }
}

/// Per-component diagnostics plus the recommended component count.
#[derive(Debug, Clone)]
pub struct SelectionReport {
    pub rows: Vec<SelectionRow>,
    pub recommended_p: usize,
}

/// Distribution diagnostics of left-value column `component` split by the
/// subpopulation labels in `row_meta`.
pub fn subpop_separation(
    basis: &PCBasis,
    subpop_labels: &[String],
    component: usize,
) -> Result<SelectionRow> {
    if component >= basis.p_max() {
        return Err(Error::Argument(format!(
            "component {component} out of range (p_max = {})",
            basis.p_max()
        )));
    }
    if subpop_labels.len() != basis.left_values.nrows() {
        return Err(Error::Argument(
            "subpop label list does not match the number of curves".into(),
        ));
    }
    let mut groups: Vec<(String, Vec<f64>)> = Vec::new();
    for (r, label) in subpop_labels.iter().enumerate() {
        let value = basis.left_values[(r, component)];
        match groups.iter_mut().find(|(name, _)| name == label) {
            Some((_, vals)) => vals.push(value),
            None => groups.push((label.clone(), vec![value])),
        }
    }
    if groups.len() < 2 {
        return Err(Error::Argument(
            "need at least two subpopulations for separation diagnostics".into(),
        ));
    }

    let subpop_means = groups
        .iter()
        .map(|(name, vals)| (name.clone(), stats::mean(vals)))
        .collect();

    let mut pair_tests = Vec::new();
    for i in 0..groups.len() {
        for j in (i + 1)..groups.len() {
            let res = stats::welch_t_test(&groups[i].1, &groups[j].1);
            pair_tests.push(PairTest {
                subpop_a: groups[i].0.clone(),
                subpop_b: groups[j].0.clone(),
                t: res.map(|(t, _, _)| t),
                p: res.map(|(_, _, p)| p),
            });
        }
    }

    Ok(SelectionRow {
        component,
        explained_variance: basis.explained_variance()[component],
        subpop_means,
        pair_tests,
    })
}

/// Builds the full report for components `0..max_p` and recommends a count.
pub fn selection_report(
    basis: &PCBasis,
    subpop_labels: &[String],
    alpha: f64,
    min_p: usize,
    max_p: usize,
) -> Result<SelectionReport> {
    let max_p = max_p.min(basis.p_max());
    let rows: Vec<SelectionRow> = (0..max_p)
        .map(|i| subpop_separation(basis, subpop_labels, i))
        .collect::<Result<_>>()?;
    let recommended_p = recommend_p(&rows, alpha, min_p, max_p, DEFAULT_EV_FLOOR);
    Ok(SelectionReport {
        rows,
        recommended_p,
    })
}

/// Largest P ≤ `max_p` such that every component 1..P carries either enough
/// variance (share ≥ `ev_floor`) or a significant subpopulation location
/// difference (any pairwise p < `alpha`); contiguous, so the scan stops at
/// the first failing component. Clamped to at least `min_p`.
pub fn recommend_p(
    rows: &[SelectionRow],
    alpha: f64,
    min_p: usize,
    max_p: usize,
    ev_floor: f64,
) -> usize {
    let mut passing = 0;
    for row in rows.iter().take(max_p) {
        if row.explained_variance >= ev_floor || row.any_significant(alpha) {
            passing += 1;
        } else {
            break;
        }
    }
    passing.max(min_p).min(max_p.max(min_p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::RowMeta;
    use ndarray::array;

    fn collection(rows: Array2<f64>) -> CurveCollection {
        let a = rows.ncols();
        let labels: Vec<String> = (0..a)
            .map(|i| {
                if i == 0 {
                    "<1".to_string()
                } else {
                    format!("{}", i)
                }
            })
            .collect();
        let bounds: Vec<f64> = (0..a).map(|i| i as f64).collect();
        let grid = AgeGrid::new(labels, bounds).unwrap();
        let meta = (0..rows.nrows())
            .map(|r| RowMeta {
                subpop: if r % 2 == 0 { "F".into() } else { "M".into() },
                area: format!("A{r}"),
                year: "2000".into(),
            })
            .collect();
        CurveCollection::new(grid, rows, meta).unwrap()
    }

    #[test]
    fn identity_matrix_svd() {
        let x = collection(array![[1.0, 0.0], [0.0, 1.0]]);
        let b = svd_basis(&x, 2).unwrap();
        assert!((b.singular_values()[0] - 1.0).abs() < 1e-12);
        assert!((b.singular_values()[1] - 1.0).abs() < 1e-12);
        // coordinate axes up to the sign convention
        for k in 0..2 {
            let row: Vec<f64> = (0..2).map(|c| b.components()[(k, c)]).collect();
            let nonzero: Vec<f64> = row.iter().copied().filter(|v| v.abs() > 1e-12).collect();
            assert_eq!(nonzero.len(), 1);
            assert!((nonzero[0] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rank_one_svd_by_hand() {
        // X = [[1,2],[2,4]] has singular values [5, 0] and first component
        // proportional to [1,2]/sqrt(5).
        let x = collection(array![[1.0, 2.0], [2.0, 4.0]]);
        let b = svd_basis(&x, 2).unwrap();
        assert!((b.singular_values()[0] - 5.0).abs() < 1e-10);
        assert!(b.singular_values()[1].abs() < 1e-10);
        let c0: Vec<f64> = (0..2).map(|c| b.components()[(0, c)]).collect();
        let s5 = 5.0f64.sqrt();
        assert!((c0[0] - 1.0 / s5).abs() < 1e-10);
        assert!((c0[1] - 2.0 / s5).abs() < 1e-10);
        let ev = b.explained_variance();
        assert!((ev[0] - 1.0).abs() < 1e-12);
        assert!(ev[1].abs() < 1e-12);
    }

    #[test]
    fn explained_variance_symmetric() {
        let x = collection(array![[1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [0.0, 1.0]]);
        let b = svd_basis(&x, 2).unwrap();
        let ev = b.explained_variance();
        assert!((ev[0] - 0.5).abs() < 1e-12);
        assert!((ev[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn p_max_validation() {
        let x = collection(array![[1.0, 2.0], [2.0, 4.0]]);
        assert!(matches!(svd_basis(&x, 3), Err(Error::Argument(_))));
        assert!(matches!(svd_basis(&x, 0), Err(Error::Argument(_))));
    }

    #[test]
    fn construction_rejects_increasing_singular_values() {
        let grid = AgeGrid::new(vec!["<1".into(), "1-4".into()], vec![0.0, 1.0]).unwrap();
        let components = array![[1.0, 0.0], [0.0, 1.0]];
        let left = Array2::zeros((3, 2));
        let bad = PCBasis::new(
            grid.clone(),
            components.clone(),
            vec![3.0, 4.0],
            left.clone(),
            true,
        );
        assert!(matches!(bad, Err(Error::Argument(_))));
        let ok = PCBasis::new(grid.clone(), components, vec![4.0, 3.0], left.clone(), true);
        assert!(ok.is_ok());
        // non-unit component rows are also rejected
        let skewed = array![[2.0, 0.0], [0.0, 1.0]];
        let bad = PCBasis::new(grid, skewed, vec![4.0, 3.0], left, true);
        assert!(matches!(bad, Err(Error::Argument(_))));
    }

    #[test]
    fn orthonormal_components() {
        // pseudo-random but deterministic 8x4 matrix
        let mut vals = Vec::new();
        let mut state = 1u64;
        for _ in 0..32 {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            vals.push(((state >> 11) as f64) / ((1u64 << 53) as f64) - 0.5);
        }
        let x = collection(Array2::from_shape_vec((8, 4), vals).unwrap());
        let b = svd_basis(&x, 4).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let dot: f64 = (0..4)
                    .map(|c| b.components()[(i, c)] * b.components()[(j, c)])
                    .sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-10, "({i},{j}) dot={dot}");
            }
        }
        // full-rank reconstruction: UΣ Vᵀ == X
        let mut err = 0.0;
        let mut norm = 0.0;
        for r in 0..8 {
            for c in 0..4 {
                let mut acc = 0.0;
                for k in 0..4 {
                    acc += b.left_values()[(r, k)] * b.components()[(k, c)];
                }
                err += (acc - x.rows[(r, c)]).powi(2);
                norm += x.rows[(r, c)].powi(2);
            }
        }
        assert!((err / norm).sqrt() < 1e-8);
    }

    #[test]
    fn sign_convention_idempotent() {
        let x = collection(array![[1.0, 2.0], [2.0, 4.0], [0.5, 1.1]]);
        let b1 = svd_basis(&x, 2).unwrap();
        let b2 = svd_basis(&x, 2).unwrap();
        assert_eq!(b1.components(), b2.components());
        for k in 0..2 {
            let sum: f64 = (0..2).map(|c| b1.components()[(k, c)]).sum();
            assert!(sum >= 0.0);
        }
    }

    #[test]
    fn separation_identical_groups() {
        let x = collection(array![
            [1.0, 0.0],
            [1.0, 0.0],
            [2.0, 1.0],
            [2.0, 1.0],
            [3.0, 0.5],
            [3.0, 0.5]
        ]);
        // rows alternate F/M with identical values per pair, so the left
        // value lists per sex are identical
        let labels: Vec<String> = x.row_meta.iter().map(|m| m.subpop.clone()).collect();
        let b = svd_basis(&x, 2).unwrap();
        let row = subpop_separation(&b, &labels, 0).unwrap();
        let pt = &row.pair_tests[0];
        assert_eq!(pt.t.unwrap(), 0.0);
        assert_eq!(pt.p.unwrap(), 1.0);
    }

    #[test]
    fn separation_detects_location_shift() {
        // deterministic samples: group A near 0, group B near 1, sd 0.1
        let n = 100;
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let jitter = 0.1 * ((i as f64 * 0.7).sin());
            rows.push([jitter, 0.0]);
            labels.push("A".to_string());
            rows.push([1.0 + 0.1 * ((i as f64 * 1.3).cos()), 0.0]);
            labels.push("B".to_string());
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let x = collection(Array2::from_shape_vec((2 * n, 2), flat).unwrap());
        let b = svd_basis(&x, 1).unwrap();
        let row = subpop_separation(&b, &labels, 0).unwrap();
        let p = row.pair_tests[0].p.unwrap();
        assert!(p < 1e-10, "p = {p}");
    }

    #[test]
    fn separation_unavailable_for_tiny_group() {
        let x = collection(array![[1.0, 0.0], [2.0, 1.0], [3.0, 0.5], [4.0, 0.2]]);
        let labels = vec!["F".into(), "F".into(), "F".into(), "M".into()];
        let b = svd_basis(&x, 1).unwrap();
        let row = subpop_separation(&b, &labels, 0).unwrap();
        assert!(row.pair_tests[0].p.is_none());
    }

    fn fake_row(component: usize, ev: f64, p: Option<f64>) -> SelectionRow {
        SelectionRow {
            component,
            explained_variance: ev,
            subpop_means: vec![],
            pair_tests: vec![PairTest {
                subpop_a: "F".into(),
                subpop_b: "M".into(),
                t: p.map(|_| 1.0),
                p,
            }],
        }
    }

    #[test]
    fn recommend_p_contiguity() {
        // significant for components 1-4 and 6-8; the gap at 5 stops the scan
        let rows: Vec<SelectionRow> = (0..8)
            .map(|i| {
                let sig = i != 4;
                fake_row(i, 0.0, Some(if sig { 1e-6 } else { 0.5 }))
            })
            .collect();
        assert_eq!(recommend_p(&rows, 0.05, 3, 8, DEFAULT_EV_FLOOR), 4);
    }

    #[test]
    fn recommend_p_clamps_to_min() {
        let rows: Vec<SelectionRow> = (0..8).map(|i| fake_row(i, 0.0, Some(0.9))).collect();
        assert_eq!(recommend_p(&rows, 0.05, 3, 8, DEFAULT_EV_FLOOR), 3);
    }

    #[test]
    fn recommend_p_significant_through_four() {
        let rows: Vec<SelectionRow> = (0..8)
            .map(|i| fake_row(i, 0.0, Some(if i < 4 { 1e-4 } else { 0.7 })))
            .collect();
        assert_eq!(recommend_p(&rows, 0.05, 3, 8, DEFAULT_EV_FLOOR), 4);
    }
}
