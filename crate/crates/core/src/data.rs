//! Mortality dataset model and file interchange.
//!
//! The canonical interchange format is a long CSV with header
//! `age,subpop,area,year,deaths,population`. Tensors are reconstructed from
//! the key columns, never from row position, so files may be sparse and in
//! any row order. Cells absent from a file are treated as unobserved
//! (population 0, deaths 0, mask false).

use std::collections::BTreeSet;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array4;
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng;

/// Ordered age-group definition shared by datasets, curve collections, and
/// bases.
#[derive(Debug, Clone, PartialEq)]
pub struct AgeGrid {
    labels: Vec<String>,
    lower_bounds: Vec<f64>,
}

impl AgeGrid {
    /// Builds a grid, checking that bounds start at 0 and strictly increase.
    pub fn new(labels: Vec<String>, lower_bounds: Vec<f64>) -> Result<Self> {
        if labels.len() < 2 {
            return Err(Error::Argument("age grid needs at least 2 groups".into()));
        }
        Self::build(labels, lower_bounds)
    }

    fn build(labels: Vec<String>, lower_bounds: Vec<f64>) -> Result<Self> {
        if labels.len() != lower_bounds.len() {
            return Err(Error::Argument(
                "age labels and lower bounds differ in length".into(),
            ));
        }
        if labels.is_empty() {
            return Err(Error::Argument("age grid is empty".into()));
        }
        if lower_bounds[0] != 0.0 {
            return Err(Error::Argument(format!(
                "first age lower bound must be 0, got {}",
                lower_bounds[0]
            )));
        }
        if lower_bounds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Argument(
                "age lower bounds must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            labels,
            lower_bounds,
        })
    }

    /// The standard 19-group grid: <1, 1-4, 5-9, ..., 80-84, 85+.
    pub fn default19() -> Self {
        let mut labels = vec!["<1".to_string(), "1-4".to_string()];
        let mut bounds = vec![0.0, 1.0];
        for lo in (5..=80).step_by(5) {
            labels.push(format!("{}-{}", lo, lo + 4));
            bounds.push(lo as f64);
        }
        labels.push("85+".to_string());
        bounds.push(85.0);
        Self {
            labels,
            lower_bounds: bounds,
        }
    }

    /// Parses a label like `<1`, `1-4`, `85+`, or `40` into its lower bound.
    pub fn parse_label(label: &str) -> Result<f64> {
        let label = label.trim();
        let parsed = if label.starts_with('<') {
            Some(0.0)
        } else if let Some(stripped) = label.strip_suffix('+') {
            stripped.trim().parse::<f64>().ok()
        } else if let Some((lo, _)) = label.split_once('-') {
            lo.trim().parse::<f64>().ok()
        } else {
            label.parse::<f64>().ok()
        };
        parsed.ok_or_else(|| Error::Argument(format!("unparseable age label {label:?}")))
    }

    /// Infers a grid from an unordered set of labels.
    ///
    /// Unlike [`AgeGrid::new`], grids inferred from data files may have a
    /// single group; sparse extracts can legitimately cover one age group,
    /// and basis/model constructors reject such grids where it matters.
    pub fn from_labels<I: IntoIterator<Item = String>>(labels: I) -> Result<Self> {
        let mut pairs: Vec<(f64, String)> = labels
            .into_iter()
            .map(|l| Ok((Self::parse_label(&l)?, l)))
            .collect::<Result<_>>()?;
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let (bounds, labels): (Vec<f64>, Vec<String>) = pairs.into_iter().unzip();
        Self::build(labels, bounds)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn lower_bounds(&self) -> &[f64] {
        &self.lower_bounds
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Midpoints of each group; the open-ended last group extends 7.5 years
    /// past its lower bound, matching the width convention of 5-year groups.
    pub fn midpoints(&self) -> Vec<f64> {
        let a = self.len();
        (0..a)
            .map(|i| {
                if i + 1 < a {
                    0.5 * (self.lower_bounds[i] + self.lower_bounds[i + 1])
                } else {
                    self.lower_bounds[i] + 7.5
                }
            })
            .collect()
    }
}

/// Index of one (age, subpopulation, area, year) cell.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize,
)]
pub struct CellIndex {
    pub age: usize,
    pub subpop: usize,
    pub area: usize,
    pub year: usize,
}

impl fmt::Display for CellIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "(age={}, subpop={}, area={}, year={})",
            self.age, self.subpop, self.area, self.year
        )
    }
}

/// Deaths and person-years indexed by (age, subpopulation, area, year).
#[derive(Debug, Clone)]
pub struct MortalityDataset {
    pub age_grid: AgeGrid,
    pub subpop_names: Vec<String>,
    pub area_names: Vec<String>,
    pub year_labels: Vec<String>,
    pub deaths: Array4<u64>,
    pub population: Array4<f64>,
    pub mask: Array4<bool>,
}

impl MortalityDataset {
    /// Validates the dataset invariants and wraps the tensors.
    pub fn new(
        age_grid: AgeGrid,
        subpop_names: Vec<String>,
        area_names: Vec<String>,
        year_labels: Vec<String>,
        deaths: Array4<u64>,
        population: Array4<f64>,
        mask: Array4<bool>,
    ) -> Result<Self> {
        let dims = (
            age_grid.len(),
            subpop_names.len(),
            area_names.len(),
            year_labels.len(),
        );
        for (name, got) in [
            ("deaths", deaths.dim()),
            ("population", population.dim()),
            ("mask", mask.dim()),
        ] {
            if got != dims {
                return Err(Error::Integrity(format!(
                    "{name} tensor has shape {got:?}, labels imply {dims:?}"
                )));
            }
        }
        for ((a, s, c, t), &p) in population.indexed_iter() {
            if !p.is_finite() || p < 0.0 {
                return Err(Error::Integrity(format!(
                    "population at {} is {p}",
                    CellIndex {
                        age: a,
                        subpop: s,
                        area: c,
                        year: t
                    }
                )));
            }
            if deaths[(a, s, c, t)] > 0 && p == 0.0 {
                return Err(Error::Integrity(format!(
                    "deaths > 0 with population 0 at {}",
                    CellIndex {
                        age: a,
                        subpop: s,
                        area: c,
                        year: t
                    }
                )));
            }
        }
        Ok(Self {
            age_grid,
            subpop_names,
            area_names,
            year_labels,
            deaths,
            population,
            mask,
        })
    }

    /// (A, S, C, T)
    pub fn dims(&self) -> (usize, usize, usize, usize) {
        self.deaths.dim()
    }

    pub fn n_observed(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Log of deaths/population per cell. Zero-death observed cells get
    /// `zero_code`; cells with zero population get NaN.
    pub fn observed_log_rates(&self, zero_code: f64) -> Array4<f64> {
        let mut out = Array4::from_elem(self.deaths.dim(), f64::NAN);
        for ((a, s, c, t), &d) in self.deaths.indexed_iter() {
            let p = self.population[(a, s, c, t)];
            out[(a, s, c, t)] = if p == 0.0 {
                f64::NAN
            } else if d == 0 {
                zero_code
            } else {
                (d as f64 / p).ln()
            };
        }
        out
    }

    /// Splits observed cells into train/test, stratified by area.
    ///
    /// Per area, round-half-up(`fraction` × observed cells) cells are drawn
    /// uniformly without replacement, masked out of the returned training
    /// dataset, and reported as test cells. Deterministic given `seed`.
    pub fn holdout_split(&self, fraction: f64, seed: u64) -> Result<(Self, Vec<CellIndex>)> {
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(Error::Argument(format!(
                "holdout fraction must be in (0,1), got {fraction}"
            )));
        }
        let (n_age, n_sub, n_area, n_year) = self.dims();
        let mut train = self.clone();
        let mut test_cells = Vec::new();
        for c in 0..n_area {
            let mut cells = Vec::new();
            for a in 0..n_age {
                for s in 0..n_sub {
                    for t in 0..n_year {
                        if self.mask[(a, s, c, t)] {
                            cells.push(CellIndex {
                                age: a,
                                subpop: s,
                                area: c,
                                year: t,
                            });
                        }
                    }
                }
            }
            let k = (fraction * cells.len() as f64 + 0.5).floor() as usize;
            let mut rng = rng::substream(seed, c as u64);
            cells.shuffle(&mut rng);
            let mut chosen: Vec<CellIndex> = cells.into_iter().take(k).collect();
            chosen.sort_by_key(|cell| (cell.subpop, cell.year, cell.age));
            for cell in &chosen {
                train.mask[(cell.age, cell.subpop, cell.area, cell.year)] = false;
            }
            test_cells.extend(chosen);
        }
        Ok((train, test_cells))
    }

    /// Reads a long CSV (`age,subpop,area,year,deaths,population`).
    pub fn load_long_csv<P: AsRef<Path>>(path: P) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_long_csv(file)
    }

    pub fn read_long_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(reader);
        {
            let headers = rdr.headers()?;
            let expect = ["age", "subpop", "area", "year", "deaths", "population"];
            let got: Vec<&str> = headers.iter().map(str::trim).collect();
            if got != expect {
                return Err(Error::Parse {
                    line: 1,
                    msg: format!("header must be {expect:?}, got {got:?}"),
                });
            }
        }

        struct Row {
            age: String,
            subpop: String,
            area: String,
            year: String,
            deaths: u64,
            population: f64,
            line: usize,
        }

        let mut rows = Vec::new();
        for record in rdr.records() {
            let record = record?;
            let line = record
                .position()
                .map(|p| p.line() as usize)
                .unwrap_or(rows.len() + 2);
            let field = |i: usize| -> Result<&str> {
                record.get(i).map(str::trim).ok_or(Error::Parse {
                    line,
                    msg: format!("missing column {i}"),
                })
            };
            let deaths_raw = field(4)?;
            let deaths = deaths_raw.parse::<u64>().map_err(|_| Error::Parse {
                line,
                msg: format!("deaths must be a nonnegative integer, got {deaths_raw:?}"),
            })?;
            let pop_raw = field(5)?;
            let population = pop_raw.parse::<f64>().map_err(|_| Error::Parse {
                line,
                msg: format!("population must be a number, got {pop_raw:?}"),
            })?;
            if !population.is_finite() || population < 0.0 {
                return Err(Error::Parse {
                    line,
                    msg: format!("population must be finite and nonnegative, got {population}"),
                });
            }
            rows.push(Row {
                age: field(0)?.to_string(),
                subpop: field(1)?.to_string(),
                area: field(2)?.to_string(),
                year: field(3)?.to_string(),
                deaths,
                population,
                line,
            });
        }

        let age_labels: BTreeSet<String> = rows.iter().map(|r| r.age.clone()).collect();
        let age_grid = AgeGrid::from_labels(age_labels)?;
        let subpop_names: Vec<String> = rows
            .iter()
            .map(|r| r.subpop.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let area_names: Vec<String> = rows
            .iter()
            .map(|r| r.area.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let year_labels = sort_year_labels(rows.iter().map(|r| r.year.clone()).collect());

        let dims = (
            age_grid.len(),
            subpop_names.len(),
            area_names.len(),
            year_labels.len(),
        );
        let mut deaths = Array4::zeros(dims);
        let mut population = Array4::zeros(dims);
        let mut mask = Array4::from_elem(dims, false);

        let find = |names: &[String], v: &str| names.iter().position(|n| n == v).unwrap();
        for row in &rows {
            let idx = (
                age_grid.index_of(&row.age).unwrap(),
                find(&subpop_names, &row.subpop),
                find(&area_names, &row.area),
                find(&year_labels, &row.year),
            );
            if mask[idx] {
                return Err(Error::Integrity(format!(
                    "duplicate key (age={}, subpop={}, area={}, year={}) at line {}",
                    row.age, row.subpop, row.area, row.year, row.line
                )));
            }
            if row.deaths > 0 && row.population == 0.0 {
                return Err(Error::Integrity(format!(
                    "deaths {} with population 0 for (age={}, subpop={}, area={}, year={}) at line {}",
                    row.deaths, row.age, row.subpop, row.area, row.year, row.line
                )));
            }
            deaths[idx] = row.deaths;
            population[idx] = row.population;
            mask[idx] = true;
        }

        Self::new(
            age_grid,
            subpop_names,
            area_names,
            year_labels,
            deaths,
            population,
            mask,
        )
    }

    /// Writes observed cells as a long CSV, sorted by (area, subpop, year,
    /// age-grid order), numbers in shortest round-trip decimal form.
    pub fn save_long_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_long_csv(file)
    }

    pub fn write_long_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "age,subpop,area,year,deaths,population")?;
        let (n_age, _, _, n_year) = self.dims();
        for (c, area) in self.area_names.iter().enumerate() {
            for (s, subpop) in self.subpop_names.iter().enumerate() {
                for t in 0..n_year {
                    for a in 0..n_age {
                        if !self.mask[(a, s, c, t)] {
                            continue;
                        }
                        writeln!(
                            w,
                            "{},{},{},{},{},{}",
                            self.age_grid.labels()[a],
                            subpop,
                            area,
                            self.year_labels[t],
                            self.deaths[(a, s, c, t)],
                            self.population[(a, s, c, t)]
                        )?;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Sorts year labels numerically when all parse as integers, else
/// lexicographically.
fn sort_year_labels(labels: BTreeSet<String>) -> Vec<String> {
    let mut labels: Vec<String> = labels.into_iter().collect();
    if labels.iter().all(|l| l.parse::<i64>().is_ok()) {
        labels.sort_by_key(|l| l.parse::<i64>().unwrap());
    }
    labels
}

/// Metadata of one row of a curve collection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowMeta {
    pub subpop: String,
    pub area: String,
    pub year: String,
}

/// A collection of log-mortality curves over a common age grid, the input
/// to basis construction.
#[derive(Debug, Clone)]
pub struct CurveCollection {
    pub age_grid: AgeGrid,
    /// N×A matrix of log-mortality values.
    pub rows: ndarray::Array2<f64>,
    pub row_meta: Vec<RowMeta>,
}

impl CurveCollection {
    pub fn new(
        age_grid: AgeGrid,
        rows: ndarray::Array2<f64>,
        row_meta: Vec<RowMeta>,
    ) -> Result<Self> {
        if rows.nrows() != row_meta.len() {
            return Err(Error::Argument(
                "curve matrix and row metadata differ in length".into(),
            ));
        }
        if rows.ncols() != age_grid.len() {
            return Err(Error::Argument(format!(
                "curves have {} columns but the age grid has {} groups",
                rows.ncols(),
                age_grid.len()
            )));
        }
        if rows.iter().any(|v| !v.is_finite()) {
            return Err(Error::Integrity(
                "curve collection has non-finite entries".into(),
            ));
        }
        Ok(Self {
            age_grid,
            rows,
            row_meta,
        })
    }

    pub fn n_curves(&self) -> usize {
        self.rows.nrows()
    }

    /// Reads the wide CSV `subpop,area,year,<age-label-1>,...,<age-label-A>`.
    pub fn load_csv<P: AsRef<Path>>(path: P) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(file)
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(reader);
        let headers: Vec<String> = rdr
            .headers()?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        if headers.len() < 5
            || headers[0] != "subpop"
            || headers[1] != "area"
            || headers[2] != "year"
        {
            return Err(Error::Parse {
                line: 1,
                msg: "header must start with subpop,area,year followed by age labels".into(),
            });
        }
        let age_labels: Vec<String> = headers[3..].to_vec();
        let bounds: Vec<f64> = age_labels
            .iter()
            .map(|l| AgeGrid::parse_label(l))
            .collect::<Result<_>>()?;
        let age_grid = AgeGrid::new(age_labels, bounds)?;
        let n_age = age_grid.len();

        let mut meta = Vec::new();
        let mut values = Vec::new();
        for record in rdr.records() {
            let record = record?;
            let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
            if record.len() != 3 + n_age {
                return Err(Error::Parse {
                    line,
                    msg: format!("expected {} fields, got {}", 3 + n_age, record.len()),
                });
            }
            meta.push(RowMeta {
                subpop: record[0].trim().to_string(),
                area: record[1].trim().to_string(),
                year: record[2].trim().to_string(),
            });
            for i in 0..n_age {
                let raw = record[3 + i].trim();
                let v = raw.parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    msg: format!("bad value {raw:?} in column {}", 4 + i),
                })?;
                values.push(v);
            }
        }
        let n = meta.len();
        let rows = ndarray::Array2::from_shape_vec((n, n_age), values)
            .expect("row-major construction matches counts");
        Self::new(age_grid, rows, meta)
    }

    pub fn save_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(file)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "subpop,area,year")?;
        for label in self.age_grid.labels() {
            write!(w, ",{label}")?;
        }
        writeln!(w)?;
        for (i, meta) in self.row_meta.iter().enumerate() {
            write!(w, "{},{},{}", meta.subpop, meta.area, meta.year)?;
            for a in 0..self.age_grid.len() {
                write!(w, ",{}", self.rows[(i, a)])?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_cell_csv() -> &'static str {
        "age,subpop,area,year,deaths,population\n<1,F,X,2000,2,500\n"
    }

    #[test]
    fn age_grid_default19() {
        let grid = AgeGrid::default19();
        assert_eq!(grid.len(), 19);
        assert_eq!(grid.labels()[0], "<1");
        assert_eq!(grid.labels()[18], "85+");
        assert_eq!(grid.lower_bounds()[18], 85.0);
        assert_eq!(grid.midpoints()[18], 92.5);
    }

    #[test]
    fn age_grid_rejects_bad_bounds() {
        assert!(AgeGrid::new(vec!["5-9".into(), "10-14".into()], vec![5.0, 10.0]).is_err());
        assert!(AgeGrid::new(vec!["<1".into()], vec![0.0]).is_err());
        assert!(AgeGrid::new(vec!["<1".into(), "x".into()], vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn load_single_cell() {
        let d = MortalityDataset::read_long_csv(single_cell_csv().as_bytes()).unwrap();
        assert_eq!(d.dims(), (1, 1, 1, 1));
        assert_eq!(d.deaths[(0, 0, 0, 0)], 2);
        assert_eq!(d.population[(0, 0, 0, 0)], 500.0);
        assert!(d.mask[(0, 0, 0, 0)]);
    }

    #[test]
    fn full_grid_load() {
        let grid = AgeGrid::default19();
        let mut csv = String::from("age,subpop,area,year,deaths,population\n");
        for c in ["X", "Y", "Z"] {
            for s in ["F", "M"] {
                for t in ["2000", "2001"] {
                    for label in grid.labels() {
                        csv.push_str(&format!("{label},{s},{c},{t},1,100\n"));
                    }
                }
            }
        }
        let d = MortalityDataset::read_long_csv(csv.as_bytes()).unwrap();
        assert_eq!(d.dims(), (19, 2, 3, 2));
        assert!(d.mask.iter().all(|&m| m));
    }

    #[test]
    fn sparse_file_masks_exactly_present_cells() {
        // build a full-grid file, drop ~10% of rows, and check the mask
        // count against an independent count of the remaining data lines
        let grid = AgeGrid::default19();
        let mut rows = Vec::new();
        for c in ["X", "Y"] {
            for s in ["F", "M"] {
                for t in ["2000", "2001"] {
                    for label in grid.labels() {
                        rows.push(format!("{label},{s},{c},{t},1,100"));
                    }
                }
            }
        }
        let kept: Vec<&String> = rows
            .iter()
            .enumerate()
            .filter(|(i, _)| i % 10 != 3)
            .map(|(_, r)| r)
            .collect();
        let csv = format!(
            "age,subpop,area,year,deaths,population\n{}\n",
            kept.iter()
                .map(|s| s.as_str())
                .collect::<Vec<_>>()
                .join("\n")
        );
        let independent_row_count = csv.lines().count() - 1;
        let d = MortalityDataset::read_long_csv(csv.as_bytes()).unwrap();
        assert_eq!(d.n_observed(), independent_row_count);
        assert_eq!(d.n_observed(), kept.len());
    }

    #[test]
    fn duplicate_key_rejected() {
        let csv = "age,subpop,area,year,deaths,population\n\
                   <1,F,X,2000,2,500\n1-4,F,X,2000,0,400\n<1,F,X,2000,3,500\n";
        let err = MortalityDataset::read_long_csv(csv.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Integrity(_)), "{err}");
    }

    #[test]
    fn deaths_without_population_rejected() {
        let csv = "age,subpop,area,year,deaths,population\n<1,F,X,2000,2,0\n1-4,F,X,2000,0,10\n";
        let err = MortalityDataset::read_long_csv(csv.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Integrity(_)), "{err}");
    }

    #[test]
    fn malformed_row_reports_line() {
        let csv =
            "age,subpop,area,year,deaths,population\n<1,F,X,2000,2,500\n1-4,F,X,2000,oops,400\n";
        let err = MortalityDataset::read_long_csv(csv.as_bytes()).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn observed_log_rates_cases() {
        let csv = format!(
            "age,subpop,area,year,deaths,population\n<1,F,X,2000,1,{}\n1-4,F,X,2000,0,1000\n5-9,F,X,2000,73,12480\n",
            std::f64::consts::E
        );
        let d = MortalityDataset::read_long_csv(csv.as_bytes()).unwrap();
        let lr = d.observed_log_rates(-10.0);
        assert!((lr[(0, 0, 0, 0)] - (-1.0)).abs() < 1e-12);
        assert_eq!(lr[(1, 0, 0, 0)], -10.0);
        assert!((lr[(2, 0, 0, 0)] - (73.0f64 / 12480.0).ln()).abs() < 1e-12);
        assert!((lr[(2, 0, 0, 0)] - (-5.14142)).abs() < 1e-4);
    }

    #[test]
    fn log_rates_nan_for_zero_population() {
        let csv = "age,subpop,area,year,deaths,population\n<1,F,X,2000,0,0\n1-4,F,X,2000,1,10\n";
        let d = MortalityDataset::read_long_csv(csv.as_bytes()).unwrap();
        let lr = d.observed_log_rates(-10.0);
        assert!(lr[(0, 0, 0, 0)].is_nan());
    }

    fn synthetic_dataset(n_area: usize, per_area_years: usize) -> MortalityDataset {
        let grid = AgeGrid::default19();
        let dims = (19, 2, n_area, per_area_years);
        let deaths = Array4::from_elem(dims, 1u64);
        let population = Array4::from_elem(dims, 100.0);
        let mask = Array4::from_elem(dims, true);
        MortalityDataset::new(
            grid,
            vec!["F".into(), "M".into()],
            (0..n_area).map(|i| format!("A{i}")).collect(),
            (0..per_area_years)
                .map(|t| format!("{}", 2000 + t))
                .collect(),
            deaths,
            population,
            mask,
        )
        .unwrap()
    }

    #[test]
    fn holdout_counts_round_half_up() {
        // 19 ages × 2 subpops × 2 years = 76 cells per area; 20% → 15.2 → 15
        let d = synthetic_dataset(3, 2);
        let (train, test) = d.holdout_split(0.2, 42).unwrap();
        for c in 0..3 {
            let n_test = test.iter().filter(|cell| cell.area == c).count();
            assert_eq!(n_test, 15);
        }
        assert_eq!(train.n_observed() + test.len(), d.n_observed());
    }

    #[test]
    fn holdout_is_deterministic_partition() {
        let d = synthetic_dataset(2, 3);
        let (train1, test1) = d.holdout_split(0.2, 7).unwrap();
        let (_, test2) = d.holdout_split(0.2, 7).unwrap();
        assert_eq!(test1, test2);
        for cell in &test1 {
            assert!(!train1.mask[(cell.age, cell.subpop, cell.area, cell.year)]);
            assert!(d.mask[(cell.age, cell.subpop, cell.area, cell.year)]);
        }
    }

    #[test]
    fn holdout_rejects_bad_fraction() {
        let d = synthetic_dataset(1, 1);
        assert!(d.holdout_split(0.0, 1).is_err());
        assert!(d.holdout_split(1.0, 1).is_err());
    }

    #[test]
    fn round_trip_preserves_observed_cells() {
        let d = synthetic_dataset(2, 2);
        let mut buf = Vec::new();
        d.write_long_csv(&mut buf).unwrap();
        let d2 = MortalityDataset::read_long_csv(buf.as_slice()).unwrap();
        assert_eq!(d.dims(), d2.dims());
        assert_eq!(d.deaths, d2.deaths);
        assert_eq!(d.population, d2.population);
        assert_eq!(d.mask, d2.mask);
        let mut buf2 = Vec::new();
        d2.write_long_csv(&mut buf2).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn curve_collection_round_trip() {
        let grid = AgeGrid::new(
            vec!["<1".into(), "1-4".into(), "5-9".into()],
            vec![0.0, 1.0, 5.0],
        )
        .unwrap();
        let rows = ndarray::array![[-3.0, -7.25, -8.5], [-2.5, -7.0, -8.0]];
        let meta = vec![
            RowMeta {
                subpop: "F".into(),
                area: "X".into(),
                year: "2000".into(),
            },
            RowMeta {
                subpop: "M".into(),
                area: "X".into(),
                year: "2000".into(),
            },
        ];
        let cc = CurveCollection::new(grid, rows, meta).unwrap();
        let mut buf = Vec::new();
        cc.write_csv(&mut buf).unwrap();
        let cc2 = CurveCollection::read_csv(buf.as_slice()).unwrap();
        assert_eq!(cc.rows, cc2.rows);
        assert_eq!(cc.row_meta, cc2.row_meta);
    }
}
