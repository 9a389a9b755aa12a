//! Shared CLI plumbing: globals resolution, the config-file overlay, error
//! classification, and basis loading.

use std::path::{Path, PathBuf};

use multimort::data::CurveCollection;
use multimort::error::Error as CoreError;
use multimort::simgen::StandardCurves;
use ndarray::Array2;
use serde::Deserialize;

/// An error plus the process exit code it maps to (1 = runtime/data,
/// 2 = usage).
pub struct CliError {
    pub inner: anyhow::Error,
    pub exit_code: u8,
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn usage<E: Into<anyhow::Error>>(e: E) -> Self {
        Self {
            inner: e.into(),
            exit_code: 2,
        }
    }

    pub fn runtime<E: Into<anyhow::Error>>(e: E) -> Self {
        Self {
            inner: e.into(),
            exit_code: 1,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let exit_code = match &e {
            CoreError::Argument(_) => 2,
            _ => 1,
        };
        Self {
            inner: e.into(),
            exit_code,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::runtime(e)
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        Self::runtime(e)
    }
}

/// Optional per-subcommand overrides loaded from `--config`.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    #[serde(default)]
    pub decompose: DecomposeFileConfig,
    #[serde(default)]
    pub simulate: SimulateFileConfig,
    #[serde(default)]
    pub fit: FitFileConfig,
    #[serde(default)]
    pub validate: ValidateFileConfig,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecomposeFileConfig {
    pub p_max: Option<usize>,
    pub alpha: Option<f64>,
    pub min_p: Option<usize>,
    pub max_p: Option<usize>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateFileConfig {
    pub areas: Option<usize>,
    pub years: Option<usize>,
    pub subgroups: Option<usize>,
    pub base_pop_unit: Option<f64>,
    pub growth: Option<f64>,
    pub exchangeable_rho: Option<f64>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitFileConfig {
    pub chains: Option<usize>,
    pub warmup: Option<usize>,
    pub samples: Option<usize>,
    pub target_accept: Option<f64>,
    pub max_treedepth: Option<u32>,
    pub init_jitter: Option<f64>,
    pub p: Option<usize>,
    pub variant: Option<String>,
    pub share_correlations_over_time: Option<bool>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateFileConfig {
    pub holdout: Option<f64>,
    pub replicates: Option<usize>,
}

/// Resolved global options shared by all subcommands.
pub struct Globals {
    pub out_dir: PathBuf,
    pub seed: u64,
    pub file: FileConfig,
}

impl Globals {
    pub fn resolve(
        config: &Option<PathBuf>,
        out: &Option<PathBuf>,
        seed: Option<u64>,
        threads: Option<usize>,
    ) -> CliResult<Self> {
        let file: FileConfig = match config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    CliError::usage(anyhow::anyhow!(
                        "cannot read config {}: {e}",
                        path.display()
                    ))
                })?;
                serde_json::from_str(&text).map_err(|e| {
                    CliError::usage(anyhow::anyhow!("bad config {}: {e}", path.display()))
                })?
            }
            None => FileConfig::default(),
        };
        let out_dir = out
            .clone()
            .or_else(|| file.out.clone())
            .unwrap_or_else(|| PathBuf::from("."));
        std::fs::create_dir_all(&out_dir)?;
        let seed = seed.or(file.seed).unwrap_or(0);
        if let Some(n) = threads.or(file.threads) {
            // ignore the error when a pool already exists (tests)
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global();
        }
        Ok(Self {
            out_dir,
            seed,
            file,
        })
    }
}

/// Basis source for `fit`: the built-in standard curves or a components
/// CSV produced by `decompose` (A rows × components columns, transposed
/// into model orientation).
pub fn load_basis(source: &str, p: usize) -> CliResult<Array2<f64>> {
    if source == "from-truth" {
        let curves = StandardCurves::builtin();
        let basis = curves.basis_matrix();
        if p > basis.nrows() {
            return Err(CliError::usage(anyhow::anyhow!(
                "built-in standard curves provide 2 components, requested P = {p}"
            )));
        }
        return Ok(basis);
    }
    let path = Path::new(source);
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::usage(anyhow::anyhow!("cannot read basis {source}: {e}")))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| CliError::usage(anyhow::anyhow!("basis file {source} is empty")))?;
    let n_comp = header.split(',').count().saturating_sub(1);
    if n_comp == 0 {
        return Err(CliError::usage(anyhow::anyhow!(
            "basis file {source} has no component columns"
        )));
    }
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != n_comp + 1 {
            return Err(CliError::usage(anyhow::anyhow!(
                "basis file {source} line {}: expected {} fields, got {}",
                lineno + 2,
                n_comp + 1,
                fields.len()
            )));
        }
        let vals: Result<Vec<f64>, _> = fields[1..].iter().map(|f| f.trim().parse()).collect();
        rows.push(vals.map_err(|e| {
            CliError::usage(anyhow::anyhow!(
                "basis file {source} line {}: {e}",
                lineno + 2
            ))
        })?);
    }
    let n_age = rows.len();
    if p > n_comp {
        return Err(CliError::usage(anyhow::anyhow!(
            "basis file {source} holds {n_comp} components, requested P = {p}"
        )));
    }
    // file is age-major; the model wants component-major
    Ok(Array2::from_shape_fn((n_comp, n_age), |(i, a)| rows[a][i]))
}

/// Reads a CurveCollection CSV with usage-error mapping.
pub fn load_curves(path: &Path) -> CliResult<CurveCollection> {
    if !path.exists() {
        return Err(CliError::usage(anyhow::anyhow!(
            "input file {} does not exist",
            path.display()
        )));
    }
    Ok(CurveCollection::load_csv(path)?)
}

/// Comma-separated probability list.
pub fn parse_probs(text: &str) -> CliResult<Vec<f64>> {
    let probs: Result<Vec<f64>, _> = text.split(',').map(|t| t.trim().parse::<f64>()).collect();
    let probs = probs
        .map_err(|e| CliError::usage(anyhow::anyhow!("bad probability list {text:?}: {e}")))?;
    if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(CliError::usage(anyhow::anyhow!(
            "probabilities must lie in [0,1]: {text:?}"
        )));
    }
    Ok(probs)
}
