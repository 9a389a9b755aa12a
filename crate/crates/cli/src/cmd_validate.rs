//! `validate`: score a fit against simulation truth (`--against-truth`) or
//! run the holdout protocol on a dataset, optionally comparing the joint
//! and independent variants on the identical split.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Args;
use multimort::data::MortalityDataset;
use multimort::error::Error as CoreError;
use multimort::eval::{compare_variants, holdout_report, simulation_report, EvalReport};
use multimort::model::{Hyper, ModelSpec, PosteriorTarget, Variant};
use multimort::sampler::{sample, SamplerConfig};
use multimort::simgen::SimTruth;
use ndarray::{Array2, Array3, Array4};

use crate::common::{CliError, CliResult, Globals};
use crate::{cmd_fit, fitio, meta};

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Score an existing fit against a simulation-truth directory.
    #[arg(long, requires = "fit_dir", requires = "truth_dir")]
    pub against_truth: bool,

    /// Fit directory (with `--against-truth`).
    #[arg(long)]
    pub fit_dir: Option<PathBuf>,

    /// `simulate` output directory holding dataset + truth files.
    #[arg(long)]
    pub truth_dir: Option<PathBuf>,

    /// Dataset long CSV (holdout mode).
    #[arg(long, conflicts_with = "against_truth")]
    pub data: Option<PathBuf>,

    /// Holdout fraction of observed cells per area.
    #[arg(long)]
    pub holdout: Option<f64>,

    /// Fit and score both variants on the identical split.
    #[arg(long)]
    pub compare: bool,

    /// Variant when not comparing (default joint).
    #[arg(long)]
    pub variant: Option<String>,

    /// Independent holdout replications (split seeds seed, seed+1, …).
    #[arg(long)]
    pub replicates: Option<usize>,

    /// Basis source, as in `fit`.
    #[arg(long, default_value = "from-truth")]
    pub basis: String,

    #[arg(long)]
    pub p: Option<usize>,

    #[arg(long)]
    pub chains: Option<usize>,

    #[arg(long)]
    pub warmup: Option<usize>,

    #[arg(long)]
    pub samples: Option<usize>,

    #[arg(long)]
    pub target_accept: Option<f64>,
}

#[derive(serde::Serialize)]
struct Resolved {
    mode: String,
    holdout: Option<f64>,
    replicates: usize,
    variant: String,
    p: usize,
    sampler: Option<SamplerConfig>,
    seed: u64,
}

pub fn run(args: &ValidateArgs, globals: &Globals) -> CliResult<()> {
    if args.against_truth {
        run_against_truth(args, globals)
    } else {
        run_holdout(args, globals)
    }
}

fn run_against_truth(args: &ValidateArgs, globals: &Globals) -> CliResult<()> {
    let start = Instant::now();
    let fit_dir = args.fit_dir.as_ref().expect("clap requires fit_dir");
    let truth_dir = args.truth_dir.as_ref().expect("clap requires truth_dir");
    let spec = fitio::load_spec(fit_dir)?;
    let samples = fitio::load_chains(fit_dir)?;
    let data = MortalityDataset::load_long_csv(truth_dir.join("dataset.csv"))?;
    if data.dims() != spec.dims() {
        return Err(CliError::runtime(anyhow::anyhow!(
            "truth dataset dims {:?} do not match fitted model {:?}",
            data.dims(),
            spec.dims()
        )));
    }
    let truth = load_truth(truth_dir, &data)?;
    let report = simulation_report(&samples, &spec, &truth)?;
    write_reports(&globals.out_dir, std::slice::from_ref(&report), &[])?;
    let resolved = Resolved {
        mode: "against-truth".into(),
        holdout: None,
        replicates: 1,
        variant: spec.variant.to_string(),
        p: spec.p,
        sampler: None,
        seed: globals.seed,
    };
    meta::write_run_json(
        &globals.out_dir,
        "validate",
        &resolved,
        &[],
        start.elapsed().as_secs_f64(),
    )?;
    for row in &report.rows {
        println!(
            "validate: {} @ {:.0}%: {:.3} (n={})",
            row.family,
            row.level * 100.0,
            row.coverage(),
            row.total
        );
    }
    Ok(())
}

fn run_holdout(args: &ValidateArgs, globals: &Globals) -> CliResult<()> {
    let start = Instant::now();
    let data_path = args.data.as_ref().ok_or_else(|| {
        CliError::usage(anyhow::anyhow!(
            "holdout mode needs --data (or use --against-truth)"
        ))
    })?;
    let data = MortalityDataset::load_long_csv(data_path)?;
    let file_cfg = &globals.file;
    let fraction = args.holdout.or(file_cfg.validate.holdout).unwrap_or(0.2);
    let replicates = args
        .replicates
        .or(file_cfg.validate.replicates)
        .unwrap_or(1)
        .max(1);
    let p = args.p.or(file_cfg.fit.p).unwrap_or(2);
    let basis = crate::common::load_basis(&args.basis, p)?;
    let defaults = SamplerConfig::default();
    let cfg = SamplerConfig {
        chains: args
            .chains
            .or(file_cfg.fit.chains)
            .unwrap_or(defaults.chains),
        warmup: args
            .warmup
            .or(file_cfg.fit.warmup)
            .unwrap_or(defaults.warmup),
        samples: args
            .samples
            .or(file_cfg.fit.samples)
            .unwrap_or(defaults.samples),
        seed: globals.seed,
        target_accept: args
            .target_accept
            .or(file_cfg.fit.target_accept)
            .unwrap_or(defaults.target_accept),
        ..defaults
    };
    let variant = cmd_fit::parse_variant(
        args.variant
            .as_deref()
            .or(file_cfg.fit.variant.as_deref())
            .unwrap_or("joint"),
    )?;

    let mut reports: Vec<EvalReport> = Vec::new();
    let mut cells_file = std::io::BufWriter::new(std::fs::File::create(
        globals.out_dir.join("test_cells.csv"),
    )?);
    writeln!(cells_file, "replicate,age,subpop,area,year")?;

    for r in 0..replicates {
        let split_seed = globals.seed.wrapping_add(r as u64);
        if args.compare {
            let spec_joint = ModelSpec::new(
                p,
                data.dims(),
                basis.clone(),
                Variant::Joint,
                Hyper::default(),
            )?;
            let spec_indep = ModelSpec::new(
                p,
                data.dims(),
                basis.clone(),
                Variant::Independent,
                Hyper::default(),
            )?;
            let cmp =
                compare_variants(&data, &spec_joint, &spec_indep, &cfg, fraction, split_seed)?;
            for cell in &cmp.test_cells {
                writeln!(
                    cells_file,
                    "{},{},{},{},{}",
                    r + 1,
                    data.age_grid.labels()[cell.age],
                    data.subpop_names[cell.subpop],
                    data.area_names[cell.area],
                    data.year_labels[cell.year]
                )?;
            }
            reports.push(cmp.joint);
            reports.push(cmp.independent);
        } else {
            let spec = ModelSpec::new(p, data.dims(), basis.clone(), variant, Hyper::default())?;
            let (train, test_cells) = data.holdout_split(fraction, split_seed)?;
            for cell in &test_cells {
                writeln!(
                    cells_file,
                    "{},{},{},{},{}",
                    r + 1,
                    data.age_grid.labels()[cell.age],
                    data.subpop_names[cell.subpop],
                    data.area_names[cell.area],
                    data.year_labels[cell.year]
                )?;
            }
            let target = PosteriorTarget::new(&spec, &train)?;
            let (samples, _) = sample(&target, &cfg)?;
            reports.push(holdout_report(
                &samples,
                &spec,
                &test_cells,
                &data,
                cfg.seed,
            )?);
        }
    }
    cells_file.flush()?;

    let replicate_of = |i: usize| if args.compare { i / 2 + 1 } else { i + 1 };
    write_reports_with_replicates(&globals.out_dir, &reports, replicate_of)?;
    let resolved = Resolved {
        mode: if args.compare {
            "holdout-compare".into()
        } else {
            "holdout".into()
        },
        holdout: Some(fraction),
        replicates,
        variant: variant.to_string(),
        p,
        sampler: Some(cfg),
        seed: globals.seed,
    };
    meta::write_run_json(
        &globals.out_dir,
        "validate",
        &resolved,
        &[],
        start.elapsed().as_secs_f64(),
    )?;
    for (i, rep) in reports.iter().enumerate() {
        println!(
            "validate: replicate {} {}: MAD {:.4}, MSE {:.4}, n = {}",
            replicate_of(i),
            rep.variant,
            rep.mad.unwrap_or(f64::NAN),
            rep.mse.unwrap_or(f64::NAN),
            rep.n_holdout_cells
        );
    }
    Ok(())
}

fn write_reports(dir: &Path, reports: &[EvalReport], _unused: &[usize]) -> CliResult<()> {
    write_reports_with_replicates(dir, reports, |_| 1)
}

fn write_reports_with_replicates<F: Fn(usize) -> usize>(
    dir: &Path,
    reports: &[EvalReport],
    replicate_of: F,
) -> CliResult<()> {
    std::fs::write(
        dir.join("eval_report.json"),
        serde_json::to_string_pretty(reports).map_err(anyhow::Error::from)? + "\n",
    )?;
    let mut w = std::io::BufWriter::new(std::fs::File::create(dir.join("eval_report.csv"))?);
    writeln!(w, "replicate,variant,metric,level,value,n")?;
    for (i, rep) in reports.iter().enumerate() {
        let r = replicate_of(i);
        for row in &rep.rows {
            writeln!(
                w,
                "{r},{},coverage_{},{},{},{}",
                rep.variant,
                row.family,
                row.level,
                row.coverage(),
                row.total
            )?;
        }
        if let Some(mad) = rep.mad {
            writeln!(
                w,
                "{r},{},mad,,{},{}",
                rep.variant, mad, rep.n_holdout_cells
            )?;
        }
        if let Some(mse) = rep.mse {
            writeln!(
                w,
                "{r},{},mse,,{},{}",
                rep.variant, mse, rep.n_holdout_cells
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads truth files written by `simulate` back into evaluation form.
/// Coefficient tensors are not needed for scoring and are left zero.
fn load_truth(dir: &Path, data: &MortalityDataset) -> CliResult<SimTruth> {
    let (n_age, n_sub, n_area, n_year) = data.dims();
    let find = |names: &[String], v: &str, what: &str| -> CliResult<usize> {
        names.iter().position(|n| n == v).ok_or_else(|| {
            CliError::runtime(anyhow::anyhow!("unknown {what} label {v:?} in truth"))
        })
    };

    let mut log_rates = Array4::from_elem((n_age, n_sub, n_area, n_year), f64::NAN);
    {
        let path = dir.join("truth_log_rates.csv");
        let mut rdr = csv::Reader::from_path(&path)
            .map_err(|e| CliError::usage(anyhow::anyhow!("cannot read {}: {e}", path.display())))?;
        for record in rdr.records() {
            let record = record.map_err(CoreError::from)?;
            let a = data
                .age_grid
                .index_of(record[0].trim())
                .ok_or_else(|| CliError::runtime(anyhow::anyhow!("unknown age label in truth")))?;
            let s = find(&data.subpop_names, record[1].trim(), "subpop")?;
            let c = find(&data.area_names, record[2].trim(), "area")?;
            let t = find(&data.year_labels, record[3].trim(), "year")?;
            let v: f64 = record[4]
                .trim()
                .parse()
                .map_err(|e| CliError::runtime(anyhow::anyhow!("bad truth value: {e}")))?;
            log_rates[(a, s, c, t)] = v;
        }
        if log_rates.iter().any(|v| v.is_nan()) {
            return Err(CliError::runtime(anyhow::anyhow!(
                "truth_log_rates.csv does not cover every cell"
            )));
        }
    }

    let mut baseline_corr = vec![Array2::eye(n_sub); n_year];
    let mut hump_corr = vec![Array2::eye(n_sub); n_year];
    {
        let path = dir.join("truth_correlations.csv");
        let mut rdr = csv::Reader::from_path(&path)
            .map_err(|e| CliError::usage(anyhow::anyhow!("cannot read {}: {e}", path.display())))?;
        for record in rdr.records() {
            let record = record.map_err(CoreError::from)?;
            let t = find(&data.year_labels, record[1].trim(), "year")?;
            let s1 = find(&data.subpop_names, record[2].trim(), "subpop")?;
            let s2 = find(&data.subpop_names, record[3].trim(), "subpop")?;
            let v: f64 = record[4]
                .trim()
                .parse()
                .map_err(|e| CliError::runtime(anyhow::anyhow!("bad correlation value: {e}")))?;
            let mats = match record[0].trim() {
                "baseline" => &mut baseline_corr,
                "hump" => &mut hump_corr,
                other => {
                    return Err(CliError::runtime(anyhow::anyhow!(
                        "unknown correlation role {other:?}"
                    )))
                }
            };
            mats[t][(s1, s2)] = v;
            mats[t][(s2, s1)] = v;
        }
    }

    Ok(SimTruth {
        log_rates,
        baseline_coefs: Array3::zeros((n_sub, n_area, n_year)),
        hump_coefs: Array3::zeros((n_sub, n_area, n_year)),
        baseline_corr,
        hump_corr,
    })
}
