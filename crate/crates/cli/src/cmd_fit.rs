//! `fit`: run the sampler on a dataset and write checkpoints, diagnostics,
//! and plot-ready summaries.

use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use multimort::data::MortalityDataset;
use multimort::model::{Hyper, ModelSpec, PosteriorTarget, Variant};
use multimort::sampler::{sample, SamplerConfig};

use crate::common::{CliError, CliResult, Globals};
use crate::{fitio, meta};

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Dataset long CSV.
    #[arg(long)]
    pub data: PathBuf,

    /// Basis source: `from-truth` (built-in standard curves) or a
    /// components CSV written by `decompose`.
    #[arg(long, default_value = "from-truth")]
    pub basis: String,

    /// Number of components used.
    #[arg(long)]
    pub p: Option<usize>,

    /// Model variant: joint or independent.
    #[arg(long)]
    pub variant: Option<String>,

    /// Pool correlation matrices over years.
    #[arg(long)]
    pub share_correlations_over_time: bool,

    #[arg(long)]
    pub chains: Option<usize>,

    #[arg(long)]
    pub warmup: Option<usize>,

    #[arg(long)]
    pub samples: Option<usize>,

    #[arg(long)]
    pub target_accept: Option<f64>,

    #[arg(long)]
    pub max_treedepth: Option<u32>,

    #[arg(long)]
    pub init_jitter: Option<f64>,

    /// Quantile levels in the summary CSVs.
    #[arg(long, default_value = "0.025,0.5,0.975")]
    pub probs: String,

    /// Also write every unconstrained draw as CSV (large).
    #[arg(long)]
    pub emit_draws: bool,
}

#[derive(serde::Serialize)]
struct Resolved {
    data: String,
    basis: String,
    p: usize,
    variant: String,
    share_correlations_over_time: bool,
    sampler: SamplerConfig,
    probs: Vec<f64>,
    emit_draws: bool,
}

pub fn parse_variant(text: &str) -> CliResult<Variant> {
    match text {
        "joint" => Ok(Variant::Joint),
        "independent" => Ok(Variant::Independent),
        other => Err(CliError::usage(anyhow::anyhow!(
            "unknown variant {other:?}; use joint or independent"
        ))),
    }
}

pub fn run(args: &FitArgs, globals: &Globals) -> CliResult<()> {
    let start = Instant::now();
    let file_cfg = &globals.file.fit;
    let data = MortalityDataset::load_long_csv(&args.data)?;
    let p = args.p.or(file_cfg.p).unwrap_or(2);
    let variant = parse_variant(
        args.variant
            .as_deref()
            .or(file_cfg.variant.as_deref())
            .unwrap_or("joint"),
    )?;
    let basis = crate::common::load_basis(&args.basis, p)?;
    let mut spec = ModelSpec::new(p, data.dims(), basis, variant, Hyper::default())?;
    spec.share_correlations_over_time =
        args.share_correlations_over_time || file_cfg.share_correlations_over_time.unwrap_or(false);

    let defaults = SamplerConfig::default();
    let cfg = SamplerConfig {
        chains: args.chains.or(file_cfg.chains).unwrap_or(defaults.chains),
        warmup: args.warmup.or(file_cfg.warmup).unwrap_or(defaults.warmup),
        samples: args
            .samples
            .or(file_cfg.samples)
            .unwrap_or(defaults.samples),
        seed: globals.seed,
        target_accept: args
            .target_accept
            .or(file_cfg.target_accept)
            .unwrap_or(defaults.target_accept),
        max_treedepth: args
            .max_treedepth
            .or(file_cfg.max_treedepth)
            .unwrap_or(defaults.max_treedepth),
        init_jitter: args
            .init_jitter
            .or(file_cfg.init_jitter)
            .unwrap_or(defaults.init_jitter),
    };
    let probs = crate::common::parse_probs(&args.probs)?;

    println!(
        "fit: {} variant, P = {p}, dims (A,S,C,T) = {:?}, {} parameters, {} chains × ({} warmup + {} samples)",
        variant,
        data.dims(),
        spec.layout().n_params(),
        cfg.chains,
        cfg.warmup,
        cfg.samples
    );

    let target = PosteriorTarget::new(&spec, &data)?;
    let (samples, diag) = sample(&target, &cfg)?;

    let dir = &globals.out_dir;
    fitio::save_spec(dir, &spec)?;
    fitio::save_chains(dir, &samples)?;
    fitio::save_labels(dir, &data)?;
    fitio::write_diagnostics_csv(dir, &spec, &diag)?;
    fitio::write_log_rate_summary(dir, &spec, &data, &samples, &probs)?;
    fitio::write_mu_beta_summary(dir, &spec, &data, &samples, &probs)?;
    fitio::write_correlation_summary(dir, &spec, &data, &samples, &probs)?;
    if args.emit_draws {
        fitio::write_draws_csv(dir, &spec, &samples)?;
    }

    let mut warnings = Vec::new();
    let max_rhat = diag.max_rhat();
    if max_rhat > 1.01 {
        warnings.push(format!(
            "max split R-hat {max_rhat:.4} exceeds 1.01; inspect diagnostics.csv"
        ));
    }
    let div_rate = diag.divergence_rate();
    if div_rate > 0.005 {
        warnings.push(format!(
            "divergent transition rate {div_rate:.4} exceeds 0.5%; consider a higher target_accept"
        ));
    }
    for w in &warnings {
        eprintln!("warning: {w}");
    }

    let resolved = Resolved {
        data: args.data.display().to_string(),
        basis: args.basis.clone(),
        p,
        variant: variant.to_string(),
        share_correlations_over_time: spec.share_correlations_over_time,
        sampler: cfg,
        probs,
        emit_draws: args.emit_draws,
    };
    meta::write_run_json(
        dir,
        "fit",
        &resolved,
        &warnings,
        start.elapsed().as_secs_f64(),
    )?;
    println!(
        "fit: done in {:.1}s; max rhat {max_rhat:.4}, divergences {} / {}",
        start.elapsed().as_secs_f64(),
        diag.divergences,
        diag.total_transitions
    );
    Ok(())
}
