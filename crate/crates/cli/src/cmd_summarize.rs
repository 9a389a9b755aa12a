//! `summarize`: pooled-chain quantiles of one derived quantity from a
//! fitted run directory.

use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use clap::Args;
use multimort::model::Quantity;
use multimort::sampler::summarize;

use crate::common::{CliResult, Globals};
use crate::{fitio, meta};

#[derive(Debug, Args)]
pub struct SummarizeArgs {
    /// Fit directory written by `fit`.
    #[arg(long)]
    pub fit_dir: PathBuf,

    /// Quantity name, e.g. `log_rate[3,0,12,5]`, `mu_beta[0,1,4]`,
    /// `corr_beta[0,4,1,0]`, `corr_gamma[2,4,1,0]`, `sigma_beta[0,4]`,
    /// `sigma_mu[0]`, `sigma_a[2]` (all indices 0-based).
    #[arg(long)]
    pub quantity: String,

    /// Quantile levels.
    #[arg(long, default_value = "0.025,0.25,0.5,0.75,0.975")]
    pub probs: String,
}

#[derive(serde::Serialize)]
struct Resolved {
    fit_dir: String,
    quantity: String,
    probs: Vec<f64>,
}

pub fn run(args: &SummarizeArgs, globals: &Globals) -> CliResult<()> {
    let start = Instant::now();
    let quantity = Quantity::from_str(&args.quantity)?;
    let probs = crate::common::parse_probs(&args.probs)?;
    let spec = fitio::load_spec(&args.fit_dir)?;
    let samples = fitio::load_chains(&args.fit_dir)?;
    let table = summarize(&samples, &spec, &quantity, &probs)?;

    let mut w =
        std::io::BufWriter::new(std::fs::File::create(globals.out_dir.join("summary.csv"))?);
    writeln!(w, "quantity,prob,value")?;
    for (p, v) in table.probs.iter().zip(&table.values) {
        writeln!(w, "{},{},{}", table.quantity, p, v)?;
    }
    writeln!(w, "{},median,{}", table.quantity, table.median)?;
    w.flush()?;

    println!("{}: median {}", table.quantity, table.median);
    for (p, v) in table.probs.iter().zip(&table.values) {
        println!("  q{p} = {v}");
    }
    let resolved = Resolved {
        fit_dir: args.fit_dir.display().to_string(),
        quantity: args.quantity.clone(),
        probs,
    };
    meta::write_run_json(
        &globals.out_dir,
        "summarize",
        &resolved,
        &[],
        start.elapsed().as_secs_f64(),
    )?;
    Ok(())
}
