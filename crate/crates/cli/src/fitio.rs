//! Fit-directory layout: reading and writing everything `fit` produces and
//! `validate`/`summarize` consume.
//!
//! ```text
//! <out>/
//!   model_spec.json        versioned model structure incl. basis
//!   chain_000.bin …        binary draw checkpoints, one per chain
//!   diagnostics.csv        parameter,rhat,ess
//!   summary_log_rates.csv  per-cell quantiles of log mortality
//!   summary_mu_beta.csv    mean-coefficient time series quantiles
//!   summary_correlations.csv  correlation time series quantiles (joint)
//!   draws.csv              optional, with --emit-draws
//!   run.json               resolved config echo
//! ```

use std::io::Write;
use std::path::Path;

use multimort::data::MortalityDataset;
use multimort::error::Error as CoreError;
use multimort::eval::correlation_entry_draws;
use multimort::model::{constrain, ModelSpec, Variant};
use multimort::sampler::{read_chain, write_chain, Diagnostics, PosteriorSamples};
use multimort::simgen::subgroup_name;
use multimort::stats;

use crate::common::{CliError, CliResult};

pub fn save_spec(dir: &Path, spec: &ModelSpec) -> CliResult<()> {
    std::fs::write(dir.join("model_spec.json"), spec.to_json()? + "\n")?;
    Ok(())
}

pub fn load_spec(dir: &Path) -> CliResult<ModelSpec> {
    let path = dir.join("model_spec.json");
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::usage(anyhow::anyhow!("cannot read {}: {e}", path.display())))?;
    Ok(ModelSpec::from_json(&text)?)
}

pub fn save_chains(dir: &Path, samples: &PosteriorSamples) -> CliResult<()> {
    for (k, chain) in samples.chains().iter().enumerate() {
        write_chain(dir.join(format!("chain_{k:03}.bin")), k as u32, chain)?;
    }
    Ok(())
}

pub fn load_chains(dir: &Path) -> CliResult<PosteriorSamples> {
    let mut chains = Vec::new();
    loop {
        let path = dir.join(format!("chain_{:03}.bin", chains.len()));
        if !path.exists() {
            break;
        }
        let (_, chain) = read_chain(&path)?;
        chains.push(chain);
    }
    if chains.is_empty() {
        return Err(CliError::usage(anyhow::anyhow!(
            "no chain checkpoints (chain_000.bin …) in {}",
            dir.display()
        )));
    }
    Ok(PosteriorSamples::new(chains))
}

pub fn write_diagnostics_csv(dir: &Path, spec: &ModelSpec, diag: &Diagnostics) -> CliResult<()> {
    let layout = spec.layout();
    let mut w = std::io::BufWriter::new(std::fs::File::create(dir.join("diagnostics.csv"))?);
    writeln!(w, "parameter,rhat,ess")?;
    for (idx, (rhat, ess)) in diag.rhat.iter().zip(&diag.ess).enumerate() {
        writeln!(w, "{},{},{}", layout.name(idx), rhat, ess)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_draws_csv(dir: &Path, spec: &ModelSpec, samples: &PosteriorSamples) -> CliResult<()> {
    let layout = spec.layout();
    let mut w = std::io::BufWriter::new(std::fs::File::create(dir.join("draws.csv"))?);
    writeln!(w, "chain,iter,parameter,value")?;
    let mut err = None;
    samples.for_each_draw(|ci, di, v| {
        if err.is_some() {
            return;
        }
        for (idx, val) in v.iter().enumerate() {
            if let Err(e) = writeln!(w, "{ci},{di},{},{val}", layout.name(idx)) {
                err = Some(e);
                return;
            }
        }
    });
    if let Some(e) = err {
        return Err(e.into());
    }
    w.flush()?;
    Ok(())
}

/// Per-cell quantiles of the log-rate surface, processed in cell blocks to
/// bound memory at any scale.
pub fn write_log_rate_summary(
    dir: &Path,
    spec: &ModelSpec,
    data: &MortalityDataset,
    samples: &PosteriorSamples,
    probs: &[f64],
) -> CliResult<()> {
    let (n_age, n_sub, n_area, n_year) = spec.dims();
    let n_cells = n_age * n_sub * n_area * n_year;
    let n_draws = samples.total_draws();
    let mut w = std::io::BufWriter::new(std::fs::File::create(dir.join("summary_log_rates.csv"))?);
    write!(w, "age,subpop,area,year")?;
    for p in probs {
        write!(w, ",q{p}")?;
    }
    writeln!(w)?;

    let block = (64_000_000 / n_draws.max(1)).clamp(256, n_cells.max(256));
    let mut start = 0usize;
    while start < n_cells {
        let end = (start + block).min(n_cells);
        let width = end - start;
        let mut buf = vec![0.0f64; width * n_draws];
        let mut row = 0usize;
        let mut cerr: Option<CoreError> = None;
        samples.for_each_draw(|_, _, v| {
            if cerr.is_some() {
                return;
            }
            match constrain(spec, v) {
                Ok((params, _)) => {
                    let flat = params.log_rates.as_slice().expect("contiguous");
                    for (j, &lr) in flat[start..end].iter().enumerate() {
                        buf[j * n_draws + row] = lr;
                    }
                    row += 1;
                }
                Err(e) => cerr = Some(e),
            }
        });
        if let Some(e) = cerr {
            return Err(e.into());
        }
        for j in 0..width {
            let cell = start + j;
            let t = cell % n_year;
            let c = (cell / n_year) % n_area;
            let s = (cell / (n_year * n_area)) % n_sub;
            let a = cell / (n_year * n_area * n_sub);
            let series = &mut buf[j * n_draws..(j + 1) * n_draws];
            series.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
            write!(
                w,
                "{},{},{},{}",
                data.age_grid.labels()[a],
                data.subpop_names[s],
                data.area_names[c],
                data.year_labels[t]
            )?;
            for &p in probs {
                write!(w, ",{}", stats::quantile_sorted(series, p))?;
            }
            writeln!(w)?;
        }
        start = end;
    }
    w.flush()?;
    Ok(())
}

/// Mean-coefficient time-series quantiles (one row per component ×
/// subpopulation × year), plot-ready.
pub fn write_mu_beta_summary(
    dir: &Path,
    spec: &ModelSpec,
    data: &MortalityDataset,
    samples: &PosteriorSamples,
    probs: &[f64],
) -> CliResult<()> {
    let layout = spec.layout();
    let mut w = std::io::BufWriter::new(std::fs::File::create(dir.join("summary_mu_beta.csv"))?);
    write!(w, "component,subpop,year")?;
    for p in probs {
        write!(w, ",q{p}")?;
    }
    writeln!(w)?;
    let mut series = vec![0.0f64; samples.total_draws()];
    for i in 0..spec.p {
        for s in 0..spec.n_subpop {
            for t in 0..spec.n_year {
                let idx = layout.mu_beta(i, s, t);
                let mut row = 0;
                samples.for_each_draw(|_, _, v| {
                    series[row] = v[idx];
                    row += 1;
                });
                series.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
                write!(
                    w,
                    "{},{},{}",
                    i + 1,
                    data.subpop_names[s],
                    data.year_labels[t]
                )?;
                for &p in probs {
                    write!(w, ",{}", stats::quantile_sorted(&series, p))?;
                }
                writeln!(w)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Correlation time-series quantiles for both families (joint variant
/// only): coefficient correlations per component-year-pair, overdispersion
/// correlations per age-year-pair.
pub fn write_correlation_summary(
    dir: &Path,
    spec: &ModelSpec,
    data: &MortalityDataset,
    samples: &PosteriorSamples,
    probs: &[f64],
) -> CliResult<()> {
    if spec.variant != Variant::Joint {
        return Ok(());
    }
    let s_n = spec.n_subpop;
    let n_pairs = s_n * (s_n - 1) / 2;
    let mut w =
        std::io::BufWriter::new(std::fs::File::create(dir.join("summary_correlations.csv"))?);
    write!(w, "family,index,year,subpop_1,subpop_2")?;
    for p in probs {
        write!(w, ",q{p}")?;
    }
    writeln!(w)?;
    for (family, beta_family) in [("beta", true), ("gamma", false)] {
        let mut draws = correlation_entry_draws(samples, spec, beta_family)?;
        let rows = if beta_family { spec.p } else { spec.n_age };
        for r in 0..rows {
            for t in 0..spec.n_year {
                let mut k = 0usize;
                for s1 in 1..s_n {
                    for s2 in 0..s1 {
                        let series = &mut draws[(r * spec.n_year + t) * n_pairs + k];
                        series
                            .sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
                        let index_label = if beta_family {
                            format!("{}", r + 1)
                        } else {
                            data.age_grid.labels()[r].clone()
                        };
                        write!(
                            w,
                            "{family},{index_label},{},{},{}",
                            data.year_labels[t],
                            subpop_label(data, s1),
                            subpop_label(data, s2)
                        )?;
                        for &p in probs {
                            write!(w, ",{}", stats::quantile_sorted(series, p))?;
                        }
                        writeln!(w)?;
                        k += 1;
                    }
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn subpop_label(data: &MortalityDataset, s: usize) -> String {
    data.subpop_names
        .get(s)
        .cloned()
        .unwrap_or_else(|| subgroup_name(s))
}

/// The dataset labels a fit was built against, persisted so downstream
/// commands can label summaries without the original data file.
pub fn save_labels(dir: &Path, data: &MortalityDataset) -> CliResult<()> {
    #[derive(serde::Serialize)]
    struct Labels<'a> {
        age: &'a [String],
        subpop: &'a [String],
        area: &'a [String],
        year: &'a [String],
        age_lower_bounds: &'a [f64],
    }
    let labels = Labels {
        age: data.age_grid.labels(),
        subpop: &data.subpop_names,
        area: &data.area_names,
        year: &data.year_labels,
        age_lower_bounds: data.age_grid.lower_bounds(),
    };
    std::fs::write(
        dir.join("labels.json"),
        serde_json::to_string_pretty(&labels).map_err(anyhow::Error::from)? + "\n",
    )?;
    Ok(())
}
