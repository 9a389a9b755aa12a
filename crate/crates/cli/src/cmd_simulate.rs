//! `simulate`: synthetic dataset generation with the truth retained.

use std::io::Write;
use std::time::Instant;

use clap::Args;
use multimort::simgen::{
    default_schedule, draw_deaths, make_population, make_truth, Regime, SimConfig, StandardCurves,
};

use crate::common::{CliError, CliResult, Globals};
use crate::meta;

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub areas: Option<usize>,

    #[arg(long)]
    pub years: Option<usize>,

    #[arg(long)]
    pub subgroups: Option<usize>,

    /// Year-1 population per unit of area index.
    #[arg(long)]
    pub base_pop_unit: Option<f64>,

    /// Annual population growth rate.
    #[arg(long)]
    pub growth: Option<f64>,

    /// Use one regime for every year instead of the default
    /// independent/exchangeable/unstructured thirds: one of
    /// `independent`, `exchangeable:<rho>`, `unstructured:<name>`.
    #[arg(long)]
    pub regime: Option<String>,
}

pub fn run(args: &SimulateArgs, globals: &Globals) -> CliResult<()> {
    let start = Instant::now();
    let file_cfg = &globals.file.simulate;
    let areas = args.areas.or(file_cfg.areas).unwrap_or(25);
    let years = args.years.or(file_cfg.years).unwrap_or(10);
    let subgroups = args.subgroups.or(file_cfg.subgroups).unwrap_or(5);

    let mut cfg = SimConfig::with_defaults(areas, years, subgroups, globals.seed);
    if let Some(v) = args.base_pop_unit.or(file_cfg.base_pop_unit) {
        cfg.base_pop_unit = v;
    }
    if let Some(v) = args.growth.or(file_cfg.growth) {
        cfg.growth = v;
    }
    if let Some(rho) = file_cfg.exchangeable_rho {
        cfg.regime_schedule = vec![Regime::Exchangeable { rho }; years];
    }
    if let Some(regime) = &args.regime {
        cfg.regime_schedule = vec![parse_regime(regime)?; years];
    } else if args.regime.is_none() && file_cfg.exchangeable_rho.is_none() {
        cfg.regime_schedule = default_schedule(years);
    }
    cfg.validate()?;

    let curves = StandardCurves::builtin();
    let population = make_population(&cfg)?;
    let truth = make_truth(&cfg, &curves)?;
    let data = draw_deaths(&truth, &population, &curves, globals.seed)?;

    let dir = &globals.out_dir;
    data.save_long_csv(dir.join("dataset.csv"))?;

    // truth log rates in long form with dataset labels
    {
        let mut w =
            std::io::BufWriter::new(std::fs::File::create(dir.join("truth_log_rates.csv"))?);
        writeln!(w, "age,subpop,area,year,log_rate")?;
        let (n_age, n_sub, n_area, n_year) = data.dims();
        for c in 0..n_area {
            for s in 0..n_sub {
                for t in 0..n_year {
                    for a in 0..n_age {
                        writeln!(
                            w,
                            "{},{},{},{},{}",
                            data.age_grid.labels()[a],
                            data.subpop_names[s],
                            data.area_names[c],
                            data.year_labels[t],
                            truth.log_rates[(a, s, c, t)]
                        )?;
                    }
                }
            }
        }
        w.flush()?;
    }

    // per-year correlation matrices for both curve roles
    {
        let mut w =
            std::io::BufWriter::new(std::fs::File::create(dir.join("truth_correlations.csv"))?);
        writeln!(w, "role,year,subpop_1,subpop_2,value")?;
        for (role, mats) in [
            ("baseline", &truth.baseline_corr),
            ("hump", &truth.hump_corr),
        ] {
            for (t, mat) in mats.iter().enumerate() {
                for s1 in 1..subgroups {
                    for s2 in 0..s1 {
                        writeln!(
                            w,
                            "{role},{},{},{},{}",
                            data.year_labels[t],
                            data.subpop_names[s1],
                            data.subpop_names[s2],
                            mat[(s1, s2)]
                        )?;
                    }
                }
            }
        }
        w.flush()?;
    }

    std::fs::write(
        dir.join("sim_config.json"),
        serde_json::to_string_pretty(&cfg).map_err(anyhow::Error::from)? + "\n",
    )?;
    meta::write_run_json(dir, "simulate", &cfg, &[], start.elapsed().as_secs_f64())?;
    println!(
        "simulate: {} areas × {} years × {} subgroups, {} observed cells",
        areas,
        years,
        subgroups,
        data.n_observed()
    );
    Ok(())
}

fn parse_regime(text: &str) -> CliResult<Regime> {
    let text = text.trim();
    if text == "independent" {
        return Ok(Regime::Independent);
    }
    if let Some(rho) = text.strip_prefix("exchangeable:") {
        let rho: f64 = rho
            .trim()
            .parse()
            .map_err(|e| CliError::usage(anyhow::anyhow!("bad rho in {text:?}: {e}")))?;
        return Ok(Regime::Exchangeable { rho });
    }
    if let Some(name) = text.strip_prefix("unstructured:") {
        return Ok(Regime::Unstructured {
            name: name.trim().to_string(),
        });
    }
    Err(CliError::usage(anyhow::anyhow!(
        "unknown regime {text:?}; use independent, exchangeable:<rho>, or unstructured:<name>"
    )))
}
