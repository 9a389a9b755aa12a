//! `decompose`: SVD basis construction plus component-selection report.

use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use multimort::pcbasis::{selection_report, svd_basis};

use crate::common::{CliResult, Globals};
use crate::meta;

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    /// Curve-collection CSV (subpop,area,year,<age labels…>).
    #[arg(long)]
    pub input: PathBuf,

    /// Components to retain (default: number of age groups).
    #[arg(long)]
    pub p_max: Option<usize>,

    /// Significance level for the pairwise location tests.
    #[arg(long)]
    pub alpha: Option<f64>,

    /// Lower clamp for the recommended component count.
    #[arg(long)]
    pub min_p: Option<usize>,

    /// Components covered by the selection report.
    #[arg(long)]
    pub max_p: Option<usize>,
}

#[derive(serde::Serialize)]
struct Resolved {
    input: String,
    p_max: usize,
    alpha: f64,
    min_p: usize,
    max_p: usize,
    seed: u64,
    recommended_p: usize,
}

pub fn run(args: &DecomposeArgs, globals: &Globals) -> CliResult<()> {
    let start = Instant::now();
    let file_cfg = &globals.file.decompose;
    let curves = crate::common::load_curves(&args.input)?;
    let n_age = curves.age_grid.len();
    let p_max = args.p_max.or(file_cfg.p_max).unwrap_or(n_age);
    let alpha = args.alpha.or(file_cfg.alpha).unwrap_or(0.05);
    let min_p = args.min_p.or(file_cfg.min_p).unwrap_or(3);
    let max_p = args.max_p.or(file_cfg.max_p).unwrap_or(p_max.min(8));

    let basis = svd_basis(&curves, p_max)?;
    let subpop_labels: Vec<String> = curves.row_meta.iter().map(|m| m.subpop.clone()).collect();
    let report = selection_report(&basis, &subpop_labels, alpha, min_p, max_p)?;

    let dir = &globals.out_dir;

    // components.csv: one row per age group, one column per component
    {
        let mut w = std::io::BufWriter::new(std::fs::File::create(dir.join("components.csv"))?);
        write!(w, "age")?;
        for k in 0..basis.p_max() {
            write!(w, ",pc{}", k + 1)?;
        }
        writeln!(w)?;
        for (a, label) in curves.age_grid.labels().iter().enumerate() {
            write!(w, "{label}")?;
            for k in 0..basis.p_max() {
                write!(w, ",{}", basis.components()[(k, a)])?;
            }
            writeln!(w)?;
        }
        w.flush()?;
    }

    {
        let ev = basis.explained_variance();
        let mut w =
            std::io::BufWriter::new(std::fs::File::create(dir.join("singular_values.csv"))?);
        writeln!(w, "component,singular_value,explained_variance")?;
        for (k, (sv, e)) in basis.singular_values().iter().zip(&ev).enumerate() {
            writeln!(w, "{},{},{}", k + 1, sv, e)?;
        }
        w.flush()?;
    }

    {
        let mut w =
            std::io::BufWriter::new(std::fs::File::create(dir.join("selection_report.csv"))?);
        writeln!(
            w,
            "component,explained_variance,subpop_a,mean_a,subpop_b,mean_b,t_stat,p_value"
        )?;
        for row in &report.rows {
            for pt in &row.pair_tests {
                let mean_of = |name: &str| {
                    row.subpop_means
                        .iter()
                        .find(|(n, _)| n == name)
                        .map(|(_, m)| *m)
                        .unwrap_or(f64::NAN)
                };
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{}",
                    row.component + 1,
                    row.explained_variance,
                    pt.subpop_a,
                    mean_of(&pt.subpop_a),
                    pt.subpop_b,
                    mean_of(&pt.subpop_b),
                    pt.t.map_or("NA".to_string(), |t| t.to_string()),
                    pt.p.map_or("NA".to_string(), |p| p.to_string()),
                )?;
            }
        }
        w.flush()?;
    }

    let resolved = Resolved {
        input: args.input.display().to_string(),
        p_max,
        alpha,
        min_p,
        max_p,
        seed: globals.seed,
        recommended_p: report.recommended_p,
    };
    meta::write_run_json(
        dir,
        "decompose",
        &resolved,
        &[],
        start.elapsed().as_secs_f64(),
    )?;
    println!(
        "decompose: {} curves × {} ages; recommended P = {}",
        curves.n_curves(),
        n_age,
        report.recommended_p
    );
    Ok(())
}
