//! The `report` subcommand: per-trial convergence table, aggregate
//! statistics, and a long-format norms CSV for plotting.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;

use cartesian_dmp::io::{read_episode_norms, EpisodeNormRow};
use cartesian_dmp::sim::analysis::{log_linear_fit, GOAL_ANG_TOL, GOAL_POS_TOL};

#[derive(Args)]
pub struct ReportArgs {
    /// Episode log CSVs, or directories containing them.
    #[arg(long, num_args = 1.., required = true)]
    logs: Vec<PathBuf>,
    /// Per-trial convergence table CSV.
    #[arg(long)]
    out: PathBuf,
    /// Long-format norms CSV (`trial,file,t,series,value`), for plotting.
    #[arg(long)]
    long_out: Option<PathBuf>,
    /// Convergence tolerance on every component norm.
    #[arg(long, default_value_t = 1e-3)]
    tol: f64,
}

const SERIES: [&str; 11] = [
    "x", "tau_a", "n_ypos", "n_yvel", "n_dac", "n_womega", "n_e", "n_ycg", "n_z", "n_dcg", "n_wz",
];

fn collect_logs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut inside: Vec<PathBuf> = std::fs::read_dir(input)
                .with_context(|| format!("reading {}", input.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|e| e == "csv"))
                .collect();
            inside.sort();
            files.extend(inside);
        } else {
            files.push(input.clone());
        }
    }
    Ok(files)
}

fn series_value(row: &EpisodeNormRow, series: &str) -> f64 {
    match series {
        "x" => row.x,
        "tau_a" => row.tau_a,
        _ => {
            let idx = SERIES
                .iter()
                .position(|s| *s == series)
                .expect("known series")
                - 2;
            row.norms[idx]
        }
    }
}

/// Total stacked norm reconstructed from the component norms.
fn total_norm(row: &EpisodeNormRow) -> f64 {
    (row.x * row.x + row.norms.iter().map(|n| n * n).sum::<f64>()).sqrt()
}

fn decay_of(rows: &[EpisodeNormRow]) -> Option<(f64, f64)> {
    let (peak_idx, peak) = rows
        .iter()
        .enumerate()
        .map(|(i, r)| (i, total_norm(r)))
        .max_by(|a, b| a.1.total_cmp(&b.1))?;
    if peak <= 0.0 {
        return None;
    }
    let mut end = rows.len() - 1;
    for (i, r) in rows.iter().enumerate().skip(peak_idx) {
        if total_norm(r) <= 1e-4 * peak {
            end = i;
            break;
        }
    }
    let pts: Vec<(f64, f64)> = rows[peak_idx..=end]
        .iter()
        .map(|r| (r.t, total_norm(r)))
        .collect();
    log_linear_fit(&pts)
}

pub fn cmd_report(args: ReportArgs) -> Result<()> {
    let files = collect_logs(&args.logs)?;
    if files.is_empty() {
        bail!("no episode logs found");
    }
    let mut table = csv::Writer::from_path(&args.out)
        .with_context(|| format!("writing {}", args.out.display()))?;
    table.write_record([
        "trial",
        "file",
        "records",
        "duration",
        "converged",
        "goal_converged",
        "final_max_norm",
        "max_tau_ratio",
        "decay_slope",
        "decay_r2",
    ])?;
    let mut long = match &args.long_out {
        Some(path) => {
            let mut w = csv::Writer::from_path(path)
                .with_context(|| format!("writing {}", path.display()))?;
            w.write_record(["trial", "file", "t", "series", "value"])?;
            Some(w)
        }
        None => None,
    };
    let mut n_converged = 0usize;
    let mut sum_final = 0.0f64;
    for (trial, file) in files.iter().enumerate() {
        let rows =
            read_episode_norms(file).with_context(|| format!("reading {}", file.display()))?;
        if rows.is_empty() {
            bail!("{}: empty episode log", file.display());
        }
        let name = file_name(file);
        let last = rows.last().expect("nonempty");
        let converged = last.max_component() < args.tol;
        // header order: n_ypos .. n_ycg is index 5, n_dcg index 7
        let goal_converged = last.norms[5] < GOAL_POS_TOL && last.norms[7] < GOAL_ANG_TOL;
        if converged {
            n_converged += 1;
        }
        sum_final += last.max_component();
        // the adaptive time parameter never undershoots the nominal one, so
        // the smallest logged value estimates it
        let tau_est = rows.iter().map(|r| r.tau_a).fold(f64::INFINITY, f64::min);
        let max_ratio = rows.iter().map(|r| r.tau_a).fold(0.0f64, f64::max) / tau_est;
        let decay = decay_of(&rows);
        table.write_record([
            trial.to_string(),
            name.clone(),
            rows.len().to_string(),
            (last.t - rows[0].t).to_string(),
            converged.to_string(),
            goal_converged.to_string(),
            last.max_component().to_string(),
            max_ratio.to_string(),
            decay.map_or("n/a".into(), |d| d.0.to_string()),
            decay.map_or("n/a".into(), |d| d.1.to_string()),
        ])?;
        if let Some(w) = &mut long {
            for row in &rows {
                for series in SERIES {
                    w.write_record([
                        trial.to_string(),
                        name.clone(),
                        row.t.to_string(),
                        series.to_string(),
                        series_value(row, series).to_string(),
                    ])?;
                }
            }
        }
    }
    table.flush()?;
    if let Some(w) = &mut long {
        w.flush()?;
    }
    println!(
        "trials = {}, converged = {}/{}, mean_final_max_norm = {:.6e}",
        files.len(),
        n_converged,
        files.len(),
        sum_final / files.len() as f64
    );
    println!("table written to {}", args.out.display());
    if let Some(path) = &args.long_out {
        println!("long-format norms written to {}", path.display());
    }
    Ok(())
}

fn file_name(path: &Path) -> String {
    path.file_name().map_or_else(
        || path.display().to_string(),
        |n| n.to_string_lossy().into_owned(),
    )
}
