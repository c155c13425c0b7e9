//! The `run` subcommand: batches of closed-loop episodes.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::Args;

use cartesian_dmp::controller::Gains;
use cartesian_dmp::dmp::DmpModel;
use cartesian_dmp::io::{read_demo_csv, read_model_file, write_episode_csv};
use cartesian_dmp::learning::{train_from_demo, TrainConfig};
use cartesian_dmp::sim::analysis::{summarize, EpisodeSummary};
use cartesian_dmp::sim::presets::{setup_episode, setup_model, SetupPreset};
use cartesian_dmp::sim::{run_episode, EpisodeConfig, EpisodeError};

use crate::config::RunConfig;
use crate::EXIT_RUNTIME;

/// Environment variable overriding the output directory.
pub const OUT_DIR_ENV: &str = "DMP_SIM_OUT_DIR";

#[derive(Args)]
pub struct RunArgs {
    /// Experiment preset: setup1, setup2, setup3 or custom.
    #[arg(long)]
    preset: Option<String>,
    /// Key-value run configuration file; command-line flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Model file (custom preset needs this or --demo; optional otherwise).
    #[arg(long)]
    model: Option<PathBuf>,
    /// Demonstration CSV to train a model from before running.
    #[arg(long)]
    demo: Option<PathBuf>,
    /// Number of trials.
    #[arg(long)]
    trials: Option<u64>,
    /// Seed for the per-trial perturbation directions.
    #[arg(long)]
    seed: Option<u64>,
    /// Concurrent trials (0 = one per core).
    #[arg(long)]
    jobs: Option<usize>,
    /// Drop all scheduled perturbations.
    #[arg(long)]
    no_perturb: bool,
    /// Output directory for logs and the summary.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Episode horizon in seconds.
    #[arg(long)]
    horizon: Option<f64>,
    /// Control period in seconds.
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    k_v: Option<f64>,
    /// Separate velocity gain for the orientation domain (defaults to k_v).
    #[arg(long)]
    k_v_angular: Option<f64>,
    #[arg(long)]
    alpha_e: Option<f64>,
    #[arg(long)]
    k_c: Option<f64>,
    /// Convergence tolerance on every state-component norm.
    #[arg(long)]
    summary_tol: Option<f64>,
}

struct TrialOutcome {
    trial: u64,
    file: String,
    summary: Option<EpisodeSummary>,
    abort: Option<String>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"))
}

pub fn cmd_run(args: RunArgs) -> Result<ExitCode> {
    let file_cfg = match &args.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    let preset_name = args
        .preset
        .clone()
        .or(file_cfg.preset.clone())
        .context("--preset (or a config 'preset') is required")?;
    let model_path = args.model.clone().or(file_cfg.model.clone());
    let trials = args.trials.or(file_cfg.trials).unwrap_or(1).max(1);
    let seed = args.seed.or(file_cfg.seed).unwrap_or(0);
    let jobs = args.jobs.or(file_cfg.jobs).unwrap_or(0);
    let no_perturb = args.no_perturb || file_cfg.no_perturb.unwrap_or(false);
    let summary_tol = args.summary_tol.or(file_cfg.summary_tol).unwrap_or(1e-3);
    let out_dir = std::env::var_os(OUT_DIR_ENV)
        .map(PathBuf::from)
        .or(args.out_dir.clone())
        .or(file_cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("runs"));

    let preset = if preset_name == "custom" {
        None
    } else {
        Some(
            preset_name
                .parse::<SetupPreset>()
                .map_err(anyhow::Error::msg)?,
        )
    };

    let demo_path = args.demo.clone().or(file_cfg.demo.clone());
    let model: DmpModel = match (&model_path, &demo_path, preset) {
        (Some(path), _, _) => {
            read_model_file(path).with_context(|| format!("loading model {}", path.display()))?
        }
        (None, Some(path), _) => {
            let demo = read_demo_csv(path)
                .with_context(|| format!("loading demonstration {}", path.display()))?;
            train_from_demo(&demo, &TrainConfig::default())
                .with_context(|| format!("training on {}", path.display()))?
                .model
        }
        (None, None, Some(p)) => setup_model(p)?,
        (None, None, None) => {
            bail!("the custom preset needs --model or --demo (or a config 'model'/'demo')")
        }
    };
    let mut gains = Gains::new(
        args.k_v.or(file_cfg.k_v).unwrap_or(10.0),
        args.alpha_e.or(file_cfg.alpha_e).unwrap_or(10.0),
        args.k_c.or(file_cfg.k_c).unwrap_or(1000.0),
        model.tau(),
    )?;
    if let Some(k_v_angular) = args.k_v_angular.or(file_cfg.k_v_angular) {
        gains = gains.with_angular_k_v(k_v_angular)?;
    }

    let episode_for = |trial: u64| -> EpisodeConfig {
        let mut episode = match preset {
            Some(p) => setup_episode(p, seed, trial),
            None => EpisodeConfig {
                perturbations: file_cfg.perturbations.clone(),
                ..EpisodeConfig::default()
            },
        };
        if let Some(h) = args.horizon.or(file_cfg.horizon) {
            episode.horizon = h;
        }
        if let Some(dt) = args.dt.or(file_cfg.dt) {
            episode.dt = dt;
        }
        if no_perturb {
            episode.perturbations.clear();
        }
        episode
    };

    std::fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;

    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?;
    let outcomes: Vec<TrialOutcome> = pool.install(|| {
        use rayon::prelude::*;
        (0..trials)
            .into_par_iter()
            .map(|trial| {
                let episode = episode_for(trial);
                let file = format!("trial_{trial:03}.csv");
                let path = out_dir.join(&file);
                match run_episode(&model, &gains, &episode) {
                    Ok(log) => {
                        let summary = summarize(&log, &gains, &episode, gains.tau(), summary_tol);
                        write_episode_csv(&path, &log)
                            .map(|_| TrialOutcome {
                                trial,
                                file,
                                summary: Some(summary),
                                abort: None,
                            })
                            .unwrap_or_else(|e| TrialOutcome {
                                trial,
                                file: String::new(),
                                summary: None,
                                abort: Some(format!("cannot write log: {e}")),
                            })
                    }
                    Err(EpisodeError::Aborted {
                        t,
                        step,
                        source,
                        log,
                    }) => {
                        let _ = write_episode_csv(&path, &log);
                        TrialOutcome {
                            trial,
                            file,
                            summary: None,
                            abort: Some(format!("aborted at t = {t:.4} (step {step}): {source}")),
                        }
                    }
                    Err(e) => TrialOutcome {
                        trial,
                        file: String::new(),
                        summary: None,
                        abort: Some(e.to_string()),
                    },
                }
            })
            .collect()
    });

    let mut outcomes = outcomes;
    outcomes.sort_by_key(|o| o.trial);
    let converged = outcomes
        .iter()
        .filter(|o| o.summary.as_ref().is_some_and(|s| s.converged))
        .count();
    let aborted = outcomes.iter().filter(|o| o.abort.is_some()).count();

    let mut text = String::new();
    let _ = writeln!(text, "preset = {preset_name}");
    let _ = writeln!(text, "trials = {trials}");
    let _ = writeln!(text, "seed = {seed}");
    let _ = writeln!(text, "tau = {}", gains.tau());
    let _ = writeln!(text, "convergence_tol = {summary_tol}");
    let _ = writeln!(text, "converged = {converged}/{trials}");
    let _ = writeln!(text, "aborted = {aborted}");
    for o in &outcomes {
        match (&o.summary, &o.abort) {
            (Some(s), _) => {
                let _ = writeln!(
                    text,
                    "trial {:03}: converged = {}, convergence_time = {}, goal_converged = {}, \
                     max_tau_ratio = {:.4}, decay_slope = {}, decay_r2 = {}, \
                     equator_crossed = {}, initial_dcg = {}, final_dcg = {}, \
                     final_goal_err = {}, file = {}",
                    o.trial,
                    s.converged,
                    fmt_opt(s.convergence_time),
                    s.goal_converged,
                    s.max_tau_ratio,
                    fmt_opt(s.decay.map(|d| d.slope)),
                    fmt_opt(s.decay.map(|d| d.r_squared)),
                    s.equator_crossed,
                    s.initial_dcg,
                    s.final_dcg,
                    s.final_goal_err,
                    o.file
                );
            }
            (None, Some(msg)) => {
                let _ = writeln!(
                    text,
                    "trial {:03}: ABORTED ({msg}), file = {}",
                    o.trial, o.file
                );
            }
            (None, None) => unreachable!("trial without summary or abort"),
        }
    }
    let goal_converged = outcomes
        .iter()
        .filter(|o| o.summary.as_ref().is_some_and(|s| s.goal_converged))
        .count();
    let max_ratio = outcomes
        .iter()
        .filter_map(|o| o.summary.as_ref().map(|s| s.max_tau_ratio))
        .fold(0.0f64, f64::max);
    let _ = writeln!(
        text,
        "aggregate: converged = {converged}/{trials}, goal_converged = {goal_converged}/{trials}, \
         aborted = {aborted}, max_tau_ratio = {max_ratio:.4}"
    );

    print!("{text}");
    std::fs::write(out_dir.join("summary.txt"), &text)
        .with_context(|| format!("writing summary to {}", out_dir.display()))?;

    Ok(if aborted > 0 {
        ExitCode::from(EXIT_RUNTIME)
    } else {
        ExitCode::SUCCESS
    })
}
