//! `dmp-sim`: generate demonstrations, train pose-DMP models, replay the
//! perturbation experiments, and aggregate episode logs.
//!
//! Exit codes: 0 success, 2 usage or input errors, 3 training errors,
//! 4 runtime aborts inside an episode.

mod config;
mod report;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use nalgebra::Vector3;

use cartesian_dmp::dmp::Pose;
use cartesian_dmp::io::{read_demo_csv, write_demo_csv, write_model_file, IoFormatError};
use cartesian_dmp::learning::{
    synth_demo, train_from_demo, DemoKind, SynthDemoConfig, TrainConfig,
};
use cartesian_dmp::quaternion::UnitQuaternion;

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_TRAINING: u8 = 3;
pub const EXIT_RUNTIME: u8 = 4;

#[derive(Parser)]
#[command(name = "dmp-sim", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic demonstration CSV.
    DemoGen(DemoGenArgs),
    /// Fit a model from a demonstration by locally weighted regression.
    Train(TrainArgs),
    /// Run one or more closed-loop episodes and write logs plus a summary.
    Run(run::RunArgs),
    /// Aggregate episode logs into a convergence table and plot-ready CSV.
    Report(report::ReportArgs),
}

fn parse_vec3(s: &str) -> Result<Vector3<f64>, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected X,Y,Z, got '{s}'"));
    }
    let mut v = [0.0; 3];
    for (i, p) in parts.iter().enumerate() {
        v[i] = p.trim().parse().map_err(|_| format!("bad number '{p}'"))?;
    }
    Ok(Vector3::new(v[0], v[1], v[2]))
}

fn parse_quat(s: &str) -> Result<UnitQuaternion, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 4 {
        return Err(format!("expected W,X,Y,Z, got '{s}'"));
    }
    let mut v = [0.0; 4];
    for (i, p) in parts.iter().enumerate() {
        v[i] = p.trim().parse().map_err(|_| format!("bad number '{p}'"))?;
    }
    UnitQuaternion::try_new(v[0], v[1], v[2], v[3])
        .ok_or_else(|| "zero-norm quaternion".to_string())
}

#[derive(Args)]
struct DemoGenArgs {
    /// Demonstration kind: `reach` or `handover_gt_pi`.
    #[arg(long)]
    kind: String,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Motion duration in seconds.
    #[arg(long, default_value_t = 4.0)]
    duration: f64,
    /// Sample rate in Hz.
    #[arg(long, default_value_t = 250.0)]
    rate: f64,
    /// Start position `X,Y,Z` in meters.
    #[arg(long, value_parser = parse_vec3)]
    start_pos: Option<Vector3<f64>>,
    /// Start orientation `W,X,Y,Z`.
    #[arg(long, value_parser = parse_quat)]
    start_quat: Option<UnitQuaternion>,
    /// Goal position `X,Y,Z` in meters.
    #[arg(long, value_parser = parse_vec3)]
    goal_pos: Option<Vector3<f64>>,
    /// Goal orientation `W,X,Y,Z` (reach only; overrides --axis/--angle).
    #[arg(long, value_parser = parse_quat)]
    goal_quat: Option<UnitQuaternion>,
    /// Rotation axis `X,Y,Z`.
    #[arg(long, value_parser = parse_vec3)]
    axis: Option<Vector3<f64>>,
    /// Rotation angle in radians about --axis.
    #[arg(long)]
    angle: Option<f64>,
}

fn cmd_demo_gen(args: DemoGenArgs) -> anyhow::Result<()> {
    let (kind, dflt_start, dflt_goal_pos, dflt_axis, dflt_angle) = match args.kind.as_str() {
        "reach" => (
            DemoKind::Reach,
            Vector3::new(0.35, -0.25, 0.20),
            Vector3::new(0.55, 0.15, 0.35),
            Vector3::z(),
            0.9,
        ),
        "handover_gt_pi" => (
            DemoKind::HandoverGtPi,
            Vector3::new(0.45, -0.25, 0.25),
            Vector3::new(0.45, 0.25, 0.25),
            Vector3::x(),
            1.5 * std::f64::consts::PI,
        ),
        other => anyhow::bail!("unknown --kind '{other}' (expected reach|handover_gt_pi)"),
    };
    let start = Pose::new(
        args.start_pos.unwrap_or(dflt_start),
        args.start_quat.unwrap_or_else(UnitQuaternion::identity),
    );
    let goal_position = args.goal_pos.unwrap_or(dflt_goal_pos);
    let cfg = match (kind, args.goal_quat) {
        (DemoKind::Reach, Some(goal_quat)) => SynthDemoConfig::reach(
            start,
            Pose::new(goal_position, goal_quat),
            args.duration,
            args.rate,
        )?,
        _ => SynthDemoConfig {
            kind,
            duration: args.duration,
            sample_rate: args.rate,
            start,
            goal_position,
            rotation_axis: args.axis.unwrap_or(dflt_axis),
            rotation_angle: args.angle.unwrap_or(dflt_angle),
        },
    };
    let demo = synth_demo(&cfg)?;
    write_demo_csv(&args.out, &demo).with_context(|| format!("writing {}", args.out.display()))?;
    println!(
        "wrote {} samples over {}s to {}",
        demo.len(),
        demo.duration(),
        args.out.display()
    );
    Ok(())
}

#[derive(Args)]
struct TrainArgs {
    /// Demonstration CSV to fit.
    #[arg(long)]
    demo: PathBuf,
    /// Output model file.
    #[arg(long)]
    out: PathBuf,
    /// Basis functions per dimension.
    #[arg(long, default_value_t = 25)]
    n_basis: usize,
    #[arg(long, default_value_t = 25.0)]
    alpha_z: f64,
    #[arg(long, default_value_t = 1.0)]
    alpha_x: f64,
}

fn cmd_train(args: TrainArgs) -> Result<(), u8> {
    let demo = match read_demo_csv(&args.demo) {
        Ok(demo) => demo,
        Err(e @ IoFormatError::Learn(_)) => {
            eprintln!("error: demonstration is unusable for training: {e}");
            return Err(EXIT_TRAINING);
        }
        Err(e) => {
            eprintln!("error: cannot read demonstration: {e}");
            return Err(EXIT_USAGE);
        }
    };
    let cfg = TrainConfig {
        alpha_z: args.alpha_z,
        alpha_x: args.alpha_x,
        n_basis: args.n_basis,
    };
    let outcome = match train_from_demo(&demo, &cfg) {
        Ok(outcome) => outcome,
        Err(e) => {
            eprintln!("error: training failed: {e}");
            return Err(EXIT_TRAINING);
        }
    };
    if let Err(e) = write_model_file(&args.out, &outcome.model) {
        eprintln!("error: cannot write model: {e}");
        return Err(EXIT_USAGE);
    }
    println!("wrote model to {}", args.out.display());
    println!(
        "tau = {} s (demonstration duration), n_basis = {}",
        outcome.model.tau(),
        outcome.model.n_basis()
    );
    print!("rms forcing residual per dimension:");
    for r in outcome.report.rms_residual {
        print!(" {r:.6e}");
    }
    println!();
    if !outcome.report.skipped_dims.is_empty() {
        println!(
            "warning: degenerate scaling, weights fixed to zero in dimensions {:?}",
            outcome.report.skipped_dims
        );
    }
    if !outcome.report.ill_conditioned.is_empty() {
        println!(
            "warning: {} ill-conditioned basis fits were zeroed",
            outcome.report.ill_conditioned.len()
        );
    }
    if outcome.non_uniform_sampling {
        println!("warning: sample spacing varies by more than 10%");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::DemoGen(args) => match cmd_demo_gen(args) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e:#}");
                ExitCode::from(EXIT_USAGE)
            }
        },
        Command::Train(args) => match cmd_train(args) {
            Ok(()) => ExitCode::SUCCESS,
            Err(code) => ExitCode::from(code),
        },
        Command::Run(args) => match run::cmd_run(args) {
            Ok(code) => code,
            Err(e) => {
                eprintln!("error: {e:#}");
                ExitCode::from(EXIT_USAGE)
            }
        },
        Command::Report(args) => match report::cmd_report(args) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e:#}");
                ExitCode::from(EXIT_USAGE)
            }
        },
    }
}
