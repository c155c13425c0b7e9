//! The three desk-scale experiment presets.
//!
//! Setup 1 releases the robot from a displaced pose against a converged,
//! task-free DMP and watches the subsystem errors decay. Setups 2 and 3
//! train a DMP from a synthetic demonstration (a reach, and a handover whose
//! rotation exceeds pi) and disturb the motion with two acceleration pulses.
//! Perturbation directions are drawn per trial from a seeded stream; the
//! magnitudes are fixed.

use std::str::FromStr;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitSphere};
use thiserror::Error;

use crate::controller::{Gains, GainsError};
use crate::dmp::{DmpModel, ModelError, Pose};
use crate::learning::{synth_demo, train_from_demo, LearnError, SynthDemoConfig, TrainConfig};
use crate::quaternion::UnitQuaternion;
use crate::sim::{EpisodeConfig, Perturbation, DEFAULT_DT};

/// Displacement magnitude for the release experiment, meters.
pub const RELEASE_OFFSET: f64 = 0.1;
/// Rotation offset for the release experiment, radians.
pub const RELEASE_ANGLE: f64 = 0.5;
/// Acceleration pulse magnitudes, m/s^2 and rad/s^2.
pub const PULSE_LINEAR: f64 = 5.0;
pub const PULSE_ANGULAR: f64 = 5.0;
/// Pulse duration, seconds.
pub const PULSE_LEN: f64 = 0.3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SetupPreset {
    /// Displace-and-release against a converged DMP.
    Setup1,
    /// Reach motion with two acceleration pulses.
    Setup2,
    /// Handover motion (rotation over pi) with two acceleration pulses.
    Setup3,
}

impl SetupPreset {
    pub fn as_str(&self) -> &'static str {
        match self {
            SetupPreset::Setup1 => "setup1",
            SetupPreset::Setup2 => "setup2",
            SetupPreset::Setup3 => "setup3",
        }
    }
}

impl FromStr for SetupPreset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "setup1" => Ok(SetupPreset::Setup1),
            "setup2" => Ok(SetupPreset::Setup2),
            "setup3" => Ok(SetupPreset::Setup3),
            other => Err(format!(
                "unknown preset '{other}' (expected setup1|setup2|setup3)"
            )),
        }
    }
}

#[derive(Debug, Error)]
pub enum PresetError {
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Gains(#[from] GainsError),
}

/// Everything needed to run one trial.
#[derive(Clone, Debug)]
pub struct TrialSetup {
    pub model: DmpModel,
    pub gains: Gains,
    pub episode: EpisodeConfig,
}

fn reach_demo_config() -> SynthDemoConfig {
    let start = Pose::new(Vector3::new(0.35, -0.25, 0.20), UnitQuaternion::identity());
    let goal = Pose::new(
        Vector3::new(0.55, 0.15, 0.35),
        UnitQuaternion::from_axis_angle(&Vector3::z(), 0.9),
    );
    SynthDemoConfig::reach(start, goal, 4.0, 250.0).expect("fixed poses are regular")
}

fn handover_demo_config() -> SynthDemoConfig {
    let start = Pose::new(Vector3::new(0.45, -0.25, 0.25), UnitQuaternion::identity());
    SynthDemoConfig::handover(
        start,
        Vector3::new(0.45, 0.25, 0.25),
        Vector3::x(),
        1.5 * std::f64::consts::PI,
        4.0,
        250.0,
    )
}

/// The preset's model. Setup 1 uses a task-free DMP already at its goal;
/// setups 2 and 3 train on their synthetic demonstration. Deterministic.
pub fn setup_model(preset: SetupPreset) -> Result<DmpModel, PresetError> {
    match preset {
        SetupPreset::Setup1 => {
            let pose = Pose::new(
                Vector3::new(0.5, 0.0, 0.3),
                UnitQuaternion::from_axis_angle(&Vector3::z(), 0.7),
            );
            Ok(DmpModel::with_default_basis(
                25.0, 1.0, 1.0, 25, 1.0, &pose, &pose,
            )?)
        }
        SetupPreset::Setup2 => {
            let demo = synth_demo(&reach_demo_config())?;
            Ok(train_from_demo(&demo, &TrainConfig::default())?.model)
        }
        SetupPreset::Setup3 => {
            let demo = synth_demo(&handover_demo_config())?;
            Ok(train_from_demo(&demo, &TrainConfig::default())?.model)
        }
    }
}

/// Default gains for a preset's model.
pub fn setup_gains(model: &DmpModel) -> Result<Gains, PresetError> {
    Ok(Gains::defaults(model.tau())?)
}

fn unit_vector(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    let v: [f64; 3] = UnitSphere.sample(rng);
    Vector3::new(v[0], v[1], v[2])
}

/// Per-trial episode schedule. Trials index independent random streams of
/// one seed, so batches are reproducible and order-independent.
pub fn setup_episode(preset: SetupPreset, seed: u64, trial: u64) -> EpisodeConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    match preset {
        SetupPreset::Setup1 => EpisodeConfig {
            horizon: 3.0,
            dt: DEFAULT_DT,
            perturbations: vec![Perturbation::DisplaceRelease {
                t: 0.0,
                delta_position: unit_vector(&mut rng) * RELEASE_OFFSET,
                delta_rotation: unit_vector(&mut rng) * RELEASE_ANGLE,
            }],
            start_at_goal: true,
            converged_phase: 1e-6,
        },
        SetupPreset::Setup2 | SetupPreset::Setup3 => {
            let windows = [(0.8, 0.8 + PULSE_LEN), (3.6, 3.6 + PULSE_LEN)];
            let perturbations = windows
                .iter()
                .map(|&(t_start, t_end)| Perturbation::AccelPulse {
                    t_start,
                    t_end,
                    linear: unit_vector(&mut rng) * PULSE_LINEAR,
                    angular: unit_vector(&mut rng) * PULSE_ANGULAR,
                })
                .collect();
            EpisodeConfig {
                horizon: 12.0,
                dt: DEFAULT_DT,
                perturbations,
                start_at_goal: false,
                converged_phase: 1e-6,
            }
        }
    }
}

/// Model, gains and episode schedule for one trial of a preset.
pub fn build_setup(preset: SetupPreset, seed: u64, trial: u64) -> Result<TrialSetup, PresetError> {
    let model = setup_model(preset)?;
    let gains = setup_gains(&model)?;
    let episode = setup_episode(preset, seed, trial);
    Ok(TrialSetup {
        model,
        gains,
        episode,
    })
}
