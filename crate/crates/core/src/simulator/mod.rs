//! Closed-loop simulation of the stabilized head.
//!
//! Each tick reads the disturbance, forms the fixation-twist estimate for the
//! configured mode, converts it into neck/eye commands, advances the plant and
//! measures the image motion of a static point cloud in the left camera.

pub mod flow;
pub mod log;
pub mod plant;
pub mod script;

use nalgebra::{SVector, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use flow::{flow_metric, CameraModel, FlowSample, PointCloud};
pub use log::{summarize, LogRow, LogStats, RunMeta, Summary, TrajectoryLog};
pub use plant::{step, synth_gyro, GyroNoise, PlantModel, PlantState};
pub use script::{
    DisturbanceJoint, DisturbanceSample, DisturbanceScript, ScriptSegment, StochasticSegment,
};

use crate::error::{GazeError, Result};
use crate::model::{HeadModel, HEAD_DOF};
use crate::stabilizer::{
    compensate, estimate_ifb, estimate_kff, ImuSample, Mode, StabilizerCommand, StabilizerConfig,
    Twist,
};
use crate::stereo::{camera_frames, fixation_full_jacobian, fixation_point};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CloudParams {
    pub points: usize,
    /// Camera depth range of the cloud (meters).
    pub depth_min: f64,
    pub depth_max: f64,
}

impl Default for CloudParams {
    fn default() -> Self {
        Self {
            points: 800,
            depth_min: 1.95,
            depth_max: 2.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimParams {
    pub dt: f64,
    pub duration: f64,
    pub seed: u64,
    /// Initial straight-ahead fixation distance (meters).
    pub fixation_distance: f64,
    pub camera: CameraModel,
    pub cloud: CloudParams,
    pub plant: PlantModel,
    /// Gyroscope noise per axis (rad/s).
    pub gyro_sigma: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            dt: 0.01,
            duration: 14.0,
            seed: 0,
            fixation_distance: 2.0,
            camera: CameraModel::default(),
            cloud: CloudParams::default(),
            plant: PlantModel::default(),
            gyro_sigma: 0.005,
        }
    }
}

impl SimParams {
    /// Number of steps; the log has one more row than this.
    pub fn steps(&self) -> Result<usize> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(GazeError::InvalidInput(format!(
                "dt = {} must be positive",
                self.dt
            )));
        }
        if !(self.duration.is_finite() && self.duration >= 0.0) {
            return Err(GazeError::InvalidInput(format!(
                "duration = {} must be non-negative",
                self.duration
            )));
        }
        let n = (self.duration / self.dt).round();
        if (n * self.dt - self.duration).abs() > 1e-9 * self.duration.max(1.0) {
            return Err(GazeError::InvalidInput(format!(
                "duration {} is not a whole number of {} s steps",
                self.duration, self.dt
            )));
        }
        Ok(n as usize)
    }

    pub fn validate(&self) -> Result<()> {
        self.steps()?;
        self.camera.validate()?;
        self.plant.validate()?;
        if self.cloud.points < flow::MIN_VALID_POINTS {
            return Err(GazeError::InvalidInput(format!(
                "cloud needs at least {} points",
                flow::MIN_VALID_POINTS
            )));
        }
        if !(self.gyro_sigma.is_finite() && self.gyro_sigma >= 0.0) {
            return Err(GazeError::InvalidInput(
                "gyro noise sigma must be finite and >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// A run that stopped early, with everything logged up to that point.
#[derive(Debug, Clone)]
pub struct RunFailure {
    pub error: GazeError,
    pub partial: TrajectoryLog,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} (after {} logged ticks)",
            self.error,
            self.partial.rows.len()
        )
    }
}

impl std::error::Error for RunFailure {}

pub type RunResult = std::result::Result<TrajectoryLog, Box<RunFailure>>;

fn twist_from(jac_product: SVector<f64, 6>, base_velocity: &Vector3<f64>) -> Twist {
    let t = Twist::from_vector(&jac_product);
    Twist::new(t.linear + base_velocity, t.angular)
}

/// Runs one closed-loop experiment. Deterministic in `(model, script, config, params)`.
pub fn run_experiment(
    model: &HeadModel,
    script: &DisturbanceScript,
    config: &StabilizerConfig,
    params: &SimParams,
) -> RunResult {
    let mut log = TrajectoryLog {
        meta: RunMeta {
            mode: config.mode,
            dof_set: config.dof_set,
            seed: params.seed,
            script: script.name.clone(),
            model: model.name.clone(),
            dt: params.dt,
            duration: params.duration,
            fixation_distance: params.fixation_distance,
        },
        rows: Vec::new(),
    };
    match simulate(model, script, config, params, &mut log) {
        Ok(()) => Ok(log),
        Err(error) => Err(Box::new(RunFailure {
            error,
            partial: log,
        })),
    }
}

fn simulate(
    model: &HeadModel,
    script: &DisturbanceScript,
    config: &StabilizerConfig,
    params: &SimParams,
    log: &mut TrajectoryLog,
) -> Result<()> {
    config.validate()?;
    params.validate()?;
    let steps = params.steps()?;
    let dt = params.dt;
    let script = script.prepare(params.seed)?;

    let q0 = model.fixating_at(params.fixation_distance)?;
    let initial = camera_frames(model, &q0)?;
    let mut cloud_rng = ChaCha8Rng::seed_from_u64(params.seed);
    let cloud = PointCloud::sample(
        &params.camera,
        &initial.left_pose(),
        params.cloud.points,
        params.cloud.depth_min,
        params.cloud.depth_max,
        &mut cloud_rng,
    )?;
    let mut noise = GyroNoise::new(params.gyro_sigma, params.seed)?;

    let mut state = PlantState::at_rest(q0);
    let mut previous: Option<PlantState> = None;
    let mut last_command = StabilizerCommand::zero();
    log.rows.reserve(steps + 1);

    for k in 0..=steps {
        let t = k as f64 * dt;
        state.t = t;
        let disturbance = script.sample(t);
        let here = state.model(model);

        let estimate = match config.mode {
            Mode::Off => Ok(Twist::zero()),
            Mode::Kff => {
                let z = Vector3::zeros();
                estimate_kff(&here, &state.q, &disturbance.known_torso, &z, &z)
                    .map(|tw| Twist::new(tw.linear + disturbance.known_base, tw.angular))
            }
            Mode::Ifb => match &previous {
                None => Ok(Twist::zero()),
                Some(prev) => inertial_estimate(model, prev, &state, dt, &mut noise),
            },
        };
        let (estimate, command) = match estimate {
            Ok(est) if config.mode == Mode::Off => (est, StabilizerCommand::zero()),
            Ok(est) => {
                let cmd = compensate(&est, &here, &state.q, config)?;
                (est, cmd)
            }
            Err(GazeError::SingularConfiguration { .. }) => (
                Twist::zero(),
                StabilizerCommand {
                    singular: true,
                    ..StabilizerCommand::zero()
                },
            ),
            Err(e) => return Err(e),
        };
        // A singular fixation geometry keeps the previous command running.
        let command = if command.singular {
            StabilizerCommand {
                singular: true,
                ..last_command
            }
        } else {
            command
        };

        let next = step(model, &params.plant, &state, &disturbance, &command, dt)?;

        let (disturbance_twist, compensated) = match fixation_full_jacobian(&here, &state.q) {
            Ok(jac) => {
                let mut torso_only = SVector::<f64, HEAD_DOF>::zeros();
                torso_only
                    .fixed_rows_mut::<3>(0)
                    .copy_from(&next.qdot.fixed_rows::<3>(0));
                (
                    twist_from(jac * torso_only, &next.base_velocity),
                    twist_from(jac * next.qdot, &next.base_velocity),
                )
            }
            Err(GazeError::SingularConfiguration { .. }) => (Twist::zero(), Twist::zero()),
            Err(e) => return Err(e),
        };
        let frames_now = camera_frames(&here, &state.q)?;
        let frames_next = camera_frames(&next.model(model), &next.q)?;
        let flow = flow_metric(
            &params.camera,
            &frames_now,
            &frames_next,
            &cloud,
            &compensated,
            t,
        )
        .map_err(|e| match e {
            GazeError::InsufficientCoverage { .. } => GazeError::SimulationDiverged {
                t,
                reason: format!("{e}"),
            },
            other => other,
        })?;

        log.rows.push(LogRow {
            t,
            segment: disturbance.label,
            q: state.q,
            base: state.base,
            command,
            estimate,
            disturbance: disturbance_twist,
            compensated,
            flow,
        });
        last_command = command;
        previous = Some(state);
        state = next;
    }
    Ok(())
}

/// Inertial estimate from the gyroscope, with the neck's own measured rotation
/// removed so that only the disturbance is fed back.
fn inertial_estimate(
    model: &HeadModel,
    prev: &PlantState,
    now: &PlantState,
    dt: f64,
    noise: &mut GyroNoise,
) -> Result<Twist> {
    let imu = synth_gyro(model, prev, now, dt, noise)?;
    let frames = model.head_chain().frames(&prev.q.head_chain_q())?;
    let neck_rotation: Vector3<f64> = (0..3)
        .map(|i| frames[3 + i].z_axis() * now.qdot[3 + i])
        .sum();
    let x_fp = fixation_point(&camera_frames(&now.model(model), &now.q)?)?.x_fp;
    estimate_ifb(
        &ImuSample {
            omega: imu.omega - neck_rotation,
            position: imu.position,
        },
        &x_fp,
    )
}

/// Runs independent experiments concurrently, one thread per job. Results are
/// returned in job order.
pub fn run_sweep(
    model: &HeadModel,
    script: &DisturbanceScript,
    jobs: &[(StabilizerConfig, SimParams)],
) -> Vec<RunResult> {
    std::thread::scope(|s| {
        let handles: Vec<_> = jobs
            .iter()
            .map(|(config, params)| s.spawn(move || run_experiment(model, script, config, params)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("simulation thread panicked"))
            .collect()
    })
}
