//! Joint-level plant: scripted torso/base motion, first-order velocity
//! tracking for the commanded neck and eye DoF, and a gyroscope model.

use nalgebra::{Rotation3, SVector, UnitQuaternion, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::script::DisturbanceSample;
use crate::error::{GazeError, Result};
use crate::model::{HeadJoints, HeadModel, HEAD_DOF};
use crate::stabilizer::{ImuSample, StabilizerCommand};

/// Velocity tracking time constants (seconds). Zero means ideal tracking.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantModel {
    pub tau_neck: f64,
    pub tau_eye: f64,
}

impl Default for PlantModel {
    fn default() -> Self {
        Self {
            tau_neck: 0.08,
            tau_eye: 0.02,
        }
    }
}

impl PlantModel {
    pub fn ideal() -> Self {
        Self {
            tau_neck: 0.0,
            tau_eye: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, tau) in [("tau_neck", self.tau_neck), ("tau_eye", self.tau_eye)] {
            if !(tau.is_finite() && tau >= 0.0) {
                return Err(GazeError::InvalidInput(format!(
                    "{name} = {tau} must be finite and >= 0"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantState {
    pub q: HeadJoints,
    /// Joint rates actually applied over the last step.
    pub qdot: SVector<f64, HEAD_DOF>,
    /// Base (prismatic stage) displacement, world frame.
    pub base: Vector3<f64>,
    pub base_velocity: Vector3<f64>,
    pub t: f64,
}

impl PlantState {
    pub fn at_rest(q: HeadJoints) -> Self {
        Self {
            q,
            qdot: SVector::zeros(),
            base: Vector3::zeros(),
            base_velocity: Vector3::zeros(),
            t: 0.0,
        }
    }

    /// The head model carried by the prismatic stage at this state.
    pub fn model(&self, model: &HeadModel) -> HeadModel {
        if self.base == Vector3::zeros() {
            model.clone()
        } else {
            model.translated(&self.base)
        }
    }
}

fn lag_gain(tau: f64, dt: f64) -> f64 {
    if tau == 0.0 {
        1.0
    } else {
        (dt / tau).min(1.0)
    }
}

/// Advances the plant by `dt`.
///
/// Torso and base follow the disturbance exactly. Neck and eye rates track
/// the command through a discrete first-order lag, positions are integrated
/// with explicit Euler, and any DoF that reaches a limit is stopped there.
pub fn step(
    model: &HeadModel,
    plant: &PlantModel,
    state: &PlantState,
    disturbance: &DisturbanceSample,
    command: &StabilizerCommand,
    dt: f64,
) -> Result<PlantState> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(GazeError::InvalidInput(format!(
            "time step {dt} must be positive"
        )));
    }
    let diverged = |reason: &str| GazeError::SimulationDiverged {
        t: state.t,
        reason: reason.to_string(),
    };
    let cmd = [
        command.neck[0],
        command.neck[1],
        command.neck[2],
        command.eyes[0],
        command.eyes[1],
        command.eyes[2],
    ];
    if cmd.iter().any(|v| !v.is_finite()) {
        return Err(diverged("non-finite stabilizer command"));
    }
    let mut qdot = state.qdot;
    for i in 0..3 {
        qdot[i] = disturbance.torso[i];
    }
    for (i, target) in cmd.iter().enumerate() {
        let tau = if i < 3 { plant.tau_neck } else { plant.tau_eye };
        let j = 3 + i;
        qdot[j] += (target - qdot[j]) * lag_gain(tau, dt);
    }
    let q_new = HeadJoints::from_vector(&(state.q.to_vector() + qdot * dt));
    let base_velocity = disturbance.base;
    let base = state.base + base_velocity * dt;
    if !q_new.is_finite()
        || !qdot.iter().all(|v| v.is_finite())
        || !base.iter().all(|v| v.is_finite())
    {
        return Err(diverged("non-finite joint state"));
    }
    let (q, hit) = model.clamp_joints(&q_new)?;
    for (i, h) in hit.iter().enumerate() {
        if *h {
            qdot[i] = 0.0;
        }
    }
    Ok(PlantState {
        q,
        qdot,
        base,
        base_velocity,
        t: state.t + dt,
    })
}

/// Seeded Gaussian gyroscope noise.
#[derive(Debug, Clone)]
pub struct GyroNoise {
    normal: Normal<f64>,
    rng: ChaCha8Rng,
}

impl GyroNoise {
    pub fn new(sigma: f64, seed: u64) -> Result<Self> {
        let invalid =
            || GazeError::InvalidInput(format!("gyro noise sigma {sigma} must be finite and >= 0"));
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(invalid());
        }
        let normal = Normal::new(0.0, sigma).map_err(|_| invalid())?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        Ok(Self { normal, rng })
    }

    pub fn silent() -> Self {
        Self::new(0.0, 0).expect("zero sigma is valid")
    }

    fn sample(&mut self) -> Vector3<f64> {
        Vector3::from_fn(|_, _| self.normal.sample(&mut self.rng))
    }
}

/// Gyroscope reading for the interval between two plant states, in the world
/// frame, with the sensor position taken at `next`.
pub fn synth_gyro(
    model: &HeadModel,
    prev: &PlantState,
    next: &PlantState,
    dt: f64,
    noise: &mut GyroNoise,
) -> Result<ImuSample> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(GazeError::InvalidInput(format!(
            "time step {dt} must be positive"
        )));
    }
    let before = prev.model(model).imu_pose(&prev.q)?;
    let after = next.model(model).imu_pose(&next.q)?;
    let relative = Rotation3::from_matrix_unchecked(before.rotation.transpose() * after.rotation);
    let omega_body = UnitQuaternion::from_rotation_matrix(&relative).scaled_axis() / dt;
    Ok(ImuSample {
        omega: before.rotation * omega_body + noise.sample(),
        position: after.translation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stereo::EyeDof;

    fn still() -> DisturbanceSample {
        DisturbanceSample::default()
    }

    #[test]
    fn zero_input_only_advances_time() {
        let m = HeadModel::default_model();
        let s0 = PlantState::at_rest(m.fixating_at(1.0).unwrap());
        let s1 = step(
            &m,
            &PlantModel::default(),
            &s0,
            &still(),
            &StabilizerCommand::zero(),
            0.01,
        )
        .unwrap();
        assert_eq!(s1.q, s0.q);
        assert_eq!(s1.qdot, s0.qdot);
        assert_eq!(s1.base, s0.base);
        assert!((s1.t - 0.01).abs() < 1e-15);
    }

    #[test]
    fn ideal_plant_integrates_command() {
        let m = HeadModel::default_model();
        let s0 = PlantState::at_rest(m.fixating_at(1.0).unwrap());
        let cmd = StabilizerCommand {
            neck: Vector3::new(0.1, -0.2, 0.3),
            eyes: Vector3::new(0.4, 0.5, -0.01),
            ..StabilizerCommand::zero()
        };
        let dt = 0.01;
        let s1 = step(&m, &PlantModel::ideal(), &s0, &still(), &cmd, dt).unwrap();
        assert_eq!(s1.q.neck, s0.q.neck + cmd.neck * dt);
        assert_eq!(s1.q.eyes.tilt, s0.q.eyes.tilt + cmd.eyes[0] * dt);
        assert_eq!(s1.q.eyes.vergence, s0.q.eyes.vergence + cmd.eyes[2] * dt);
    }

    #[test]
    fn lag_reaches_95_percent_after_three_tau() {
        let m = HeadModel::default_model();
        let plant = PlantModel::default();
        let dt = 0.001;
        let cmd = StabilizerCommand {
            neck: Vector3::new(0.2, 0.0, 0.0),
            eyes: Vector3::new(0.2, 0.0, 0.0),
            ..StabilizerCommand::zero()
        };
        let mut s = PlantState::at_rest(m.fixating_at(1.0).unwrap());
        let mut neck_done = None;
        let mut eye_done = None;
        for k in 1..=1000 {
            s = step(&m, &plant, &s, &still(), &cmd, dt).unwrap();
            let t = k as f64 * dt;
            if (t - 3.0 * plant.tau_eye).abs() < 1e-9 {
                eye_done = Some(s.qdot[6]);
            }
            if (t - 3.0 * plant.tau_neck).abs() < 1e-9 {
                neck_done = Some(s.qdot[3]);
            }
        }
        assert!(eye_done.unwrap() >= 0.95 * 0.2);
        assert!(neck_done.unwrap() >= 0.95 * 0.2);
    }

    #[test]
    fn torso_and_base_follow_script_exactly() {
        let m = HeadModel::default_model();
        let d = DisturbanceSample {
            torso: Vector3::new(0.3, 0.0, -0.2),
            base: Vector3::new(0.0, 0.0, 0.05),
            ..still()
        };
        let s0 = PlantState::at_rest(m.fixating_at(1.0).unwrap());
        let s1 = step(
            &m,
            &PlantModel::default(),
            &s0,
            &d,
            &StabilizerCommand::zero(),
            0.01,
        )
        .unwrap();
        assert_eq!(s1.q.torso, d.torso * 0.01);
        assert_eq!(s1.base, d.base * 0.01);
    }

    #[test]
    fn limits_clamp_and_stop() {
        let m = HeadModel::default_model();
        let mut q = m.fixating_at(1.0).unwrap();
        q.neck[2] = m.neck[2].joint_max - 1e-4;
        let cmd = StabilizerCommand {
            neck: Vector3::new(0.0, 0.0, 1.0),
            ..StabilizerCommand::zero()
        };
        let s1 = step(
            &m,
            &PlantModel::ideal(),
            &PlantState::at_rest(q),
            &still(),
            &cmd,
            0.01,
        )
        .unwrap();
        assert_eq!(s1.q.neck[2], m.neck[2].joint_max);
        assert_eq!(s1.qdot[5], 0.0);
    }

    #[test]
    fn non_finite_command_diverges() {
        let m = HeadModel::default_model();
        let cmd = StabilizerCommand {
            eyes: Vector3::new(f64::NAN, 0.0, 0.0),
            ..StabilizerCommand::zero()
        };
        let r = step(
            &m,
            &PlantModel::default(),
            &PlantState::at_rest(HeadJoints::zeros()),
            &still(),
            &cmd,
            0.01,
        );
        assert!(matches!(r, Err(GazeError::SimulationDiverged { .. })));
    }

    #[test]
    fn gyro_static_is_zero() {
        let m = HeadModel::default_model();
        let s = PlantState::at_rest(m.fixating_at(1.0).unwrap());
        let imu = synth_gyro(&m, &s, &s, 0.01, &mut GyroNoise::silent()).unwrap();
        assert_eq!(imu.omega, Vector3::zeros());
    }

    #[test]
    fn gyro_neck_yaw_rate() {
        let m = HeadModel::default_model();
        let mut a = PlantState::at_rest(m.fixating_at(1.0).unwrap());
        a.q.neck = Vector3::new(0.2, -0.1, 0.3);
        let mut b = a;
        let omega = 0.7;
        let dt = 0.01;
        b.q.neck[2] += omega * dt;
        let imu = synth_gyro(&m, &a, &b, dt, &mut GyroNoise::silent()).unwrap();
        assert!((imu.omega.norm() - omega).abs() < 1e-6);
        // Direction is the world-frame neck yaw axis.
        let frames = m.head_chain().frames(&a.q.head_chain_q()).unwrap();
        assert!((imu.omega.normalize() - frames[5].z_axis()).amax() < 1e-9);
    }

    #[test]
    fn gyro_ignores_eyes_and_base_translation() {
        let m = HeadModel::default_model();
        let a = PlantState::at_rest(m.fixating_at(1.0).unwrap());
        let mut b = a;
        b.q.eyes = EyeDof::new(0.1, -0.2, 0.3);
        b.base = Vector3::new(0.01, 0.02, 0.03);
        let imu = synth_gyro(&m, &a, &b, 0.01, &mut GyroNoise::silent()).unwrap();
        assert!(imu.omega.amax() < 1e-12);
        let moved = m.translated(&b.base).imu_pose(&b.q).unwrap();
        assert_eq!(imu.position, moved.translation);
    }

    #[test]
    fn gyro_noise_is_seeded() {
        let m = HeadModel::default_model();
        let s = PlantState::at_rest(HeadJoints::zeros());
        let mut n1 = GyroNoise::new(0.005, 3).unwrap();
        let mut n2 = GyroNoise::new(0.005, 3).unwrap();
        let a = synth_gyro(&m, &s, &s, 0.01, &mut n1).unwrap();
        let b = synth_gyro(&m, &s, &s, 0.01, &mut n2).unwrap();
        assert_eq!(a, b);
        assert!(a.omega.norm() > 0.0);
        assert!(GyroNoise::new(-1.0, 0).is_err());
    }
}
