//! Fixation-point motion estimation and compensatory neck/eye commands.
//!
//! The estimate is either kinematic feedforward (joint rates through the 6x9
//! fixation Jacobian) or inertial feedback (gyroscope rate plus lever arm).
//! Compensation is decoupled: the neck cancels the rotational part, the eyes
//! the translational part.

use nalgebra::{Matrix3, SVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, GazeError, Result};
use crate::model::{HeadJoints, HeadModel};
use crate::stereo::{full_jacobian_from, StereoKinematics};

/// 6D velocity of the fixation point, world frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Twist {
    /// m/s
    pub linear: Vector3<f64>,
    /// rad/s
    pub angular: Vector3<f64>,
}

impl Twist {
    pub fn new(linear: Vector3<f64>, angular: Vector3<f64>) -> Self {
        Self { linear, angular }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_vector(v: &SVector<f64, 6>) -> Self {
        Self {
            linear: v.fixed_rows::<3>(0).into_owned(),
            angular: v.fixed_rows::<3>(3).into_owned(),
        }
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self::new(self.linear * k, self.angular * k)
    }

    pub fn norm(&self) -> f64 {
        (self.linear.norm_squared() + self.angular.norm_squared()).sqrt()
    }
}

/// Gyroscope reading expressed in the world frame, plus sensor position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    pub omega: Vector3<f64>,
    pub position: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Kff,
    Ifb,
    Off,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Kff => "kff",
            Mode::Ifb => "ifb",
            Mode::Off => "off",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "kff" => Ok(Mode::Kff),
            "ifb" => Ok(Mode::Ifb),
            "off" => Ok(Mode::Off),
            other => Err(format!("unknown mode `{other}` (expected kff, ifb or off)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DofSet {
    #[serde(rename = "eyes")]
    EyesOnly,
    #[serde(rename = "neck-eyes")]
    NeckAndEyes,
}

impl DofSet {
    pub fn as_str(&self) -> &'static str {
        match self {
            DofSet::EyesOnly => "eyes",
            DofSet::NeckAndEyes => "neck-eyes",
        }
    }
}

impl std::str::FromStr for DofSet {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "eyes" => Ok(DofSet::EyesOnly),
            "neck-eyes" => Ok(DofSet::NeckAndEyes),
            other => Err(format!(
                "unknown dof set `{other}` (expected eyes or neck-eyes)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilizerConfig {
    /// Damping factor of the pseudo-inverses, `>= 0`.
    pub damping: f64,
    pub mode: Mode,
    pub dof_set: DofSet,
    /// Speed limits (rad/s): neck pitch/roll/yaw then tilt/version/vergence.
    /// Infinite entries disable saturation for that DoF.
    pub velocity_saturation: [f64; 6],
    /// Feed the translational side effect of the neck command into the eye
    /// channel so the two sub-problems cancel the full twist together.
    pub sequential: bool,
}

impl Default for StabilizerConfig {
    fn default() -> Self {
        let neck = 40f64.to_radians();
        let eyes = 180f64.to_radians();
        Self {
            damping: 1e-3,
            mode: Mode::Kff,
            dof_set: DofSet::NeckAndEyes,
            velocity_saturation: [neck, neck, neck, eyes, eyes, eyes],
            sequential: true,
        }
    }
}

impl StabilizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.damping.is_finite() && self.damping >= 0.0) {
            return Err(GazeError::InvalidInput(format!(
                "damping {} must be finite and non-negative",
                self.damping
            )));
        }
        if self
            .velocity_saturation
            .iter()
            .any(|v| v.is_nan() || *v <= 0.0)
        {
            return Err(GazeError::InvalidInput(
                "saturation limits must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn without_saturation(mut self) -> Self {
        self.velocity_saturation = [f64::INFINITY; 6];
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StabilizerCommand {
    /// Neck joint rates (rad/s).
    pub neck: Vector3<f64>,
    /// Tilt, version and vergence rates (rad/s).
    pub eyes: Vector3<f64>,
    /// The fixation configuration was singular; the command is zero.
    pub singular: bool,
    /// At least one component was clipped to its speed limit.
    pub saturated: bool,
}

impl StabilizerCommand {
    pub fn zero() -> Self {
        Self::default()
    }
}

/// Fixation twist produced by the given torso, neck and eye rates.
pub fn estimate_kff(
    model: &HeadModel,
    q: &HeadJoints,
    qdot_torso: &Vector3<f64>,
    qdot_neck: &Vector3<f64>,
    qdot_eyes: &Vector3<f64>,
) -> Result<Twist> {
    for v in [qdot_torso, qdot_neck, qdot_eyes] {
        ensure_finite(v.as_slice(), "joint rates")?;
    }
    let kin = StereoKinematics::compute(model, q)?;
    let (jac, _) = full_jacobian_from(&kin)?;
    let rates = SVector::<f64, 9>::from_iterator(
        qdot_torso
            .iter()
            .chain(qdot_neck.iter())
            .chain(qdot_eyes.iter())
            .copied(),
    );
    Ok(Twist::from_vector(&(jac * rates)))
}

/// Fixation twist implied by a pure rotation measured at the gyroscope.
pub fn estimate_ifb(imu: &ImuSample, x_fp: &Vector3<f64>) -> Result<Twist> {
    ensure_finite(imu.omega.as_slice(), "gyroscope rate")?;
    ensure_finite(imu.position.as_slice(), "gyroscope position")?;
    ensure_finite(x_fp.as_slice(), "fixation point")?;
    let r = x_fp - imu.position;
    Ok(Twist::new(imu.omega.cross(&r), imu.omega))
}

/// Damped pseudo-inverse `J^T (J J^T + lambda^2 I)^-1`, evaluated through the SVD
/// as `V diag(s / (s^2 + lambda^2)) U^T`.
pub fn pinv_damped(j: &Matrix3<f64>, lambda: f64) -> Result<Matrix3<f64>> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(GazeError::InvalidInput(format!(
            "damping {lambda} must be non-negative"
        )));
    }
    ensure_finite(j.as_slice(), "Jacobian")?;
    let svd = j.svd(true, true);
    let (u, v_t) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
    let s = svd.singular_values;
    let s_max = s.max();
    let s_min = s.min();
    if lambda == 0.0 {
        let condition = if s_min > 0.0 {
            s_max / s_min
        } else {
            f64::INFINITY
        };
        if s_max == 0.0 || condition > 1e12 {
            return Err(GazeError::SingularMatrix { condition });
        }
    }
    let inv = s.map(|si| {
        if si == 0.0 && lambda == 0.0 {
            0.0
        } else {
            si / (si * si + lambda * lambda)
        }
    });
    Ok(v_t.transpose() * Matrix3::from_diagonal(&inv) * u.transpose())
}

/// Neck and eye rates before saturation: `(neck, eyes)`.
pub fn compensate_unsaturated(
    twist: &Twist,
    model: &HeadModel,
    q: &HeadJoints,
    config: &StabilizerConfig,
) -> Result<(Vector3<f64>, Vector3<f64>)> {
    config.validate()?;
    ensure_finite(twist.linear.as_slice(), "twist")?;
    ensure_finite(twist.angular.as_slice(), "twist")?;
    let kin = StereoKinematics::compute(model, q)?;
    let (jac, _) = full_jacobian_from(&kin)?;
    let j_eyes: Matrix3<f64> = jac.fixed_view::<3, 3>(0, 6).into_owned();

    let neck = match config.dof_set {
        DofSet::EyesOnly => Vector3::zeros(),
        DofSet::NeckAndEyes => {
            let j_neck_rot: Matrix3<f64> = jac.fixed_view::<3, 3>(3, 3).into_owned();
            -(pinv_damped(&j_neck_rot, config.damping)? * twist.angular)
        }
    };
    let mut v_residual = twist.linear;
    if config.sequential {
        let j_neck_lin: Matrix3<f64> = jac.fixed_view::<3, 3>(0, 3).into_owned();
        v_residual += j_neck_lin * neck;
    }
    let eyes = -(pinv_damped(&j_eyes, config.damping)? * v_residual);
    Ok((neck, eyes))
}

/// Compensatory command for `twist`, clipped to the configured and model speed limits.
///
/// A singular fixation configuration yields a zero command flagged `singular`.
pub fn compensate(
    twist: &Twist,
    model: &HeadModel,
    q: &HeadJoints,
    config: &StabilizerConfig,
) -> Result<StabilizerCommand> {
    let (neck, eyes) = match compensate_unsaturated(twist, model, q, config) {
        Ok(v) => v,
        Err(GazeError::SingularConfiguration { .. }) | Err(GazeError::SingularMatrix { .. }) => {
            return Ok(StabilizerCommand {
                singular: true,
                ..StabilizerCommand::zero()
            })
        }
        Err(e) => return Err(e),
    };
    let model_limits = model.command_velocity_limits();
    let mut saturated = false;
    let mut clip = |v: f64, i: usize| {
        let limit = config.velocity_saturation[i].min(model_limits[i]);
        let c = v.clamp(-limit, limit);
        saturated |= c != v;
        c
    };
    let neck = Vector3::new(clip(neck[0], 0), clip(neck[1], 1), clip(neck[2], 2));
    let eyes = Vector3::new(clip(eyes[0], 3), clip(eyes[1], 4), clip(eyes[2], 5));
    Ok(StabilizerCommand {
        neck,
        eyes,
        singular: false,
        saturated,
    })
}
