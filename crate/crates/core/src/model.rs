//! Torso-neck-eye head model built from DH links.
//!
//! The head is a tree: a shared torso (3 joints) and neck (3 joints) prefix
//! followed by two eye branches with a tilt and a pan joint each. Eye motion is
//! addressed through the coupled [`EyeDof`] (common tilt, version, vergence).

use nalgebra::{SVector, Vector3};
use std::f64::consts::FRAC_PI_2;

use crate::error::{ensure_finite, GazeError, Result};
use crate::kinematics::{DhLink, JointVector, KinematicChain, Pose, Segment};
use crate::stereo::{eye_dof_to_joints, eye_joints_to_dof, EyeDof, EyeJointAngles};

/// Number of actuated degrees of freedom: torso 3, neck 3, eye DoF 3.
pub const HEAD_DOF: usize = 9;

/// Position (or rate) of every head degree of freedom, eyes in coupled form.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HeadJoints {
    /// yaw, pitch, roll
    pub torso: Vector3<f64>,
    /// pitch, roll, yaw
    pub neck: Vector3<f64>,
    pub eyes: EyeDof,
}

impl HeadJoints {
    pub fn zeros() -> Self {
        Self::default()
    }

    pub fn from_vector(v: &SVector<f64, HEAD_DOF>) -> Self {
        Self {
            torso: Vector3::new(v[0], v[1], v[2]),
            neck: Vector3::new(v[3], v[4], v[5]),
            eyes: EyeDof::new(v[6], v[7], v[8]),
        }
    }

    pub fn to_vector(&self) -> SVector<f64, HEAD_DOF> {
        SVector::<f64, HEAD_DOF>::from_column_slice(&[
            self.torso[0],
            self.torso[1],
            self.torso[2],
            self.neck[0],
            self.neck[1],
            self.neck[2],
            self.eyes.tilt,
            self.eyes.version,
            self.eyes.vergence,
        ])
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|v| v.is_finite())
    }

    /// Joint vector of the left-eye serial chain: torso, neck, left tilt, left pan.
    pub fn left_chain_q(&self) -> Result<JointVector> {
        let j = eye_dof_to_joints(&self.eyes)?;
        Ok(self.chain_q(j.tilt_left, j.pan_left))
    }

    pub fn right_chain_q(&self) -> Result<JointVector> {
        let j = eye_dof_to_joints(&self.eyes)?;
        Ok(self.chain_q(j.tilt_right, j.pan_right))
    }

    pub fn head_chain_q(&self) -> JointVector {
        JointVector::from_slice(&[
            self.torso[0],
            self.torso[1],
            self.torso[2],
            self.neck[0],
            self.neck[1],
            self.neck[2],
        ])
    }

    fn chain_q(&self, tilt: f64, pan: f64) -> JointVector {
        JointVector::from_slice(&[
            self.torso[0],
            self.torso[1],
            self.torso[2],
            self.neck[0],
            self.neck[1],
            self.neck[2],
            tilt,
            pan,
        ])
    }
}

/// Gyroscope placement: a fixed offset in the frame of one neck link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuMount {
    /// Index within the neck segment (0..3) of the link carrying the sensor.
    pub neck_link: usize,
    /// Sensor position in that link's frame (meters).
    pub offset: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadModel {
    pub name: String,
    pub base: Pose,
    pub torso: [DhLink; 3],
    pub neck: [DhLink; 3],
    pub left_eye: [DhLink; 2],
    pub right_eye: [DhLink; 2],
    pub imu: ImuMount,
}

impl HeadModel {
    pub fn new(
        name: impl Into<String>,
        base: Pose,
        torso: [DhLink; 3],
        neck: [DhLink; 3],
        left_eye: [DhLink; 2],
        right_eye: [DhLink; 2],
        imu: ImuMount,
    ) -> Result<Self> {
        for link in torso.iter().chain(&neck).chain(&left_eye).chain(&right_eye) {
            link.validate()?;
        }
        if imu.neck_link >= 3 {
            return Err(GazeError::InvalidInput(format!(
                "IMU must sit on a neck link (0..3), got {}",
                imu.neck_link
            )));
        }
        ensure_finite(imu.offset.as_slice(), "IMU offset")?;
        Ok(Self {
            name: name.into(),
            base,
            torso,
            neck,
            left_eye,
            right_eye,
            imu,
        })
    }

    /// Stand-in torso/neck/eye geometry with plausible humanoid proportions.
    ///
    /// Not the measured parameters of any particular robot. World frame: x forward,
    /// y left, z up, origin on the torso pitch/roll axes. At zero configuration the
    /// optical centers sit at (0.05, +-0.034, 0.20) m looking along +x.
    pub fn default_model() -> Self {
        let deg = f64::to_radians;
        let link = |a, d, alpha, off, lo: f64, hi: f64, vel: f64| DhLink {
            a,
            d,
            alpha,
            theta_offset: off,
            joint_min: deg(lo),
            joint_max: deg(hi),
            vel_limit: deg(vel),
        };
        let torso = [
            link(0.0, 0.0, -FRAC_PI_2, 0.0, -50.0, 50.0, 60.0),
            link(0.0, 0.0, -FRAC_PI_2, -FRAC_PI_2, -30.0, 70.0, 60.0),
            link(0.12, 0.0, FRAC_PI_2, 0.0, -35.0, 35.0, 60.0),
        ];
        let neck = [
            link(0.0, 0.0, -FRAC_PI_2, 0.0, -40.0, 40.0, 60.0),
            link(0.0, 0.0, -FRAC_PI_2, -FRAC_PI_2, -40.0, 40.0, 60.0),
            link(0.05, 0.08, -FRAC_PI_2, -FRAC_PI_2, -55.0, 55.0, 60.0),
        ];
        let eye = |side: f64| {
            [
                link(0.0, side * 0.034, -FRAC_PI_2, 0.0, -35.0, 35.0, 200.0),
                link(0.0, 0.0, -FRAC_PI_2, -FRAC_PI_2, -50.0, 50.0, 200.0),
            ]
        };
        Self {
            name: "default-head".into(),
            base: Pose::identity(),
            torso,
            neck,
            left_eye: eye(1.0),
            right_eye: eye(-1.0),
            imu: ImuMount {
                neck_link: 2,
                // 2 cm behind and 6 cm above the point between the eyes (link frame: x fwd, y down).
                offset: Vector3::new(-0.02, -0.06, 0.0),
            },
        }
    }

    /// Same model with its base shifted by `offset` (world frame).
    pub fn translated(&self, offset: &Vector3<f64>) -> Self {
        let mut moved = self.clone();
        moved.base = Pose::from_translation(*offset).compose(&self.base);
        moved
    }

    fn prefix(&self) -> Vec<(Segment, DhLink)> {
        self.torso
            .iter()
            .map(|l| (Segment::Torso, *l))
            .chain(self.neck.iter().map(|l| (Segment::Neck, *l)))
            .collect()
    }

    /// Torso and neck only (6 joints).
    pub fn head_chain(&self) -> KinematicChain {
        KinematicChain::new(self.base, self.prefix()).expect("validated at construction")
    }

    pub fn left_chain(&self) -> KinematicChain {
        let mut links = self.prefix();
        links.extend(self.left_eye.iter().map(|l| (Segment::LeftEye, *l)));
        KinematicChain::new(self.base, links).expect("validated at construction")
    }

    pub fn right_chain(&self) -> KinematicChain {
        let mut links = self.prefix();
        links.extend(self.right_eye.iter().map(|l| (Segment::RightEye, *l)));
        KinematicChain::new(self.base, links).expect("validated at construction")
    }

    /// World pose of the gyroscope. Eye joints do not affect it.
    pub fn imu_pose(&self, q: &HeadJoints) -> Result<Pose> {
        let frames = self.head_chain().frames(&q.head_chain_q())?;
        let link_frame = frames[3 + self.imu.neck_link + 1];
        Ok(link_frame.compose(&Pose::from_translation(self.imu.offset)))
    }

    /// Per-DoF speed limits of the commanded joints: neck pitch/roll/yaw, then tilt/version/vergence.
    pub fn command_velocity_limits(&self) -> [f64; 6] {
        let pan = self.left_eye[1].vel_limit.min(self.right_eye[1].vel_limit);
        [
            self.neck[0].vel_limit,
            self.neck[1].vel_limit,
            self.neck[2].vel_limit,
            self.left_eye[0].vel_limit.min(self.right_eye[0].vel_limit),
            pan,
            pan,
        ]
    }

    /// Clamps positions to the joint limits. Returns the clamped joints and a
    /// mask of which head DoF hit a limit.
    pub fn clamp_joints(&self, q: &HeadJoints) -> Result<(HeadJoints, [bool; HEAD_DOF])> {
        let mut out = *q;
        let mut hit = [false; HEAD_DOF];
        for i in 0..3 {
            out.torso[i] = self.torso[i].clamp(q.torso[i]);
            hit[i] = out.torso[i] != q.torso[i];
            out.neck[i] = self.neck[i].clamp(q.neck[i]);
            hit[3 + i] = out.neck[i] != q.neck[i];
        }
        let j = eye_dof_to_joints(&q.eyes)?;
        let tilt_lo = self.left_eye[0].joint_min.max(self.right_eye[0].joint_min);
        let tilt_hi = self.left_eye[0].joint_max.min(self.right_eye[0].joint_max);
        let tilt = j.tilt_left.clamp(tilt_lo, tilt_hi);
        let pan_left = self.left_eye[1].clamp(j.pan_left);
        let pan_right = self.right_eye[1].clamp(j.pan_right);
        if tilt != j.tilt_left {
            hit[6] = true;
            out.eyes.tilt = tilt;
        }
        if pan_left != j.pan_left || pan_right != j.pan_right {
            hit[7] = true;
            hit[8] = true;
            let d = eye_joints_to_dof(&EyeJointAngles {
                tilt_left: tilt,
                pan_left,
                tilt_right: tilt,
                pan_right,
            })?;
            out.eyes.version = d.version;
            out.eyes.vergence = d.vergence;
        }
        Ok((out, hit))
    }

    /// Half the distance between the optical centers at the zero configuration.
    pub fn half_baseline(&self) -> Result<f64> {
        let q = HeadJoints::zeros();
        let l = self.left_chain().frames(&q.left_chain_q()?)?;
        let r = self.right_chain().frames(&q.right_chain_q()?)?;
        Ok((l[8].translation - r[8].translation).norm() / 2.0)
    }

    /// Configuration looking straight ahead with both eyes verged on a point
    /// `distance` meters in front of the optical centers.
    pub fn fixating_at(&self, distance: f64) -> Result<HeadJoints> {
        if !(distance.is_finite() && distance > 0.0) {
            return Err(GazeError::InvalidInput(format!(
                "fixation distance {distance} must be positive"
            )));
        }
        let b = self.half_baseline()?;
        let mut q = HeadJoints::zeros();
        q.eyes.vergence = 2.0 * (b / distance).atan();
        Ok(q)
    }
}
