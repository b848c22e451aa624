//! Denavit-Hartenberg serial chains.
//!
//! Every link uses the standard (distal) convention: the transform from frame
//! `i` to frame `i + 1` is `Rot_z(q_i + theta_offset) * Trans_z(d) * Trans_x(a) * Rot_x(alpha)`,
//! so joint `i` rotates about the z-axis of frame `i` (frame 0 is the chain base).
//! All angles are radians.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix3xX, Matrix6xX, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, GazeError, Result};

/// Rigid transform: orthonormal rotation plus translation in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a pose, rejecting rotations that are not orthonormal with determinant +1.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        ensure_finite(rotation.as_slice(), "pose rotation")?;
        ensure_finite(translation.as_slice(), "pose translation")?;
        let pose = Self {
            rotation,
            translation,
        };
        if pose.orthonormality_error() > 1e-9 || (rotation.determinant() - 1.0).abs() > 1e-9 {
            return Err(GazeError::InvalidInput(
                "pose rotation is not a proper rotation matrix".into(),
            ));
        }
        Ok(pose)
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    /// Rotation `Rz(yaw) * Ry(pitch) * Rx(roll)` followed by a translation.
    pub fn from_rpy(roll: f64, pitch: f64, yaw: f64, translation: Vector3<f64>) -> Self {
        let rotation = *nalgebra::Rotation3::from_euler_angles(roll, pitch, yaw).matrix();
        Self {
            rotation,
            translation,
        }
    }

    /// Inverse of [`Pose::from_rpy`] for the rotation part: returns `(roll, pitch, yaw)`.
    pub fn rpy(&self) -> (f64, f64, f64) {
        nalgebra::Rotation3::from_matrix_unchecked(self.rotation).euler_angles()
    }

    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn x_axis(&self) -> Vector3<f64> {
        self.rotation.column(0).into_owned()
    }

    pub fn z_axis(&self) -> Vector3<f64> {
        self.rotation.column(2).into_owned()
    }

    /// `max |R^T R - I|` over all entries.
    pub fn orthonormality_error(&self) -> f64 {
        (self.rotation.transpose() * self.rotation - Matrix3::identity()).amax()
    }
}

/// One revolute Denavit-Hartenberg link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DhLink {
    pub a: f64,
    pub d: f64,
    pub alpha: f64,
    pub theta_offset: f64,
    pub joint_min: f64,
    pub joint_max: f64,
    pub vel_limit: f64,
}

impl DhLink {
    pub fn new(
        a: f64,
        d: f64,
        alpha: f64,
        theta_offset: f64,
        joint_min: f64,
        joint_max: f64,
        vel_limit: f64,
    ) -> Result<Self> {
        let link = Self {
            a,
            d,
            alpha,
            theta_offset,
            joint_min,
            joint_max,
            vel_limit,
        };
        link.validate()?;
        Ok(link)
    }

    /// Link with unbounded position limits, mostly useful in tests.
    pub fn unbounded(a: f64, d: f64, alpha: f64, theta_offset: f64) -> Self {
        Self {
            a,
            d,
            alpha,
            theta_offset,
            joint_min: f64::NEG_INFINITY,
            joint_max: f64::INFINITY,
            vel_limit: f64::INFINITY,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite(
            &[self.a, self.d, self.alpha, self.theta_offset],
            "DH parameters",
        )?;
        if self.joint_min.is_nan() || self.joint_max.is_nan() || self.joint_min > self.joint_max {
            return Err(GazeError::InvalidInput(format!(
                "joint limits [{}, {}] are not ordered",
                self.joint_min, self.joint_max
            )));
        }
        if self.vel_limit.is_nan() || self.vel_limit <= 0.0 {
            return Err(GazeError::InvalidInput(format!(
                "velocity limit {} must be positive",
                self.vel_limit
            )));
        }
        Ok(())
    }

    pub fn within_limits(&self, q: f64) -> bool {
        q >= self.joint_min && q <= self.joint_max
    }

    pub fn clamp(&self, q: f64) -> f64 {
        q.clamp(self.joint_min, self.joint_max)
    }

    /// Homogeneous transform from the previous frame to this link's frame at joint angle `q`.
    pub fn transform(&self, q: f64) -> Pose {
        let (st, ct) = (q + self.theta_offset).sin_cos();
        let (sa, ca) = self.alpha.sin_cos();
        Pose {
            rotation: Matrix3::new(ct, -st * ca, st * sa, st, ct * ca, -ct * sa, 0.0, sa, ca),
            translation: Vector3::new(self.a * ct, self.a * st, self.d),
        }
    }
}

/// Body segment a link belongs to. Declaration order is the required chain order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Segment {
    Torso,
    Neck,
    LeftEye,
    RightEye,
}

/// Joint positions or velocities for a serial chain.
#[derive(Debug, Clone, PartialEq)]
pub struct JointVector(pub DVector<f64>);

impl JointVector {
    pub fn from_slice(values: &[f64]) -> Self {
        Self(DVector::from_column_slice(values))
    }

    pub fn zeros(n: usize) -> Self {
        Self(DVector::zeros(n))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }
}

impl From<DVector<f64>> for JointVector {
    fn from(v: DVector<f64>) -> Self {
        Self(v)
    }
}

/// An ordered serial chain of revolute DH links rooted at `base`.
#[derive(Debug, Clone, PartialEq)]
pub struct KinematicChain {
    base: Pose,
    links: Vec<DhLink>,
    segments: Vec<Segment>,
}

impl KinematicChain {
    /// Links must be listed in serial order with non-decreasing segment tags,
    /// and a chain never mixes the two eye branches.
    pub fn new(base: Pose, links: Vec<(Segment, DhLink)>) -> Result<Self> {
        for (_, link) in &links {
            link.validate()?;
        }
        let segments: Vec<Segment> = links.iter().map(|(s, _)| *s).collect();
        if segments.windows(2).any(|w| w[0] > w[1]) {
            return Err(GazeError::InvalidInput(
                "chain links must be ordered torso, neck, eye".into(),
            ));
        }
        if segments.contains(&Segment::LeftEye) && segments.contains(&Segment::RightEye) {
            return Err(GazeError::InvalidInput(
                "a serial chain cannot contain both eye branches".into(),
            ));
        }
        Ok(Self {
            base,
            links: links.into_iter().map(|(_, l)| l).collect(),
            segments,
        })
    }

    /// Chain without segment bookkeeping (every link tagged as torso).
    pub fn from_links(base: Pose, links: Vec<DhLink>) -> Result<Self> {
        Self::new(
            base,
            links.into_iter().map(|l| (Segment::Torso, l)).collect(),
        )
    }

    pub fn base(&self) -> &Pose {
        &self.base
    }

    pub fn links(&self) -> &[DhLink] {
        &self.links
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn dof(&self) -> usize {
        self.links.len()
    }

    fn check_q(&self, q: &JointVector) -> Result<()> {
        if q.len() != self.dof() {
            return Err(GazeError::DimensionMismatch {
                expected: self.dof(),
                actual: q.len(),
            });
        }
        ensure_finite(q.as_slice(), "joint vector")
    }

    /// World poses of frames `0..=n`: the base followed by the frame after each link.
    pub fn frames(&self, q: &JointVector) -> Result<Vec<Pose>> {
        self.check_q(q)?;
        Ok(self.frames_unchecked(q.as_slice()))
    }

    pub(crate) fn frames_unchecked(&self, q: &[f64]) -> Vec<Pose> {
        let mut frames = Vec::with_capacity(self.links.len() + 1);
        let mut current = self.base;
        frames.push(current);
        for (link, &qi) in self.links.iter().zip(q) {
            current = current.compose(&link.transform(qi));
            frames.push(current);
        }
        frames
    }
}

/// World pose of the frame at the distal end of link `link_index`.
///
/// Joint-limit violations are only logged: disturbance scripts are allowed to
/// push joints past their nominal range.
pub fn forward_kinematics(
    chain: &KinematicChain,
    q: &JointVector,
    link_index: usize,
) -> Result<Pose> {
    if link_index >= chain.dof() {
        return Err(GazeError::IndexError {
            index: link_index,
            len: chain.dof(),
        });
    }
    chain.check_q(q)?;
    for (i, (link, &qi)) in chain.links.iter().zip(q.as_slice()).enumerate() {
        if !link.within_limits(qi) {
            log::warn!(
                "joint {i} at {qi} rad is outside [{}, {}]",
                link.joint_min,
                link.joint_max
            );
        }
    }
    let frames = chain.frames_unchecked(q.as_slice());
    Ok(frames[link_index + 1])
}

/// Geometric Jacobian (6 x n) of a point rigidly attached to the last link.
///
/// Column `i` is `[z_i x (point - p_i); z_i]` where `z_i`, `p_i` are the world
/// axis and origin of joint `i`.
pub fn geometric_jacobian(
    chain: &KinematicChain,
    q: &JointVector,
    point: &Vector3<f64>,
) -> Result<Matrix6xX<f64>> {
    chain.check_q(q)?;
    ensure_finite(point.as_slice(), "point")?;
    let frames = chain.frames_unchecked(q.as_slice());
    Ok(geometric_jacobian_from_frames(&frames, chain.dof(), point))
}

pub(crate) fn geometric_jacobian_from_frames(
    frames: &[Pose],
    columns: usize,
    point: &Vector3<f64>,
) -> Matrix6xX<f64> {
    let mut jac = Matrix6xX::zeros(columns);
    for (i, frame) in frames.iter().take(columns).enumerate() {
        let z = frame.z_axis();
        let lin = z.cross(&(point - frame.translation));
        jac.fixed_view_mut::<3, 1>(0, i).copy_from(&lin);
        jac.fixed_view_mut::<3, 1>(3, i).copy_from(&z);
    }
    jac
}

/// Derivative of the world z-axis of frame `link_index` with respect to each joint (3 x n).
pub fn analytic_axis_jacobian(
    chain: &KinematicChain,
    q: &JointVector,
    link_index: usize,
) -> Result<Matrix3xX<f64>> {
    if link_index >= chain.dof() {
        return Err(GazeError::IndexError {
            index: link_index,
            len: chain.dof(),
        });
    }
    chain.check_q(q)?;
    let frames = chain.frames_unchecked(q.as_slice());
    Ok(axis_jacobian_from_frames(&frames, chain.dof(), link_index))
}

pub(crate) fn axis_jacobian_from_frames(
    frames: &[Pose],
    columns: usize,
    link_index: usize,
) -> Matrix3xX<f64> {
    let target = frames[link_index + 1].z_axis();
    let mut jac = Matrix3xX::zeros(columns);
    for (i, frame) in frames
        .iter()
        .take(link_index.min(columns - 1) + 1)
        .enumerate()
    {
        jac.set_column(i, &frame.z_axis().cross(&target));
    }
    jac
}

/// Default central-difference step (radians).
pub const DEFAULT_FD_STEP: f64 = 1e-6;

/// Central-difference Jacobian `[f(q + h e_i) - f(q - h e_i)] / 2h`.
pub fn finite_difference_jacobian<F>(mut f: F, q: &DVector<f64>, step: f64) -> Result<DMatrix<f64>>
where
    F: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
{
    if !(step.is_finite() && step > 0.0) {
        return Err(GazeError::InvalidInput(format!(
            "step {step} must be positive"
        )));
    }
    ensure_finite(q.as_slice(), "evaluation point")?;
    let mut columns = Vec::with_capacity(q.len());
    for i in 0..q.len() {
        let mut plus = q.clone();
        plus[i] += step;
        let mut minus = q.clone();
        minus[i] -= step;
        let fp = f(&plus)?;
        let fm = f(&minus)?;
        if fp.len() != fm.len() {
            return Err(GazeError::DimensionMismatch {
                expected: fp.len(),
                actual: fm.len(),
            });
        }
        let col = (fp - fm) / (2.0 * step);
        if col.iter().any(|v| !v.is_finite()) {
            return Err(GazeError::OracleFailure { column: i });
        }
        columns.push(col);
    }
    if columns.is_empty() {
        let rows = f(q)?.len();
        return Ok(DMatrix::zeros(rows, 0));
    }
    Ok(DMatrix::from_columns(&columns))
}
