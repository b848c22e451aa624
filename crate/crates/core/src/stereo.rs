//! Stereo fixation geometry.
//!
//! The fixation point is the midpoint of the shortest segment joining the two
//! optical axes `o_l + tau_l z_l` and `o_r + tau_r z_r`. The eye Jacobian is
//! assembled analytically from the geometric Jacobians of the optical centers
//! and the analytic Jacobians of the optical axes, differentiating the
//! closed-form ray parameters through the intermediates
//!
//! ```text
//! xi0 = z_l . z_r
//! xi1 = z_l - xi0 z_r
//! xi2 = o_l - o_r
//! xi3 = xi0^2 - 1
//! tau_l = (xi1 . xi2) / xi3
//! tau_r = ((xi0 z_l - z_r) . xi2) / xi3
//! ```

use nalgebra::{Matrix3, SMatrix, Vector3};

use crate::error::{ensure_finite, GazeError, Result};
use crate::kinematics::{axis_jacobian_from_frames, geometric_jacobian_from_frames, Pose};
use crate::model::{HeadJoints, HeadModel, HEAD_DOF};

/// Below this `|xi3|` the optical axes are treated as parallel.
pub const SINGULARITY_THRESHOLD: f64 = 1e-9;

/// Coupled eye degrees of freedom (radians).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EyeDof {
    /// Common tilt of both eyes.
    pub tilt: f64,
    /// Mean pan.
    pub version: f64,
    /// Pan difference, positive when the axes converge.
    pub vergence: f64,
}

impl EyeDof {
    pub fn new(tilt: f64, version: f64, vergence: f64) -> Self {
        Self {
            tilt,
            version,
            vergence,
        }
    }
}

/// Physical eye joints. Both tilts are mechanically coupled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EyeJointAngles {
    pub tilt_left: f64,
    pub pan_left: f64,
    pub tilt_right: f64,
    pub pan_right: f64,
}

pub fn eye_dof_to_joints(dof: &EyeDof) -> Result<EyeJointAngles> {
    ensure_finite(&[dof.tilt, dof.version, dof.vergence], "eye DoF")?;
    Ok(EyeJointAngles {
        tilt_left: dof.tilt,
        pan_left: dof.version + dof.vergence / 2.0,
        tilt_right: dof.tilt,
        pan_right: dof.version - dof.vergence / 2.0,
    })
}

pub fn eye_joints_to_dof(joints: &EyeJointAngles) -> Result<EyeDof> {
    ensure_finite(
        &[
            joints.tilt_left,
            joints.pan_left,
            joints.tilt_right,
            joints.pan_right,
        ],
        "eye joints",
    )?;
    if joints.tilt_left != joints.tilt_right {
        return Err(GazeError::InvalidInput(format!(
            "eye tilts must be coupled (left {}, right {})",
            joints.tilt_left, joints.tilt_right
        )));
    }
    Ok(EyeDof {
        tilt: joints.tilt_left,
        version: (joints.pan_left + joints.pan_right) / 2.0,
        vergence: joints.pan_left - joints.pan_right,
    })
}

/// Optical centers and unit optical axes of both cameras, plus the full
/// camera orientations (third column equals the optical axis).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraFrames {
    pub o_l: Vector3<f64>,
    pub z_l: Vector3<f64>,
    pub o_r: Vector3<f64>,
    pub z_r: Vector3<f64>,
    pub left_rotation: Matrix3<f64>,
    pub right_rotation: Matrix3<f64>,
}

impl CameraFrames {
    /// Frames from bare rays; the axes are normalized and the camera
    /// orientations completed with an arbitrary orthonormal basis.
    pub fn from_rays(
        o_l: Vector3<f64>,
        z_l: Vector3<f64>,
        o_r: Vector3<f64>,
        z_r: Vector3<f64>,
    ) -> Result<Self> {
        for v in [&o_l, &z_l, &o_r, &z_r] {
            ensure_finite(v.as_slice(), "ray")?;
        }
        if z_l.norm() == 0.0 || z_r.norm() == 0.0 {
            return Err(GazeError::InvalidInput(
                "ray direction has zero length".into(),
            ));
        }
        let z_l = z_l.normalize();
        let z_r = z_r.normalize();
        Ok(Self {
            o_l,
            z_l,
            o_r,
            z_r,
            left_rotation: complete_basis(&z_l),
            right_rotation: complete_basis(&z_r),
        })
    }

    fn from_poses(left: &Pose, right: &Pose) -> Self {
        Self {
            o_l: left.translation,
            z_l: left.z_axis().normalize(),
            o_r: right.translation,
            z_r: right.z_axis().normalize(),
            left_rotation: left.rotation,
            right_rotation: right.rotation,
        }
    }

    pub fn left_pose(&self) -> Pose {
        Pose {
            rotation: self.left_rotation,
            translation: self.o_l,
        }
    }

    pub fn right_pose(&self) -> Pose {
        Pose {
            rotation: self.right_rotation,
            translation: self.o_r,
        }
    }

    /// Applies a rigid transform to both cameras.
    pub fn transformed(&self, pose: &Pose) -> Self {
        Self {
            o_l: pose.transform_point(&self.o_l),
            z_l: pose.rotation * self.z_l,
            o_r: pose.transform_point(&self.o_r),
            z_r: pose.rotation * self.z_r,
            left_rotation: pose.rotation * self.left_rotation,
            right_rotation: pose.rotation * self.right_rotation,
        }
    }
}

fn complete_basis(z: &Vector3<f64>) -> Matrix3<f64> {
    let helper = if z.x.abs() < 0.9 {
        Vector3::x()
    } else {
        Vector3::y()
    };
    let x = helper.cross(z).normalize();
    let y = z.cross(&x);
    Matrix3::from_columns(&[x, y, *z])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixationResult {
    pub x_fp: Vector3<f64>,
    pub p_l: Vector3<f64>,
    pub p_r: Vector3<f64>,
    pub tau_l: f64,
    pub tau_r: f64,
    /// `|P_l - P_r|`, zero when the rays intersect.
    pub gap: f64,
}

pub(crate) struct StereoKinematics {
    pub left: Vec<Pose>,
    pub right: Vec<Pose>,
}

impl StereoKinematics {
    pub fn compute(model: &HeadModel, q: &HeadJoints) -> Result<Self> {
        let left = model.left_chain().frames(&q.left_chain_q()?)?;
        let right = model.right_chain().frames(&q.right_chain_q()?)?;
        Ok(Self { left, right })
    }

    pub fn cameras(&self) -> CameraFrames {
        CameraFrames::from_poses(&self.left[8], &self.right[8])
    }
}

/// Optical centers and axes at configuration `q` (eyes given as coupled DoF).
pub fn camera_frames(model: &HeadModel, q: &HeadJoints) -> Result<CameraFrames> {
    Ok(StereoKinematics::compute(model, q)?.cameras())
}

pub fn fixation_point(frames: &CameraFrames) -> Result<FixationResult> {
    let CameraFrames {
        o_l, z_l, o_r, z_r, ..
    } = *frames;
    for v in [&o_l, &z_l, &o_r, &z_r] {
        ensure_finite(v.as_slice(), "camera frames")?;
    }
    let xi0 = z_l.dot(&z_r);
    let xi3 = xi0 * xi0 - 1.0;
    if xi3.abs() < SINGULARITY_THRESHOLD {
        return Err(GazeError::SingularConfiguration { xi3 });
    }
    let xi2 = o_l - o_r;
    let tau_l = (z_l - xi0 * z_r).dot(&xi2) / xi3;
    let tau_r = (xi0 * z_l - z_r).dot(&xi2) / xi3;
    let p_l = o_l + tau_l * z_l;
    let p_r = o_r + tau_r * z_r;
    Ok(FixationResult {
        x_fp: (p_l + p_r) / 2.0,
        p_l,
        p_r,
        tau_l,
        tau_r,
        gap: (p_l - p_r).norm(),
    })
}

/// Intermediates of the eye Jacobian. Partials are indexed by physical eye
/// joint: `[common tilt, left pan, right pan]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EyeJacobianScratch {
    pub xi0: f64,
    pub xi1: Vector3<f64>,
    pub xi2: Vector3<f64>,
    pub xi3: f64,
    pub d_xi0: [f64; 3],
    pub d_xi1: [Vector3<f64>; 3],
    pub d_xi2: [Vector3<f64>; 3],
    pub d_xi3: [f64; 3],
    pub d_tau_l: [f64; 3],
    pub d_tau_r: [f64; 3],
    pub d_p_l: [Vector3<f64>; 3],
    pub d_p_r: [Vector3<f64>; 3],
}

pub(crate) fn eye_jacobian_from(
    kin: &StereoKinematics,
) -> Result<(Matrix3<f64>, EyeJacobianScratch, FixationResult)> {
    let frames = kin.cameras();
    let fix = fixation_point(&frames)?;
    let CameraFrames {
        o_l, z_l, o_r, z_r, ..
    } = frames;

    // Columns 6 (tilt) and 7 (pan) of the 8-joint eye chains.
    let jg_l = geometric_jacobian_from_frames(&kin.left, 8, &o_l);
    let jg_r = geometric_jacobian_from_frames(&kin.right, 8, &o_r);
    let ja_l = axis_jacobian_from_frames(&kin.left, 8, 7);
    let ja_r = axis_jacobian_from_frames(&kin.right, 8, 7);
    let lin = |j: &nalgebra::Matrix6xX<f64>, c: usize| -> Vector3<f64> {
        j.fixed_view::<3, 1>(0, c).into_owned()
    };
    let zero = Vector3::zeros();

    // (d o_l, d z_l, d o_r, d z_r) per physical joint.
    let partials = [
        (
            lin(&jg_l, 6),
            ja_l.column(6).into_owned(),
            lin(&jg_r, 6),
            ja_r.column(6).into_owned(),
        ),
        (lin(&jg_l, 7), ja_l.column(7).into_owned(), zero, zero),
        (zero, zero, lin(&jg_r, 7), ja_r.column(7).into_owned()),
    ];

    let xi0 = z_l.dot(&z_r);
    let xi1 = z_l - xi0 * z_r;
    let xi2 = o_l - o_r;
    let xi3 = xi0 * xi0 - 1.0;
    let eta = xi0 * z_l - z_r;
    let num_l = xi1.dot(&xi2);
    let num_r = eta.dot(&xi2);

    let mut s = EyeJacobianScratch {
        xi0,
        xi1,
        xi2,
        xi3,
        d_xi0: [0.0; 3],
        d_xi1: [zero; 3],
        d_xi2: [zero; 3],
        d_xi3: [0.0; 3],
        d_tau_l: [0.0; 3],
        d_tau_r: [0.0; 3],
        d_p_l: [zero; 3],
        d_p_r: [zero; 3],
    };
    for (k, (d_ol, d_zl, d_or, d_zr)) in partials.iter().enumerate() {
        let d_xi0 = d_zl.dot(&z_r) + z_l.dot(d_zr);
        let d_xi1 = d_zl - d_xi0 * z_r - xi0 * d_zr;
        let d_xi2 = d_ol - d_or;
        let d_xi3 = 2.0 * xi0 * d_xi0;
        let d_eta = d_xi0 * z_l + xi0 * d_zl - d_zr;
        // Quotient rule on (numerator . xi2) / xi3.
        let d_tau_l = (xi3 * (d_xi1.dot(&xi2) + xi1.dot(&d_xi2)) - num_l * d_xi3) / (xi3 * xi3);
        let d_tau_r = (xi3 * (d_eta.dot(&xi2) + eta.dot(&d_xi2)) - num_r * d_xi3) / (xi3 * xi3);
        s.d_xi0[k] = d_xi0;
        s.d_xi1[k] = d_xi1;
        s.d_xi2[k] = d_xi2;
        s.d_xi3[k] = d_xi3;
        s.d_tau_l[k] = d_tau_l;
        s.d_tau_r[k] = d_tau_r;
        s.d_p_l[k] = d_ol + d_tau_l * z_l + fix.tau_l * d_zl;
        s.d_p_r[k] = d_or + d_tau_r * z_r + fix.tau_r * d_zr;
    }

    let (t, pl, pr) = (0, 1, 2);
    let col_tilt = 0.5 * (s.d_p_l[t] + s.d_p_r[t]);
    let col_version = 0.5 * (s.d_p_l[pl] + s.d_p_l[pr] + s.d_p_r[pl] + s.d_p_r[pr]);
    let col_vergence = 0.25 * (s.d_p_l[pl] - s.d_p_l[pr] + s.d_p_r[pl] - s.d_p_r[pr]);
    Ok((
        Matrix3::from_columns(&[col_tilt, col_version, col_vergence]),
        s,
        fix,
    ))
}

/// 3x3 Jacobian of the fixation point with respect to (tilt, version, vergence).
pub fn eye_jacobian(model: &HeadModel, q: &HeadJoints) -> Result<Matrix3<f64>> {
    Ok(eye_jacobian_from(&StereoKinematics::compute(model, q)?)?.0)
}

/// Same as [`eye_jacobian`] but also returns every chain-rule intermediate.
pub fn eye_jacobian_scratch(
    model: &HeadModel,
    q: &HeadJoints,
) -> Result<(Matrix3<f64>, EyeJacobianScratch)> {
    let (j, s, _) = eye_jacobian_from(&StereoKinematics::compute(model, q)?)?;
    Ok((j, s))
}

pub(crate) fn full_jacobian_from(
    kin: &StereoKinematics,
) -> Result<(SMatrix<f64, 6, HEAD_DOF>, FixationResult)> {
    let (je, _, fix) = eye_jacobian_from(kin)?;
    let mut jac = SMatrix::<f64, 6, HEAD_DOF>::zeros();
    // Torso and neck move the whole stereo rig rigidly; the prefix frames are shared by both chains.
    let rigid = geometric_jacobian_from_frames(&kin.left, 6, &fix.x_fp);
    jac.fixed_view_mut::<6, 6>(0, 0).copy_from(&rigid);
    jac.fixed_view_mut::<3, 3>(0, 6).copy_from(&je);
    Ok((jac, fix))
}

/// 6x9 map from (torso, neck, eye DoF) rates to the fixation-point twist.
///
/// Eye columns carry only a translational part: the eyes move the fixation
/// point but do not define an orientation for it.
pub fn fixation_full_jacobian(
    model: &HeadModel,
    q: &HeadJoints,
) -> Result<SMatrix<f64, 6, HEAD_DOF>> {
    Ok(full_jacobian_from(&StereoKinematics::compute(model, q)?)?.0)
}
