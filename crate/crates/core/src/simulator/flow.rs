//! Synthetic optical flow: a static point cloud seen through the left camera.

use nalgebra::Vector3;
use rand::Rng;

use crate::error::{GazeError, Result};
use crate::kinematics::Pose;
use crate::stabilizer::Twist;
use crate::stereo::CameraFrames;

/// Minimum number of cloud points that must stay inside the image region.
pub const MIN_VALID_POINTS: usize = 10;

/// Pinhole camera with the principal point at the image center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraModel {
    /// pixels
    pub focal: f64,
    pub width: f64,
    pub height: f64,
    /// Width of the excluded peripheral band (pixels).
    pub border: f64,
}

impl Default for CameraModel {
    fn default() -> Self {
        Self {
            focal: 257.0,
            width: 320.0,
            height: 240.0,
            border: 20.0,
        }
    }
}

impl CameraModel {
    pub fn validate(&self) -> Result<()> {
        let all_finite = [self.focal, self.width, self.height, self.border]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite || self.focal <= 0.0 || self.border < 0.0 {
            return Err(GazeError::InvalidInput(
                "camera focal must be positive and border non-negative".into(),
            ));
        }
        if self.width <= 2.0 * self.border || self.height <= 2.0 * self.border {
            return Err(GazeError::InvalidInput(format!(
                "image {}x{} too small for border {}",
                self.width, self.height, self.border
            )));
        }
        Ok(())
    }

    /// Pixel coordinates of a world point seen from `camera`, or `None` if the
    /// point is not in front of it.
    pub fn project(&self, camera: &Pose, point: &Vector3<f64>) -> Option<(f64, f64)> {
        let p = camera.rotation.transpose() * (point - camera.translation);
        if p.z <= 0.0 {
            return None;
        }
        Some((
            self.width / 2.0 + self.focal * p.x / p.z,
            self.height / 2.0 + self.focal * p.y / p.z,
        ))
    }

    /// World point at camera depth `depth` behind pixel `(u, v)`.
    pub fn back_project(&self, camera: &Pose, u: f64, v: f64, depth: f64) -> Vector3<f64> {
        let local = Vector3::new(
            (u - self.width / 2.0) * depth / self.focal,
            (v - self.height / 2.0) * depth / self.focal,
            depth,
        );
        camera.transform_point(&local)
    }

    fn inside(&self, (u, v): (f64, f64)) -> bool {
        let b = self.border;
        u >= b && u <= self.width - b && v >= b && v <= self.height - b
    }
}

/// Static world points used to measure image motion.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vector3<f64>>,
}

impl PointCloud {
    /// Back-projects `count` uniformly drawn pixels of the inner image region
    /// at uniformly drawn camera depths in `[depth_min, depth_max]`.
    pub fn sample<R: Rng>(
        cam: &CameraModel,
        camera: &Pose,
        count: usize,
        depth_min: f64,
        depth_max: f64,
        rng: &mut R,
    ) -> Result<Self> {
        cam.validate()?;
        if !(depth_min.is_finite()
            && depth_max.is_finite()
            && depth_min > 0.0
            && depth_max >= depth_min)
        {
            return Err(GazeError::InvalidInput(format!(
                "cloud depth range [{depth_min}, {depth_max}] must be positive and ordered"
            )));
        }
        let b = cam.border;
        let points = (0..count)
            .map(|_| {
                let u = rng.random_range(b..=cam.width - b);
                let v = rng.random_range(b..=cam.height - b);
                let depth = if depth_max > depth_min {
                    rng.random_range(depth_min..=depth_max)
                } else {
                    depth_min
                };
                cam.back_project(camera, u, v, depth)
            })
            .collect();
        Ok(Self { points })
    }
}

/// Image motion between two consecutive ticks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowSample {
    pub t: f64,
    /// Mean flow magnitude (pixels/frame).
    pub optfl: f64,
    /// `|v_FP|` of the true fixation twist (m/s).
    pub residual_speed: f64,
    /// `|omega_FP|` of the true fixation twist (rad/s).
    pub residual_omega: f64,
    pub valid_points: usize,
}

/// Mean pixel displacement of the cloud in the left camera between `prev`
/// and `next`. Points outside the inner image region or behind the camera in
/// either frame are skipped.
pub fn flow_metric(
    cam: &CameraModel,
    prev: &CameraFrames,
    next: &CameraFrames,
    cloud: &PointCloud,
    true_twist: &Twist,
    t: f64,
) -> Result<FlowSample> {
    cam.validate()?;
    let (a, b) = (prev.left_pose(), next.left_pose());
    let mut sum = 0.0;
    let mut valid = 0usize;
    for p in &cloud.points {
        let (Some(pa), Some(pb)) = (cam.project(&a, p), cam.project(&b, p)) else {
            continue;
        };
        if cam.inside(pa) && cam.inside(pb) {
            sum += (pb.0 - pa.0).hypot(pb.1 - pa.1);
            valid += 1;
        }
    }
    if valid < MIN_VALID_POINTS {
        return Err(GazeError::InsufficientCoverage {
            valid,
            required: MIN_VALID_POINTS,
        });
    }
    Ok(FlowSample {
        t,
        optfl: sum / valid as f64,
        residual_speed: true_twist.linear.norm(),
        residual_omega: true_twist.angular.norm(),
        valid_points: valid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::HeadModel;
    use crate::stereo::camera_frames;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (CameraModel, CameraFrames, PointCloud) {
        let m = HeadModel::default_model();
        let frames = camera_frames(&m, &m.fixating_at(2.0).unwrap()).unwrap();
        let cam = CameraModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cloud = PointCloud::sample(&cam, &frames.left_pose(), 600, 1.9, 2.1, &mut rng).unwrap();
        (cam, frames, cloud)
    }

    #[test]
    fn identical_frames_give_zero_flow() {
        let (cam, frames, cloud) = setup();
        let s = flow_metric(&cam, &frames, &frames, &cloud, &Twist::zero(), 0.0).unwrap();
        assert_eq!(s.optfl, 0.0);
        assert_eq!(s.valid_points, 600);
    }

    #[test]
    fn projection_round_trip() {
        let (cam, frames, _) = setup();
        let pose = frames.left_pose();
        let p = cam.back_project(&pose, 100.0, 50.0, 3.0);
        let (u, v) = cam.project(&pose, &p).unwrap();
        assert!((u - 100.0).abs() < 1e-9 && (v - 50.0).abs() < 1e-9);
        let behind = pose.transform_point(&Vector3::new(0.0, 0.0, -1.0));
        assert!(cam.project(&pose, &behind).is_none());
    }

    #[test]
    fn too_few_points_is_an_error() {
        let (cam, frames, cloud) = setup();
        let few = PointCloud {
            points: cloud.points[..5].to_vec(),
        };
        assert!(matches!(
            flow_metric(&cam, &frames, &frames, &few, &Twist::zero(), 0.0),
            Err(GazeError::InsufficientCoverage {
                valid: 5,
                required: 10
            })
        ));
    }

    #[test]
    fn border_points_are_excluded() {
        let (cam, frames, _) = setup();
        let pose = frames.left_pose();
        let mut points: Vec<_> = (0..20)
            .map(|i| cam.back_project(&pose, 160.0 + i as f64, 120.0, 2.0))
            .collect();
        points.push(cam.back_project(&pose, 10.0, 120.0, 2.0));
        points.push(cam.back_project(&pose, 160.0, 235.0, 2.0));
        let s = flow_metric(
            &cam,
            &frames,
            &frames,
            &PointCloud { points },
            &Twist::zero(),
            0.0,
        )
        .unwrap();
        assert_eq!(s.valid_points, 20);
    }

    #[test]
    fn invalid_camera_rejected() {
        let cam = CameraModel {
            border: 200.0,
            ..CameraModel::default()
        };
        assert!(cam.validate().is_err());
    }
}
