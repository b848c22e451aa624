//! Scripted and stochastic disturbance velocities.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::error::{GazeError, Result};

/// Joint driven by the disturbance script. The base joints form a prismatic
/// stage under the torso (world-frame translation of the whole robot).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DisturbanceJoint {
    TorsoYaw,
    TorsoPitch,
    TorsoRoll,
    BaseX,
    BaseY,
    BaseZ,
}

impl DisturbanceJoint {
    pub const ALL: [DisturbanceJoint; 6] = [
        DisturbanceJoint::TorsoYaw,
        DisturbanceJoint::TorsoPitch,
        DisturbanceJoint::TorsoRoll,
        DisturbanceJoint::BaseX,
        DisturbanceJoint::BaseY,
        DisturbanceJoint::BaseZ,
    ];

    pub fn index(&self) -> usize {
        *self as usize
    }

    pub fn is_prismatic(&self) -> bool {
        self.index() >= 3
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            DisturbanceJoint::TorsoYaw => "torso-yaw",
            DisturbanceJoint::TorsoPitch => "torso-pitch",
            DisturbanceJoint::TorsoRoll => "torso-roll",
            DisturbanceJoint::BaseX => "base-x",
            DisturbanceJoint::BaseY => "base-y",
            DisturbanceJoint::BaseZ => "base-z",
        }
    }
}

/// Constant velocity on one joint over `start <= t < end`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScriptSegment {
    pub label: String,
    pub joint: DisturbanceJoint,
    pub start: f64,
    pub end: f64,
    /// rad/s for torso joints, m/s for base joints.
    pub velocity: f64,
    /// External disturbances are not visible to the feedforward estimator.
    pub external: bool,
}

/// Band-limited random velocity, always external.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticSegment {
    pub label: String,
    pub start: f64,
    pub end: f64,
    pub joints: Vec<DisturbanceJoint>,
    /// RMS velocity per joint (rad/s or m/s).
    pub amplitude: f64,
    /// Highest frequency component (Hz).
    pub bandwidth: f64,
    /// Falls back to the run seed when absent.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceScript {
    pub name: String,
    pub segments: Vec<ScriptSegment>,
    pub stochastic: Option<StochasticSegment>,
}

/// Disturbance velocities over one tick.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DisturbanceSample {
    /// Actual torso rates (yaw, pitch, roll).
    pub torso: Vector3<f64>,
    /// Actual base velocity (world frame).
    pub base: Vector3<f64>,
    /// Part of `torso` commanded by the robot itself.
    pub known_torso: Vector3<f64>,
    pub known_base: Vector3<f64>,
    pub label: String,
}

pub const REST_LABEL: &str = "rest";

const STOCHASTIC_COMPONENTS: usize = 12;

#[derive(Debug, Clone, Copy)]
struct Sinusoid {
    amplitude: f64,
    omega: f64,
    phase: f64,
}

/// A validated script with its random components drawn.
#[derive(Debug, Clone)]
pub struct PreparedScript {
    script: DisturbanceScript,
    sinusoids: Vec<(DisturbanceJoint, Vec<Sinusoid>)>,
}

impl DisturbanceScript {
    pub fn new(
        name: impl Into<String>,
        segments: Vec<ScriptSegment>,
        stochastic: Option<StochasticSegment>,
    ) -> Result<Self> {
        let s = Self {
            name: name.into(),
            segments,
            stochastic,
        };
        s.validate()?;
        Ok(s)
    }

    /// Script with no motion at all.
    pub fn empty(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            segments: Vec::new(),
            stochastic: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(GazeError::InvalidInput(msg));
        let mut intervals: Vec<(DisturbanceJoint, f64, f64, &str)> = Vec::new();
        let labels = self
            .segments
            .iter()
            .map(|s| &s.label)
            .chain(self.stochastic.iter().map(|s| &s.label));
        for label in labels {
            let ok = !label.is_empty()
                && label
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c));
            if !ok {
                return bad(format!("segment label `{label}` must be non-empty and use only letters, digits, `-`, `_` or `.`"));
            }
        }
        for s in &self.segments {
            if !(s.start.is_finite() && s.end.is_finite() && s.start >= 0.0 && s.end > s.start) {
                return bad(format!(
                    "segment `{}`: need 0 <= start < end, got [{}, {})",
                    s.label, s.start, s.end
                ));
            }
            if !s.velocity.is_finite() {
                return bad(format!("segment `{}`: velocity must be finite", s.label));
            }
            intervals.push((s.joint, s.start, s.end, &s.label));
        }
        if let Some(st) = &self.stochastic {
            if !(st.start.is_finite() && st.end.is_finite() && st.start >= 0.0 && st.end > st.start)
            {
                return bad(format!(
                    "stochastic segment `{}`: need 0 <= start < end",
                    st.label
                ));
            }
            if !(st.amplitude.is_finite() && st.amplitude >= 0.0) {
                return bad("stochastic amplitude must be finite and non-negative".into());
            }
            if !(st.bandwidth.is_finite() && st.bandwidth > 0.0) {
                return bad("stochastic bandwidth must be positive".into());
            }
            if st.joints.is_empty() {
                return bad("stochastic segment needs at least one joint".into());
            }
            for j in &st.joints {
                intervals.push((*j, st.start, st.end, &st.label));
            }
        }
        for (i, a) in intervals.iter().enumerate() {
            for b in &intervals[i + 1..] {
                if a.0 == b.0 && a.1 < b.2 && b.1 < a.2 {
                    return bad(format!(
                        "segments `{}` and `{}` overlap on joint {}",
                        a.3,
                        b.3,
                        a.0.as_str()
                    ));
                }
            }
        }
        Ok(())
    }

    /// Draws the random components. `run_seed` is used when the stochastic
    /// segment has no seed of its own.
    pub fn prepare(&self, run_seed: u64) -> Result<PreparedScript> {
        self.validate()?;
        let mut sinusoids = Vec::new();
        if let Some(st) = &self.stochastic {
            let mut rng = ChaCha8Rng::seed_from_u64(st.seed.unwrap_or(run_seed));
            // Equal-amplitude components: RMS of the sum is a * sqrt(n / 2).
            let a = st.amplitude * (2.0 / STOCHASTIC_COMPONENTS as f64).sqrt();
            for joint in &st.joints {
                let comps = (0..STOCHASTIC_COMPONENTS)
                    .map(|_| Sinusoid {
                        amplitude: a,
                        omega: TAU * rng.random_range(0.3 * st.bandwidth..=st.bandwidth),
                        phase: rng.random_range(0.0..TAU),
                    })
                    .collect();
                sinusoids.push((*joint, comps));
            }
        }
        Ok(PreparedScript {
            script: self.clone(),
            sinusoids,
        })
    }
}

impl PreparedScript {
    pub fn script(&self) -> &DisturbanceScript {
        &self.script
    }

    /// Velocities active at time `t` (half-open segment intervals).
    pub fn sample(&self, t: f64) -> DisturbanceSample {
        let mut rates = [0.0; 6];
        let mut known = [0.0; 6];
        let mut label: Option<&str> = None;
        for s in &self.script.segments {
            if s.start <= t && t < s.end {
                rates[s.joint.index()] += s.velocity;
                if !s.external {
                    known[s.joint.index()] += s.velocity;
                }
                label.get_or_insert(&s.label);
            }
        }
        if let Some(st) = &self.script.stochastic {
            if st.start <= t && t < st.end {
                let tau = t - st.start;
                for (joint, comps) in &self.sinusoids {
                    rates[joint.index()] += comps
                        .iter()
                        .map(|c| c.amplitude * (c.omega * tau + c.phase).sin())
                        .sum::<f64>();
                }
                label.get_or_insert(&st.label);
            }
        }
        DisturbanceSample {
            torso: Vector3::new(rates[0], rates[1], rates[2]),
            base: Vector3::new(rates[3], rates[4], rates[5]),
            known_torso: Vector3::new(known[0], known[1], known[2]),
            known_base: Vector3::new(known[3], known[4], known[5]),
            label: label.unwrap_or(REST_LABEL).to_string(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(
        label: &str,
        joint: DisturbanceJoint,
        start: f64,
        end: f64,
        velocity: f64,
    ) -> ScriptSegment {
        ScriptSegment {
            label: label.into(),
            joint,
            start,
            end,
            velocity,
            external: false,
        }
    }

    #[test]
    fn segments_are_half_open() {
        let s = DisturbanceScript::new(
            "t",
            vec![seg("yaw", DisturbanceJoint::TorsoYaw, 1.0, 2.0, 0.5)],
            None,
        )
        .unwrap()
        .prepare(0)
        .unwrap();
        assert_eq!(s.sample(0.99).torso, Vector3::zeros());
        assert_eq!(s.sample(0.99).label, REST_LABEL);
        assert_eq!(s.sample(1.0).torso, Vector3::new(0.5, 0.0, 0.0));
        assert_eq!(s.sample(1.0).label, "yaw");
        assert_eq!(s.sample(2.0).torso, Vector3::zeros());
    }

    #[test]
    fn overlap_on_same_joint_rejected() {
        let r = DisturbanceScript::new(
            "t",
            vec![
                seg("a", DisturbanceJoint::TorsoYaw, 0.0, 2.0, 0.1),
                seg("b", DisturbanceJoint::TorsoYaw, 1.5, 3.0, 0.1),
            ],
            None,
        );
        assert!(matches!(r, Err(GazeError::InvalidInput(_))));
        // Different joints may run together; touching intervals do not overlap.
        DisturbanceScript::new(
            "t",
            vec![
                seg("a", DisturbanceJoint::TorsoYaw, 0.0, 2.0, 0.1),
                seg("b", DisturbanceJoint::TorsoRoll, 1.5, 3.0, 0.1),
                seg("c", DisturbanceJoint::TorsoYaw, 2.0, 3.0, 0.1),
            ],
            None,
        )
        .unwrap();
    }

    #[test]
    fn bad_times_rejected() {
        for (a, b) in [(-1.0, 1.0), (2.0, 1.0), (1.0, 1.0), (0.0, f64::NAN)] {
            assert!(DisturbanceScript::new(
                "t",
                vec![seg("x", DisturbanceJoint::BaseZ, a, b, 0.1)],
                None
            )
            .is_err());
        }
    }

    #[test]
    fn external_segments_hidden_from_known_rates() {
        let mut ext = seg("push", DisturbanceJoint::TorsoPitch, 0.0, 1.0, 0.3);
        ext.external = true;
        let s = DisturbanceScript::new(
            "t",
            vec![ext, seg("lift", DisturbanceJoint::BaseZ, 0.0, 1.0, 0.05)],
            None,
        )
        .unwrap()
        .prepare(0)
        .unwrap();
        let d = s.sample(0.5);
        assert_eq!(d.torso, Vector3::new(0.0, 0.3, 0.0));
        assert_eq!(d.known_torso, Vector3::zeros());
        assert_eq!(d.known_base, Vector3::new(0.0, 0.0, 0.05));
    }

    #[test]
    fn stochastic_rms_and_determinism() {
        let script = DisturbanceScript::new(
            "shake",
            Vec::new(),
            Some(StochasticSegment {
                label: "shake".into(),
                start: 0.0,
                end: 1000.0,
                joints: vec![DisturbanceJoint::TorsoYaw],
                amplitude: 0.2,
                bandwidth: 2.0,
                seed: None,
            }),
        )
        .unwrap();
        let a = script.prepare(5).unwrap();
        let b = script.prepare(5).unwrap();
        let c = script.prepare(6).unwrap();
        let n = 100_000;
        let samples: Vec<f64> = (0..n).map(|k| a.sample(k as f64 * 0.01).torso[0]).collect();
        let rms = (samples.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
        assert!((rms - 0.2).abs() < 0.02, "rms {rms}");
        assert_eq!(a.sample(3.21), b.sample(3.21));
        assert_ne!(a.sample(3.21), c.sample(3.21));
        assert_eq!(a.sample(3.21).known_torso, Vector3::zeros());
    }
}
