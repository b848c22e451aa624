//! TOML file formats for head models, disturbance scripts and run settings.
//!
//! Angles in model and script files are given in the unit declared by the
//! file's `units` key. Relative paths inside a run file are resolved against
//! the directory of that file.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

use crate::kinematics::{DhLink, Pose};
use crate::model::{HeadModel, ImuMount};
use crate::simulator::{
    CameraModel, CloudParams, DisturbanceJoint, DisturbanceScript, PlantModel, ScriptSegment,
    SimParams, StochasticSegment,
};
use crate::stabilizer::{DofSet, Mode, StabilizerConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}:{column}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{}: {message}", path.display())]
    Invalid { path: PathBuf, message: String },
}

impl ConfigError {
    fn invalid(path: &Path, message: impl std::fmt::Display) -> Self {
        ConfigError::Invalid {
            path: path.to_path_buf(),
            message: message.to_string(),
        }
    }

    /// Path of the file the error refers to.
    pub fn path(&self) -> &Path {
        match self {
            ConfigError::Io { path, .. }
            | ConfigError::Parse { path, .. }
            | ConfigError::Invalid { path, .. } => path,
        }
    }
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Parses TOML, turning the error span into a line and column.
pub fn parse_toml<T: for<'de> Deserialize<'de>>(text: &str, path: &Path) -> Result<T, ConfigError> {
    toml::from_str(text).map_err(|e| {
        let offset = e.span().map(|s| s.start).unwrap_or(0).min(text.len());
        let before = &text[..offset];
        let line = before.matches('\n').count() + 1;
        let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
        ConfigError::Parse {
            path: path.to_path_buf(),
            line,
            column,
            message: e.message().trim().to_string(),
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    Degrees,
    Radians,
}

impl Units {
    pub fn to_radians(self, v: f64) -> f64 {
        match self {
            Units::Degrees => v.to_radians(),
            Units::Radians => v,
        }
    }

    pub fn from_radians(self, v: f64) -> f64 {
        match self {
            Units::Degrees => v.to_degrees(),
            Units::Radians => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkEntry {
    /// meters
    pub a: f64,
    /// meters
    pub d: f64,
    pub alpha: f64,
    pub theta_offset: f64,
    pub min: f64,
    pub max: f64,
    /// angle units per second
    pub vel_limit: f64,
}

impl LinkEntry {
    fn to_link(&self, units: Units) -> crate::error::Result<DhLink> {
        let r = |v| units.to_radians(v);
        DhLink::new(
            self.a,
            self.d,
            r(self.alpha),
            r(self.theta_offset),
            r(self.min),
            r(self.max),
            r(self.vel_limit),
        )
    }

    fn from_link(link: &DhLink, units: Units) -> Self {
        let u = |v| units.from_radians(v);
        Self {
            a: link.a,
            d: link.d,
            alpha: u(link.alpha),
            theta_offset: u(link.theta_offset),
            min: u(link.joint_min),
            max: u(link.joint_max),
            vel_limit: u(link.vel_limit),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseEntry {
    /// meters
    pub translation: [f64; 3],
    /// roll, pitch, yaw (fixed-axis x, y, z)
    pub rpy: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImuEntry {
    /// Neck link carrying the sensor: 0 pitch, 1 roll, 2 yaw.
    pub neck_link: usize,
    /// meters, in the link frame
    pub offset: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub name: String,
    pub units: Units,
    pub base: BaseEntry,
    pub torso: Vec<LinkEntry>,
    pub neck: Vec<LinkEntry>,
    pub left_eye: Vec<LinkEntry>,
    pub right_eye: Vec<LinkEntry>,
    pub imu: ImuEntry,
}

fn fixed<const N: usize>(
    entries: &[LinkEntry],
    units: Units,
    what: &str,
) -> Result<[DhLink; N], String> {
    if entries.len() != N {
        return Err(format!(
            "expected {N} [[{what}]] links, found {}",
            entries.len()
        ));
    }
    let links: Vec<DhLink> = entries
        .iter()
        .enumerate()
        .map(|(i, e)| {
            e.to_link(units)
                .map_err(|err| format!("[[{what}]] link {}: {err}", i + 1))
        })
        .collect::<Result<_, _>>()?;
    Ok(links.try_into().expect("length checked"))
}

impl ModelFile {
    pub fn to_model(&self) -> Result<HeadModel, String> {
        let u = self.units;
        let [rx, ry, rz] = self.base.rpy;
        let base = Pose::from_rpy(
            u.to_radians(rx),
            u.to_radians(ry),
            u.to_radians(rz),
            Vector3::from(self.base.translation),
        );
        HeadModel::new(
            self.name.clone(),
            base,
            fixed(&self.torso, u, "torso")?,
            fixed(&self.neck, u, "neck")?,
            fixed(&self.left_eye, u, "left_eye")?,
            fixed(&self.right_eye, u, "right_eye")?,
            ImuMount {
                neck_link: self.imu.neck_link,
                offset: Vector3::from(self.imu.offset),
            },
        )
        .map_err(|e| e.to_string())
    }

    pub fn from_model(model: &HeadModel, units: Units) -> Self {
        let (roll, pitch, yaw) = model.base.rpy();
        let links = |ls: &[DhLink]| ls.iter().map(|l| LinkEntry::from_link(l, units)).collect();
        Self {
            name: model.name.clone(),
            units,
            base: BaseEntry {
                translation: model.base.translation.into(),
                rpy: [
                    units.from_radians(roll),
                    units.from_radians(pitch),
                    units.from_radians(yaw),
                ],
            },
            torso: links(&model.torso),
            neck: links(&model.neck),
            left_eye: links(&model.left_eye),
            right_eye: links(&model.right_eye),
            imu: ImuEntry {
                neck_link: model.imu.neck_link,
                offset: model.imu.offset.into(),
            },
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("model file is always serializable")
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        parse_toml(&read(path)?, path)
    }
}

pub fn load_model(path: &Path) -> Result<HeadModel, ConfigError> {
    ModelFile::load(path)?
        .to_model()
        .map_err(|m| ConfigError::invalid(path, m))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentEntry {
    pub label: String,
    pub joint: DisturbanceJoint,
    /// seconds
    pub start: f64,
    pub end: f64,
    /// angle units per second, or m/s for base joints
    pub velocity: f64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub external: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StochasticEntry {
    pub label: String,
    pub start: f64,
    pub end: f64,
    pub joints: Vec<DisturbanceJoint>,
    /// RMS velocity: angle units per second, or m/s when all joints are base joints
    pub amplitude: f64,
    /// Hz
    pub bandwidth: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptFile {
    pub name: String,
    pub units: Units,
    #[serde(default, rename = "segment", skip_serializing_if = "Vec::is_empty")]
    pub segments: Vec<SegmentEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stochastic: Option<StochasticEntry>,
}

impl ScriptFile {
    pub fn to_script(&self) -> Result<DisturbanceScript, String> {
        let u = self.units;
        let rate = |joint: DisturbanceJoint, v: f64| {
            if joint.is_prismatic() {
                v
            } else {
                u.to_radians(v)
            }
        };
        let segments = self
            .segments
            .iter()
            .map(|s| ScriptSegment {
                label: s.label.clone(),
                joint: s.joint,
                start: s.start,
                end: s.end,
                velocity: rate(s.joint, s.velocity),
                external: s.external,
            })
            .collect();
        let stochastic = match &self.stochastic {
            None => None,
            Some(st) => {
                let prismatic = st.joints.iter().filter(|j| j.is_prismatic()).count();
                if prismatic != 0 && prismatic != st.joints.len() {
                    return Err(
                        "stochastic joints must be all torso joints or all base joints".into(),
                    );
                }
                Some(StochasticSegment {
                    label: st.label.clone(),
                    start: st.start,
                    end: st.end,
                    joints: st.joints.clone(),
                    amplitude: if prismatic > 0 {
                        st.amplitude
                    } else {
                        u.to_radians(st.amplitude)
                    },
                    bandwidth: st.bandwidth,
                    seed: st.seed,
                })
            }
        };
        DisturbanceScript::new(self.name.clone(), segments, stochastic).map_err(|e| e.to_string())
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("script file is always serializable")
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        parse_toml(&read(path)?, path)
    }
}

pub fn load_script(path: &Path) -> Result<DisturbanceScript, ConfigError> {
    ScriptFile::load(path)?
        .to_script()
        .map_err(|m| ConfigError::invalid(path, m))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SaturationEntry {
    Limits {
        neck_deg_per_s: f64,
        eyes_deg_per_s: f64,
    },
    /// Only `"none"` is accepted.
    Keyword(String),
}

impl Default for SaturationEntry {
    fn default() -> Self {
        SaturationEntry::Limits {
            neck_deg_per_s: 40.0,
            eyes_deg_per_s: 180.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantEntry {
    pub tau_neck: f64,
    pub tau_eye: f64,
}

impl Default for PlantEntry {
    fn default() -> Self {
        let p = PlantModel::default();
        Self {
            tau_neck: p.tau_neck,
            tau_eye: p.tau_eye,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GyroEntry {
    /// rad/s per axis
    pub noise_sigma: f64,
}

impl Default for GyroEntry {
    fn default() -> Self {
        Self {
            noise_sigma: SimParams::default().gyro_sigma,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraEntry {
    pub focal: f64,
    pub width: f64,
    pub height: f64,
    pub border: f64,
}

impl Default for CameraEntry {
    fn default() -> Self {
        let c = CameraModel::default();
        Self {
            focal: c.focal,
            width: c.width,
            height: c.height,
            border: c.border,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CloudEntry {
    pub points: usize,
    pub depth_min: f64,
    pub depth_max: f64,
}

impl Default for CloudEntry {
    fn default() -> Self {
        let c = CloudParams::default();
        Self {
            points: c.points,
            depth_min: c.depth_min,
            depth_max: c.depth_max,
        }
    }
}

fn default_mode() -> Mode {
    Mode::Kff
}
fn default_dof() -> DofSet {
    DofSet::NeckAndEyes
}
fn default_damping() -> f64 {
    StabilizerConfig::default().damping
}
fn default_true() -> bool {
    true
}
fn default_dt() -> f64 {
    SimParams::default().dt
}
fn default_duration() -> f64 {
    SimParams::default().duration
}
fn default_fixation() -> f64 {
    SimParams::default().fixation_distance
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunFile {
    pub script: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default = "default_dof")]
    pub dof: DofSet,
    #[serde(default = "default_damping")]
    pub damping: f64,
    #[serde(default = "default_true")]
    pub sequential: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_duration")]
    pub duration: f64,
    #[serde(default = "default_fixation")]
    pub fixation_distance: f64,
    #[serde(default)]
    pub saturation: SaturationEntry,
    #[serde(default)]
    pub plant: PlantEntry,
    #[serde(default)]
    pub gyro: GyroEntry,
    #[serde(default)]
    pub camera: CameraEntry,
    #[serde(default)]
    pub cloud: CloudEntry,
}

impl RunFile {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        parse_toml(&read(path)?, path)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("run file is always serializable")
    }

    pub fn stabilizer_config(&self) -> Result<StabilizerConfig, String> {
        let velocity_saturation = match &self.saturation {
            SaturationEntry::Keyword(k) if k == "none" => [f64::INFINITY; 6],
            SaturationEntry::Keyword(k) => {
                return Err(format!(
                    "saturation must be \"none\" or a table of limits, got \"{k}\""
                ))
            }
            SaturationEntry::Limits {
                neck_deg_per_s,
                eyes_deg_per_s,
            } => {
                let (n, e) = (neck_deg_per_s.to_radians(), eyes_deg_per_s.to_radians());
                [n, n, n, e, e, e]
            }
        };
        let config = StabilizerConfig {
            damping: self.damping,
            mode: self.mode,
            dof_set: self.dof,
            velocity_saturation,
            sequential: self.sequential,
        };
        config.validate().map_err(|e| e.to_string())?;
        Ok(config)
    }

    pub fn sim_params(&self) -> Result<SimParams, String> {
        let params = SimParams {
            dt: self.dt,
            duration: self.duration,
            seed: self.seed,
            fixation_distance: self.fixation_distance,
            camera: CameraModel {
                focal: self.camera.focal,
                width: self.camera.width,
                height: self.camera.height,
                border: self.camera.border,
            },
            cloud: CloudParams {
                points: self.cloud.points,
                depth_min: self.cloud.depth_min,
                depth_max: self.cloud.depth_max,
            },
            plant: PlantModel {
                tau_neck: self.plant.tau_neck,
                tau_eye: self.plant.tau_eye,
            },
            gyro_sigma: self.gyro.noise_sigma,
        };
        params.validate().map_err(|e| e.to_string())?;
        if !(self.fixation_distance.is_finite() && self.fixation_distance > 0.0) {
            return Err(format!(
                "fixation_distance = {} must be positive",
                self.fixation_distance
            ));
        }
        Ok(params)
    }
}

/// Everything needed for one run, resolved from a run file.
#[derive(Debug, Clone)]
pub struct RunSetup {
    pub file: RunFile,
    pub model: HeadModel,
    pub script: DisturbanceScript,
    pub config: StabilizerConfig,
    pub params: SimParams,
    pub script_path: PathBuf,
    /// `None` when the built-in model is used.
    pub model_path: Option<PathBuf>,
    /// Output path from the file, resolved; `None` if not given.
    pub output: Option<PathBuf>,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Loads a run file with its script and model. Without a `model` key the
/// `fallback_model` file is used if given, otherwise the built-in model.
pub fn load_run(path: &Path, fallback_model: Option<&Path>) -> Result<RunSetup, ConfigError> {
    let file = RunFile::load(path)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let script_path = resolve(dir, &file.script);
    let script = load_script(&script_path)?;
    let model_path = match (&file.model, fallback_model) {
        (Some(m), _) => Some(resolve(dir, m)),
        (None, Some(f)) => Some(f.to_path_buf()),
        (None, None) => None,
    };
    let model = match &model_path {
        Some(p) => load_model(p)?,
        None => HeadModel::default_model(),
    };
    let config = file
        .stabilizer_config()
        .map_err(|m| ConfigError::invalid(path, m))?;
    let params = file
        .sim_params()
        .map_err(|m| ConfigError::invalid(path, m))?;
    let output = file.output.as_ref().map(|o| resolve(dir, o));
    Ok(RunSetup {
        file,
        model,
        script,
        config,
        params,
        script_path,
        model_path,
        output,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_file_round_trip_and_units() {
        let m = HeadModel::default_model();
        let deg = ModelFile::from_model(&m, Units::Degrees);
        let back = deg.to_model().unwrap();
        for (a, b) in back
            .torso
            .iter()
            .chain(&back.neck)
            .zip(m.torso.iter().chain(&m.neck))
        {
            assert!((a.alpha - b.alpha).abs() < 1e-15 && (a.joint_max - b.joint_max).abs() < 1e-15);
        }
        let text = deg.to_toml_string();
        let reparsed: ModelFile = parse_toml(&text, Path::new("mem")).unwrap();
        assert_eq!(reparsed, deg);
        let rad = ModelFile::from_model(&back, Units::Radians);
        assert_eq!(rad.to_model().unwrap(), back);
    }

    #[test]
    fn wrong_link_count_rejected() {
        let mut f = ModelFile::from_model(&HeadModel::default_model(), Units::Degrees);
        f.neck.pop();
        let err = f.to_model().unwrap_err();
        assert!(err.contains("expected 3 [[neck]] links, found 2"), "{err}");
    }

    #[test]
    fn unknown_key_reports_line() {
        let text = "name = \"s\"\nunits = \"degrees\"\nspeed = 3\n";
        match parse_toml::<ScriptFile>(text, Path::new("s.toml")) {
            Err(ConfigError::Parse { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("speed"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn script_units() {
        let text = r#"
name = "mix"
units = "degrees"

[[segment]]
label = "yaw"
joint = "torso-yaw"
start = 0.0
end = 1.0
velocity = 90.0

[[segment]]
label = "lift"
joint = "base-z"
start = 0.0
end = 1.0
velocity = 0.05
"#;
        let s = parse_toml::<ScriptFile>(text, Path::new("m.toml"))
            .unwrap()
            .to_script()
            .unwrap();
        assert!((s.segments[0].velocity - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
        assert_eq!(s.segments[1].velocity, 0.05);
    }

    #[test]
    fn run_defaults_and_saturation() {
        let f: RunFile = parse_toml("script = \"x.toml\"\n", Path::new("r.toml")).unwrap();
        let c = f.stabilizer_config().unwrap();
        assert_eq!(c, StabilizerConfig::default());
        assert_eq!(f.sim_params().unwrap(), SimParams::default());
        let f: RunFile = parse_toml(
            "script = \"x.toml\"\nsaturation = \"none\"\n",
            Path::new("r.toml"),
        )
        .unwrap();
        assert!(f
            .stabilizer_config()
            .unwrap()
            .velocity_saturation
            .iter()
            .all(|v| v.is_infinite()));
        let f: RunFile = parse_toml(
            "script = \"x.toml\"\nsaturation = \"off\"\n",
            Path::new("r.toml"),
        )
        .unwrap();
        assert!(f.stabilizer_config().is_err());
        let text = "script = \"x.toml\"\n[camera]\nfocal = 300.0\nzoom = 2\n";
        assert!(matches!(
            parse_toml::<RunFile>(text, Path::new("r.toml")),
            Err(ConfigError::Parse { line: 4, .. })
        ));
    }
}
