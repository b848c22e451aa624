//! Trajectory logs: per-tick records, CSV persistence and summaries.
//!
//! Row `k` holds the state at `t_k = k * dt`, the command and estimate
//! computed from it, and the twist and image motion produced over
//! `[t_k, t_k + dt]`.

use nalgebra::Vector3;
use serde::Serialize;
use std::fmt::Write as _;
use std::path::Path;

use super::flow::FlowSample;
use crate::error::{GazeError, Result};
use crate::model::HeadJoints;
use crate::stabilizer::{DofSet, Mode, StabilizerCommand, Twist};
use crate::stereo::EyeDof;

const FORMAT_TAG: &str = "gazestab trajectory log v1";

/// Column names of the CSV log, in order.
pub const CSV_COLUMNS: [&str; 44] = [
    "t",
    "segment",
    "torso_yaw",
    "torso_pitch",
    "torso_roll",
    "neck_pitch",
    "neck_roll",
    "neck_yaw",
    "eye_tilt",
    "eye_version",
    "eye_vergence",
    "base_x",
    "base_y",
    "base_z",
    "cmd_neck_pitch",
    "cmd_neck_roll",
    "cmd_neck_yaw",
    "cmd_tilt",
    "cmd_version",
    "cmd_vergence",
    "singular",
    "saturated",
    "est_vx",
    "est_vy",
    "est_vz",
    "est_wx",
    "est_wy",
    "est_wz",
    "dist_vx",
    "dist_vy",
    "dist_vz",
    "dist_wx",
    "dist_wy",
    "dist_wz",
    "true_vx",
    "true_vy",
    "true_vz",
    "true_wx",
    "true_wy",
    "true_wz",
    "optfl",
    "residual_speed",
    "residual_omega",
    "valid_points",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMeta {
    pub mode: Mode,
    pub dof_set: DofSet,
    pub seed: u64,
    pub script: String,
    pub model: String,
    pub dt: f64,
    pub duration: f64,
    pub fixation_distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub t: f64,
    /// Label of the active script segment, or `rest`.
    pub segment: String,
    pub q: HeadJoints,
    pub base: Vector3<f64>,
    pub command: StabilizerCommand,
    /// Twist the stabilizer acted on.
    pub estimate: Twist,
    /// Fixation twist caused by the disturbance alone.
    pub disturbance: Twist,
    /// Fixation twist with the applied neck and eye rates included.
    pub compensated: Twist,
    pub flow: FlowSample,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub meta: RunMeta,
    pub rows: Vec<LogRow>,
}

fn push_vec(out: &mut Vec<f64>, v: &Vector3<f64>) {
    out.extend_from_slice(v.as_slice());
}

impl LogRow {
    fn numeric_fields(&self) -> Vec<f64> {
        let mut f = Vec::with_capacity(CSV_COLUMNS.len());
        f.extend_from_slice(self.q.to_vector().as_slice());
        push_vec(&mut f, &self.base);
        push_vec(&mut f, &self.command.neck);
        push_vec(&mut f, &self.command.eyes);
        f
    }

    fn twist_fields(&self) -> Vec<f64> {
        let mut f = Vec::with_capacity(18);
        for tw in [&self.estimate, &self.disturbance, &self.compensated] {
            push_vec(&mut f, &tw.linear);
            push_vec(&mut f, &tw.angular);
        }
        f
    }
}

fn join(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Percent reduction of `value` relative to `baseline`; `None` when the
/// baseline is zero but the value is not.
pub fn reduction_percent(value: f64, baseline: f64) -> Option<f64> {
    if baseline > 0.0 {
        Some(100.0 * (1.0 - value / baseline))
    } else if value == 0.0 {
        Some(0.0)
    } else {
        None
    }
}

impl TrajectoryLog {
    pub fn mean_optfl(&self) -> f64 {
        mean(self.rows.iter().map(|r| r.flow.optfl))
    }

    /// Segment labels in order of first appearance.
    pub fn segment_labels(&self) -> Vec<String> {
        let mut labels: Vec<String> = Vec::new();
        for r in &self.rows {
            if !labels.contains(&r.segment) {
                labels.push(r.segment.clone());
            }
        }
        labels
    }

    /// Mean optical flow over the rows labelled `label`.
    pub fn segment_mean_optfl(&self, label: &str) -> Option<f64> {
        let values: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.segment == label)
            .map(|r| r.flow.optfl)
            .collect();
        (!values.is_empty()).then(|| mean(values.into_iter()))
    }

    pub fn to_csv_string(&self) -> String {
        let m = &self.meta;
        let mut out = String::new();
        writeln!(out, "# {FORMAT_TAG}").unwrap();
        writeln!(out, "# mode={}", m.mode.as_str()).unwrap();
        writeln!(out, "# dof={}", m.dof_set.as_str()).unwrap();
        writeln!(out, "# seed={}", m.seed).unwrap();
        writeln!(out, "# script={}", m.script).unwrap();
        writeln!(out, "# model={}", m.model).unwrap();
        writeln!(out, "# dt={}", m.dt).unwrap();
        writeln!(out, "# duration={}", m.duration).unwrap();
        writeln!(out, "# fixation_distance={}", m.fixation_distance).unwrap();
        writeln!(out, "{}", CSV_COLUMNS.join(",")).unwrap();
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.t,
                r.segment,
                join(&r.numeric_fields()),
                u8::from(r.command.singular),
                u8::from(r.command.saturated),
                join(&r.twist_fields()),
                r.flow.optfl,
                r.flow.residual_speed,
                r.flow.residual_omega,
                r.flow.valid_points,
            )
            .unwrap();
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_csv_string())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GazeError::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
        Self::from_csv_str(&text).map_err(|e| match e {
            GazeError::InvalidInput(msg) => {
                GazeError::InvalidInput(format!("{}: {msg}", path.display()))
            }
            other => other,
        })
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let bad = |line: usize, msg: String| GazeError::InvalidInput(format!("line {line}: {msg}"));
        let mut meta: std::collections::HashMap<String, String> = Default::default();
        let mut header_seen = false;
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let n = i + 1;
            if let Some(comment) = line.strip_prefix('#') {
                let comment = comment.trim();
                if let Some((k, v)) = comment.split_once('=') {
                    meta.insert(k.trim().to_string(), v.trim().to_string());
                } else if i == 0 && comment != FORMAT_TAG {
                    return Err(bad(n, format!("unrecognized log format `{comment}`")));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            if !header_seen {
                if line != CSV_COLUMNS.join(",") {
                    return Err(bad(n, "unexpected CSV header".into()));
                }
                header_seen = true;
                continue;
            }
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != CSV_COLUMNS.len() {
                return Err(bad(
                    n,
                    format!(
                        "expected {} fields, found {}",
                        CSV_COLUMNS.len(),
                        cells.len()
                    ),
                ));
            }
            let num = |j: usize| -> Result<f64> {
                cells[j].parse::<f64>().map_err(|_| {
                    bad(
                        n,
                        format!(
                            "column `{}`: `{}` is not a number",
                            CSV_COLUMNS[j], cells[j]
                        ),
                    )
                })
            };
            let v3 = |j: usize| -> Result<Vector3<f64>> {
                Ok(Vector3::new(num(j)?, num(j + 1)?, num(j + 2)?))
            };
            let flag = |j: usize| -> Result<bool> {
                match cells[j] {
                    "0" => Ok(false),
                    "1" => Ok(true),
                    other => Err(bad(
                        n,
                        format!("column `{}`: `{other}` is not 0 or 1", CSV_COLUMNS[j]),
                    )),
                }
            };
            let eyes = v3(8)?;
            let t = num(0)?;
            rows.push(LogRow {
                t,
                segment: cells[1].to_string(),
                q: HeadJoints {
                    torso: v3(2)?,
                    neck: v3(5)?,
                    eyes: EyeDof::new(eyes[0], eyes[1], eyes[2]),
                },
                base: v3(11)?,
                command: StabilizerCommand {
                    neck: v3(14)?,
                    eyes: v3(17)?,
                    singular: flag(20)?,
                    saturated: flag(21)?,
                },
                estimate: Twist::new(v3(22)?, v3(25)?),
                disturbance: Twist::new(v3(28)?, v3(31)?),
                compensated: Twist::new(v3(34)?, v3(37)?),
                flow: FlowSample {
                    t,
                    optfl: num(40)?,
                    residual_speed: num(41)?,
                    residual_omega: num(42)?,
                    valid_points: cells[43].parse().map_err(|_| {
                        bad(
                            n,
                            format!("column `valid_points`: `{}` is not a count", cells[43]),
                        )
                    })?,
                },
            });
        }
        if !header_seen {
            return Err(GazeError::InvalidInput("log has no CSV header".into()));
        }
        let get = |k: &str| -> Result<&String> {
            meta.get(k)
                .ok_or_else(|| GazeError::InvalidInput(format!("log metadata is missing `{k}`")))
        };
        let parse_f = |k: &str| -> Result<f64> {
            get(k)?
                .parse()
                .map_err(|_| GazeError::InvalidInput(format!("log metadata `{k}` is not a number")))
        };
        let meta = RunMeta {
            mode: get("mode")?.parse().map_err(GazeError::InvalidInput)?,
            dof_set: get("dof")?.parse().map_err(GazeError::InvalidInput)?,
            seed: get("seed")?.parse().map_err(|_| {
                GazeError::InvalidInput("log metadata `seed` is not an integer".into())
            })?,
            script: get("script")?.clone(),
            model: get("model")?.clone(),
            dt: parse_f("dt")?,
            duration: parse_f("duration")?,
            fixation_distance: parse_f("fixation_distance")?,
        };
        Ok(Self { meta, rows })
    }

    pub fn stats(&self) -> LogStats {
        LogStats {
            meta: self.meta.clone(),
            rows: self.rows.len(),
            mean_optfl: self.mean_optfl(),
            max_optfl: self.rows.iter().map(|r| r.flow.optfl).fold(0.0, f64::max),
            mean_residual_speed: mean(self.rows.iter().map(|r| r.flow.residual_speed)),
            mean_residual_omega: mean(self.rows.iter().map(|r| r.flow.residual_omega)),
            singular_ticks: self.rows.iter().filter(|r| r.command.singular).count(),
            saturated_ticks: self.rows.iter().filter(|r| r.command.saturated).count(),
            segments: self
                .segment_labels()
                .into_iter()
                .map(|label| SegmentStats {
                    ticks: self.rows.iter().filter(|r| r.segment == label).count(),
                    mean_optfl: self.segment_mean_optfl(&label).unwrap_or(0.0),
                    label,
                })
                .collect(),
        }
    }
}

/// Per-run statistics, written next to each log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogStats {
    pub meta: RunMeta,
    pub rows: usize,
    pub mean_optfl: f64,
    pub max_optfl: f64,
    pub mean_residual_speed: f64,
    pub mean_residual_omega: f64,
    pub singular_ticks: usize,
    pub saturated_ticks: usize,
    pub segments: Vec<SegmentStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegmentStats {
    pub label: String,
    pub ticks: usize,
    pub mean_optfl: f64,
}

/// Comparison of one run against a baseline run of the same script.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub mode: Mode,
    pub dof_set: DofSet,
    pub seed: u64,
    pub mean_optfl: f64,
    pub baseline_mean_optfl: f64,
    pub reduction_percent: Option<f64>,
    pub mean_residual_speed: f64,
    pub mean_residual_omega: f64,
    pub segments: Vec<SegmentSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegmentSummary {
    pub label: String,
    pub ticks: usize,
    pub mean_optfl: f64,
    pub baseline_mean_optfl: f64,
    pub reduction_percent: Option<f64>,
}

pub fn summarize(log: &TrajectoryLog, baseline: &TrajectoryLog) -> Result<Summary> {
    let fail = |msg: String| Err(GazeError::InvalidComparison(msg));
    if log.meta.script != baseline.meta.script {
        return fail(format!(
            "scripts differ (`{}` vs `{}`)",
            log.meta.script, baseline.meta.script
        ));
    }
    if log.meta.dt != baseline.meta.dt {
        return fail(format!(
            "time steps differ ({} vs {})",
            log.meta.dt, baseline.meta.dt
        ));
    }
    if log.rows.len() != baseline.rows.len() {
        return fail(format!(
            "row counts differ ({} vs {})",
            log.rows.len(),
            baseline.rows.len()
        ));
    }
    for (a, b) in log.rows.iter().zip(&baseline.rows) {
        if a.t != b.t || a.segment != b.segment {
            return fail(format!("timelines diverge at t = {}", a.t));
        }
    }
    let stats = log.stats();
    let base_stats = baseline.stats();
    let segments = stats
        .segments
        .iter()
        .zip(&base_stats.segments)
        .map(|(s, b)| SegmentSummary {
            label: s.label.clone(),
            ticks: s.ticks,
            mean_optfl: s.mean_optfl,
            baseline_mean_optfl: b.mean_optfl,
            reduction_percent: reduction_percent(s.mean_optfl, b.mean_optfl),
        })
        .collect();
    Ok(Summary {
        mode: log.meta.mode,
        dof_set: log.meta.dof_set,
        seed: log.meta.seed,
        mean_optfl: stats.mean_optfl,
        baseline_mean_optfl: base_stats.mean_optfl,
        reduction_percent: reduction_percent(stats.mean_optfl, base_stats.mean_optfl),
        mean_residual_speed: stats.mean_residual_speed,
        mean_residual_omega: stats.mean_residual_omega,
        segments,
    })
}
