//! Clip and keypoint CSV files.
//!
//! Clip layout:
//! ```text
//! #clip dt=0.02 label=walk nominal_speed=0.4
//! hip_l,knee_l,hip_r,knee_r,base_height,base_vx,base_vz
//! 0.31,0.52,...
//! ```
//! Keypoint tracks use `#keypoints dt=.. label=.. nominal_speed=.. thigh=.. shank=..`
//! followed by `x,z` columns for hip, knee and ankle of each leg.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use super::{ClipFrame, Gait, KeypointFrame, KeypointTrack, LegKeypoints, MotionClip, MotionError};
use crate::sim::RobotMorphology;

fn parse_err(line: usize, msg: impl Into<String>) -> MotionError {
    MotionError::Parse { line, msg: msg.into() }
}

fn parse_header(line: &str, tag: &str) -> Result<HashMap<String, String>, MotionError> {
    let rest = line
        .strip_prefix(tag)
        .ok_or_else(|| parse_err(1, format!("expected header starting with {tag:?}")))?;
    let mut out = HashMap::new();
    for tok in rest.split_whitespace() {
        let (k, v) = tok
            .split_once('=')
            .ok_or_else(|| parse_err(1, format!("malformed header field {tok:?}")))?;
        out.insert(k.to_string(), v.to_string());
    }
    Ok(out)
}

fn header_f64(h: &HashMap<String, String>, key: &str) -> Result<f64, MotionError> {
    let v = h.get(key).ok_or_else(|| parse_err(1, format!("header missing {key}")))?;
    v.parse::<f64>()
        .map_err(|_| parse_err(1, format!("header {key}={v} is not a number")))
}

fn header_gait(h: &HashMap<String, String>) -> Result<Gait, MotionError> {
    let v = h.get("label").ok_or_else(|| parse_err(1, "header missing label"))?;
    v.parse().map_err(|_| parse_err(1, format!("unknown label {v:?}")))
}

fn parse_row(line: &str, lineno: usize, width: usize) -> Result<Vec<f64>, MotionError> {
    let vals: Vec<f64> = line
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| parse_err(lineno, "non-numeric field"))?;
    if vals.len() != width {
        return Err(parse_err(lineno, format!("expected {width} fields, found {}", vals.len())));
    }
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(parse_err(lineno, "non-finite value"));
    }
    Ok(vals)
}

fn join(vals: impl IntoIterator<Item = f64>) -> String {
    vals.into_iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

pub fn save_clip(path: &Path, clip: &MotionClip, morph: &RobotMorphology) -> Result<(), MotionError> {
    if clip.num_dof() != morph.num_dof() {
        return Err(MotionError::InvalidInput(format!(
            "clip has {} joints, morphology {}",
            clip.num_dof(),
            morph.num_dof()
        )));
    }
    let mut out = String::new();
    out.push_str(&format!(
        "#clip dt={} label={} nominal_speed={}\n",
        clip.dt, clip.label, clip.nominal_speed
    ));
    let mut cols = morph.joint_names();
    cols.extend(["base_height", "base_vx", "base_vz"].map(String::from));
    out.push_str(&cols.join(","));
    out.push('\n');
    for f in &clip.frames {
        let row = f
            .dof_pos
            .iter()
            .copied()
            .chain([f.base_height, f.base_lin_vel[0], f.base_lin_vel[1]]);
        out.push_str(&join(row));
        out.push('\n');
    }
    let mut file = fs::File::create(path)?;
    file.write_all(out.as_bytes())?;
    Ok(())
}

/// Loads and validates a clip against the morphology's joint set and limits.
pub fn load_clip(path: &Path, morph: &RobotMorphology) -> Result<MotionClip, MotionError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = parse_header(lines.next().ok_or_else(|| parse_err(1, "empty file"))?, "#clip")?;
    let dt = header_f64(&header, "dt")?;
    if !(dt > 0.0) {
        return Err(parse_err(1, "dt must be positive"));
    }
    let label = header_gait(&header)?;
    let nominal_speed = header_f64(&header, "nominal_speed")?;
    let names = morph.joint_names();
    let mut expected = names.clone();
    expected.extend(["base_height", "base_vx", "base_vz"].map(String::from));
    let cols = lines.next().ok_or_else(|| parse_err(2, "missing column header"))?;
    let cols: Vec<&str> = cols.split(',').map(str::trim).collect();
    if cols != expected {
        return Err(parse_err(2, format!("columns {cols:?} do not match {expected:?}")));
    }
    let nd = names.len();
    let mut frames = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 3;
        if line.trim().is_empty() {
            continue;
        }
        let vals = parse_row(line, lineno, nd + 3)?;
        for (j, &q) in vals[..nd].iter().enumerate() {
            let (lo, hi) = morph.limit(j);
            if q < lo || q > hi {
                return Err(MotionError::JointLimit {
                    line: lineno,
                    joint: names[j].clone(),
                    value: q,
                    lo,
                    hi,
                });
            }
        }
        frames.push(ClipFrame {
            dof_pos: vals[..nd].to_vec(),
            base_height: vals[nd],
            base_lin_vel: [vals[nd + 1], vals[nd + 2]],
        });
    }
    if frames.len() < 2 {
        return Err(parse_err(text.lines().count().max(1), "clip needs at least two frames"));
    }
    Ok(MotionClip { dt, frames, label, nominal_speed })
}

const KEYPOINT_COLS: [&str; 12] = [
    "hip_l_x", "hip_l_z", "knee_l_x", "knee_l_z", "ankle_l_x", "ankle_l_z", "hip_r_x", "hip_r_z", "knee_r_x",
    "knee_r_z", "ankle_r_x", "ankle_r_z",
];

pub fn save_track(path: &Path, track: &KeypointTrack) -> Result<(), MotionError> {
    let mut out = format!(
        "#keypoints dt={} label={} nominal_speed={} thigh={} shank={}\n{}\n",
        track.dt,
        track.label,
        track.nominal_speed,
        track.source_thigh,
        track.source_shank,
        KEYPOINT_COLS.join(",")
    );
    for f in &track.frames {
        let row = f
            .legs
            .iter()
            .flat_map(|l| [l.hip, l.knee, l.ankle])
            .flat_map(|p| p.into_iter());
        out.push_str(&join(row));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn load_track(path: &Path) -> Result<KeypointTrack, MotionError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = parse_header(lines.next().ok_or_else(|| parse_err(1, "empty file"))?, "#keypoints")?;
    let dt = header_f64(&header, "dt")?;
    let label = header_gait(&header)?;
    let nominal_speed = header_f64(&header, "nominal_speed")?;
    let source_thigh = header_f64(&header, "thigh")?;
    let source_shank = header_f64(&header, "shank")?;
    if !(dt > 0.0 && source_thigh > 0.0 && source_shank > 0.0) {
        return Err(parse_err(1, "dt and segment lengths must be positive"));
    }
    let cols = lines.next().ok_or_else(|| parse_err(2, "missing column header"))?;
    if cols.split(',').map(str::trim).ne(KEYPOINT_COLS) {
        return Err(parse_err(2, "unexpected keypoint columns"));
    }
    let mut frames = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 3;
        if line.trim().is_empty() {
            continue;
        }
        let v = parse_row(line, lineno, 12)?;
        let leg = |o: usize| LegKeypoints {
            hip: [v[o], v[o + 1]],
            knee: [v[o + 2], v[o + 3]],
            ankle: [v[o + 4], v[o + 5]],
        };
        let legs = [leg(0), leg(6)];
        for l in &legs {
            let thigh = (l.knee[0] - l.hip[0]).hypot(l.knee[1] - l.hip[1]);
            let shank = (l.ankle[0] - l.knee[0]).hypot(l.ankle[1] - l.knee[1]);
            if (thigh - source_thigh).abs() > 1e-6 || (shank - source_shank).abs() > 1e-6 {
                return Err(parse_err(lineno, "keypoint chain violates segment lengths"));
            }
        }
        frames.push(KeypointFrame { legs });
    }
    if frames.len() < 2 {
        return Err(parse_err(text.lines().count().max(1), "track needs at least two frames"));
    }
    Ok(KeypointTrack {
        dt,
        frames,
        source_thigh,
        source_shank,
        label,
        nominal_speed,
    })
}
