//! Demonstration labeling: per-step reference pose, virtual target pose and
//! low-direction stiffness, 19 numbers per arm.
//!
//! The whole wrench track is smoothed with a centered moving average, the
//! smoothed force picks the stiffness (low along the force, `k_high`
//! elsewhere), and the virtual target is placed so that a spring of that
//! stiffness anchored there pushes with the smoothed force when the robot sits
//! at the reference pose: `virtual = reference + f / k_low`.

use std::fmt::Write as _;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::compliance::{k_low_of_force, StiffnessProfile, StiffnessSchedule, DEFAULT_K_HIGH};
use crate::episode::{Episode, Wrench};
use crate::error::{Error, Result};
use crate::se3::{encode_pose9, Pose, Pose9};

/// Offsets shorter than this are treated as "no contact" when decoding.
pub const POSITION_EPS: f64 = 1e-9;

pub const LABEL_MAGIC: &str = "ACP-LABELS";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelConfig {
    pub schedule: StiffnessSchedule,
    pub k_high: f64,
    /// Label grid rate, Hz.
    pub rate: f64,
    /// Moving-average window, seconds.
    pub window: f64,
}

impl Default for LabelConfig {
    fn default() -> Self {
        Self {
            schedule: StiffnessSchedule::default(),
            k_high: DEFAULT_K_HIGH,
            rate: 10.0,
            window: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionLabel {
    pub t: f64,
    pub reference: Pose9,
    pub virtual_target: Pose9,
    pub k_low: f64,
}

impl ActionLabel {
    pub const LEN: usize = 19;

    pub fn to_array(&self) -> [f64; 19] {
        let mut out = [0.0; 19];
        out[..9].copy_from_slice(&self.reference.0);
        out[9..18].copy_from_slice(&self.virtual_target.0);
        out[18] = self.k_low;
        out
    }

    pub fn from_array(t: f64, a: &[f64; 19]) -> Self {
        let mut r = [0.0; 9];
        let mut v = [0.0; 9];
        r.copy_from_slice(&a[..9]);
        v.copy_from_slice(&a[9..18]);
        Self {
            t,
            reference: Pose9(r),
            virtual_target: Pose9(v),
            k_low: a[18],
        }
    }

    pub fn offset(&self) -> Vector3<f64> {
        self.virtual_target.position() - self.reference.position()
    }

    pub fn is_contact(&self) -> bool {
        self.offset().norm() >= POSITION_EPS
    }
}

const TIME_EPS: f64 = 1e-9;

/// Centered moving average over a `window`-second span; edges use whatever
/// samples fall inside the truncated window. Timestamps are preserved.
pub fn moving_average_wrench(track: &[Wrench], window: f64) -> Result<Vec<Wrench>> {
    if !(window > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "window must be positive, got {window}"
        )));
    }
    if track.is_empty() {
        return Err(Error::InsufficientData("empty wrench track".into()));
    }
    // Prefix sums of deviations from the first sample keep the sums small and
    // make constant tracks exact.
    let base = track[0].channels();
    let mut prefix = vec![[0.0f64; 6]; track.len() + 1];
    for (i, w) in track.iter().enumerate() {
        let c = w.channels();
        for k in 0..6 {
            prefix[i + 1][k] = prefix[i][k] + (c[k] - base[k]);
        }
    }
    // Boundary samples within `TIME_EPS` count as inside, so rounding in the
    // timestamps cannot make the window lopsided.
    let half = 0.5 * window + TIME_EPS;
    let mut lo = 0usize;
    let mut hi = 0usize;
    let mut out = Vec::with_capacity(track.len());
    for w in track {
        while track[lo].t < w.t - half {
            lo += 1;
        }
        while hi < track.len() && track[hi].t <= w.t + half {
            hi += 1;
        }
        let n = (hi - lo) as f64;
        let mut c = [0.0; 6];
        for k in 0..6 {
            c[k] = base[k] + (prefix[hi][k] - prefix[lo][k]) / n;
        }
        out.push(Wrench::from_channels(w.t, c));
    }
    Ok(out)
}

/// Pose that, tracked with low stiffness `k_low` along `f_ref`, makes the
/// robot push with `f_ref` while it sits at `reference`.
pub fn virtual_target_from_force(reference: &Pose, f_ref: &Vector3<f64>, k_low: f64) -> Result<Pose> {
    if !(k_low > 0.0) || !k_low.is_finite() {
        return Err(Error::DegenerateStiffness(k_low));
    }
    Ok(reference.with_position(reference.position() + f_ref / k_low))
}

/// Force direction and magnitude encoded by a label: `(virtual − reference) · k_low`.
pub fn force_from_action(label: &ActionLabel) -> Vector3<f64> {
    label.offset() * label.k_low
}

/// Rebuilds the stiffness matrix from a label: low along the direction from
/// the reference to the virtual target, `k_high` elsewhere.
pub fn stiffness_from_action(label: &ActionLabel, k_high: f64) -> StiffnessProfile {
    let offset = label.offset();
    if offset.norm() < POSITION_EPS {
        return StiffnessProfile::uniform(k_high);
    }
    StiffnessProfile::from_direction(&offset, label.k_low, k_high).unwrap_or_else(|_| StiffnessProfile::uniform(k_high))
}

fn interpolate_force(track: &[Wrench], t: f64) -> Vector3<f64> {
    let idx = track.partition_point(|w| w.t <= t);
    if idx == 0 {
        return track[0].force;
    }
    if idx == track.len() {
        return track[idx - 1].force;
    }
    let (a, b) = (&track[idx - 1], &track[idx]);
    let s = (t - a.t) / (b.t - a.t);
    a.force.lerp(&b.force, s)
}

/// Number of grid points covering `[start, end]` at `rate`.
pub fn label_count(start: f64, end: f64, rate: f64) -> usize {
    ((end - start) * rate + 1e-9).floor() as usize + 1
}

pub fn label_episode(episode: &Episode, config: &LabelConfig) -> Result<Vec<ActionLabel>> {
    config.schedule.validate()?;
    if !(config.rate > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "label rate must be positive, got {}",
            config.rate
        )));
    }
    if config.rate > episode.meta().pose_rate {
        return Err(Error::InvalidParameter(format!(
            "label rate {} Hz exceeds the control rate {} Hz",
            config.rate,
            episode.meta().pose_rate
        )));
    }
    let (start, end) = episode.overlap()?;
    let filtered = moving_average_wrench(episode.wrenches(), config.window)?;
    let count = label_count(start, end, config.rate);
    let mut labels = Vec::with_capacity(count);
    for i in 0..count {
        let t = (start + i as f64 / config.rate).min(end);
        let reference = episode.pose_at(t)?;
        let f = interpolate_force(&filtered, t);
        let mag = f.norm();
        let (k_low, target) = if mag >= config.schedule.f_min && mag > 0.0 {
            let k_low = k_low_of_force(&config.schedule, mag);
            (k_low, virtual_target_from_force(&reference, &f, k_low)?)
        } else {
            (config.k_high, reference)
        };
        labels.push(ActionLabel {
            t,
            reference: encode_pose9(&reference),
            virtual_target: encode_pose9(&target),
            k_low,
        });
    }
    Ok(labels)
}

/// Text label file: magic line, `#` header lines, then `t` plus 19 values per row.
pub fn write_labels(labels: &[ActionLabel], header: &[String]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{LABEL_MAGIC} 1");
    for h in header {
        let _ = writeln!(s, "# {h}");
    }
    let _ = writeln!(
        s,
        "# columns: t ref_pos[3] ref_rot_rows[6] virtual_pos[3] virtual_rot_rows[6] k_low"
    );
    for l in labels {
        let _ = write!(s, "{:?}", l.t);
        for v in l.to_array() {
            let _ = write!(s, " {v:?}");
        }
        s.push('\n');
    }
    s
}

pub fn read_labels(text: &str) -> Result<Vec<ActionLabel>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.split_whitespace().collect::<Vec<_>>() == [LABEL_MAGIC, "1"] => {}
        _ => return Err(Error::format("line 1", format!("expected header `{LABEL_MAGIC} 1`"))),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|tok| tok.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::format(format!("line {}", i + 1), "unparseable number in label row"))?;
        if vals.len() != 1 + ActionLabel::LEN {
            return Err(Error::format(
                format!("line {}", i + 1),
                format!("label row has {} values, expected 20", vals.len()),
            ));
        }
        let mut a = [0.0; 19];
        a.copy_from_slice(&vals[1..]);
        out.push(ActionLabel::from_array(vals[0], &a));
    }
    Ok(out)
}
