//! Recorded demonstration episodes and their on-disk formats.
//!
//! An episode holds two independently timestamped streams: poses at the
//! control rate and wrenches at the sensor rate. Poses are stored in their
//! 9-D encoding so that reading and writing round-trips bit-exactly.
//!
//! Sign convention: wrench samples record the force and torque the robot
//! applies to the environment, in the world frame, SI units.
//!
//! # Binary layout (version 1, little-endian)
//!
//! ```text
//! magic        8 bytes   "ACPEPIS\0"
//! version      u16       1
//! reserved     u16       0
//! task         u32 length + UTF-8 bytes
//! arm          u32 length + UTF-8 bytes
//! pose_rate    f64       Hz
//! wrench_rate  f64       Hz
//! n_pose       u64
//! n_wrench     u64
//! n_pose   x { t f64, pose9 9 x f64 }
//! n_wrench x { t f64, force 3 x f64, torque 3 x f64 }
//! ```
//!
//! # Text layout
//!
//! ```text
//! ACP-EPISODE 1
//! task <rest of line>
//! arm <rest of line>
//! pose_rate <Hz>
//! wrench_rate <Hz>
//! pose <t> <9 values>
//! wrench <t> <fx fy fz tx ty tz>
//! ```
//!
//! Blank lines and lines starting with `#` are ignored; `pose` and `wrench`
//! records may be interleaved but each stream must be time-ordered.

use std::fs;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::se3::{decode_pose9, Pose, Pose9};

pub const BINARY_MAGIC: &[u8; 8] = b"ACPEPIS\0";
pub const TEXT_MAGIC: &str = "ACP-EPISODE";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wrench {
    pub t: f64,
    pub force: Vector3<f64>,
    pub torque: Vector3<f64>,
}

impl Wrench {
    pub fn new(t: f64, force: Vector3<f64>, torque: Vector3<f64>) -> Self {
        Self { t, force, torque }
    }

    pub fn from_force(t: f64, force: Vector3<f64>) -> Self {
        Self {
            t,
            force,
            torque: Vector3::zeros(),
        }
    }

    /// Components in channel order `fx fy fz tx ty tz`.
    pub fn channels(&self) -> [f64; 6] {
        [
            self.force.x,
            self.force.y,
            self.force.z,
            self.torque.x,
            self.torque.y,
            self.torque.z,
        ]
    }

    pub fn from_channels(t: f64, c: [f64; 6]) -> Self {
        Self {
            t,
            force: Vector3::new(c[0], c[1], c[2]),
            torque: Vector3::new(c[3], c[4], c[5]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseSample {
    pub t: f64,
    pub pose: Pose9,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMeta {
    pub task: String,
    pub arm: String,
    pub pose_rate: f64,
    pub wrench_rate: f64,
}

impl Default for EpisodeMeta {
    fn default() -> Self {
        Self {
            task: "unnamed".into(),
            arm: "arm0".into(),
            pose_rate: 500.0,
            wrench_rate: 7000.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    meta: EpisodeMeta,
    poses: Vec<PoseSample>,
    wrenches: Vec<Wrench>,
}

impl Episode {
    pub fn new(meta: EpisodeMeta, poses: Vec<PoseSample>, wrenches: Vec<Wrench>) -> Result<Self> {
        if meta.task.contains('\n') || meta.arm.contains('\n') {
            return Err(Error::InvalidEpisode("task and arm names must be single-line".into()));
        }
        if poses.is_empty() || wrenches.is_empty() {
            return Err(Error::InvalidEpisode("both tracks need at least one sample".into()));
        }
        check_increasing("pose", poses.iter().map(|p| p.t))?;
        check_increasing("wrench", wrenches.iter().map(|w| w.t))?;
        if let Some(i) = poses.iter().position(|p| !p.pose.0.iter().all(|v| v.is_finite())) {
            return Err(Error::InvalidEpisode(format!("pose sample {i} is not finite")));
        }
        if let Some(i) = wrenches
            .iter()
            .position(|w| !w.channels().iter().all(|v| v.is_finite()))
        {
            return Err(Error::InvalidEpisode(format!("wrench sample {i} is not finite")));
        }
        Ok(Self { meta, poses, wrenches })
    }

    pub fn meta(&self) -> &EpisodeMeta {
        &self.meta
    }

    pub fn poses(&self) -> &[PoseSample] {
        &self.poses
    }

    pub fn wrenches(&self) -> &[Wrench] {
        &self.wrenches
    }

    /// Common time interval of both tracks.
    pub fn overlap(&self) -> Result<(f64, f64)> {
        let start = self.poses[0].t.max(self.wrenches[0].t);
        let end = self.poses[self.poses.len() - 1]
            .t
            .min(self.wrenches[self.wrenches.len() - 1].t);
        if end < start {
            return Err(Error::EmptyOverlap);
        }
        Ok((start, end))
    }

    /// Reference pose at time `t`, clamped to the track ends; linear in
    /// position and spherical-linear in rotation.
    pub fn pose_at(&self, t: f64) -> Result<Pose> {
        let poses = &self.poses;
        let idx = poses.partition_point(|p| p.t <= t);
        if idx == 0 {
            return decode_pose9(&poses[0].pose);
        }
        if idx == poses.len() {
            return decode_pose9(&poses[idx - 1].pose);
        }
        let (a, b) = (&poses[idx - 1], &poses[idx]);
        let s = (t - a.t) / (b.t - a.t);
        let pa = decode_pose9(&a.pose)?;
        let pb = decode_pose9(&b.pose)?;
        Ok(pa.interpolate(&pb, s))
    }

    pub fn to_binary(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + self.poses.len() * 80 + self.wrenches.len() * 56);
        out.extend_from_slice(BINARY_MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&0u16.to_le_bytes());
        for s in [&self.meta.task, &self.meta.arm] {
            out.extend_from_slice(&(s.len() as u32).to_le_bytes());
            out.extend_from_slice(s.as_bytes());
        }
        out.extend_from_slice(&self.meta.pose_rate.to_le_bytes());
        out.extend_from_slice(&self.meta.wrench_rate.to_le_bytes());
        out.extend_from_slice(&(self.poses.len() as u64).to_le_bytes());
        out.extend_from_slice(&(self.wrenches.len() as u64).to_le_bytes());
        for p in &self.poses {
            out.extend_from_slice(&p.t.to_le_bytes());
            for v in p.pose.0 {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        for w in &self.wrenches {
            out.extend_from_slice(&w.t.to_le_bytes());
            for v in w.channels() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_binary(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader { bytes, offset: 0 };
        let magic = r.take(8, "magic")?;
        if magic != BINARY_MAGIC {
            return Err(Error::format("byte 0", "missing episode magic bytes"));
        }
        let version = u16::from_le_bytes(r.take(2, "version")?.try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::format("byte 8", format!("unsupported version {version}")));
        }
        r.take(2, "reserved")?;
        let task = r.string("task")?;
        let arm = r.string("arm")?;
        let pose_rate = r.f64("pose_rate")?;
        let wrench_rate = r.f64("wrench_rate")?;
        let n_pose = r.u64("pose count")? as usize;
        let n_wrench = r.u64("wrench count")? as usize;
        let needed = n_pose
            .checked_mul(80)
            .and_then(|a| n_wrench.checked_mul(56).and_then(|b| a.checked_add(b)));
        if needed.is_none_or(|n| n > bytes.len()) {
            // Still walk the records below so the error names the first missing one.
            log::debug!("episode declares more records than the file holds");
        }
        let mut poses = Vec::with_capacity(n_pose.min(bytes.len() / 80));
        for i in 0..n_pose {
            let what = format!("pose record {i}");
            let t = r.f64(&what)?;
            let mut v = [0.0; 9];
            for x in v.iter_mut() {
                *x = r.f64(&what)?;
            }
            poses.push(PoseSample { t, pose: Pose9(v) });
        }
        let mut wrenches = Vec::with_capacity(n_wrench.min(bytes.len() / 56));
        for i in 0..n_wrench {
            let what = format!("wrench record {i}");
            let t = r.f64(&what)?;
            let mut c = [0.0; 6];
            for x in c.iter_mut() {
                *x = r.f64(&what)?;
            }
            wrenches.push(Wrench::from_channels(t, c));
        }
        if r.offset != bytes.len() {
            return Err(Error::format(
                format!("byte {}", r.offset),
                format!("{} trailing bytes after the last record", bytes.len() - r.offset),
            ));
        }
        let meta = EpisodeMeta {
            task,
            arm,
            pose_rate,
            wrench_rate,
        };
        Self::new(meta, poses, wrenches)
    }

    pub fn to_text(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        let _ = writeln!(s, "{TEXT_MAGIC} {FORMAT_VERSION}");
        let _ = writeln!(s, "task {}", self.meta.task);
        let _ = writeln!(s, "arm {}", self.meta.arm);
        let _ = writeln!(s, "pose_rate {:?}", self.meta.pose_rate);
        let _ = writeln!(s, "wrench_rate {:?}", self.meta.wrench_rate);
        for p in &self.poses {
            let _ = write!(s, "pose {:?}", p.t);
            for v in p.pose.0 {
                let _ = write!(s, " {v:?}");
            }
            s.push('\n');
        }
        for w in &self.wrenches {
            let _ = write!(s, "wrench {:?}", w.t);
            for v in w.channels() {
                let _ = write!(s, " {v:?}");
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let header = lines
            .by_ref()
            .find(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
        match header {
            Some((_, l)) if l.split_whitespace().collect::<Vec<_>>() == [TEXT_MAGIC, "1"] => {}
            Some((i, _)) => {
                return Err(Error::format(
                    format!("line {}", i + 1),
                    format!("expected header `{TEXT_MAGIC} {FORMAT_VERSION}`"),
                ))
            }
            None => return Err(Error::format("line 1", "empty episode file")),
        }
        let mut meta = EpisodeMeta::default();
        let mut poses = Vec::new();
        let mut wrenches = Vec::new();
        for (i, line) in lines {
            let loc = || format!("line {}", i + 1);
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, rest) = trimmed.split_once(char::is_whitespace).unwrap_or((trimmed, ""));
            let rest = rest.trim();
            match key {
                "task" => meta.task = rest.to_string(),
                "arm" => meta.arm = rest.to_string(),
                "pose_rate" => meta.pose_rate = parse_f64(rest, &loc())?,
                "wrench_rate" => meta.wrench_rate = parse_f64(rest, &loc())?,
                "pose" => {
                    let v = parse_fields::<10>(rest, &loc(), "pose record")?;
                    let mut p = [0.0; 9];
                    p.copy_from_slice(&v[1..]);
                    poses.push(PoseSample {
                        t: v[0],
                        pose: Pose9(p),
                    });
                }
                "wrench" => {
                    let v = parse_fields::<7>(rest, &loc(), "wrench record")?;
                    let mut c = [0.0; 6];
                    c.copy_from_slice(&v[1..]);
                    wrenches.push(Wrench::from_channels(v[0], c));
                }
                other => return Err(Error::format(loc(), format!("unknown record type `{other}`"))),
            }
        }
        Self::new(meta, poses, wrenches)
    }

    /// Reads either format, detected from the leading bytes.
    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.starts_with(&BINARY_MAGIC[..4]) {
            Self::from_binary(bytes)
        } else {
            let text = std::str::from_utf8(bytes)
                .map_err(|e| Error::format(format!("byte {}", e.valid_up_to()), "not valid UTF-8 text"))?;
            Self::from_text(text)
        }
    }

    /// Writes the binary form, or text when the extension is `.txt`.
    pub fn write(&self, path: &Path) -> Result<()> {
        let is_text = path.extension().is_some_and(|e| e == "txt");
        let data = if is_text {
            self.to_text().into_bytes()
        } else {
            self.to_binary()
        };
        fs::write(path, data).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
    }
}

fn check_increasing(name: &str, ts: impl Iterator<Item = f64>) -> Result<()> {
    let mut prev = f64::NEG_INFINITY;
    for (i, t) in ts.enumerate() {
        if !t.is_finite() || t <= prev {
            return Err(Error::InvalidEpisode(format!(
                "{name} timestamps must be finite and strictly increasing (sample {i}: {t})"
            )));
        }
        prev = t;
    }
    Ok(())
}

fn parse_f64(s: &str, loc: &str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| Error::format(loc, format!("cannot parse number `{s}`")))
}

fn parse_fields<const N: usize>(s: &str, loc: &str, what: &str) -> Result<[f64; N]> {
    let mut out = [0.0; N];
    let mut it = s.split_whitespace();
    for (k, slot) in out.iter_mut().enumerate() {
        let tok = it
            .next()
            .ok_or_else(|| Error::format(loc, format!("{what} has {k} fields, expected {N}")))?;
        *slot = parse_f64(tok, loc)?;
    }
    if it.next().is_some() {
        return Err(Error::format(loc, format!("{what} has more than {N} fields")));
    }
    Ok(out)
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl ByteReader<'_> {
    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        if self.bytes.len() - self.offset < n {
            return Err(Error::format(
                format!("byte {}", self.offset),
                format!("truncated file while reading {what}"),
            ));
        }
        let s = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(s)
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let len = u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()) as usize;
        let start = self.offset;
        let raw = self.take(len, what)?;
        String::from_utf8(raw.to_vec())
            .map_err(|_| Error::format(format!("byte {start}"), format!("{what} is not UTF-8")))
    }
}
