//! Force/torque stream processing: uniform resampling, causal windows and
//! magnitude spectrograms.
//!
//! Everything that is queried "at `t_now`" only looks at samples with
//! `t <= t_now`. Between the last such sample and `t_now` the value is held.

use std::sync::Arc;

use nalgebra::DMatrix;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::episode::Wrench;
use crate::error::{Error, Result};

/// Slack on interval ends, seconds.
const TIME_EPS: f64 = 1e-9;

fn check_track(track: &[Wrench]) -> Result<()> {
    if track.is_empty() {
        return Err(Error::InsufficientData("empty wrench track".into()));
    }
    Ok(())
}

/// Linear interpolation of all six channels at `t`, which must lie within the
/// track's span.
fn interpolate(track: &[Wrench], t: f64) -> [f64; 6] {
    let idx = track.partition_point(|w| w.t <= t);
    if idx == 0 {
        return track[0].channels();
    }
    if idx == track.len() {
        return track[idx - 1].channels();
    }
    let (a, b) = (&track[idx - 1], &track[idx]);
    let s = (t - a.t) / (b.t - a.t);
    let (ca, cb) = (a.channels(), b.channels());
    let mut out = [0.0; 6];
    for k in 0..6 {
        out[k] = ca[k] + s * (cb[k] - ca[k]);
    }
    out
}

/// Uniform resampling of `[start, end)` at `rate`: `round((end − start) · rate)`
/// samples at `start + i / rate`.
pub fn resample_interval(track: &[Wrench], start: f64, end: f64, rate: f64) -> Result<Vec<Wrench>> {
    check_track(track)?;
    if !(rate > 0.0) || !rate.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "target rate must be positive, got {rate}"
        )));
    }
    if !(end >= start) {
        return Err(Error::InvalidParameter(format!(
            "interval [{start}, {end}] is reversed"
        )));
    }
    let (t0, t1) = (track[0].t, track[track.len() - 1].t);
    if start < t0 - TIME_EPS || end > t1 + TIME_EPS {
        return Err(Error::InsufficientData(format!(
            "track spans [{t0}, {t1}] s but [{start}, {end}] s was requested"
        )));
    }
    let n = ((end - start) * rate).round() as usize;
    Ok((0..n)
        .map(|i| {
            let t = start + i as f64 / rate;
            Wrench::from_channels(t, interpolate(track, t))
        })
        .collect())
}

/// Resamples the whole span of `track` at `target_rate`.
pub fn resample_wrench(track: &[Wrench], target_rate: f64) -> Result<Vec<Wrench>> {
    check_track(track)?;
    resample_interval(track, track[0].t, track[track.len() - 1].t, target_rate)
}

/// Samples ending exactly at `t_now`, spaced `1 / rate`, oldest first. Only
/// samples at or before `t_now` are used.
fn causal_samples(track: &[Wrench], count: usize, rate: f64, t_now: f64) -> Result<Vec<[f64; 6]>> {
    check_track(track)?;
    if count == 0 || !(rate > 0.0) || !rate.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "need at least one sample at a positive rate, got {count} at {rate} Hz"
        )));
    }
    let past_len = track.partition_point(|w| w.t <= t_now + TIME_EPS);
    if past_len == 0 {
        return Err(Error::InsufficientData(format!(
            "no samples at or before t = {t_now} s"
        )));
    }
    let past = &track[..past_len];
    let first = t_now - (count - 1) as f64 / rate;
    if first < past[0].t - TIME_EPS {
        return Err(Error::InsufficientData(format!(
            "window starts at {first} s but the track starts at {} s",
            past[0].t
        )));
    }
    let last = past[past_len - 1].t;
    if t_now - last >= 1.0 / rate {
        return Err(Error::InsufficientData(format!(
            "latest sample at {last} s is more than one output period before t = {t_now} s"
        )));
    }
    Ok((0..count)
        .map(|i| {
            let t = t_now - (count - 1 - i) as f64 / rate;
            interpolate(past, t.min(last))
        })
        .collect())
}

/// `frames × 6` window of uniformly spaced samples ending at `t_now`.
pub fn causal_window(track: &[Wrench], frames: usize, rate: f64, t_now: f64) -> Result<DMatrix<f64>> {
    let rows = causal_samples(track, frames, rate, t_now)?;
    Ok(DMatrix::from_fn(frames, 6, |r, c| rows[r][c]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    /// Periodic Hann, `0.5 − 0.5 cos(2πn / N)`.
    #[default]
    Hann,
    Rectangular,
}

impl WindowKind {
    pub fn coefficients(&self, len: usize) -> Vec<f64> {
        match self {
            WindowKind::Hann => (0..len)
                .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / len as f64).cos())
                .collect(),
            WindowKind::Rectangular => vec![1.0; len],
        }
    }
}

/// STFT settings. The defaults give 30 frames of 17 bins from one second.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StftConfig {
    /// Length of the analysed span ending at `t_now`, seconds.
    pub duration: f64,
    /// Samples the span is resampled to.
    pub samples: usize,
    pub window_len: usize,
    pub hop: usize,
    pub window: WindowKind,
    /// Store `ln(1 + |X|)` instead of `|X|`.
    pub log_magnitude: bool,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            duration: 1.0,
            samples: 496,
            window_len: 32,
            hop: 16,
            window: WindowKind::Hann,
            log_magnitude: false,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0) || !self.duration.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "duration must be positive, got {}",
                self.duration
            )));
        }
        if self.window_len < 2 || self.hop == 0 || self.samples < self.window_len {
            return Err(Error::InvalidParameter(format!(
                "need 2 <= window_len <= samples and hop >= 1, got window_len={} hop={} samples={}",
                self.window_len, self.hop, self.samples
            )));
        }
        Ok(())
    }

    pub fn frames(&self) -> usize {
        (self.samples - self.window_len) / self.hop + 1
    }

    pub fn bins(&self) -> usize {
        self.window_len / 2 + 1
    }

    pub fn sample_rate(&self) -> f64 {
        self.samples as f64 / self.duration
    }

    pub fn bin_hz(&self) -> f64 {
        self.sample_rate() / self.window_len as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrogramTensor {
    pub channels: usize,
    pub frames: usize,
    pub bins: usize,
    /// Frequency spacing of bins, Hz.
    pub bin_hz: f64,
    /// Time between frame starts, seconds.
    pub frame_dt: f64,
    /// Time of the first resampled sample.
    pub t_start: f64,
    pub log_magnitude: bool,
    /// Channel-major, then frame, then bin.
    pub data: Vec<f64>,
}

impl SpectrogramTensor {
    pub fn shape(&self) -> [usize; 3] {
        [self.channels, self.frames, self.bins]
    }

    pub fn get(&self, channel: usize, frame: usize, bin: usize) -> f64 {
        self.data[(channel * self.frames + frame) * self.bins + bin]
    }

    pub fn frame(&self, channel: usize, frame: usize) -> &[f64] {
        let start = (channel * self.frames + frame) * self.bins;
        &self.data[start..start + self.bins]
    }
}

/// Complex STFT of one uniformly sampled channel: `frames` rows of `bins`
/// nonnegative-frequency coefficients.
pub fn stft_channel(samples: &[f64], config: &StftConfig) -> Result<Vec<Vec<Complex<f64>>>> {
    config.validate()?;
    if samples.len() < config.window_len {
        return Err(Error::InsufficientData(format!(
            "{} samples is shorter than one window of {}",
            samples.len(),
            config.window_len
        )));
    }
    let fft: Arc<dyn Fft<f64>> = FftPlanner::new().plan_fft_forward(config.window_len);
    let window = config.window.coefficients(config.window_len);
    let frames = (samples.len() - config.window_len) / config.hop + 1;
    let mut out = Vec::with_capacity(frames);
    let mut buf = vec![Complex::new(0.0, 0.0); config.window_len];
    for f in 0..frames {
        let seg = &samples[f * config.hop..f * config.hop + config.window_len];
        for (b, (x, w)) in buf.iter_mut().zip(seg.iter().zip(&window)) {
            *b = Complex::new(x * w, 0.0);
        }
        fft.process(&mut buf);
        out.push(buf[..config.bins()].to_vec());
    }
    Ok(out)
}

/// Magnitude spectrogram of the span of `config.duration` seconds ending at
/// `t_now`, for all six wrench channels.
pub fn spectrogram(track: &[Wrench], t_now: f64, config: &StftConfig) -> Result<SpectrogramTensor> {
    config.validate()?;
    let rate = config.sample_rate();
    let rows = causal_samples(track, config.samples, rate, t_now)?;
    let (frames, bins) = (config.frames(), config.bins());
    let mut data = Vec::with_capacity(6 * frames * bins);
    for c in 0..6 {
        let channel: Vec<f64> = rows.iter().map(|r| r[c]).collect();
        for frame in stft_channel(&channel, config)? {
            data.extend(frame.iter().map(|z| {
                let m = z.norm();
                if config.log_magnitude {
                    m.ln_1p()
                } else {
                    m
                }
            }));
        }
    }
    Ok(SpectrogramTensor {
        channels: 6,
        frames,
        bins,
        bin_hz: config.bin_hz(),
        frame_dt: config.hop as f64 / rate,
        t_start: t_now - (config.samples - 1) as f64 / rate,
        log_magnitude: config.log_magnitude,
        data,
    })
}
