//! Session quality metrics.
//!
//! The eMOS model combines the mean and spread of the 1-based quality index
//! with a stall penalty built from stall frequency and mean stall duration:
//!
//! ```text
//! phi  = mix * max(ln(F) / freq_scale + 1, 0) + (1 - mix) * min(T, cap) / cap
//! emos = clamp(c_mean * mu / M - c_std * sigma / M + c_const - c_rebuf * phi)
//! ```
//!
//! with `M` the ladder size, `F` stalls per minute and `T` the mean stall
//! duration in seconds. `phi` is 0 without stalls.

use serde::Serialize;

use crate::sim::{BufferEvent, RebufferEvent, SegmentRecord};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QoeParams {
    pub c_mean: f64,
    pub c_std: f64,
    pub c_const: f64,
    pub c_rebuf: f64,
    pub rebuf_mix: f64,
    pub freq_scale: f64,
    pub dur_cap_s: f64,
    pub clamp: (f64, f64),
}

impl Default for QoeParams {
    fn default() -> Self {
        Self {
            c_mean: 5.67,
            c_std: 6.72,
            c_const: 0.17,
            c_rebuf: 4.95,
            rebuf_mix: 7.0 / 8.0,
            freq_scale: 6.0,
            dur_cap_s: 15.0,
            clamp: (0.0, 5.0),
        }
    }
}

/// Adjacent pairs with differing ids.
pub fn count_switches<I>(rep_ids: I) -> usize
where
    I: IntoIterator<Item = usize>,
{
    let mut it = rep_ids.into_iter();
    let Some(mut prev) = it.next() else {
        return 0;
    };
    it.fold(0, |n, id| {
        let changed = id != prev;
        prev = id;
        n + usize::from(changed)
    })
}

/// Stall penalty term; 0 when there are no stalls.
pub fn rebuffer_penalty(stalls_s: &[f64], session_s: f64, p: &QoeParams) -> f64 {
    if stalls_s.is_empty() {
        return 0.0;
    }
    let minutes = (session_s / 60.0).max(f64::MIN_POSITIVE);
    let freq = stalls_s.len() as f64 / minutes;
    let mean_dur = stalls_s.iter().fold(0.0, |a, b| a + b) / stalls_s.len() as f64;
    p.rebuf_mix * (freq.ln() / p.freq_scale + 1.0).max(0.0)
        + (1.0 - p.rebuf_mix) * mean_dur.min(p.dur_cap_s) / p.dur_cap_s
}

/// eMOS for a session. `quality` holds 1-based ladder indices per segment,
/// `session_s` is playback time including stalls.
pub fn emos(quality: &[usize], ladder_size: usize, stalls_s: &[f64], session_s: f64, p: &QoeParams) -> f64 {
    let m = ladder_size.max(1) as f64;
    let (mu, sigma) = mean_std(quality);
    let raw = p.c_mean * mu / m - p.c_std * sigma / m + p.c_const
        - p.c_rebuf * rebuffer_penalty(stalls_s, session_s, p);
    raw.clamp(p.clamp.0, p.clamp.1)
}

fn mean_std(quality: &[usize]) -> (f64, f64) {
    if quality.is_empty() {
        return (0.0, 0.0);
    }
    let n = quality.len() as f64;
    let mu = quality.iter().map(|&q| q as f64).sum::<f64>() / n;
    let var = quality.iter().map(|&q| (q as f64 - mu).powi(2)).sum::<f64>() / n;
    (mu, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionReport {
    #[serde(skip)]
    pub segments: Vec<SegmentRecord>,
    #[serde(skip)]
    pub rebuffer_events: Vec<RebufferEvent>,
    #[serde(skip)]
    pub events: Vec<BufferEvent>,
    pub ladder_size: usize,
    pub switches: usize,
    pub rebuffer_count: usize,
    pub rebuffer_total_s: f64,
    pub mean_quality_index: f64,
    pub std_quality_index: f64,
    pub mean_kbps: f64,
    /// Playback time including stalls.
    pub session_s: f64,
    /// Time from session start to first frame.
    pub startup_delay_s: f64,
    pub emos: f64,
}

impl SessionReport {
    pub fn new(
        segments: Vec<SegmentRecord>,
        rebuffer_events: Vec<RebufferEvent>,
        events: Vec<BufferEvent>,
        ladder_size: usize,
        content_s: f64,
        startup_delay_s: f64,
        p: &QoeParams,
    ) -> Self {
        let quality: Vec<usize> = segments.iter().map(|s| s.rep.id + 1).collect();
        let stalls: Vec<f64> = rebuffer_events.iter().map(|e| e.duration_s).collect();
        let rebuffer_total_s = stalls.iter().fold(0.0, |a, b| a + b);
        let session_s = content_s + rebuffer_total_s;
        let (mu, sigma) = mean_std(&quality);
        let mean_kbps = if segments.is_empty() {
            0.0
        } else {
            segments.iter().map(|s| s.rep.kbps).sum::<f64>() / segments.len() as f64
        };
        Self {
            switches: count_switches(segments.iter().map(|s| s.rep.id)),
            rebuffer_count: stalls.len(),
            rebuffer_total_s,
            mean_quality_index: mu,
            std_quality_index: sigma,
            mean_kbps,
            session_s,
            startup_delay_s,
            emos: emos(&quality, ladder_size, &stalls, session_s, p),
            ladder_size,
            segments,
            rebuffer_events,
            events,
        }
    }
}
