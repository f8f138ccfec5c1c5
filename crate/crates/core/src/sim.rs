//! Deterministic DASH client simulation.
//!
//! Segments are fetched one after the other. A download's duration comes
//! from integrating the ground-truth field along the vehicle's path in small
//! time steps (midpoint rule, exact final fractional step). Playback drains
//! the buffer at 1 s/s once started; an empty buffer opens a stall that
//! closes when the buffer refills to the startup threshold. Before a
//! download begins, the client waits until one more segment fits under the
//! buffer cap.
//!
//! Crowd estimates are prefetched: the estimate for segment `k + 1` is taken
//! at the start of the last integration step of segment `k`'s download,
//! using the position and speed at that instant.

use std::io::Write;

use serde::Serialize;

use crate::adaptation::{AdaptationLogic, DecisionContext, EstimateKind, Reason, SessionPhase};
use crate::crowd::{CrowdMap, TimeBucket};
use crate::error::{Error, Result};
use crate::estimators::{
    geo_estimate, n_window_estimate, session_average, BandwidthEstimate, EstimateSource, GeoQuery,
    Transfer, DEFAULT_MAX_LOOK_AHEAD_M,
};
use crate::field::NetworkField;
use crate::media::{Manifest, Representation};
use crate::qoe::{QoeParams, SessionReport};

pub const DEFAULT_SPEED_MPS: f64 = 25.0;

#[derive(Debug, Clone, PartialEq)]
pub enum SpeedProfile {
    Constant(f64),
    /// `(from_time_s, speed_mps)` pieces sorted by time; the first piece
    /// applies from t = 0 regardless of its start.
    Piecewise(Vec<(f64, f64)>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MobilityModel {
    pub start_chainage_m: f64,
    pub speed: SpeedProfile,
}

impl Default for MobilityModel {
    fn default() -> Self {
        Self::constant(DEFAULT_SPEED_MPS)
    }
}

impl MobilityModel {
    pub fn constant(speed_mps: f64) -> Self {
        Self {
            start_chainage_m: 0.0,
            speed: SpeedProfile::Constant(speed_mps),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match &self.speed {
            SpeedProfile::Constant(v) => *v >= 0.0 && v.is_finite(),
            SpeedProfile::Piecewise(pieces) => {
                !pieces.is_empty()
                    && pieces.iter().all(|(_, v)| *v >= 0.0 && v.is_finite())
                    && pieces.windows(2).all(|w| w[0].0 <= w[1].0)
            }
        };
        if !ok || !(self.start_chainage_m >= 0.0) {
            return Err(Error::Config("speeds must be non-negative and pieces sorted".into()));
        }
        Ok(())
    }

    pub fn speed_at(&self, t: f64) -> f64 {
        match &self.speed {
            SpeedProfile::Constant(v) => *v,
            SpeedProfile::Piecewise(pieces) => {
                let i = pieces.partition_point(|(from, _)| *from <= t);
                pieces[i.saturating_sub(1)].1
            }
        }
    }

    /// Exact chainage at time `t`.
    pub fn position_at(&self, t: f64) -> f64 {
        let travelled = match &self.speed {
            SpeedProfile::Constant(v) => v * t,
            SpeedProfile::Piecewise(pieces) => {
                let mut acc = 0.0;
                for (i, &(from, v)) in pieces.iter().enumerate() {
                    let start = if i == 0 { 0.0 } else { from };
                    if t <= start {
                        break;
                    }
                    let end = pieces.get(i + 1).map_or(t, |n| n.0.min(t));
                    acc += v * (end - start).max(0.0);
                }
                acc
            }
        };
        self.start_chainage_m + travelled
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub buffer_max_s: f64,
    pub radius_m: f64,
    /// Buffered seconds needed to start or resume playback; one segment when
    /// `None`.
    pub startup_threshold_s: Option<f64>,
    /// Integration step.
    pub step_s: f64,
    pub max_look_ahead_m: f64,
    pub bucket: Option<TimeBucket>,
    pub qoe: QoeParams,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            buffer_max_s: 30.0,
            radius_m: 250.0,
            startup_threshold_s: None,
            step_s: 0.01,
            max_look_ahead_m: DEFAULT_MAX_LOOK_AHEAD_M,
            bucket: None,
            qoe: QoeParams::default(),
        }
    }
}

impl SimConfig {
    fn startup_threshold(&self, segment_duration_s: f64) -> f64 {
        self.startup_threshold_s.unwrap_or(segment_duration_s)
    }

    pub fn validate(&self, manifest: &Manifest) -> Result<()> {
        let seg = manifest.segment_duration_s;
        if !(self.buffer_max_s >= seg) {
            return Err(Error::Config(format!(
                "buffer max {} s is smaller than one segment ({seg} s)",
                self.buffer_max_s
            )));
        }
        let th = self.startup_threshold(seg);
        if !(th > 0.0) || th > self.buffer_max_s {
            return Err(Error::Config(format!(
                "startup threshold {th} s must lie in (0, buffer max = {} s]",
                self.buffer_max_s
            )));
        }
        if th > self.buffer_max_s - seg + 1e-9 {
            return Err(Error::Config(format!(
                "startup threshold {th} s leaves no room to fetch a segment under the {} s cap",
                self.buffer_max_s
            )));
        }
        if !(self.step_s > 0.0) || !(self.radius_m > 0.0) || !(self.max_look_ahead_m >= 0.0) {
            return Err(Error::Config("step, radius and look-ahead cap must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SegmentRecord {
    pub index: usize,
    pub rep: Representation,
    pub download_start_s: f64,
    pub download_end_s: f64,
    pub bits: f64,
    pub throughput_bps: f64,
    pub buffer_after_s: f64,
    pub estimate: Option<BandwidthEstimate>,
    pub reason: Reason,
    /// GPAL's effective fullness ratio, when applicable.
    pub fullness: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RebufferEvent {
    pub start_s: f64,
    pub duration_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    DownloadStart,
    DownloadEnd,
    StallStart,
    PlaybackStart,
    SessionEnd,
}

/// Player state at an event boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BufferEvent {
    pub kind: EventKind,
    pub time_s: f64,
    pub buffer_s: f64,
    pub playback_s: f64,
    pub downloaded_s: f64,
}

/// Bits over elapsed download time, with the elapsed time floored at one
/// integration step.
pub fn measure_throughput(record: &SegmentRecord, step_s: f64) -> f64 {
    record.bits / (record.download_end_s - record.download_start_s).max(step_s)
}

struct Player<'a> {
    field: &'a dyn NetworkField,
    mobility: &'a MobilityModel,
    step_s: f64,
    now: f64,
    buffer: f64,
    playback: f64,
    downloaded: f64,
    playing: bool,
    started_at: Option<f64>,
    stall_start: Option<f64>,
    stalls: Vec<RebufferEvent>,
    events: Vec<BufferEvent>,
}

impl Player<'_> {
    fn mark(&mut self, kind: EventKind) {
        self.events.push(BufferEvent {
            kind,
            time_s: self.now,
            buffer_s: self.buffer,
            playback_s: self.playback,
            downloaded_s: self.downloaded,
        });
    }

    /// Advances the clock by `h`, draining the buffer while playing.
    fn elapse(&mut self, h: f64) {
        if self.playing {
            if self.buffer >= h {
                self.buffer -= h;
                self.playback += h;
            } else {
                let t_empty = self.now + self.buffer;
                self.playback += self.buffer;
                self.buffer = 0.0;
                self.playing = false;
                self.stall_start = Some(t_empty);
                let now = self.now;
                self.now = t_empty;
                self.mark(EventKind::StallStart);
                self.now = now;
            }
        }
        self.now += h;
    }

    fn phase(&self) -> SessionPhase {
        match (self.started_at, self.playing) {
            (None, _) => SessionPhase::Startup,
            (Some(_), false) => SessionPhase::Rebuffering,
            (Some(_), true) => SessionPhase::Steady,
        }
    }

    fn maybe_start(&mut self, threshold: f64, force: bool) {
        if self.playing || !(self.buffer >= threshold || force) {
            return;
        }
        self.playing = true;
        if self.started_at.is_none() {
            self.started_at = Some(self.now);
        }
        if let Some(start) = self.stall_start.take() {
            self.stalls.push(RebufferEvent {
                start_s: start,
                duration_s: self.now - start,
            });
        }
        self.mark(EventKind::PlaybackStart);
    }

    /// Downloads `bits`, calling `on_last_step` once at the start of the
    /// final integration step. Returns the download duration.
    fn download(&mut self, bits: f64, mut on_last_step: impl FnMut(&Self)) -> f64 {
        let start = self.now;
        let mut got = 0.0;
        loop {
            let h = self.step_s;
            let mid = self.now + 0.5 * h;
            let bw = self.field.bandwidth_bps(self.mobility.position_at(mid), mid);
            debug_assert!(bw > 0.0, "field must be positive");
            if got + bw * h >= bits {
                on_last_step(self);
                let tail = ((bits - got) / bw).clamp(0.0, h);
                self.elapse(tail);
                break;
            }
            got += bw * h;
            self.elapse(h);
        }
        self.now - start
    }
}

/// Simulates one session of `manifest.segment_count` segments.
pub fn run_session(
    manifest: &Manifest,
    logic: &mut dyn AdaptationLogic,
    field: &dyn NetworkField,
    map: &CrowdMap,
    mobility: &MobilityModel,
    config: &SimConfig,
) -> Result<SessionReport> {
    config.validate(manifest)?;
    mobility.validate()?;
    let seg = manifest.segment_duration_s;
    let threshold = config.startup_threshold(seg);
    let kind = logic.estimate_kind();

    let mut player = Player {
        field,
        mobility,
        step_s: config.step_s,
        now: 0.0,
        buffer: 0.0,
        playback: 0.0,
        downloaded: 0.0,
        playing: false,
        started_at: None,
        stall_start: None,
        stalls: Vec::new(),
        events: Vec::new(),
    };

    let crowd_estimate = |t: f64, last: Option<f64>| -> BandwidthEstimate {
        let q = GeoQuery {
            position_m: mobility.position_at(t),
            speed_mps: mobility.speed_at(t),
            top_segment_bits: manifest.top_segment_bits(),
            last_throughput_bps: last,
            radius_m: config.radius_m,
            max_look_ahead_m: config.max_look_ahead_m,
        };
        match kind {
            EstimateKind::CrowdWindows(n) => n_window_estimate(&q, map, config.bucket, n, seg),
            _ => geo_estimate(&q, map, config.bucket),
        }
    };
    let wants_crowd = matches!(kind, EstimateKind::Crowd | EstimateKind::CrowdWindows(_));

    let mut records: Vec<SegmentRecord> = Vec::with_capacity(manifest.segment_count);
    let mut history: Vec<Transfer> = Vec::with_capacity(manifest.segment_count);
    let mut prefetched = wants_crowd.then(|| crowd_estimate(0.0, None));

    for index in 0..manifest.segment_count {
        // wait until one more segment fits under the cap
        let room = config.buffer_max_s - seg;
        if player.playing && player.buffer > room {
            let wait = player.buffer - room;
            player.elapse(wait);
        }

        let last_tput = records.last().map(|r| r.throughput_bps);
        let estimate = match kind {
            EstimateKind::Crowd | EstimateKind::CrowdWindows(_) => prefetched,
            EstimateKind::LastSegment => {
                last_tput.map(|f| BandwidthEstimate::new(f, EstimateSource::LastSegment))
            }
            EstimateKind::SessionAverage => session_average(&history)
                .map(|a| BandwidthEstimate::new(a, EstimateSource::SessionAverage)),
        };
        let ctx = DecisionContext {
            buffer_s: player.buffer.clamp(0.0, config.buffer_max_s),
            buffer_max_s: config.buffer_max_s,
            segment_index: index,
            segment_duration_s: seg,
            ladder: &manifest.ladder,
            last_rep: records.last().map(|r| r.rep),
            estimate,
            smoothed: None,
            phase: player.phase(),
        };
        let decision = logic.decide(&ctx);
        let bits = decision.rep.segment_bits(seg);

        let start = player.now;
        player.mark(EventKind::DownloadStart);
        let mut next_estimate = None;
        let has_next = index + 1 < manifest.segment_count;
        let elapsed = player.download(bits, |p| {
            if wants_crowd && has_next {
                next_estimate = Some(crowd_estimate(p.now, last_tput));
            }
        });
        if wants_crowd {
            prefetched = next_estimate;
        }

        player.buffer += seg;
        player.downloaded += seg;
        player.mark(EventKind::DownloadEnd);
        player.maybe_start(threshold, !has_next);

        let mut record = SegmentRecord {
            index,
            rep: decision.rep,
            download_start_s: start,
            download_end_s: player.now,
            bits,
            throughput_bps: 0.0,
            buffer_after_s: player.buffer,
            estimate,
            reason: decision.reason,
            fullness: decision.fullness,
        };
        record.throughput_bps = measure_throughput(&record, config.step_s);
        history.push(Transfer {
            bits,
            seconds: elapsed.max(config.step_s),
        });
        records.push(record);
    }

    // play out the remaining buffer
    let rest = player.buffer;
    player.elapse(rest);
    player.mark(EventKind::SessionEnd);

    let content_s = seg * manifest.segment_count as f64;
    let startup_delay = player.started_at.unwrap_or(player.now);
    Ok(SessionReport::new(
        records,
        player.stalls,
        player.events,
        manifest.ladder.len(),
        content_s,
        startup_delay,
        &config.qoe,
    ))
}

/// Writes the per-segment log CSV.
pub fn write_segment_log<W: Write>(writer: W, segments: &[SegmentRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "index",
        "rep_id",
        "kbps",
        "dl_start_s",
        "dl_end_s",
        "throughput_bps",
        "buffer_after_s",
        "estimate_bps",
        "estimate_source",
        "reason",
    ])?;
    for s in segments {
        w.write_record([
            s.index.to_string(),
            s.rep.id.to_string(),
            s.rep.kbps.to_string(),
            format!("{:.6}", s.download_start_s),
            format!("{:.6}", s.download_end_s),
            format!("{:.3}", s.throughput_bps),
            format!("{:.6}", s.buffer_after_s),
            s.estimate.map_or(String::new(), |e| format!("{:.3}", e.bps)),
            s.estimate.map_or("none".to_string(), |e| e.source.to_string()),
            s.reason.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<segment log>", e))?;
    Ok(())
}
