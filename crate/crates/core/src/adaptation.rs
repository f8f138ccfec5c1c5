//! Adaptation logic: the rule that picks the next segment's representation.
//!
//! Decision rules are plain functions over a [`DecisionContext`]. The
//! [`AdaptationLogic`] implementations wrap them with whatever per-session
//! state they need (DEMA smoothers) and declare which bandwidth estimate the
//! player must supply.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::{BandwidthEstimate, Dema, DEFAULT_ALPHA, DEFAULT_BETA};
use crate::media::{Ladder, Representation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SessionPhase {
    /// Before playback has started.
    Startup,
    Steady,
    /// Playback stalled on an empty buffer.
    Rebuffering,
}

/// Smoothed buffer and bandwidth state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Smoothed {
    pub s_b: f64,
    pub s_b_prev: Option<f64>,
    pub s_bw: f64,
}

impl Smoothed {
    pub fn depleting(&self) -> bool {
        self.s_b_prev.is_some_and(|p| self.s_b < p)
    }

    pub fn filling(&self) -> bool {
        self.s_b_prev.is_some_and(|p| self.s_b > p)
    }
}

#[derive(Debug, Clone)]
pub struct DecisionContext<'a> {
    pub buffer_s: f64,
    pub buffer_max_s: f64,
    pub segment_index: usize,
    pub segment_duration_s: f64,
    pub ladder: &'a Ladder,
    pub last_rep: Option<Representation>,
    /// `None` when the requested estimator has nothing yet.
    pub estimate: Option<BandwidthEstimate>,
    pub smoothed: Option<Smoothed>,
    pub phase: SessionPhase,
}

impl DecisionContext<'_> {
    pub fn fullness(&self) -> f64 {
        (self.buffer_s / self.buffer_max_s).clamp(0.0, 1.0)
    }

    fn estimate_kbps(&self) -> Option<f64> {
        self.estimate.map(|e| e.kbps())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reason {
    SwitchUp,
    SwitchDown,
    Hold,
    Startup,
    FloorFallback,
}

impl fmt::Display for Reason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Reason::SwitchUp => "switch-up",
            Reason::SwitchDown => "switch-down",
            Reason::Hold => "hold",
            Reason::Startup => "startup",
            Reason::FloorFallback => "floor-fallback",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub rep: Representation,
    pub reason: Reason,
    /// Effective buffer fullness ratio used by GPAL.
    pub fullness: Option<f64>,
}

fn relative_reason(last: Option<&Representation>, chosen: &Representation) -> Reason {
    match last {
        None => Reason::Startup,
        Some(l) if chosen.id > l.id => Reason::SwitchUp,
        Some(l) if chosen.id < l.id => Reason::SwitchDown,
        Some(_) => Reason::Hold,
    }
}

/// Highest rung strictly below `budget_kbps`, else the lowest rung.
fn pick_below(ctx: &DecisionContext, budget_kbps: f64) -> Decision {
    let (rep, fallback) = ctx.ladder.select_below_or_lowest(budget_kbps);
    let reason = if fallback {
        Reason::FloorFallback
    } else {
        relative_reason(ctx.last_rep.as_ref(), rep)
    };
    Decision {
        rep: *rep,
        reason,
        fullness: None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpalParams {
    pub floor: f64,
    pub downgrade_threshold: f64,
    pub startup_fullness: f64,
    /// Disable to ablate the fullness floor.
    pub apply_floor: bool,
}

impl Default for GpalParams {
    fn default() -> Self {
        Self {
            floor: 0.1,
            downgrade_threshold: 0.2,
            startup_fullness: 0.5,
            apply_floor: true,
        }
    }
}

impl GpalParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.floor && self.floor <= self.downgrade_threshold && self.downgrade_threshold < 1.0) {
            return Err(Error::Config(format!(
                "gpal needs 0 < floor <= downgrade threshold < 1, got {} / {}",
                self.floor, self.downgrade_threshold
            )));
        }
        Ok(())
    }
}

/// Buffer-scaled crowd rule: budget = estimate x fullness ratio, one rung
/// lower when the ratio is at or below the downgrade threshold.
pub fn gpal_decide(ctx: &DecisionContext, p: &GpalParams) -> Decision {
    let fullness = if ctx.segment_index == 0 {
        p.startup_fullness
    } else if p.apply_floor {
        ctx.fullness().max(p.floor)
    } else {
        ctx.fullness()
    };
    let rho = ctx.estimate_kbps().unwrap_or(0.0) * fullness;
    let (mut rep, fallback) = ctx.ladder.select_below_or_lowest(rho);
    if fullness <= p.downgrade_threshold {
        rep = ctx.ladder.step_down(rep.id);
    }
    let reason = if fallback {
        Reason::FloorFallback
    } else {
        relative_reason(ctx.last_rep.as_ref(), rep)
    };
    Decision {
        rep: *rep,
        reason,
        fullness: Some(fullness),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoMalParams {
    pub critical_segments: f64,
    pub low_segments: f64,
    /// Defaults to `buffer_max / segment_duration - 2` when `None`.
    pub almost_full_segments: Option<f64>,
    pub safety_factor: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for GeoMalParams {
    fn default() -> Self {
        Self {
            critical_segments: 2.0,
            low_segments: 4.0,
            almost_full_segments: None,
            safety_factor: 0.5,
            alpha: DEFAULT_ALPHA,
            beta: DEFAULT_BETA,
        }
    }
}

impl GeoMalParams {
    fn almost_full(&self, buffer_max_s: f64, segment_duration_s: f64) -> f64 {
        self.almost_full_segments
            .unwrap_or(buffer_max_s / segment_duration_s - 2.0)
    }

    pub fn validate(&self, buffer_max_s: f64, segment_duration_s: f64) -> Result<()> {
        let full = self.almost_full(buffer_max_s, segment_duration_s);
        if !(self.critical_segments < self.low_segments && self.low_segments < full) {
            return Err(Error::Config(format!(
                "mal thresholds must satisfy critical < low < almost full, got {} / {} / {full}",
                self.critical_segments, self.low_segments
            )));
        }
        if !(self.safety_factor > 0.0) {
            return Err(Error::Config("mal safety factor must be positive".into()));
        }
        Ok(())
    }
}

/// Buffer-threshold rule over smoothed estimates. The rule body only sees
/// estimate values, so MAL and Geo-MAL differ purely in what is smoothed.
pub fn geo_mal_decide(ctx: &DecisionContext, p: &GeoMalParams) -> Decision {
    let bw_kbps = ctx
        .smoothed
        .map(|s| s.s_bw / 1000.0)
        .or_else(|| ctx.estimate_kbps())
        .unwrap_or(0.0);
    let current = match (ctx.phase, ctx.last_rep) {
        (SessionPhase::Steady, Some(rep)) => rep,
        _ => {
            let mut d = pick_below(ctx, bw_kbps * p.safety_factor);
            if d.reason != Reason::FloorFallback {
                d.reason = Reason::Startup;
            }
            return d;
        }
    };

    let seg = ctx.segment_duration_s;
    let critical = p.critical_segments * seg;
    let low = p.low_segments * seg;
    let almost_full = p.almost_full(ctx.buffer_max_s, seg) * seg;
    let b = ctx.buffer_s;
    let (depleting, filling) = ctx
        .smoothed
        .map_or((false, false), |s| (s.depleting(), s.filling()));

    let rep = if depleting && (b <= critical || (b <= low && bw_kbps < current.kbps)) {
        *ctx.ladder.step_down(current.id)
    } else if ctx.ladder.get(current.id + 1).is_some_and(|next| next.kbps < bw_kbps)
        && (b >= almost_full || (b > low && filling))
    {
        *ctx.ladder.step_up(current.id)
    } else {
        current
    };
    Decision {
        rep,
        reason: relative_reason(Some(&current), &rep),
        fullness: None,
    }
}

/// MAL baseline: the same rule body fed with last-segment throughput.
pub fn mal_decide(ctx: &DecisionContext, p: &GeoMalParams) -> Decision {
    geo_mal_decide(ctx, p)
}

/// Highest rung below the throughput estimate; lowest before any download.
pub fn maxbw_decide(ctx: &DecisionContext) -> Decision {
    match ctx.estimate_kbps() {
        None => Decision {
            rep: *ctx.ladder.lowest(),
            reason: Reason::Startup,
            fullness: None,
        },
        Some(kbps) => pick_below(ctx, kbps),
    }
}

/// MaxBW rule over the crowd estimate.
pub fn geo_maxbw_decide(ctx: &DecisionContext) -> Decision {
    maxbw_decide(ctx)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictParams {
    /// Budget scale at an empty buffer; rises linearly to 1 at a full one.
    pub min_scale: f64,
}

impl Default for PredictParams {
    fn default() -> Self {
        Self { min_scale: 0.5 }
    }
}

/// Highest rung below `prediction x (min_scale + (1 - min_scale) x fullness)`.
pub fn one_predict_decide(ctx: &DecisionContext, p: &PredictParams) -> Decision {
    let scale = p.min_scale + (1.0 - p.min_scale) * ctx.fullness();
    pick_below(ctx, ctx.estimate_kbps().unwrap_or(0.0) * scale)
}

/// Same rule as 1-predict; the context estimate is the mean of the next
/// `n` crowd windows (see [`crate::estimators::n_window_estimate`]).
pub fn n_predict_decide(ctx: &DecisionContext, p: &PredictParams) -> Decision {
    one_predict_decide(ctx, p)
}

/// Which bandwidth estimate the player must put in the context.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimateKind {
    /// Geo-predictive crowd estimate with last-segment fallback.
    Crowd,
    /// Mean of `n` consecutive crowd windows.
    CrowdWindows(usize),
    LastSegment,
    SessionAverage,
}

pub trait AdaptationLogic: Send {
    fn name(&self) -> &'static str;
    fn estimate_kind(&self) -> EstimateKind;
    fn decide(&mut self, ctx: &DecisionContext) -> Decision;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Gpal,
    GeoMal,
    Mal,
    MaxBw,
    GeoMaxBw,
    OnePredict,
    NPredict,
}

impl Algorithm {
    pub const ALL: [Algorithm; 7] = [
        Algorithm::Gpal,
        Algorithm::GeoMal,
        Algorithm::Mal,
        Algorithm::MaxBw,
        Algorithm::GeoMaxBw,
        Algorithm::OnePredict,
        Algorithm::NPredict,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Gpal => "gpal",
            Algorithm::GeoMal => "geo-mal",
            Algorithm::Mal => "mal",
            Algorithm::MaxBw => "maxbw",
            Algorithm::GeoMaxBw => "geo-maxbw",
            Algorithm::OnePredict => "1-predict",
            Algorithm::NPredict => "n-predict",
        }
    }

    /// Comma-separated names, or `all`.
    pub fn parse_list(s: &str) -> Result<Vec<Algorithm>> {
        if s.trim() == "all" {
            return Ok(Self::ALL.to_vec());
        }
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let alg: Algorithm = part.parse()?;
            if !out.contains(&alg) {
                out.push(alg);
            }
        }
        if out.is_empty() {
            return Err(Error::Config("no algorithms given".into()));
        }
        Ok(out)
    }

    pub fn build(self, params: &AlgorithmParams) -> Result<Box<dyn AdaptationLogic>> {
        Ok(match self {
            Algorithm::Gpal => {
                params.gpal.validate()?;
                Box::new(Gpal { params: params.gpal })
            }
            Algorithm::GeoMal | Algorithm::Mal => Box::new(Mal {
                params: params.mal,
                dema: Dema::new(params.mal.alpha, params.mal.beta)?,
                crowd: self == Algorithm::GeoMal,
            }),
            Algorithm::MaxBw | Algorithm::GeoMaxBw => Box::new(MaxBw {
                crowd: self == Algorithm::GeoMaxBw,
                history: params.maxbw_history.kind(),
            }),
            Algorithm::OnePredict => Box::new(Predict {
                params: params.predict,
                windows: 1,
            }),
            Algorithm::NPredict => {
                if params.n == 0 {
                    return Err(Error::Config("n-predict needs n >= 1".into()));
                }
                Box::new(Predict {
                    params: params.predict,
                    windows: params.n,
                })
            }
        })
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::UnknownAlgorithm(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlgorithmParams {
    pub gpal: GpalParams,
    pub mal: GeoMalParams,
    pub predict: PredictParams,
    /// Window count for n-predict.
    pub n: usize,
    pub maxbw_history: MaxBwHistory,
}

/// Throughput history MaxBW reacts to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MaxBwHistory {
    /// Previous segment's measured throughput.
    #[default]
    LastSegment,
    /// Total bits over total download time of the session so far.
    SessionAverage,
}

impl MaxBwHistory {
    fn kind(self) -> EstimateKind {
        match self {
            MaxBwHistory::LastSegment => EstimateKind::LastSegment,
            MaxBwHistory::SessionAverage => EstimateKind::SessionAverage,
        }
    }
}

impl Default for AlgorithmParams {
    fn default() -> Self {
        Self {
            gpal: GpalParams::default(),
            mal: GeoMalParams::default(),
            predict: PredictParams::default(),
            n: 5,
            maxbw_history: MaxBwHistory::default(),
        }
    }
}

struct Gpal {
    params: GpalParams,
}

impl AdaptationLogic for Gpal {
    fn name(&self) -> &'static str {
        Algorithm::Gpal.name()
    }

    fn estimate_kind(&self) -> EstimateKind {
        EstimateKind::Crowd
    }

    fn decide(&mut self, ctx: &DecisionContext) -> Decision {
        gpal_decide(ctx, &self.params)
    }
}

struct Mal {
    params: GeoMalParams,
    dema: Dema,
    crowd: bool,
}

impl AdaptationLogic for Mal {
    fn name(&self) -> &'static str {
        if self.crowd {
            Algorithm::GeoMal.name()
        } else {
            Algorithm::Mal.name()
        }
    }

    fn estimate_kind(&self) -> EstimateKind {
        if self.crowd {
            EstimateKind::Crowd
        } else {
            EstimateKind::LastSegment
        }
    }

    fn decide(&mut self, ctx: &DecisionContext) -> Decision {
        let s_b = self.dema.update_buffer(ctx.buffer_s);
        let s_bw = match ctx.estimate {
            Some(e) => self.dema.update_bw(e.bps),
            None => self.dema.smoothed_bw().unwrap_or(0.0),
        };
        let smoothed = Smoothed {
            s_b,
            s_b_prev: self.dema.previous_smoothed_buffer(),
            s_bw,
        };
        let ctx = DecisionContext {
            smoothed: Some(smoothed),
            ..ctx.clone()
        };
        geo_mal_decide(&ctx, &self.params)
    }
}

struct MaxBw {
    crowd: bool,
    history: EstimateKind,
}

impl AdaptationLogic for MaxBw {
    fn name(&self) -> &'static str {
        if self.crowd {
            Algorithm::GeoMaxBw.name()
        } else {
            Algorithm::MaxBw.name()
        }
    }

    fn estimate_kind(&self) -> EstimateKind {
        if self.crowd {
            EstimateKind::Crowd
        } else {
            self.history
        }
    }

    fn decide(&mut self, ctx: &DecisionContext) -> Decision {
        maxbw_decide(ctx)
    }
}

struct Predict {
    params: PredictParams,
    windows: usize,
}

impl AdaptationLogic for Predict {
    fn name(&self) -> &'static str {
        if self.windows == 1 {
            Algorithm::OnePredict.name()
        } else {
            Algorithm::NPredict.name()
        }
    }

    fn estimate_kind(&self) -> EstimateKind {
        if self.windows == 1 {
            EstimateKind::Crowd
        } else {
            EstimateKind::CrowdWindows(self.windows)
        }
    }

    fn decide(&mut self, ctx: &DecisionContext) -> Decision {
        one_predict_decide(ctx, &self.params)
    }
}
