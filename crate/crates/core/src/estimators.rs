//! Bandwidth and buffer estimators.
//!
//! [`Dema`] keeps two independent exponential smoothers: one over the
//! playout buffer level (weight `alpha`) and one over the bandwidth estimate
//! (weight `beta`). Each is seeded with its first input. The geo-predictive
//! estimate queries the crowd map over the stretch the vehicle will cover
//! while downloading one top-quality segment.

use std::fmt;

use serde::Serialize;

use crate::crowd::{CrowdMap, TimeBucket};
use crate::error::{Error, Result};

pub const DEFAULT_ALPHA: f64 = 0.2;
pub const DEFAULT_BETA: f64 = 0.08;
pub const DEFAULT_MAX_LOOK_AHEAD_M: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dema {
    alpha: f64,
    beta: f64,
    s_b: Option<f64>,
    s_b_prev: Option<f64>,
    s_bw: Option<f64>,
}

impl Default for Dema {
    fn default() -> Self {
        Self::new(DEFAULT_ALPHA, DEFAULT_BETA).expect("default weights are valid")
    }
}

impl Dema {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        for (name, w) in [("alpha", alpha), ("beta", beta)] {
            if !(w > 0.0 && w <= 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1], got {w}")));
            }
        }
        Ok(Self {
            alpha,
            beta,
            s_b: None,
            s_b_prev: None,
            s_bw: None,
        })
    }

    pub fn update_buffer(&mut self, buffer_s: f64) -> f64 {
        let next = match self.s_b {
            None => buffer_s,
            Some(prev) => self.alpha * buffer_s + (1.0 - self.alpha) * prev,
        };
        self.s_b_prev = self.s_b;
        self.s_b = Some(next);
        next
    }

    pub fn update_bw(&mut self, bw_bps: f64) -> f64 {
        let next = match self.s_bw {
            None => bw_bps,
            Some(prev) => self.beta * bw_bps + (1.0 - self.beta) * prev,
        };
        self.s_bw = Some(next);
        next
    }

    pub fn smoothed_buffer(&self) -> Option<f64> {
        self.s_b
    }

    /// Smoothed buffer before the most recent update.
    pub fn previous_smoothed_buffer(&self) -> Option<f64> {
        self.s_b_prev
    }

    pub fn smoothed_bw(&self) -> Option<f64> {
        self.s_bw
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimateSource {
    Crowd,
    LastSegment,
    SessionAverage,
    Smoothed,
}

impl fmt::Display for EstimateSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EstimateSource::Crowd => "crowd",
            EstimateSource::LastSegment => "last-segment",
            EstimateSource::SessionAverage => "session-average",
            EstimateSource::Smoothed => "smoothed",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BandwidthEstimate {
    pub bps: f64,
    pub source: EstimateSource,
}

impl BandwidthEstimate {
    pub fn new(bps: f64, source: EstimateSource) -> Self {
        Self {
            bps: bps.max(0.0),
            source,
        }
    }

    pub fn kbps(&self) -> f64 {
        self.bps / 1000.0
    }
}

/// Inputs to one crowd query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoQuery {
    /// Current chainage in meters.
    pub position_m: f64,
    pub speed_mps: f64,
    /// Average size of a top-rung segment, in bits.
    pub top_segment_bits: f64,
    /// Throughput of the last downloaded segment; `None` before the first
    /// download completes.
    pub last_throughput_bps: Option<f64>,
    pub radius_m: f64,
    pub max_look_ahead_m: f64,
}

/// Distance covered while downloading one top-rung segment at the last
/// measured throughput, capped at `max_look_ahead_m`.
pub fn look_ahead_distance(q: &GeoQuery) -> Result<f64> {
    let f = q
        .last_throughput_bps
        .ok_or_else(|| Error::Estimation("no throughput measured yet".into()))?;
    if !(f > 0.0) {
        return Err(Error::Estimation(format!(
            "throughput must be positive, got {f}"
        )));
    }
    let seg = q.speed_mps.max(0.0) * q.top_segment_bits / f;
    Ok(seg.clamp(0.0, q.max_look_ahead_m))
}

/// Crowd prediction for the window ahead, falling back to the last segment
/// throughput when the map has no coverage. Before any download the
/// look-ahead is zero and the fallback is 0 b/s.
pub fn geo_estimate(q: &GeoQuery, map: &CrowdMap, bucket: Option<TimeBucket>) -> BandwidthEstimate {
    let seg = look_ahead_distance(q).unwrap_or(0.0);
    match map.predict(q.position_m, seg, q.radius_m, bucket) {
        Some(bps) => BandwidthEstimate::new(bps, EstimateSource::Crowd),
        None => BandwidthEstimate::new(
            q.last_throughput_bps.unwrap_or(0.0),
            EstimateSource::LastSegment,
        ),
    }
}

/// Unweighted mean of `n` crowd windows, the k-th starting
/// `k * speed * segment_duration` meters ahead. Windows past the route end
/// or without coverage are skipped; with none left this is the
/// [`geo_estimate`] fallback.
pub fn n_window_estimate(
    q: &GeoQuery,
    map: &CrowdMap,
    bucket: Option<TimeBucket>,
    n: usize,
    segment_duration_s: f64,
) -> BandwidthEstimate {
    let seg = look_ahead_distance(q).unwrap_or(0.0);
    let step = q.speed_mps.max(0.0) * segment_duration_s;
    let preds: Vec<f64> = (0..n.max(1))
        .map(|k| q.position_m + k as f64 * step)
        .take_while(|g| *g <= map.route_length_m())
        .filter_map(|g| map.predict(g, seg, q.radius_m, bucket))
        .collect();
    if preds.is_empty() {
        return geo_estimate(q, map, bucket);
    }
    BandwidthEstimate::new(
        preds.iter().sum::<f64>() / preds.len() as f64,
        EstimateSource::Crowd,
    )
}

/// One completed transfer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transfer {
    pub bits: f64,
    pub seconds: f64,
}

/// Total bits over total seconds across the whole history.
pub fn session_average(history: &[Transfer]) -> Option<f64> {
    let (bits, secs) = history
        .iter()
        .fold((0.0, 0.0), |(b, s), t| (b + t.bits, s + t.seconds));
    (secs > 0.0).then(|| bits / secs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crowd::{BucketStats, RouteBin};

    fn query(speed: f64, f: Option<f64>) -> GeoQuery {
        GeoQuery {
            position_m: 6.0,
            speed_mps: speed,
            top_segment_bits: 2_335_204.1 * 2.0,
            last_throughput_bps: f,
            radius_m: 1.0,
            max_look_ahead_m: DEFAULT_MAX_LOOK_AHEAD_M,
        }
    }

    fn map(bins: &[(Option<f64>, usize)]) -> CrowdMap {
        CrowdMap::from_bins(
            bins.iter()
                .enumerate()
                .map(|(i, &(e, n))| RouteBin {
                    start_m: i as f64 * 12.0,
                    width_m: 12.0,
                    e_x_bps: e,
                    samples: n,
                    buckets: BucketStats::default(),
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn dema_buffer_examples() {
        let mut d = Dema::default();
        assert_eq!(d.smoothed_buffer(), None);
        assert_eq!(d.update_buffer(10.0), 10.0);
        assert_eq!(d.update_buffer(20.0), 0.2 * 20.0 + 0.8 * 10.0);
        assert!((d.smoothed_buffer().unwrap() - 12.0).abs() < 1e-12);
        assert_eq!(d.previous_smoothed_buffer(), Some(10.0));

        let mut c = Dema::default();
        for _ in 0..100 {
            assert_eq!(c.update_buffer(7.5), 7.5);
        }
    }

    #[test]
    fn dema_bw_examples() {
        let mut d = Dema::default();
        assert_eq!(d.update_bw(1.0e6), 1.0e6);
        let s = d.update_bw(2.0e6);
        assert!((s - 1.08e6).abs() < 1e-6);
    }

    #[test]
    fn dema_rejects_bad_weights() {
        assert!(Dema::new(0.0, 0.5).is_err());
        assert!(Dema::new(0.5, 1.5).is_err());
        assert!(Dema::new(1.0, 1.0).is_ok());
    }

    #[test]
    fn look_ahead_examples() {
        assert_eq!(look_ahead_distance(&query(0.0, Some(1e6))).unwrap(), 0.0);
        let seg = look_ahead_distance(&query(30.0, Some(2_335_204.1))).unwrap();
        assert!((seg - 60.0).abs() < 1e-9);
        assert_eq!(look_ahead_distance(&query(30.0, Some(10_000.0))).unwrap(), 1000.0);
        assert!(look_ahead_distance(&query(30.0, Some(0.0))).is_err());
        assert!(look_ahead_distance(&query(30.0, None)).is_err());
    }

    #[test]
    fn geo_estimate_examples() {
        let full = map(&[(Some(2e6), 5); 10]);
        let e = geo_estimate(&query(25.0, Some(1e6)), &full, None);
        assert_eq!(e, BandwidthEstimate::new(2e6, EstimateSource::Crowd));

        let empty = map(&[(None, 0); 3]);
        let e = geo_estimate(&query(25.0, Some(1.2e6)), &empty, None);
        assert_eq!(e, BandwidthEstimate::new(1.2e6, EstimateSource::LastSegment));

        let two = map(&[(Some(1e6), 10), (Some(3e6), 30)]);
        let q = GeoQuery {
            speed_mps: 0.0,
            radius_m: 7.0,
            ..query(0.0, Some(1e6))
        };
        assert_eq!(geo_estimate(&q, &two, None).bps, 2.5e6);
    }

    #[test]
    fn n_window_mean() {
        // 24 m per window step: speed 12 m/s x 2 s
        let m = map(&[
            (Some(1e6), 1),
            (Some(1e6), 1),
            (Some(2e6), 1),
            (Some(2e6), 1),
            (Some(3e6), 1),
            (Some(3e6), 1),
        ]);
        let q = GeoQuery {
            position_m: 6.0,
            speed_mps: 12.0,
            top_segment_bits: 1.0,
            last_throughput_bps: Some(1e12),
            radius_m: 1.0,
            max_look_ahead_m: 0.0,
        };
        let e = n_window_estimate(&q, &m, None, 3, 2.0);
        assert_eq!(e.bps, 2e6);
        // n = 1 collapses to the single window
        assert_eq!(n_window_estimate(&q, &m, None, 1, 2.0), geo_estimate(&q, &m, None));
        // windows past the end are dropped: positions 6, 30, 54, 78(out), ...
        let e = n_window_estimate(&q, &m, None, 10, 2.0);
        assert_eq!(e.bps, 2e6);
    }

    #[test]
    fn session_average_examples() {
        let one = [Transfer { bits: 1e6, seconds: 1.0 }];
        assert_eq!(session_average(&one), Some(1e6));
        let two = [
            Transfer { bits: 2e6, seconds: 1.0 },
            Transfer { bits: 2e6, seconds: 3.0 },
        ];
        assert_eq!(session_average(&two), Some(1e6));
        assert_eq!(session_average(&[]), None);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn dema_stays_within_input_range(xs in proptest::collection::vec(0.0f64..1e7, 1..200)) {
                let mut d = Dema::default();
                let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
                for &x in &xs {
                    lo = lo.min(x);
                    hi = hi.max(x);
                    let b = d.update_buffer(x);
                    let w = d.update_bw(x);
                    prop_assert!(lo <= b && b <= hi);
                    prop_assert!(lo <= w && w <= hi);
                }
            }

            #[test]
            fn unit_weights_pass_inputs_through(xs in proptest::collection::vec(0.0f64..1e7, 1..100)) {
                let mut d = Dema::new(1.0, 1.0).unwrap();
                for &x in &xs {
                    prop_assert_eq!(d.update_buffer(x), x);
                    prop_assert_eq!(d.update_bw(x), x);
                }
            }

            #[test]
            fn session_average_is_a_bounded_rate(
                transfers in proptest::collection::vec((1e3f64..1e7, 0.1f64..10.0), 2..20),
            ) {
                let h: Vec<Transfer> = transfers.iter().map(|&(b, s)| Transfer { bits: b, seconds: s }).collect();
                let avg = session_average(&h).unwrap();
                // equal download times: both definitions agree
                let same: Vec<Transfer> = h.iter().map(|t| Transfer { bits: t.bits, seconds: 2.0 }).collect();
                let same_mor = same.iter().map(|t| t.bits / t.seconds).sum::<f64>() / same.len() as f64;
                prop_assert!((session_average(&same).unwrap() - same_mor).abs() <= 1e-9 * same_mor);
                // totals ratio never exceeds the largest single rate nor falls below the smallest
                let rates: Vec<f64> = h.iter().map(|t| t.bits / t.seconds).collect();
                let lo = rates.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = rates.iter().copied().fold(0.0, f64::max);
                prop_assert!(avg >= lo * (1.0 - 1e-12) && avg <= hi * (1.0 + 1e-12));
            }

            #[test]
            fn geo_estimate_is_deterministic(pos in 0.0f64..120.0, speed in 0.0f64..40.0, f in 1e4f64..1e7) {
                let m = map(&[(Some(1e6), 3), (None, 0), (Some(4e6), 9), (Some(2e6), 1),
                              (Some(1e6), 3), (None, 0), (Some(4e6), 9), (Some(2e6), 1),
                              (Some(1e6), 3), (None, 0)]);
                let q = GeoQuery { position_m: pos, speed_mps: speed, last_throughput_bps: Some(f), ..query(0.0, None) };
                prop_assert_eq!(geo_estimate(&q, &m, None), geo_estimate(&q, &m, None));
            }
        }

        #[test]
        fn unequal_times_separate_the_definitions() {
            let h = [
                Transfer { bits: 2e6, seconds: 1.0 },
                Transfer { bits: 2e6, seconds: 3.0 },
            ];
            let mean_of_rates = (2e6 + 2e6 / 3.0) / 2.0;
            assert_ne!(session_average(&h).unwrap(), mean_of_rates);
        }
    }
}
