//! Geo-binned crowd bandwidth store.
//!
//! Samples are reduced to 1-D route chainage and aggregated into fixed-width
//! bins. Each bin keeps a data-weighted throughput estimate
//! `E_x = sum(D_s * A_s) / sum(D_s)` over its samples, plus the same
//! estimate for each of the four time-of-day buckets.

mod ingest;
mod synth;

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use ingest::{ingest_csv, write_samples_csv, IngestReport, Polyline, RouteGeometry};
pub use synth::{synthesize, RouteProfile, SyntheticRoute};

/// Default route bin width in meters.
pub const DEFAULT_BIN_M: f64 = 12.0;

/// One geo-tagged throughput measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrowdSample {
    /// Position along the route in meters.
    pub chainage_m: f64,
    /// Seconds since the Unix epoch (UTC).
    pub timestamp_s: f64,
    pub speed_mps: f64,
    /// Total data received in the sample (D_s).
    pub bytes: u64,
    /// Average throughput of the sample in bits/second (A_s).
    pub throughput_bps: f64,
}

impl CrowdSample {
    pub fn bucket(&self) -> TimeBucket {
        TimeBucket::from_timestamp(self.timestamp_s)
    }
}

/// Six-hour time-of-day bucket (UTC hours).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TimeBucket {
    /// 03:00 to 09:00
    Morning,
    /// 09:00 to 15:00
    Midday,
    /// 15:00 to 21:00
    Evening,
    /// 21:00 to 03:00
    Night,
}

impl TimeBucket {
    pub const ALL: [TimeBucket; 4] = [
        TimeBucket::Morning,
        TimeBucket::Midday,
        TimeBucket::Evening,
        TimeBucket::Night,
    ];

    pub fn from_hour(hour: u32) -> Self {
        match hour % 24 {
            3..=8 => TimeBucket::Morning,
            9..=14 => TimeBucket::Midday,
            15..=20 => TimeBucket::Evening,
            _ => TimeBucket::Night,
        }
    }

    pub fn from_timestamp(ts: f64) -> Self {
        let secs_of_day = ts.rem_euclid(86_400.0);
        Self::from_hour((secs_of_day / 3600.0).floor() as u32)
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn code(self) -> &'static str {
        match self {
            TimeBucket::Morning => "0309",
            TimeBucket::Midday => "0915",
            TimeBucket::Evening => "1521",
            TimeBucket::Night => "2103",
        }
    }
}

impl fmt::Display for TimeBucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for TimeBucket {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TimeBucket::ALL
            .into_iter()
            .find(|b| b.code() == s)
            .ok_or_else(|| Error::Config(format!("unknown time bucket `{s}`")))
    }
}

/// Estimate and sample count for one set of samples.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BinStat {
    /// `None` when the samples carried no data (or there were none).
    pub e_x_bps: Option<f64>,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteBin {
    pub start_m: f64,
    pub width_m: f64,
    pub e_x_bps: Option<f64>,
    pub samples: usize,
    pub buckets: BucketStats,
}

impl RouteBin {
    pub fn end_m(&self) -> f64 {
        self.start_m + self.width_m
    }

    pub fn stat(&self, bucket: Option<TimeBucket>) -> BinStat {
        match bucket {
            None => BinStat {
                e_x_bps: self.e_x_bps,
                samples: self.samples,
            },
            Some(b) => self.buckets.get(b),
        }
    }
}

/// Per time-of-day sub-aggregates, keyed by bucket code in JSON.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BucketStats {
    #[serde(rename = "0309")]
    pub morning: BinStat,
    #[serde(rename = "0915")]
    pub midday: BinStat,
    #[serde(rename = "1521")]
    pub evening: BinStat,
    #[serde(rename = "2103")]
    pub night: BinStat,
}

impl BucketStats {
    pub fn get(&self, b: TimeBucket) -> BinStat {
        match b {
            TimeBucket::Morning => self.morning,
            TimeBucket::Midday => self.midday,
            TimeBucket::Evening => self.evening,
            TimeBucket::Night => self.night,
        }
    }

    fn get_mut(&mut self, b: TimeBucket) -> &mut BinStat {
        match b {
            TimeBucket::Morning => &mut self.morning,
            TimeBucket::Midday => &mut self.midday,
            TimeBucket::Evening => &mut self.evening,
            TimeBucket::Night => &mut self.night,
        }
    }
}

/// Data-weighted mean throughput of `samples`.
///
/// Weights are normalized by the largest `D_s` before summing so that
/// scaling every byte count by the same integer factor reproduces the same
/// floating-point result.
pub fn weighted_throughput<'a, I>(samples: I) -> Option<f64>
where
    I: IntoIterator<Item = &'a CrowdSample>,
    I::IntoIter: Clone,
{
    let iter = samples.into_iter();
    let max_bytes = iter.clone().map(|s| s.bytes).max()?;
    if max_bytes == 0 {
        return None;
    }
    let max_bytes = max_bytes as f64;
    let (num, den) = iter.fold((0.0, 0.0), |(num, den), s| {
        let w = s.bytes as f64 / max_bytes;
        (num + w * s.throughput_bps, den + w)
    });
    Some(num / den)
}

/// Binned, queryable crowd bandwidth map.
#[derive(Debug, Clone, PartialEq)]
pub struct CrowdMap {
    bins: Vec<RouteBin>,
    route_length_m: f64,
}

impl CrowdMap {
    /// Builds a map from explicit bins; they must be contiguous from 0.
    pub fn from_bins(bins: Vec<RouteBin>) -> Result<Self> {
        let first = bins
            .first()
            .ok_or_else(|| Error::Empty("crowd map has no bins".into()))?;
        if first.start_m != 0.0 {
            return Err(Error::Config("crowd map must start at chainage 0".into()));
        }
        for b in &bins {
            if !(b.width_m > 0.0) {
                return Err(Error::Config(format!("bin at {} m has width {}", b.start_m, b.width_m)));
            }
            if b.e_x_bps.is_some_and(|e| !(e >= 0.0)) {
                return Err(Error::Config(format!("bin at {} m has a negative estimate", b.start_m)));
            }
        }
        for pair in bins.windows(2) {
            let gap = (pair[1].start_m - pair[0].end_m()).abs();
            if gap > 1e-6 * pair[0].end_m().max(1.0) {
                return Err(Error::Config(format!(
                    "bins not contiguous at {} m",
                    pair[0].end_m()
                )));
            }
        }
        let route_length_m = bins.last().map(RouteBin::end_m).unwrap_or(0.0);
        Ok(Self {
            bins,
            route_length_m,
        })
    }

    /// Aggregates samples into `bin_m`-wide bins covering `[0, route_length_m]`.
    /// The last bin is narrower when the length is not a multiple of the width.
    /// Samples outside the route are ignored.
    pub fn aggregate_over(samples: &[CrowdSample], bin_m: f64, route_length_m: f64) -> Result<Self> {
        if !(bin_m > 0.0) || !bin_m.is_finite() {
            return Err(Error::Config(format!("bin width must be positive, got {bin_m}")));
        }
        if !(route_length_m > 0.0) || !route_length_m.is_finite() {
            return Err(Error::Config(format!(
                "route length must be positive, got {route_length_m}"
            )));
        }
        let n_bins = ((route_length_m / bin_m).ceil() as usize).max(1);

        let mut members: Vec<Vec<&CrowdSample>> = vec![Vec::new(); n_bins];
        for s in samples {
            if !(0.0..=route_length_m).contains(&s.chainage_m) {
                continue;
            }
            let idx = ((s.chainage_m / bin_m) as usize).min(n_bins - 1);
            members[idx].push(s);
        }

        let bins = members
            .iter()
            .enumerate()
            .map(|(i, group)| {
                let start_m = i as f64 * bin_m;
                let width_m = (route_length_m - start_m).min(bin_m);
                let mut buckets = BucketStats::default();
                for b in TimeBucket::ALL {
                    let subset = group.iter().copied().filter(|s| s.bucket() == b);
                    *buckets.get_mut(b) = BinStat {
                        e_x_bps: weighted_throughput(subset.clone()),
                        samples: subset.count(),
                    };
                }
                RouteBin {
                    start_m,
                    width_m,
                    e_x_bps: weighted_throughput(group.iter().copied()),
                    samples: group.len(),
                    buckets,
                }
            })
            .collect();

        Ok(Self {
            bins,
            route_length_m,
        })
    }

    /// Aggregates with the route length taken as the smallest multiple of
    /// `bin_m` that contains every sample.
    pub fn aggregate(samples: &[CrowdSample], bin_m: f64) -> Result<Self> {
        if !(bin_m > 0.0) || !bin_m.is_finite() {
            return Err(Error::Config(format!("bin width must be positive, got {bin_m}")));
        }
        let max_pos = samples
            .iter()
            .map(|s| s.chainage_m)
            .filter(|x| *x >= 0.0)
            .fold(0.0, f64::max);
        let route_length_m = ((max_pos / bin_m).floor() + 1.0) * bin_m;
        Self::aggregate_over(samples, bin_m, route_length_m)
    }

    pub fn bins(&self) -> &[RouteBin] {
        &self.bins
    }

    pub fn route_length_m(&self) -> f64 {
        self.route_length_m
    }

    /// Sample-count-weighted mean of the bin estimates intersecting
    /// `[g - radius, g + look_ahead + radius]`.
    pub fn predict(
        &self,
        g_m: f64,
        look_ahead_m: f64,
        radius_m: f64,
        bucket: Option<TimeBucket>,
    ) -> Option<f64> {
        let lo = g_m - radius_m;
        let hi = g_m + look_ahead_m.max(0.0) + radius_m;
        let first = self.bins.partition_point(|b| b.end_m() <= lo);
        let (num, den) = self.bins[first..]
            .iter()
            .take_while(|b| b.start_m < hi)
            .filter_map(|b| {
                let st = b.stat(bucket);
                st.e_x_bps.map(|e| (e, st.samples as f64))
            })
            .fold((0.0, 0.0), |(num, den), (e, n)| (num + e * n, den + n));
        (den > 0.0).then(|| num / den)
    }

    /// Sample-count-weighted mean over every bin with an estimate.
    pub fn route_mean(&self, bucket: Option<TimeBucket>) -> Option<f64> {
        let (num, den) = self
            .bins
            .iter()
            .filter_map(|b| {
                let st = b.stat(bucket);
                st.e_x_bps.map(|e| (e, st.samples as f64))
            })
            .fold((0.0, 0.0), |(num, den), (e, n)| (num + e * n, den + n));
        (den > 0.0).then(|| num / den)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.bins).expect("crowd map serializes")
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        Self::from_bins(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json_string()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(chainage_m: f64, bytes: u64, mbps: f64) -> CrowdSample {
        CrowdSample {
            chainage_m,
            timestamp_s: 1_417_392_000.0 + 4.0 * 3600.0,
            speed_mps: 20.0,
            bytes,
            throughput_bps: mbps * 1e6,
        }
    }

    fn bin(start_m: f64, e_x: Option<f64>, samples: usize) -> RouteBin {
        RouteBin {
            start_m,
            width_m: 12.0,
            e_x_bps: e_x,
            samples,
            buckets: BucketStats::default(),
        }
    }

    #[test]
    fn weighted_mean_of_two_samples() {
        let map = CrowdMap::aggregate(&[sample(3.0, 100, 2.0), sample(5.0, 300, 4.0)], 12.0).unwrap();
        // (100*2 + 300*4) / 400
        let e = map.bins()[0].e_x_bps.unwrap();
        assert!((e - 3.5e6).abs() <= 1e-12 * 3.5e6, "{e}");
        assert_eq!(map.bins()[0].samples, 2);
    }

    #[test]
    fn single_sample_is_its_own_estimate() {
        let map = CrowdMap::aggregate(&[sample(1.0, 7, 1.25)], 12.0).unwrap();
        assert_eq!(map.bins()[0].e_x_bps, Some(1.25e6));
    }

    #[test]
    fn zero_data_bin_has_no_estimate() {
        let map = CrowdMap::aggregate(&[sample(1.0, 0, 1.0), sample(2.0, 0, 3.0)], 12.0).unwrap();
        assert_eq!(map.bins()[0].e_x_bps, None);
        assert_eq!(map.bins()[0].samples, 2);
    }

    #[test]
    fn bucket_sub_aggregates() {
        let mut night = sample(1.0, 100, 1.0);
        night.timestamp_s = 1_417_392_000.0 + 22.0 * 3600.0;
        let day = sample(2.0, 100, 3.0);
        let map = CrowdMap::aggregate(&[night, day], 12.0).unwrap();
        let b = &map.bins()[0];
        assert_eq!(b.buckets.night.e_x_bps, Some(1e6));
        assert_eq!(b.buckets.morning.e_x_bps, Some(3e6));
        assert_eq!(b.buckets.midday, BinStat::default());
        assert_eq!(b.e_x_bps, Some(2e6));
        assert_eq!(
            map.predict(1.0, 0.0, 1.0, Some(TimeBucket::Night)),
            Some(1e6)
        );
    }

    #[test]
    fn time_buckets_partition_the_day() {
        let counts = (0..24).fold([0usize; 4], |mut acc, h| {
            acc[TimeBucket::from_hour(h).index()] += 1;
            acc
        });
        assert_eq!(counts, [6, 6, 6, 6]);
        assert_eq!(TimeBucket::from_hour(3), TimeBucket::Morning);
        assert_eq!(TimeBucket::from_hour(2), TimeBucket::Night);
        assert_eq!(TimeBucket::from_hour(21), TimeBucket::Night);
        assert_eq!("1521".parse::<TimeBucket>().unwrap(), TimeBucket::Evening);
        assert!("1200".parse::<TimeBucket>().is_err());
    }

    #[test]
    fn predict_single_bin() {
        let map = CrowdMap::from_bins(vec![bin(0.0, Some(1.5e6), 4)]).unwrap();
        assert_eq!(map.predict(6.0, 0.0, 2.0, None), Some(1.5e6));
    }

    #[test]
    fn predict_two_bin_window() {
        let map = CrowdMap::from_bins(vec![bin(0.0, Some(1e6), 10), bin(12.0, Some(3e6), 30)]).unwrap();
        // (1*10 + 3*30) / 40
        assert_eq!(map.predict(6.0, 6.0, 1.0, None), Some(2.5e6));
    }

    #[test]
    fn predict_without_coverage_is_none() {
        let map = CrowdMap::from_bins(vec![
            bin(0.0, Some(1e6), 10),
            bin(12.0, None, 0),
            bin(24.0, None, 0),
            bin(36.0, Some(1e6), 3),
        ])
        .unwrap();
        assert_eq!(map.predict(18.0, 2.0, 1.0, None), None);
        assert_eq!(map.predict(500.0, 0.0, 10.0, None), None);
    }

    #[test]
    fn last_bin_is_clipped_to_route_length() {
        let map = CrowdMap::aggregate_over(&[sample(29.0, 1, 1.0)], 12.0, 30.0).unwrap();
        assert_eq!(map.bins().len(), 3);
        assert_eq!(map.bins()[2].width_m, 6.0);
        assert_eq!(map.bins()[2].samples, 1);
    }

    #[test]
    fn snapshot_round_trip_and_schema() {
        let map = CrowdMap::aggregate(&[sample(3.0, 100, 2.0), sample(15.0, 300, 4.0)], 12.0).unwrap();
        let text = map.to_json_string();
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        let first = &value[0];
        for key in ["start_m", "width_m", "e_x_bps", "samples", "buckets"] {
            assert!(first.get(key).is_some(), "missing {key}");
        }
        assert!(first["buckets"].get("0309").is_some());
        assert_eq!(CrowdMap::from_json_str(&text).unwrap(), map);
    }

    #[test]
    fn non_contiguous_bins_rejected() {
        assert!(CrowdMap::from_bins(vec![bin(0.0, None, 0), bin(20.0, None, 0)]).is_err());
        assert!(CrowdMap::from_bins(vec![]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn samples_strategy(len: f64) -> impl Strategy<Value = Vec<CrowdSample>> {
            proptest::collection::vec(
                (0.0..len, 0u64..1_000_000, 0.0f64..10e6, 0.0f64..1e9),
                1..300,
            )
            .prop_map(|v| {
                v.into_iter()
                    .map(|(x, d, a, ts)| CrowdSample {
                        chainage_m: x,
                        timestamp_s: ts,
                        speed_mps: 10.0,
                        bytes: d,
                        throughput_bps: a,
                    })
                    .collect()
            })
        }

        proptest! {
            #[test]
            fn aggregate_matches_naive_weighted_mean(samples in samples_strategy(600.0)) {
                let map = CrowdMap::aggregate_over(&samples, 12.0, 600.0).unwrap();
                for (i, b) in map.bins().iter().enumerate() {
                    let (num, den, n) = samples.iter()
                        .filter(|s| ((s.chainage_m / 12.0) as usize).min(49) == i)
                        .fold((0.0, 0.0, 0usize), |(num, den, n), s| {
                            (num + s.bytes as f64 * s.throughput_bps, den + s.bytes as f64, n + 1)
                        });
                    prop_assert_eq!(b.samples, n);
                    match b.e_x_bps {
                        None => prop_assert!(den == 0.0),
                        Some(e) => {
                            let oracle = num / den;
                            prop_assert!((e - oracle).abs() <= 1e-12 * oracle.abs().max(1e-300));
                        }
                    }
                }
            }

            #[test]
            fn byte_scaling_leaves_estimates_unchanged(
                samples in samples_strategy(240.0),
                factor in 1u64..1000,
            ) {
                let scaled: Vec<_> = samples.iter()
                    .map(|s| CrowdSample { bytes: s.bytes * factor, ..*s })
                    .collect();
                let a = CrowdMap::aggregate_over(&samples, 12.0, 240.0).unwrap();
                let b = CrowdMap::aggregate_over(&scaled, 12.0, 240.0).unwrap();
                prop_assert_eq!(a, b);
            }

            #[test]
            fn bins_partition_route(len in 1.0f64..5000.0, width in 0.5f64..50.0) {
                let map = CrowdMap::aggregate_over(&[], width, len).unwrap();
                let bins = map.bins();
                prop_assert_eq!(bins[0].start_m, 0.0);
                for pair in bins.windows(2) {
                    prop_assert!((pair[1].start_m - pair[0].end_m()).abs() < 1e-9);
                    prop_assert!(pair[0].start_m < pair[1].start_m);
                }
                prop_assert!((bins.last().unwrap().end_m() - len).abs() < 1e-9);
            }

            #[test]
            fn saturated_window_is_route_mean(
                samples in samples_strategy(600.0),
                g in 0.0f64..600.0,
                radius in 1.0f64..300.0,
            ) {
                let map = CrowdMap::aggregate_over(&samples, 12.0, 600.0).unwrap();
                // window [g - r, g + la + r] must cover [0, 600]
                let radius = radius.max(g);
                let look_ahead = (600.0 - g - radius).max(0.0);
                let got = map.predict(g, look_ahead, radius, None);
                let want = map.route_mean(None);
                match (got, want) {
                    (Some(a), Some(b)) => prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-300)),
                    (a, b) => prop_assert_eq!(a, b),
                }
            }
        }
    }
}
