//! Video bitrate ladder and segment geometry.
//!
//! A [`Manifest`] is a validated, bitrate-sorted [`Ladder`] plus the fixed
//! segment duration and count. Segment sizes are not stored; they follow from
//! `kbps * 1000 * segment_duration_s`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const BBB_JSON: &str = include_str!("../data/bbb.json");

/// One encoding of the video.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Representation {
    /// Ordinal position in the ladder, 0 = lowest bitrate.
    pub id: usize,
    /// Average bitrate in kilobits per second.
    pub kbps: f64,
    pub ssim: f64,
    pub psnr_db: f64,
}

impl Representation {
    pub fn bps(&self) -> f64 {
        self.kbps * 1000.0
    }

    /// Size in bits of one segment of `segment_duration_s` seconds.
    pub fn segment_bits(&self, segment_duration_s: f64) -> f64 {
        self.bps() * segment_duration_s
    }
}

/// Non-empty list of representations with strictly increasing bitrate and
/// ids equal to their positions.
/// Relative slack under which a rate equals a rung bitrate.
pub const RATE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Ladder {
    reps: Vec<Representation>,
}

impl Ladder {
    /// Sorts by bitrate, renumbers ids by position and validates.
    pub fn new(mut reps: Vec<Representation>) -> Result<Self> {
        if reps.is_empty() {
            return Err(Error::InvalidManifest("ladder is empty".into()));
        }
        for r in &reps {
            if !(r.kbps.is_finite() && r.kbps > 0.0) {
                return Err(Error::InvalidManifest(format!(
                    "rung {} has non-positive bitrate {}",
                    r.id, r.kbps
                )));
            }
            if !(r.ssim > 0.0 && r.ssim <= 1.0) {
                return Err(Error::InvalidManifest(format!(
                    "rung {} has ssim {} outside (0, 1]",
                    r.id, r.ssim
                )));
            }
        }
        reps.sort_by(|a, b| a.kbps.total_cmp(&b.kbps));
        for pair in reps.windows(2) {
            if pair[0].kbps == pair[1].kbps {
                return Err(Error::InvalidManifest(format!(
                    "duplicate bitrate {} kb/s",
                    pair[0].kbps
                )));
            }
        }
        for (i, r) in reps.iter_mut().enumerate() {
            r.id = i;
        }
        Ok(Self { reps })
    }

    pub fn len(&self) -> usize {
        self.reps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reps.is_empty()
    }

    pub fn lowest(&self) -> &Representation {
        &self.reps[0]
    }

    pub fn highest(&self) -> &Representation {
        &self.reps[self.reps.len() - 1]
    }

    pub fn get(&self, id: usize) -> Option<&Representation> {
        self.reps.get(id)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Representation> {
        self.reps.iter()
    }

    pub fn as_slice(&self) -> &[Representation] {
        &self.reps
    }

    /// Highest rung whose bitrate is strictly below `budget_kbps`. A rung
    /// within a relative [`RATE_TOLERANCE`] of the budget counts as equal, so
    /// rounding in measured rates cannot flip the strict comparison.
    pub fn highest_rung_below(&self, budget_kbps: f64) -> Option<&Representation> {
        let limit = budget_kbps * (1.0 - RATE_TOLERANCE);
        let n = self.reps.partition_point(|r| r.kbps < limit);
        n.checked_sub(1).map(|i| &self.reps[i])
    }

    /// Like [`highest_rung_below`](Self::highest_rung_below) but falls back to
    /// the lowest rung. The flag is `true` when the fallback was taken.
    pub fn select_below_or_lowest(&self, budget_kbps: f64) -> (&Representation, bool) {
        match self.highest_rung_below(budget_kbps) {
            Some(r) => (r, false),
            None => (self.lowest(), true),
        }
    }

    /// One rung down, saturating at the lowest.
    pub fn step_down(&self, id: usize) -> &Representation {
        &self.reps[id.saturating_sub(1).min(self.reps.len() - 1)]
    }

    /// One rung up, saturating at the highest.
    pub fn step_up(&self, id: usize) -> &Representation {
        &self.reps[(id + 1).min(self.reps.len() - 1)]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub ladder: Ladder,
    pub segment_duration_s: f64,
    pub segment_count: usize,
}

#[derive(Serialize, Deserialize)]
struct ManifestFile {
    segment_duration_s: f64,
    segment_count: usize,
    ladder: Vec<Representation>,
}

impl Manifest {
    pub fn new(ladder: Ladder, segment_duration_s: f64, segment_count: usize) -> Result<Self> {
        if !(segment_duration_s.is_finite() && segment_duration_s > 0.0) {
            return Err(Error::InvalidManifest(format!(
                "segment duration must be positive, got {segment_duration_s}"
            )));
        }
        Ok(Self {
            ladder,
            segment_duration_s,
            segment_count,
        })
    }

    /// The bundled Big Buck Bunny ladder (10 rungs, 2 s segments).
    pub fn bbb() -> Self {
        Self::from_json_str(BBB_JSON).expect("bundled manifest is valid")
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: ManifestFile = serde_json::from_str(text).map_err(|e| Error::ManifestParse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        Self::new(
            Ladder::new(file.ladder)?,
            file.segment_duration_s,
            file.segment_count,
        )
    }

    pub fn to_json_string(&self) -> String {
        let file = ManifestFile {
            segment_duration_s: self.segment_duration_s,
            segment_count: self.segment_count,
            ladder: self.ladder.reps.clone(),
        };
        serde_json::to_string_pretty(&file).expect("manifest serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json_string()).map_err(|e| Error::io(path, e))
    }

    /// Same manifest with the segment count set to cover `session_s` seconds.
    pub fn with_session_seconds(mut self, session_s: f64) -> Self {
        self.segment_count = (session_s / self.segment_duration_s).ceil().max(1.0) as usize;
        self
    }

    /// Average size in bits of a top-rung segment.
    pub fn top_segment_bits(&self) -> f64 {
        self.ladder.highest().segment_bits(self.segment_duration_s)
    }
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Manifest::from_json_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rung(id: usize, kbps: f64) -> Representation {
        Representation {
            id,
            kbps,
            ssim: 0.9,
            psnr_db: 40.0,
        }
    }

    fn scan_below(ladder: &Ladder, budget: f64) -> Option<f64> {
        ladder
            .iter()
            .filter(|r| budget - r.kbps > crate::media::RATE_TOLERANCE * budget)
            .map(|r| r.kbps)
            .fold(None, |acc: Option<f64>, k| Some(acc.map_or(k, |a| a.max(k))))
    }

    #[test]
    fn bundled_bbb_matches_table() {
        let m = Manifest::bbb();
        assert_eq!(m.ladder.len(), 10);
        assert_eq!(m.segment_duration_s, 2.0);
        assert_eq!(m.ladder.lowest().kbps, 51.05);
        assert_eq!(m.ladder.highest().kbps, 2335.2041);
        assert_eq!(m.ladder.get(7).unwrap().psnr_db, 43.0);
    }

    #[test]
    fn single_rung_ladder() {
        let m = Manifest::from_json_str(
            r#"{"segment_duration_s": 2.0, "segment_count": 5,
                "ladder": [{"id": 0, "kbps": 300.0, "ssim": 0.9, "psnr_db": 38.0}]}"#,
        )
        .unwrap();
        assert_eq!(m.ladder.len(), 1);
        assert_eq!(m.ladder.highest_rung_below(1e9).unwrap().kbps, 300.0);
    }

    #[test]
    fn out_of_order_ladder_is_sorted() {
        let input = [721.56, 51.05, 2335.2041, 193.31, 964.16];
        let ladder = Ladder::new(
            input
                .iter()
                .enumerate()
                .map(|(i, &k)| rung(i, k))
                .collect(),
        )
        .unwrap();
        let mut oracle = input.to_vec();
        oracle.sort_by(f64::total_cmp);
        let got: Vec<f64> = ladder.iter().map(|r| r.kbps).collect();
        assert_eq!(got, oracle);
        assert!(ladder.iter().enumerate().all(|(i, r)| r.id == i));
    }

    #[test]
    fn duplicate_bitrates_rejected() {
        let err = Ladder::new(vec![rung(0, 100.0), rung(1, 100.0)]).unwrap_err();
        assert!(matches!(err, Error::InvalidManifest(_)));
    }

    #[test]
    fn malformed_json_reports_line() {
        let err = Manifest::from_json_str("{\n  \"segment_duration_s\": 2.0,\n  oops\n}").unwrap_err();
        match err {
            Error::ManifestParse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_segment_duration_and_empty_ladder() {
        assert!(Manifest::from_json_str(
            r#"{"segment_duration_s": 0.0, "segment_count": 5,
                "ladder": [{"id": 0, "kbps": 300.0, "ssim": 0.9, "psnr_db": 38.0}]}"#
        )
        .is_err());
        assert!(Ladder::new(vec![]).is_err());
    }

    #[test]
    fn highest_rung_below_examples() {
        let m = Manifest::bbb();
        assert_eq!(
            m.ladder.highest_rung_below(500.0).map(|r| r.kbps),
            scan_below(&m.ladder, 500.0)
        );
        assert_eq!(m.ladder.highest_rung_below(500.0).unwrap().kbps, 480.15);
        assert!(m.ladder.highest_rung_below(51.05).is_none());
        assert_eq!(m.ladder.highest_rung_below(1e6).unwrap().kbps, 2335.2041);
    }

    #[test]
    fn save_and_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let m = Manifest::bbb();
        m.save(&path).unwrap();
        assert_eq!(load_manifest(&path).unwrap(), m);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn highest_rung_below_matches_brute_force(
                rates in proptest::collection::btree_set(1u32..100_000, 1..12),
                budget in 0.0f64..110.0,
            ) {
                let ladder = Ladder::new(
                    rates.iter().enumerate().map(|(i, &r)| rung(i, r as f64 / 1000.0)).collect()
                ).unwrap();
                let got = ladder.highest_rung_below(budget).map(|r| r.kbps);
                prop_assert_eq!(got, scan_below(&ladder, budget));
                if let Some(k) = got {
                    prop_assert!(k < budget);
                }
            }

            #[test]
            fn manifest_round_trip(
                rates in proptest::collection::btree_set(1u32..100_000, 1..12),
                dur in 0.5f64..10.0,
                count in 1usize..1000,
            ) {
                let ladder = Ladder::new(
                    rates.iter().enumerate().map(|(i, &r)| rung(i, r as f64 / 7.0)).collect()
                ).unwrap();
                let m = Manifest::new(ladder, dur, count).unwrap();
                prop_assert_eq!(Manifest::from_json_str(&m.to_json_string()).unwrap(), m);
            }
        }
    }
}
