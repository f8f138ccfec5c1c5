//! Ground-truth bandwidth fields driving the download shaper.

use crate::crowd::CrowdMap;
use crate::error::{Error, Result};

/// Bandwidth available to the client at a route position and time.
pub trait NetworkField: Sync {
    /// Bits/second at `chainage_m` and session time `time_s`. Must be > 0.
    fn bandwidth_bps(&self, chainage_m: f64, time_s: f64) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantField(pub f64);

impl NetworkField for ConstantField {
    fn bandwidth_bps(&self, _chainage_m: f64, _time_s: f64) -> f64 {
        self.0
    }
}

/// Time-varying field from a closure `(chainage_m, time_s) -> bps`.
pub struct FnField<F>(pub F);

impl<F> NetworkField for FnField<F>
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    fn bandwidth_bps(&self, chainage_m: f64, time_s: f64) -> f64 {
        (self.0)(chainage_m, time_s)
    }
}

/// Piecewise-constant field on a uniform chainage grid. Positions past either
/// end read the nearest cell.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    cell_m: f64,
    values_bps: Vec<f64>,
}

impl GridField {
    pub fn new(cell_m: f64, values_bps: Vec<f64>) -> Result<Self> {
        if !(cell_m > 0.0) {
            return Err(Error::Config(format!("grid cell must be positive, got {cell_m}")));
        }
        if values_bps.is_empty() {
            return Err(Error::Empty("bandwidth grid has no cells".into()));
        }
        if let Some(v) = values_bps.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::Config(format!("bandwidth grid value {v} is not positive")));
        }
        Ok(Self { cell_m, values_bps })
    }

    /// Ground truth taken from a crowd map's bin estimates. Bins without an
    /// estimate take the nearest estimated bin's value.
    pub fn from_crowd_map(map: &CrowdMap) -> Result<Self> {
        let bins = map.bins();
        let cell_m = bins[0].width_m;
        let est: Vec<Option<f64>> = bins.iter().map(|b| b.e_x_bps.filter(|e| *e > 0.0)).collect();
        if est.iter().all(Option::is_none) {
            return Err(Error::Empty("crowd map has no positive estimates".into()));
        }
        let n = est.len();
        let mut values = vec![0.0; n];
        let mut last: Option<(usize, f64)> = None;
        let mut left = vec![None; n];
        for i in 0..n {
            if let Some(e) = est[i] {
                last = Some((i, e));
            }
            left[i] = last;
        }
        let mut next: Option<(usize, f64)> = None;
        for i in (0..n).rev() {
            if let Some(e) = est[i] {
                next = Some((i, e));
            }
            values[i] = match (left[i], next) {
                (Some((li, lv)), Some((ri, rv))) => {
                    if i - li <= ri - i {
                        lv
                    } else {
                        rv
                    }
                }
                (Some((_, v)), None) | (None, Some((_, v))) => v,
                (None, None) => unreachable!(),
            };
        }
        Self::new(cell_m, values)
    }

    pub fn cell_m(&self) -> f64 {
        self.cell_m
    }

    pub fn values_bps(&self) -> &[f64] {
        &self.values_bps
    }

    pub fn length_m(&self) -> f64 {
        self.cell_m * self.values_bps.len() as f64
    }

    pub fn at(&self, chainage_m: f64) -> f64 {
        let idx = if chainage_m <= 0.0 {
            0
        } else {
            ((chainage_m / self.cell_m) as usize).min(self.values_bps.len() - 1)
        };
        self.values_bps[idx]
    }

    pub fn min_bps(&self) -> f64 {
        self.values_bps.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn mean_bps(&self) -> f64 {
        self.values_bps.iter().sum::<f64>() / self.values_bps.len() as f64
    }

    pub fn median_bps(&self) -> f64 {
        crate::stats::median(&self.values_bps)
    }
}

impl NetworkField for GridField {
    fn bandwidth_bps(&self, chainage_m: f64, _time_s: f64) -> f64 {
        self.at(chainage_m)
    }
}
