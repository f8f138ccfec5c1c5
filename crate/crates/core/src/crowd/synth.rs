//! Statistics-matched synthetic routes.
//!
//! The ground-truth field is a mean-reverting random walk in log space along
//! the route (an AR(1) process over grid cells). Crowd samples read the field
//! through per-sample multiplicative noise and time-of-day modulation, with a
//! configurable density. The walk is rescaled so that the crowd samples'
//! median and mean hit the profile targets, since those describe what users
//! measured rather than the underlying field.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Poisson, StandardNormal};

use crate::crowd::{CrowdMap, CrowdSample, TimeBucket};
use crate::error::{Error, Result};
use crate::field::GridField;

/// 2014-12-01T00:00:00Z
const WEEK_START_S: f64 = 1_417_392_000.0;
const WEEK_S: f64 = 7.0 * 86_400.0;

#[derive(Debug, Clone, PartialEq)]
pub struct RouteProfile {
    pub name: String,
    pub length_m: f64,
    pub bin_m: f64,
    pub median_bps: f64,
    pub mean_bps: f64,
    /// Reported for reference; the two-parameter field model matches only
    /// median and mean.
    pub std_bps: f64,
    /// Decorrelation length of the log-bandwidth walk.
    pub correlation_m: f64,
    /// Lower clamp for the field.
    pub floor_bps: f64,
    /// Log-space standard deviation of per-sample noise. At 0 every sample
    /// reports the ground-truth cell value exactly and time-of-day
    /// modulation is off.
    pub noise: f64,
    /// Mean crowd samples per bin.
    pub samples_per_bin: f64,
    /// From this chainage on, density is multiplied by the factor.
    pub density_drop: Option<(f64, f64)>,
    /// Relative throughput per time bucket (morning, midday, evening, night);
    /// normalized to mean 1.
    pub diurnal: [f64; 4],
}

impl RouteProfile {
    /// Interstate I110: 30 km, median 0.86 Mb/s, mean 1.585 Mb/s, STD 2 Mb/s.
    pub fn i110() -> Self {
        Self {
            name: "i110-synth".into(),
            length_m: 30_000.0,
            bin_m: 12.0,
            median_bps: 0.86e6,
            mean_bps: 1.585e6,
            std_bps: 2.0e6,
            correlation_m: 250.0,
            floor_bps: 0.0,
            noise: 0.3,
            samples_per_bin: 50.0,
            density_drop: Some((23_000.0, 0.35)),
            diurnal: [1.6, 1.24, 1.46, 0.72],
        }
    }

    /// Interstate I405: 17 km, median 1.97 Mb/s, mean 2.63 Mb/s, STD 2.15 Mb/s.
    pub fn i405() -> Self {
        Self {
            name: "i405-synth".into(),
            length_m: 17_000.0,
            bin_m: 12.0,
            median_bps: 1.97e6,
            mean_bps: 2.63e6,
            std_bps: 2.15e6,
            correlation_m: 400.0,
            floor_bps: 0.0,
            noise: 0.3,
            samples_per_bin: 150.0,
            density_drop: None,
            diurnal: [1.0, 1.0, 1.0, 1.0],
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "i110" | "i110-synth" => Some(Self::i110()),
            "i405" | "i405-synth" => Some(Self::i405()),
            _ => None,
        }
    }

    fn validate(&self) -> Result<()> {
        let positive = [
            ("length", self.length_m),
            ("bin width", self.bin_m),
            ("median", self.median_bps),
            ("mean", self.mean_bps),
            ("correlation length", self.correlation_m),
        ];
        for (what, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Generation(format!("{what} must be positive, got {v}")));
            }
        }
        if !(self.std_bps >= 0.0) || !(self.noise >= 0.0) || !(self.samples_per_bin >= 0.0) {
            return Err(Error::Generation("std, noise and density must be non-negative".into()));
        }
        if self.std_bps == 0.0 && self.median_bps != self.mean_bps {
            return Err(Error::Generation(format!(
                "std 0 requires median == mean, got {} vs {}",
                self.median_bps, self.mean_bps
            )));
        }
        if self.std_bps > 0.0 && self.mean_bps <= self.median_bps {
            return Err(Error::Generation(
                "the log-space field is right-skewed and needs mean > median".into(),
            ));
        }
        if !(self.floor_bps >= 0.0) || self.floor_bps >= self.median_bps {
            return Err(Error::Generation(format!(
                "floor {} must lie in [0, median)",
                self.floor_bps
            )));
        }
        if self.diurnal.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
            return Err(Error::Generation("diurnal factors must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticRoute {
    pub field: GridField,
    pub samples: Vec<CrowdSample>,
    pub map: CrowdMap,
}

/// Generates a ground-truth field and a crowd map sampled from it.
/// Deterministic in `seed`.
pub fn synthesize(profile: &RouteProfile, seed: u64) -> Result<SyntheticRoute> {
    profile.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_cells = ((profile.length_m / profile.bin_m).ceil() as usize).max(1);

    let z = if profile.std_bps == 0.0 {
        Vec::new()
    } else {
        let phi = (-profile.bin_m / profile.correlation_m).exp();
        let innov = (1.0 - phi * phi).sqrt();
        let mut z = Vec::with_capacity(n_cells);
        let mut prev: f64 = rng.sample(StandardNormal);
        z.push(prev);
        for _ in 1..n_cells {
            let e: f64 = rng.sample(StandardNormal);
            prev = phi * prev + innov * e;
            z.push(prev);
        }
        z
    };

    let draws = draw_samples(n_cells, profile, &mut rng)?;
    let values = if z.is_empty() {
        vec![profile.mean_bps; n_cells]
    } else {
        calibrate(&z, &draws, profile)?
    };
    let field = GridField::new(profile.bin_m, values)?;

    let samples: Vec<CrowdSample> = draws
        .iter()
        .map(|d| CrowdSample {
            throughput_bps: field.values_bps()[d.cell] * d.factor,
            ..d.sample
        })
        .collect();
    let map = CrowdMap::aggregate_over(&samples, profile.bin_m, profile.length_m)?;
    Ok(SyntheticRoute {
        field,
        samples,
        map,
    })
}

/// A sample before the field is known: its cell and the multiplicative
/// factor (time of day times noise) applied to the cell's value.
struct Draw {
    sample: CrowdSample,
    cell: usize,
    factor: f64,
}

/// Maps the walk to `max(floor, exp(a + scale * z))`. For each `scale`, `a`
/// puts the median of the crowd samples on target; `scale` is then found by
/// bisection so the samples' mean hits its target. Without samples the
/// cells themselves are calibrated.
fn calibrate(z: &[f64], draws: &[Draw], p: &RouteProfile) -> Result<Vec<f64>> {
    let (cells, log_factor): (Vec<usize>, Vec<f64>) = if draws.is_empty() {
        ((0..z.len()).collect(), vec![0.0; z.len()])
    } else {
        draws.iter().map(|d| (d.cell, d.factor.ln())).unzip()
    };
    let mut factor_sum = vec![0.0; z.len()];
    for (&c, l) in cells.iter().zip(&log_factor) {
        factor_sum[c] += l.exp();
    }
    let n = cells.len() as f64;
    let mut scratch = vec![0.0; cells.len()];

    let mut shape = |scale: f64| -> (Vec<f64>, f64) {
        for ((w, &c), l) in scratch.iter_mut().zip(&cells).zip(&log_factor) {
            *w = scale * z[c] + l;
        }
        let mid = (scratch.len() - 1) / 2;
        let (_, med, _) = scratch.select_nth_unstable_by(mid, f64::total_cmp);
        let a = p.median_bps.ln() - *med;
        let values: Vec<f64> = z
            .iter()
            .map(|&zc| (a + scale * zc).exp().max(p.floor_bps))
            .collect();
        let mean = values.iter().zip(&factor_sum).map(|(v, f)| v * f).sum::<f64>() / n;
        (values, mean - p.mean_bps)
    };

    if shape(0.0).1 >= 0.0 {
        return Err(Error::Generation(format!(
            "sample noise alone pushes the mean above {} at median {}",
            p.mean_bps, p.median_bps
        )));
    }
    let mut lo = 0.0;
    let mut hi = 0.5;
    while shape(hi).1 < 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 64.0 {
            return Err(Error::Generation(format!(
                "cannot reach mean {} from median {}",
                p.mean_bps, p.median_bps
            )));
        }
    }
    while hi - lo > 1e-12 * hi {
        let mid = 0.5 * (lo + hi);
        if shape(mid).1 < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(shape(0.5 * (lo + hi)).0)
}

fn draw_samples(n_cells: usize, p: &RouteProfile, rng: &mut ChaCha8Rng) -> Result<Vec<Draw>> {
    let diurnal_mean = p.diurnal.iter().sum::<f64>() / 4.0;
    let bytes_dist = LogNormal::new(20_000f64.ln(), 1.2).expect("valid lognormal");
    let noise_dist = (p.noise > 0.0)
        .then(|| LogNormal::new(-0.5 * p.noise * p.noise, p.noise).expect("valid lognormal"));

    let mut draws = Vec::new();
    for cell in 0..n_cells {
        let start = cell as f64 * p.bin_m;
        let width = (p.length_m - start).min(p.bin_m);
        let density = match p.density_drop {
            Some((from, factor)) if start >= from => p.samples_per_bin * factor,
            _ => p.samples_per_bin,
        };
        let count = if density > 0.0 {
            let d: f64 = Poisson::new(density)
                .map_err(|e| Error::Generation(e.to_string()))?
                .sample(rng);
            d as usize
        } else {
            0
        };
        for _ in 0..count {
            let chainage_m = start + rng.random::<f64>() * width;
            let timestamp_s = (WEEK_START_S + rng.random::<f64>() * WEEK_S).floor();
            let speed_mps = (25.0 + 5.0 * rng.sample::<f64, _>(StandardNormal)).max(0.0);
            let bytes = bytes_dist.sample(rng).round() as u64;
            let factor = match &noise_dist {
                None => 1.0,
                Some(noise) => {
                    let tod = p.diurnal[TimeBucket::from_timestamp(timestamp_s).index()] / diurnal_mean;
                    tod * noise.sample(rng)
                }
            };
            draws.push(Draw {
                sample: CrowdSample {
                    chainage_m,
                    timestamp_s,
                    speed_mps,
                    bytes,
                    throughput_bps: 0.0,
                },
                cell,
                factor,
            });
        }
    }
    Ok(draws)
}
