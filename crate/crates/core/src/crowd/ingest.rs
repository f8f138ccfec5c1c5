//! Sample CSV ingestion and polyline projection.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::crowd::CrowdSample;
use crate::error::{Error, Result};

const EARTH_RADIUS_M: f64 = 6_371_008.8;

/// Default lateral cutoff for projecting lat/lon samples onto a route.
pub const DEFAULT_LATERAL_CUTOFF_M: f64 = 250.0;

/// Route polyline in a local equirectangular frame anchored at its first vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    origin: (f64, f64),
    cos_lat0: f64,
    xy: Vec<(f64, f64)>,
    cumulative_m: Vec<f64>,
}

impl Polyline {
    /// `points` are `(lat, lon)` in degrees.
    pub fn new(points: &[(f64, f64)]) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Config("route polyline needs at least two points".into()));
        }
        let origin = points[0];
        let cos_lat0 = origin.0.to_radians().cos();
        let xy: Vec<_> = points
            .iter()
            .map(|&(lat, lon)| to_local(origin, cos_lat0, lat, lon))
            .collect();
        let mut cumulative_m = Vec::with_capacity(xy.len());
        let mut acc = 0.0;
        cumulative_m.push(0.0);
        for w in xy.windows(2) {
            acc += dist(w[0], w[1]);
            cumulative_m.push(acc);
        }
        Ok(Self {
            origin,
            cos_lat0,
            xy,
            cumulative_m,
        })
    }

    /// Reads a `lat,lon` CSV with a header row.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut rdr = csv::Reader::from_path(path)?;
        let mut points = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let parse = |i: usize| -> Result<f64> {
                rec.get(i)
                    .and_then(|v| v.trim().parse().ok())
                    .ok_or_else(|| Error::Config(format!("{}: bad polyline row {rec:?}", path.display())))
            };
            points.push((parse(0)?, parse(1)?));
        }
        Self::new(&points)
    }

    pub fn length_m(&self) -> f64 {
        *self.cumulative_m.last().unwrap_or(&0.0)
    }

    /// Nearest-point projection: `(chainage, lateral distance)` in meters.
    pub fn project(&self, lat: f64, lon: f64) -> (f64, f64) {
        let p = to_local(self.origin, self.cos_lat0, lat, lon);
        let mut best = (0.0, f64::INFINITY);
        for (i, w) in self.xy.windows(2).enumerate() {
            let (a, b) = (w[0], w[1]);
            let seg = (b.0 - a.0, b.1 - a.1);
            let len2 = seg.0 * seg.0 + seg.1 * seg.1;
            let t = if len2 > 0.0 {
                (((p.0 - a.0) * seg.0 + (p.1 - a.1) * seg.1) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let q = (a.0 + t * seg.0, a.1 + t * seg.1);
            let d = dist(p, q);
            if d < best.1 {
                best = (self.cumulative_m[i] + t * len2.sqrt(), d);
            }
        }
        best
    }
}

fn to_local(origin: (f64, f64), cos_lat0: f64, lat: f64, lon: f64) -> (f64, f64) {
    (
        EARTH_RADIUS_M * (lon - origin.1).to_radians() * cos_lat0,
        EARTH_RADIUS_M * (lat - origin.0).to_radians(),
    )
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

/// How samples map onto the route.
#[derive(Debug, Clone, PartialEq)]
pub enum RouteGeometry {
    /// Pre-projected samples on a route of the given length.
    Chainage { length_m: f64 },
    /// Lat/lon samples projected onto a polyline; farther than the cutoff is
    /// off-route.
    Polyline {
        line: Polyline,
        lateral_cutoff_m: f64,
    },
}

impl RouteGeometry {
    pub fn polyline(line: Polyline) -> Self {
        RouteGeometry::Polyline {
            line,
            lateral_cutoff_m: DEFAULT_LATERAL_CUTOFF_M,
        }
    }

    pub fn length_m(&self) -> f64 {
        match self {
            RouteGeometry::Chainage { length_m } => *length_m,
            RouteGeometry::Polyline { line, .. } => line.length_m(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct IngestReport {
    pub samples: Vec<CrowdSample>,
    /// Rows that parsed but fell outside the route.
    pub off_route: usize,
    /// Rows that failed to parse or violated sample invariants.
    pub malformed: usize,
}

enum Layout {
    LatLon {
        ts: usize,
        lat: usize,
        lon: usize,
        speed: usize,
        bytes: usize,
        tput: usize,
    },
    Chainage {
        ts: usize,
        chainage: usize,
        speed: usize,
        bytes: usize,
        tput: usize,
    },
}

fn layout(headers: &csv::StringRecord) -> Result<Layout> {
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let need = |name: &str| {
        col(name).ok_or_else(|| Error::Config(format!("sample CSV is missing column `{name}`")))
    };
    if col("chainage_m").is_some() {
        Ok(Layout::Chainage {
            ts: need("timestamp_s")?,
            chainage: need("chainage_m")?,
            speed: need("speed_mps")?,
            bytes: need("bytes")?,
            tput: need("throughput_bps")?,
        })
    } else {
        Ok(Layout::LatLon {
            ts: need("timestamp_s")?,
            lat: need("lat")?,
            lon: need("lon")?,
            speed: need("speed_mps")?,
            bytes: need("bytes")?,
            tput: need("throughput_bps")?,
        })
    }
}

fn parse_bytes(v: &str) -> Option<u64> {
    let v = v.trim();
    v.parse::<u64>().ok().or_else(|| {
        let f: f64 = v.parse().ok()?;
        (f.is_finite() && f >= 0.0).then(|| f.round() as u64)
    })
}

/// Reads samples from CSV. Malformed rows and rows off the route are
/// skipped and counted; an empty file yields no samples.
pub fn ingest_csv(path: impl AsRef<Path>, route: &RouteGeometry) -> Result<IngestReport> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    ingest_reader(file, route)
}

pub(crate) fn ingest_reader<R: Read>(reader: R, route: &RouteGeometry) -> Result<IngestReport> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut report = IngestReport::default();
    if headers.is_empty() {
        return Ok(report);
    }
    let layout = layout(&headers)?;

    for rec in rdr.records() {
        let Ok(rec) = rec else {
            report.malformed += 1;
            continue;
        };
        let num = |i: usize| -> Option<f64> {
            rec.get(i)
                .and_then(|v| v.trim().parse::<f64>().ok())
                .filter(|v| v.is_finite())
        };
        let (ts, pos, speed, bytes, tput) = match layout {
            Layout::Chainage {
                ts,
                chainage,
                speed,
                bytes,
                tput,
            } => (num(ts), num(chainage).map(|c| (c, 0.0)), num(speed), rec.get(bytes).and_then(parse_bytes), num(tput)),
            Layout::LatLon {
                ts,
                lat,
                lon,
                speed,
                bytes,
                tput,
            } => {
                let pos = match (route, num(lat), num(lon)) {
                    (RouteGeometry::Polyline { line, .. }, Some(la), Some(lo)) => Some(line.project(la, lo)),
                    (RouteGeometry::Chainage { .. }, Some(_), Some(_)) => {
                        return Err(Error::Config(
                            "lat/lon samples need a route polyline to project onto".into(),
                        ))
                    }
                    _ => None,
                };
                (num(ts), pos, num(speed), rec.get(bytes).and_then(parse_bytes), num(tput))
            }
        };
        let (Some(timestamp_s), Some((chainage_m, lateral_m)), Some(speed_mps), Some(bytes), Some(throughput_bps)) =
            (ts, pos, speed, bytes, tput)
        else {
            report.malformed += 1;
            continue;
        };
        if throughput_bps < 0.0 || speed_mps < 0.0 {
            report.malformed += 1;
            continue;
        }
        let on_route = match route {
            RouteGeometry::Chainage { length_m } => (0.0..=*length_m).contains(&chainage_m),
            RouteGeometry::Polyline {
                lateral_cutoff_m, ..
            } => lateral_m <= *lateral_cutoff_m,
        };
        if !on_route {
            report.off_route += 1;
            continue;
        }
        report.samples.push(CrowdSample {
            chainage_m,
            timestamp_s,
            speed_mps,
            bytes,
            throughput_bps,
        });
    }
    Ok(report)
}

/// Writes samples in the pre-projected CSV form.
pub fn write_samples_csv(path: impl AsRef<Path>, samples: &[CrowdSample]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_samples(file, samples)
}

pub(crate) fn write_samples<W: Write>(writer: W, samples: &[CrowdSample]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["timestamp_s", "chainage_m", "speed_mps", "bytes", "throughput_bps"])?;
    for s in samples {
        w.write_record([
            s.timestamp_s.to_string(),
            s.chainage_m.to_string(),
            s.speed_mps.to_string(),
            s.bytes.to_string(),
            s.throughput_bps.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<samples csv>", e))?;
    Ok(())
}
