//! Experiment sweeps over algorithms, routes and seeds, and route analysis.
//!
//! Each (route, seed) pair yields one scenario: a ground-truth field and the
//! crowd map drawn from it. Every algorithm then runs one session per
//! scenario. Cells are independent; with the `parallel` feature they run on
//! the rayon pool. Output files are written per cell through a temporary
//! file and a rename, and the aggregate is assembled after all cells finish,
//! in configuration order.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::adaptation::{Algorithm, AlgorithmParams};
use crate::crowd::{
    ingest_csv, synthesize, CrowdMap, CrowdSample, RouteGeometry, RouteProfile, TimeBucket,
};
use crate::error::{Error, Result};
use crate::field::GridField;
use crate::media::{load_manifest, Manifest};
use crate::qoe::SessionReport;
use crate::sim::{run_session, write_segment_log, MobilityModel, SimConfig};
use crate::stats;

#[derive(Debug, Clone, PartialEq)]
pub enum RouteSpec {
    Synthetic(RouteProfile),
    Csv(PathBuf),
}

impl RouteSpec {
    /// `i110-synth`, `i405-synth` or `csv:<path>`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(path) = s.strip_prefix("csv:") {
            if path.is_empty() {
                return Err(Error::Config("csv route needs a path".into()));
            }
            return Ok(RouteSpec::Csv(PathBuf::from(path)));
        }
        RouteProfile::by_name(s)
            .map(RouteSpec::Synthetic)
            .ok_or_else(|| Error::Config(format!("unknown route `{s}`")))
    }

    /// Comma-separated route specs.
    pub fn parse_list(s: &str) -> Result<Vec<Self>> {
        let routes = s
            .split(',')
            .filter(|p| !p.trim().is_empty())
            .map(Self::parse)
            .collect::<Result<Vec<_>>>()?;
        if routes.is_empty() {
            return Err(Error::Config("no routes given".into()));
        }
        Ok(routes)
    }

    /// File-name-safe label.
    pub fn label(&self) -> String {
        match self {
            RouteSpec::Synthetic(p) => p.name.clone(),
            RouteSpec::Csv(path) => {
                let stem = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "route".into());
                let safe: String = stem
                    .chars()
                    .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
                    .collect();
                format!("csv-{safe}")
            }
        }
    }
}

/// Parses `a..b` (inclusive), a single integer, or a comma list of either.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = || Error::Config(format!("invalid seed list `{s}`"));
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..") {
            let b = b.strip_prefix('=').unwrap_or(b);
            let a: u64 = a.trim().parse().map_err(|_| bad())?;
            let b: u64 = b.trim().parse().map_err(|_| bad())?;
            if a > b {
                return Err(bad());
            }
            out.extend(a..=b);
        } else {
            out.push(part.parse().map_err(|_| bad())?);
        }
    }
    if out.is_empty() {
        return Err(Error::Config("no seeds given".into()));
    }
    Ok(out)
}

/// Parses `none` or a bucket code.
pub fn parse_bucket(s: &str) -> Result<Option<TimeBucket>> {
    match s {
        "none" | "" => Ok(None),
        code => code.parse().map(Some),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Falls back to sequential without the `parallel` feature.
    #[default]
    Parallel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Built-in ladder when `None`.
    pub manifest_path: Option<PathBuf>,
    pub routes: Vec<RouteSpec>,
    pub algorithms: Vec<Algorithm>,
    pub seeds: Vec<u64>,
    pub buffer_max_s: f64,
    pub radius_m: f64,
    pub speed_mps: f64,
    pub session_s: f64,
    pub n: usize,
    /// Overrides the synthetic profile's sample noise.
    pub noise: Option<f64>,
    /// Overrides the synthetic profile's field floor.
    pub floor_bps: Option<f64>,
    pub bucket: Option<TimeBucket>,
    pub out_dir: Option<PathBuf>,
    /// Worker limit; rayon's default pool when `None`.
    pub jobs: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            manifest_path: None,
            routes: vec![RouteSpec::Synthetic(RouteProfile::i110())],
            algorithms: Algorithm::ALL.to_vec(),
            seeds: vec![1],
            buffer_max_s: 30.0,
            radius_m: 250.0,
            speed_mps: 25.0,
            session_s: 400.0,
            n: 5,
            noise: None,
            floor_bps: None,
            bucket: None,
            out_dir: None,
            jobs: None,
        }
    }
}

impl ExperimentConfig {
    fn validate(&self) -> Result<()> {
        if self.algorithms.is_empty() {
            return Err(Error::Config("no algorithms given".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("no seeds given".into()));
        }
        if self.routes.is_empty() {
            return Err(Error::Config("no routes given".into()));
        }
        if !(self.session_s > 0.0) || !(self.speed_mps >= 0.0) {
            return Err(Error::Config("session length must be positive and speed non-negative".into()));
        }
        Ok(())
    }

    pub fn manifest(&self) -> Result<Manifest> {
        let base = match &self.manifest_path {
            Some(p) => load_manifest(p)?,
            None => Manifest::bbb(),
        };
        Ok(base.with_session_seconds(self.session_s))
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            buffer_max_s: self.buffer_max_s,
            radius_m: self.radius_m,
            bucket: self.bucket,
            ..SimConfig::default()
        }
    }

    pub fn algorithm_params(&self) -> AlgorithmParams {
        AlgorithmParams {
            n: self.n,
            ..AlgorithmParams::default()
        }
    }
}

/// Ground truth plus the crowd map the client consults.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub route: String,
    pub seed: u64,
    pub field: GridField,
    pub map: CrowdMap,
    /// Median and mean throughput of the crowd samples behind `map`.
    pub crowd_median_bps: f64,
    pub crowd_mean_bps: f64,
}

fn throughput_stats(samples: &[CrowdSample]) -> (f64, f64) {
    let t: Vec<f64> = samples.iter().map(|s| s.throughput_bps).collect();
    if t.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    (stats::median(&t), stats::mean(&t))
}

/// Synthetic routes are generated from `seed`. CSV routes are read as
/// chainage samples; their crowd map doubles as the ground truth.
pub fn build_scenario(route: &RouteSpec, seed: u64, cfg: &ExperimentConfig) -> Result<Scenario> {
    match route {
        RouteSpec::Synthetic(profile) => {
            let mut profile = profile.clone();
            if let Some(noise) = cfg.noise {
                profile.noise = noise;
            }
            if let Some(floor) = cfg.floor_bps {
                profile.floor_bps = floor;
            }
            let synth = synthesize(&profile, seed)?;
            let (crowd_median_bps, crowd_mean_bps) = throughput_stats(&synth.samples);
            Ok(Scenario {
                route: route.label(),
                seed,
                field: synth.field,
                map: synth.map,
                crowd_median_bps,
                crowd_mean_bps,
            })
        }
        RouteSpec::Csv(path) => {
            let report = ingest_csv(
                path,
                &RouteGeometry::Chainage {
                    length_m: f64::INFINITY,
                },
            )?;
            if report.samples.is_empty() {
                return Err(Error::Empty(format!("no usable samples in {}", path.display())));
            }
            let map = CrowdMap::aggregate(&report.samples, crate::crowd::DEFAULT_BIN_M)?;
            let (crowd_median_bps, crowd_mean_bps) = throughput_stats(&report.samples);
            Ok(Scenario {
                route: route.label(),
                seed,
                field: GridField::from_crowd_map(&map)?,
                map,
                crowd_median_bps,
                crowd_mean_bps,
            })
        }
    }
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub algorithm: Algorithm,
    pub route: String,
    pub seed: u64,
    pub report: SessionReport,
}

impl CellResult {
    pub fn stem(&self) -> String {
        format!("{}_{}_{}", self.algorithm, self.route, self.seed)
    }

    pub fn summary(&self) -> CellSummary {
        CellSummary {
            algorithm: self.algorithm.name().to_string(),
            route: self.route.clone(),
            seed: self.seed,
            emos: self.report.emos,
            switches: self.report.switches,
            rebuffer_count: self.report.rebuffer_count,
            rebuffer_s: self.report.rebuffer_total_s,
            mean_kbps: self.report.mean_kbps,
            segments: self.report.segments.len(),
        }
    }
}

/// Per-cell summary JSON.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct CellSummary {
    pub algorithm: String,
    pub route: String,
    pub seed: u64,
    pub emos: f64,
    pub switches: usize,
    pub rebuffer_count: usize,
    pub rebuffer_s: f64,
    pub mean_kbps: f64,
    pub segments: usize,
}

/// Per-algorithm means over all routes and seeds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub algorithm: String,
    pub sessions: usize,
    pub emos: f64,
    pub switches: f64,
    pub rebuffer_count: f64,
    pub rebuffer_s: f64,
    pub mean_kbps: f64,
}

fn map_cells<T, R, F>(items: &[T], exec: Execution, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            items.par_iter().map(f).collect()
        }
        _ => items.iter().map(f).collect(),
    }
}

fn in_pool<R: Send>(cfg: &ExperimentConfig, exec: Execution, body: impl FnOnce() -> R + Send) -> Result<R> {
    match (exec, cfg.jobs) {
        #[cfg(feature = "parallel")]
        (Execution::Parallel, Some(jobs)) => Ok(rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(body)),
        _ => Ok(body()),
    }
}

/// One scenario per (route, seed), ordered by route then seed.
pub fn build_scenarios(cfg: &ExperimentConfig, exec: Execution) -> Result<Vec<Scenario>> {
    cfg.validate()?;
    let pairs: Vec<(&RouteSpec, u64)> = cfg
        .routes
        .iter()
        .flat_map(|r| cfg.seeds.iter().map(move |&s| (r, s)))
        .collect();
    in_pool(cfg, exec, || {
        map_cells(&pairs, exec, |(r, s)| build_scenario(r, *s, cfg))
            .into_iter()
            .collect()
    })?
}

/// Runs every configured algorithm on every scenario. Results are ordered
/// by scenario, then algorithm as configured.
pub fn run_scenarios(cfg: &ExperimentConfig, scenarios: &[Scenario], exec: Execution) -> Result<Vec<CellResult>> {
    cfg.validate()?;
    let manifest = cfg.manifest()?;
    let sim = cfg.sim_config();
    let params = cfg.algorithm_params();
    params.mal.validate(sim.buffer_max_s, manifest.segment_duration_s)?;
    sim.validate(&manifest)?;
    for alg in &cfg.algorithms {
        alg.build(&params)?;
    }
    let mobility = MobilityModel::constant(cfg.speed_mps);
    let cells: Vec<(&Scenario, Algorithm)> = scenarios
        .iter()
        .flat_map(|sc| cfg.algorithms.iter().map(move |&a| (sc, a)))
        .collect();
    in_pool(cfg, exec, || {
        map_cells(&cells, exec, |(sc, alg)| {
            let mut logic = alg.build(&params)?;
            let report = run_session(&manifest, logic.as_mut(), &sc.field, &sc.map, &mobility, &sim)?;
            Ok(CellResult {
                algorithm: *alg,
                route: sc.route.clone(),
                seed: sc.seed,
                report,
            })
        })
        .into_iter()
        .collect()
    })?
}

/// Runs the matrix in memory.
pub fn run_cells(cfg: &ExperimentConfig, exec: Execution) -> Result<Vec<CellResult>> {
    // fail on bad manifests or parameters before generating any route
    cfg.manifest()?;
    let scenarios = build_scenarios(cfg, exec)?;
    run_scenarios(cfg, &scenarios, exec)
}

/// Means per algorithm, in the order algorithms first appear.
pub fn aggregate(results: &[CellResult]) -> Vec<AggregateRow> {
    let mut order: Vec<Algorithm> = Vec::new();
    for r in results {
        if !order.contains(&r.algorithm) {
            order.push(r.algorithm);
        }
    }
    order
        .into_iter()
        .map(|alg| {
            let rows: Vec<&SessionReport> = results
                .iter()
                .filter(|r| r.algorithm == alg)
                .map(|r| &r.report)
                .collect();
            let avg = |f: fn(&SessionReport) -> f64| {
                stats::mean(&rows.iter().map(|r| f(r)).collect::<Vec<_>>())
            };
            AggregateRow {
                algorithm: alg.name().to_string(),
                sessions: rows.len(),
                emos: avg(|r| r.emos),
                switches: avg(|r| r.switches as f64),
                rebuffer_count: avg(|r| r.rebuffer_count as f64),
                rebuffer_s: avg(|r| r.rebuffer_total_s),
                mean_kbps: avg(|r| r.mean_kbps),
            }
        })
        .collect()
}

pub fn write_aggregate_csv(path: &Path, rows: &[AggregateRow]) -> Result<()> {
    write_atomic(path, |buf| {
        let mut w = csv::Writer::from_writer(buf);
        for row in rows {
            w.serialize(row)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    })
}

fn write_atomic(path: &Path, fill: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    fill(&mut buf)?;
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, &buf).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Segment log, summary JSON and plot series for one cell.
pub fn write_cell(out_dir: &Path, cell: &CellResult) -> Result<()> {
    let stem = cell.stem();
    let sessions = out_dir.join("sessions");
    let plots = out_dir.join("plots");
    write_atomic(&sessions.join(format!("{stem}.csv")), |buf| {
        write_segment_log(buf, &cell.report.segments)
    })?;
    write_atomic(&sessions.join(format!("{stem}.json")), |buf| {
        serde_json::to_writer_pretty(&mut *buf, &cell.summary())?;
        buf.push(b'\n');
        Ok(())
    })?;
    write_atomic(&plots.join(format!("{stem}.csv")), |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["t_s", "estimate_bps", "kbps", "buffer_s"])?;
        for s in &cell.report.segments {
            w.write_record([
                format!("{:.6}", s.download_end_s),
                s.estimate.map_or(String::new(), |e| format!("{:.3}", e.bps)),
                s.rep.kbps.to_string(),
                format!("{:.6}", s.buffer_after_s),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<plot data>", e))?;
        Ok(())
    })
}

#[derive(Debug, Clone)]
pub struct MatrixOutput {
    pub cells: Vec<CellResult>,
    pub aggregate: Vec<AggregateRow>,
}

/// Runs the matrix and, when `out_dir` is set, writes `sessions/`, `plots/`
/// and `aggregate.csv` under it.
pub fn run_matrix(cfg: &ExperimentConfig) -> Result<MatrixOutput> {
    if let Some(out) = &cfg.out_dir {
        create_dir(&out.join("sessions"))?;
        create_dir(&out.join("plots"))?;
    }
    let cells = run_cells(cfg, Execution::Parallel)?;
    let aggregate = aggregate(&cells);
    if let Some(out) = &cfg.out_dir {
        map_cells(&cells, Execution::Parallel, |c| write_cell(out, c))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        write_aggregate_csv(&out.join("aggregate.csv"), &aggregate)?;
    }
    Ok(MatrixOutput { cells, aggregate })
}

/// Upper edge of the throughput histogram.
pub const PMF_MAX_BPS: f64 = 10e6;
pub const PMF_BINS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RouteSummary {
    pub samples: usize,
    pub off_route: usize,
    pub malformed: usize,
    pub median_bps: f64,
    pub mean_bps: f64,
    pub std_bps: f64,
    pub bucket_mean_bps: Vec<(String, Option<f64>)>,
}

#[derive(Debug, Clone)]
pub struct RouteAnalysis {
    pub summary: RouteSummary,
    pub map: CrowdMap,
    /// Probability mass per fixed-width bin over `[0, PMF_MAX_BPS]`; the
    /// last bin also takes everything above.
    pub pmf: Vec<f64>,
}

/// Statistics of raw sample throughputs.
pub fn analyze_samples(samples: &[CrowdSample], bin_m: f64) -> Result<RouteAnalysis> {
    if samples.is_empty() {
        return Err(Error::Empty("no samples to analyze".into()));
    }
    let tput: Vec<f64> = samples.iter().map(|s| s.throughput_bps).collect();
    let map = CrowdMap::aggregate(samples, bin_m)?;

    let width = PMF_MAX_BPS / PMF_BINS as f64;
    let mut pmf = vec![0.0; PMF_BINS];
    for &t in &tput {
        let i = ((t / width) as usize).min(PMF_BINS - 1);
        pmf[i] += 1.0;
    }
    pmf.iter_mut().for_each(|p| *p /= tput.len() as f64);

    let bucket_mean_bps = TimeBucket::ALL
        .iter()
        .map(|&b| {
            let xs: Vec<f64> = samples
                .iter()
                .filter(|s| s.bucket() == b)
                .map(|s| s.throughput_bps)
                .collect();
            (b.code().to_string(), (!xs.is_empty()).then(|| stats::mean(&xs)))
        })
        .collect();

    Ok(RouteAnalysis {
        summary: RouteSummary {
            samples: samples.len(),
            off_route: 0,
            malformed: 0,
            median_bps: stats::median(&tput),
            mean_bps: stats::mean(&tput),
            std_bps: stats::std_dev(&tput),
            bucket_mean_bps,
        },
        map,
        pmf,
    })
}

/// Reads a sample CSV and writes `bins.csv`, `pmf.csv`, `buckets.csv`,
/// `summary.json` and `crowd_map.json` into `out_dir`.
pub fn analyze_route(
    samples_csv: &Path,
    geometry: &RouteGeometry,
    bin_m: f64,
    out_dir: &Path,
) -> Result<RouteAnalysis> {
    let ingest = ingest_csv(samples_csv, geometry)?;
    let mut analysis = analyze_samples(&ingest.samples, bin_m)?;
    analysis.summary.off_route = ingest.off_route;
    analysis.summary.malformed = ingest.malformed;

    create_dir(out_dir)?;
    write_atomic(&out_dir.join("bins.csv"), |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["start_m", "end_m", "e_x_bps", "samples"])?;
        for b in analysis.map.bins() {
            w.write_record([
                b.start_m.to_string(),
                b.end_m().to_string(),
                b.e_x_bps.map_or(String::new(), |e| e.to_string()),
                b.samples.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<bins>", e))?;
        Ok(())
    })?;
    write_atomic(&out_dir.join("pmf.csv"), |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["lo_bps", "hi_bps", "probability"])?;
        let width = PMF_MAX_BPS / PMF_BINS as f64;
        for (i, p) in analysis.pmf.iter().enumerate() {
            w.write_record([
                (i as f64 * width).to_string(),
                ((i + 1) as f64 * width).to_string(),
                p.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<pmf>", e))?;
        Ok(())
    })?;
    write_atomic(&out_dir.join("buckets.csv"), |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["bucket", "mean_bps"])?;
        for (code, mean) in &analysis.summary.bucket_mean_bps {
            w.write_record([code.clone(), mean.map_or(String::new(), |m| m.to_string())])?;
        }
        w.flush().map_err(|e| Error::io("<buckets>", e))?;
        Ok(())
    })?;
    write_atomic(&out_dir.join("summary.json"), |buf| {
        serde_json::to_writer_pretty(&mut *buf, &analysis.summary)?;
        buf.push(b'\n');
        Ok(())
    })?;
    analysis.map.save(out_dir.join("crowd_map.json"))?;
    Ok(analysis)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_lists() {
        assert_eq!(parse_seeds("1..3").unwrap(), vec![1, 2, 3]);
        assert_eq!(parse_seeds("1..=2,7").unwrap(), vec![1, 2, 7]);
        assert_eq!(parse_seeds("4").unwrap(), vec![4]);
        assert!(parse_seeds("3..1").is_err());
        assert!(parse_seeds("x").is_err());
        assert!(parse_seeds("").is_err());
    }

    #[test]
    fn route_specs() {
        assert_eq!(RouteSpec::parse("i110-synth").unwrap().label(), "i110-synth");
        assert_eq!(RouteSpec::parse("csv:/a/b c.csv").unwrap().label(), "csv-b_c");
        assert!(RouteSpec::parse("i5").is_err());
        assert_eq!(RouteSpec::parse_list("i110-synth,i405-synth").unwrap().len(), 2);
    }

    #[test]
    fn buckets_parse() {
        assert_eq!(parse_bucket("none").unwrap(), None);
        assert_eq!(parse_bucket("1521").unwrap(), Some(TimeBucket::Evening));
        assert!(parse_bucket("1200").is_err());
    }

    fn small_cfg() -> ExperimentConfig {
        ExperimentConfig {
            routes: vec![RouteSpec::Synthetic(RouteProfile {
                length_m: 3_000.0,
                samples_per_bin: 5.0,
                ..RouteProfile::i405()
            })],
            algorithms: vec![Algorithm::Gpal, Algorithm::MaxBw],
            seeds: vec![1, 2, 3],
            session_s: 60.0,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn aggregate_is_mean_of_cells() {
        let cells = run_cells(&small_cfg(), Execution::Parallel).unwrap();
        assert_eq!(cells.len(), 6);
        let agg = aggregate(&cells);
        assert_eq!(agg.len(), 2);
        for row in &agg {
            let xs: Vec<f64> = cells
                .iter()
                .filter(|c| c.algorithm.name() == row.algorithm)
                .map(|c| c.report.emos)
                .collect();
            assert_eq!(row.sessions, 3);
            assert!((row.emos - xs.iter().sum::<f64>() / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let cfg = small_cfg();
        let a = run_cells(&cfg, Execution::Sequential).unwrap();
        let b = run_cells(&cfg, Execution::Parallel).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.stem(), y.stem());
            assert_eq!(x.report, y.report);
        }
    }

    #[test]
    fn singleton_analysis() {
        let s = CrowdSample {
            chainage_m: 5.0,
            timestamp_s: 1_417_392_000.0 + 4.0 * 3600.0,
            speed_mps: 20.0,
            bytes: 1000,
            throughput_bps: 1.25e6,
        };
        let a = analyze_samples(&[s], 12.0).unwrap();
        assert_eq!(a.summary.median_bps, 1.25e6);
        assert_eq!(a.summary.mean_bps, 1.25e6);
        assert_eq!(a.summary.std_bps, 0.0);
        assert_eq!(a.map.bins()[0].e_x_bps, Some(1.25e6));
        assert_eq!(a.pmf[2], 1.0);
        assert_eq!(a.summary.bucket_mean_bps[0], ("0309".to_string(), Some(1.25e6)));
        assert!(matches!(analyze_samples(&[], 12.0), Err(Error::Empty(_))));
    }

    #[test]
    fn missing_csv_route_is_io_error() {
        let cfg = ExperimentConfig {
            routes: vec![RouteSpec::Csv("/nonexistent/route.csv".into())],
            ..small_cfg()
        };
        assert!(matches!(run_cells(&cfg, Execution::Sequential), Err(Error::Io { .. })));
    }
}
