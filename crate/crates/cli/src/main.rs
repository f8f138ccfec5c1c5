use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use geodash::crowd::{synthesize, write_samples_csv, Polyline, RouteGeometry, DEFAULT_BIN_M};
use geodash::harness::{analyze_route, parse_bucket, parse_seeds, run_matrix, ExperimentConfig, RouteSpec};
use geodash::{Algorithm, RouteProfile, TimeBucket};

#[derive(Parser)]
#[command(name = "geodash", version, about = "Geo-predictive DASH adaptation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every algorithm on every (route, seed) pair and write logs and summaries.
    Simulate(SimulateArgs),
    /// Summarize a crowd sample CSV: per-bin profile, PMF, time-of-day means.
    Analyze(AnalyzeArgs),
    /// Write a synthetic crowd sample CSV.
    Synth(SynthArgs),
}

#[derive(clap::Args)]
struct SimulateArgs {
    /// Manifest JSON; the built-in ten-rung ladder when omitted.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// i110-synth, i405-synth or csv:<path>; comma-separated for several.
    #[arg(long)]
    route: String,
    /// Comma-separated algorithm names or `all`.
    #[arg(long, default_value = "all")]
    algorithms: String,
    /// Seed list: `a..b` (inclusive), single values, or a comma list.
    #[arg(long, default_value = "1")]
    seeds: String,
    #[arg(long, default_value_t = 30.0)]
    buffer_max: f64,
    #[arg(long, default_value_t = 250.0)]
    radius: f64,
    /// Vehicle speed in m/s.
    #[arg(long, default_value_t = 25.0)]
    speed: f64,
    /// Content length in seconds.
    #[arg(long, default_value_t = 400.0)]
    session: f64,
    /// Look-ahead windows averaged by n-predict.
    #[arg(long, default_value_t = 5)]
    n: usize,
    /// none, 0309, 0915, 1521 or 2103.
    #[arg(long, default_value = "none")]
    bucket: String,
    /// Log-space noise of synthetic crowd samples.
    #[arg(long)]
    noise: Option<f64>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct AnalyzeArgs {
    #[arg(long)]
    samples: PathBuf,
    /// Bin width in meters.
    #[arg(long, default_value_t = DEFAULT_BIN_M)]
    bin: f64,
    /// Route polyline CSV (`lat,lon`) for lat/lon samples.
    #[arg(long)]
    polyline: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct SynthArgs {
    /// i110 or i405.
    #[arg(long)]
    profile: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let bucket: Option<TimeBucket> = parse_bucket(&args.bucket)?;
    let cfg = ExperimentConfig {
        manifest_path: args.manifest,
        routes: RouteSpec::parse_list(&args.route)?,
        algorithms: Algorithm::parse_list(&args.algorithms)?,
        seeds: parse_seeds(&args.seeds)?,
        buffer_max_s: args.buffer_max,
        radius_m: args.radius,
        speed_mps: args.speed,
        session_s: args.session,
        n: args.n,
        noise: args.noise,
        floor_bps: None,
        bucket,
        out_dir: Some(args.out.clone()),
        jobs: args.jobs,
    };
    let out = run_matrix(&cfg)?;
    println!("{:<10} {:>8} {:>7} {:>9} {:>9} {:>9}", "algorithm", "sessions", "emos", "switches", "stalls", "kbps");
    for row in &out.aggregate {
        println!(
            "{:<10} {:>8} {:>7.3} {:>9.1} {:>9.2} {:>9.1}",
            row.algorithm, row.sessions, row.emos, row.switches, row.rebuffer_count, row.mean_kbps
        );
    }
    println!("wrote {} sessions to {}", out.cells.len(), args.out.display());
    Ok(())
}

fn analyze(args: AnalyzeArgs) -> Result<()> {
    let geometry = match &args.polyline {
        Some(path) => RouteGeometry::polyline(Polyline::from_csv(path)?),
        None => RouteGeometry::Chainage {
            length_m: f64::INFINITY,
        },
    };
    let a = analyze_route(&args.samples, &geometry, args.bin, &args.out)?;
    let s = &a.summary;
    println!(
        "{} samples ({} off route, {} malformed): median {:.3} Mb/s, mean {:.3} Mb/s, std {:.3} Mb/s",
        s.samples,
        s.off_route,
        s.malformed,
        s.median_bps / 1e6,
        s.mean_bps / 1e6,
        s.std_bps / 1e6
    );
    for (code, mean) in &s.bucket_mean_bps {
        match mean {
            Some(m) => println!("  {code}: {:.3} Mb/s", m / 1e6),
            None => println!("  {code}: no samples"),
        }
    }
    Ok(())
}

fn synth(args: SynthArgs) -> Result<()> {
    let mut profile = RouteProfile::by_name(&args.profile)
        .with_context(|| format!("unknown profile `{}` (expected i110 or i405)", args.profile))?;
    if let Some(noise) = args.noise {
        profile.noise = noise;
    }
    let route = synthesize(&profile, args.seed)?;
    write_samples_csv(&args.out, &route.samples)?;
    println!(
        "wrote {} samples over {:.1} km to {}",
        route.samples.len(),
        profile.length_m / 1e3,
        args.out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Analyze(a) => analyze(a),
        Command::Synth(a) => synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let usage = matches!(
                e.downcast_ref::<geodash::Error>(),
                Some(geodash::Error::UnknownAlgorithm(_) | geodash::Error::Config(_))
            );
            ExitCode::from(if usage { 2 } else { 1 })
        }
    }
}
