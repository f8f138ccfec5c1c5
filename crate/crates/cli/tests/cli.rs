use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn geodash(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_geodash"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn count_files(dir: &Path, ext: &str) -> usize {
    fs::read_dir(dir)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == ext))
        .count()
}

#[test]
fn simulate_writes_one_file_pair_per_cell_and_an_aggregate_row_per_algorithm() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = geodash(&[
        "simulate",
        "--route",
        "i405-synth",
        "--algorithms",
        "gpal,maxbw",
        "--seeds",
        "1..4",
        "--session",
        "60",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(count_files(&out.join("sessions"), "csv"), 8);
    assert_eq!(count_files(&out.join("sessions"), "json"), 8);
    assert_eq!(count_files(&out.join("plots"), "csv"), 8);

    let agg = fs::read_to_string(out.join("aggregate.csv")).unwrap();
    let lines: Vec<&str> = agg.lines().collect();
    assert_eq!(lines[0], "algorithm,sessions,emos,switches,rebuffer_count,rebuffer_s,mean_kbps");
    assert_eq!(lines.len(), 3);

    // aggregate eMOS is the mean of the per-seed summaries
    for line in &lines[1..] {
        let cols: Vec<&str> = line.split(',').collect();
        let alg = cols[0];
        let emos: f64 = cols[2].parse().unwrap();
        let per_seed: Vec<f64> = (1..=4)
            .map(|seed| {
                let text = fs::read_to_string(out.join("sessions").join(format!("{alg}_i405-synth_{seed}.json"))).unwrap();
                let v: serde_json::Value = serde_json::from_str(&text).unwrap();
                for key in ["algorithm", "route", "seed", "emos", "switches", "rebuffer_count", "rebuffer_s", "mean_kbps", "segments"] {
                    assert!(v.get(key).is_some(), "summary lacks {key}");
                }
                v["emos"].as_f64().unwrap()
            })
            .collect();
        let mean = per_seed.iter().sum::<f64>() / per_seed.len() as f64;
        assert!((emos - mean).abs() < 1e-12, "{alg}: {emos} vs {mean}");
    }

    let log = fs::read_to_string(out.join("sessions/gpal_i405-synth_1.csv")).unwrap();
    assert!(log.starts_with(
        "index,rep_id,kbps,dl_start_s,dl_end_s,throughput_bps,buffer_after_s,estimate_bps,estimate_source,reason\n"
    ));
    assert_eq!(log.lines().count(), 31);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = geodash(&[
            "simulate", "--route", "i110-synth", "--algorithms", "all", "--seeds", "2", "--session", "40",
            "--out", out.to_str().unwrap(),
        ]);
        assert!(o.status.success());
        fs::read(out.join("aggregate.csv")).unwrap()
    };
    let a = run("a");
    assert_eq!(a, run("b"));
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 8);
}

#[test]
fn synth_then_analyze_then_simulate_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("i110.csv");
    let o = geodash(&["synth", "--profile", "i110", "--seed", "5", "--out", csv.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let report = dir.path().join("report");
    let o = geodash(&["analyze", "--samples", csv.to_str().unwrap(), "--out", report.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["bins.csv", "pmf.csv", "buckets.csv", "summary.json", "crowd_map.json"] {
        assert!(report.join(f).exists(), "missing {f}");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(report.join("summary.json")).unwrap()).unwrap();
    let median = summary["median_bps"].as_f64().unwrap();
    let mean = summary["mean_bps"].as_f64().unwrap();
    assert!((median / 0.86e6 - 1.0).abs() <= 0.15, "median {median}");
    assert!((mean / 1.585e6 - 1.0).abs() <= 0.10, "mean {mean}");
    let buckets = fs::read_to_string(report.join("buckets.csv")).unwrap();
    assert_eq!(buckets.lines().count(), 5);

    let out = dir.path().join("sim");
    let route = format!("csv:{}", csv.display());
    let o = geodash(&[
        "simulate", "--route", &route, "--algorithms", "gpal", "--session", "40", "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("sessions/gpal_csv-i110_1.json").exists());
}

#[test]
fn errors_exit_nonzero_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();

    let o = geodash(&["simulate", "--route", "i110-synth", "--algorithms", "bola", "--out", out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown algorithm `bola`"));

    let o = geodash(&["simulate", "--route", "csv:/does/not/exist.csv", "--out", out]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("exist.csv"));

    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "").unwrap();
    let o = geodash(&["analyze", "--samples", empty.to_str().unwrap(), "--out", out]);
    assert!(!o.status.success());

    let o = geodash(&["synth", "--profile", "i5", "--out", out]);
    assert!(!o.status.success());
}
