use std::path::Path;
use std::process::{Command, Output};

use sinkpit::signal::Waveform;
use sinkpit::wav::{save_waveform, AudioFormat};

fn sinkpit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sinkpit"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_str(&stdout(out)).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

const SIX: &str = "\
0.31,-1.20,0.77,1.05,-0.44,0.12
-0.92,0.58,1.33,-0.07,0.66,-1.48
1.12,0.24,-0.35,-1.71,0.93,0.40
-0.15,1.61,0.09,0.52,-1.26,0.87
0.70,-0.63,-1.05,0.28,1.44,-0.21
-1.37,0.95,0.46,-0.82,0.18,1.09
";

#[test]
fn two_by_two_all_methods_agree_on_identity() {
    let dir = tempfile::tempdir().unwrap();
    let c = write(dir.path(), "c.csv", "0,1\n1,0\n");
    let text = stdout(&sinkpit(&["solve", &c, "--all"]));
    assert!(
        text.contains("brute_force  loss 0.000000000  total 0.000000000  permutation (1 2)"),
        "{text}"
    );
    assert!(text.contains("agreement: all permutations agree"));

    let v = json(&sinkpit(&["solve", &c, "--all", "--format", "json"]));
    assert_eq!(v["agreement"], true);
    let results = v["results"].as_array().unwrap();
    let names: Vec<&str> = results.iter().map(|r| r["method"].as_str().unwrap()).collect();
    assert_eq!(names, ["brute_force", "hungarian", "sinkpit", "probpit"]);
    assert_eq!(results[0]["loss"], 0.0);
    assert_eq!(results[2]["permutation"], serde_json::json!([1, 2]));
    assert_eq!(results[2]["plan"]["row_sums"].as_array().unwrap().len(), 2);
}

#[test]
fn exact_methods_agree_and_cold_sinkpit_rounds_to_them() {
    let dir = tempfile::tempdir().unwrap();
    let c = write(dir.path(), "c.csv", SIX);
    let get = |method: &str, extra: &[&str]| {
        let mut args = vec!["solve", c.as_str(), "--method", method, "--format", "json"];
        args.extend_from_slice(extra);
        json(&sinkpit(&args))["results"][0].clone()
    };
    let brute = get("brute", &[]);
    let hung = get("hungarian", &[]);
    assert_eq!(brute["total_cost"], hung["total_cost"]);
    assert_eq!(brute["permutation"], hung["permutation"]);
    let cold = get("sinkpit", &["--beta", "100", "--iterations", "2000"]);
    assert_eq!(cold["permutation"], brute["permutation"]);
}

#[test]
fn csv_report_has_one_row_per_method() {
    let dir = tempfile::tempdir().unwrap();
    let c = write(dir.path(), "c.csv", SIX);
    let text = stdout(&sinkpit(&["solve", &c, "--all", "--format", "csv", "--gamma", "0.5"]));
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "method,loss,total_cost,permutation,max_deviation");
    assert_eq!(lines.len(), 5);
    assert!(lines[4].starts_with("probpit,"));
}

#[test]
fn solve_from_audio_files() {
    let dir = tempfile::tempdir().unwrap();
    let tone = |f: f64| Waveform::new((0..800).map(|t| 0.5 * (t as f64 * f).sin()).collect(), 8000).unwrap();
    let names = ["s1.wav", "s2.wav", "e1.f64", "e2.f64"];
    for (name, w) in names.iter().zip([tone(0.05), tone(0.13), tone(0.13), tone(0.05)]) {
        let path = dir.path().join(name);
        save_waveform(&w, &path, AudioFormat::from_path(&path)).unwrap();
    }
    let p = |k: usize| dir.path().join(names[k]).to_str().unwrap().to_owned();
    let v = json(&sinkpit(&[
        "solve",
        "--sources",
        &p(0),
        &p(1),
        "--estimates",
        &p(2),
        &p(3),
        "--format",
        "json",
    ]));
    assert_eq!(v["results"][0]["permutation"], serde_json::json!([2, 1]));
}

#[test]
fn schedule_starts_at_one_and_caps_at_ten() {
    let text = stdout(&sinkpit(&["schedule", "--epochs", "150", "--format", "csv"]));
    let rows: Vec<(usize, f64)> = text
        .lines()
        .skip(1)
        .map(|l| {
            let (e, b) = l.split_once(',').unwrap();
            (e.parse().unwrap(), b.parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 150);
    assert_eq!(rows[0], (0, 1.0));
    assert_eq!(rows[117], (117, 10.0));
    assert!(rows[116].1 < 10.0);
    assert!(rows.windows(2).all(|w| w[1].1 >= w[0].1));
    assert!(stdout(&sinkpit(&["schedule", "--epochs", "1"])).contains("     0  1.0"));
}

#[test]
fn bench_writes_sorted_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bench.csv");
    let out_s = out.to_str().unwrap();
    stdout(&sinkpit(&[
        "bench",
        "--n-min",
        "2",
        "--n-max",
        "3",
        "--trials",
        "2",
        "--deterministic",
        "--out",
        out_s,
    ]));
    let text = std::fs::read_to_string(&out).unwrap();
    let keys: Vec<(String, usize)> = text
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_owned(), f[1].parse().unwrap())
        })
        .collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
    assert_eq!(keys.len(), 6);
    assert!(text.starts_with("method,n,trials,mean_seconds,std_seconds\n"));
}

#[test]
fn demo_writes_matrix_and_report_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, extra: &[&str]| {
        let out = dir.path().join(name);
        let mut args = vec![
            "demo-demix",
            "--epochs",
            "30",
            "--out",
            out.to_str().unwrap(),
            "--format",
            "json",
        ];
        args.extend_from_slice(extra);
        let summary = json(&sinkpit(&args));
        let report: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
        let w = std::fs::read_to_string(out.join("w.csv")).unwrap();
        (summary, report, w)
    };
    let (summary, report, w) = run("a", &["--deterministic"]);
    assert_eq!(summary["epochs"], 30);
    assert_eq!(report["report"]["state"]["loss_history"].as_array().unwrap().len(), 30);
    assert_eq!(w.lines().count(), 4);
    let (_, again, w2) = run("b", &["--deterministic"]);
    assert_eq!(
        report["report"]["state"]["loss_history"],
        again["report"]["state"]["loss_history"]
    );
    assert_eq!(w, w2);
    let (_, threaded, _) = run("c", &["--threads", "4"]);
    assert_eq!(
        report["report"]["state"]["loss_history"],
        threaded["report"]["state"]["loss_history"]
    );
}

#[test]
fn config_file_mirrors_flags_and_yields_to_them() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "cfg.json",
        r#"{"epochs": 3, "format": "csv", "beta": 1.01}"#,
    );
    let text = stdout(&sinkpit(&["--config", &cfg, "schedule"]));
    assert_eq!(text, "epoch,beta\n0,1.0\n1,1.01\n2,1.01\n");
    let text = stdout(&sinkpit(&[
        "--config", &cfg, "schedule", "--epochs", "2", "--beta", "5",
    ]));
    assert_eq!(text, "epoch,beta\n0,1.0\n1,1.02\n");
}

#[test]
fn exit_codes_classify_failures() {
    let dir = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| sinkpit(args).status.code().unwrap();
    let good = write(dir.path(), "good.csv", "0,1\n1,0\n");
    let ragged = write(dir.path(), "ragged.csv", "0,1\n1\n");
    let huge = write(dir.path(), "huge.csv", "0,1e300\n-1e300,0\n");
    let bad_cfg = write(dir.path(), "bad.json", r#"{"unknown": 1}"#);

    assert_eq!(code(&["solve", &good, "--method", "magic"]), 2);
    assert_eq!(code(&["solve", &good, "--beta", "-1", "--method", "sinkpit"]), 2);
    assert_eq!(code(&["schedule", "--epochs", "0"]), 2);
    assert_eq!(code(&["--config", &bad_cfg, "schedule"]), 2);
    assert_eq!(code(&["frobnicate"]), 2);
    assert_eq!(code(&["solve", &ragged]), 3);
    assert_eq!(code(&["solve", dir.path().join("missing.csv").to_str().unwrap()]), 3);
    assert_eq!(
        code(&["demo-demix", "--n", "9", "--out", dir.path().to_str().unwrap()]),
        2
    );
    assert_eq!(code(&["solve", &huge, "--method", "sinkpit", "--beta", "1e10"]), 4);
}

#[test]
fn failures_leave_no_output_files() {
    let dir = tempfile::tempdir().unwrap();
    let bench_out = dir.path().join("bench.csv");
    let out = sinkpit(&[
        "bench",
        "--n-min",
        "13",
        "--n-max",
        "13",
        "--trials",
        "1",
        "--out",
        bench_out.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    let missing_dir = dir.path().join("nope").join("x.csv");
    let good = write(dir.path(), "good.csv", "0,1\n1,0\n");
    assert_eq!(
        sinkpit(&["solve", &good, "--out", missing_dir.to_str().unwrap()])
            .status
            .code(),
        Some(3)
    );
    let demo_out = dir.path().join("demo");
    let out = sinkpit(&["demo-demix", "--lr", "0", "--out", demo_out.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!demo_out.exists());
    let left: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    assert_eq!(left, vec![std::ffi::OsString::from("good.csv")]);
}
