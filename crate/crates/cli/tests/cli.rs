//! End-to-end tests of the `spikesnr` binary: flag handling, reference
//! checks, reproducibility of the output trees, and the spike-CSV round
//! trip. The long-running plasticity experiment is exercised by the library
//! test suites, not here.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use spikesnr::SpikeStream;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spikesnr"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "expected success, got {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn assert_failure(out: &Output) -> String {
    assert!(
        !out.status.success(),
        "expected failure, got success\nstdout: {}",
        String::from_utf8_lossy(&out.stdout)
    );
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Files directly inside `dir`, sorted by name.
fn files_sorted(dir: &Path) -> Vec<PathBuf> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .expect("directory listing")
        .map(|e| e.expect("directory entry").path())
        .collect();
    files.sort();
    files
}

fn assert_identical_trees(a: &Path, b: &Path) {
    let left = files_sorted(a);
    let right = files_sorted(b);
    let names = |v: &[PathBuf]| -> Vec<String> {
        v.iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect()
    };
    assert_eq!(names(&left), names(&right), "different file sets");
    for (l, r) in left.iter().zip(&right) {
        assert_eq!(
            fs::read(l).unwrap(),
            fs::read(r).unwrap(),
            "{} differs between reruns",
            l.file_name().unwrap().to_string_lossy()
        );
    }
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    for root in ["a", "b"] {
        let out = tmp.path().join(root);
        for args in [
            vec!["table1-theory", "--check"],
            vec!["fig2-averaging", "--check"],
            vec!["fig4-maps"],
        ] {
            let mut full = args.clone();
            let out_s = out.to_str().unwrap().to_owned();
            full.extend(["--out", &out_s]);
            assert_success(&run(&full));
        }
    }
    for exp in ["table1-theory", "fig2-averaging", "fig4-maps"] {
        assert_identical_trees(
            &tmp.path().join("a").join(format!("{exp}_42_desk")),
            &tmp.path().join("b").join(format!("{exp}_42_desk")),
        );
    }
}

#[test]
fn reference_checks_pass() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    for cmd in ["table1-theory", "fig5-psweep", "fig4-maps", "fig2-averaging"] {
        let result = run(&[cmd, "--check", "--out", out]);
        assert_success(&result);
        let stdout = String::from_utf8_lossy(&result.stdout);
        assert!(stdout.contains(": pass"), "{cmd} printed no check line: {stdout}");
        assert!(!stdout.contains("FAIL"), "{cmd} reported a failure: {stdout}");
    }
}

#[test]
fn summary_declares_reduced_desk_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    assert_success(&run(&["fig2-averaging", "--out", out]));
    let text =
        fs::read_to_string(tmp.path().join("fig2-averaging_42_desk/summary.json")).unwrap();
    let summary: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(summary["schema_version"], 1);
    assert_eq!(summary["scale"], "desk");
    assert_eq!(summary["seed"], 42);
    assert_eq!(summary["realizations"], 10_000);
}

#[test]
fn validation_writes_records_and_a_time_ordered_trace() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    assert_success(&run(&[
        "fig3-validation",
        "--P",
        "1",
        "--check",
        "--dump-trace",
        "--out",
        out,
    ]));
    let dir = tmp.path().join("fig3-validation_42_desk");

    let trials = fs::read_to_string(dir.join("trials.jsonl")).unwrap();
    let lines: Vec<&str> = trials.lines().collect();
    assert_eq!(lines.len(), 10, "one record per trial");
    for line in &lines {
        let record: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(record["empirical_snr"]["snr"].as_f64().unwrap() > 0.0);
        assert!(record["analytic_snr"].as_f64().unwrap() > 0.0);
    }

    let trace = fs::read_to_string(dir.join("trace_p1.csv")).unwrap();
    let mut prev = f64::NEG_INFINITY;
    let mut rows = 0;
    for line in trace.lines().skip(1) {
        let (time, v) = line.split_once(',').unwrap();
        let time: f64 = time.parse().unwrap();
        assert!(v.parse::<f64>().unwrap().is_finite());
        assert!(time >= prev, "trace times must not decrease");
        prev = time;
        rows += 1;
    }
    assert!(rows > 1000, "trace should cover several presentations, got {rows} rows");
}

#[test]
fn unknown_subcommand_is_rejected() {
    let out = run(&["does-not-exist"]);
    let stderr = assert_failure(&out);
    assert!(stderr.contains("unrecognized subcommand"), "{stderr}");
}

#[test]
fn unsupported_override_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&[
        "fig5-psweep",
        "--theta0",
        "5",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    let stderr = assert_failure(&out);
    assert!(stderr.contains("--theta0"), "{stderr}");
}

#[test]
fn check_refuses_parameter_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&[
        "table1-theory",
        "--check",
        "--P",
        "3",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    let stderr = assert_failure(&out);
    assert!(stderr.contains("--check"), "{stderr}");
}

#[test]
fn generated_pattern_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let first = tmp.path().join("one.csv");
    let second = tmp.path().join("two.csv");
    for path in [&first, &second] {
        assert_success(&run(&[
            "gen-pattern",
            "--N",
            "50",
            "--f-hz",
            "10",
            "--len-ms",
            "50",
            "--seed",
            "7",
            "--out",
            path.to_str().unwrap(),
        ]));
    }
    assert_eq!(
        fs::read(&first).unwrap(),
        fs::read(&second).unwrap(),
        "same seed must reproduce the same pattern file"
    );

    let stream = SpikeStream::read_csv(fs::File::open(&first).unwrap(), 50, 0.050).unwrap();
    assert!(stream.len() > 0, "pattern should contain spikes");
    let header_and_rows = fs::read_to_string(&first).unwrap().lines().count();
    assert_eq!(stream.len(), header_and_rows - 1);
    assert!(stream.events().iter().all(|e| e.afferent < 50));
}
