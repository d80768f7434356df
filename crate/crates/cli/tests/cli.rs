use std::path::Path;
use std::process::{Command, Output};

fn evstream(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evstream")).current_dir(dir).args(args).output().unwrap()
}

fn json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn generate_stats_reduce() {
    let d = tempfile::tempdir().unwrap();
    let g =
        json(&evstream(d.path(), &["generate", "--out", "s.evst", "--duration", "1", "--profile", "constant:1000"]));
    assert_eq!(g["events"], 20_000);
    let s = json(&evstream(d.path(), &["stats", "--in", "s.evst"]));
    assert_eq!(s["windows"], 20);
    assert_eq!(s["max_events_per_window"], 1_000);

    let r = json(&evstream(
        d.path(),
        &["reduce", "--bandwidth", "1", "--mode", "tail", "--in", "s.evst", "--out", "r.evst", "--stats", "r.csv"],
    ));
    assert_eq!(r["kept_events"], 390 * 20);
    let csv = std::fs::read_to_string(d.path().join("r.csv")).unwrap();
    assert_eq!(csv.lines().nth(1), Some("0,1000,390"));
    let s = json(&evstream(d.path(), &["stats", "--in", "r.evst"]));
    assert_eq!(s["events"], 7_800);
}

#[test]
fn simulate_is_deterministic_and_honours_config_file() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("run.toml"), "tracks = 4\nevents_per_track = 300\nduration_s = 2.0\nseed = 5\n")
        .unwrap();
    for out in ["a", "b"] {
        json(&evstream(d.path(), &["simulate", "--config", "run.toml", "--bandwidth", "2", "--out", out]));
    }
    let a = std::fs::read(d.path().join("a/metrics.csv")).unwrap();
    assert_eq!(a, std::fs::read(d.path().join("b/metrics.csv")).unwrap());
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().count(), 41);
    assert!(text.lines().skip(1).all(|l| l.split(',').nth(4).unwrap().parse::<u16>().unwrap() <= 4));

    let summary = json(&evstream(d.path(), &["stats", "--metrics", "a/metrics.csv"]));
    assert_eq!(summary["windows"], 40);
}

#[test]
fn sweep_prints_a_table() {
    let d = tempfile::tempdir().unwrap();
    let out = evstream(d.path(), &["sweep", "--duration", "0.5", "--bandwidths", "5,1", "--track-counts", "5"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[1].starts_with("1,5,") && rows[2].starts_with("5,5,"));
}

#[test]
fn exit_codes_follow_error_category() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("bad.toml"), "tracks = 0\n").unwrap();
    std::fs::write(d.path().join("junk.evst"), b"NOPE-not-an-event-file").unwrap();
    let code = |args: &[&str]| evstream(d.path(), args).status.code();
    assert_eq!(code(&["simulate", "--config", "bad.toml"]), Some(2));
    assert_eq!(code(&["stats", "--in", "junk.evst"]), Some(3));
    assert_eq!(code(&["stats", "--in", "missing.evst"]), Some(5));
    assert_eq!(code(&["subscribe", "--relay", "127.0.0.1:1"]), Some(5));
}
