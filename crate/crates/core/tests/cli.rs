use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rmtrack::simulate::preset;

fn rmtrack(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rmtrack")).args(args).output().expect("run rmtrack")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn short_scenario(dir: &Path, name: &str, n_frames: u32) -> std::path::PathBuf {
    let mut sc = preset("noiseless").unwrap();
    sc.n_frames = n_frames;
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string_pretty(&sc).unwrap()).unwrap();
    p
}

fn report(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn simulate_same_seed_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = rmtrack(&["simulate", "--preset", "low-visibility", "--out", s(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["gt.jsonl", "detections.jsonl", "gt_tracks.csv"] {
        let (x, y) = (fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap());
        assert!(!x.is_empty());
        assert_eq!(x, y, "{f}");
    }
}

#[test]
fn bad_scenario_schema_exits_2_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.json");
    fs::write(&p, "{\n  \"name\": \"x\",\n  \"seed\": \"not a number\"\n}\n").unwrap();
    let o = rmtrack(&["simulate", s(&p), "--out", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line"));

    let mut sc = preset("noiseless").unwrap();
    sc.noise.miss_prob = 1.5;
    fs::write(&p, serde_json::to_string(&sc).unwrap()).unwrap();
    let o = rmtrack(&["simulate", s(&p), "--out", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("miss_prob"));
}

#[test]
fn usage_and_config_errors_exit_2() {
    assert_eq!(rmtrack(&["simulate", "--preset", "noiseless", "--out", "x", "--bogus"]).status.code(), Some(2));
    assert_eq!(rmtrack(&["simulate", "--preset", "no-such-preset", "--out", "x"]).status.code(), Some(2));
    let o = rmtrack(&["track", "--detections", "d", "--out", "t", "--set", "tracker.no_such_key=1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no_such_key"));
    let o = rmtrack(&["track", "--detections", "d", "--out", "t", "--set", "tracker.gate_iou=2"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn help_lists_config_keys_with_defaults() {
    let o = rmtrack(&["--help"]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    for k in rmtrack::config::RunConfig::documented_keys() {
        assert!(text.contains(&k), "{k}");
    }
}

#[test]
fn noiseless_pipeline_reports_perfect_scores_and_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let sc = short_scenario(dir.path(), "sc.json", 300);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = rmtrack(&["pipeline", "--scenario", s(&sc), "--out", s(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let r = report(&a.join("report.json"));
    let agg = &r["aggregate"];
    for k in ["hota", "det_a", "ass_a", "mota", "idf1"] {
        assert_eq!(agg[k], 1.0, "{k}");
    }
    assert_eq!(agg["assoc_score_pct"], 100.0);
    assert_eq!(agg["plate_accuracy"], 100.0);
    assert_eq!(agg["cer"], 0.0);
    assert_eq!(agg["tickets"]["exact"], agg["tickets"]["gt"]);
    for f in ["report.json", "noiseless/tracks.csv", "noiseless/etickets.json", "noiseless/gt.jsonl"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }

    // the separate commands reproduce the pipeline's artifacts
    let d = a.join("noiseless");
    let tracks = dir.path().join("t.csv");
    assert!(rmtrack(&["track", "--detections", s(&d.join("detections.jsonl")), "--out", s(&tracks)]).status.success());
    assert_eq!(fs::read(&tracks).unwrap(), fs::read(d.join("tracks.csv")).unwrap());
    let rep = dir.path().join("r.json");
    let o = rmtrack(&[
        "evaluate",
        "--gt",
        s(&d.join("gt.jsonl")),
        "--pred",
        s(&tracks),
        "--etickets",
        s(&d.join("etickets.json")),
        "--out",
        s(&rep),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(report(&rep), r);
}

#[test]
fn evaluate_with_mismatched_frames_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let long = short_scenario(dir.path(), "long.json", 60);
    let short = short_scenario(dir.path(), "short.json", 30);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(rmtrack(&["pipeline", "--scenario", s(&long), "--out", s(&a)]).status.success());
    assert!(rmtrack(&["simulate", s(&short), "--out", s(&b)]).status.success());
    let o = rmtrack(&["evaluate", "--gt", s(&b.join("gt.jsonl")), "--pred", s(&a.join("noiseless/tracks.csv"))]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn evaluate_rejects_malformed_tracks_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let sc = short_scenario(dir.path(), "sc.json", 10);
    let a = dir.path().join("a");
    assert!(rmtrack(&["simulate", s(&sc), "--out", s(&a)]).status.success());
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "frame,track_id\n0,1\n").unwrap();
    let o = rmtrack(&["evaluate", "--gt", s(&a.join("gt.jsonl")), "--pred", s(&bad)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn baseline_and_joint_reports_on_occlusion_preset() {
    let dir = tempfile::tempdir().unwrap();
    let (j, b) = (dir.path().join("joint"), dir.path().join("base"));
    assert!(rmtrack(&["pipeline", "--preset", "occlusion-heavy", "--out", s(&j)]).status.success());
    assert!(rmtrack(&["pipeline", "--preset", "occlusion-heavy", "--baseline", "--out", s(&b)]).status.success());
    let (rj, rb) = (report(&j.join("report.json")), report(&b.join("report.json")));
    let idf1 = |r: &serde_json::Value| r["aggregate"]["idf1"].as_f64().unwrap();
    assert!(idf1(&rj) >= idf1(&rb), "joint {} < baseline {}", idf1(&rj), idf1(&rb));
}
