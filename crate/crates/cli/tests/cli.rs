use std::process::{Command, Output};

use countdown_core::{Rational, Scalar};
use serde_json::Value;

fn countdown(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_countdown"))
        .args(args)
        .env_remove("COUNTDOWN_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn json(args: &[&str]) -> Value {
    let mut all = args.to_vec();
    all.extend(["--format", "json"]);
    let out = countdown(&all);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_str(&stdout(&out)).unwrap()
}

fn rational(v: &Value) -> Rational {
    Rational::parse(v.as_str().unwrap()).unwrap()
}

#[test]
fn figure_trajectory_points() {
    let out = countdown(&["trajectory", "--z", "1,3,0,2", "--window", "-6:8", "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0));
    let heights = [6, 5, 4, 4, 4, 3, 2, 2, 2, 2, 1, 1, 0, 0, 0];
    let mut expected = String::from("t,x\n");
    for (i, h) in heights.iter().enumerate() {
        expected.push_str(&format!("{},{h}\n", i as i64 - 6));
    }
    assert_eq!(stdout(&out), expected);
}

#[test]
fn trajectory_json_reports_deaths() {
    let v = json(&["trajectory", "--z", "1,3,0,2"]);
    assert_eq!(v["hittingTime"], 6);
    assert_eq!(v["deathTimes"], serde_json::json!([5, 3, -1, -2]));
}

#[test]
fn golden_ratio_critical_point() {
    let v = json(&["critical-x", "--k", "1"]);
    let x = v[0]["x"].as_f64().unwrap();
    assert!((x - 0.618_033_988_749_895).abs() < 1e-12);
}

#[test]
fn fg_row_is_ordered() {
    let v = json(&["fg-compare", "--q", "2", "--n", "4", "--m", "0"]);
    let row = &v["rows"][0];
    let (lo, exact, new, hi) = (
        rational(&row["fgLower"]),
        rational(&row["exact"]),
        rational(&row["newUpper"]),
        rational(&row["fgUpper"]),
    );
    assert!(lo < exact && exact < new && new < hi);
    assert_eq!(row["holds"], true);
}

#[test]
fn exact_backend_from_fraction_literal() {
    let v = json(&["dist", "corank", "--x", "1/3", "--n", "4", "--t", "-2"]);
    assert_eq!(v["backend"], "exact");
    let total = v["pmf"]["probs"]
        .as_array()
        .unwrap()
        .iter()
        .fold(<Rational as Scalar>::zero(), |acc, p| acc + rational(p));
    assert_eq!(total, <Rational as Scalar>::one());
    assert!(v.get("errBounds").is_none());

    let v = json(&["dist", "corank", "--x", "0.25", "--n", "inf", "--t", "1"]);
    assert_eq!(v["backend"], "float");
    assert!(v["errBounds"].as_array().unwrap().iter().all(|e| e.as_f64().unwrap() < 1e-12));
}

#[test]
fn tv_report_carries_backend_and_interval() {
    let v = json(&["tv", "corank", "--x", "1/2", "--n", "3", "--t", "2"]);
    assert_eq!(v["report"]["backend"], "exact");
    assert_eq!(v["report"]["status"], "closed-form");
    assert_eq!(v["sandwichHolds"], true);
    let v = json(&["tv", "corank", "--x", "0.8", "--n", "4", "--t", "1"]);
    assert_eq!(v["report"]["status"], "closed-form-not-established");
    assert!(v["report"]["exact"].is_null());
}

#[test]
fn rank_counts_agree_with_enumeration() {
    let v = json(&["rank-counts", "--q", "4", "--rows", "2", "--cols", "2", "--enumerate"]);
    assert_eq!(v["agrees"], true);
    assert_eq!(v["enumerated"], serde_json::json!([1, 75, 180]));
}

#[test]
fn exit_codes() {
    assert_eq!(countdown(&["dist", "corank", "--x", "3/2", "--n", "2"]).status.code(), Some(2));
    assert_eq!(
        countdown(&["dist", "corank", "--x", "0.5", "--n", "2", "--backend", "exact"]).status.code(),
        Some(2)
    );
    assert_eq!(countdown(&["trajectory", "--z", "1,2", "--window", "4"]).status.code(), Some(2));
    assert_eq!(countdown(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(countdown(&["verify", "--suite", "critical-points"]).status.code(), Some(0));
    let out = countdown(&["verify", "--suite", "factor-two", "--format", "json"]);
    assert_eq!(out.status.code(), Some(1));
    let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["criteria"][0]["failures"].as_array().unwrap().len(), 39);
}

#[test]
fn verify_logs_seed() {
    let out = countdown(&["verify", "--suite", "rn-tail", "--seed", "77"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed: 77"));
    assert!(stdout(&out).contains("PASS"));
}

#[test]
fn simulate_is_independent_of_thread_count() {
    let args = [
        "simulate", "--kind", "mc-corank", "--param", "x=0.3", "--param", "n=5", "--param", "t=-1",
        "--samples", "40000", "--seed", "5", "--format", "json",
    ];
    let run = |threads: &str| {
        let out = Command::new(env!("CARGO_BIN_EXE_countdown"))
            .args(args)
            .env("COUNTDOWN_THREADS", threads)
            .output()
            .unwrap();
        assert!(out.status.success());
        String::from_utf8(out.stdout).unwrap()
    };
    assert_eq!(run("1"), run("4"));
}

#[test]
fn simulate_reads_spec_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("specs.json");
    std::fs::write(
        &path,
        r#"[{"kind": "oracle-pmf", "params": {"x": "1/3", "n": 3, "t": 1, "zCap": 25}},
            {"kind": "mc-hitting", "params": {"x": "0.5", "n": 6}, "samples": 50000, "seed": 3}]"#,
    )
    .unwrap();
    let v = json(&["simulate", "--spec", path.to_str().unwrap()]);
    assert_eq!(v["pass"], true);
    assert_eq!(v["reports"].as_array().unwrap().len(), 2);
    assert!(v["reports"][0]["maxAbsDev"].as_f64().unwrap() < 1e-9);

    std::fs::write(&path, r#"{"kind": "mc-matrix", "bogus": 1}"#).unwrap();
    assert_eq!(countdown(&["simulate", "--spec", path.to_str().unwrap()]).status.code(), Some(2));
}
