use std::path::Path;
use std::process::{Command, Output};

use flevr::data::write_csv;
use flevr::sim::{gen_scenario, ScenarioSpec};

fn flevr(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flevr"))
        .args(args)
        .current_dir(dir)
        .env_remove("FLEVR_SEED")
        .output()
        .unwrap()
}

fn scenario_csv(dir: &Path, missing: f64) -> String {
    let spec = ScenarioSpec::preset(6, 6, missing).unwrap();
    let (d, _) = gen_scenario(&spec, 300, 4).unwrap();
    let path = dir.join(if missing > 0.0 { "miss.csv" } else { "d.csv" });
    write_csv(&d, &path, "NA").unwrap();
    path.file_name().unwrap().to_str().unwrap().to_string()
}

#[test]
fn select_writes_reproducible_json() {
    let dir = tempfile::tempdir().unwrap();
    let input = scenario_csv(dir.path(), 0.0);
    let args = |out: &'static str| {
        vec!["select", "--input", &input, "--outcome", "y", "--alpha", "0.05", "--mode", "gfwer", "--k", "2", "--seed", "7", "--output", out]
            .into_iter()
            .map(String::from)
            .collect::<Vec<_>>()
    };
    let a = args("a.json");
    let run = flevr(&a.iter().map(String::as_str).collect::<Vec<_>>(), dir.path());
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(String::from_utf8_lossy(&run.stdout).contains("selected"));
    let b = args("b.json");
    assert!(flevr(&b.iter().map(String::as_str).collect::<Vec<_>>(), dir.path()).status.success());

    let ja = std::fs::read_to_string(dir.path().join("a.json")).unwrap();
    assert_eq!(ja, std::fs::read_to_string(dir.path().join("b.json")).unwrap());
    let v: serde_json::Value = serde_json::from_str(&ja).unwrap();
    assert_eq!(v["seed"], 7);
    assert_eq!(v["k_used"], 2);
    assert_eq!(v["features"][0]["index"], 1);
    assert!(v["final_set"].as_array().unwrap().iter().all(|j| (1..=6).contains(&j.as_u64().unwrap())));
}

#[test]
fn seed_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let input = scenario_csv(dir.path(), 0.0);
    let out = Command::new(env!("CARGO_BIN_EXE_flevr"))
        .args(["select", "--input", &input, "--outcome", "y", "--k", "0", "--output", "r.json"])
        .current_dir(dir.path())
        .env("FLEVR_SEED", "13")
        .output()
        .unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(v["seed"], 13);
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let input = scenario_csv(dir.path(), 0.0);
    for (t, out) in [("1", "t1.json"), ("3", "t3.json")] {
        let r = flevr(
            &["--threads", t, "spvim", "--input", &input, "--outcome", "y", "--seed", "2", "--output", out],
            dir.path(),
        );
        assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    }
    assert_eq!(
        std::fs::read_to_string(dir.path().join("t1.json")).unwrap(),
        std::fs::read_to_string(dir.path().join("t3.json")).unwrap()
    );
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let input = scenario_csv(dir.path(), 0.0);
    let missing_outcome = flevr(&["select", "--input", &input, "--k", "1", "--output", "x.json"], dir.path());
    assert_eq!(missing_outcome.status.code(), Some(2));
    let bad_alpha = flevr(
        &["select", "--input", &input, "--outcome", "y", "--alpha", "1.5", "--k", "1", "--output", "x.json"],
        dir.path(),
    );
    assert_eq!(bad_alpha.status.code(), Some(2));
    let no_k = flevr(&["select", "--input", &input, "--outcome", "y", "--output", "x.json"], dir.path());
    assert_eq!(no_k.status.code(), Some(2));
    let absent_column = flevr(&["select", "--input", &input, "--outcome", "zz", "--k", "1", "--output", "x.json"], dir.path());
    assert_eq!(absent_column.status.code(), Some(2));
    assert!(!String::from_utf8_lossy(&absent_column.stderr).is_empty());
    let bad_scenario = flevr(&["simulate", "--scenario", "9", "--n", "100", "--replicates", "1", "--mode", "gfwer", "--k", "1", "--output", "sim"], dir.path());
    assert_eq!(bad_scenario.status.code(), Some(2));
    assert!(!dir.path().join("x.json").exists());
}

#[test]
fn runtime_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let r = flevr(&["select", "--input", "absent.csv", "--outcome", "y", "--k", "1", "--output", "x.json"], dir.path());
    assert_eq!(r.status.code(), Some(1));
}

#[test]
fn help_exits_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let r = flevr(&["--help"], dir.path());
    assert_eq!(r.status.code(), Some(0));
    let text = String::from_utf8_lossy(&r.stdout);
    for cmd in ["select", "spvim", "impute", "simulate"] {
        assert!(text.contains(cmd));
    }
}

#[test]
fn simulate_writes_one_row_per_replicate() {
    let dir = tempfile::tempdir().unwrap();
    let r = flevr(
        &["simulate", "--scenario", "1", "--p", "8", "--n", "200", "--replicates", "2", "--mode", "gfwer", "--k", "1", "--no-evaluate", "--output", "sim"],
        dir.path(),
    );
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let rows = std::fs::read_to_string(dir.path().join("sim/replicates.csv")).unwrap();
    assert_eq!(rows.lines().count(), 3);
    for f in ["aggregate.csv", "selection_probs.csv", "config.json"] {
        assert!(dir.path().join("sim").join(f).exists());
    }
    let entries: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(entries, vec![std::ffi::OsString::from("sim")]);
}

#[test]
fn impute_writes_manifest_and_files() {
    let dir = tempfile::tempdir().unwrap();
    let input = scenario_csv(dir.path(), 0.3);
    let r = flevr(
        &["impute", "--input", &input, "--outcome", "y", "-M", "3", "--iterations", "4", "--seed", "1", "--output", "imp"],
        dir.path(),
    );
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("imp/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["m"], 3);
    for i in 1..=3 {
        let text = std::fs::read_to_string(dir.path().join(format!("imp/imputation_{i}.csv"))).unwrap();
        assert!(!text.contains("NA"));
    }
}
