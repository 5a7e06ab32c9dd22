use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use halo_mnl::io::{load_dataset, read_parameter_file};
use halo_mnl::log_likelihood;

fn exe() -> Command {
    Command::new(env!("CARGO_BIN_EXE_halo-mnl"))
}

fn run(args: &[&str]) -> Output {
    exe().args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Simulates one replicate into `dir` and returns (schedule, transactions).
fn simulate(dir: &Path, params: &str, schedule: &str, arrivals: &str, seed: &str) -> (PathBuf, PathBuf) {
    let out = run(&[
        "simulate", "--params", params, "--leading-items", "9", "--schedule", schedule, "--arrivals", arrivals,
        "--seed", seed, "--out", s(dir), "--report", s(&dir.join("sim.json")),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    (dir.join("schedule.csv"), dir.join("transactions_0001.csv"))
}

#[test]
fn check_reports_classification_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let c1 = dir.path().join("c1.csv");
    std::fs::write(&c1, "period_id,a1,a2\n1,1,1\n2,1,1\n3,0,1\n4,0,1\n5,1,0\n6,1,0\n").unwrap();
    let tx = dir.path().join("tx.csv");
    std::fs::write(&tx, "period_id,item_id,count\n1,0,5\n").unwrap();
    let report = dir.path().join("check.json");
    let out = run(&["check", "--schedule", s(&c1), "--transactions", s(&tx), "--report", s(&report)]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("classification: C1"));
    let j = json(&report);
    assert_eq!(j["classification"], "C1");
    assert_eq!(j["identifiable_count"], 4);
    assert_eq!(j["header"]["inputs"].as_array().unwrap().len(), 2);
    assert_eq!(j["header"]["version"], env!("CARGO_PKG_VERSION"));

    let ones = dir.path().join("ones.csv");
    std::fs::write(&ones, "period_id,a1,a2\n1,1,1\n2,1,1\n").unwrap();
    let out = run(&["check", "--schedule", s(&ones), "--transactions", s(&tx), "--report", s(&report)]);
    assert_eq!(out.status.code(), Some(2));
    let j = json(&report);
    assert_eq!(j["classification"], "neither");
    assert!(j["identifiable"]["alpha"].as_array().unwrap().iter().flat_map(|r| r.as_array().unwrap()).all(|b| b == false));

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "period_id,a1,a2\n1,1,1\n2,1\n").unwrap();
    let out = run(&["check", "--schedule", s(&bad), "--transactions", s(&tx)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.csv:3"));
}

#[test]
fn simulate_is_reproducible_per_replicate() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [a.path(), b.path()] {
        let out = run(&[
            "simulate", "--params", "appendix:set1", "--schedule", "c1:n=10,full=2,single=2", "--arrivals", "50",
            "--replicates", "20", "--seed", "42", "--out", s(dir), "--report", s(&dir.join("sim.json")),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let mut contents = Vec::new();
    for r in 1..=20 {
        let name = format!("transactions_{r:04}.csv");
        let x = std::fs::read(a.path().join(&name)).unwrap();
        assert_eq!(x, std::fs::read(b.path().join(&name)).unwrap());
        contents.push(x);
    }
    contents.sort();
    contents.dedup();
    assert_eq!(contents.len(), 20);
    let report = json(&a.path().join("sim.json"));
    assert_eq!(report["header"]["seed"], 42);
    assert_eq!(report["schedule"].as_array().unwrap().len(), 22);
}

#[test]
fn fit_round_trips_through_parameter_file() {
    let dir = tempfile::tempdir().unwrap();
    let (schedule, tx) = simulate(dir.path(), "appendix:set2", "c1:n=9,full=3,single=3", "200", "7");
    for (model, method) in [("halo", "auto"), ("halo", "numerical"), ("mnl", "auto")] {
        let params = dir.path().join(format!("{model}-{method}.json"));
        let report = dir.path().join("fit.json");
        let out = run(&[
            "fit", "--schedule", s(&schedule), "--transactions", s(&tx), "--model", model, "--method", method,
            "--out", s(&params), "--report", s(&report),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let summary = json(&report);
        let (p, mask) = read_parameter_file(&params).unwrap();
        let ds = load_dataset(&schedule, &tx).unwrap().dataset;
        let ll = log_likelihood(&p, &ds).unwrap();
        assert!((ll - summary["loglik"].as_f64().unwrap()).abs() < 1e-9);
        assert!(mask.is_some());
        if model == "mnl" {
            assert!(p.alpha_values().iter().all(|&a| a == 0.0));
            assert_eq!(summary["d"], 9);
        } else {
            assert_eq!(summary["d"], 81);
        }
        if method == "auto" && model == "halo" {
            assert_eq!(summary["method"], "closed-form-c1");
        }
    }
}

#[test]
fn closed_form_on_wrong_schedule_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let schedule = dir.path().join("s.csv");
    std::fs::write(&schedule, "period_id,a1,a2\n1,1,1\n2,1,1\n").unwrap();
    let tx = dir.path().join("t.csv");
    std::fs::write(&tx, "period_id,item_id,count\n1,0,5\n1,1,3\n1,2,4\n2,0,2\n").unwrap();
    let out = run(&[
        "fit", "--schedule", s(&schedule), "--transactions", s(&tx), "--method", "closed-form", "--out",
        s(&dir.path().join("p.json")),
    ]);
    assert_eq!(out.status.code(), Some(2));

    // zero pooled count under C1 -> exit 2 with a smoothing hint, smoothing fixes it
    let c1 = dir.path().join("c1.csv");
    std::fs::write(&c1, "period_id,a1\n1,1\n2,1\n3,0\n4,0\n").unwrap();
    let tx = dir.path().join("t1.csv");
    std::fs::write(&tx, "period_id,item_id,count\n1,0,4\n2,0,4\n3,0,4\n4,0,4\n").unwrap();
    let p = dir.path().join("p1.json");
    let out = run(&["fit", "--schedule", s(&c1), "--transactions", s(&tx), "--out", s(&p)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--smoothing"));
    let out = run(&["fit", "--schedule", s(&c1), "--transactions", s(&tx), "--smoothing", "0.5", "--out", s(&p)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn compare_identities_and_splits() {
    let dir = tempfile::tempdir().unwrap();
    let (schedule, tx) = simulate(dir.path(), "appendix:set2", "cyclic:n=9,periods=300", "300", "11");
    let report = dir.path().join("cmp.json");
    let out = run(&[
        "compare", "--schedule", s(&schedule), "--transactions", s(&tx), "--models", "mnl,halo", "--report",
        s(&report),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let j = json(&report);
    let d = &j["test"]["deltas"][0];
    assert!(d["delta_loglik"].as_f64().unwrap() < 0.0);
    assert!(d["delta_aic"].as_f64().unwrap() > 0.0);

    let out = run(&[
        "compare", "--schedule", s(&schedule), "--transactions", s(&tx), "--models", "mnl,mnl", "--report",
        s(&report),
    ]);
    assert!(out.status.success());
    let j = json(&report);
    assert_eq!(j["test"]["deltas"][0]["delta_aic"], 0.0);
    assert_eq!(j["test"]["deltas"][0]["delta_loglik"], 0.0);

    let out = run(&[
        "compare", "--schedule", s(&schedule), "--transactions", s(&tx), "--train-periods", "200", "--seed", "3",
        "--report", s(&report),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let j = json(&report);
    assert_eq!(j["train_periods"].as_array().unwrap().len(), 200);
    assert_eq!(j["test_periods"].as_array().unwrap().len(), 100);

    let out = run(&["compare", "--schedule", s(&schedule), "--transactions", s(&tx), "--split", "1.0"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("test set"));
}

#[test]
fn gof_all_signatures_with_bootstrap() {
    let dir = tempfile::tempdir().unwrap();
    let (schedule, tx) = simulate(dir.path(), "appendix:set1", "c1:n=9,full=2,single=2", "2000", "5");
    let params = dir.path().join("p.json");
    let out = run(&["fit", "--schedule", s(&schedule), "--transactions", s(&tx), "--out", s(&params)]);
    assert!(out.status.success());
    let report = dir.path().join("gof.json");
    let out = run(&[
        "gof", "--params", s(&params), "--schedule", s(&schedule), "--transactions", s(&tx), "--all",
        "--bootstrap", "100", "--seed", "9", "--report", s(&report),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let j = json(&report);
    let results = j["results"].as_array().unwrap();
    assert_eq!(results.len(), 10);
    for r in results {
        // the closed form is saturated on this schedule: fitted = observed frequencies
        assert!(r["statistic"].as_f64().unwrap() < 1e-6);
        let p = r["bootstrap_median_p"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&p));
    }
    assert_eq!(j["header"]["inputs"].as_array().unwrap().len(), 3);

    let out = run(&[
        "gof", "--params", s(&params), "--schedule", s(&schedule), "--transactions", s(&tx), "--signature",
        "000000000", "--bootstrap", "0", "--report", s(&report),
    ]);
    assert!(out.status.success());
    assert_eq!(json(&report)["skipped"].as_array().unwrap().len(), 1);
}

#[test]
fn grid_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("grid.csv");
    let out = run(&[
        "grid", "--truth", "appendix:set2", "--leading-items", "9", "--periods", "50,100", "--arrivals", "100,200",
        "--seed", "1", "--out", s(&table), "--report", s(&dir.path().join("grid.json")),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&table).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "periods,metric,100,200");
    assert_eq!(lines.len(), 7);
}
