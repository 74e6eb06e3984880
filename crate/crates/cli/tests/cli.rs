use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_strategic-usage"));
    cmd.env_remove("STRATEGIC_USAGE_DATA_DIR");
    cmd
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, format!("schema_version = 1\n{body}")).unwrap();
    path
}

fn run(args: &[&str], config: &Path) -> Output {
    let out = bin().args(args).arg(config).output().unwrap();
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn summary(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn five_point_without_memory_oscillates() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(
        tmp.path(),
        "run.toml",
        "output_dir = \"out\"\n[scenario]\nbuiltin = \"five_point\"\n",
    );
    run(&["run"], &config);
    let s = summary(&tmp.path().join("out"));
    assert_eq!(s["verdict"]["kind"], "oscillating");
    assert_eq!(s["verdict"]["period"], 2);
    assert!(s["time_to_convergence"].is_null());

    let trajectory = fs::read_to_string(tmp.path().join("out/trajectory.jsonl")).unwrap();
    let records: Vec<Value> = trajectory
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(records.len() as u64, s["last_step"].as_u64().unwrap() + 1);
    for (k, r) in records.iter().enumerate() {
        assert_eq!(r["step"], k);
    }
    let loss = fs::read_to_string(tmp.path().join("out/loss.tsv")).unwrap();
    assert_eq!(loss.lines().next().unwrap(), "step\tloss_0\tloss_1");
    assert_eq!(loss.lines().count(), records.len() + 1);
    let usage = fs::read_to_string(tmp.path().join("out/usage.tsv")).unwrap();
    assert_eq!(
        usage.lines().next().unwrap(),
        "step\tpositive_0\tnegative_0\tpositive_1\tnegative_1"
    );
}

#[test]
fn five_point_with_memory_converges_and_drops_negatives() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(
        tmp.path(),
        "run.toml",
        "[scenario]\nbuiltin = \"five_point\"\n[dynamics]\np = 0.5\n",
    );
    run(&["run"], &config);
    let s = summary(&tmp.path().join("out"));
    assert_eq!(s["verdict"]["kind"], "converged_zero_loss");
    assert!(s["time_to_convergence"].as_u64().unwrap() <= 2);
    for t in s["final_usage"].as_array().unwrap() {
        assert_eq!(t["negative"].as_f64().unwrap(), 0.0);
    }
    assert!(s["final_loss"]
        .as_array()
        .unwrap()
        .iter()
        .all(|l| l.as_f64().unwrap() == 0.0));
}

#[test]
fn flags_override_the_config() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(
        tmp.path(),
        "run.toml",
        "[scenario]\nbuiltin = \"five_point\"\n",
    );
    let out_dir = tmp.path().join("flagged");
    run(
        &["run", "--p", "0.5", "--out", out_dir.to_str().unwrap()],
        &config,
    );
    let s = summary(&out_dir);
    assert_eq!(s["p"], 0.5);
    assert_eq!(s["verdict"]["kind"], "converged_zero_loss");
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn identical_configs_give_identical_summaries() {
    let tmp = tempfile::tempdir().unwrap();
    let body = "[scenario]\nbuiltin = \"threshold_line:5\"\n";
    let a = write_config(tmp.path(), "a.toml", &format!("output_dir = \"a\"\n{body}"));
    let b = write_config(tmp.path(), "b.toml", &format!("output_dir = \"b\"\n{body}"));
    run(&["run"], &a);
    run(&["run"], &b);
    for file in ["summary.json", "trajectory.jsonl", "usage.tsv", "loss.tsv"] {
        let left = fs::read(tmp.path().join("a").join(file)).unwrap();
        let right = fs::read(tmp.path().join("b").join(file)).unwrap();
        assert_eq!(left, right, "{file} differs");
    }
    assert_eq!(summary(&tmp.path().join("a"))["time_to_convergence"], 5);
}

#[test]
fn missing_csv_fails_and_names_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(
        tmp.path(),
        "run.toml",
        "services = 2\n[scenario]\ncsv = \"no_such_pool.csv\"\nschema = \"banknote\"\n",
    );
    for verb in ["run", "validate", "sweep"] {
        let out = bin().arg(verb).arg(&config).output().unwrap();
        assert!(!out.status.success(), "{verb} should fail");
        let stderr = String::from_utf8_lossy(&out.stderr);
        assert!(
            stderr.contains(&tmp.path().join("no_such_pool.csv").display().to_string()),
            "{stderr}"
        );
    }
}

#[test]
fn p_sweep_on_five_point_gives_identical_usage() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(
        tmp.path(),
        "sweep.toml",
        "threads = 2\n[scenario]\nbuiltin = \"five_point\"\n[sweep]\np = [0.1, 1.0]\n",
    );
    run(&["sweep"], &config);
    let out = tmp.path().join("out");
    let table = fs::read_to_string(out.join("sweep.tsv")).unwrap();
    assert_eq!(table.lines().count(), 3);
    let rows: Vec<Value> = fs::read_to_string(out.join("sweep.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    for r in &rows {
        assert_eq!(r["summary"]["verdict"]["kind"], "converged_zero_loss");
    }
    let usage =
        |k: usize| fs::read_to_string(out.join(format!("cells/cell-{k:03}/usage.tsv"))).unwrap();
    assert_eq!(usage(0), usage(1));
}

#[test]
fn failing_cells_are_recorded_and_the_sweep_succeeds() {
    let tmp = tempfile::tempdir().unwrap();
    // Two users with the same features and opposite labels: no initial
    // model can be fitted, so every cell fails.
    fs::write(
        tmp.path().join("clash.csv"),
        "a,b,y\n0.5,0.5,1\n0.5,0.5,-1\n",
    )
    .unwrap();
    let config = write_config(
        tmp.path(),
        "sweep.toml",
        r#"services = 1
[scenario]
csv = "clash.csv"
schema = { columns = [{ name = "a", role = "feature" }, { name = "b", role = "feature" }, { name = "y", role = "label" }] }
[sweep]
p = [0.0, 0.5]
"#,
    );
    run(&["sweep"], &config);
    let table = fs::read_to_string(tmp.path().join("out/sweep.tsv")).unwrap();
    let rows: Vec<&str> = table.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.contains("\tfailed\t")), "{table}");
}

#[test]
fn csv_scenario_uses_the_data_dir_and_reports_filtering() {
    let tmp = tempfile::tempdir().unwrap();
    let data_dir = tmp.path().join("data");
    fs::create_dir(&data_dir).unwrap();
    let mut rows = String::new();
    for k in 0..12 {
        let x = k as f64 / 2.0 - 3.0;
        let class = if x > 0.0 { 0 } else { 1 };
        rows.push_str(&format!("{x},{},0.5,-1.0,{class}\n", 0.3 * x));
    }
    // A contradicting copy of a positive point, which the filter must drop.
    rows.push_str("2.5,0.75,0.5,-1.0,1\n");
    fs::write(data_dir.join("pool.txt"), rows).unwrap();
    let config = write_config(
        tmp.path(),
        "run.toml",
        r#"services = 2
seed = 100
[scenario]
csv = "pool.txt"
schema = "banknote"
preprocess = { normalize = true, realizability_filter = {} }
[dynamics]
p = 0.5
"#,
    );
    let out = bin()
        .env("STRATEGIC_USAGE_DATA_DIR", &data_dir)
        .arg("validate")
        .arg(&config)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stdout).contains("13 rows loaded"));

    let out = bin()
        .env("STRATEGIC_USAGE_DATA_DIR", &data_dir)
        .arg("run")
        .arg(&config)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report = fs::read_to_string(tmp.path().join("out/filter_report.jsonl")).unwrap();
    let removed: Vec<Value> = report
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert!(!removed.is_empty());
    assert!(removed.iter().all(|r| r["reason"] == "misclassified"));
    let s = summary(&tmp.path().join("out"));
    assert_eq!(s["verdict"]["kind"], "converged_zero_loss");
    assert_eq!(s["services"], 2);
}

#[test]
fn scenario_list_names_every_builtin() {
    let out = bin().args(["scenario", "list"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for name in ["five_point", "threshold_line:<n>", "threshold_services:<m>"] {
        assert!(text.contains(name));
    }
}

#[test]
fn sweep_without_lists_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(
        tmp.path(),
        "run.toml",
        "[scenario]\nbuiltin = \"five_point\"\n",
    );
    let out = bin().arg("sweep").arg(&config).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("[sweep]"));
}
