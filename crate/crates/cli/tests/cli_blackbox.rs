use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn pimolap(args: &[&str]) -> Output {
    pimolap_env(args, None)
}

fn pimolap_env(args: &[&str], config: Option<&Path>) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_pimolap"));
    c.args(args).env_remove("PIMOLAP_CONFIG");
    if let Some(p) = config {
        c.env("PIMOLAP_CONFIG", p);
    }
    c.output().expect("binary runs")
}

fn json_out(o: &Output) -> Value {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).expect("stdout is JSON")
}

fn validator(def: &str) -> jsonschema::Validator {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/schema/report.schema.json")).unwrap();
    let schema: Value = serde_json::from_str(&text).unwrap();
    let wrapped = json!({ "$ref": format!("#/$defs/{def}"), "$defs": schema["$defs"].clone() });
    jsonschema::validator_for(&wrapped).expect("schema compiles")
}

fn assert_valid(def: &str, v: &Value) {
    let val = validator(def);
    let errors: Vec<String> = val.iter_errors(v).map(|e| format!("{} at {}", e, e.instance_path())).collect();
    assert!(errors.is_empty(), "{errors:#?}");
}

const Q_GROUPED: &str = "SELECT SUM(revenue), COUNT(*) FROM lineorder WHERE quantity < 30 GROUP BY date.year";
const Q_CROSS: &str = "SELECT SUM(price * discount) FROM lineorder WHERE date.year = 1993 AND quantity < 25";

#[test]
fn gen_is_deterministic_and_creates_missing_directories() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("nested/a");
    let b = tmp.path().join("b");
    for d in [&a, &b] {
        let o = pimolap(&["gen", "--scale", "1", "--seed", "42", "--out", d.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let mut names: Vec<_> = std::fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 6);
    for n in names {
        assert_eq!(std::fs::read(a.join(&n)).unwrap(), std::fs::read(b.join(&n)).unwrap(), "{n:?}");
    }
}

#[test]
fn gen_refuses_to_overwrite_without_force() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().to_str().unwrap();
    assert!(pimolap(&["gen", "--out", d]).status.success());
    assert_eq!(pimolap(&["gen", "--out", d]).status.code(), Some(1));
    assert!(pimolap(&["gen", "--out", d, "--force"]).status.success());
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(pimolap(&["gen", "--scale", "0", "--out", "/nonexistent/x"]).status.code(), Some(2));
    assert_eq!(pimolap(&["run", "--query-string", "SELECT COUNT(*) FROM lineorder", "--engine", "gpu"]).status.code(), Some(2));
    assert_eq!(pimolap(&["run", "--query-string", "SELECT COUNT(*) FROM lineorder", "--sample-fraction", "0"]).status.code(), Some(2));
}

#[test]
fn parse_errors_exit_with_two_and_plan_errors_with_three() {
    let o = pimolap(&["run", "--query-string", "SELECT FROM lineorder"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("byte 7"));
    assert_eq!(pimolap(&["run", "--query-string", "SELECT SUM(nope) FROM lineorder"]).status.code(), Some(3));
    assert_eq!(pimolap(&["run", "--query-string", "SELECT COUNT(*) FROM other"]).status.code(), Some(3));
    assert_eq!(
        pimolap(&["run", "--query-string", "SELECT COUNT(*) FROM lineorder", "--cols", "64"]).status.code(),
        Some(3)
    );
}

#[test]
fn pim_and_host_reports_have_identical_rows() {
    let mut rows = Vec::new();
    for engine in ["pim", "host", "hybrid-groupby", "pim-filter"] {
        let r = json_out(&pimolap(&["run", "--query-string", Q_GROUPED, "--engine", engine]));
        assert_valid("runReport", &r);
        assert_eq!(r["engine"], engine);
        rows.push(r["result"].clone());
    }
    assert!(rows.windows(2).all(|w| w[0] == w[1]));
    assert!(rows[0]["rows"].as_array().unwrap().len() > 3);
}

#[test]
fn report_ratio_is_baseline_over_transferred_bits() {
    let r = json_out(&pimolap(&["run", "--query-string", Q_GROUPED]));
    let s = &r["stats"];
    let want = s["host_baseline_bits"].as_f64().unwrap() / s["pim_to_host_bits"].as_f64().unwrap();
    assert!((r["reduction_ratio"].as_f64().unwrap() - want).abs() < 1e-9 * want);
    assert!(r["modeled_costs"].is_object());
}

#[test]
fn split_layout_with_cross_partition_predicate_moves_bits_between_arrays() {
    let one = json_out(&pimolap(&["run", "--query-string", Q_CROSS, "--layout", "one_xb"]));
    let two = json_out(&pimolap(&["run", "--query-string", Q_CROSS, "--layout", "two_xb"]));
    assert_eq!(one["stats"]["inter_array_bits"], 0);
    assert!(two["stats"]["inter_array_bits"].as_u64().unwrap() > 0);
    assert_eq!(one["result"], two["result"]);
    assert_eq!(two["layout"], "two_xb");
}

#[test]
fn explain_prints_plan_without_executing() {
    let p = json_out(&pimolap(&["run", "--query-string", Q_GROUPED, "--engine", "hybrid-groupby", "--explain"]));
    assert!(p.get("stats").is_none());
    assert!(p["estimates"]["groups"].is_array());
    for k in ["chosen", "pure_pim", "pure_host"] {
        assert!(p["costs"][k].is_number(), "{k}");
    }
    assert!(p["pim_groups"].is_array() && p["host_groups"].is_array());
}

#[test]
fn query_file_data_dir_out_and_pretty() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    assert!(pimolap(&["gen", "--seed", "7", "--out", data.to_str().unwrap()]).status.success());
    let q = tmp.path().join("q.sql");
    std::fs::write(&q, format!("{Q_GROUPED}\n")).unwrap();
    let out = tmp.path().join("r.json");
    let o = pimolap(&["run", q.to_str().unwrap(), "--data", data.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let from_dir: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let generated = json_out(&pimolap(&["run", "--query-string", Q_GROUPED, "--seed", "7"]));
    assert_eq!(from_dir["result"], generated["result"]);
    let pretty = pimolap(&["run", "--query-string", Q_GROUPED, "--pretty"]);
    let text = String::from_utf8(pretty.stdout).unwrap();
    assert!(text.contains("date.year") && text.contains("reduction ratio"));
}

#[test]
fn load_describes_layout() {
    for layout in ["one_xb", "two_xb"] {
        let v = json_out(&pimolap(&["load", "--layout", layout]));
        assert_eq!(v["wide"]["records"], 6000);
        assert_eq!(v["layout_mode"], layout);
        assert!(v["pages"].as_u64().unwrap() >= 6);
    }
}

#[test]
fn config_file_and_cost_params_are_applied() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("defaults.json");
    std::fs::write(&cfg, r#"{"engine": "pim-filter", "seed": 9, "geometry": {"rows": 512}}"#).unwrap();
    let params = tmp.path().join("params.json");
    std::fs::write(&params, r#"{"c_host_rec": 2.5}"#).unwrap();
    let o = pimolap_env(&["run", "--query-string", Q_GROUPED, "--cost-params", params.to_str().unwrap()], Some(&cfg));
    let r = json_out(&o);
    assert_eq!(r["engine"], "pim-filter");
    assert_eq!(r["config"]["seed"], 9);
    assert_eq!(r["config"]["geometry"]["rows"], 512);
    assert_eq!(r["config"]["geometry"]["cols"], 1024);
    assert_eq!(r["config"]["params"]["c_host_rec"], 2.5);
    assert_eq!(r["config"]["params"]["c_bit_xfer"], 4.0);
    let o = pimolap_env(&["run", "--query-string", Q_GROUPED, "--engine", "pim"], Some(&cfg));
    assert_eq!(json_out(&o)["engine"], "pim");
}

#[test]
fn bench_counts_reports_and_keeps_going_after_failures() {
    let tmp = tempfile::tempdir().unwrap();
    let suite = tmp.path().join("suite.json");
    let entries = json!([
        {"name": "a", "query": Q_GROUPED},
        {"name": "b", "query": Q_CROSS},
        {"name": "c", "query": "SELECT MAX(revenue) FROM lineorder WHERE tax < 3"},
    ]);
    std::fs::write(&suite, entries.to_string()).unwrap();
    let v = json_out(&pimolap(&["bench", "--suite", suite.to_str().unwrap(), "--engines", "pim", "--jobs", "2"]));
    assert_valid("benchReport", &v);
    assert_eq!(v["reports"].as_array().unwrap().len(), 6);
    assert_eq!(v["summary"]["configs"].as_array().unwrap().len(), 2);
    assert_eq!(v["summary"]["failed"], false);

    let bad = json!([{"name": "ok", "query": Q_GROUPED}, {"name": "broken", "query": "SELECT"}]);
    std::fs::write(&suite, bad.to_string()).unwrap();
    let o = pimolap(&["bench", "--suite", suite.to_str().unwrap(), "--engines", "pim", "--layouts", "one_xb"]);
    assert_eq!(o.status.code(), Some(3));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_valid("benchReport", &v);
    assert!(v["reports"][0]["result"].is_object());
    assert!(v["reports"][1]["error"].is_string());
    assert_eq!(v["summary"]["configs"][0]["failed"], 1);
}

#[test]
fn schema_rejects_malformed_reports() {
    let r = json_out(&pimolap(&["run", "--query-string", Q_GROUPED]));
    let mut broken = r.clone();
    broken["engine"] = json!("gpu");
    assert!(!validator("runReport").is_valid(&broken));
    let mut broken = r;
    broken.as_object_mut().unwrap().remove("stats");
    assert!(!validator("runReport").is_valid(&broken));
}
