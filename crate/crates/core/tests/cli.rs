use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tscopf")).current_dir(dir).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn studies() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/data/studies"))
}

#[test]
fn opf_writes_a_balanced_dispatch() {
    let tmp = TempDir::new().unwrap();
    let o = run(tmp.path(), &["opf", "--out", "opf"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let d: serde_json::Value = serde_json::from_slice(&fs::read(tmp.path().join("opf/dispatch.json")).unwrap()).unwrap();
    let p: f64 = d["p"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).sum();
    // 1.5 x 3.15 p.u. of load plus a few percent of losses
    assert!(p > 4.725 && p < 4.725 * 1.05, "{p}");
}

#[test]
fn opf_exit_codes() {
    let tmp = TempDir::new().unwrap();
    let o = run(tmp.path(), &["opf", "--load-scale", "4", "--out", "a"]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    let o = run(tmp.path(), &["opf", "--case", "missing.json", "--out", "b"]);
    assert_eq!(code(&o), 1);
    assert!(!o.stderr.is_empty());
    let o = run(tmp.path(), &["opf", "--no-such-flag"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn tscopf_writes_full_trajectory() {
    let tmp = TempDir::new().unwrap();
    let o = run(tmp.path(), &["tscopf", "--contingency", "1", "--dt", "10ms", "--correction", "none", "--dump-nlp", "--out", "t"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(tmp.path().join("t/trajectory.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "t,delta_g1,delta_g2,delta_g3,omega_g1,omega_g2,omega_g3");
    assert_eq!(lines.len(), 1 + 501);
    assert!(lines[501].starts_with("5,"));
    let stats: serde_json::Value = serde_json::from_slice(&fs::read(tmp.path().join("t/nlp_stats.json")).unwrap()).unwrap();
    assert_eq!(stats.as_array().unwrap().len(), 1);
    assert_eq!(stats[0]["n_variables"], 5046);
    assert_eq!(stats[0]["n_constraints"], 8061);
    assert!(tmp.path().join("t/nlp.json").is_file());
}

#[test]
fn misaligned_time_step_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let o = run(tmp.path(), &["tscopf", "--contingency", "1", "--dt", "7ms", "--out", "t"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("multiple of dt"));
    assert!(!tmp.path().join("t").exists());
}

#[test]
fn contingency2_activates_the_angle_limit() {
    let tmp = TempDir::new().unwrap();
    let cfg = studies().join("contingency2.toml");
    let o = run(tmp.path(), &["tscopf", "--config", cfg.to_str().unwrap(), "--dt", "10ms", "--out", "t"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let stats: serde_json::Value = serde_json::from_slice(&fs::read(tmp.path().join("t/nlp_stats.json")).unwrap()).unwrap();
    for s in stats.as_array().unwrap() {
        let g3 = s["max_coi_deviation_deg"][2].as_f64().unwrap();
        assert!((g3 - 100.0).to_radians().abs() < 1e-3, "{}: {g3}", s["step"]);
    }
}

#[test]
fn existing_output_is_not_overwritten_without_force() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(code(&run(tmp.path(), &["opf", "--out", "o"])), 0);
    let o = run(tmp.path(), &["opf", "--out", "o"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("--force"));
    assert_eq!(code(&run(tmp.path(), &["opf", "--out", "o", "--force"])), 0);
}

#[test]
fn artifacts_are_byte_reproducible() {
    let tmp = TempDir::new().unwrap();
    for out in ["a", "b"] {
        let o = run(tmp.path(), &["simulate", "--contingency", "2", "--dt", "10ms", "--out", out]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let o = run(tmp.path(), &["tscopf", "--contingency", "1", "--dt", "10ms", "--out", &format!("{out}/t")]);
        assert_eq!(code(&o), 0);
    }
    for f in ["dispatch.json", "trajectory.csv", "t/dispatch.json", "t/trajectory.csv", "t/nlp_stats.json", "t/step2_trajectory.csv"] {
        let a = fs::read(tmp.path().join("a").join(f)).unwrap();
        let b = fs::read(tmp.path().join("b").join(f)).unwrap();
        assert!(a == b, "{f} differs between runs");
    }
}

#[test]
fn compare_writes_table_and_plots() {
    let tmp = TempDir::new().unwrap();
    let o = run(tmp.path(), &["compare", "--contingency", "1", "--contingency", "2", "--dt", "10ms", "--horizon", "1s", "--out", "c"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let md = fs::read_to_string(tmp.path().join("c/contingency1/report.md")).unwrap();
    assert!(md.contains("| | | w/o 10 ms | w 10 ms | benchmark 10 ms |"), "{md}");
    assert_eq!(md.lines().filter(|l| l.starts_with("| δ") || l.starts_with("| Δω")).count(), 6);
    for id in ["contingency1", "contingency2"] {
        for g in 1..=3 {
            for q in ["delta", "omega"] {
                let svg = fs::read_to_string(tmp.path().join(format!("c/{id}/{q}_g{g}.svg"))).unwrap();
                // three variants plus the reference benchmark
                assert_eq!(svg.matches("<polyline").count(), 4, "{id} {q}_g{g}");
            }
        }
    }
    let summary = fs::read_to_string(tmp.path().join("c/summary.md")).unwrap();
    assert!(summary.contains("contingency1") && summary.contains("contingency2"));
}

#[test]
fn reduce_dumps_the_three_networks() {
    let tmp = TempDir::new().unwrap();
    let o = run(tmp.path(), &["reduce", "--contingency", "1", "--correction", "none", "--out", "r"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r: serde_json::Value = serde_json::from_slice(&fs::read(tmp.path().join("r/reduced.json")).unwrap()).unwrap();
    assert_eq!(r["assumption"], "flat_one_pu");
    assert_eq!(r["load_voltages"].as_array().unwrap().len(), 9);
    for stage in ["prefault", "during_fault", "post_fault"] {
        assert!(r[stage].is_object(), "{stage}");
    }
}
