use std::path::PathBuf;

use super::{echo_to_text, load_config, main_with_args, run, ExperimentConfig, Format};

fn cfg(args: &[&str]) -> ExperimentConfig {
    let mut full = vec!["ngca-lab"];
    full.extend_from_slice(args);
    load_config(full).expect("valid arguments")
}

fn exec(args: &[&str]) -> (i32, String, String) {
    let mut full = vec!["ngca-lab"];
    full.extend_from_slice(args);
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = main_with_args(full, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("ngca-lab-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn sphere_w_reports_quarter_at_d16_t1() {
    let (code, out, _) = exec(&["sphere-w", "--d", "16", "--t", "1"]);
    assert_eq!(code, 0);
    assert!(out.starts_with("# schema=sphere_w/v1\n"), "{out}");
    let row = out.lines().find(|l| l.starts_with("16,1,")).unwrap();
    assert_eq!(row.split(',').nth(2), Some("0.25"));
    assert!(out.lines().last().unwrap().starts_with("sphere-w: PASS"));
}

#[test]
fn gap_separation_two_row_table() {
    let rep = run(&cfg(&["gap-separation", "--eps", "0.25", "--n", "1", "--k", "4"])).unwrap();
    assert_eq!(rep.table.rows.len(), 2);
    let gamma: f64 = rep.table.rows[0][1].parse().unwrap();
    let error_sum: f64 = rep.table.rows[1][1].parse().unwrap();
    assert!(gamma <= 0.1, "{gamma}");
    assert_eq!(error_sum, 0.25);
    assert!(rep.passed());
}

#[test]
fn identical_configs_give_identical_payloads() {
    for args in [
        &["fact32", "--trials", "300"][..],
        &["c1-test", "--d", "8", "--n", "50", "--trials", "300"][..],
        &["fooling-gap", "--d", "12", "--n", "2", "--trials", "300"][..],
        &["sample-audit", "--trials", "5000", "--d", "4"][..],
    ] {
        let c = cfg(args);
        let (a, b) = (run(&c).unwrap(), run(&c).unwrap());
        for f in [Format::Csv, Format::Json] {
            assert_eq!(a.payload_text(f), b.payload_text(f), "{args:?}");
        }
    }
}

#[test]
fn embedded_config_replays_the_payload() {
    let first = run(&cfg(&["fooling-gap", "--d", "10", "--n", "2", "--trials", "200", "--seed", "5"])).unwrap();
    let path = scratch("replay.cfg");
    std::fs::write(&path, echo_to_text(&first.config)).unwrap();
    let replay = run(&cfg(&["--config", path.to_str().unwrap()])).unwrap();
    assert_eq!(first.config, replay.config);
    assert_eq!(first.payload_text(Format::Json), replay.payload_text(Format::Json));
}

#[test]
fn config_file_and_flag_precedence() {
    let path = scratch("precedence.cfg");
    std::fs::write(&path, "experiment=sphere-w\nd=64\nt=1\n").unwrap();
    let c = cfg(&["--config", path.to_str().unwrap(), "--d", "128"]);
    assert_eq!(c.d, Some(128));
    assert_eq!(c.format.unwrap_or_default(), Format::Csv);
    let rep = run(&c).unwrap();
    assert_eq!(rep.table.rows[0][0], "128");
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(exec(&[]).0, 2);
    let path = scratch("bad.cfg");
    std::fs::write(&path, "experiment=decay\nwidth=3\n").unwrap();
    let (code, _, err) = exec(&["--config", path.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(err.contains("width") && err.contains("valid keys") && err.contains("c-trunc"), "{err}");
    assert_eq!(exec(&["sphere-w", "--trials", "5"]).0, 2);
    assert_eq!(exec(&["mollifier-probe", "--c-g", "0.2", "--c-trunc", "0.08"]).0, 2);
    assert_eq!(exec(&["sphere-w", "--format", "xml"]).0, 2);
    assert_eq!(exec(&["nonsense"]).0, 2);
}

#[test]
fn failing_check_exits_1() {
    // An atom mass below the floor is accepted as an override but fails the floor check.
    let (code, out, _) = exec(&["moment-match", "--eps", "1e-20"]);
    assert_eq!(code, 1);
    assert!(out.contains("# verdict eps_above_floor FAIL"), "{out}");
}

#[test]
fn json_report_embeds_config_and_verdicts() {
    let path = scratch("report.json");
    let (code, out, _) = exec(&["moment-match", "--m", "4", "--r", "2", "--format", "json", "--out", path.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(out.starts_with("moment-match: PASS"));
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(doc["config"]["m"], "4");
    assert_eq!(doc["config"]["format"], "json");
    assert_eq!(doc["pass"], true);
    assert!(doc["version"].as_str().unwrap().starts_with(env!("CARGO_PKG_VERSION")));
    assert_eq!(doc["payload"]["table"]["rows"].as_array().unwrap().len(), 5);
}
