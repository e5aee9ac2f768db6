use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn vxtsn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vxtsn"))
        .args(args)
        .output()
        .expect("spawn vxtsn")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn testbed_source() -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/scenarios/paper_testbed.toml");
    fs::read_to_string(path).unwrap()
}

fn write_scenario(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("scenario.toml");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn validate_bundled_testbed() {
    let o = vxtsn(&["validate", "--scenario", "paper_testbed"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("UEs: 2"), "{out}");
    assert!(out.contains("flows: 4"), "{out}");
}

#[test]
fn validate_json_reports_counts() {
    let o = vxtsn(&[
        "validate",
        "--scenario",
        "paper_testbed",
        "--format",
        "json",
    ]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["valid"], true);
    assert_eq!(v["ues"], 2);
    assert_eq!(v["flows"], 4);
}

#[test]
fn out_of_range_pcp_is_rejected_with_its_path() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_scenario(
        dir.path(),
        &testbed_source().replacen("pcp = 7", "pcp = 9", 1),
    );
    let o = vxtsn(&["validate", "--scenario", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains(".pcp"), "{}", stderr(&o));
}

#[test]
fn invalid_scenario_as_json() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_scenario(
        dir.path(),
        &testbed_source().replacen("pcp = 7", "pcp = 9", 1),
    );
    let o = vxtsn(&[
        "validate",
        "--scenario",
        path.to_str().unwrap(),
        "--format",
        "json",
    ]);
    assert_eq!(o.status.code(), Some(2));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["valid"], false);
    assert!(!v["diagnostics"].as_array().unwrap().is_empty());
}

#[test]
fn missing_file_fails() {
    let o = vxtsn(&["validate", "--scenario", "/nonexistent/scenario.toml"]);
    assert!(!o.status.success());
    assert!(!stderr(&o).is_empty());
}

#[test]
fn missing_scenario_argument_fails() {
    let o = vxtsn(&["validate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn conflicting_qfi_is_diagnosed() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = testbed_source();
    text.push_str(
        r#"
[[flows]]
name = "hp_again"
vlan = 100
pcp = 7
src = "edge"
dst_mac = "01:1b:19:00:00:00"
payload = "ptp"
payload_size = 44
period_us = 125000
start_us = 0
qfi = 2
"#,
    );
    let path = write_scenario(dir.path(), &text);
    let o = vxtsn(&["validate", "--scenario", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("qfi"), "{err}");
}

#[test]
fn tables_show_the_mapping_row() {
    let o = vxtsn(&["tables", "--scenario", "paper_testbed"]);
    assert!(o.status.success());
    let out = stdout(&o);
    let row = out
        .lines()
        .find(|l| l.starts_with("hmp "))
        .expect("hmp row");
    let cols: Vec<&str> = row.split_whitespace().collect();
    assert_eq!(
        cols,
        ["hmp", "100", "5", "1005", "-", "40", "3", "86", "18", "5"]
    );
    assert!(out.contains("forwarding table of upf"));
}

#[test]
fn tables_for_a_single_flow_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let text = testbed_source();
    let cut = text.find("[[flows]]").unwrap();
    let tail = &text[cut..];
    let second = tail[1..].find("[[flows]]").unwrap() + 1;
    let rest = &tail[second..];
    let after_flows = rest.find("[[captures]]").map(|i| &rest[i..]).unwrap_or("");
    let single = format!("{}{}{}", &text[..cut], &tail[..second], after_flows);
    let path = write_scenario(dir.path(), &single);
    let o = vxtsn(&["tables", "--scenario", path.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = stdout(&o).lines().take_while(|l| !l.is_empty()).count();
    assert_eq!(rows, 2);
}

fn output_files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    names
}

#[test]
fn run_writes_every_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("results");
    let o = vxtsn(&[
        "run",
        "--scenario",
        "paper_testbed",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("result: PASS"), "{}", stdout(&o));
    let names = output_files(&out);
    let mut expected = vec!["summary.txt".to_string(), "summary.json".to_string()];
    for f in ["hp", "hmp", "lmp", "lp"] {
        expected.push(format!("{f}.csv"));
        expected.push(format!("ccdf_{f}.txt"));
    }
    for c in 'A'..='H' {
        expected.push(format!("capture_{c}.pcap"));
    }
    for e in &expected {
        assert!(names.contains(e), "missing {e} in {names:?}");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["passed"], true);
}

#[test]
fn same_seed_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for d in [&a, &b] {
        let o = vxtsn(&[
            "run",
            "backward_learning",
            "--out",
            d.to_str().unwrap(),
            "--seed",
            "42",
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let names = output_files(&a);
    assert_eq!(names, output_files(&b));
    for n in names {
        assert_eq!(
            fs::read(a.join(&n)).unwrap(),
            fs::read(b.join(&n)).unwrap(),
            "{n}"
        );
    }
}

#[test]
fn ccdf_for_one_flow() {
    let o = vxtsn(&["ccdf", "backward_learning", "--flow", "follow_up"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(!stdout(&o).is_empty());
    let o = vxtsn(&["ccdf", "backward_learning", "--flow", "nope"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn version_prints_crate_version() {
    let o = vxtsn(&["version"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains(env!("CARGO_PKG_VERSION")));
}
