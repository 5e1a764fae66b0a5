mod common;

use common::*;

#[test]
fn fixtures_exit_with_attack() {
    for (name, _) in webinj::fixtures::ALL {
        let p = fixture_path(name);
        let o = webinj(&["analyze", "--spec", p.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(1), "{name}");
        assert!(!msc_lines(&stdout(&o)).is_empty());
        let err = String::from_utf8_lossy(&o.stderr);
        assert!(err.contains("nodes:") && err.contains("elapsed:"), "{err}");
    }
}

#[test]
fn sanitized_variants_exit_safe() {
    for (name, _) in webinj::fixtures::ALL {
        let p = sanitized_fixture(name);
        let o = webinj(&["analyze", "--spec", p.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{name}");
        let out = stdout(&o);
        assert!(
            out.starts_with("Exhausted(safe=true)") || out.starts_with("SafeUpToDepth(16)"),
            "{out}"
        );
    }
}

#[test]
fn missing_file_is_an_error() {
    let o = webinj(&["analyze", "--spec", "no/such/file.sqlf"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cannot read"));
}

#[test]
fn parse_error_is_an_error() {
    let dir = std::env::temp_dir().join(format!("webinj-bad-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let p = dir.join("bad.sqlf");
    std::fs::write(&p, "specification X entity {").unwrap();
    let o = webinj(&["analyze", "--spec", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn zero_depth_is_an_error() {
    let o = webinj(&["analyze", "--spec", "fixtures/joomla.sqlf", "--depth", "0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn fixtures_list() {
    let o = webinj(&["fixtures", "list"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().count(), 5);
}

#[test]
fn verify_db_reports_zero_counterexamples() {
    let o = webinj(&["verify-db", "--depth", "2"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("counterexamples: 0"));
}

#[test]
fn structured_output() {
    let o = webinj(&[
        "analyze",
        "--spec",
        "fixtures/yavwa.sqlf",
        "--format",
        "structured",
    ]);
    let out = stdout(&o);
    let mut lines = out.lines();
    let header: serde_json::Value = serde_json::from_str(lines.next().unwrap()).unwrap();
    assert_eq!(header["goal"], "secureFolder");
    assert_eq!(header["steps"], 6);
    for l in lines {
        let v: serde_json::Map<String, serde_json::Value> = serde_json::from_str(l).unwrap();
        let keys: Vec<&String> = v.keys().collect();
        assert_eq!(keys, ["from", "index", "injected", "message", "to"]);
    }
}

#[test]
fn emit_ts_prints_rules() {
    let o = webinj(&[
        "analyze",
        "--spec",
        "fixtures/webgoat_auth.sqlf",
        "--emit-ts",
    ]);
    let out = stdout(&o);
    assert!(out.contains("state_WebApp") && out.contains("state_Database"));
}

#[test]
fn non_interactive_concretization() {
    let url = "http://target.com/WebGoat/attack?Screen=1";
    let o = webinj(&[
        "analyze",
        "--spec",
        "fixtures/webgoat_auth.sqlf",
        "--non-interactive",
        "--url",
        &format!("1={url}"),
        "--post",
        "employee_id=101&password=x",
    ]);
    assert_eq!(o.status.code(), Some(1));
    let out = stdout(&o);
    assert_eq!(
        out.lines().last().unwrap(),
        format!(r#"curl -d "employee_id=?&password=?" "{url}""#)
    );
}

#[test]
fn missing_url_for_injected_step() {
    let o = webinj(&[
        "analyze",
        "--spec",
        "fixtures/joomla.sqlf",
        "--non-interactive",
        "--url",
        "5=http://x/",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no answer"));
}

#[test]
fn malformed_url_flag() {
    let o = webinj(&[
        "analyze",
        "--spec",
        "fixtures/joomla.sqlf",
        "--url",
        "http://x/",
    ]);
    assert_eq!(o.status.code(), Some(2));
}
