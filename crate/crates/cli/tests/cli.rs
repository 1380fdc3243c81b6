use std::process::{Command, Output};

fn teleosim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_teleosim"))
        .args(args)
        .env_remove("TELEOSIM_CONFIG")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn run_then_table_reproduce_the_same_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("runs");
    let o = teleosim(&[
        "run", "--task", "A", "--mode", "shared,bilateral", "--operator", "expert", "--trials", "2", "--seed", "5",
        "--out", out.to_str().unwrap(), "--metric", "success",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let table = stdout(&o);
    assert!(table.starts_with("| Success Rate [%] | A | Average |"), "{table}");
    assert!(table.contains("| Bil. Tele. |") && table.contains("| Shared Auto. |"));
    for f in ["A_shared_5.csv", "A_shared_6.json", "A_bilateral_6.csv", "summary.json"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["cells"].as_array().unwrap().len(), 2);

    let o = teleosim(&["table", "--in", out.to_str().unwrap(), "--metric", "success"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), table);
    let o = teleosim(&["table", "--in", out.to_str().unwrap(), "--format", "csv", "--metric", "time"]);
    assert!(stdout(&o).starts_with("Mean Time [s],A,Average\n"));
}

#[test]
fn config_errors_exit_1_and_runtime_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(teleosim(&["run", "--mode", "flying", "--trials", "1"]).status.code(), Some(1));
    assert_eq!(teleosim(&["run", "--operator", "human", "--trials", "1"]).status.code(), Some(1));
    assert_eq!(teleosim(&["run", "--trials", "1", "--scale=-1"]).status.code(), Some(1));
    assert_eq!(teleosim(&["run", "--trials", "1", "--format", "xml"]).status.code(), Some(1));
    assert_eq!(teleosim(&["run", "--bogus"]).status.code(), Some(1));
    assert_eq!(teleosim(&["--help"]).status.code(), Some(0));
    let o = teleosim(&["table", "--in", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no trial sidecars"));
}

#[test]
fn validate_config_checks_files_and_the_env_var_is_honoured() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.toml");
    let o = teleosim(&["default-config"]);
    assert_eq!(o.status.code(), Some(0));
    std::fs::write(&good, stdout(&o)).unwrap();
    let o = teleosim(&["validate-config", good.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let hash = stdout(&o);
    assert!(hash.starts_with("ok ") && hash.trim().len() == 3 + 64, "{hash}");

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "dt = -1.0\n").unwrap();
    assert_eq!(teleosim(&["validate-config", bad.to_str().unwrap()]).status.code(), Some(1));
    let unknown = dir.path().join("unknown.toml");
    std::fs::write(&unknown, "frobnicate = 1\n").unwrap();
    assert_eq!(teleosim(&["validate-config", unknown.to_str().unwrap()]).status.code(), Some(1));

    let o = Command::new(env!("CARGO_BIN_EXE_teleosim"))
        .args(["run", "--trials", "1"])
        .env("TELEOSIM_CONFIG", &bad)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn serve_on_a_busy_port_exits_2() {
    let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = l.local_addr().unwrap().port().to_string();
    let o = teleosim(&["serve", "--port", &port]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cannot bind"));
}
