use std::process::Command;

fn sch() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sch"))
}

fn manifest(dir: &std::path::Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn quick_temporal_run_writes_rate_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = sch()
        .args(["run", "test1-temporal", "--M", "3", "--quick", "--out-dir"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("errors.csv")).unwrap();
    assert!(csv.starts_with("resolution,linf_l2,linf_l2_order"));
    assert_eq!(csv.lines().count(), 5);
    let m = manifest(dir.path());
    assert_eq!(m["schema"], "run-manifest/v1");
    assert_eq!(m["config"]["experiment"]["M"], 3);
    let outputs = m["outputs"].as_array().unwrap();
    assert_eq!(outputs.len(), 2);
    for o in outputs {
        let bytes = std::fs::read(dir.path().join(o["path"].as_str().unwrap())).unwrap();
        assert_eq!(o["bytes"].as_u64().unwrap(), bytes.len() as u64);
        assert_eq!(o["sha256"].as_str().unwrap().len(), 64);
    }
}

#[test]
fn repeated_runs_have_identical_csv_checksums() {
    let sums: Vec<String> = (0..2)
        .map(|_| {
            let dir = tempfile::tempdir().unwrap();
            let st = sch()
                .args(["run", "test1-temporal", "--M", "2", "--quick", "--jobs", "1", "--seed", "9", "--out-dir"])
                .arg(dir.path())
                .output()
                .unwrap();
            assert!(st.status.success());
            manifest(dir.path())["outputs"][0]["sha256"].as_str().unwrap().to_string()
        })
        .collect();
    assert_eq!(sums[0], sums[1]);
}

#[test]
fn quick_interface_run_writes_level_sets() {
    let dir = tempfile::tempdir().unwrap();
    let out = sch()
        .args(["run", "test2", "--quick", "--M", "2", "--delta", "5", "--epsilon", "0.05"])
        .args(["--snapshots", "0.001,0.002", "--out-dir"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let ls = std::fs::read_to_string(dir.path().join("level_sets.csv")).unwrap();
    assert!(ls.lines().count() > 1);
    assert!(dir.path().join("energy.csv").exists());
    assert!(dir.path().join("mass.csv").exists());
    assert_eq!(manifest(dir.path())["outputs"].as_array().unwrap().len(), 4);
}

#[test]
fn tau_not_dividing_t_exits_2_naming_field() {
    let dir = tempfile::tempdir().unwrap();
    let out = sch()
        .args(["run", "test1-temporal", "--tau", "3e-3", "--out-dir"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("tau"));
}

#[test]
fn validate_prints_indicator() {
    let out = sch().args(["validate", "test1-temporal"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    // 8e-4 * (0.1^-3 + 0.1^-1 * 5^4) = 8e-4 * 7250
    assert!(text.contains("at tau = 8e-4: 5.8000e0"), "{text}");
}

#[test]
fn validate_deterministic_indicator() {
    let out = sch()
        .args(["validate", "custom", "--delta", "0", "--tau", "1e-4"])
        .output()
        .unwrap();
    assert!(out.status.success());
    // 1e-4 * 0.1^-3
    assert!(String::from_utf8_lossy(&out.stdout).contains("at tau = 1e-4: 1.0000e-1"));
}

#[test]
fn validate_reads_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    std::fs::write(&path, "[experiment]\npreset = \"test1_spatial\"\nM = 12\n[noise]\nmaster_seed = 5\n").unwrap();
    let out = sch().args(["validate", "--config"]).arg(&path).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("M = 12"));
    assert!(text.contains("master_seed = 5"));
}

#[test]
fn malformed_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[experiment\nepsilon = ").unwrap();
    let out = sch().args(["validate", "--config"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = sch().args(["validate", "--config"]).arg(dir.path().join("missing.toml")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn solver_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("stiff.toml");
    std::fs::write(&path, "[stepper]\nnewton_max_iter = 1\nnewton_tol = 1e-30\n").unwrap();
    let out = sch()
        .args(["run", "test1-temporal", "--quick", "--M", "1", "--config"])
        .arg(&path)
        .arg("--out-dir")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn unwritable_output_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let out = sch()
        .args(["run", "test1-temporal", "--quick", "--M", "1", "--out-dir"])
        .arg(blocker.join("sub"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));
}
