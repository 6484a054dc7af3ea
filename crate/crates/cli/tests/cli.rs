//! End-to-end tests of the binary: config validation, exit codes, file
//! emission, and reproducibility.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_pinn-rc")
}

fn run(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(bin());
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, value: &serde_json::Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path
}

fn case0_config(iterations: u64) -> serde_json::Value {
    serde_json::json!({
        "run_name": "run",
        "case": {"label": "case0", "u_dc": 1.0, "branches": [{"r": 1.0, "c": 1.0}]},
        "train": {
            "learning_rate": 0.01,
            "iterations": iterations,
            "n_collocation": 12,
            "formulation": "log",
            "seed": 3,
            "t_end": 10.0,
            "hidden_layers": [16],
            "log_every": 50
        }
    })
}

#[test]
fn forward_writes_all_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "fwd.json", &case0_config(200));
    let out = run(
        &[
            "forward",
            "--config",
            config.to_str().unwrap(),
            "--out",
            tmp.path().join("out").to_str().unwrap(),
        ],
        &[],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = tmp.path().join("out/run");
    for file in ["history.csv", "prediction.csv", "summary.json", "model.bin"] {
        assert!(dir.join(file).exists(), "missing {file}");
    }
    // The checkpoint written by the run parses back.
    let net = pinn_rc_core::net::load_checkpoint(&dir.join("model.bin")).unwrap();
    assert_eq!(net.layer_sizes(), &[1, 16, 1]);
    let pred_head = std::fs::read_to_string(dir.join("prediction.csv")).unwrap();
    assert!(pred_head.starts_with("t,i_pred,i_true,abs_err\n"));
}

#[test]
fn negative_learning_rate_exits_2_naming_field() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = case0_config(100);
    cfg["train"]["learning_rate"] = serde_json::json!(-0.01);
    let config = write_config(tmp.path(), "bad.json", &cfg);
    let out = run(&["forward", "--config", config.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("learning_rate"), "{stderr}");
}

#[test]
fn unknown_config_key_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = case0_config(100);
    cfg["train"]["learning_rat"] = serde_json::json!(0.01);
    let config = write_config(tmp.path(), "typo.json", &cfg);
    let out = run(&["forward", "--config", config.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("learning_rat"));
}

#[test]
fn missing_config_file_exits_2() {
    let out = run(&["forward", "--config", "/no/such/config.json"], &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unwritable_output_leaves_no_partial_files() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "fwd.json", &case0_config(60));
    // A plain file in place of the output root makes directory creation fail.
    let blocker = tmp.path().join("blocked");
    std::fs::write(&blocker, b"file").unwrap();
    let out = run(
        &[
            "forward",
            "--config",
            config.to_str().unwrap(),
            "--out",
            blocker.to_str().unwrap(),
        ],
        &[],
    );
    assert!(!out.status.success());
    assert!(out.status.code().unwrap() != 0);
    assert!(std::fs::metadata(&blocker).unwrap().is_file());
}

#[test]
fn divergent_run_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = case0_config(100);
    cfg["train"]["learning_rate"] = serde_json::json!(1e308);
    let config = write_config(tmp.path(), "div.json", &cfg);
    let out = run(
        &[
            "forward",
            "--config",
            config.to_str().unwrap(),
            "--out",
            tmp.path().join("out").to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("diverged"));
    // Divergence aborts before any output file is created.
    assert!(!tmp.path().join("out/run").exists());
}

fn synth_config() -> serde_json::Value {
    serde_json::json!({
        "run_name": "synth",
        "case": {"label": "case0", "u_dc": 1.0, "branches": [{"r": 1.0, "c": 1.0}]},
        "train": {"n_collocation": 35, "formulation": "raw", "seed": 0, "t_end": 10.0},
        "synth": {"n_points": 35, "noise_sigma": 0.0, "seed": 7, "output": "data.csv"}
    })
}

#[test]
fn synth_rows_match_oracle_and_rerun_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "synth.json", &synth_config());
    let out_a = tmp.path().join("a");
    let out_b = tmp.path().join("b");
    for out_dir in [&out_a, &out_b] {
        let out = run(
            &[
                "synth",
                "--config",
                config.to_str().unwrap(),
                "--out",
                out_dir.to_str().unwrap(),
            ],
            &[],
        );
        assert!(out.status.success());
    }
    let a = std::fs::read(out_a.join("synth/data.csv")).unwrap();
    let b = std::fs::read(out_b.join("synth/data.csv")).unwrap();
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 35);
    // Noiseless rows equal the analytical solution.
    let case = pinn_rc_core::circuits::CircuitCase::fixture(0);
    for row in rows {
        let mut cols = row.split(',');
        let t: f64 = cols.next().unwrap().parse().unwrap();
        let i: f64 = cols.next().unwrap().parse().unwrap();
        let oracle = pinn_rc_core::circuits::analytical_current(&case, t).unwrap();
        assert_eq!(i.to_bits(), oracle.to_bits());
    }
}

#[test]
fn synth_noise_stays_in_sigma_band() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = synth_config();
    cfg["synth"]["noise_sigma"] = serde_json::json!(0.01);
    let config = write_config(tmp.path(), "synth.json", &cfg);
    let out = run(
        &[
            "synth",
            "--config",
            config.to_str().unwrap(),
            "--out",
            tmp.path().join("out").to_str().unwrap(),
        ],
        &[],
    );
    assert!(out.status.success());
    let text = std::fs::read_to_string(tmp.path().join("out/synth/data.csv")).unwrap();
    let case = pinn_rc_core::circuits::CircuitCase::fixture(0);
    for row in text.lines().skip(1) {
        let mut cols = row.split(',');
        let t: f64 = cols.next().unwrap().parse().unwrap();
        let i: f64 = cols.next().unwrap().parse().unwrap();
        let oracle = pinn_rc_core::circuits::analytical_current(&case, t).unwrap();
        let dev = (i - oracle).abs() / oracle;
        assert!(dev < 5.0 * 0.01, "t {t}: relative deviation {dev}");
    }
}

#[test]
fn inverse_missing_dataset_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = case0_config(100);
    cfg["inverse"] = serde_json::json!({"dataset": "does-not-exist.csv"});
    let config = write_config(tmp.path(), "inv.json", &cfg);
    let out = run(&["inverse", "--config", config.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn inverse_nonpositive_current_exits_2_naming_row() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("bad.csv"), "t,i\n0,1.0\n1,-0.5\n2,0.3\n").unwrap();
    let mut cfg = case0_config(100);
    cfg["inverse"] = serde_json::json!({"dataset": "bad.csv"});
    let config = write_config(tmp.path(), "inv.json", &cfg);
    let out = run(&["inverse", "--config", config.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("row 3"), "{stderr}");
}

#[test]
fn inverse_synthetic_reports_recovered_params() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = case0_config(400);
    cfg["inverse"] = serde_json::json!({
        "synthetic": {"n_points": 12, "noise_sigma": 0.0, "seed": 5},
        "init_params": {"branches": [{"r": 0.5, "c": 0.5}]}
    });
    let config = write_config(tmp.path(), "inv.json", &cfg);
    let out = run(
        &[
            "inverse",
            "--config",
            config.to_str().unwrap(),
            "--out",
            tmp.path().join("out").to_str().unwrap(),
        ],
        &[],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("out/run/summary.json")).unwrap())
            .unwrap();
    let r = &summary["recovered"]["branches"][0]["r"];
    assert!(r["estimate"].as_f64().unwrap() > 0.0);
    assert!(summary["recovered"]["branches"][0]["c"]["trained"].as_bool().unwrap());
    assert!(tmp.path().join("out/run/dataset.csv").exists());
}

#[test]
fn gradcheck_repeated_output_is_identical() {
    let a = run(&["gradcheck"], &[]);
    let b = run(&["gradcheck"], &[]);
    assert!(a.status.success());
    let strip = |o: &Output| -> String {
        String::from_utf8_lossy(&o.stdout)
            .lines()
            .filter(|l| !l.contains("comparisons in"))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(strip(&a), strip(&b));
}

#[test]
fn gradcheck_fault_hook_fails() {
    let out = run(&["gradcheck"], &[("PINN_RC_GRADCHECK_FAULT", "0.01")]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL"));
}

#[test]
fn compare_writes_arm_directories_and_verdict() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = case0_config(150);
    cfg["run_name"] = serde_json::json!("cmp");
    let config = write_config(tmp.path(), "cmp.json", &cfg);
    let out = run(
        &[
            "compare",
            "--config",
            config.to_str().unwrap(),
            "--out",
            tmp.path().join("out").to_str().unwrap(),
        ],
        &[],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = tmp.path().join("out/cmp");
    for arm in ["raw", "log"] {
        for file in ["history.csv", "prediction.csv", "summary.json"] {
            assert!(dir.join(arm).join(file).exists(), "missing {arm}/{file}");
        }
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    assert!(matches!(summary["verdict"].as_str(), Some("log") | Some("raw") | Some("tie")));
}

#[test]
fn sweep_produces_arm_directories() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = case0_config(120);
    cfg["run_name"] = serde_json::json!("swp");
    cfg["sweep"] = serde_json::json!({"t_ends": [5.0, 10.0], "scale_points": true});
    let config = write_config(tmp.path(), "swp.json", &cfg);
    let out = run(
        &[
            "sweep",
            "--config",
            config.to_str().unwrap(),
            "--out",
            tmp.path().join("out").to_str().unwrap(),
        ],
        &[],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = tmp.path().join("out/swp");
    assert!(dir.join("t5/history.csv").exists());
    assert!(dir.join("t10/history.csv").exists());
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["arms"].as_array().unwrap().len(), 2);
}

#[test]
fn sweep_empty_t_ends_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = case0_config(100);
    cfg["sweep"] = serde_json::json!({"t_ends": [], "scale_points": true});
    let config = write_config(tmp.path(), "swp.json", &cfg);
    let out = run(&["sweep", "--config", config.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn env_var_out_root_is_honored() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "fwd.json", &case0_config(60));
    let out = run(
        &["forward", "--config", config.to_str().unwrap()],
        &[("PINN_RC_OUT", tmp.path().join("envout").to_str().unwrap())],
    );
    assert!(out.status.success());
    assert!(tmp.path().join("envout/run/summary.json").exists());
}
