//! End-to-end runs of the binary: exit-code contract, artifact layout, and
//! byte-for-byte reproducibility of data artifacts.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_latticewave"))
}

fn experiment_config() -> String {
    r#"{
        "model": {"name": "fhn", "rho": 0.01, "gamma": 5.0, "scale": 0.625},
        "kernel": {"name": "nearest-neighbor", "h": 0.625},
        "scheme": 1,
        "grid": {"p": 8, "q": 5, "l": 80.0, "dt": 2.0, "p0": 8,
                 "sweep": {"p_values": [8], "q_max_factor": 1, "r_values": [0.11]}},
        "run": {"r": 0.11}
    }"#
    .to_string()
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, text).unwrap();
    path
}

fn temp_dir(tag: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("latticewave-test-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn check_assumptions_reports_structural_conditions() {
    let dir = temp_dir("check");
    let config = write_config(&dir, &experiment_config());
    let out = dir.join("out");
    let status = bin()
        .args(["check-assumptions", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("assumptions.json")).unwrap())
            .unwrap();
    assert_eq!(report["kernel_conditions"]["pass"], true);
    assert_eq!(report["equilibria"]["pass"], true);
    assert_eq!(report["stability"]["branch"], "b");
    let gamma = report["stability"]["gamma"].as_f64().unwrap();
    assert!((gamma - 100.0).abs() < 1e-9);
    assert!(report["config_hash"].is_string());
    assert!(out.join("run_metadata.json").exists());
}

#[test]
fn solve_wave_rejects_subunit_coupling() {
    let dir = temp_dir("subunit");
    let config = experiment_config()
        .replace("\"p\": 8, \"q\": 5", "\"p\": 3, \"q\": 4");
    let config = write_config(&dir, &config);
    let output = bin()
        .args(["solve-wave", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(
        stderr.contains("admissible"),
        "stderr should cite the admissible set: {stderr}"
    );
}

#[test]
fn unknown_command_and_malformed_config_are_user_errors() {
    let dir = temp_dir("badcmd");
    let config = write_config(&dir, &experiment_config());
    let status = bin()
        .args(["frobnicate", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(dir.join("out"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));

    let broken = write_config(&dir, "{ not json");
    let status = bin()
        .args(["sweep", "--config"])
        .arg(&broken)
        .arg("--out")
        .arg(dir.join("out2"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn pipeline_semi_then_cell_then_sweep_is_reproducible() {
    let dir = temp_dir("pipeline");
    write_config(&dir, &experiment_config());

    // reference wave for seeding: solved on the unscaled system
    let semi_config = write_config(
        &dir.join({
            std::fs::create_dir_all(dir.join("semi-cfg")).unwrap();
            "semi-cfg"
        }),
        &experiment_config().replace("\"scale\": 0.625", "\"scale\": 1.0"),
    );
    let semi_out = dir.join("semi");
    let status = bin()
        .args(["solve-semi", "--config"])
        .arg(&semi_config)
        .arg("--out")
        .arg(&semi_out)
        .status()
        .unwrap();
    assert!(status.success(), "solve-semi failed");
    let bundle: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(semi_out.join("wave.json")).unwrap())
            .unwrap();
    let c0 = bundle["c0"].as_f64().unwrap();
    assert!(c0.abs() > 0.1, "wavespeed {c0}");
    assert!(bundle["residual"].as_f64().unwrap() < 1e-10);

    // single-cell solve at the experiment parameters, seeded by the
    // mirrored reference profile
    let seed_path = semi_out.join("profile.json").display().to_string();
    let cell_config_text = experiment_config().replace(
        "\"run\": {\"r\": 0.11}",
        &format!(
            "\"run\": {{\"r\": 0.11, \"seed_profile\": \"{seed_path}\", \"mirror_seed\": true}}"
        ),
    );
    let cell_config = write_config(
        &dir.join({
            std::fs::create_dir_all(dir.join("cell-cfg")).unwrap();
            "cell-cfg"
        }),
        &cell_config_text,
    );
    let cell_out = dir.join("cell");
    let status = bin()
        .args(["solve-wave", "--config"])
        .arg(&cell_config)
        .arg("--out")
        .arg(&cell_out)
        .status()
        .unwrap();
    assert!(status.success(), "solve-wave failed");
    let cell: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(cell_out.join("cell.json")).unwrap())
            .unwrap();
    assert_eq!(cell["c"].as_f64().unwrap(), 0.3125);
    assert!(cell["residual"].as_f64().unwrap() < 1e-10);
    assert!(cell["front_amplitude"].as_f64().unwrap() > 0.5);

    // identical sweep runs produce identical data artifacts
    let mut csvs = Vec::new();
    for tag in ["a", "b"] {
        let sweep_out = dir.join(format!("sweep-{tag}"));
        let status = bin()
            .args(["sweep", "--config"])
            .arg(&cell_config)
            .arg("--out")
            .arg(&sweep_out)
            .args(["--workers", "2", "--seed", "7"])
            .status()
            .unwrap();
        assert!(status.success(), "sweep failed");
        csvs.push(std::fs::read(sweep_out.join("sweep.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1], "sweep artifacts must be byte-identical");
    let text = String::from_utf8(csvs[0].clone()).unwrap();
    assert!(text.starts_with("# config_hash="));
    assert!(text.contains("p,q,c,r,converged,residual,front_amplitude,iters,seed"));
    assert!(text.contains("0.3125,0.11,true"), "target cell row: {text}");

    // spectrum scan driven by the bundle's wavespeed
    let scan_config_text = experiment_config().replace(
        "\"run\": {\"r\": 0.11}",
        &format!("\"run\": {{\"r\": 0.11, \"c0\": {c0}}}"),
    );
    let scan_config = write_config(
        &dir.join({
            std::fs::create_dir_all(dir.join("scan-cfg")).unwrap();
            "scan-cfg"
        }),
        &scan_config_text,
    );
    let scan_out = dir.join("scan");
    let status = bin()
        .args(["spectrum-scan", "--config"])
        .arg(&scan_config)
        .arg("--out")
        .arg(&scan_out)
        .status()
        .unwrap();
    assert!(status.success(), "spectrum-scan failed");
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(scan_out.join("scan_summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["plain"]["pass"], true);
    assert_eq!(summary["twisted"]["pass"], true);

    let _ = std::fs::remove_dir_all(&dir);
}
