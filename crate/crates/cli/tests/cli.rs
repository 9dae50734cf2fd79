use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

use qlsync_cli::Manifest;
use qlsync_core::io::{fmt_f64, read_numeric_csv};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn qlsync(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qlsync"))
        .args(args)
        .env("QLSYNC_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, v: &Value) -> String {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p.to_str().unwrap().to_string()
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}): {}\nstderr: {}",
            String::from_utf8_lossy(&o.stdout),
            String::from_utf8_lossy(&o.stderr)
        )
    })
}

fn stderr_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stderr).expect("stderr carries an error record")
}

#[test]
fn oracle_check_passes_and_coarse_step_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("oracle_check.json");
    let cfg = cfg.to_str().unwrap();
    let out_dir = dir.path().join("fine");

    let o = qlsync(&["oracle-check", cfg, "--output-dir", out_dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let v = stdout_json(&o);
    assert_eq!(v["passed"], true);
    assert!(v["metrics"]["max_deviation"].as_f64().unwrap() <= 1e-6);
    assert!(out_dir.join("oracle.csv").exists());

    let coarse = dir.path().join("coarse");
    let o = qlsync(&["oracle-check", cfg, "--oracle.dt", "0.1", "--output-dir", coarse.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let v = stdout_json(&o);
    assert_eq!(v["passed"], false);
    assert!(v["metrics"]["max_deviation"].as_f64().unwrap() > 1e-6);
    assert!(v["metrics"]["worst_time"].is_number());

    let zero = dir.path().join("zero");
    let o = qlsync(&["oracle-check", cfg, "--oracle.zero-resource", "true", "--output-dir", zero.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout_json(&o)["metrics"]["max_deviation"].as_f64().unwrap() <= 1e-10);
}

#[test]
fn validate_reports_gap_and_flags() {
    let cfg = configs().join("ground_fig3.json");
    let cfg = cfg.to_str().unwrap();
    let o = qlsync(&["validate", cfg]);
    assert_eq!(o.status.code(), Some(0));
    let v = stdout_json(&o);
    assert!((v["lambda1"].as_f64().unwrap() - 24.0).abs() < 1e-9);
    assert!(v["gap"].as_f64().unwrap() > 0.0);
    assert_eq!(v["isolated"], true);
    assert_eq!(v["emergent_found"], true);

    let v = stdout_json(&qlsync(&["validate", cfg, "--resource.l", "0"]));
    assert_eq!(v["degenerate_bits"], json!([1, 2]));
    assert_eq!(v["isolated"], false);
    assert!(!v["flags"].as_array().unwrap().is_empty());

    let gap = |l: &str| {
        stdout_json(&qlsync(&["validate", cfg, "--resource.k", "4", "--resource.l", l]))["gap"]
            .as_f64()
            .unwrap()
    };
    assert!(gap("12") > gap("2"));
}

#[test]
fn spectra_run_is_deterministic_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("fig2");
    let cfg = json!({
        "experiment": "spectra_fig2",
        "resource": {"n_g": 8, "n_ql": 2, "k": 5, "l": 1, "seed": 3},
        "n_samp": 6,
        "seed": 1,
        "output_dir": out_dir,
    });
    let path = write_config(dir.path(), "fig2.json", &cfg);
    let run = || {
        let o = qlsync(&["run", &path]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        let m: Manifest =
            serde_json::from_str(&fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
        m
    };
    let a = run();
    let b = run();
    assert_eq!(a.without_timestamps(), b.without_timestamps());
    assert_eq!(a.input_hash.len(), 40);
    let names: Vec<&str> = a.files.iter().map(|f| f.path.as_str()).collect();
    for f in ["density_direct.csv", "density_convolved.csv", "density_bit1.csv", "density_bit2.csv"] {
        assert!(names.contains(&f), "{f} missing from {names:?}");
    }
    assert_eq!(a.metrics["emergent_peaks"].as_array().unwrap().len(), 3);
    assert!(a.metrics["l1_distance"].as_f64().unwrap() < 0.5);

    let text = fs::read_to_string(out_dir.join("density_direct.csv")).unwrap();
    let (header, rows) = read_numeric_csv(text.as_bytes()).unwrap();
    assert_eq!(header, ["bin_center", "mass"]);
    assert_eq!(rows.len(), 60);
    let mass: f64 = rows.iter().map(|r| r[1]).sum();
    assert!((mass - 1.0).abs() < 1e-12);
    let rewritten: Vec<String> = rows
        .iter()
        .map(|r| format!("{},{}", fmt_f64(r[0]), fmt_f64(r[1])))
        .collect();
    assert_eq!(text.lines().skip(1).collect::<Vec<_>>(), rewritten);
}

#[test]
fn protocol_run_reads_out_bell_correlations() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("bell");
    let cfg = json!({
        "experiment": "protocol_run",
        "resource": {"n_g": 8, "n_ql": 2, "k": 4, "l": 2, "seed": 2},
        "circuit": "bell",
        "time": {"t_end": 300.0, "n_points": 31},
        "seed": 3,
        "output_dir": out_dir,
    });
    let o = qlsync(&["run", &write_config(dir.path(), "bell.json", &cfg)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = &stdout_json(&o)["metrics"]["readout"];
    let w = |s: &str| r[s].as_f64().unwrap();
    assert!((w("dd") - 0.5).abs() < 1e-3 && (w("uu") - 0.5).abs() < 1e-3);
    assert!(w("du") < 1e-6 && w("ud") < 1e-6 && w("bulk") < 1e-6);
    for f in ["trajectory_full.csv", "trajectory_emergent.csv", "observables.csv", "readout.csv", "spectrum.csv"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
}

#[test]
fn error_sweep_and_trajectory_runs_emit_tables() {
    let dir = tempfile::tempdir().unwrap();
    let sweep_dir = dir.path().join("fig4");
    let cfg = json!({
        "experiment": "error_fig4",
        "resource": {"n_g": 8, "n_ql": 2, "k": 3, "l": 1, "seed": 7},
        "sweep": {"l_values": [1, 2, 4], "t_values": [1, 2, 3, 4, 5], "n_samp": 3},
        "seed": 7,
        "output_dir": sweep_dir,
    });
    let o = qlsync(&["run", &write_config(dir.path(), "fig4.json", &cfg)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(sweep_dir.join("errors.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "circuit,l,t,mean_delta,std_delta,n_samp,seed");
    assert_eq!(text.lines().count(), 1 + 2 * 3 * 5);
    let slopes = fs::read_to_string(sweep_dir.join("slopes.csv")).unwrap();
    assert_eq!(slopes.lines().count(), 1 + 2 * 3 * 3);

    let fig3_dir = dir.path().join("fig3");
    let cfg = configs().join("bell_fig3.json");
    let o = qlsync(&[
        "run",
        cfg.to_str().unwrap(),
        "--resource.n-g", "6",
        "--resource.k", "3",
        "--resource.l", "2",
        "--n-samp", "3",
        "--time.n-points", "11",
        "--output-dir", fig3_dir.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    assert_eq!(v["metrics"]["final_alignment"]["values"].as_array().unwrap().len(), 3);
    let (header, rows) =
        read_numeric_csv(fs::File::open(fig3_dir.join("trajectory_full.csv")).unwrap()).unwrap();
    assert_eq!(header, ["time", "oscillator_index", "angle", "phase", "log_norm"]);
    assert_eq!(rows.len(), 11 * 144);
}

#[test]
fn partial_eigs_subcommand_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("partial_eigs_check.json");
    let o = qlsync(&[
        "partial-eigs-check",
        cfg.to_str().unwrap(),
        "--resource.n-g", "64",
        "--output-dir", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    assert_eq!(v["experiment"], "partial_eigs_check");
    assert!(v["metrics"]["largest_principal_angle"].as_f64().unwrap() <= 1e-6);
}

#[test]
fn errors_produce_records_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("spectra_fig2.json");
    let cfg = cfg.to_str().unwrap();
    let out = dir.path().to_str().unwrap();

    let o = qlsync(&["run", cfg, "--resource.k", "3", "--resource.n-g", "7", "--output-dir", out]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["error"]["kind"], "parameter");

    let o = qlsync(&["run", cfg, "--memory-cap", "1000", "--n-samp", "1", "--output-dir", out]);
    assert_eq!(o.status.code(), Some(3));
    let rec = stderr_json(&o);
    assert_eq!(rec["error"]["kind"], "capacity");
    assert!(rec["error"]["advice"].is_string());

    let o = qlsync(&[
        "run", cfg, "--resource.n-ql", "4", "--resource.n-g", "4", "--resource.k", "2",
        "--resource.l", "1", "--output-dir", out,
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr_json(&o)["error"]["message"].as_str().unwrap().contains("N_QL = 4"));

    let o = qlsync(&["run", "/nonexistent/config.json"]);
    assert_eq!(o.status.code(), Some(2));

    let o = qlsync(&["oracle-check", cfg, "--output-dir", out]);
    assert_eq!(o.status.code(), Some(2), "n_g = 12 exceeds the oracle limit");
}
