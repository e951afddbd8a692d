use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn qst(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qst"))
        .args(args)
        .current_dir(dir)
        .env("QST_OUTPUT_DIR", dir)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Data rows of a CSV written by the tool, comment lines dropped.
fn rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn column(table: &[Vec<String>], name: &str) -> Vec<f64> {
    let i = table[0].iter().position(|h| h == name).unwrap();
    table[1..].iter().map(|r| r[i].parse().unwrap()).collect()
}

#[test]
fn help_and_version_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&qst(dir.path(), &["--version"])), 0);
    assert_eq!(code(&qst(dir.path(), &["--help"])), 0);
    assert_eq!(code(&qst(dir.path(), &["scan", "--help"])), 0);
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&qst(dir.path(), &["bogus"])), 1);
    assert_eq!(
        code(&qst(
            dir.path(),
            &["spectrum", "--N", "10", "--h", "1", "--nope"]
        )),
        1
    );
    let o = qst(dir.path(), &["spectrum", "--N", "4", "--h", "1"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("N"), "{}", stderr(&o));
    let o = qst(dir.path(), &["spectrum", "--h", "1"]);
    assert_eq!(code(&o), 1);
    let o = qst(
        dir.path(),
        &["spectrum", "--N", "8", "--h", "1", "--couplings", "1,1"],
    );
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("couplings"), "{}", stderr(&o));
}

#[test]
fn seed_required_for_random_paths() {
    let dir = tempfile::tempdir().unwrap();
    let o = qst(
        dir.path(),
        &[
            "fidelity",
            "--N",
            "8",
            "--h",
            "5",
            "--t",
            "1",
            "--mc-samples",
            "1000",
        ],
    );
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("seed"));
    let o = qst(
        dir.path(),
        &[
            "fidelity",
            "--N",
            "8",
            "--h",
            "5",
            "--t",
            "1",
            "--worst-case",
        ],
    );
    assert_eq!(code(&o), 1);
}

#[test]
fn spectrum_writes_header_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = qst(dir.path(), &["spectrum", "--N", "46", "--h", "100"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("spectrum.csv")).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# qst "));
    assert!(lines.next().unwrap().contains("N=46 h=100"));
    let table = rows(&dir.path().join("spectrum.csv"));
    let weight = column(&table, "weight");
    for k in [14, 15, 30, 31] {
        assert!(weight[k - 1] > 0.99);
    }
    let manifest: Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("spectrum.manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(manifest["subcommand"], "spectrum");
    assert_eq!(manifest["exit_code"], 0);
    assert!(manifest["version"].is_string());
    assert!(manifest["wall_time_seconds"].is_number());
    assert_eq!(manifest["config"]["spec"]["n"], 46);
}

#[test]
fn transfer_time_follows_quadratic_law() {
    let dir = tempfile::tempdir().unwrap();
    let o = qst(dir.path(), &["transfer-time", "--N", "30", "--h", "60"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let table = rows(&dir.path().join("transfer_time.csv"));
    let t = column(&table, "t_star")[0];
    let law = std::f64::consts::FRAC_PI_2 * 3600.0;
    assert!((t / law - 1.0).abs() < 0.02, "{t}");
    assert!(column(&table, "F_exact")[0] >= 0.99);
}

#[test]
fn verify_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = qst(dir.path(), &["verify", "--N", "8", "--h", "20"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let table = rows(&dir.path().join("verify.csv"));
    assert!(table[1..].iter().all(|r| r[3] == "true"));
}

#[test]
fn fidelity_grid_and_monte_carlo() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "fidelity",
        "--N",
        "10",
        "--h",
        "5",
        "--t0",
        "0",
        "--t1",
        "6",
        "--steps",
        "4",
        "--mc-samples",
        "20000",
        "--seed",
        "3",
    ];
    let o = qst(dir.path(), &args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let path = dir.path().join("fidelity.csv");
    let first = fs::read(&path).unwrap();
    let table = rows(&path);
    assert_eq!(
        table[0],
        [
            "t",
            "F_exact",
            "F_approx",
            "F_mc_mean",
            "F_mc_stderr",
            "F_min"
        ]
        .map(String::from)
    );
    assert_eq!(table.len(), 5);
    let exact = column(&table, "F_exact");
    let mean = column(&table, "F_mc_mean");
    let err = column(&table, "F_mc_stderr");
    assert!((exact[0] - 0.25).abs() < 1e-12);
    for i in 0..4 {
        assert!((exact[i] - mean[i]).abs() < 4.0 * err[i] + 1e-12);
    }
    // same config, same bytes
    assert_eq!(code(&qst(dir.path(), &args)), 0);
    assert_eq!(fs::read(&path).unwrap(), first);
}

#[test]
fn worst_case_column() {
    let dir = tempfile::tempdir().unwrap();
    let o = qst(
        dir.path(),
        &[
            "fidelity",
            "--N",
            "8",
            "--h",
            "10",
            "--t",
            "7",
            "--worst-case",
            "--seed",
            "1",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let table = rows(&dir.path().join("fidelity.csv"));
    let f = column(&table, "F_exact")[0];
    let fmin = column(&table, "F_min")[0];
    assert!(fmin <= f);
}

#[test]
fn scan_is_deterministic_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "scan",
        "--N",
        "30",
        "--h",
        "40",
        "--axis",
        "h",
        "--values",
        "40,50,60,-5",
    ];
    let run = |threads: &str, out: &str| {
        let o = Command::new(env!("CARGO_BIN_EXE_qst"))
            .args(args)
            .args(["--out", out])
            .current_dir(dir.path())
            .env("RAYON_NUM_THREADS", threads)
            .output()
            .unwrap();
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        fs::read(dir.path().join(out)).unwrap()
    };
    let a = run("1", "a.csv");
    let b = run("3", "b.csv");
    assert_eq!(a, b);
    let table = rows(&dir.path().join("a.csv"));
    assert_eq!(table.len(), 5);
    assert!(
        !table[4].last().unwrap().is_empty(),
        "bad point keeps its error"
    );
    let t = column(&table[..4], "t_star");
    assert!(t[0] < t[1] && t[1] < t[2]);
}

#[test]
fn scan_over_length_with_range() {
    let dir = tempfile::tempdir().unwrap();
    let o = qst(
        dir.path(),
        &[
            "scan", "--N", "30", "--h", "100", "--axis", "N", "--range", "30:32:1",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let table = rows(&dir.path().join("scan.csv"));
    let regimes: Vec<&str> = table[1..].iter().map(|r| r[2].as_str()).collect();
    assert_eq!(regimes, ["rabi", "rabi", "quasi-rabi"]);
}

#[test]
fn config_file_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("chain.toml");
    fs::write(&cfg, "N = 12\nh = 30\nunits = \"fermion\"\n").unwrap();
    let cfg = cfg.to_str().unwrap();
    let o = qst(
        dir.path(),
        &["spectrum", "--config", cfg, "--h", "40", "--format", "json"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("spectrum.json")).unwrap())
            .unwrap();
    assert_eq!(v["spec"]["n"], 12);
    assert_eq!(v["spec"]["barrier_field"], 40.0);
    assert_eq!(v["spec"]["units"], "fermion");
    assert!(v["header"][0].as_str().unwrap().starts_with("qst "));
    assert_eq!(v["rows"].as_array().unwrap().len(), 12);

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "N = 12\nhh = 3\n").unwrap();
    let o = qst(dir.path(), &["spectrum", "--config", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("hh"), "{}", stderr(&o));
}

#[test]
fn amplitudes_series() {
    let dir = tempfile::tempdir().unwrap();
    let o = qst(
        dir.path(),
        &[
            "amplitudes",
            "--N",
            "8",
            "--h",
            "0",
            "--t0",
            "0",
            "--t1",
            "2",
            "--steps",
            "3",
            "--f",
            "1:7,2:8",
            "--g",
            "1-2:7-8",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let table = rows(&dir.path().join("amplitudes.csv"));
    assert!(table[0].contains(&"abs_f_1_7".to_string()));
    assert!(table[0].contains(&"abs_g_12_78".to_string()));
    let occ = column(&table, "channel_occupation");
    assert!(occ[0] < 1e-20);
    let o = qst(
        dir.path(),
        &[
            "amplitudes",
            "--N",
            "8",
            "--h",
            "0",
            "--t",
            "1",
            "--g",
            "2-1:7-8",
        ],
    );
    assert_eq!(code(&o), 1);
}

#[test]
fn perturb_reports_quartet() {
    let dir = tempfile::tempdir().unwrap();
    let o = qst(dir.path(), &["perturb", "--N", "30", "--h", "100"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("perturb.csv")).unwrap();
    let value = |key: &str| -> f64 {
        let line = text.lines().find(|l| l.starts_with(key)).unwrap();
        line.split(',').nth(1).unwrap().parse().unwrap()
    };
    assert!((value("t1,") / value("t1_closed_form,") - 1.0).abs() < 1e-2);
    assert!((value("eps_9,") / -2.01 - 1.0).abs() < 1e-2);
    let o = qst(dir.path(), &["perturb", "--N", "29", "--h", "100"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn explicit_output_path_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("nested/run.json");
    let o = qst(
        dir.path(),
        &[
            "transfer-time",
            "--N",
            "29",
            "--h",
            "100",
            "--format",
            "json",
            "--out",
            out.to_str().unwrap(),
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["record"]["regime"], "quasi-rabi");
    assert!(dir.path().join("nested/run.manifest.json").exists());
}
