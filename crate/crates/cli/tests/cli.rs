use std::path::Path;
use std::process::Command;

use vpfp_cli::{cli_main_with, EXIT_FAIL, EXIT_PASS, EXIT_USAGE};

fn call(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("vpfp").chain(args.iter().copied());
    let code = cli_main_with(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("sim.cfg");
    std::fs::write(&path, body).unwrap();
    path.display().to_string()
}

fn value(text: &str, key: &str) -> f64 {
    let start = text.find(key).unwrap() + key.len();
    text[start..].split_whitespace().next().unwrap().parse().unwrap()
}

#[test]
fn lambda0_default() {
    let (code, out, _) = call(&["lambda0", "--config", "default"]);
    assert_eq!(code, EXIT_PASS);
    let used = &out[out.find("used:").unwrap()..];
    let l0 = value(used, "lambda0 = ");
    let k = value(used, "kappa = ");
    let e = value(used, "eta = ");
    assert!(l0 > 0.0 && l0 <= 1.0);
    assert_eq!(k, (l0 / 2.0).min(0.125));
    assert_eq!(e, 0.4 * k);
    assert!(out.contains("complement_P0") && out.contains("complement_P "));
}

#[test]
fn run_zero_ic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "fourier_cutoff = 2\nhermite_cutoff = 3\ndt = 0.01\nt_end = 0.1\nreport_interval = 0.01\nic = zero\n",
    );
    let out_dir = dir.path().join("out");
    let (code, out, err) = call(&["run", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code, EXIT_PASS, "{out}{err}");
    let csv = std::fs::read_to_string(out_dir.join("metrics.csv")).unwrap();
    let mut rdr = csv.lines();
    let header: Vec<&str> = rdr.next().unwrap().split(',').collect();
    let e_col = header.iter().position(|h| *h == "E_N").unwrap();
    let rows: Vec<&str> = rdr.collect();
    assert_eq!(rows.len(), 11);
    for r in rows {
        assert_eq!(r.split(',').nth(e_col).unwrap().parse::<f64>().unwrap(), 0.0);
    }
    assert!(out_dir.join("manifest.json").exists());
}

#[test]
fn run_then_validate_and_resume() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let body = format!(
        "fourier_cutoff = 2\nhermite_cutoff = 4\ndt = 0.01\nt_end = 0.2\nreport_interval = 0.05\ncheckpoint_every = 2\nic_energy = 1e-6\nout_dir = {}\n",
        out_dir.display()
    );
    let cfg = write_config(dir.path(), &body);
    assert_eq!(call(&["run", "--config", &cfg]).0, EXIT_PASS);
    let ck = out_dir.join("checkpoints/step_0000000010.vpfp");
    let (code, out, _) = call(&["validate", ck.to_str().unwrap(), "--config", &cfg]);
    assert_eq!(code, EXIT_PASS, "{out}");
    let before = std::fs::read(out_dir.join("metrics.csv")).unwrap();
    let (code, _, err) = call(&["run", "--config", &cfg, "--resume", ck.to_str().unwrap()]);
    assert_eq!(code, EXIT_PASS, "{err}");
    assert_eq!(std::fs::read(out_dir.join("metrics.csv")).unwrap(), before);

    let bad = dir.path().join("bad.vpfp");
    let bytes = std::fs::read(&ck).unwrap();
    std::fs::write(&bad, &bytes[..bytes.len() - 3]).unwrap();
    let (code, out, _) = call(&["validate", bad.to_str().unwrap()]);
    assert_eq!(code, EXIT_FAIL);
    assert!(out.contains("size mismatch"), "{out}");
}

#[test]
fn fit_decay_synthetic() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("decay.csv");
    let mut text = String::from("t,E_N\n");
    for i in 0..=100 {
        let t = 0.1 * i as f64;
        text.push_str(&format!("{t},{:e}\n", (-0.5 * t).exp()));
    }
    std::fs::write(&path, text).unwrap();
    let (code, out, _) = call(&["fit-decay", path.to_str().unwrap()]);
    assert_eq!(code, EXIT_PASS, "{out}");
    assert!(out.contains("eta_fit = 0.500000"), "{out}");
    let (code, _, _) = call(&["fit-decay", path.to_str().unwrap(), "--eta", "0.6"]);
    assert_eq!(code, EXIT_FAIL);
}

#[test]
fn usage_errors() {
    assert_eq!(call(&[]).0, EXIT_USAGE);
    assert_eq!(call(&["frobnicate"]).0, EXIT_USAGE);
    assert_eq!(call(&["lambda0", "--config", "/nonexistent/file.cfg"]).0, EXIT_USAGE);
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "dt = -1\n");
    let (code, _, err) = call(&["run", "--config", &cfg]);
    assert_eq!(code, EXIT_USAGE);
    assert!(err.contains("dt must be positive (line 1)"), "{err}");
    let cfg = write_config(dir.path(), "dt = 0.5\n");
    let (code, _, err) = call(&["run", "--config", &cfg]);
    assert_eq!(code, EXIT_USAGE, "{err}");
    assert!(err.contains("CFL") || err.contains("dt"), "{err}");
}

#[test]
fn spectrum_and_oracle_small() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "fourier_cutoff = 3\nhermite_cutoff = 4\nt_end = 0.5\nic_amplitude = 0.01\n");
    let (code, out, _) = call(&["spectrum", "--config", &cfg]);
    assert_eq!(code, EXIT_PASS);
    assert_eq!(out.lines().filter(|l| l.starts_with("k = ")).count(), 6);
    let (code, out, _) = call(&["oracle-compare", "--config", &cfg]);
    assert_eq!(code, EXIT_PASS, "{out}");
    assert!(out.starts_with("PASS"));
}

#[test]
fn binary_exit_codes() {
    let exe = env!("CARGO_BIN_EXE_vpfp");
    let status = Command::new(exe).args(["lambda0", "--config", "default"]).output().unwrap().status;
    assert_eq!(status.code(), Some(EXIT_PASS));
    let status = Command::new(exe)
        .args(["lambda0"])
        .env("VPFP_THREADS", "two")
        .output()
        .unwrap()
        .status;
    assert_eq!(status.code(), Some(EXIT_USAGE));
    let status = Command::new(exe).arg("nonsense").output().unwrap().status;
    assert_eq!(status.code(), Some(EXIT_USAGE));
}
