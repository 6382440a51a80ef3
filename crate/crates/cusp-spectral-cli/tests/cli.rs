use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cusp-spectral"))
}

fn run(args: &[&str], out: &Path) -> Output {
    bin().args(args).arg("--out").arg(out).env_remove("CUSP_WORKERS").output().unwrap()
}

fn written(o: &Output) -> Vec<PathBuf> {
    String::from_utf8(o.stdout.clone()).unwrap().lines().map(PathBuf::from).collect()
}

fn csv_rows(p: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(p)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

fn with_suffix(paths: &[PathBuf], suffix: &str) -> PathBuf {
    paths.iter().find(|p| p.to_string_lossy().ends_with(suffix)).unwrap().clone()
}

#[test]
fn roots_table_for_d1() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["roots", "--d", "1", "--s", "0", "--n-max", "3"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&with_suffix(&written(&o), "roots.csv"));
    assert_eq!(rows.len(), 8);
    let mut lams: Vec<f64> = rows.iter().map(|r| r[2].parse().unwrap()).collect();
    lams.sort_by(f64::total_cmp);
    let mut want: Vec<f64> = (0..4).flat_map(|n| [0.5 + n as f64, -(0.5 + n as f64)]).collect();
    want.sort_by(f64::total_cmp);
    assert_eq!(lams, want);
    assert!(rows.iter().all(|r| r[3] == "0"));
}

#[test]
fn constant_observables_give_a_constant_column() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(
        &cfg,
        "command = \"correlate\"\nseed = 3\n[correlate]\nsamples = 500\nt_max = 1.0\ndt = 0.25\n\
         [correlate.a]\ncenter = [0.0, 2.0]\nradius = 0.1\norder = 2\namplitude = 0.0\noffset = 1.0\n\
         [correlate.b]\ncenter = [0.0, 2.0]\nradius = 0.1\norder = 2\namplitude = 0.0\noffset = 1.0\n",
    )
    .unwrap();
    let o = run(&["run", "--config", cfg.to_str().unwrap()], &dir.path().join("out"));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&with_suffix(&written(&o), "correlation.csv"));
    assert_eq!(rows.len(), 5);
    assert!(rows.iter().all(|r| r[1] == rows[0][1] && r[2] == "0"));
}

#[test]
fn reruns_are_byte_identical_and_manifests_reproduce() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["flow", "--points", "3", "--t-max", "2", "--seed", "9"];
    let a = run(&args, &dir.path().join("a"));
    let b = run(&args, &dir.path().join("b"));
    assert!(a.status.success() && b.status.success());
    let (wa, wb) = (written(&a), written(&b));
    assert_eq!(wa.len(), wb.len());
    for (x, y) in wa.iter().zip(&wb) {
        assert_eq!(x.file_name(), y.file_name());
        if !x.to_string_lossy().ends_with("manifest.toml") {
            assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap());
        }
    }
    // The manifest is a config for the same run.
    let manifest = wa.last().unwrap();
    let c = run(&["run", "--config", manifest.to_str().unwrap()], &dir.path().join("c"));
    assert!(c.status.success(), "{}", String::from_utf8_lossy(&c.stderr));
    let wc = written(&c);
    for (x, y) in wa.iter().zip(&wc) {
        assert_eq!(x.file_name(), y.file_name());
    }
    assert_eq!(fs::read(&wa[0]).unwrap(), fs::read(&wc[0]).unwrap());
    // Same output directory: every file, manifest included, is identical.
    let before: Vec<Vec<u8>> = wa.iter().map(|x| fs::read(x).unwrap()).collect();
    let again = run(&["run", "--config", manifest.to_str().unwrap()], &dir.path().join("a"));
    assert!(again.status.success());
    assert_eq!(written(&again), wa);
    for (x, b) in wa.iter().zip(&before) {
        assert_eq!(&fs::read(x).unwrap(), b);
    }
    let m = fs::read_to_string(manifest).unwrap();
    assert!(m.contains("config_hash") && m.contains("[manifest.tolerances.numeric_vs_exact]"));
}

#[test]
fn worker_count_does_not_change_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let one = bin().args(["residue", "--out"]).arg(dir.path().join("1")).env("CUSP_WORKERS", "1").output().unwrap();
    let two = bin().args(["residue", "--out"]).arg(dir.path().join("2")).env("CUSP_WORKERS", "2").output().unwrap();
    assert!(one.status.success() && two.status.success());
    let (a, b) = (written(&one), written(&two));
    assert_eq!(fs::read(&a[0]).unwrap(), fs::read(&b[0]).unwrap());
    let bad = bin().args(["roots", "--out"]).arg(dir.path()).env("CUSP_WORKERS", "zero").output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["roots", "--d", "0"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let diag: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(diag["error"], "validation");
    assert_eq!(run(&["escape", "--epsilon", "0.5"], dir.path()).status.code(), Some(2));
    assert_eq!(run(&["roots", "--no-such-flag"], dir.path()).status.code(), Some(2));

    // Tolerance failure: artifacts and manifest are still written.
    let cfg = dir.path().join("t.toml");
    fs::write(&cfg, "command = \"flow\"\n[flow]\npoints = 2\nt_max = 1.0\ntolerance = 1e-300\n").unwrap();
    let o = run(&["run", "--config", cfg.to_str().unwrap()], &dir.path().join("t"));
    assert_eq!(o.status.code(), Some(3));
    let manifest = fs::read_to_string(written(&o).last().unwrap()).unwrap();
    assert!(manifest.contains("status = \"tolerance_failure\""));

    // Mismatched subcommand and config.
    assert_eq!(run(&["roots", "--config", cfg.to_str().unwrap()], dir.path()).status.code(), Some(2));

    // An output path that is a regular file.
    let file = dir.path().join("plain");
    fs::write(&file, "x").unwrap();
    let o = run(&["roots"], &file);
    assert_eq!(o.status.code(), Some(4));
}
